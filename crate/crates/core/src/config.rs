//! Declarative scenario configuration: TOML document parsing with strict
//! unknown-key rejection, defaults equal to the shipped urban preset, and
//! physical validation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{KindParams, SolverOptions, WeightTable};
use crate::measurement::{CellularModel, UereProfile};
use crate::scenario::{
    build_cellular_layout, build_constellation, offset_anchor_ids, Anchor, AnchorKind, AnchorSet,
    LinkModel, RoadLayout, ScenarioError, Vec3,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, reason: reason.into() }
}

/// Full declarative description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub layout: LayoutSection,
    pub error_model: ErrorModelSection,
    pub estimator: EstimatorSection,
    pub policy: PolicySection,
    pub campaign: CampaignSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayoutSection {
    pub isd_m: f64,
    pub tiers: u32,
    pub constellation: ConstellationSection,
    pub road: RoadSection,
    pub tunnel: Option<TunnelSection>,
    /// RSU positions in world coordinates [x, y, z], meters.
    pub rsus: Vec<[f64; 3]>,
}

impl Default for LayoutSection {
    fn default() -> Self {
        Self {
            isd_m: 200.0,
            tiers: 2,
            constellation: ConstellationSection::default(),
            road: RoadSection::default(),
            tunnel: None,
            rsus: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstellationSection {
    pub count: u32,
    pub altitude_m: f64,
    pub min_elevation_deg: f64,
}

impl Default for ConstellationSection {
    fn default() -> Self {
        Self { count: 11, altitude_m: 1.5e6, min_elevation_deg: 15.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoadSection {
    pub lane_count: u32,
    pub lane_width_m: f64,
    pub length_m: f64,
    pub ue_height_m: f64,
}

impl Default for RoadSection {
    fn default() -> Self {
        Self { lane_count: 6, lane_width_m: 4.0, length_m: 1000.0, ue_height_m: 1.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TunnelSection {
    /// Closed interval along the road axis, meters from the road start.
    pub span_m: [f64; 2],
    pub penetration_db: f64,
}

impl Default for TunnelSection {
    fn default() -> Self {
        Self { span_m: [250.0, 750.0], penetration_db: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErrorModelSection {
    // Satellite range error budget, meters.
    pub sigma_clock_m: f64,
    pub sigma_iono_m: f64,
    pub sigma_tropo_m: f64,
    pub sigma_noise_m: f64,
    pub sigma_multipath_m: f64,
    /// LOS probability of a satellite link outside the tunnel.
    pub p_sat_los: f64,
    /// Per-satellite probability that an in-tunnel UE loses acquisition.
    pub p_tunnel_gnss_loss: f64,
    /// LOS probability of an RSU link to an in-tunnel UE.
    pub p_rsu_corridor_los: f64,
    /// RSUs radiate into the bore and skip the tunnel penetration loss.
    pub rsu_bypasses_penetration: bool,
    // Cellular link budget.
    pub tx_eirp_dbm: f64,
    pub noise_floor_dbm: f64,
    pub pl_ref_db: f64,
    pub pl_exp_los: f64,
    pub pl_exp_nlos: f64,
    pub shadow_sigma_db: f64,
    pub detection_threshold_db: f64,
    // Timing error model.
    pub bw_eff_hz: f64,
    pub k_timing: f64,
    pub sigma_toa_max_ns: f64,
    pub tau_nlos_ns: f64,
}

impl Default for ErrorModelSection {
    fn default() -> Self {
        Self {
            sigma_clock_m: 1.0,
            sigma_iono_m: 2.0,
            sigma_tropo_m: 0.5,
            sigma_noise_m: 1.0,
            sigma_multipath_m: 5.0,
            p_sat_los: 0.8,
            p_tunnel_gnss_loss: 0.9,
            p_rsu_corridor_los: 0.9,
            rsu_bypasses_penetration: true,
            tx_eirp_dbm: 33.0,
            noise_floor_dbm: -85.0,
            pl_ref_db: 44.5,
            pl_exp_los: 2.1,
            pl_exp_nlos: 3.2,
            shadow_sigma_db: 4.0,
            detection_threshold_db: -6.0,
            bw_eff_hz: 1.0e8,
            k_timing: 0.5513,
            sigma_toa_max_ns: 1000.0,
            tau_nlos_ns: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    pub w_gnss: f64,
    pub w_cell: f64,
    pub mu_gnss_ns: f64,
    pub mu_cell_ns: f64,
    pub sigma_gnss_ns: f64,
    pub sigma_cell_ns: f64,
    pub epsilon_stab_m: f64,
    pub grid_pitch_m: f64,
    pub refine_starts: usize,
    pub max_iterations: u32,
    pub tolerance_m: f64,
    pub estimate_z: bool,
    pub shared_clock: bool,
    pub seed_with_least_squares: bool,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            w_gnss: 3e-7,
            w_cell: 1e-3,
            mu_gnss_ns: 0.0,
            mu_cell_ns: 0.0,
            sigma_gnss_ns: 50.0,
            sigma_cell_ns: 50.0,
            epsilon_stab_m: 1.0,
            grid_pitch_m: 50.0,
            refine_starts: 4,
            max_iterations: 200,
            tolerance_m: 1e-3,
            estimate_z: false,
            shared_clock: true,
            seed_with_least_squares: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    pub eta_ns: f64,
    pub beta: usize,
    pub epsilon_acc_m: f64,
    /// Neighbor window may include the serving cell.
    pub include_serving_in_neighbors: bool,
    /// Drops per refinement window; 0 keeps the threshold static.
    pub eta_update_period_drops: u32,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self {
            eta_ns: 90.0,
            beta: 5,
            epsilon_acc_m: 10.0,
            include_serving_in_neighbors: false,
            eta_update_period_drops: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignSection {
    pub n_drops: u32,
    pub base_seed: u64,
    pub density_per_km: f64,
    pub availability_threshold_m: f64,
}

impl Default for CampaignSection {
    fn default() -> Self {
        Self { n_drops: 100, base_seed: 1, density_per_km: 600.0, availability_threshold_m: 3.0 }
    }
}

/// Parses and validates a configuration document. Unknown keys are rejected
/// so typos fail loudly; omitted keys take the urban-baseline defaults.
pub fn parse_config(document: &str) -> Result<ScenarioConfig, ConfigError> {
    let cfg: ScenarioConfig = toml::from_str(document)?;
    cfg.validate()?;
    Ok(cfg)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let l = &self.layout;
        if !(l.isd_m > 0.0) {
            return Err(invalid("layout.isd_m", format!("must be positive, got {}", l.isd_m)));
        }
        if l.tiers == 0 || l.tiers > 2 {
            return Err(invalid("layout.tiers", format!("must be 1 or 2, got {}", l.tiers)));
        }
        if l.constellation.count < 4 {
            return Err(invalid(
                "layout.constellation.count",
                format!("needs at least 4 satellites, got {}", l.constellation.count),
            ));
        }
        if !(l.constellation.altitude_m > 0.0) {
            return Err(invalid("layout.constellation.altitude_m", "must be positive"));
        }
        let el = l.constellation.min_elevation_deg;
        if !(el > 0.0 && el < 90.0) {
            return Err(invalid("layout.constellation.min_elevation_deg", "must lie in (0, 90)"));
        }
        if l.road.lane_count < 1 {
            return Err(invalid("layout.road.lane_count", "must be at least 1"));
        }
        if !(l.road.lane_width_m > 0.0) {
            return Err(invalid("layout.road.lane_width_m", "must be positive"));
        }
        if !(l.road.length_m > 0.0) {
            return Err(invalid("layout.road.length_m", "must be positive"));
        }
        if let Some(t) = &l.tunnel {
            if !(t.span_m[0] >= 0.0 && t.span_m[1] <= l.road.length_m && t.span_m[0] < t.span_m[1]) {
                return Err(invalid(
                    "layout.tunnel.span_m",
                    format!("must be an interval within [0, {}]", l.road.length_m),
                ));
            }
            if t.penetration_db < 0.0 {
                return Err(invalid("layout.tunnel.penetration_db", "must be non-negative"));
            }
        }

        let e = &self.error_model;
        for (field, v) in [
            ("error_model.sigma_clock_m", e.sigma_clock_m),
            ("error_model.sigma_iono_m", e.sigma_iono_m),
            ("error_model.sigma_tropo_m", e.sigma_tropo_m),
            ("error_model.sigma_noise_m", e.sigma_noise_m),
            ("error_model.sigma_multipath_m", e.sigma_multipath_m),
            ("error_model.sigma_toa_max_ns", e.sigma_toa_max_ns),
            ("error_model.tau_nlos_ns", e.tau_nlos_ns),
            ("error_model.shadow_sigma_db", e.shadow_sigma_db),
            ("error_model.k_timing", e.k_timing),
        ] {
            if v < 0.0 {
                return Err(invalid(field, format!("must be non-negative, got {v}")));
            }
        }
        for (field, v) in [
            ("error_model.p_sat_los", e.p_sat_los),
            ("error_model.p_tunnel_gnss_loss", e.p_tunnel_gnss_loss),
            ("error_model.p_rsu_corridor_los", e.p_rsu_corridor_los),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(field, format!("must lie in [0, 1], got {v}")));
            }
        }
        if !(e.bw_eff_hz > 0.0) {
            return Err(invalid("error_model.bw_eff_hz", "must be positive"));
        }

        let est = &self.estimator;
        if est.w_gnss < 0.0 || est.w_cell < 0.0 {
            return Err(invalid("estimator.w_gnss", "weights must be non-negative"));
        }
        if !(est.sigma_gnss_ns > 0.0 && est.sigma_cell_ns > 0.0) {
            return Err(invalid("estimator.sigma_gnss_ns", "residual sigmas must be positive"));
        }
        if !(est.grid_pitch_m > 0.0) {
            return Err(invalid("estimator.grid_pitch_m", "must be positive"));
        }
        if est.refine_starts == 0 {
            return Err(invalid("estimator.refine_starts", "must be at least 1"));
        }

        let p = &self.policy;
        if !(p.eta_ns > 0.0) {
            return Err(invalid("policy.eta_ns", format!("must be positive, got {}", p.eta_ns)));
        }
        if p.beta < 2 {
            return Err(invalid("policy.beta", format!("must be at least 2, got {}", p.beta)));
        }
        if !(p.epsilon_acc_m > 0.0) {
            return Err(invalid("policy.epsilon_acc_m", "must be positive"));
        }

        let c = &self.campaign;
        if !(c.density_per_km > 0.0) {
            return Err(invalid("campaign.density_per_km", format!("must be positive, got {}", c.density_per_km)));
        }
        if c.n_drops < 1 {
            return Err(invalid("campaign.n_drops", "must be at least 1"));
        }
        if !(c.availability_threshold_m > 0.0) {
            return Err(invalid("campaign.availability_threshold_m", "must be positive"));
        }
        Ok(())
    }

    pub fn road_layout(&self) -> RoadLayout {
        RoadLayout {
            lane_count: self.layout.road.lane_count,
            lane_width_m: self.layout.road.lane_width_m,
            length_m: self.layout.road.length_m,
            axis: Vec3::new(1.0, 0.0, 0.0),
            tunnel_span_m: self.layout.tunnel.as_ref().map(|t| (t.span_m[0], t.span_m[1])),
            tunnel_penetration_db: self.layout.tunnel.as_ref().map_or(0.0, |t| t.penetration_db),
            ue_height_m: self.layout.road.ue_height_m,
        }
    }

    /// Builds the full anchor set: cell sectors, then RSUs, then satellites,
    /// with contiguous ids in that order.
    pub fn build_anchors(&self) -> Result<AnchorSet, ConfigError> {
        let mut anchors = build_cellular_layout(self.layout.isd_m, self.layout.tiers)?;
        let mut next_id = anchors.len() as u32;
        let mut next_site = anchors.iter().map(|a| a.site_id).max().map_or(0, |s| s + 1);

        for rsu in &self.layout.rsus {
            anchors.push(Anchor {
                id: next_id,
                kind: AnchorKind::Rsu,
                position: Vec3::new(rsu[0], rsu[1], rsu[2]),
                site_id: next_site,
                boresight_azimuth: None,
            });
            next_id += 1;
            next_site += 1;
        }

        let mut sats = build_constellation(
            self.layout.constellation.count,
            self.layout.constellation.altitude_m,
            self.layout.constellation.min_elevation_deg.to_radians(),
        )?;
        offset_anchor_ids(&mut sats, next_id, next_site);
        anchors.extend(sats);
        Ok(AnchorSet::new(anchors))
    }

    pub fn uere_profile(&self) -> UereProfile {
        UereProfile {
            sigma_clock_m: self.error_model.sigma_clock_m,
            sigma_iono_m: self.error_model.sigma_iono_m,
            sigma_tropo_m: self.error_model.sigma_tropo_m,
            sigma_noise_m: self.error_model.sigma_noise_m,
            sigma_multipath_m: self.error_model.sigma_multipath_m,
        }
    }

    pub fn cellular_model(&self) -> CellularModel {
        CellularModel {
            tx_eirp_dbm: self.error_model.tx_eirp_dbm,
            noise_floor_dbm: self.error_model.noise_floor_dbm,
            pl_ref_db: self.error_model.pl_ref_db,
            pl_exp_los: self.error_model.pl_exp_los,
            pl_exp_nlos: self.error_model.pl_exp_nlos,
            shadow_sigma_db: self.error_model.shadow_sigma_db,
            detection_threshold_db: self.error_model.detection_threshold_db,
            bw_eff_hz: self.error_model.bw_eff_hz,
            k_timing: self.error_model.k_timing,
            sigma_toa_max_s: self.error_model.sigma_toa_max_ns * 1e-9,
            tau_nlos_s: self.error_model.tau_nlos_ns * 1e-9,
        }
    }

    pub fn link_model(&self) -> LinkModel {
        LinkModel {
            p_sat_los: self.error_model.p_sat_los,
            p_rsu_corridor_los: self.error_model.p_rsu_corridor_los,
            rsu_bypasses_penetration: self.error_model.rsu_bypasses_penetration,
        }
    }

    pub fn weight_table(&self) -> WeightTable {
        WeightTable {
            gnss: KindParams {
                weight: self.estimator.w_gnss,
                bias_s: self.estimator.mu_gnss_ns * 1e-9,
                sigma_s: self.estimator.sigma_gnss_ns * 1e-9,
            },
            cell: KindParams {
                weight: self.estimator.w_cell,
                bias_s: self.estimator.mu_cell_ns * 1e-9,
                sigma_s: self.estimator.sigma_cell_ns * 1e-9,
            },
            epsilon_stab_m: self.estimator.epsilon_stab_m,
        }
    }

    /// Solver search region: the road bounding box padded by one pitch.
    pub fn solver_options(&self) -> SolverOptions {
        let road = self.road_layout();
        let half = road.length_m / 2.0;
        let width = road.lane_count as f64 * road.lane_width_m;
        SolverOptions {
            bbox: (-half, half, 0.0, width),
            grid_pitch_m: self.estimator.grid_pitch_m,
            refine_starts: self.estimator.refine_starts,
            max_iterations: self.estimator.max_iterations,
            tolerance_m: self.estimator.tolerance_m,
            fixed_z_m: self.layout.road.ue_height_m,
            estimate_z: self.estimator.estimate_z,
            shared_clock: self.estimator.shared_clock,
            seed_with_least_squares: self.estimator.seed_with_least_squares,
        }
    }

    pub fn eta_s(&self) -> f64 {
        self.policy.eta_ns * 1e-9
    }
}
