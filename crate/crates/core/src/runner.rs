//! Monte Carlo campaign orchestration — drop, synthesize, select, estimate —
//! and the evaluation metrics: error CDFs, availability at a threshold,
//! class-conditioned statistics and tail improvement between campaigns.
//!
//! Unavailable fixes are carried as `+inf` horizontal error: they count as
//! failures in availability and are excluded from finite percentiles
//! (reported separately as an outage fraction).

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig};
use crate::estimator::{map_estimate, SolveMode, SolverOptions, WeightTable};
use crate::measurement::{
    cellular_toas, first_arriving_neighbors, gnss_pseudoranges, CellularModel, MeasurementSet,
    UereProfile,
};
use crate::policy::{
    classify_ue, compute_zeta, e_fusion_select, e_spntv_select, percentile_sorted, refine_eta,
    spntv_fallback, spntv_select, PolicyKind, RefineSample, SelectionOutcome, Technology, UeClass,
};
use crate::scenario::{assign_link_states, drop_ues, AnchorSet, LinkModel, RoadLayout, UeDrop, Vec3};
use crate::seeds::derive_seed;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Everything a drop needs, built once per campaign and shared read-only.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub anchors: AnchorSet,
    pub road: RoadLayout,
    pub uere: UereProfile,
    pub cellular: CellularModel,
    pub links: LinkModel,
    pub weights: WeightTable,
    pub solver: SolverOptions,
    pub beta: usize,
    pub include_serving_in_neighbors: bool,
    pub epsilon_acc_m: f64,
    pub p_tunnel_gnss_loss: f64,
    pub density_per_km: f64,
}

impl Scenario {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Self {
            anchors: cfg.build_anchors()?,
            road: cfg.road_layout(),
            uere: cfg.uere_profile(),
            cellular: cfg.cellular_model(),
            links: cfg.link_model(),
            weights: cfg.weight_table(),
            solver: cfg.solver_options(),
            beta: cfg.policy.beta,
            include_serving_in_neighbors: cfg.policy.include_serving_in_neighbors,
            epsilon_acc_m: cfg.policy.epsilon_acc_m,
            p_tunnel_gnss_loss: cfg.error_model.p_tunnel_gnss_loss,
            density_per_km: cfg.campaign.density_per_km,
        })
    }
}

/// Per-UE evaluation record backing every reported figure.
#[derive(Debug, Clone, Copy)]
pub struct UeRecord {
    pub drop_index: u32,
    pub ue_id: u32,
    pub true_position: Vec3,
    pub in_tunnel: bool,
    pub class: UeClass,
    /// Neighbor-ToA gap, when at least two detected neighbors existed.
    pub zeta_s: Option<f64>,
    pub err_gnss_m: f64,
    pub err_tdoa_m: f64,
    pub err_fused_m: f64,
    pub err_spntv_m: f64,
    pub selected_spntv: Technology,
    pub err_espntv_m: f64,
    pub selected_espntv: Technology,
    pub err_efusion_m: f64,
    pub selected_efusion: Technology,
}

impl UeRecord {
    /// Horizontal error of the given policy; +inf means no fix.
    pub fn error_for(&self, method: PolicyKind) -> f64 {
        match method {
            PolicyKind::GnssOnly => self.err_gnss_m,
            PolicyKind::TdoaOnly => self.err_tdoa_m,
            PolicyKind::Fusion => self.err_fused_m,
            PolicyKind::Spntv => self.err_spntv_m,
            PolicyKind::ESpntv => self.err_espntv_m,
            PolicyKind::EFusion => self.err_efusion_m,
        }
    }

    pub fn selection_for(&self, method: PolicyKind) -> Option<Technology> {
        match method {
            PolicyKind::Spntv => Some(self.selected_spntv),
            PolicyKind::ESpntv => Some(self.selected_espntv),
            PolicyKind::EFusion => Some(self.selected_efusion),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no records for method {0:?}")]
    EmptyRecords(PolicyKind),
    #[error("percentile undefined: every error in the campaign is unavailable")]
    AllUnavailable,
}

fn horizontal_error(position: &Vec3, truth: &Vec3) -> f64 {
    position.horizontal_distance_to(truth)
}

fn technology_error(tech: Technology, gnss: f64, tdoa: f64, fused: f64) -> f64 {
    match tech {
        Technology::Gnss => gnss,
        Technology::Tdoa => tdoa,
        Technology::Fused => fused,
    }
}

/// Evaluates one UE end to end: link states, measurements, the three base
/// estimates and every policy decision.
fn evaluate_ue(
    scenario: &Scenario,
    mut ue: UeDrop,
    drop_index: u32,
    ue_seed: u64,
    eta_s: f64,
) -> UeRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(ue_seed);
    ue.link_states =
        assign_link_states(&ue, &scenario.anchors, &scenario.road, &scenario.links, &mut rng);

    let satellites: Vec<_> = scenario.anchors.satellites().collect();
    let cells: Vec<_> = scenario.anchors.cellular().collect();

    let gnss = gnss_pseudoranges(&ue, &satellites, &scenario.uere, scenario.p_tunnel_gnss_loss, &mut rng);
    let (cellular, serving_anchor_id) = cellular_toas(&ue, &cells, &scenario.cellular, &mut rng);
    let ms = MeasurementSet { ue_id: ue.ue_id, gnss, cellular, serving_anchor_id };

    let neighbors = first_arriving_neighbors(
        &ms,
        &scenario.anchors,
        scenario.beta,
        scenario.include_serving_in_neighbors,
    );
    let zeta_s = compute_zeta(&neighbors.measurements).ok();

    let error_of = |mode: SolveMode| -> f64 {
        match map_estimate(&ms, &scenario.anchors, &scenario.weights, mode, &scenario.solver) {
            Ok(est) => horizontal_error(&est.position, &ue.true_position),
            Err(_) => f64::INFINITY,
        }
    };
    let err_gnss_m = error_of(SolveMode::GnssOnly);
    let err_tdoa_m = error_of(SolveMode::TdoaOnly);
    let err_fused_m = error_of(SolveMode::Fused);

    let class = classify_ue(err_tdoa_m, scenario.epsilon_acc_m);

    let spntv: SelectionOutcome = match zeta_s {
        Some(z) => spntv_select(ue.ue_id, z, eta_s),
        None => spntv_fallback(ue.ue_id),
    };
    let espntv = e_spntv_select(&ue, zeta_s, eta_s);
    let efusion = e_fusion_select(&ue);

    UeRecord {
        drop_index,
        ue_id: ue.ue_id,
        true_position: ue.true_position,
        in_tunnel: ue.in_tunnel,
        class,
        zeta_s,
        err_gnss_m,
        err_tdoa_m,
        err_fused_m,
        err_spntv_m: technology_error(spntv.chosen, err_gnss_m, err_tdoa_m, err_fused_m),
        selected_spntv: spntv.chosen,
        err_espntv_m: technology_error(espntv.chosen, err_gnss_m, err_tdoa_m, err_fused_m),
        selected_espntv: espntv.chosen,
        err_efusion_m: technology_error(efusion.chosen, err_gnss_m, err_tdoa_m, err_fused_m),
        selected_efusion: efusion.chosen,
    }
}

/// Runs one Monte Carlo realization: UE drop, per-UE synthesis, selection
/// and estimation. UEs evaluate in parallel on seed-derived streams, so the
/// result is independent of the worker count.
pub fn run_drop(scenario: &Scenario, drop_index: u32, base_seed: u64, eta_s: f64) -> Vec<UeRecord> {
    let drop_seed = derive_seed(base_seed, drop_index as u64, 0);
    let ues = drop_ues(&scenario.road, scenario.density_per_km, drop_seed);

    ues.into_par_iter()
        .enumerate()
        .map(|(i, ue)| {
            let ue_seed = derive_seed(base_seed, drop_index as u64, 1 + i as u64);
            evaluate_ue(scenario, ue, drop_index, ue_seed, eta_s)
        })
        .collect()
}

/// Re-derives the selector columns of existing records at a different
/// threshold. Base errors, gaps and tunnel flags stay fixed, so this is the
/// shared-seed comparison the threshold sweep builds on.
pub fn reselect(records: &[UeRecord], eta_s: f64) -> Vec<UeRecord> {
    records
        .iter()
        .map(|r| {
            let spntv = match r.zeta_s {
                Some(z) => spntv_select(r.ue_id, z, eta_s).chosen,
                None => spntv_fallback(r.ue_id).chosen,
            };
            let espntv = if r.in_tunnel { Technology::Tdoa } else { spntv };
            let mut out = *r;
            out.selected_spntv = spntv;
            out.err_spntv_m = technology_error(spntv, r.err_gnss_m, r.err_tdoa_m, r.err_fused_m);
            out.selected_espntv = espntv;
            out.err_espntv_m = technology_error(espntv, r.err_gnss_m, r.err_tdoa_m, r.err_fused_m);
            out
        })
        .collect()
}

/// Fraction of UEs whose error is at or below the threshold; unavailable
/// fixes count as exceeding it.
pub fn availability(records: &[UeRecord], method: PolicyKind, threshold_m: f64) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let hits = records.iter().filter(|r| r.error_for(method) <= threshold_m).count();
    hits as f64 / records.len() as f64
}

/// Empirical error CDF of one method.
#[derive(Debug, Clone)]
pub struct ErrorCdf {
    /// (error, cumulative fraction of all records) pairs, ascending.
    pub points: Vec<(f64, f64)>,
    /// Terminal mass above the largest finite error.
    pub unavailable_fraction: f64,
}

impl ErrorCdf {
    /// CDF value at `x`: the fraction of records with error <= x.
    pub fn at(&self, x: f64) -> f64 {
        match self.points.iter().rev().find(|(v, _)| *v <= x) {
            Some((_, f)) => *f,
            None => 0.0,
        }
    }
}

/// Builds the empirical CDF over finite errors; unavailable entries appear
/// only as the terminal mass that keeps the curve below 1.
pub fn error_cdf(records: &[UeRecord], method: PolicyKind) -> ErrorCdf {
    let total = records.len();
    let mut finite: Vec<f64> =
        records.iter().map(|r| r.error_for(method)).filter(|e| e.is_finite()).collect();
    finite.sort_by(|a, b| a.total_cmp(b));
    let points = finite
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, (i + 1) as f64 / total as f64))
        .collect();
    ErrorCdf {
        points,
        unavailable_fraction: (total - finite.len()) as f64 / total.max(1) as f64,
    }
}

/// Sorted finite errors of one method.
fn finite_errors(records: &[UeRecord], method: PolicyKind) -> Vec<f64> {
    let mut v: Vec<f64> =
        records.iter().map(|r| r.error_for(method)).filter(|e| e.is_finite()).collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Relative tail shrinkage `(P_a - P_b) / P_a` at the given percentile of
/// finite errors, campaign `a` being the baseline without the deployment
/// under study and `b` the one with it.
pub fn tail_improvement(
    records_a: &[UeRecord],
    records_b: &[UeRecord],
    method: PolicyKind,
    percentile: f64,
) -> Result<f64, RunnerError> {
    assert!(percentile > 0.0 && percentile < 100.0, "percentile must lie in (0, 100)");
    let a = finite_errors(records_a, method);
    let b = finite_errors(records_b, method);
    if a.is_empty() || b.is_empty() {
        return Err(RunnerError::AllUnavailable);
    }
    let pa = percentile_sorted(&a, percentile);
    let pb = percentile_sorted(&b, percentile);
    Ok((pa - pb) / pa)
}

/// Fraction of records in `class` whose policy selection landed on `tech`.
pub fn selection_fraction(
    records: &[UeRecord],
    method: PolicyKind,
    class: UeClass,
    tech: Technology,
) -> f64 {
    let in_class: Vec<&UeRecord> = records.iter().filter(|r| r.class == class).collect();
    if in_class.is_empty() {
        return 0.0;
    }
    let hits = in_class
        .iter()
        .filter(|r| r.selection_for(method) == Some(tech))
        .count();
    hits as f64 / in_class.len() as f64
}

/// Per-method campaign statistics.
#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub method: PolicyKind,
    pub availability: f64,
    pub unavailable_fraction: f64,
    /// 50th, 67th, 90th, 95th percentiles of finite errors (NaN when empty).
    pub percentiles: [f64; 4],
}

/// Aggregated campaign output.
#[derive(Debug, Clone)]
pub struct CampaignSummary {
    pub n_drops: u32,
    pub n_records: usize,
    pub base_seed: u64,
    pub availability_threshold_m: f64,
    /// Threshold in force at the end of the campaign (refinement may move it).
    pub final_eta_ns: f64,
    pub methods: Vec<MethodSummary>,
    /// Class-conditioned availability for the selector and its inputs.
    pub class_a_count: usize,
    pub class_b_count: usize,
}

pub const SUMMARY_PERCENTILES: [f64; 4] = [50.0, 67.0, 90.0, 95.0];

pub fn summarize(
    records: &[UeRecord],
    n_drops: u32,
    base_seed: u64,
    threshold_m: f64,
    final_eta_ns: f64,
) -> CampaignSummary {
    let methods = PolicyKind::ALL
        .iter()
        .map(|&method| {
            let finite = finite_errors(records, method);
            let unavailable_fraction = if records.is_empty() {
                0.0
            } else {
                (records.len() - finite.len()) as f64 / records.len() as f64
            };
            let percentiles = if finite.is_empty() {
                [f64::NAN; 4]
            } else {
                SUMMARY_PERCENTILES.map(|p| percentile_sorted(&finite, p))
            };
            MethodSummary {
                method,
                availability: availability(records, method, threshold_m),
                unavailable_fraction,
                percentiles,
            }
        })
        .collect();
    CampaignSummary {
        n_drops,
        n_records: records.len(),
        base_seed,
        availability_threshold_m: threshold_m,
        final_eta_ns,
        methods,
        class_a_count: records.iter().filter(|r| r.class == UeClass::A).count(),
        class_b_count: records.iter().filter(|r| r.class == UeClass::B).count(),
    }
}

/// Runs `n_drops` realizations under seed-derived streams and aggregates
/// them. When the policy requests threshold refinement, drops are processed
/// in windows and the threshold is recomputed between windows from realized
/// class-A gaps.
pub fn run_campaign(
    cfg: &ScenarioConfig,
    n_drops: u32,
    base_seed: u64,
) -> Result<(Vec<UeRecord>, CampaignSummary), RunnerError> {
    let scenario = Scenario::from_config(cfg)?;
    let mut eta_s = cfg.eta_s();
    let window = cfg.policy.eta_update_period_drops;

    let mut records: Vec<UeRecord> = Vec::new();
    let mut drop_index = 0;
    while drop_index < n_drops {
        let window_end = if window == 0 { n_drops } else { (drop_index + window).min(n_drops) };
        let mut window_records: Vec<UeRecord> = (drop_index..window_end)
            .flat_map(|d| run_drop(&scenario, d, base_seed, eta_s))
            .collect();

        if window > 0 && window_end < n_drops {
            let samples: Vec<RefineSample> = window_records
                .iter()
                .filter_map(|r| {
                    r.zeta_s.map(|z| RefineSample { zeta_s: z, tdoa_error_m: r.err_tdoa_m })
                })
                .collect();
            eta_s = refine_eta(&samples, scenario.epsilon_acc_m, eta_s);
        }
        records.append(&mut window_records);
        drop_index = window_end;
    }

    records.sort_by_key(|r| (r.drop_index, r.ue_id));
    let summary = summarize(
        &records,
        n_drops,
        base_seed,
        cfg.campaign.availability_threshold_m,
        eta_s * 1e9,
    );
    Ok((records, summary))
}
