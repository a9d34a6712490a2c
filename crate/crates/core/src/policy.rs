//! Technology-selection policies: the neighbor-ToA-gap selector that
//! switches a UE between GNSS and cellular positioning, its threshold
//! calibration and refinement, the accuracy-class partition, and the
//! location-aware tunnel variants.

use thiserror::Error;

use crate::measurement::Measurement;
use crate::scenario::UeDrop;

/// Positioning technology a policy can commit a UE to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Technology {
    Gnss,
    Tdoa,
    Fused,
}

/// Why a policy chose what it chose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionReason {
    ZetaBelowEta,
    ZetaAtOrAboveEta,
    InTunnel,
    OutOfTunnel,
    /// Fixed-technology policy, or the fallback when zeta is undefined.
    Forced,
}

/// Accuracy class of a UE by its cellular-positioning error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UeClass {
    A,
    B,
}

/// The positioning policies a campaign evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    GnssOnly,
    TdoaOnly,
    Fusion,
    Spntv,
    ESpntv,
    EFusion,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::GnssOnly,
        PolicyKind::TdoaOnly,
        PolicyKind::Fusion,
        PolicyKind::Spntv,
        PolicyKind::ESpntv,
        PolicyKind::EFusion,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            PolicyKind::GnssOnly => "gnss",
            PolicyKind::TdoaOnly => "tdoa",
            PolicyKind::Fusion => "fusion",
            PolicyKind::Spntv => "spntv",
            PolicyKind::ESpntv => "e-spntv",
            PolicyKind::EFusion => "e-fusion",
        }
    }
}

/// One policy decision for one UE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionOutcome {
    pub ue_id: u32,
    /// Gap between the two earliest neighbor ToAs, when defined.
    pub zeta_s: Option<f64>,
    pub chosen: Technology,
    pub reason: SelectionReason,
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("zeta needs at least 2 detected neighbor measurements, got {0}")]
    ZetaUndefined(usize),
    #[error("threshold calibration needs a non-empty sample list")]
    EmptySamples,
}

/// Gap between the two earliest-arriving neighbor ToAs, seconds (>= 0).
///
/// Works on the detected neighbor window; the two smallest values are found
/// by scan so the result does not depend on input ordering.
pub fn compute_zeta(neighbors: &[Measurement]) -> Result<f64, PolicyError> {
    let detected: Vec<f64> =
        neighbors.iter().filter(|m| m.detected).map(|m| m.value).collect();
    if detected.len() < 2 {
        return Err(PolicyError::ZetaUndefined(detected.len()));
    }
    let mut first = f64::INFINITY;
    let mut second = f64::INFINITY;
    for v in detected {
        if v < first {
            second = first;
            first = v;
        } else if v < second {
            second = v;
        }
    }
    Ok(second - first)
}

/// The core selector: a neighbor-ToA gap at or above the threshold switches
/// the GNSS receiver on; below it the fix stays cellular.
pub fn spntv_select(ue_id: u32, zeta_s: f64, eta_s: f64) -> SelectionOutcome {
    if zeta_s >= eta_s {
        SelectionOutcome {
            ue_id,
            zeta_s: Some(zeta_s),
            chosen: Technology::Gnss,
            reason: SelectionReason::ZetaAtOrAboveEta,
        }
    } else {
        SelectionOutcome {
            ue_id,
            zeta_s: Some(zeta_s),
            chosen: Technology::Tdoa,
            reason: SelectionReason::ZetaBelowEta,
        }
    }
}

/// Fallback when zeta is undefined (fewer than two detected neighbors):
/// too few cellular neighbors also means poor TDOA observability, so the
/// selector switches to GNSS.
pub fn spntv_fallback(ue_id: u32) -> SelectionOutcome {
    SelectionOutcome { ue_id, zeta_s: None, chosen: Technology::Gnss, reason: SelectionReason::Forced }
}

/// Linear-interpolation percentile of an unsorted sample list.
///
/// Rank `p/100 * (n-1)` is interpolated between order statistics, so the
/// 50th percentile of an even-count list is the mean of the two central
/// values and of an odd-count list is the middle element exactly.
pub fn percentile(samples: &[f64], p: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Some(percentile_sorted(&sorted, p))
}

/// Same as [`percentile`] over an already ascending slice.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = (p / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = rank - lo as f64;
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Initializes the selection threshold as the 50th percentile of the
/// neighbor-ToA gaps observed on class-A UEs.
pub fn calibrate_eta(zeta_samples_class_a: &[f64]) -> Result<f64, PolicyError> {
    percentile(zeta_samples_class_a, 50.0).ok_or(PolicyError::EmptySamples)
}

/// Partitions a UE by its cellular positioning error against the accuracy
/// target. Unavailable fixes (encoded as +inf) land in class B.
pub fn classify_ue(tdoa_error_m: f64, epsilon_acc_m: f64) -> UeClass {
    if tdoa_error_m <= epsilon_acc_m {
        UeClass::A
    } else {
        UeClass::B
    }
}

/// Location-aware selector variant: cellular-only inside the tunnel,
/// the plain selector outside.
pub fn e_spntv_select(ue: &UeDrop, zeta_s: Option<f64>, eta_s: f64) -> SelectionOutcome {
    if ue.in_tunnel {
        SelectionOutcome {
            ue_id: ue.ue_id,
            zeta_s,
            chosen: Technology::Tdoa,
            reason: SelectionReason::InTunnel,
        }
    } else {
        match zeta_s {
            Some(z) => spntv_select(ue.ue_id, z, eta_s),
            None => spntv_fallback(ue.ue_id),
        }
    }
}

/// Location-aware fusion variant: cellular-only inside the tunnel, full
/// measurement fusion outside.
pub fn e_fusion_select(ue: &UeDrop) -> SelectionOutcome {
    if ue.in_tunnel {
        SelectionOutcome {
            ue_id: ue.ue_id,
            zeta_s: None,
            chosen: Technology::Tdoa,
            reason: SelectionReason::InTunnel,
        }
    } else {
        SelectionOutcome {
            ue_id: ue.ue_id,
            zeta_s: None,
            chosen: Technology::Fused,
            reason: SelectionReason::OutOfTunnel,
        }
    }
}

/// One observation window entry for threshold refinement.
#[derive(Debug, Clone, Copy)]
pub struct RefineSample {
    pub zeta_s: f64,
    /// Realized cellular positioning error; +inf when unavailable.
    pub tdoa_error_m: f64,
}

/// Recomputes the threshold as the median gap over UEs whose realized
/// cellular error met the accuracy target within the window; no class-A
/// samples leaves the threshold unchanged.
pub fn refine_eta(history: &[RefineSample], epsilon_acc_m: f64, current_eta_s: f64) -> f64 {
    let class_a: Vec<f64> = history
        .iter()
        .filter(|s| classify_ue(s.tdoa_error_m, epsilon_acc_m) == UeClass::A)
        .map(|s| s.zeta_s)
        .collect();
    match percentile(&class_a, 50.0) {
        Some(median) => median,
        None => current_eta_s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::MeasurementKind;
    use crate::scenario::Vec3;
    use std::collections::BTreeMap;

    fn toa(id: u32, value: f64) -> Measurement {
        Measurement { anchor_id: id, kind: MeasurementKind::Toa, value, detected: true, true_los: true }
    }

    fn ue(in_tunnel: bool) -> UeDrop {
        UeDrop {
            ue_id: 7,
            true_position: Vec3::new(0.0, 0.0, 1.5),
            lane_index: 0,
            in_tunnel,
            link_states: BTreeMap::new(),
        }
    }

    #[test]
    fn zeta_of_coarriving_neighbors_is_zero() {
        let z = compute_zeta(&[toa(0, 1.0e-6), toa(1, 1.0e-6)]).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn zeta_matches_the_tabled_example() {
        let z = compute_zeta(&[toa(0, 1.000e-6), toa(1, 1.090e-6)]).unwrap();
        assert!((z - 90.0e-9).abs() < 1e-15);
    }

    #[test]
    fn zeta_is_order_independent_and_needs_two() {
        let a = compute_zeta(&[toa(0, 3.0e-6), toa(1, 1.0e-6), toa(2, 2.0e-6)]).unwrap();
        let b = compute_zeta(&[toa(1, 1.0e-6), toa(2, 2.0e-6), toa(0, 3.0e-6)]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, 1.0e-6);
        assert_eq!(compute_zeta(&[toa(0, 1.0e-6)]), Err(PolicyError::ZetaUndefined(1)));
    }

    #[test]
    fn selector_boundary_is_inclusive_on_the_gnss_side() {
        assert_eq!(spntv_select(0, 200e-9, 90e-9).chosen, Technology::Gnss);
        assert_eq!(spntv_select(0, 0.0, 90e-9).chosen, Technology::Tdoa);
        let at_boundary = spntv_select(0, 90e-9, 90e-9);
        assert_eq!(at_boundary.chosen, Technology::Gnss);
        assert_eq!(at_boundary.reason, SelectionReason::ZetaAtOrAboveEta);
    }

    #[test]
    fn eta_calibration_median_of_tabled_set() {
        // Gap values in nanoseconds; the median must come back bit-exact.
        let samples = [16.0, 55.0, 90.0, 155.0, 220.0];
        assert_eq!(calibrate_eta(&samples).unwrap(), 90.0);
        let in_seconds: Vec<f64> = samples.iter().map(|v| v * 1e-9).collect();
        assert_eq!(calibrate_eta(&in_seconds).unwrap(), in_seconds[2]);
        assert_eq!(calibrate_eta(&[42.0]).unwrap(), 42.0);
        assert_eq!(calibrate_eta(&[]), Err(PolicyError::EmptySamples));
    }

    #[test]
    fn eta_calibration_tracks_the_true_median() {
        // Order-statistics check on a deterministic uniform-ish sequence.
        let samples: Vec<f64> = (0..10_000).map(|i| ((i * 7919) % 10_000) as f64 / 10_000.0).collect();
        let median = calibrate_eta(&samples).unwrap();
        assert!((median - 0.5).abs() < 0.02, "median {median}");
    }

    #[test]
    fn classification_boundary_is_inclusive() {
        assert_eq!(classify_ue(9.99, 10.0), UeClass::A);
        assert_eq!(classify_ue(10.0, 10.0), UeClass::A);
        assert_eq!(classify_ue(10.01, 10.0), UeClass::B);
        assert_eq!(classify_ue(f64::INFINITY, 10.0), UeClass::B);
    }

    #[test]
    fn tunnel_variant_forces_cellular_inside() {
        let inside = e_spntv_select(&ue(true), Some(1.0), 90e-9);
        assert_eq!(inside.chosen, Technology::Tdoa);
        assert_eq!(inside.reason, SelectionReason::InTunnel);

        let below = e_spntv_select(&ue(false), Some(10e-9), 90e-9);
        assert_eq!(below.chosen, Technology::Tdoa);
        let above = e_spntv_select(&ue(false), Some(200e-9), 90e-9);
        assert_eq!(above.chosen, Technology::Gnss);
    }

    #[test]
    fn fusion_variant_splits_on_tunnel_state() {
        assert_eq!(e_fusion_select(&ue(true)).chosen, Technology::Tdoa);
        assert_eq!(e_fusion_select(&ue(false)).chosen, Technology::Fused);
    }

    #[test]
    fn refinement_reproduces_tabled_eta_and_holds_on_empty() {
        let gaps_s: Vec<f64> = [16.0, 55.0, 90.0, 155.0, 220.0].iter().map(|v| v * 1e-9).collect();
        let window: Vec<RefineSample> = gaps_s
            .iter()
            .map(|&zeta_s| RefineSample { zeta_s, tdoa_error_m: 1.0 })
            .collect();
        assert_eq!(refine_eta(&window, 10.0, 1.0e-9), gaps_s[2]);

        let all_class_b: Vec<RefineSample> = window
            .iter()
            .map(|s| RefineSample { zeta_s: s.zeta_s, tdoa_error_m: 50.0 })
            .collect();
        assert_eq!(refine_eta(&all_class_b, 10.0, 123.0e-9), 123.0e-9);
    }

    #[test]
    fn refinement_is_a_fixed_point_on_a_stationary_window() {
        let window: Vec<RefineSample> = (0..500)
            .map(|i| RefineSample {
                zeta_s: ((i * 31) % 500) as f64 * 1e-9,
                tdoa_error_m: if i % 3 == 0 { 20.0 } else { 2.0 },
            })
            .collect();
        let mut eta = 1.0e-9;
        let mut previous = eta;
        for round in 0..50 {
            eta = refine_eta(&window, 10.0, eta);
            if round > 0 {
                assert!((eta - previous).abs() < 5e-9, "round {round} moved {previous} -> {eta}");
            }
            previous = eta;
        }
    }
}
