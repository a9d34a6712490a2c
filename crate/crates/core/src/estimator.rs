//! Position solvers over mixed pseudorange/ToA measurement sets: a weighted
//! MAP estimator with an additive outlier floor, and an iterative
//! re-linearized least-squares baseline.
//!
//! All residuals are formed in the time domain: pseudoranges are divided by
//! the speed of light on entry, ToAs are used as-is, and one transmit-time
//! offset `tau` (shared across anchors by default) is estimated jointly with
//! the horizontal position. The vertical coordinate is pinned to the UE
//! antenna height unless `estimate_z` is set — the scenarios are road-bound.

use thiserror::Error;

use crate::measurement::{MeasurementKind, MeasurementSet};
use crate::scenario::{AnchorSet, Vec3};
use crate::SPEED_OF_LIGHT;

/// Per-measurement-kind estimator parameters: the additive mixture weight,
/// the assumed residual bias and the assumed residual standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KindParams {
    pub weight: f64,
    pub bias_s: f64,
    pub sigma_s: f64,
}

/// Estimator parameters per anchor kind plus the range-amplitude offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightTable {
    pub gnss: KindParams,
    pub cell: KindParams,
    /// Offset added to the range in the amplitude factor, meters.
    pub epsilon_stab_m: f64,
}

impl Default for WeightTable {
    fn default() -> Self {
        Self {
            gnss: KindParams { weight: 3e-7, bias_s: 0.0, sigma_s: 50e-9 },
            cell: KindParams { weight: 1e-3, bias_s: 0.0, sigma_s: 50e-9 },
            epsilon_stab_m: 1.0,
        }
    }
}

/// Which measurements enter the solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    GnssOnly,
    TdoaOnly,
    Fused,
}

/// How an estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    GnssOnly,
    TdoaOnly,
    Fused,
    LeastSquares,
}

impl SolveMode {
    fn method(self) -> Method {
        match self {
            SolveMode::GnssOnly => Method::GnssOnly,
            SolveMode::TdoaOnly => Method::TdoaOnly,
            SolveMode::Fused => Method::Fused,
        }
    }
}

/// Solver output.
#[derive(Debug, Clone, Copy)]
pub struct PositionEstimate {
    pub position: Vec3,
    /// Estimated common transmit-time offset, seconds.
    pub tau_s: f64,
    /// Separate GNSS clock offset when two clock unknowns are enabled.
    pub tau_gnss_s: Option<f64>,
    /// MAP log-objective, or negative weighted SSE for the LS baseline.
    pub objective_value: f64,
    pub method: Method,
    pub converged: bool,
    pub iterations: u32,
    /// Filled by the campaign runner against ground truth.
    pub horizontal_error_m: Option<f64>,
}

/// Deterministic multi-start search options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Horizontal search region (x_min, x_max, y_min, y_max), meters.
    pub bbox: (f64, f64, f64, f64),
    /// Coarse grid pitch over the search region, meters.
    pub grid_pitch_m: f64,
    /// How many of the best-scoring grid starts get local refinement.
    pub refine_starts: usize,
    /// Local descent iteration cap.
    pub max_iterations: u32,
    /// Local descent position tolerance, meters.
    pub tolerance_m: f64,
    /// Height the solution plane is pinned to when `estimate_z` is off.
    pub fixed_z_m: f64,
    /// Solve for the vertical coordinate as well.
    pub estimate_z: bool,
    /// Use one clock unknown for satellites and cells (default); otherwise
    /// fused mode estimates a second, GNSS-specific offset.
    pub shared_clock: bool,
    /// Add a Gauss-Newton solution as an extra refinement start. The coarse
    /// grid alone cannot land inside the likelihood basin when the assumed
    /// sigma is much tighter than the grid pitch.
    pub seed_with_least_squares: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            bbox: (-500.0, 500.0, 0.0, 24.0),
            grid_pitch_m: 50.0,
            refine_starts: 4,
            max_iterations: 200,
            tolerance_m: 1e-3,
            fixed_z_m: 1.5,
            estimate_z: false,
            shared_clock: true,
            seed_with_least_squares: true,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EstimateError {
    #[error("no detected measurements selected by mode {mode:?}")]
    EmptySelection { mode: SolveMode },
    #[error("{mode:?} needs {required} detected measurements, found {detected}")]
    Unobservable { mode: SolveMode, detected: usize, required: usize },
    #[error("anchor {0} referenced by a measurement is unknown")]
    UnknownAnchor(u32),
    #[error("normal equations singular (degenerate anchor geometry)")]
    SingularGeometry,
}

/// One selected measurement, pre-resolved for the hot loop.
#[derive(Debug, Clone, Copy)]
struct Term {
    anchor_id: u32,
    site_id: u32,
    anchor_position: Vec3,
    /// Measurement in seconds (pseudoranges already divided by c).
    time_s: f64,
    params: KindParams,
    is_gnss: bool,
}

fn select_terms(
    ms: &MeasurementSet,
    anchors: &AnchorSet,
    weights: &WeightTable,
    mode: SolveMode,
) -> Result<Vec<Term>, EstimateError> {
    let mut terms = Vec::new();
    let want_gnss = matches!(mode, SolveMode::GnssOnly | SolveMode::Fused);
    let want_cell = matches!(mode, SolveMode::TdoaOnly | SolveMode::Fused);

    if want_gnss {
        for m in ms.gnss.iter().filter(|m| m.detected) {
            debug_assert_eq!(m.kind, MeasurementKind::Pseudorange);
            let anchor = anchors.get(m.anchor_id).ok_or(EstimateError::UnknownAnchor(m.anchor_id))?;
            terms.push(Term {
                anchor_id: m.anchor_id,
                site_id: anchor.site_id,
                anchor_position: anchor.position,
                time_s: m.value / SPEED_OF_LIGHT,
                params: weights.gnss,
                is_gnss: true,
            });
        }
    }
    if want_cell {
        for m in ms.cellular.iter().filter(|m| m.detected) {
            debug_assert_eq!(m.kind, MeasurementKind::Toa);
            let anchor = anchors.get(m.anchor_id).ok_or(EstimateError::UnknownAnchor(m.anchor_id))?;
            terms.push(Term {
                anchor_id: m.anchor_id,
                site_id: anchor.site_id,
                anchor_position: anchor.position,
                time_s: m.value,
                params: weights.cell,
                is_gnss: false,
            });
        }
    }
    Ok(terms)
}

/// Four distinct transmission points resolve (x, y, tau) with margin in
/// every mode; for TdoaOnly that is three range differences once one ToA
/// serves as the reference. Co-located sectors of one site count once —
/// they add measurements but no geometry.
const MIN_SITES: usize = 4;

fn check_observability(terms: &[Term], mode: SolveMode) -> Result<(), EstimateError> {
    let mut sites: Vec<(bool, u32)> = terms.iter().map(|t| (t.is_gnss, t.site_id)).collect();
    sites.sort_unstable();
    sites.dedup();
    if sites.len() < MIN_SITES {
        return Err(EstimateError::Unobservable { mode, detected: sites.len(), required: MIN_SITES });
    }
    Ok(())
}

#[inline]
fn log_likelihood_term(term: &Term, position: &Vec3, tau_s: f64, epsilon_stab_m: f64) -> f64 {
    let range = position.distance_to(&term.anchor_position);
    let residual = term.time_s - range / SPEED_OF_LIGHT - tau_s - term.params.bias_s;
    let sigma = term.params.sigma_s;
    let amplitude = 1.0 / ((range + epsilon_stab_m) * (2.0 * std::f64::consts::PI).sqrt() * sigma);
    let gauss = (-residual * residual / (2.0 * sigma * sigma)).exp();
    (term.params.weight + amplitude * gauss).ln()
}

fn objective_of_terms(
    terms: &[Term],
    position: &Vec3,
    tau_cell_s: f64,
    tau_gnss_s: f64,
    epsilon_stab_m: f64,
) -> f64 {
    terms
        .iter()
        .map(|t| {
            let tau = if t.is_gnss { tau_gnss_s } else { tau_cell_s };
            log_likelihood_term(t, position, tau, epsilon_stab_m)
        })
        .sum()
}

/// Evaluates the weighted MAP log-objective at a candidate position and
/// transmit-time offset over the measurements selected by `mode`.
///
/// The sum-of-logs form replaces the product of per-anchor likelihoods; the
/// argmax is unchanged and the evaluation stays finite wherever any term
/// keeps its additive floor.
pub fn map_objective(
    candidate: &Vec3,
    tau_s: f64,
    ms: &MeasurementSet,
    anchors: &AnchorSet,
    weights: &WeightTable,
    mode: SolveMode,
) -> Result<f64, EstimateError> {
    let terms = select_terms(ms, anchors, weights, mode)?;
    if terms.is_empty() {
        return Err(EstimateError::EmptySelection { mode });
    }
    Ok(objective_of_terms(&terms, candidate, tau_s, tau_s, weights.epsilon_stab_m))
}

/// Parameter vector layout used by the local search: x, y, [z], c*tau_cell,
/// [c*tau_gnss]. Clock offsets are scaled to meters so one simplex scale
/// fits every coordinate.
struct ParamSpace {
    estimate_z: bool,
    two_clocks: bool,
    fixed_z: f64,
}

impl ParamSpace {
    fn for_mode(mode: SolveMode, opts: &SolverOptions) -> Self {
        Self {
            estimate_z: opts.estimate_z,
            two_clocks: !opts.shared_clock && mode == SolveMode::Fused,
            fixed_z: opts.fixed_z_m,
        }
    }

    fn dim(&self) -> usize {
        3 + usize::from(self.estimate_z) + usize::from(self.two_clocks)
    }

    fn pack(&self, position: &Vec3, tau_cell_s: f64, tau_gnss_s: f64) -> Vec<f64> {
        let mut v = vec![position.x, position.y];
        if self.estimate_z {
            v.push(position.z);
        }
        v.push(tau_cell_s * SPEED_OF_LIGHT);
        if self.two_clocks {
            v.push(tau_gnss_s * SPEED_OF_LIGHT);
        }
        v
    }

    fn unpack(&self, v: &[f64]) -> (Vec3, f64, f64) {
        let z = if self.estimate_z { v[2] } else { self.fixed_z };
        let base = 2 + usize::from(self.estimate_z);
        let tau_cell = v[base] / SPEED_OF_LIGHT;
        let tau_gnss = if self.two_clocks { v[base + 1] / SPEED_OF_LIGHT } else { tau_cell };
        (Vec3::new(v[0], v[1], z), tau_cell, tau_gnss)
    }
}

/// Nelder-Mead minimization. Deterministic: fixed coefficients, stable
/// ordering, no randomness. Returns (best point, best value, iterations,
/// converged).
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    start: &[f64],
    initial_step: f64,
    tolerance: f64,
    max_iterations: u32,
) -> (Vec<f64>, f64, u32, bool) {
    let n = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), f(start)));
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += initial_step;
        let fv = f(&v);
        simplex.push((v, fv));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));

        // Spatial extent of the simplex around the best vertex.
        let spread = simplex[1..]
            .iter()
            .map(|(v, _)| {
                v.iter()
                    .zip(simplex[0].0.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0f64, f64::max);
        if spread < tolerance {
            converged = true;
            break;
        }

        let worst = simplex[n].clone();
        let mut centroid = vec![0.0; n];
        for (v, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v.iter()) {
                *c += x / n as f64;
            }
        }

        let lerp = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(worst.0.iter())
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let reflected = lerp(1.0);
        let f_reflected = f(&reflected);
        if f_reflected < simplex[0].1 {
            let expanded = lerp(2.0);
            let f_expanded = f(&expanded);
            simplex[n] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
            continue;
        }
        if f_reflected < simplex[n - 1].1 {
            simplex[n] = (reflected, f_reflected);
            continue;
        }
        let contracted = if f_reflected < worst.1 { lerp(0.5) } else { lerp(-0.5) };
        let f_contracted = f(&contracted);
        if f_contracted < worst.1.min(f_reflected) {
            simplex[n] = (contracted, f_contracted);
            continue;
        }
        // Shrink toward the best vertex.
        let best = simplex[0].0.clone();
        for entry in simplex.iter_mut().skip(1) {
            let v: Vec<f64> =
                entry.0.iter().zip(best.iter()).map(|(x, b)| b + 0.5 * (x - b)).collect();
            let fv = f(&v);
            *entry = (v, fv);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (best, value) = simplex.swap_remove(0);
    (best, value, iterations, converged)
}

/// The measurement whose residual initializes the clock offset at a trial
/// position: the serving cell when cellular measurements are in play,
/// otherwise the first selected term.
fn reference_term(terms: &[Term], ms: &MeasurementSet, mode: SolveMode) -> Term {
    if mode != SolveMode::GnssOnly {
        if let Some(serving) = ms.serving_anchor_id {
            if let Some(t) = terms.iter().find(|t| !t.is_gnss && t.anchor_id == serving) {
                return *t;
            }
        }
        if let Some(t) = terms.iter().find(|t| !t.is_gnss) {
            return *t;
        }
    }
    terms[0]
}

fn grid_points(opts: &SolverOptions) -> Vec<(f64, f64)> {
    let (x0, x1, y0, y1) = opts.bbox;
    let pitch = opts.grid_pitch_m.max(1e-3);
    let steps = |a: f64, b: f64| -> Vec<f64> {
        let mut v = Vec::new();
        let n = ((b - a) / pitch).floor() as i64;
        for i in 0..=n.max(0) {
            v.push(a + i as f64 * pitch);
        }
        if *v.last().unwrap_or(&a) < b - 1e-9 {
            v.push(b);
        }
        v
    };
    let xs = steps(x0, x1);
    let ys = steps(y0, y1);
    let mut pts = Vec::with_capacity(xs.len() * ys.len());
    for &x in &xs {
        for &y in &ys {
            pts.push((x, y));
        }
    }
    pts
}

fn tau_init(term: &Term, position: &Vec3) -> f64 {
    term.time_s - position.distance_to(&term.anchor_position) / SPEED_OF_LIGHT - term.params.bias_s
}

/// Maximizes the MAP objective jointly over horizontal position and clock
/// offset(s) with deterministic multi-start: coarse grid seeds with a
/// serving-residual clock initialization, optionally a Gauss-Newton seed,
/// then simplex refinement of the best-scoring starts.
pub fn map_estimate(
    ms: &MeasurementSet,
    anchors: &AnchorSet,
    weights: &WeightTable,
    mode: SolveMode,
    opts: &SolverOptions,
) -> Result<PositionEstimate, EstimateError> {
    let terms = select_terms(ms, anchors, weights, mode)?;
    if terms.is_empty() {
        return Err(EstimateError::EmptySelection { mode });
    }
    check_observability(&terms, mode)?;

    let space = ParamSpace::for_mode(mode, opts);
    let eps = weights.epsilon_stab_m;
    let reference = reference_term(&terms, ms, mode);
    let gnss_reference = terms.iter().find(|t| t.is_gnss).copied();

    let eval = |v: &[f64]| -> f64 {
        let (p, tau_c, tau_g) = space.unpack(v);
        -objective_of_terms(&terms, &p, tau_c, tau_g, eps)
    };

    // Rank the coarse grid by objective.
    let mut starts: Vec<(Vec<f64>, f64)> = grid_points(opts)
        .into_iter()
        .map(|(x, y)| {
            let p = Vec3::new(x, y, opts.fixed_z_m);
            let tau_c = tau_init(&reference, &p);
            let tau_g = match (space.two_clocks, gnss_reference.as_ref()) {
                (true, Some(g)) => tau_init(g, &p),
                _ => tau_c,
            };
            let v = space.pack(&p, tau_c, tau_g);
            let fv = eval(&v);
            (v, fv)
        })
        .collect();
    starts.sort_by(|a, b| a.1.total_cmp(&b.1));
    starts.truncate(opts.refine_starts.max(1));

    // A Gauss-Newton seed reaches the basin even when the assumed sigma is
    // far tighter than the grid pitch.
    if opts.seed_with_least_squares {
        if let Ok(gn) = gauss_newton(&terms, &space, opts) {
            let v = space.pack(&gn.position, gn.tau_cell_s, gn.tau_gnss_s);
            let fv = eval(&v);
            starts.push((v, fv));
        }
    }

    let sigma_min = terms.iter().map(|t| t.params.sigma_s).fold(f64::INFINITY, f64::min);
    let step = (0.5 * SPEED_OF_LIGHT * sigma_min).clamp(0.1, opts.grid_pitch_m / 2.0);

    let mut best: Option<(Vec<f64>, f64, u32, bool)> = None;
    for (v, _) in &starts {
        let (pt, fv, iters, converged) =
            nelder_mead(eval, v, step, opts.tolerance_m, opts.max_iterations);
        let better = best.as_ref().map_or(true, |(_, bf, _, _)| fv < *bf);
        if better {
            best = Some((pt, fv, iters, converged));
        }
    }
    let (v, fv, iterations, converged) = best.expect("at least one start");
    let (position, tau_c, tau_g) = space.unpack(&v);

    Ok(PositionEstimate {
        position,
        tau_s: tau_c,
        tau_gnss_s: space.two_clocks.then_some(tau_g),
        objective_value: -fv,
        method: mode.method(),
        converged,
        iterations,
        horizontal_error_m: None,
    })
}

struct GaussNewtonSolution {
    position: Vec3,
    tau_cell_s: f64,
    tau_gnss_s: f64,
    weighted_sse: f64,
    iterations: u32,
    converged: bool,
}

/// Gauss-Newton iteration on inverse-sigma-weighted time residuals, started
/// from the best coarse-grid point. Divergence returns the best iterate
/// seen with `converged` unset.
fn gauss_newton(
    terms: &[Term],
    space: &ParamSpace,
    opts: &SolverOptions,
) -> Result<GaussNewtonSolution, EstimateError> {
    let reference = terms.iter().find(|t| !t.is_gnss).copied().unwrap_or(terms[0]);
    let gnss_reference = terms.iter().find(|t| t.is_gnss).copied();

    let sse = |p: &Vec3, tau_c: f64, tau_g: f64| -> f64 {
        terms
            .iter()
            .map(|t| {
                let tau = if t.is_gnss { tau_g } else { tau_c };
                let r = t.time_s
                    - p.distance_to(&t.anchor_position) / SPEED_OF_LIGHT
                    - tau
                    - t.params.bias_s;
                (r / t.params.sigma_s).powi(2)
            })
            .sum()
    };

    let mut best_start: Option<(Vec3, f64, f64, f64)> = None;
    for (x, y) in grid_points(opts) {
        let p = Vec3::new(x, y, opts.fixed_z_m);
        let tau_c = tau_init(&reference, &p);
        let tau_g = match (space.two_clocks, gnss_reference.as_ref()) {
            (true, Some(g)) => tau_init(g, &p),
            _ => tau_c,
        };
        let s = sse(&p, tau_c, tau_g);
        if best_start.as_ref().map_or(true, |(_, _, _, bs)| s < *bs) {
            best_start = Some((p, tau_c, tau_g, s));
        }
    }
    let (mut p, mut tau_c, mut tau_g, start_sse) = best_start.expect("non-empty grid");
    let mut best = GaussNewtonSolution {
        position: p,
        tau_cell_s: tau_c,
        tau_gnss_s: tau_g,
        weighted_sse: start_sse,
        iterations: 0,
        converged: false,
    };

    let dim = space.dim();
    for iteration in 1..=opts.max_iterations {
        // Normal equations in scaled coordinates: clock offsets carried as
        // c*tau and residuals scaled to meters, so every column and the
        // solution step are in meters.
        let mut jtj = vec![0.0f64; dim * dim];
        let mut jtr = vec![0.0f64; dim];
        for t in terms {
            let range = p.distance_to(&t.anchor_position);
            if range < 1e-9 {
                continue;
            }
            let tau = if t.is_gnss { tau_g } else { tau_c };
            let w = 1.0 / t.params.sigma_s;
            let r = (t.time_s - range / SPEED_OF_LIGHT - tau - t.params.bias_s) * SPEED_OF_LIGHT * w;
            let ex = (p.x - t.anchor_position.x) / range;
            let ey = (p.y - t.anchor_position.y) / range;
            let ez = (p.z - t.anchor_position.z) / range;

            // Row of the model Jacobian d(model)/d(params), times the weight.
            let mut row = Vec::with_capacity(dim);
            row.push(ex * w);
            row.push(ey * w);
            if space.estimate_z {
                row.push(ez * w);
            }
            if space.two_clocks {
                row.push(if t.is_gnss { 0.0 } else { w });
                row.push(if t.is_gnss { w } else { 0.0 });
            } else {
                row.push(w);
            }

            for i in 0..dim {
                for j in 0..dim {
                    jtj[i * dim + j] += row[i] * row[j];
                }
                jtr[i] += row[i] * r;
            }
        }
        for i in 0..dim {
            jtj[i * dim + i] += 1e-12;
        }
        let delta = match solve_dense(&mut jtj, &mut jtr, dim) {
            Some(d) => d,
            None => return Err(EstimateError::SingularGeometry),
        };

        // The residual here is measurement minus model, so the Gauss-Newton
        // update moves along +delta. Steps are clamped to keep a divergent
        // linearization inside the scenario scale.
        let norm: f64 = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
        let scale = if norm > 1.0e4 { 1.0e4 / norm } else { 1.0 };
        p.x += delta[0] * scale;
        p.y += delta[1] * scale;
        let mut idx = 2;
        if space.estimate_z {
            p.z += delta[idx] * scale;
            idx += 1;
        }
        tau_c += delta[idx] * scale / SPEED_OF_LIGHT;
        if space.two_clocks {
            tau_g += delta[idx + 1] * scale / SPEED_OF_LIGHT;
        } else {
            tau_g = tau_c;
        }

        let current = sse(&p, tau_c, tau_g);
        if current < best.weighted_sse {
            best = GaussNewtonSolution {
                position: p,
                tau_cell_s: tau_c,
                tau_gnss_s: tau_g,
                weighted_sse: current,
                iterations: iteration,
                converged: false,
            };
        }
        if norm * scale < opts.tolerance_m {
            return Ok(GaussNewtonSolution {
                position: p,
                tau_cell_s: tau_c,
                tau_gnss_s: tau_g,
                weighted_sse: current,
                iterations: iteration,
                converged: true,
            });
        }
    }
    best.iterations = opts.max_iterations;
    Ok(best)
}

/// Solves a small dense system by Gaussian elimination with partial
/// pivoting. `a` and `b` are consumed as scratch space.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < 1e-30 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let inv = 1.0 / a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] * inv;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut sum = b[row];
        for k in (row + 1)..n {
            sum -= a[row * n + k] * x[k];
        }
        x[row] = sum / a[row * n + row];
    }
    Some(x)
}

/// Iterative re-linearized least squares over the same residuals and
/// observability rules as [`map_estimate`]; rows are weighted by the
/// per-kind inverse sigma.
pub fn least_squares_estimate(
    ms: &MeasurementSet,
    anchors: &AnchorSet,
    weights: &WeightTable,
    mode: SolveMode,
    opts: &SolverOptions,
) -> Result<PositionEstimate, EstimateError> {
    let terms = select_terms(ms, anchors, weights, mode)?;
    if terms.is_empty() {
        return Err(EstimateError::EmptySelection { mode });
    }
    check_observability(&terms, mode)?;

    let space = ParamSpace::for_mode(mode, opts);
    let gn = gauss_newton(&terms, &space, opts)?;

    Ok(PositionEstimate {
        position: gn.position,
        tau_s: gn.tau_cell_s,
        tau_gnss_s: space.two_clocks.then_some(gn.tau_gnss_s),
        objective_value: -gn.weighted_sse,
        method: Method::LeastSquares,
        converged: gn.converged,
        iterations: gn.iterations,
        horizontal_error_m: None,
    })
}
