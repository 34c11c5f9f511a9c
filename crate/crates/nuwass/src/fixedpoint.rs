//! Contraction fixed-point solver for the transport-regularized equilibrium
//! problem on a 1-D strategy interval.
//!
//! The iteration alternates two maps: a split function `k` generates the
//! Gibbs density `ν_k ∝ e^{-∫k}`, and mass splitting against `ν_k` returns
//! the next split function `F[k]`. Under the certified contraction factor
//! the iteration converges geometrically to the unique equilibrium; under
//! nestedness the fixed point is the derivative of the Kantorovich
//! potential.

use crate::cost::CostSpec;
use crate::measures::{GridMeasure, SplitFunction};
use crate::unequal::{lipschitz_in_y, nestedness_check, suff_condition_margin, CyProfile, NestednessReport};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Default number of midpoint samples of the strategy interval.
pub const DEFAULT_Y_RESOLUTION: usize = 256;

/// Serializable description of a fixed-point problem (the CLI fixture
/// format).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointSpec {
    pub mu: crate::io::Measure,
    pub interval: [f64; 2],
    pub cost: CostSpec,
    #[serde(default = "default_resolution")]
    pub y_resolution: usize,
    /// The level-curve constant `C` (no constructive recipe exists; supply
    /// it or estimate it with [`estimate_level_curve_constant`]).
    pub c_level: f64,
}

fn default_resolution() -> usize {
    DEFAULT_Y_RESOLUTION
}

/// A validated problem with certified constants and cached per-`y` grid
/// profiles.
pub struct FixedPointProblem {
    pub mu: GridMeasure,
    pub interval: [f64; 2],
    pub cost: CostSpec,
    pub y_grid: Vec<f64>,
    /// `min ∂c/∂y` over the sample.
    pub d_lo: f64,
    /// `max ∂c/∂y` over the sample.
    pub d_hi: f64,
    /// `max |D_x ∂c/∂y|` over the sample.
    pub a_max: f64,
    /// `min μ̄` over the grid.
    pub b_min: f64,
    /// Level-curve constant `C`.
    pub c_level: f64,
    /// Largest grid spacing behind the sampled bounds.
    pub sampling_gap: f64,
    /// The bound signs straddle zero (`d_lo <= 0 < d_hi`): the contraction
    /// certificate evaluates the factor with absolute values as written and
    /// this flag is surfaced in reports.
    pub sign_flag: bool,
    profiles: Vec<CyProfile>,
}

impl FixedPointProblem {
    pub fn new(
        mu: GridMeasure,
        interval: [f64; 2],
        cost: CostSpec,
        y_resolution: usize,
        c_level: f64,
    ) -> Result<Self> {
        if !(interval[1] > interval[0]) {
            return Err(Error::Validation(format!(
                "invalid strategy interval [{}, {}]",
                interval[0], interval[1]
            )));
        }
        if y_resolution < 8 {
            return Err(Error::Validation("y resolution must be at least 8".into()));
        }
        if !(c_level > 0.0) {
            return Err(Error::Validation(format!("level-curve constant must be positive, got {c_level}")));
        }
        let h = (interval[1] - interval[0]) / y_resolution as f64;
        let y_grid: Vec<f64> = (0..y_resolution)
            .map(|j| interval[0] + (j as f64 + 0.5) * h)
            .collect();
        let mut profiles = Vec::with_capacity(y_grid.len());
        let mut d_lo = f64::INFINITY;
        let mut d_hi = f64::NEG_INFINITY;
        let mut a_max = 0.0_f64;
        for &y in &y_grid {
            let p = CyProfile::new(&mu, &cost, y)?;
            d_lo = d_lo.min(p.min_value());
            d_hi = d_hi.max(p.max_value());
            profiles.push(p);
            // |D_x c_y| is constant per y for the supported cost forms;
            // sample it at one cell and at the corners for safety.
            for idx in [0, mu.n_cells() / 2, mu.n_cells() - 1] {
                let g = cost.grad_x_c_y(&mu.cell_midpoint(idx), y)?;
                a_max = a_max.max(g.iter().map(|t| t * t).sum::<f64>().sqrt());
            }
        }
        let b_min = mu.density().iter().copied().fold(f64::INFINITY, f64::min);
        if !(b_min > 0.0) {
            return Err(Error::Validation(
                "the source density must be bounded below by a positive constant on its grid".into(),
            ));
        }
        let sampling_gap = mu.cell_widths().into_iter().fold(h, f64::max);
        let sign_flag = d_lo <= 0.0 && d_hi > 0.0;
        Ok(FixedPointProblem {
            mu,
            interval,
            cost,
            y_grid,
            d_lo,
            d_hi,
            a_max,
            b_min,
            c_level,
            sampling_gap,
            sign_flag,
            profiles,
        })
    }

    pub fn from_spec(spec: FixedPointSpec) -> Result<Self> {
        let mu = match spec.mu {
            crate::io::Measure::Grid { ranges, cells, density } => GridMeasure::new(ranges, cells, density)?,
            crate::io::Measure::Discrete { .. } => {
                return Err(Error::Validation("fixed-point problems need a grid source measure".into()))
            }
        };
        spec.cost.validate()?;
        FixedPointProblem::new(mu, spec.interval, spec.cost, spec.y_resolution, spec.c_level)
    }

    /// Midpoint spacing of the `y` grid.
    pub fn spacing(&self) -> f64 {
        (self.interval[1] - self.interval[0]) / self.y_grid.len() as f64
    }

    fn zero_k(&self) -> Result<SplitFunction> {
        SplitFunction::constant(self.interval, self.y_grid.len(), 0.0, [self.d_lo, self.d_hi])
    }

    /// Constant-zero start clipped into the bound box (the usual `k₀`).
    pub fn default_start(&self) -> Result<SplitFunction> {
        if self.d_lo <= 0.0 && self.d_hi >= 0.0 {
            self.zero_k()
        } else {
            SplitFunction::constant(
                self.interval,
                self.y_grid.len(),
                0.5 * (self.d_lo + self.d_hi),
                [self.d_lo, self.d_hi],
            )
        }
    }
}

/// Certified cost bounds.
#[derive(Debug, Clone, Serialize)]
pub struct CostBounds {
    pub d_lo: f64,
    pub d_hi: f64,
    pub a_max: f64,
    /// Grid spacing the sample used (bounds are exact only up to this
    /// scale).
    pub sampling_gap: f64,
    /// `∂c/∂y` is (numerically) constant in `y`.
    pub degenerate: bool,
}

/// Samples `min/max ∂c/∂y` and `max |D_x ∂c/∂y|` over the problem grids.
pub fn cost_y_bounds(problem: &FixedPointProblem) -> CostBounds {
    CostBounds {
        d_lo: problem.d_lo,
        d_hi: problem.d_hi,
        a_max: problem.a_max,
        sampling_gap: problem.sampling_gap,
        degenerate: (problem.d_hi - problem.d_lo).abs() < 1e-12,
    }
}

/// Gibbs density of a split function: `ν̄_k ∝ e^{-v_k}` with `v_k` the
/// cumulative trapezoid antiderivative of `k`; normalized by midpoint
/// quadrature.
pub fn k_to_density(k: &SplitFunction) -> Result<GridMeasure> {
    let v = k.antiderivative();
    let h = k.spacing();
    let weights: Vec<f64> = v.iter().map(|&vi| (-vi).exp()).collect();
    let z: f64 = weights.iter().sum::<f64>() * h;
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Solver(format!("degenerate Gibbs normalization {z}")));
    }
    let density: Vec<f64> = weights.iter().map(|&w| w / z).collect();
    GridMeasure::new_renormalized(vec![k.interval()], vec![k.len()], density)
}

/// Mass splitting against `ν`, sampled on the problem's `y` grid; values are
/// clamped into `[d_lo, d_hi]` (they land there by construction, up to
/// 1e-9).
pub fn nu_to_ktilde(nu: &GridMeasure, problem: &FixedPointProblem) -> Result<(SplitFunction, usize)> {
    if nu.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: nu.dim() });
    }
    let mut values = Vec::with_capacity(problem.y_grid.len());
    let mut degenerate = 0usize;
    for (profile, &y) in problem.profiles.iter().zip(&problem.y_grid) {
        let target = nu.cdf_1d(y)?;
        let (k, degen) = profile.split(target);
        if degen {
            degenerate += 1;
        }
        values.push(k.clamp(problem.d_lo, problem.d_hi));
    }
    let k = SplitFunction::new(problem.interval, problem.y_grid.clone(), values, [problem.d_lo, problem.d_hi])?;
    Ok((k, degenerate))
}

/// One application of the composed map `F = (ν ↦ k̃) ∘ (k ↦ ν_k)`.
pub fn apply_f(k: &SplitFunction, problem: &FixedPointProblem) -> Result<(SplitFunction, usize)> {
    let nu = k_to_density(k)?;
    nu_to_ktilde(&nu, problem)
}

/// The contraction certificate: the factor evaluated exactly as the bound
/// is written, with the `|d_hi - 2 d_lo|` division folded into the
/// integrand and replaced by its analytic limit when the denominator
/// degenerates.
#[derive(Debug, Clone, Serialize)]
pub struct ContractionCertificate {
    pub factor: f64,
    pub prefactor: f64,
    /// `∫ H(y)/|d_hi - 2 d_lo| dy` by midpoint rule.
    pub h_integral: f64,
    pub h_table: Vec<(f64, f64)>,
    pub contraction: bool,
    /// Bounds straddle zero; the factor uses absolute values as written.
    pub sign_flag: bool,
}

pub fn contraction_factor(problem: &FixedPointProblem) -> Result<ContractionCertificate> {
    let (d_lo, d_hi) = (problem.d_lo, problem.d_hi);
    if d_lo.abs() < 1e-12 || d_hi.abs() < 1e-12 {
        return Err(Error::Validation(format!(
            "degenerate cost bounds d_lo = {d_lo:.3e}, d_hi = {d_hi:.3e}: the contraction bound divides by them"
        )));
    }
    let [y_lo, y_hi] = problem.interval;
    let span = y_hi - y_lo;
    let q = d_hi - 2.0 * d_lo;
    let pref = 2.0 * problem.a_max * d_hi.abs().powi(3) * (1.0 - (-d_lo * span).exp()).powi(2)
        / (problem.b_min
            * problem.c_level
            * d_lo
            * d_lo
            * (1.0 - (-d_hi * span).exp()).powi(2));
    let pref = pref.abs();
    let h = problem.spacing();
    let mut integral = 0.0;
    let mut h_table = Vec::with_capacity(problem.y_grid.len());
    for &y in &problem.y_grid {
        let t = y - y_lo;
        let (b1, b2) = if q.abs() < 1e-8 {
            // lim |e^{qt} - 1| / |q| = t
            (
                t / (1.0 - (-d_hi * t).exp()).abs(),
                (span - t) / ((-d_hi * t).exp() - (-d_hi * span).exp()).abs(),
            )
        } else {
            (
                ((q * t).exp() - 1.0).abs() / (q.abs() * (1.0 - (-d_hi * t).exp()).abs()),
                ((q * span).exp() - (q * t).exp()).abs()
                    / (q.abs() * ((-d_hi * t).exp() - (-d_hi * span).exp()).abs()),
            )
        };
        let integrand = b1.max(b2);
        h_table.push((y, integrand * q.abs()));
        integral += integrand * h;
    }
    let factor = pref * integral;
    Ok(ContractionCertificate {
        factor,
        prefactor: pref,
        h_integral: integral,
        h_table,
        contraction: factor < 1.0,
        sign_flag: problem.sign_flag,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationStep {
    pub iter: usize,
    /// `||k_{n+1} - k_n||_{L¹}`.
    pub step_l1: f64,
    /// `step_n / step_{n-1}`.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationTrace {
    pub steps: Vec<IterationStep>,
    pub k_fixed: SplitFunction,
    pub converged: bool,
    /// Max deviation of `v(y) + log ν̄(y)` from its median, with `v` the
    /// mass-splitting potential of the final density (the equilibrium
    /// first-order condition demands a constant).
    pub residual: f64,
    pub degenerate_splits: usize,
}

/// Iterates `k ← F[k]` until the `L¹` step drops below `tol` or `max_iter`
/// is hit (non-convergence is flagged on the trace, not an error).
pub fn iterate(
    problem: &FixedPointProblem,
    k0: &SplitFunction,
    tol: f64,
    max_iter: usize,
) -> Result<IterationTrace> {
    if k0.len() != problem.y_grid.len() {
        return Err(Error::Validation(format!(
            "start lives on {} grid points, problem uses {}",
            k0.len(),
            problem.y_grid.len()
        )));
    }
    let mut k = k0.clone();
    let mut steps: Vec<IterationStep> = Vec::new();
    let mut degenerate_total = 0usize;
    let mut converged = false;
    for iter in 0..max_iter {
        let (next, degen) = apply_f(&k, problem)?;
        degenerate_total += degen;
        let step = next.l1_distance(&k)?;
        let ratio = steps.last().and_then(|prev| {
            if prev.step_l1 > 0.0 {
                Some(step / prev.step_l1)
            } else {
                None
            }
        });
        steps.push(IterationStep { iter, step_l1: step, ratio });
        k = next;
        if step < tol {
            converged = true;
            break;
        }
    }
    let residual = first_order_residual(problem, &k)?;
    Ok(IterationTrace { steps, k_fixed: k, converged, residual, degenerate_splits: degenerate_total })
}

/// `max_y |v(y) + log ν̄_k(y) - median|` where `v` is the antiderivative of
/// the mass-splitting response `F[k]` against `ν_k` (with `v` the potential
/// of `ν_k` itself the expression is constant by construction, so the
/// response potential is the meaningful residual).
pub fn first_order_residual(problem: &FixedPointProblem, k: &SplitFunction) -> Result<f64> {
    let nu = k_to_density(k)?;
    let (k_tilde, _) = nu_to_ktilde(&nu, problem)?;
    let v = k_tilde.antiderivative();
    let mut r: Vec<f64> = v
        .iter()
        .zip(nu.density())
        .map(|(&vi, &rho)| vi + rho.ln())
        .collect();
    let mut sorted = r.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    for ri in &mut r {
        *ri = (*ri - median).abs();
    }
    Ok(r.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionNestedness {
    pub report: NestednessReport,
    /// `(y₀, margin)` rows of the sufficient condition (negative margin ⇒
    /// the condition holds at `y₀`).
    pub margins: Vec<(f64, f64)>,
    pub all_margins_negative: bool,
    pub m_c: f64,
}

/// Verifies the nestedness hypothesis at the computed fixed point: the
/// direct inclusion check plus the sufficient-condition margin per `y₀`.
pub fn nestedness_at_solution(
    problem: &FixedPointProblem,
    k_fixed: &SplitFunction,
    margin_grid: usize,
) -> Result<SolutionNestedness> {
    let nu = k_to_density(k_fixed)?;
    // Subsample the y grid for the pairwise checks.
    let stride = (problem.y_grid.len() / margin_grid.max(2)).max(1);
    let y_grid: Vec<f64> = problem.y_grid.iter().copied().step_by(stride).collect();
    let mut report = nestedness_check(&problem.mu, &nu, &problem.cost, &y_grid)?;
    let m_c = lipschitz_in_y(&problem.mu, &problem.cost, &y_grid)?;
    let mut margins = Vec::with_capacity(y_grid.len().saturating_sub(1));
    for &y0 in y_grid.iter().take(y_grid.len() - 1) {
        let margin = suff_condition_margin(&problem.mu, &nu, &problem.cost, y0, &y_grid, m_c)?;
        margins.push((y0, margin));
    }
    let all_margins_negative = margins.iter().all(|&(_, m)| m < 0.0);
    report.margins = Some(margins.clone());
    Ok(SolutionNestedness { report, margins, all_margins_negative, m_c })
}

/// Estimates the level-curve constant `C` as the worst ratio of the slab
/// area estimate to the smaller side mass over a `(y, k)` sample. Sensitive
/// to the slab width; the paper example supplies `C` exactly instead.
pub fn estimate_level_curve_constant(
    problem: &FixedPointProblem,
    k_samples: usize,
    slab_width: f64,
) -> Result<f64> {
    let mut c_est = f64::INFINITY;
    let stride = (problem.y_grid.len() / 16).max(1);
    for (pi, &y) in problem.y_grid.iter().enumerate().step_by(stride) {
        let profile = &problem.profiles[pi];
        for s in 1..k_samples {
            let k = problem.d_lo + (problem.d_hi - problem.d_lo) * s as f64 / k_samples as f64;
            let h_est = crate::unequal::level_set_h_estimate(&problem.mu, &problem.cost, y, k, slab_width)?;
            let m_super = profile.superlevel_mass(k);
            let m_sub = 1.0 - m_super;
            let denom = m_super.min(m_sub);
            if denom > 1e-6 {
                c_est = c_est.min(h_est / denom);
            }
        }
    }
    if !c_est.is_finite() {
        return Err(Error::Solver("no usable (y, k) samples for the level-curve constant".into()));
    }
    Ok(c_est)
}
