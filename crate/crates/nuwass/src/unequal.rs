//! Unequal-dimensional transport onto a 1-D target: super/sub level sets of
//! `∂c/∂y`, the population-balancing split `k(y)`, nestedness verification,
//! the sufficient nestedness condition, conditional densities on level
//! lines, and the dual metric comparing split functions in `L^p`.
//!
//! All set measures are midpoint-rule sums over grid cells; no isosurface
//! geometry is extracted. Level-set areas are estimated from slab masses via
//! the co-area formula, which makes them sensitive to the slab width (the
//! width is an explicit argument everywhere).

use crate::cost::CostSpec;
use crate::measures::{GridMeasure, SplitFunction};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

/// Mass slack for grid-cell inclusion tests.
const INCLUSION_SLACK: f64 = 1e-12;

/// `∂c/∂y` over all cells of `mu` at a fixed `y`, with cached cell masses.
pub struct CyProfile {
    /// Per-cell `c_y` in cell order.
    pub values: Vec<f64>,
    /// Cell masses in cell order.
    pub masses: Vec<f64>,
    /// `(c_y, mass)` sorted ascending by `c_y`.
    sorted: Vec<(f64, f64)>,
    /// `suffix[i]` = total mass of sorted entries `i..`.
    suffix: Vec<f64>,
}

impl CyProfile {
    pub fn new(mu: &GridMeasure, c: &CostSpec, y: f64) -> Result<Self> {
        let vol = mu.cell_volume();
        let n = mu.n_cells();
        let cy = c.c_y_fn(y)?;
        let mut values = Vec::with_capacity(n);
        let mut masses = Vec::with_capacity(n);
        for idx in 0..n {
            let x = mu.cell_midpoint(idx);
            values.push(cy(&x));
            masses.push(mu.density()[idx] * vol);
        }
        let mut sorted: Vec<(f64, f64)> = values.iter().copied().zip(masses.iter().copied()).collect();
        sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut suffix = vec![0.0; sorted.len() + 1];
        for i in (0..sorted.len()).rev() {
            suffix[i] = suffix[i + 1] + sorted[i].1;
        }
        Ok(CyProfile { values, masses, sorted, suffix })
    }

    /// `μ(X_≥(y, k))`: mass of cells with `c_y >= k`.
    pub fn superlevel_mass(&self, k: f64) -> f64 {
        let idx = self.sorted.partition_point(|&(v, _)| v < k);
        self.suffix[idx]
    }

    pub fn min_value(&self) -> f64 {
        self.sorted.first().map_or(0.0, |&(v, _)| v)
    }

    pub fn max_value(&self) -> f64 {
        self.sorted.last().map_or(0.0, |&(v, _)| v)
    }

    /// Solves `μ(X_≥(y,k)) = target` (monotone in `k`). Returns the interval
    /// midpoint and a degeneracy flag when a flat spot spans the target.
    pub fn split(&self, target: f64) -> (f64, bool) {
        let total = self.suffix[0];
        if target <= INCLUSION_SLACK {
            return (self.max_value(), false);
        }
        if target >= total - INCLUSION_SLACK {
            return (self.min_value(), false);
        }
        // sup{k : mass(k) >= target} and sup{k : mass(k) > target}: the
        // solution set of mass = target lies between them.
        let hi = self.sup_k(|m| m >= target - 1e-14);
        let lo = self.sup_k(|m| m > target + 1e-14);
        if hi - lo > 2e-10 {
            (0.5 * (lo + hi), true)
        } else {
            (hi, false)
        }
    }

    /// Bisection for `sup{k : pred(mass(k))}` over the value range, matching
    /// the documented |Δk| < 1e-10 bisection semantics.
    fn sup_k(&self, pred: impl Fn(f64) -> bool) -> f64 {
        let mut lo = self.min_value() - 1.0;
        let mut hi = self.max_value() + 1.0;
        debug_assert!(pred(self.superlevel_mass(lo)));
        for _ in 0..80 {
            if hi - lo < 1e-10 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if pred(self.superlevel_mass(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Midpoint-rule mass of the superlevel set `{x : ∂c/∂y(x, y) >= k}`.
pub fn superlevel_mass(mu: &GridMeasure, c: &CostSpec, y: f64, k: f64) -> Result<f64> {
    Ok(CyProfile::new(mu, c, y)?.superlevel_mass(k))
}

/// Cached level-set quantities at one `(y, k)` pair.
#[derive(Debug, Clone, Serialize)]
pub struct LevelSetQuery {
    pub y: f64,
    pub k: f64,
    /// `μ(X_≥(y,k))`.
    pub mass_super: f64,
    /// `μ(X_≤(y,k))`.
    pub mass_sub: f64,
    /// Slab estimate of `H^{m-1}(X_1(y,k))` and the width it used.
    pub h_estimate: f64,
    pub slab_width: f64,
}

/// Builds a [`LevelSetQuery`]; the level-set area is estimated by
/// `(Lebesgue volume of the k-slab) / (slab width · mean |D_x c_y|)`.
pub fn level_set_query(
    mu: &GridMeasure,
    c: &CostSpec,
    y: f64,
    k: f64,
    slab_width: f64,
) -> Result<LevelSetQuery> {
    let profile = CyProfile::new(mu, c, y)?;
    let mass_super = profile.superlevel_mass(k);
    let total = profile.suffix[0];
    // X_≤ includes the level set itself, so the two overlap there.
    let mass_strict_above = {
        let idx = profile.sorted.partition_point(|&(v, _)| v <= k);
        profile.suffix[idx]
    };
    let mass_sub = total - mass_strict_above;
    let h_estimate = level_set_h_estimate(mu, c, y, k, slab_width)?;
    Ok(LevelSetQuery { y, k, mass_super, mass_sub, h_estimate, slab_width })
}

/// Co-area slab estimate of the level-set area `H^{m-1}(X_1(y,k))`.
pub fn level_set_h_estimate(
    mu: &GridMeasure,
    c: &CostSpec,
    y: f64,
    k: f64,
    slab_width: f64,
) -> Result<f64> {
    if !(slab_width > 0.0) {
        return Err(Error::Validation(format!("slab width must be positive, got {slab_width}")));
    }
    let vol = mu.cell_volume();
    let mut slab_volume = 0.0;
    let mut grad_sum = 0.0;
    let mut count = 0usize;
    for idx in 0..mu.n_cells() {
        let x = mu.cell_midpoint(idx);
        let v = c.c_y(&x, y)?;
        if (v - k).abs() <= 0.5 * slab_width {
            slab_volume += vol;
            let g = c.grad_x_c_y(&x, y)?;
            grad_sum += g.iter().map(|t| t * t).sum::<f64>().sqrt();
            count += 1;
        }
    }
    if count == 0 {
        return Ok(0.0);
    }
    let mean_grad = grad_sum / count as f64;
    if mean_grad <= 0.0 {
        return Ok(0.0);
    }
    Ok(slab_volume / (slab_width * mean_grad))
}

/// Result of the population-balancing split at one `y`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MassSplit {
    pub k: f64,
    /// A flat spot of `k ↦ μ(X_≥)` spanned the target mass.
    pub degenerate: bool,
}

/// Finds `k(y)` with `μ(X_≥(y, k)) = ν((y_lo, y))` by bisection.
pub fn mass_split(mu: &GridMeasure, nu: &GridMeasure, c: &CostSpec, y: f64) -> Result<MassSplit> {
    if nu.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: nu.dim() });
    }
    let target = nu.cdf_1d(y)?;
    let profile = CyProfile::new(mu, c, y)?;
    let (k, degenerate) = profile.split(target);
    Ok(MassSplit { k, degenerate })
}

/// A nestedness violation witness.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub y: f64,
    pub y_prime: f64,
    /// Midpoint of a positive-mass cell in `X_≥(y,k(y)) \ X_≥(y',k(y'))`.
    pub witness: Vec<f64>,
    /// Total violating mass for the pair.
    pub mass: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NestednessReport {
    pub k: SplitFunction,
    pub nested: bool,
    pub violations: Vec<Violation>,
    /// Number of degenerate (flat-spot) splits along the grid.
    pub degenerate_splits: usize,
    /// Sufficient-condition margins `(y₀, margin)` when requested.
    pub margins: Option<Vec<(f64, f64)>>,
}

/// Checks monotone inclusion of the balanced superlevel sets over every
/// grid pair `y < y'` (all pairs, not only adjacent ones: inclusion is not
/// assumed transitive on a grid).
pub fn nestedness_check(
    mu: &GridMeasure,
    nu: &GridMeasure,
    c: &CostSpec,
    y_grid: &[f64],
) -> Result<NestednessReport> {
    if nu.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: nu.dim() });
    }
    if y_grid.len() < 2 || y_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("y grid must be sorted with at least two points".into()));
    }
    let profiles: Vec<CyProfile> = y_grid
        .par_iter()
        .map(|&y| CyProfile::new(mu, c, y))
        .collect::<Result<Vec<_>>>()?;
    let mut ks = Vec::with_capacity(y_grid.len());
    let mut degenerate_splits = 0usize;
    for (profile, &y) in profiles.iter().zip(y_grid) {
        let target = nu.cdf_1d(y)?;
        let (k, degen) = profile.split(target);
        if degen {
            degenerate_splits += 1;
        }
        ks.push(k);
    }
    // Membership masks per y over all cells.
    let n_cells = mu.n_cells();
    let blocks = n_cells.div_ceil(64);
    let masks: Vec<Vec<u64>> = profiles
        .par_iter()
        .zip(&ks)
        .map(|(profile, &k)| {
            let mut mask = vec![0u64; blocks];
            for (idx, &v) in profile.values.iter().enumerate() {
                if v >= k {
                    mask[idx / 64] |= 1u64 << (idx % 64);
                }
            }
            mask
        })
        .collect();
    let masses = &profiles[0].masses;
    let mut violations = Vec::new();
    for a in 0..y_grid.len() {
        for b in (a + 1)..y_grid.len() {
            let mut total = 0.0;
            let mut witness: Option<usize> = None;
            for blk in 0..blocks {
                let mut bits = masks[a][blk] & !masks[b][blk];
                while bits != 0 {
                    let bit = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    let idx = blk * 64 + bit;
                    let m = masses[idx];
                    if m > 0.0 {
                        total += m;
                        if witness.is_none() {
                            witness = Some(idx);
                        }
                    }
                }
            }
            if total > INCLUSION_SLACK {
                violations.push(Violation {
                    y: y_grid[a],
                    y_prime: y_grid[b],
                    witness: mu.cell_midpoint(witness.expect("violating cell")),
                    mass: total,
                });
            }
        }
    }
    let [y_lo, y_hi] = nu.ranges()[0];
    let d_lo = profiles.iter().map(|p| p.min_value()).fold(f64::INFINITY, f64::min);
    let d_hi = profiles.iter().map(|p| p.max_value()).fold(f64::NEG_INFINITY, f64::max);
    let k = SplitFunction::new([y_lo, y_hi], y_grid.to_vec(), ks, [d_lo, d_hi])?;
    Ok(NestednessReport {
        k,
        nested: violations.is_empty(),
        violations,
        degenerate_splits,
        margins: None,
    })
}

/// Lipschitz constant of the cost in `y`, estimated as `max |∂c/∂y|` over
/// the grid sample.
pub fn lipschitz_in_y(mu: &GridMeasure, c: &CostSpec, y_grid: &[f64]) -> Result<f64> {
    let mut m_c = 0.0_f64;
    for &y in y_grid {
        let profile = CyProfile::new(mu, c, y)?;
        m_c = m_c.max(profile.max_value().abs()).max(profile.min_value().abs());
    }
    Ok(m_c)
}

/// Sufficient-condition margin at `y₀`: negative means the condition holds
/// there. The inner sup over `y ∈ [y₀, y₁]` is attained at `y = y₁` because
/// the subtracted exponential term decreases in `y`.
pub fn suff_condition_margin(
    mu: &GridMeasure,
    nu: &GridMeasure,
    c: &CostSpec,
    y0: f64,
    y_grid: &[f64],
    m_c: f64,
) -> Result<f64> {
    let [y_lo, y_hi] = nu.ranges()[0];
    let split = mass_split(mu, nu, c, y0)?;
    let profile0 = CyProfile::new(mu, c, y0)?;
    let k0 = split.k;
    // Cells of X_≥(y0, k0) with their masses.
    let base: Vec<usize> = profile0
        .values
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v >= k0)
        .map(|(idx, _)| idx)
        .collect();
    if base.is_empty() {
        return Ok(f64::NEG_INFINITY);
    }
    let mut margin = f64::NEG_INFINITY;
    for &y1 in y_grid.iter().filter(|&&y1| y1 > y0) {
        let profile1 = CyProfile::new(mu, c, y1)?;
        // k_max = sup{k : X_≥(y0,k0) ⊆ X_≥(y1,k)} with a 1e-12 mass slack:
        // the smallest c_y(·, y1) over the base cells carrying mass.
        let mut vals: Vec<(f64, f64)> = base
            .iter()
            .map(|&idx| (profile1.values[idx], profile1.masses[idx]))
            .collect();
        vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut acc = 0.0;
        let mut k_max = f64::INFINITY;
        for &(v, m) in &vals {
            acc += m;
            if acc > INCLUSION_SLACK {
                k_max = v;
                break;
            }
        }
        if !k_max.is_finite() {
            return Ok(f64::INFINITY);
        }
        // D_min = μ(X_≥(y1, k_max) \ X_≥(y0, k0)).
        let in_base: std::collections::HashSet<usize> = base.iter().copied().collect();
        let mut d_min = 0.0;
        for (idx, &v) in profile1.values.iter().enumerate() {
            if v >= k_max && !in_base.contains(&idx) {
                d_min += profile1.masses[idx];
            }
        }
        let exp_term = if m_c.abs() < 1e-12 {
            1.0 / (y_hi - y_lo)
        } else {
            m_c * (-m_c * y1).exp() / ((m_c * y_hi).exp() - (m_c * y_lo).exp())
        };
        let term = d_min / (y1 - y0) - exp_term - 1.0;
        margin = margin.max(term);
    }
    Ok(margin)
}

/// Conditional density `μ̄(x) / (ν̄(y) · JT^y(x))` on the level line
/// `X_1(y, v'(y))`, with `JT^y(x) = |f'(y)| / (-x·f''(y) - v''(y))` for the
/// dot-form embedded cost (planar source, 1-D target).
pub fn conditional_density(
    mu: &GridMeasure,
    nu: &GridMeasure,
    c: &CostSpec,
    v: &SplitFunction,
    y: f64,
    x: &[f64],
) -> Result<f64> {
    let CostSpec::Embedded { curve, form } = c else {
        return Err(Error::UnsupportedCost("conditional density needs an embedded cost".into()));
    };
    if *form != crate::cost::EmbeddedForm::Dot {
        return Err(Error::UnsupportedCost(
            "conditional density uses the -x·f(y) normalization; convert the cost to dot form".into(),
        ));
    }
    if mu.dim() != 2 || x.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: mu.dim().max(x.len()) });
    }
    let k_at = interp(v.grid(), v.values(), y);
    let v2 = {
        let d = v.second_derivative_of_antiderivative();
        interp(v.grid(), &d, y)
    };
    let df = curve.deriv(y);
    let d2f = curve.deriv2(y);
    // x must sit on X_1(y, v'(y)) up to a cell width.
    let cy = -(x[0] * df[0] + x[1] * df[1]);
    let grad: f64 = df.iter().map(|t| t * t).sum::<f64>().sqrt();
    let half_diag = 0.5 * mu.cell_widths().iter().map(|h| h * h).sum::<f64>().sqrt();
    if (cy - k_at).abs() > grad * half_diag + 1e-9 {
        return Err(Error::Validation(format!(
            "point {x:?} is off the level line at y = {y} by {:.3e} in c_y units",
            (cy - k_at).abs()
        )));
    }
    let denom = -(x[0] * d2f[0] + x[1] * d2f[1]) - v2;
    if denom <= 0.0 {
        return Err(Error::Validation(format!(
            "degenerate Jacobian at y = {y}: -x·f''(y) - v''(y) = {denom:.3e} <= 0 (v is not a valid potential here)"
        )));
    }
    let jt = grad / denom;
    let nu_bar = nu.density_at(&[y]);
    if nu_bar <= 0.0 {
        return Err(Error::Validation(format!("reference density vanishes at y = {y}")));
    }
    Ok(mu.density_at(x) / (nu_bar * jt))
}

/// Trapezoid integral of the conditional density along the level line
/// `X_1(y, v'(y))` clipped to the grid box.
pub fn conditional_line_integral(
    mu: &GridMeasure,
    nu: &GridMeasure,
    c: &CostSpec,
    v: &SplitFunction,
    y: f64,
    steps: usize,
) -> Result<f64> {
    let CostSpec::Embedded { curve, .. } = c else {
        return Err(Error::UnsupportedCost("level-line integral needs an embedded cost".into()));
    };
    let df = curve.deriv(y);
    let grad_sq: f64 = df.iter().map(|t| t * t).sum();
    let k_at = interp(v.grid(), v.values(), y);
    // Line {x : -x·f' = k}: base point plus the unit direction orthogonal
    // to f'.
    let base = [-k_at * df[0] / grad_sq, -k_at * df[1] / grad_sq];
    let norm = grad_sq.sqrt();
    let dir = [-df[1] / norm, df[0] / norm];
    let ranges = mu.ranges();
    let diag: f64 = (0..2)
        .map(|ax| ranges[ax][1] - ranges[ax][0])
        .map(|w| w * w)
        .sum::<f64>()
        .sqrt();
    let ds = 2.0 * diag / steps as f64;
    let mut integral = 0.0;
    for s in 0..=steps {
        let t = -diag + s as f64 * ds;
        let x = [base[0] + t * dir[0], base[1] + t * dir[1]];
        if mu.density_at(&x) <= 0.0 {
            continue;
        }
        let rho = match conditional_density(mu, nu, c, v, y, &x) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let w = if s == 0 || s == steps { 0.5 } else { 1.0 };
        integral += w * rho * ds;
    }
    Ok(integral)
}

#[derive(Debug, Clone, Serialize)]
pub struct DualMetricResult {
    pub value: f64,
    pub p: f64,
    /// Split functions of the two models on the shared grid.
    pub k0: SplitFunction,
    pub k1: SplitFunction,
}

/// Dual metric `||k₀ - k₁||_{L^p(dy)}` between two reference measures under
/// a fixed source `μ`. Both models must be nested (otherwise the split
/// function is not the potential derivative and the identification fails);
/// run [`nestedness_check`] to locate the violations.
pub fn dual_metric(
    nu0: &GridMeasure,
    nu1: &GridMeasure,
    mu: &GridMeasure,
    c: &CostSpec,
    p: f64,
    y_samples: usize,
) -> Result<DualMetricResult> {
    if !(p >= 1.0) {
        return Err(Error::Validation(format!("p must be in [1, ∞], got {p}")));
    }
    if nu0.dim() != 1 || nu1.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: nu0.dim().max(nu1.dim()) });
    }
    if nu0.ranges() != nu1.ranges() {
        return Err(Error::Validation("reference measures must share the interval".into()));
    }
    let [y_lo, y_hi] = nu0.ranges()[0];
    let h = (y_hi - y_lo) / y_samples as f64;
    let y_grid: Vec<f64> = (0..y_samples).map(|j| y_lo + (j as f64 + 0.5) * h).collect();
    for (tag, nu) in [("nu0", nu0), ("nu1", nu1)] {
        let report = nestedness_check(mu, nu, c, &y_grid)?;
        if !report.nested {
            return Err(Error::Validation(format!(
                "model (c, mu, {tag}) is not nested ({} violating pairs); see nestedness_check",
                report.violations.len()
            )));
        }
    }
    let rep0 = nestedness_check(mu, nu0, c, &y_grid)?;
    let rep1 = nestedness_check(mu, nu1, c, &y_grid)?;
    let diffs: Vec<f64> = rep0
        .k
        .values()
        .iter()
        .zip(rep1.k.values())
        .map(|(a, b)| (a - b).abs())
        .collect();
    let value = if p.is_infinite() {
        diffs.iter().copied().fold(0.0, f64::max)
    } else {
        (diffs.iter().map(|d| d.powf(p)).sum::<f64>() * h).powf(1.0 / p)
    };
    Ok(DualMetricResult { value, p, k0: rep0.k, k1: rep1.k })
}

/// Piecewise-linear interpolation with constant extrapolation.
fn interp(grid: &[f64], values: &[f64], y: f64) -> f64 {
    if y <= grid[0] {
        return values[0];
    }
    if y >= grid[grid.len() - 1] {
        return values[values.len() - 1];
    }
    let idx = grid.partition_point(|&g| g < y);
    let (g0, g1) = (grid[idx - 1], grid[idx]);
    let t = (y - g0) / (g1 - g0);
    values[idx - 1] * (1.0 - t) + values[idx] * t
}
