//! Generalized geodesics `μ_t = ((1-t)e₀ + te₁)#γ`, verification of the
//! geodesic property along them, and convexity scans of the classical
//! functionals (distance to the reference, potential, interaction, internal
//! energy).

use crate::cost::CostSpec;
use crate::measures::{DiscreteMeasure, TriCoupling};
use crate::numetric::w_nu_auto;
use crate::ot::{is_unique_plan, solve_ot, Uniqueness};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// A geodesic sampled on a `t`-grid: the pushforward measures of the
/// `(x₀, x₁)` masses of a fixed three-marginal coupling.
#[derive(Debug, Clone)]
pub struct GeodesicCurve {
    ts: Vec<f64>,
    measures: Vec<DiscreteMeasure>,
    endpoints: (DiscreteMeasure, DiscreteMeasure),
}

impl GeodesicCurve {
    pub fn ts(&self) -> &[f64] {
        &self.ts
    }

    pub fn measures(&self) -> &[DiscreteMeasure] {
        &self.measures
    }

    pub fn at(&self, idx: usize) -> &DiscreteMeasure {
        &self.measures[idx]
    }

    pub fn mu0(&self) -> &DiscreteMeasure {
        &self.endpoints.0
    }

    pub fn mu1(&self) -> &DiscreteMeasure {
        &self.endpoints.1
    }
}

/// Uniform grid of `n >= 2` values covering `[0, 1]`.
pub fn uniform_t_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// Builds the curve: atoms `(1-t)x₀ + tx₁` carrying the `(x₀,x₁)` masses of
/// `γ`; coincident atoms (within 1e-12 per coordinate) are merged.
pub fn geodesic(gamma: &TriCoupling, ts: &[f64]) -> Result<GeodesicCurve> {
    if ts.is_empty() || ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("t grid must be non-empty and strictly increasing".into()));
    }
    if ts[0].abs() > 1e-15 || (ts[ts.len() - 1] - 1.0).abs() > 1e-15 {
        return Err(Error::Validation("t grid must include 0 and 1".into()));
    }
    if ts.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
        return Err(Error::Validation("t grid must lie in [0, 1]".into()));
    }
    let pair = gamma.project_x0x1()?;
    let mu0 = gamma.mu0();
    let mu1 = gamma.mu1();
    let mut measures = Vec::with_capacity(ts.len());
    for &t in ts {
        let mut merged: std::collections::BTreeMap<Vec<i64>, (Vec<f64>, f64)> = std::collections::BTreeMap::new();
        for &(i, j, m) in pair.entries() {
            let p: Vec<f64> = mu0
                .point(i)
                .iter()
                .zip(mu1.point(j))
                .map(|(a, b)| (1.0 - t) * a + t * b)
                .collect();
            let key: Vec<i64> = p.iter().map(|&c| (c * 1e12).round() as i64).collect();
            let slot = merged.entry(key).or_insert_with(|| (p.clone(), 0.0));
            slot.1 += m;
        }
        let (points, weights): (Vec<Vec<f64>>, Vec<f64>) = merged.into_values().unzip();
        measures.push(DiscreteMeasure::new(points, weights)?);
    }
    Ok(GeodesicCurve {
        ts: ts.to_vec(),
        measures,
        endpoints: (mu0.clone(), mu1.clone()),
    })
}

/// One `(s, t)` row of the geodesic-property check.
#[derive(Debug, Clone, Serialize)]
pub struct GeodesicPair {
    pub s: f64,
    pub t: f64,
    pub w_st: f64,
    pub expected: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeodesicReport {
    pub w01: f64,
    pub pairs: Vec<GeodesicPair>,
    pub max_error: f64,
    pub pass: bool,
    /// Plan-uniqueness verdict of `Π_opt(ν, μ_t)` per grid point (the
    /// metric-property caveat of the underlying theory).
    pub per_t_uniqueness: Vec<Uniqueness>,
}

/// Verifies `W_ν(μ_s, μ_t) = |t-s| · W_ν(μ₀, μ₁)` over all grid pairs.
/// PASS when the max deviation is below `1e-6 · W_ν(μ₀,μ₁) + 1e-9`.
pub fn geodesic_check(
    curve: &GeodesicCurve,
    nu: &DiscreteMeasure,
    c: &CostSpec,
) -> Result<GeodesicReport> {
    let n = curve.ts.len();
    let w01 = w_nu_auto(&curve.measures[0], &curve.measures[n - 1], nu, c)?.value;
    let mut pairs = Vec::new();
    let mut max_error: f64 = 0.0;
    for a in 0..n {
        for b in (a + 1)..n {
            let (s, t) = (curve.ts[a], curve.ts[b]);
            let w_st = if a == 0 && b == n - 1 {
                w01
            } else {
                w_nu_auto(&curve.measures[a], &curve.measures[b], nu, c)?.value
            };
            let expected = (t - s) * w01;
            let error = (w_st - expected).abs();
            max_error = max_error.max(error);
            pairs.push(GeodesicPair { s, t, w_st, expected, error });
        }
    }
    let per_t_uniqueness = curve
        .measures
        .iter()
        .map(|mu| Ok(is_unique_plan(&solve_ot(mu, nu, c)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(GeodesicReport {
        w01,
        max_error,
        pass: max_error < 1e-6 * w01 + 1e-9,
        pairs,
        per_t_uniqueness,
    })
}

/// Pointwise scalar functions usable as potential or interaction kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fn", rename_all = "kebab-case")]
pub enum PointFn {
    /// `|x|²`.
    SqNorm,
    /// `-|x|²` (a deliberately non-convex kernel for negative tests).
    NegSqNorm,
    /// `|x|`.
    Norm,
    /// One coordinate.
    Coordinate { axis: usize },
}

impl PointFn {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            PointFn::SqNorm => x.iter().map(|c| c * c).sum(),
            PointFn::NegSqNorm => -x.iter().map(|c| c * c).sum::<f64>(),
            PointFn::Norm => x.iter().map(|c| c * c).sum::<f64>().sqrt(),
            PointFn::Coordinate { axis } => x[*axis],
        }
    }
}

/// Density integrands for the internal energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fn", rename_all = "kebab-case")]
pub enum DensityFn {
    /// `r log r`, extended by 0 at 0.
    RLogR,
    /// `r^q` for `q > 1`, extended by 0 at 0.
    Power { q: f64 },
}

impl DensityFn {
    pub fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self {
            DensityFn::RLogR => r * r.ln(),
            DensityFn::Power { q } => r.powf(*q),
        }
    }
}

/// Histogram geometry for density estimation on atom clouds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramGrid {
    pub ranges: Vec<[f64; 2]>,
    pub cells: Vec<usize>,
}

impl HistogramGrid {
    pub fn cell_volume(&self) -> f64 {
        self.ranges
            .iter()
            .zip(&self.cells)
            .map(|(r, &n)| (r[1] - r[0]) / n as f64)
            .product()
    }

    pub fn max_cell_width(&self) -> f64 {
        self.ranges
            .iter()
            .zip(&self.cells)
            .map(|(r, &n)| (r[1] - r[0]) / n as f64)
            .fold(0.0, f64::max)
    }

    fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0usize;
        for ax in 0..self.ranges.len() {
            let [lo, hi] = self.ranges[ax];
            if x[ax] < lo || x[ax] > hi {
                return None;
            }
            let n = self.cells[ax];
            let h = (hi - lo) / n as f64;
            let i = (((x[ax] - lo) / h).floor() as usize).min(n - 1);
            idx = idx * n + i;
        }
        Some(idx)
    }

    /// Histogram densities (mass / cell volume); atoms outside the grid are
    /// an error.
    pub fn densities(&self, mu: &DiscreteMeasure) -> Result<Vec<f64>> {
        let n: usize = self.cells.iter().product();
        let vol = self.cell_volume();
        let mut rho = vec![0.0; n];
        for (p, &w) in mu.points().iter().zip(mu.weights()) {
            let Some(i) = self.cell_of(p) else {
                return Err(Error::Validation(format!("atom {p:?} falls outside the histogram grid")));
            };
            rho[i] += w / vol;
        }
        Ok(rho)
    }
}

/// The four functional kinds scanned for geodesic convexity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FunctionalSpec {
    /// `μ ↦ W₂²(μ, ν)` (transport cost to the reference under the given
    /// cost).
    WassToNu,
    /// `μ ↦ ∫ V dμ`.
    Potential { v: PointFn },
    /// `μ ↦ ∬ W(x - z) dμ(x) dμ(z)`.
    Interaction { w: PointFn },
    /// `μ ↦ ∫ U(ρ̂)` with `ρ̂` a histogram density estimate.
    Internal { u: DensityFn, grid: HistogramGrid },
}

/// Evaluates a functional at one measure. `nu`/`c` are required for the
/// `WassToNu` kind only.
pub fn evaluate_functional(
    f: &FunctionalSpec,
    mu: &DiscreteMeasure,
    nu: Option<&DiscreteMeasure>,
    c: Option<&CostSpec>,
) -> Result<f64> {
    match f {
        FunctionalSpec::WassToNu => {
            let (nu, c) = match (nu, c) {
                (Some(nu), Some(c)) => (nu, c),
                _ => return Err(Error::Validation("wass-to-nu needs a reference measure and a cost".into())),
            };
            Ok(solve_ot(mu, nu, c)?.value)
        }
        FunctionalSpec::Potential { v } => {
            Ok(mu.points().iter().zip(mu.weights()).map(|(p, &w)| w * v.eval(p)).sum())
        }
        FunctionalSpec::Interaction { w } => {
            let mut total = 0.0;
            for (pi, &wi) in mu.points().iter().zip(mu.weights()) {
                for (pj, &wj) in mu.points().iter().zip(mu.weights()) {
                    let z: Vec<f64> = pi.iter().zip(pj).map(|(a, b)| a - b).collect();
                    total += wi * wj * w.eval(&z);
                }
            }
            Ok(total)
        }
        FunctionalSpec::Internal { u, grid } => {
            let rho = grid.densities(mu)?;
            let vol = grid.cell_volume();
            Ok(rho.iter().map(|&r| u.eval(r) * vol).sum())
        }
    }
}

/// Declared constant in the `O(h)` discretization allowance of the internal
/// energy scan.
pub const INTERNAL_ALLOWANCE_CONST: f64 = 2.0;

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityReport {
    /// `(t, f(μ_t))` along the curve.
    pub values: Vec<(f64, f64)>,
    /// Centered second differences at interior grid points.
    pub second_differences: Vec<f64>,
    pub min_second_difference: f64,
    /// Tolerance used: `1e-6 · |f|_max + allowance`.
    pub tol: f64,
    /// Histogram allowance (`C · h_grid`, internal kind only).
    pub allowance: f64,
    pub pass_convex: bool,
    /// For the distance-to-reference kind: max violation of the strengthened
    /// inequality `f(μ_t) <= (1-t)f(μ₀) + tf(μ₁) - t(1-t)W_ν²(μ₀,μ₁)`,
    /// and its verdict.
    pub one_convexity_violation: Option<f64>,
    pub pass_one_convex: Option<bool>,
}

/// Scans `t ↦ f(μ_t)` for convexity by second differences on a uniform grid
/// of at least 9 points; the distance-to-reference kind additionally checks
/// the strengthened (1-convexity) chord bound.
pub fn convexity_scan(
    f: &FunctionalSpec,
    curve: &GeodesicCurve,
    nu: Option<&DiscreteMeasure>,
    c: Option<&CostSpec>,
) -> Result<ConvexityReport> {
    let ts = curve.ts();
    if ts.len() < 9 {
        return Err(Error::Validation(format!("convexity scan needs >= 9 grid points, got {}", ts.len())));
    }
    let h = ts[1] - ts[0];
    if ts.windows(2).any(|w| (w[1] - w[0] - h).abs() > 1e-12) {
        return Err(Error::Validation("convexity scan needs a uniform t grid".into()));
    }
    let values: Vec<(f64, f64)> = ts
        .iter()
        .zip(curve.measures())
        .map(|(&t, mu)| Ok((t, evaluate_functional(f, mu, nu, c)?)))
        .collect::<Result<Vec<_>>>()?;
    let second_differences: Vec<f64> = (1..values.len() - 1)
        .map(|i| values[i + 1].1 - 2.0 * values[i].1 + values[i - 1].1)
        .collect();
    let min_second_difference = second_differences.iter().copied().fold(f64::INFINITY, f64::min);
    let f_max = values.iter().map(|&(_, v)| v.abs()).fold(0.0, f64::max);
    let allowance = match f {
        FunctionalSpec::Internal { grid, .. } => INTERNAL_ALLOWANCE_CONST * grid.max_cell_width(),
        _ => 0.0,
    };
    let tol = 1e-6 * f_max + allowance;
    let pass_convex = min_second_difference >= -tol;

    let (mut one_violation, mut pass_one) = (None, None);
    if matches!(f, FunctionalSpec::WassToNu) {
        let (nu_m, cost) = match (nu, c) {
            (Some(nu), Some(c)) => (nu, c),
            _ => return Err(Error::Validation("wass-to-nu needs a reference measure and a cost".into())),
        };
        let w01 = w_nu_auto(curve.mu0(), curve.mu1(), nu_m, cost)?.value;
        let f0 = values.first().unwrap().1;
        let f1 = values.last().unwrap().1;
        let mut worst: f64 = f64::NEG_INFINITY;
        for &(t, ft) in &values {
            let chord = (1.0 - t) * f0 + t * f1 - t * (1.0 - t) * w01 * w01;
            worst = worst.max(ft - chord);
        }
        one_violation = Some(worst);
        pass_one = Some(worst <= 1e-6 * f_max + 1e-9);
    }
    Ok(ConvexityReport {
        values,
        second_differences,
        min_second_difference,
        tol,
        allowance,
        pass_convex,
        one_convexity_violation: one_violation,
        pass_one_convex: pass_one,
    })
}
