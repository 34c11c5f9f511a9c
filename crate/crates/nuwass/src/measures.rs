//! Core data model: weighted point clouds, grid densities, couplings,
//! tri-couplings, dual potentials and grid-sampled split functions.
//!
//! All types are immutable after construction; constructors validate the
//! documented invariants and return [`Error::Validation`] on violation.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Mass below which an atom is pruned on construction. Pruned mass is folded
/// back by rescaling so the total stays exactly 1.
const PRUNE_EPS: f64 = 1e-15;

/// Construction-time gate on |total mass - 1|.
const MASS_GATE: f64 = 1e-9;

/// A weighted point cloud in `R^m`: the universal measure representation for
/// the solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a probability measure from atoms. Weights must be nonnegative
    /// and sum to 1 within `1e-9`; sub-`1e-15` atoms are pruned and the rest
    /// rescaled so the total is exactly 1.
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::Validation(format!(
                "points ({}) and weights ({}) must have equal length",
                points.len(),
                weights.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::Validation("measure must have at least one atom".into()));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::Validation("points must have dimension >= 1".into()));
        }
        for (idx, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::Validation(format!("point {idx} has non-finite coordinate")));
            }
        }
        for (idx, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Validation(format!("weight {idx} is negative or non-finite ({w})")));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_GATE {
            return Err(Error::Validation(format!(
                "weights sum to {total:.17e}, off from 1 by more than {MASS_GATE:e} (use renormalization if intended)"
            )));
        }
        Self::new_unnormalized(points, weights)
    }

    /// Like [`DiscreteMeasure::new`] but accepts any positive total mass and
    /// rescales to 1.
    pub fn new_renormalized(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Validation(format!("total mass {total} must be positive")));
        }
        Self::new_unnormalized(points, weights)
    }

    fn new_unnormalized(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        for &w in &weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Validation(format!("negative or non-finite weight {w}")));
            }
        }
        let mut pts = Vec::with_capacity(points.len());
        let mut wts = Vec::with_capacity(weights.len());
        for (p, w) in points.into_iter().zip(weights) {
            if w >= PRUNE_EPS {
                pts.push(p);
                wts.push(w);
            }
        }
        if pts.is_empty() {
            return Err(Error::Validation("all atoms pruned: no mass left".into()));
        }
        let total: f64 = wts.iter().sum();
        // Rescale only when measurably off so already-normalized data
        // round-trips bit-exactly.
        if (total - 1.0).abs() > 5e-13 {
            for w in &mut wts {
                *w /= total;
            }
        }
        Ok(DiscreteMeasure { points: pts, weights: wts })
    }

    /// Dirac mass at a single point.
    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        Self::new(vec![point], vec![1.0])
    }

    /// Uniform weights over the given points.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Ambient dimension `m`.
    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weighted barycenter.
    pub fn barycenter(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.dim()];
        for (p, &w) in self.points.iter().zip(&self.weights) {
            for (bc, &pc) in b.iter_mut().zip(p) {
                *bc += w * pc;
            }
        }
        b
    }

    /// Pushforward under a translation.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: shift.len() });
        }
        let points = self
            .points
            .iter()
            .map(|p| p.iter().zip(shift).map(|(a, b)| a + b).collect())
            .collect();
        DiscreteMeasure::new(points, self.weights.clone())
    }

    /// Pushforward onto a single coordinate, producing a 1-D measure.
    /// Atoms sharing the coordinate value are *not* merged.
    pub fn marginal_1d(&self, axis: usize) -> Result<Self> {
        if axis >= self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: axis });
        }
        let points = self.points.iter().map(|p| vec![p[axis]]).collect();
        DiscreteMeasure::new(points, self.weights.clone())
    }
}

/// A density sampled on a rectangular grid. Density values are stored
/// row-major with the *last* axis fastest; quadrature is midpoint rule
/// throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeasure {
    ranges: Vec<[f64; 2]>,
    cells: Vec<usize>,
    density: Vec<f64>,
}

impl GridMeasure {
    pub fn new(ranges: Vec<[f64; 2]>, cells: Vec<usize>, density: Vec<f64>) -> Result<Self> {
        if ranges.is_empty() || ranges.len() != cells.len() {
            return Err(Error::Validation(format!(
                "ranges ({}) and cells ({}) must be non-empty and of equal length",
                ranges.len(),
                cells.len()
            )));
        }
        for r in &ranges {
            if !(r[1] > r[0]) || !r[0].is_finite() || !r[1].is_finite() {
                return Err(Error::Validation(format!("invalid axis range [{}, {}]", r[0], r[1])));
            }
        }
        if cells.iter().any(|&n| n == 0) {
            return Err(Error::Validation("cell counts must be >= 1 per axis".into()));
        }
        let n_cells: usize = cells.iter().product();
        if density.len() != n_cells {
            return Err(Error::Validation(format!(
                "density has {} entries, expected {}",
                density.len(),
                n_cells
            )));
        }
        if density.iter().any(|&d| !d.is_finite() || d < 0.0) {
            return Err(Error::Validation("densities must be finite and nonnegative".into()));
        }
        let g = GridMeasure { ranges, cells, density };
        let mass = g.total_mass();
        if (mass - 1.0).abs() > MASS_GATE {
            return Err(Error::Validation(format!(
                "grid mass is {mass:.17e}, off from 1 by more than {MASS_GATE:e} (use renormalization if intended)"
            )));
        }
        Ok(g)
    }

    /// Builds the grid and rescales the density to unit mass.
    pub fn new_renormalized(ranges: Vec<[f64; 2]>, cells: Vec<usize>, mut density: Vec<f64>) -> Result<Self> {
        let vol: f64 = ranges
            .iter()
            .zip(&cells)
            .map(|(r, &n)| (r[1] - r[0]) / n as f64)
            .product();
        let mass: f64 = density.iter().sum::<f64>() * vol;
        if !(mass > 0.0) {
            return Err(Error::Validation(format!("grid mass {mass} must be positive")));
        }
        for d in &mut density {
            *d /= mass;
        }
        Self::new(ranges, cells, density)
    }

    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn ranges(&self) -> &[[f64; 2]] {
        &self.ranges
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn n_cells(&self) -> usize {
        self.density.len()
    }

    /// Volume of one cell (all cells are congruent).
    pub fn cell_volume(&self) -> f64 {
        self.ranges
            .iter()
            .zip(&self.cells)
            .map(|(r, &n)| (r[1] - r[0]) / n as f64)
            .product()
    }

    /// Per-axis cell widths.
    pub fn cell_widths(&self) -> Vec<f64> {
        self.ranges
            .iter()
            .zip(&self.cells)
            .map(|(r, &n)| (r[1] - r[0]) / n as f64)
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.cell_volume()
    }

    /// Midpoint of the cell with flat index `idx` (row-major, last axis
    /// fastest).
    pub fn cell_midpoint(&self, idx: usize) -> Vec<f64> {
        let mut mid = vec![0.0; self.dim()];
        let mut rem = idx;
        for ax in (0..self.dim()).rev() {
            let n = self.cells[ax];
            let i = rem % n;
            rem /= n;
            let h = (self.ranges[ax][1] - self.ranges[ax][0]) / n as f64;
            mid[ax] = self.ranges[ax][0] + (i as f64 + 0.5) * h;
        }
        mid
    }

    /// Flat index of the cell containing `x`, or `None` outside the domain.
    pub fn cell_index_of(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let mut idx = 0usize;
        for ax in 0..self.dim() {
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

    /// Density of the cell containing `x` (0 outside the domain).
    pub fn density_at(&self, x: &[f64]) -> f64 {
        self.cell_index_of(x).map_or(0.0, |i| self.density[i])
    }

    /// CDF of a 1-D grid measure at `y` (midpoint-rule consistent: linear
    /// within each cell).
    pub fn cdf_1d(&self, y: f64) -> Result<f64> {
        if self.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: self.dim() });
        }
        let [lo, hi] = self.ranges[0];
        if y <= lo {
            return Ok(0.0);
        }
        if y >= hi {
            return Ok(self.total_mass());
        }
        let n = self.cells[0];
        let h = (hi - lo) / n as f64;
        let i = (((y - lo) / h).floor() as usize).min(n - 1);
        let below: f64 = self.density[..i].iter().sum::<f64>() * h;
        Ok(below + self.density[i] * (y - (lo + i as f64 * h)))
    }

    /// One atom per cell at the cell midpoint with weight `density x cell
    /// volume`. Mass is preserved within 1e-12.
    pub fn to_discrete(&self) -> Result<DiscreteMeasure> {
        let vol = self.cell_volume();
        let points: Vec<Vec<f64>> = (0..self.n_cells()).map(|i| self.cell_midpoint(i)).collect();
        let weights: Vec<f64> = self.density.iter().map(|&d| d * vol).collect();
        DiscreteMeasure::new_renormalized(points, weights)
    }
}

/// Converts a grid density into a point cloud (midpoint rule).
pub fn grid_to_discrete(g: &GridMeasure) -> Result<DiscreteMeasure> {
    g.to_discrete()
}

/// Sparse nonnegative mass on index pairs of two point clouds, with the
/// prescribed marginals embedded for self-contained validation and
/// serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Coupling {
    first: DiscreteMeasure,
    second: DiscreteMeasure,
    /// `(i, j, mass)` entries; `i` indexes `first`, `j` indexes `second`.
    entries: Vec<(usize, usize, f64)>,
    /// Transport cost of this coupling under the cost it was built with.
    cost_value: f64,
}

/// Marginal reproduction tolerance for couplings.
pub const MARGINAL_TOL: f64 = 1e-10;

impl Coupling {
    pub fn new(
        first: DiscreteMeasure,
        second: DiscreteMeasure,
        entries: Vec<(usize, usize, f64)>,
        cost_value: f64,
    ) -> Result<Self> {
        let mut row = vec![0.0; first.len()];
        let mut col = vec![0.0; second.len()];
        for &(i, j, m) in &entries {
            if i >= first.len() || j >= second.len() {
                return Err(Error::Validation(format!("coupling entry ({i},{j}) out of bounds")));
            }
            if !m.is_finite() || m < 0.0 {
                return Err(Error::Validation(format!("coupling mass {m} at ({i},{j}) invalid")));
            }
            row[i] += m;
            col[j] += m;
        }
        for (i, (&r, &w)) in row.iter().zip(first.weights()).enumerate() {
            if (r - w).abs() > MARGINAL_TOL {
                return Err(Error::Validation(format!(
                    "row sum {r:.17e} != first marginal weight {w:.17e} at {i}"
                )));
            }
        }
        for (j, (&c, &w)) in col.iter().zip(second.weights()).enumerate() {
            if (c - w).abs() > MARGINAL_TOL {
                return Err(Error::Validation(format!(
                    "column sum {c:.17e} != second marginal weight {w:.17e} at {j}"
                )));
            }
        }
        Ok(Coupling { first, second, entries, cost_value })
    }

    pub fn first(&self) -> &DiscreteMeasure {
        &self.first
    }

    pub fn second(&self) -> &DiscreteMeasure {
        &self.second
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Cached transport cost value.
    pub fn cost_value(&self) -> f64 {
        self.cost_value
    }

    /// The same coupling with the roles of the marginals swapped.
    pub fn transposed(&self) -> Coupling {
        Coupling {
            first: self.second.clone(),
            second: self.first.clone(),
            entries: self.entries.iter().map(|&(i, j, m)| (j, i, m)).collect(),
            cost_value: self.cost_value,
        }
    }

    /// Conditional probability of the second coordinate given first-atom `i`
    /// (the row normalized by its marginal weight), or `None` when the row
    /// carries no mass.
    pub fn conditional_given_first(&self, i: usize) -> Option<DiscreteMeasure> {
        let mut pts = Vec::new();
        let mut wts = Vec::new();
        for &(r, j, m) in &self.entries {
            if r == i && m > 0.0 {
                pts.push(self.second.point(j).to_vec());
                wts.push(m);
            }
        }
        if pts.is_empty() {
            return None;
        }
        DiscreteMeasure::new_renormalized(pts, wts).ok()
    }

    /// Evaluates `sum_{ij} g(x_i, y_j) mass_ij` for an arbitrary integrand.
    pub fn integrate(&self, mut g: impl FnMut(&[f64], &[f64]) -> f64) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, m)| m * g(self.first.point(i), self.second.point(j)))
            .sum()
    }
}

/// Sparse nonnegative mass on index triples `(k, i, j)` over the supports of
/// `(ν, μ₀, μ₁)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriCoupling {
    nu: DiscreteMeasure,
    mu0: DiscreteMeasure,
    mu1: DiscreteMeasure,
    /// `(k, i, j, mass)`: `k` indexes `nu`, `i` indexes `mu0`, `j` indexes `mu1`.
    entries: Vec<(usize, usize, usize, f64)>,
}

impl TriCoupling {
    pub fn new(
        nu: DiscreteMeasure,
        mu0: DiscreteMeasure,
        mu1: DiscreteMeasure,
        entries: Vec<(usize, usize, usize, f64)>,
    ) -> Result<Self> {
        let mut m_nu = vec![0.0; nu.len()];
        let mut m0 = vec![0.0; mu0.len()];
        let mut m1 = vec![0.0; mu1.len()];
        for &(k, i, j, m) in &entries {
            if k >= nu.len() || i >= mu0.len() || j >= mu1.len() {
                return Err(Error::Validation(format!("tri-coupling entry ({k},{i},{j}) out of bounds")));
            }
            if !m.is_finite() || m < 0.0 {
                return Err(Error::Validation(format!("tri-coupling mass {m} at ({k},{i},{j}) invalid")));
            }
            m_nu[k] += m;
            m0[i] += m;
            m1[j] += m;
        }
        for (tag, sums, weights) in [
            ("nu", &m_nu, nu.weights()),
            ("mu0", &m0, mu0.weights()),
            ("mu1", &m1, mu1.weights()),
        ] {
            for (idx, (&s, &w)) in sums.iter().zip(weights).enumerate() {
                if (s - w).abs() > MARGINAL_TOL {
                    return Err(Error::Validation(format!(
                        "{tag} marginal mismatch at {idx}: {s:.17e} vs {w:.17e}"
                    )));
                }
            }
        }
        Ok(TriCoupling { nu, mu0, mu1, entries })
    }

    pub fn nu(&self) -> &DiscreteMeasure {
        &self.nu
    }

    pub fn mu0(&self) -> &DiscreteMeasure {
        &self.mu0
    }

    pub fn mu1(&self) -> &DiscreteMeasure {
        &self.mu1
    }

    pub fn entries(&self) -> &[(usize, usize, usize, f64)] {
        &self.entries
    }

    /// `∫ |x₀ - x₁|² dγ` — the squared cross-distance this coupling pays.
    pub fn cross_cost(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(_, i, j, m)| m * sq_dist(self.mu0.point(i), self.mu1.point(j)))
            .sum()
    }

    /// Projection onto the `(x₀, x₁)` pair as a two-marginal coupling.
    pub fn project_x0x1(&self) -> Result<Coupling> {
        let mut acc: std::collections::BTreeMap<(usize, usize), f64> = std::collections::BTreeMap::new();
        for &(_, i, j, m) in &self.entries {
            *acc.entry((i, j)).or_insert(0.0) += m;
        }
        let entries: Vec<(usize, usize, f64)> = acc.into_iter().map(|((i, j), m)| (i, j, m)).collect();
        let cost = entries
            .iter()
            .map(|&(i, j, m)| m * sq_dist(self.mu0.point(i), self.mu1.point(j)))
            .sum();
        Coupling::new(self.mu0.clone(), self.mu1.clone(), entries, cost)
    }

    /// Projection onto `(y, x_side)`; `side` is 0 or 1.
    pub fn project_y_side(&self, side: usize) -> Result<Coupling> {
        let mut acc: std::collections::BTreeMap<(usize, usize), f64> = std::collections::BTreeMap::new();
        for &(k, i, j, m) in &self.entries {
            let s = if side == 0 { i } else { j };
            *acc.entry((k, s)).or_insert(0.0) += m;
        }
        let entries: Vec<(usize, usize, f64)> = acc.into_iter().map(|((k, s), m)| (k, s, m)).collect();
        let second = if side == 0 { self.mu0.clone() } else { self.mu1.clone() };
        let cost = entries
            .iter()
            .map(|&(k, s, m)| m * sq_dist(self.nu.point(k), second.point(s)))
            .sum();
        Coupling::new(self.nu.clone(), second, entries, cost)
    }
}

/// `k: Y -> [d_lo, d_hi]` sampled on a uniform midpoint grid over an
/// interval; the state of the fixed-point iteration and, under nestedness,
/// the derivative of the Kantorovich potential on the target side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFunction {
    interval: [f64; 2],
    grid: Vec<f64>,
    values: Vec<f64>,
    bounds: [f64; 2],
}

impl SplitFunction {
    pub fn new(interval: [f64; 2], grid: Vec<f64>, values: Vec<f64>, bounds: [f64; 2]) -> Result<Self> {
        if !(interval[1] > interval[0]) {
            return Err(Error::Validation(format!(
                "invalid interval [{}, {}]",
                interval[0], interval[1]
            )));
        }
        if grid.len() != values.len() || grid.is_empty() {
            return Err(Error::Validation("grid and values must be non-empty and of equal length".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("grid must be strictly increasing".into()));
        }
        if !(bounds[1] >= bounds[0]) {
            return Err(Error::Validation(format!("invalid bounds [{}, {}]", bounds[0], bounds[1])));
        }
        let slack = 1e-9 * (1.0 + bounds[1].abs().max(bounds[0].abs()));
        for (j, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < bounds[0] - slack || v > bounds[1] + slack {
                return Err(Error::Validation(format!(
                    "value {v} at grid point {j} outside [{}, {}]",
                    bounds[0], bounds[1]
                )));
            }
        }
        Ok(SplitFunction { interval, grid, values, bounds })
    }

    /// Constant function on a uniform midpoint grid of `n` points.
    pub fn constant(interval: [f64; 2], n: usize, value: f64, bounds: [f64; 2]) -> Result<Self> {
        let h = (interval[1] - interval[0]) / n as f64;
        let grid = (0..n).map(|j| interval[0] + (j as f64 + 0.5) * h).collect();
        Self::new(interval, grid, vec![value; n], bounds)
    }

    pub fn interval(&self) -> [f64; 2] {
        self.interval
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> [f64; 2] {
        self.bounds
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Midpoint-rule grid spacing (assumes a uniform grid).
    pub fn spacing(&self) -> f64 {
        (self.interval[1] - self.interval[0]) / self.grid.len() as f64
    }

    /// Midpoint-rule `L¹` norm of `self - other` on the shared grid.
    pub fn l1_distance(&self, other: &SplitFunction) -> Result<f64> {
        if self.grid.len() != other.grid.len() {
            return Err(Error::Validation("split functions live on different grids".into()));
        }
        let h = self.spacing();
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * h)
    }

    /// Cumulative trapezoid antiderivative `v(y_j) = ∫_{lo}^{y_j} k`,
    /// continuous piecewise-linear through the midpoint samples (constant
    /// extrapolation on the leading half-cell).
    pub fn antiderivative(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.values.len());
        let mut acc = self.values[0] * (self.grid[0] - self.interval[0]);
        v.push(acc);
        for j in 1..self.values.len() {
            acc += 0.5 * (self.values[j] + self.values[j - 1]) * (self.grid[j] - self.grid[j - 1]);
            v.push(acc);
        }
        v
    }

    /// Second derivative by central differences (one-sided at the ends).
    pub fn second_derivative_of_antiderivative(&self) -> Vec<f64> {
        // v'' = k', differentiate the samples.
        let n = self.values.len();
        let mut d = vec![0.0; n];
        if n == 1 {
            return d;
        }
        for j in 0..n {
            let (a, b) = if j == 0 {
                (j, j + 1)
            } else if j == n - 1 {
                (j - 1, j)
            } else {
                (j - 1, j + 1)
            };
            d[j] = (self.values[b] - self.values[a]) / (self.grid[b] - self.grid[a]);
        }
        d
    }
}

/// Kantorovich dual pair on the supports of the two marginals, with the
/// convention `u(x_i) + v(y_j) <= c(x_i, y_j)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Potentials {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl Potentials {
    /// Max violation of `u_i + v_j <= c_ij` over all pairs (positive means
    /// infeasible by that much).
    pub fn feasibility_violation(&self, cost: &[Vec<f64>]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (i, row) in cost.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                worst = worst.max(self.u[i] + self.v[j] - c);
            }
        }
        worst
    }

    /// Max complementary-slackness gap `c_ij - u_i - v_j` over the support of
    /// `plan`.
    pub fn slackness_gap(&self, cost: &[Vec<f64>], plan: &[(usize, usize, f64)]) -> f64 {
        plan.iter()
            .filter(|&&(_, _, m)| m > 0.0)
            .map(|&(i, j, _)| cost[i][j] - self.u[i] - self.v[j])
            .fold(0.0, f64::max)
    }

    /// Dual objective `sum a_i u_i + sum b_j v_j`.
    pub fn dual_objective(&self, a: &[f64], b: &[f64]) -> f64 {
        let ua: f64 = self.u.iter().zip(a).map(|(u, w)| u * w).sum();
        let vb: f64 = self.v.iter().zip(b).map(|(v, w)| v * w).sum();
        ua + vb
    }
}

/// Squared Euclidean distance between two points.
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_measure_basic() {
        let m = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        assert_eq!(m.dim(), 1);
        assert_eq!(m.len(), 2);
        assert!((m.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn discrete_measure_rejects_negative_weight() {
        let err = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![1.5, -0.5]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn discrete_measure_rejects_bad_mass() {
        let err = DiscreteMeasure::new(vec![vec![0.0]], vec![0.9]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        // but renormalization accepts it
        let m = DiscreteMeasure::new_renormalized(vec![vec![0.0]], vec![0.9]).unwrap();
        assert!((m.total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn discrete_measure_rejects_ragged_points() {
        let err = DiscreteMeasure::new(vec![vec![0.0], vec![1.0, 2.0]], vec![0.5, 0.5]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn tiny_atoms_pruned_and_mass_restored() {
        let m = DiscreteMeasure::new(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![0.5, 0.5 - 1e-16, 1e-16],
        )
        .unwrap();
        assert_eq!(m.len(), 2);
        assert!((m.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_measure_mass_and_midpoints() {
        // uniform 2x2 grid on [-1,1]^2: density 0.25, cell volume 1
        let g = GridMeasure::new(
            vec![[-1.0, 1.0], [-1.0, 1.0]],
            vec![2, 2],
            vec![0.25; 4],
        )
        .unwrap();
        assert!((g.total_mass() - 1.0).abs() < 1e-10);
        let d = g.to_discrete().unwrap();
        assert_eq!(d.len(), 4);
        let mut mids: Vec<Vec<f64>> = d.points().to_vec();
        mids.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(
            mids,
            vec![
                vec![-0.5, -0.5],
                vec![-0.5, 0.5],
                vec![0.5, -0.5],
                vec![0.5, 0.5]
            ]
        );
        assert!(d.weights().iter().all(|&w| (w - 0.25).abs() < 1e-12));
    }

    #[test]
    fn grid_to_discrete_single_cell() {
        let g = GridMeasure::new(vec![[0.0, 2.0]], vec![1], vec![0.5]).unwrap();
        let d = g.to_discrete().unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.point(0), &[1.0]);
        assert!((d.weight(0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_to_discrete_four_cells_unit_interval() {
        let g = GridMeasure::new(vec![[0.0, 1.0]], vec![4], vec![1.0; 4]).unwrap();
        let d = g.to_discrete().unwrap();
        let xs: Vec<f64> = d.points().iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![0.125, 0.375, 0.625, 0.875]);
        assert!(d.weights().iter().all(|&w| (w - 0.25).abs() < 1e-12));
    }

    #[test]
    fn grid_to_discrete_preserves_first_moment_within_half_cell() {
        let g = GridMeasure::new_renormalized(
            vec![[0.0, 1.0]],
            vec![8],
            (0..8).map(|i| 1.0 + i as f64).collect(),
        )
        .unwrap();
        let d = g.to_discrete().unwrap();
        // exact first moment of the piecewise-constant density
        let h = 1.0 / 8.0;
        let exact: f64 = g
            .density()
            .iter()
            .enumerate()
            .map(|(i, &rho)| rho * h * (i as f64 * h + 0.5 * h))
            .sum();
        let disc: f64 = d.points().iter().zip(d.weights()).map(|(p, &w)| w * p[0]).sum();
        assert!((exact - disc).abs() <= 0.5 * h + 1e-12);
    }

    #[test]
    fn cdf_1d_matches_uniform() {
        let g = GridMeasure::new(vec![[0.0, 1.0]], vec![10], vec![1.0; 10]).unwrap();
        assert!((g.cdf_1d(0.35).unwrap() - 0.35).abs() < 1e-12);
        assert_eq!(g.cdf_1d(-1.0).unwrap(), 0.0);
        assert!((g.cdf_1d(2.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coupling_validates_marginals() {
        let a = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        let b = DiscreteMeasure::new(vec![vec![2.0]], vec![1.0]).unwrap();
        let ok = Coupling::new(a.clone(), b.clone(), vec![(0, 0, 0.5), (1, 0, 0.5)], 0.0);
        assert!(ok.is_ok());
        let bad = Coupling::new(a, b, vec![(0, 0, 1.0)], 0.0);
        assert!(bad.is_err());
    }

    #[test]
    fn tri_coupling_marginals_and_projections() {
        let nu = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        let mu0 = DiscreteMeasure::new(vec![vec![0.0], vec![2.0]], vec![0.5, 0.5]).unwrap();
        let mu1 = DiscreteMeasure::new(vec![vec![1.0], vec![3.0]], vec![0.5, 0.5]).unwrap();
        let g = TriCoupling::new(
            nu,
            mu0,
            mu1,
            vec![(0, 0, 0, 0.5), (1, 1, 1, 0.5)],
        )
        .unwrap();
        assert!((g.cross_cost() - 1.0).abs() < 1e-12);
        let p = g.project_x0x1().unwrap();
        assert_eq!(p.entries().len(), 2);
        let py = g.project_y_side(1).unwrap();
        assert_eq!(py.entries().len(), 2);
    }

    #[test]
    fn split_function_basics() {
        let k = SplitFunction::constant([0.0, 1.0], 4, 0.5, [-1.0, 1.0]).unwrap();
        assert_eq!(k.grid(), &[0.125, 0.375, 0.625, 0.875]);
        let v = k.antiderivative();
        assert!((v[0] - 0.5 * 0.125).abs() < 1e-15);
        assert!((v[3] - 0.5 * 0.875).abs() < 1e-15);
        let other = SplitFunction::constant([0.0, 1.0], 4, -0.5, [-1.0, 1.0]).unwrap();
        assert!((k.l1_distance(&other).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn split_function_rejects_out_of_bounds() {
        let err = SplitFunction::constant([0.0, 1.0], 4, 2.0, [-1.0, 1.0]);
        assert!(err.is_err());
    }
}
