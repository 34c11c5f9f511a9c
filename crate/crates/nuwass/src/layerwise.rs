//! The layerwise-Wasserstein distance, its agreement with the
//! reference-based metric for segment-supported references, and the discrete
//! Knothe-Rosenblatt rearrangement in the plane.
//!
//! `d²_LW(μ₀,μ₁) = W₂²(μ₀^V, μ₁^V) + ∫₀¹ W₂²(μ̃₀^l, μ̃₁^l) dl` where `μ^V`
//! is the first-coordinate marginal and `μ̃^l` are the conditionals after
//! rescaling that coordinate by its own CDF. Atomic vertical marginals make
//! the conditional at a CDF jump ambiguous; we use the common-refinement
//! convention: the conditional is constant on each group's CDF interval.

use crate::cost::{CostSpec, Curve, EmbeddedForm};
use crate::measures::{Coupling, DiscreteMeasure, GridMeasure};
use crate::numetric::WnuResult;
use crate::ot::{ot_1d, solve_ot};
use crate::{Error, Result};
use serde::Serialize;
use std::collections::HashMap;

/// Grouping tolerance for coinciding first coordinates.
const TIE_TOL: f64 = 1e-12;

/// A measure split along its first coordinate: grouped vertical marginal,
/// CDF table and per-group conditionals on the remaining coordinates.
#[derive(Debug, Clone)]
pub struct LayeredDecomposition {
    /// Grouped 1-D vertical marginal (one atom per distinct first
    /// coordinate).
    pub vertical: DiscreteMeasure,
    /// Upper CDF boundary per group; non-decreasing, last entry 1.
    pub cdf: Vec<f64>,
    /// Conditional distribution of the trailing coordinates per group.
    pub conditionals: Vec<DiscreteMeasure>,
}

impl LayeredDecomposition {
    /// Index of the group owning CDF level `l ∈ (0, 1)`.
    pub fn group_at(&self, l: f64) -> usize {
        match self.cdf.binary_search_by(|c| c.partial_cmp(&l).unwrap()) {
            Ok(i) => (i + 1).min(self.cdf.len() - 1),
            Err(i) => i.min(self.cdf.len() - 1),
        }
    }

    pub fn conditional_at(&self, l: f64) -> &DiscreteMeasure {
        &self.conditionals[self.group_at(l)]
    }
}

/// Splits a measure along its first coordinate (groups within 1e-12).
pub fn layered_decomposition(mu: &DiscreteMeasure) -> Result<LayeredDecomposition> {
    if mu.dim() < 2 {
        return Err(Error::Validation(format!(
            "layerwise decomposition needs dimension >= 2, got {}",
            mu.dim()
        )));
    }
    let mut order: Vec<usize> = (0..mu.len()).collect();
    order.sort_by(|&a, &b| mu.point(a)[0].partial_cmp(&mu.point(b)[0]).unwrap().then(a.cmp(&b)));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &idx in &order {
        let x1 = mu.point(idx)[0];
        match groups.last_mut() {
            Some(g) if (mu.point(g[0])[0] - x1).abs() <= TIE_TOL => g.push(idx),
            _ => groups.push(vec![idx]),
        }
    }
    let mut vert_pts = Vec::with_capacity(groups.len());
    let mut vert_wts = Vec::with_capacity(groups.len());
    let mut conditionals = Vec::with_capacity(groups.len());
    for g in &groups {
        let mass: f64 = g.iter().map(|&i| mu.weight(i)).sum();
        vert_pts.push(vec![mu.point(g[0])[0]]);
        vert_wts.push(mass);
        conditionals.push(DiscreteMeasure::new_renormalized(
            g.iter().map(|&i| mu.point(i)[1..].to_vec()).collect(),
            g.iter().map(|&i| mu.weight(i)).collect(),
        )?);
    }
    let vertical = DiscreteMeasure::new(vert_pts, vert_wts)?;
    let mut cdf = Vec::with_capacity(groups.len());
    let mut acc = 0.0;
    for &w in vertical.weights() {
        acc += w;
        cdf.push(acc);
    }
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    Ok(LayeredDecomposition { vertical, cdf, conditionals })
}

/// One layer of the distance table.
#[derive(Debug, Clone, Serialize)]
pub struct LayerRow {
    pub level: f64,
    pub w2_sq: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerwiseResult {
    /// `d_LW` (length units).
    pub value: f64,
    /// `W₂²` of the vertical marginals.
    pub vertical_w2_sq: f64,
    /// Midpoint-rule value of the layer integral.
    pub layer_integral: f64,
    pub layers: Vec<LayerRow>,
}

/// Default number of midpoint layers for the `l`-integral.
pub const DEFAULT_LAYERS: usize = 64;

/// Computes the layerwise-Wasserstein distance between two point clouds of
/// dimension `m >= 2` with `layers` midpoint quadrature levels.
pub fn layerwise_distance(
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    layers: usize,
) -> Result<LayerwiseResult> {
    if mu0.dim() != mu1.dim() {
        return Err(Error::DimensionMismatch { expected: mu0.dim(), got: mu1.dim() });
    }
    if layers == 0 {
        return Err(Error::Validation("layer count must be positive".into()));
    }
    let d0 = layered_decomposition(mu0)?;
    let d1 = layered_decomposition(mu1)?;
    let vertical_w2_sq = ot_1d(&d0.vertical, &d1.vertical)?.value;
    let mut memo: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rows = Vec::with_capacity(layers);
    let mut integral = 0.0;
    for q in 0..layers {
        let l = (q as f64 + 0.5) / layers as f64;
        let g0 = d0.group_at(l);
        let g1 = d1.group_at(l);
        let w2 = match memo.get(&(g0, g1)) {
            Some(&v) => v,
            None => {
                let c0 = &d0.conditionals[g0];
                let c1 = &d1.conditionals[g1];
                let v = if c0.dim() == 1 {
                    ot_1d(c0, c1)?.value
                } else {
                    solve_ot(c0, c1, &CostSpec::Quadratic)?.value
                };
                memo.insert((g0, g1), v);
                v
            }
        };
        integral += w2 / layers as f64;
        rows.push(LayerRow { level: l, w2_sq: w2 });
    }
    Ok(LayerwiseResult {
        value: (vertical_w2_sq + integral).max(0.0).sqrt(),
        vertical_w2_sq,
        layer_integral: integral,
        layers: rows,
    })
}

/// The proportional monotone plan between `μ` and a reference on the
/// first-coordinate axis segment: column masses are matched monotonically
/// against the reference CDF, and within a column every atom contributes in
/// proportion to its weight.
///
/// For index costs (the cost depends on `x` only through `x¹`) any such plan
/// is optimal, and the proportional split is the discretization of the
/// continuum plan, whose conditionals are the full column profiles. The
/// returned coupling has the reference first.
pub fn segment_monotone_plan(mu: &DiscreteMeasure, nu_params: &DiscreteMeasure, c: &CostSpec) -> Result<Coupling> {
    if nu_params.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: nu_params.dim() });
    }
    let decomp = layered_decomposition(mu)?;
    // Sort reference atoms by parameter.
    let mut order: Vec<usize> = (0..nu_params.len()).collect();
    order.sort_by(|&a, &b| {
        nu_params.point(a)[0].partial_cmp(&nu_params.point(b)[0]).unwrap().then(a.cmp(&b))
    });
    // Column atom lists in vertical order.
    let mut col_atoms: Vec<Vec<usize>> = vec![Vec::new(); decomp.vertical.len()];
    {
        let mut idx: Vec<usize> = (0..mu.len()).collect();
        idx.sort_by(|&a, &b| mu.point(a)[0].partial_cmp(&mu.point(b)[0]).unwrap().then(a.cmp(&b)));
        let mut col = 0usize;
        for i in idx {
            while (mu.point(i)[0] - decomp.vertical.point(col)[0]).abs() > 1e-12 {
                col += 1;
            }
            col_atoms[col].push(i);
        }
    }
    // CDF merge of column masses against reference weights.
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut cost_total = 0.0;
    let (mut col, mut kpos) = (0usize, 0usize);
    let mut rem_col = decomp.vertical.weight(0);
    let mut rem_nu = nu_params.weight(order[0]);
    loop {
        let take = rem_col.min(rem_nu);
        if take > 0.0 {
            let k = order[kpos];
            let col_mass = decomp.vertical.weight(col);
            for &i in &col_atoms[col] {
                let m = take * mu.weight(i) / col_mass;
                if m > 0.0 {
                    cost_total += m * c.eval(mu.point(i), nu_params.point(k))?;
                    entries.push((k, i, m));
                }
            }
        }
        rem_col -= take;
        rem_nu -= take;
        let col_done = rem_col <= 1e-15;
        let nu_done = rem_nu <= 1e-15;
        if col_done && col + 1 >= col_atoms.len() {
            break;
        }
        if nu_done && kpos + 1 >= order.len() {
            break;
        }
        if col_done && col + 1 < col_atoms.len() {
            col += 1;
            rem_col = decomp.vertical.weight(col);
        }
        if nu_done && kpos + 1 < order.len() {
            kpos += 1;
            rem_nu = nu_params.weight(order[kpos]);
        }
        if !col_done && !nu_done && take <= 0.0 {
            break; // numerical stall guard
        }
    }
    entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    // Merge duplicates (a column can meet the same reference atom once only,
    // but keep this robust).
    let mut merged: Vec<(usize, usize, f64)> = Vec::new();
    for e in entries {
        match merged.last_mut() {
            Some(last) if last.0 == e.0 && last.1 == e.1 => last.2 += e.2,
            _ => merged.push(e),
        }
    }
    Coupling::new(nu_params.clone(), mu.clone(), merged, cost_total)
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub w_nu: f64,
    pub d_lw: f64,
    pub abs_gap: f64,
    pub rel_gap: f64,
    pub pass: bool,
}

/// Compares the reference-based metric (embedded segment cost) against the
/// layerwise distance. The segment must be axis-aligned with the first
/// coordinate; rotate inputs beforehand otherwise.
///
/// The metric side disintegrates the proportional monotone plans (optimality
/// is re-verified internally). Generic simplex vertices split columns into
/// lumpy conditionals and overestimate the infimum badly; the proportional
/// split is the discretization of the continuum plan the equivalence is
/// stated for.
pub fn layerwise_equivalence_check(
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    segment: &Curve,
    nu_density: &GridMeasure,
    layers: usize,
    rel_tol: f64,
) -> Result<(EquivalenceReport, WnuResult)> {
    let Curve::Segment { direction, .. } = segment else {
        return Err(Error::Validation("equivalence check needs a segment curve".into()));
    };
    if direction[0] == 0.0 || direction[1..].iter().any(|&d| d != 0.0) {
        return Err(Error::Validation(
            "segment must be axis-aligned with the first coordinate (pre-rotate the inputs otherwise)".into(),
        ));
    }
    if nu_density.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: nu_density.dim() });
    }
    let nu = nu_density.to_discrete()?;
    let c = CostSpec::embedded(segment.clone(), EmbeddedForm::SqDist)?;
    let pi0 = segment_monotone_plan(mu0, &nu, &c)?;
    let pi1 = segment_monotone_plan(mu1, &nu, &c)?;
    let wn = crate::numetric::w_nu_disintegration(&pi0, &pi1, &nu, &c)?;
    let lw = layerwise_distance(mu0, mu1, layers)?;
    let abs_gap = (wn.value - lw.value).abs();
    let rel_gap = if lw.value > 0.0 { abs_gap / lw.value } else { abs_gap };
    let report = EquivalenceReport {
        w_nu: wn.value,
        d_lw: lw.value,
        abs_gap,
        rel_gap,
        pass: rel_gap < rel_tol,
    };
    Ok((report, wn))
}

#[derive(Debug, Clone, Serialize)]
pub struct KrResult {
    /// `permutation[i]` is the index in `mu1` matched to atom `i` of `mu0`.
    pub permutation: Vec<usize>,
    /// Quadratic cost of the induced pairing.
    pub cost: f64,
}

/// Discrete Knothe-Rosenblatt rearrangement between equal-size uniform
/// clouds in the plane: sort by the first coordinate and match by rank; exact
/// ties (within 1e-12) are grouped and resolved by second-coordinate rank,
/// provided the tie-block boundaries of the two clouds align. Misaligned
/// blocks would force a mass split and are rejected (jitter the inputs).
pub fn knothe_rosenblatt_2d(mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) -> Result<KrResult> {
    for (tag, mu) in [("mu0", mu0), ("mu1", mu1)] {
        if mu.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: mu.dim() });
        }
        let n = mu.len() as f64;
        if mu.weights().iter().any(|&w| (w - 1.0 / n).abs() > 1e-12) {
            return Err(Error::Validation(format!("{tag}: weights must be uniform")));
        }
    }
    if mu0.len() != mu1.len() {
        return Err(Error::Validation(format!(
            "clouds must have equal sizes, got {} and {}",
            mu0.len(),
            mu1.len()
        )));
    }
    let order0 = kr_order(mu0)?;
    let order1 = kr_order(mu1)?;
    // A multi-atom tie block split by the other side's block boundary would
    // force a mass split; single-atom blocks never do.
    let blocks0 = tie_blocks(mu0, &order0);
    let blocks1 = tie_blocks(mu1, &order1);
    if has_true_straddle(&blocks0, &blocks1) {
        return Err(Error::Validation(
            "first-coordinate tie blocks are misaligned between the clouds; the rearrangement would split mass (jitter the coordinates or supply a tie policy)"
                .into(),
        ));
    }
    let mut permutation = vec![0usize; mu0.len()];
    for (rank, &i0) in order0.iter().enumerate() {
        permutation[i0] = order1[rank];
    }
    let n = mu0.len() as f64;
    let cost: f64 = permutation
        .iter()
        .enumerate()
        .map(|(i, &j)| crate::measures::sq_dist(mu0.point(i), mu1.point(j)) / n)
        .sum();
    Ok(KrResult { permutation, cost })
}

/// Sort order by first coordinate, exact ties by second; rejects second
/// coordinate ties inside a tie block.
fn kr_order(mu: &DiscreteMeasure) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..mu.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (mu.point(a), mu.point(b));
        let primary = if (pa[0] - pb[0]).abs() <= TIE_TOL {
            std::cmp::Ordering::Equal
        } else {
            pa[0].partial_cmp(&pb[0]).unwrap()
        };
        primary.then(pa[1].partial_cmp(&pb[1]).unwrap()).then(a.cmp(&b))
    });
    for w in order.windows(2) {
        let (pa, pb) = (mu.point(w[0]), mu.point(w[1]));
        if (pa[0] - pb[0]).abs() <= TIE_TOL && (pa[1] - pb[1]).abs() <= TIE_TOL {
            return Err(Error::Validation(
                "coordinate ties beyond the 1e-12 grouping tolerance; jitter the inputs".into(),
            ));
        }
    }
    Ok(order)
}

/// Rank boundaries after which a new first-coordinate tie block starts.
fn tie_blocks(mu: &DiscreteMeasure, order: &[usize]) -> std::collections::BTreeSet<usize> {
    let mut bounds = std::collections::BTreeSet::new();
    for rank in 1..order.len() {
        let prev = mu.point(order[rank - 1])[0];
        let cur = mu.point(order[rank])[0];
        if (cur - prev).abs() > TIE_TOL {
            bounds.insert(rank);
        }
    }
    bounds.insert(order.len());
    bounds
}

/// True when some multi-atom block of one side is split by a boundary of the
/// other (single-atom "blocks" never split mass).
fn has_true_straddle(
    b0: &std::collections::BTreeSet<usize>,
    b1: &std::collections::BTreeSet<usize>,
) -> bool {
    for (set, other) in [(b0, b1), (b1, b0)] {
        let mut prev = 0usize;
        for &end in set {
            if end - prev > 1 {
                // multi-atom block [prev, end): any boundary of `other`
                // strictly inside splits it
                if other.iter().any(|&x| x > prev && x < end) {
                    return true;
                }
            }
            prev = end;
        }
    }
    false
}
