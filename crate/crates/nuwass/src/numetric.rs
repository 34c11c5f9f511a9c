//! The reference-based Wasserstein metric `W_ν` and its three equivalent
//! computations, plus the coupling metric, the ε-functional and hierarchical
//! variants with several reference measures.
//!
//! `W_ν²(μ₀, μ₁)` minimizes `∫ |x₀-x₁|² dγ` over three-marginal couplings
//! `γ` of `(ν, μ₀, μ₁)` whose `(y, x_i)` projections are *optimal* plans
//! between `ν` and `μ_i`. Optimality is encoded as a linear face of the
//! transportation polytope: `∫ c(x_i, y) dγ <= c_i* + τ` with `τ = 1e-9`,
//! where `c_i*` is the unconstrained optimal value.

use crate::cost::{cost_matrix, CostSpec};
use crate::lp::{LpProblem, LpSolution, RowType};
use crate::measures::{sq_dist, Coupling, DiscreteMeasure, TriCoupling};
use crate::ot::{is_unique_plan, solve_ot, Uniqueness, SIZE_CAP};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

/// Base face-constraint slack `τ`. The slack leaks into the objective as
/// (dual price)·τ, and face prices of a few hundred are common, so it has to
/// sit well below the 1e-8 agreement bar while staying above the roundoff of
/// the summed face costs.
pub const FACE_TOL: f64 = 1e-12;

/// Face slack scaled to the instance: roundoff of an `n`-term cost sum at
/// the face's magnitude.
fn face_slack(c_star: f64, n_vars: usize) -> f64 {
    FACE_TOL * (1.0 + c_star.abs()) + 1e-15 * n_vars as f64
}

/// Which computation produced a [`WnuResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WnuMethod {
    ConstrainedLp,
    Disintegration,
    MmLimit,
}

/// Outcome of a `W_ν` computation.
#[derive(Debug, Clone, Serialize)]
pub struct WnuResult {
    /// `W_ν(μ₀, μ₁) >= 0` (length units).
    pub value: f64,
    /// The optimizing three-marginal coupling.
    pub gamma: TriCoupling,
    /// Plan-uniqueness verdicts for `Π_opt(ν, μ₀)` and `Π_opt(ν, μ₁)`.
    pub uniqueness: [Uniqueness; 2],
    pub method: WnuMethod,
    /// Per-side optimality gaps `∫c(x_i,y)dγ - c_i*` of the returned γ.
    pub pair_gaps: [f64; 2],
    /// The coupling LP had alternative optima (vertex reported anyway).
    pub degenerate: bool,
}

/// Flat index layout for the tri-index tensor.
struct TriIndex {
    n_nu: usize,
    n0: usize,
    n1: usize,
}

impl TriIndex {
    fn flat(&self, k: usize, i: usize, j: usize) -> usize {
        (k * self.n0 + i) * self.n1 + j
    }

    fn len(&self) -> usize {
        self.n_nu * self.n0 * self.n1
    }
}

fn tri_marginal_rows(p: &mut LpProblem, ix: &TriIndex, nu: &DiscreteMeasure, mu0: &DiscreteMeasure, mu1: &DiscreteMeasure) {
    let mut terms = Vec::with_capacity(ix.n0 * ix.n1);
    for k in 0..ix.n_nu {
        terms.clear();
        for i in 0..ix.n0 {
            for j in 0..ix.n1 {
                terms.push((ix.flat(k, i, j), 1.0));
            }
        }
        p.add_row(RowType::Eq, nu.weight(k), &terms);
    }
    let mut terms = Vec::with_capacity(ix.n_nu * ix.n1);
    for i in 0..ix.n0 {
        terms.clear();
        for k in 0..ix.n_nu {
            for j in 0..ix.n1 {
                terms.push((ix.flat(k, i, j), 1.0));
            }
        }
        p.add_row(RowType::Eq, mu0.weight(i), &terms);
    }
    let mut terms = Vec::with_capacity(ix.n_nu * ix.n0);
    for j in 0..ix.n1 {
        terms.clear();
        for k in 0..ix.n_nu {
            for i in 0..ix.n0 {
                terms.push((ix.flat(k, i, j), 1.0));
            }
        }
        p.add_row(RowType::Eq, mu1.weight(j), &terms);
    }
}

fn gamma_from_lp(
    sol: &LpSolution,
    ix: &TriIndex,
    nu: &DiscreteMeasure,
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
) -> Result<TriCoupling> {
    let mut entries = Vec::new();
    for k in 0..ix.n_nu {
        for i in 0..ix.n0 {
            for j in 0..ix.n1 {
                let m = sol.x[ix.flat(k, i, j)];
                if m > 1e-15 {
                    entries.push((k, i, j, m));
                }
            }
        }
    }
    TriCoupling::new(nu.clone(), mu0.clone(), mu1.clone(), entries)
}

fn check_cap(ix: &TriIndex) -> Result<()> {
    if ix.len() > SIZE_CAP {
        return Err(Error::SizeCap { what: "three-index coupling LP", size: ix.len(), cap: SIZE_CAP });
    }
    Ok(())
}

/// `W_ν` by the constrained coupling LP (the defining problem).
pub fn w_nu(
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    c: &CostSpec,
) -> Result<WnuResult> {
    let ix = TriIndex { n_nu: nu.len(), n0: mu0.len(), n1: mu1.len() };
    check_cap(&ix)?;
    let base0 = solve_ot(mu0, nu, c)?;
    let base1 = solve_ot(mu1, nu, c)?;
    let cm0 = cost_matrix(mu0, nu, c)?;
    let cm1 = cost_matrix(mu1, nu, c)?;

    let mut objective = vec![0.0; ix.len()];
    for k in 0..ix.n_nu {
        for i in 0..ix.n0 {
            for j in 0..ix.n1 {
                objective[ix.flat(k, i, j)] = sq_dist(mu0.point(i), mu1.point(j));
            }
        }
    }
    let mut p = LpProblem::new(ix.len(), objective);
    tri_marginal_rows(&mut p, &ix, nu, mu0, mu1);
    for side in 0..2 {
        let mut terms = Vec::with_capacity(ix.len());
        for k in 0..ix.n_nu {
            for i in 0..ix.n0 {
                for j in 0..ix.n1 {
                    let coeff = if side == 0 { cm0[i][k] } else { cm1[j][k] };
                    terms.push((ix.flat(k, i, j), coeff));
                }
            }
        }
        let rhs = if side == 0 { base0.value } else { base1.value };
        p.add_row(RowType::Le, rhs + face_slack(rhs, ix.len()), &terms);
    }
    let sol = p.solve().map_err(|e| match e {
        Error::Infeasible(msg) => Error::Infeasible(format!(
            "optimality face made the coupling LP infeasible (tolerance misconfiguration): {msg}"
        )),
        other => other,
    })?;
    let gamma = gamma_from_lp(&sol, &ix, nu, mu0, mu1)?;
    let pair_gaps = pair_gaps(&gamma, &cm0, &cm1, base0.value, base1.value);
    Ok(WnuResult {
        value: sol.objective.max(0.0).sqrt(),
        gamma,
        uniqueness: [is_unique_plan(&base0), is_unique_plan(&base1)],
        method: WnuMethod::ConstrainedLp,
        pair_gaps,
        degenerate: sol.degenerate,
    })
}

fn pair_gaps(gamma: &TriCoupling, cm0: &[Vec<f64>], cm1: &[Vec<f64>], v0: f64, v1: f64) -> [f64; 2] {
    let mut p0 = 0.0;
    let mut p1 = 0.0;
    for &(k, i, j, m) in gamma.entries() {
        p0 += m * cm0[i][k];
        p1 += m * cm1[j][k];
    }
    [p0 - v0, p1 - v1]
}

/// Per-slice data shared by the disintegration computation and the coupling
/// metric: couples the conditionals of `pi0` and `pi1` above each reference
/// atom optimally and reassembles the three-marginal coupling.
fn couple_slices(pi0: &Coupling, pi1: &Coupling) -> Result<(f64, TriCoupling)> {
    let nu = pi0.first().clone();
    let mu0 = pi0.second().clone();
    let mu1 = pi1.second().clone();
    let mut rows0: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nu.len()];
    let mut rows1: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nu.len()];
    for &(k, i, m) in pi0.entries() {
        if m > 0.0 {
            rows0[k].push((i, m));
        }
    }
    for &(k, j, m) in pi1.entries() {
        if m > 0.0 {
            rows1[k].push((j, m));
        }
    }
    let slices: Vec<(usize, f64)> = nu
        .weights()
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(k, &w)| (k, w))
        .collect();
    let solved: Result<Vec<(usize, f64, Vec<(usize, usize, f64)>)>> = slices
        .par_iter()
        .map(|&(k, nu_k)| {
            // Filter with the same predicate the measure constructor prunes
            // by, so conditional atom indices align one-to-one.
            let row0: Vec<(usize, f64)> = rows0[k].iter().copied().filter(|&(_, m)| m >= 1e-15).collect();
            let row1: Vec<(usize, f64)> = rows1[k].iter().copied().filter(|&(_, m)| m >= 1e-15).collect();
            let cond0 = DiscreteMeasure::new_renormalized(
                row0.iter().map(|&(i, _)| mu0.point(i).to_vec()).collect(),
                row0.iter().map(|&(_, m)| m).collect(),
            )?;
            let cond1 = DiscreteMeasure::new_renormalized(
                row1.iter().map(|&(j, _)| mu1.point(j).to_vec()).collect(),
                row1.iter().map(|&(_, m)| m).collect(),
            )?;
            let slice = solve_ot(&cond0, &cond1, &CostSpec::Quadratic)?;
            let entries: Vec<(usize, usize, f64)> = slice
                .coupling
                .entries()
                .iter()
                .map(|&(i, j, m)| (row0[i].0, row1[j].0, m * nu_k))
                .collect();
            Ok((k, nu_k * slice.value, entries))
        })
        .collect();
    let mut value_sq = 0.0;
    let mut entries = Vec::new();
    for (k, v, es) in solved? {
        value_sq += v;
        for (i, j, m) in es {
            entries.push((k, i, j, m));
        }
    }
    let gamma = TriCoupling::new(nu, mu0, mu1, entries)?;
    Ok((value_sq, gamma))
}

fn check_first_marginal(pi: &Coupling, nu: &DiscreteMeasure, tag: &str) -> Result<()> {
    if pi.first().len() != nu.len() {
        return Err(Error::Validation(format!("{tag}: first marginal has {} atoms, ν has {}", pi.first().len(), nu.len())));
    }
    for (k, (p, q)) in pi.first().points().iter().zip(nu.points()).enumerate() {
        if sq_dist(p, q) > 1e-24 {
            return Err(Error::Validation(format!("{tag}: first-marginal point {k} differs from ν")));
        }
    }
    for (k, (&a, &b)) in pi.first().weights().iter().zip(nu.weights()).enumerate() {
        if (a - b).abs() > 1e-12 {
            return Err(Error::Validation(format!("{tag}: first-marginal weight {k} differs from ν ({a} vs {b})")));
        }
    }
    Ok(())
}

/// `W_ν` from given optimal plans by disintegrating over the reference
/// measure and coupling the conditionals slice by slice.
///
/// Both couplings must have first marginal `ν` and be optimal for `c` within
/// 1e-8 (checked against a fresh solve; violations are rejected with the
/// gap).
pub fn w_nu_disintegration(
    pi0: &Coupling,
    pi1: &Coupling,
    nu: &DiscreteMeasure,
    c: &CostSpec,
) -> Result<WnuResult> {
    check_first_marginal(pi0, nu, "pi0")?;
    check_first_marginal(pi1, nu, "pi1")?;
    let mut uniq = [Uniqueness::Undetermined; 2];
    for (side, pi) in [(0usize, pi0), (1usize, pi1)] {
        let mu = pi.second();
        let base = solve_ot(mu, nu, c)?;
        uniq[side] = is_unique_plan(&base);
        let cm = cost_matrix(mu, nu, c)?;
        let cost: f64 = pi.entries().iter().map(|&(k, i, m)| m * cm[i][k]).sum();
        let gap = cost - base.value;
        if gap > 1e-8 {
            return Err(Error::Validation(format!(
                "pi{side} is not an optimal plan: cost gap {gap:.3e} above the OT value"
            )));
        }
    }
    let (value_sq, gamma) = couple_slices(pi0, pi1)?;
    let cm0 = cost_matrix(pi0.second(), nu, c)?;
    let cm1 = cost_matrix(pi1.second(), nu, c)?;
    let v0: f64 = pi0.entries().iter().map(|&(k, i, m)| m * cm0[i][k]).sum();
    let v1: f64 = pi1.entries().iter().map(|&(k, j, m)| m * cm1[j][k]).sum();
    let pair_gaps = pair_gaps(&gamma, &cm0, &cm1, v0, v1);
    Ok(WnuResult {
        value: value_sq.max(0.0).sqrt(),
        gamma,
        uniqueness: uniq,
        method: WnuMethod::Disintegration,
        pair_gaps,
        degenerate: false,
    })
}

/// Metric on couplings sharing first marginal `ν`: minimizes `∫|x₀-x₁|² dγ`
/// over γ whose `(y, x_i)` projections equal the *given* plans.
pub fn tilde_w_nu(pi0: &Coupling, pi1: &Coupling) -> Result<(f64, TriCoupling)> {
    check_first_marginal(pi1, pi0.first(), "pi1")?;
    let (value_sq, gamma) = couple_slices(pi0, pi1)?;
    Ok((value_sq.max(0.0).sqrt(), gamma))
}

/// Multi-marginal relaxation solution for one ε.
#[derive(Debug, Clone, Serialize)]
pub struct MmSolution {
    pub eps: f64,
    pub gamma: TriCoupling,
    /// Full objective `ε·cross + pair₀ + pair₁`.
    pub objective: f64,
    /// `∫|x₀-x₁|² dγ_ε`.
    pub cross_term: f64,
    /// `∫ c(x_i, y) dγ_ε`.
    pub pair_costs: [f64; 2],
}

/// Solves the ε-weighted multi-marginal problem over `Π(ν, μ₀, μ₁)`.
pub fn mm_epsilon(
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    c: &CostSpec,
    eps: f64,
) -> Result<MmSolution> {
    if !(eps > 0.0) {
        return Err(Error::Validation(format!("eps must be positive, got {eps}")));
    }
    let ix = TriIndex { n_nu: nu.len(), n0: mu0.len(), n1: mu1.len() };
    check_cap(&ix)?;
    let cm0 = cost_matrix(mu0, nu, c)?;
    let cm1 = cost_matrix(mu1, nu, c)?;
    let mut objective = vec![0.0; ix.len()];
    for k in 0..ix.n_nu {
        for i in 0..ix.n0 {
            for j in 0..ix.n1 {
                objective[ix.flat(k, i, j)] =
                    eps * sq_dist(mu0.point(i), mu1.point(j)) + cm0[i][k] + cm1[j][k];
            }
        }
    }
    let mut p = LpProblem::new(ix.len(), objective);
    tri_marginal_rows(&mut p, &ix, nu, mu0, mu1);
    let sol = p.solve()?;
    let gamma = gamma_from_lp(&sol, &ix, nu, mu0, mu1)?;
    let cross = gamma.cross_cost();
    let mut pair = [0.0; 2];
    for &(k, i, j, m) in gamma.entries() {
        pair[0] += m * cm0[i][k];
        pair[1] += m * cm1[j][k];
    }
    Ok(MmSolution { eps, gamma, objective: sol.objective, cross_term: cross, pair_costs: pair })
}

/// One row of the ε-limit convergence table.
#[derive(Debug, Clone, Serialize)]
pub struct MmTableRow {
    pub eps: f64,
    pub cross_term: f64,
    /// Marginal-optimality gaps of `γ_ε` against the unconstrained OT values.
    pub gap0: f64,
    pub gap1: f64,
    /// `F_ν^ε = (MM_ν^ε - c₀* - c₁*) / ε`.
    pub f_eps: f64,
}

/// Outcome of the ε-schedule limit.
#[derive(Debug, Clone, Serialize)]
pub struct MmLimitResult {
    pub result: WnuResult,
    pub table: Vec<MmTableRow>,
    pub converged: bool,
    /// Cross terms decreased somewhere along the schedule beyond LP slack
    /// (signals LP degeneracy; not fatal).
    pub monotonicity_flag: bool,
    /// `W_ν²` from the constrained LP, the reference for convergence.
    pub w_nu_sq: f64,
}

/// Default geometric ε schedule `{1, 0.3, 0.1, ..., 1e-4}`.
pub fn default_eps_schedule() -> Vec<f64> {
    vec![1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001, 0.0003, 1e-4]
}

/// Runs the multi-marginal problem along a decreasing ε schedule and
/// certifies convergence to the `W_ν` coupling.
pub fn mm_limit(
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    c: &CostSpec,
    schedule: &[f64],
) -> Result<MmLimitResult> {
    if schedule.is_empty() || schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Validation("eps schedule must be non-empty and strictly decreasing".into()));
    }
    if *schedule.last().unwrap() > 1e-4 + 1e-15 {
        return Err(Error::Validation("eps schedule must reach 1e-4 or below".into()));
    }
    let base0 = solve_ot(mu0, nu, c)?;
    let base1 = solve_ot(mu1, nu, c)?;
    let reference = w_nu(mu0, mu1, nu, c)?;
    let w_sq = reference.value * reference.value;
    let mut table = Vec::with_capacity(schedule.len());
    let mut last: Option<MmSolution> = None;
    let mut monotonicity_flag = false;
    for &eps in schedule {
        let mm = mm_epsilon(mu0, mu1, nu, c, eps)?;
        let f_eps = (mm.objective - base0.value - base1.value) / eps;
        if let Some(prev) = table.last() {
            let prev: &MmTableRow = prev;
            if mm.cross_term < prev.cross_term - 1e-8 {
                monotonicity_flag = true;
            }
        }
        table.push(MmTableRow {
            eps,
            cross_term: mm.cross_term,
            gap0: mm.pair_costs[0] - base0.value,
            gap1: mm.pair_costs[1] - base1.value,
            f_eps,
        });
        last = Some(mm);
    }
    let last = last.expect("non-empty schedule");
    let final_row = table.last().expect("non-empty table");
    let converged = final_row.gap0 < 1e-6
        && final_row.gap1 < 1e-6
        && (final_row.cross_term - w_sq).abs() <= 1e-4;
    let result = WnuResult {
        value: last.cross_term.max(0.0).sqrt(),
        gamma: last.gamma,
        uniqueness: reference.uniqueness,
        method: WnuMethod::MmLimit,
        pair_gaps: [final_row.gap0, final_row.gap1],
        degenerate: reference.degenerate,
    };
    Ok(MmLimitResult { result, table, converged, monotonicity_flag, w_nu_sq: w_sq })
}

/// `F_ν^ε = (MM_ν^ε - W₂²(ν,μ₀) - W₂²(ν,μ₁)) / ε`, the Γ-converging
/// functional; squeezed between the ε-cross term and `W_ν²`.
pub fn gamma_functional(
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    c: &CostSpec,
    eps: f64,
) -> Result<f64> {
    let base0 = solve_ot(mu0, nu, c)?;
    let base1 = solve_ot(mu1, nu, c)?;
    let mm = mm_epsilon(mu0, mu1, nu, c, eps)?;
    Ok((mm.objective - base0.value - base1.value) / eps)
}

/// `W_ν` by the constrained LP when the tri-index tensor is small, otherwise
/// by disintegration of fresh optimal plans (exact whenever those plans are
/// unique; the uniqueness verdicts are reported either way).
pub fn w_nu_auto(
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    c: &CostSpec,
) -> Result<WnuResult> {
    const LP_VAR_BUDGET: usize = 64_000;
    if nu.len() * mu0.len() * mu1.len() <= LP_VAR_BUDGET {
        w_nu(mu0, mu1, nu, c)
    } else {
        let pi0 = solve_ot(mu0, nu, c)?.coupling.transposed();
        let pi1 = solve_ot(mu1, nu, c)?.coupling.transposed();
        w_nu_disintegration(&pi0, &pi1, nu, c)
    }
}

/// A coupling over an arbitrary list of supports (used by the hierarchical
/// metric and its ε-relaxation).
#[derive(Debug, Clone, Serialize)]
pub struct MultiCoupling {
    pub supports: Vec<DiscreteMeasure>,
    /// `(multi-index, mass)` with one index per support.
    pub entries: Vec<(Vec<usize>, f64)>,
}

impl MultiCoupling {
    /// Projects onto two coordinates as a pairwise coupling.
    pub fn project_pair(&self, a: usize, b: usize) -> Result<Coupling> {
        let mut acc: std::collections::BTreeMap<(usize, usize), f64> = std::collections::BTreeMap::new();
        for (idx, m) in &self.entries {
            *acc.entry((idx[a], idx[b])).or_insert(0.0) += m;
        }
        let first = self.supports[a].clone();
        let second = self.supports[b].clone();
        let entries: Vec<(usize, usize, f64)> = acc.into_iter().map(|((i, j), m)| (i, j, m)).collect();
        let cost = entries
            .iter()
            .map(|&(i, j, m)| m * sq_dist(first.point(i), second.point(j)))
            .sum();
        Coupling::new(first, second, entries, cost)
    }
}

/// Result of the hierarchical metric with reference measures `ν₁..ν_k`.
#[derive(Debug, Clone, Serialize)]
pub struct HierarchicalResult {
    pub value: f64,
    pub coupling: MultiCoupling,
    /// Stage-wise optimal values `c*_{l,i}` for `l = 1..k`, `i = 0,1`.
    pub stage_values: Vec<[f64; 2]>,
}

/// Multi-index LP helper: supports in the order `ν₁..ν_k, μ₀, μ₁` (or a
/// prefix ending at one `μ`), marginal equality rows for every support, plus
/// optional face rows. Objective given per flat index.
struct MultiLp<'a> {
    supports: Vec<&'a DiscreteMeasure>,
    sizes: Vec<usize>,
}

impl<'a> MultiLp<'a> {
    fn new(supports: Vec<&'a DiscreteMeasure>) -> Result<Self> {
        let sizes: Vec<usize> = supports.iter().map(|s| s.len()).collect();
        let total: usize = sizes.iter().product();
        if total > SIZE_CAP {
            return Err(Error::SizeCap { what: "multi-index coupling LP", size: total, cap: SIZE_CAP });
        }
        Ok(MultiLp { supports, sizes })
    }

    fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.sizes.len()];
        for ax in (0..self.sizes.len()).rev() {
            idx[ax] = flat % self.sizes[ax];
            flat /= self.sizes[ax];
        }
        idx
    }

    fn solve(&self, objective: Vec<f64>, faces: &[(Vec<f64>, f64)]) -> Result<(LpSolution, MultiCoupling)> {
        let n = self.len();
        let mut p = LpProblem::new(n, objective);
        // marginal rows per support
        for (ax, support) in self.supports.iter().enumerate() {
            let mut buckets: Vec<Vec<(usize, f64)>> = vec![Vec::new(); support.len()];
            for flat in 0..n {
                let idx = self.unflatten(flat);
                buckets[idx[ax]].push((flat, 1.0));
            }
            for (a, bucket) in buckets.into_iter().enumerate() {
                p.add_row(RowType::Eq, support.weight(a), &bucket);
            }
        }
        for (coeffs, rhs) in faces {
            let terms: Vec<(usize, f64)> = coeffs
                .iter()
                .enumerate()
                .filter(|(_, &c)| c != 0.0)
                .map(|(j, &c)| (j, c))
                .collect();
            p.add_row(RowType::Le, *rhs, &terms);
        }
        let sol = p.solve()?;
        let mut entries = Vec::new();
        for (flat, &x) in sol.x.iter().enumerate() {
            if x > 1e-15 {
                entries.push((self.unflatten(flat), x));
            }
        }
        let mc = MultiCoupling {
            supports: self.supports.iter().map(|s| (*s).clone()).collect(),
            entries,
        };
        Ok((sol, mc))
    }
}

/// Stage-`l` pair cost coefficients `c(x_side, y_l)` over the multi-index.
fn pair_cost_vec(ml: &MultiLp, cm: &[Vec<f64>], y_axis: usize, x_axis: usize) -> Vec<f64> {
    (0..ml.len())
        .map(|flat| {
            let idx = ml.unflatten(flat);
            cm[idx[x_axis]][idx[y_axis]]
        })
        .collect()
}

/// Hierarchical metric with reference measures `ν₁..ν_k` (desk scale:
/// `k <= 2`). Stage `l` pins the transport cost to `ν_l` at its optimum
/// given all earlier stages; the final stage minimizes `∫|x₀-x₁|²`.
pub fn hierarchical_w(
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    nus: &[DiscreteMeasure],
    c: &CostSpec,
) -> Result<HierarchicalResult> {
    let k = nus.len();
    if k == 0 || k > 2 {
        return Err(Error::Validation(format!("hierarchical metric supports 1 <= k <= 2 references, got {k}")));
    }
    // Stage values per side: c*_{l,i}.
    let mut stage_values: Vec<[f64; 2]> = Vec::with_capacity(k);
    let mut cms: Vec<[Vec<Vec<f64>>; 2]> = Vec::with_capacity(k);
    for nu in nus {
        cms.push([cost_matrix(mu0, nu, c)?, cost_matrix(mu1, nu, c)?]);
    }
    // Stage 1: plain OT.
    stage_values.push([solve_ot(mu0, &nus[0], c)?.value, solve_ot(mu1, &nus[0], c)?.value]);
    if k == 2 {
        let mut vals = [0.0; 2];
        for (side, mu) in [(0usize, mu0), (1usize, mu1)] {
            let ml = MultiLp::new(vec![&nus[0], &nus[1], mu])?;
            let objective = pair_cost_vec(&ml, &cms[1][side], 1, 2);
            let face = (
                pair_cost_vec(&ml, &cms[0][side], 0, 2),
                stage_values[0][side] + face_slack(stage_values[0][side], ml.len()),
            );
            let (sol, _) = ml.solve(objective, &[face])?;
            vals[side] = sol.objective;
        }
        stage_values.push(vals);
    }
    // Final LP over (y_1..y_k, x0, x1).
    let mut supports: Vec<&DiscreteMeasure> = nus.iter().collect();
    supports.push(mu0);
    supports.push(mu1);
    let ml = MultiLp::new(supports)?;
    let x0_axis = k;
    let x1_axis = k + 1;
    let objective: Vec<f64> = (0..ml.len())
        .map(|flat| {
            let idx = ml.unflatten(flat);
            sq_dist(mu0.point(idx[x0_axis]), mu1.point(idx[x1_axis]))
        })
        .collect();
    let mut faces = Vec::new();
    for l in 0..k {
        for side in 0..2 {
            let x_axis = if side == 0 { x0_axis } else { x1_axis };
            faces.push((
                pair_cost_vec(&ml, &cms[l][side], l, x_axis),
                stage_values[l][side] + face_slack(stage_values[l][side], ml.len()),
            ));
        }
    }
    let (sol, coupling) = ml.solve(objective, &faces)?;
    Ok(HierarchicalResult { value: sol.objective.max(0.0).sqrt(), coupling, stage_values })
}

/// Result of the ε-power-weighted multi-marginal relaxation of the
/// hierarchical metric.
#[derive(Debug, Clone, Serialize)]
pub struct WeightedMmResult {
    pub eps: f64,
    pub coupling: MultiCoupling,
    pub objective: f64,
    /// `∫|x₀-x₁|² dγ`.
    pub cross_term: f64,
    /// Pair costs to each reference, sides 0 and 1.
    pub pair_costs: Vec<[f64; 2]>,
}

/// Solves the ε-power-weighted multi-marginal problem whose weak limit is
/// the hierarchical coupling: cost
/// `ε^k |x₀-x₁|² + Σ_l ε^{l-1} (c(x₀,y_l) + c(x₁,y_l))`.
pub fn weighted_mm(
    mu0: &DiscreteMeasure,
    mu1: &DiscreteMeasure,
    nus: &[DiscreteMeasure],
    c: &CostSpec,
    eps: f64,
) -> Result<WeightedMmResult> {
    let k = nus.len();
    if k == 0 || k > 2 {
        return Err(Error::Validation(format!("weighted multi-marginal supports 1 <= k <= 2 references, got {k}")));
    }
    if !(eps > 0.0) {
        return Err(Error::Validation(format!("eps must be positive, got {eps}")));
    }
    let mut cms: Vec<[Vec<Vec<f64>>; 2]> = Vec::with_capacity(k);
    for nu in nus {
        cms.push([cost_matrix(mu0, nu, c)?, cost_matrix(mu1, nu, c)?]);
    }
    let mut supports: Vec<&DiscreteMeasure> = nus.iter().collect();
    supports.push(mu0);
    supports.push(mu1);
    let ml = MultiLp::new(supports)?;
    let x0_axis = k;
    let x1_axis = k + 1;
    let objective: Vec<f64> = (0..ml.len())
        .map(|flat| {
            let idx = ml.unflatten(flat);
            let mut v = eps.powi(k as i32) * sq_dist(mu0.point(idx[x0_axis]), mu1.point(idx[x1_axis]));
            for l in 0..k {
                v += eps.powi(l as i32) * (cms[l][0][idx[x0_axis]][idx[l]] + cms[l][1][idx[x1_axis]][idx[l]]);
            }
            v
        })
        .collect();
    let (sol, coupling) = ml.solve(objective, &[])?;
    let mut cross = 0.0;
    let mut pair = vec![[0.0; 2]; k];
    for (idx, m) in &coupling.entries {
        cross += m * sq_dist(mu0.point(idx[x0_axis]), mu1.point(idx[x1_axis]));
        for l in 0..k {
            pair[l][0] += m * cms[l][0][idx[x0_axis]][idx[l]];
            pair[l][1] += m * cms[l][1][idx[x1_axis]][idx[l]];
        }
    }
    Ok(WeightedMmResult { eps, coupling, objective: sol.objective, cross_term: cross, pair_costs: pair })
}
