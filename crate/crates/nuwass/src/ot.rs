//! Exact two-marginal optimal transport.
//!
//! The solver is a revised simplex specialized to transportation structure:
//! the basis is a spanning tree of the bipartite support graph, started from
//! a north-west corner solution on coordinate-sorted supports. Entering arcs
//! are priced in deterministic blocks by most negative reduced cost;
//! after a streak of degenerate pivots the rule switches to Bland's
//! (lexicographically first improving arc) until a nondegenerate pivot
//! breaks the tie, which prevents cycling. Dual potentials come for free
//! from the tree and are gauged so `v = 0` at the first atom of the second
//! marginal.

use crate::cost::{cost_matrix, CostSpec};
use crate::measures::{Coupling, DiscreteMeasure, Potentials};
use crate::{Error, Result};
use serde::Serialize;

/// Hard cap on `n_a * n_b` per the module contract.
pub const SIZE_CAP: usize = 1_000_000;

/// Tri-state verdict on uniqueness of an optimal plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Uniqueness {
    Unique,
    NonUnique,
    Undetermined,
}

/// Primal/dual solution of one transportation problem.
#[derive(Debug, Clone, Serialize)]
pub struct LPSolution {
    pub coupling: Coupling,
    pub potentials: Potentials,
    /// Optimal transport cost (equals `W₂²` for the quadratic cost).
    pub value: f64,
    pub iterations: usize,
    /// Some nonbasic arc has reduced cost below 1e-9: multiple optima
    /// suspected.
    pub degenerate: bool,
    /// Basic arcs (including zero-flow ones) in original indices.
    #[serde(skip)]
    basis: Vec<(usize, usize)>,
    /// Cost matrix in original indices, kept for uniqueness probing.
    #[serde(skip)]
    cost: Vec<Vec<f64>>,
}

impl LPSolution {
    pub fn basis(&self) -> &[(usize, usize)] {
        &self.basis
    }

    pub fn cost_matrix(&self) -> &[Vec<f64>] {
        &self.cost
    }

    /// Dual objective under the stored marginals.
    pub fn dual_objective(&self) -> f64 {
        self.potentials
            .dual_objective(self.coupling.first().weights(), self.coupling.second().weights())
    }
}

/// Solves min `Σ c(a_i, b_j) π_ij` over couplings of `a` and `b`.
pub fn solve_ot(a: &DiscreteMeasure, b: &DiscreteMeasure, c: &CostSpec) -> Result<LPSolution> {
    if a.len() * b.len() > SIZE_CAP {
        return Err(Error::SizeCap { what: "transport LP", size: a.len() * b.len(), cap: SIZE_CAP });
    }
    let cost = cost_matrix(a, b, c)?;
    solve_with_cost(a, b, cost)
}

/// Like [`solve_ot`] with a precomputed cost matrix.
pub fn solve_with_cost(a: &DiscreteMeasure, b: &DiscreteMeasure, cost: Vec<Vec<f64>>) -> Result<LPSolution> {
    let row_order = sorted_order(a);
    let col_order = sorted_order(b);
    let mut spx = TransportSimplex::new(a, b, cost, row_order, col_order)?;
    spx.optimize()?;
    spx.into_solution(a, b)
}

/// Monotone (north-west corner on sorted supports) coupling for 1-D
/// measures; optimal for the quadratic cost without any pivoting.
pub fn ot_1d(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<LPSolution> {
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: a.dim().max(b.dim()) });
    }
    let cost = cost_matrix(a, b, &CostSpec::Quadratic)?;
    let row_order = sorted_order(a);
    let col_order = sorted_order(b);
    let mut spx = TransportSimplex::new(a, b, cost, row_order, col_order)?;
    // The monotone matching is already optimal; pivots only run if floating
    // point says otherwise.
    spx.optimize()?;
    spx.into_solution(a, b)
}

/// Decides whether the optimal plan of `sol` is unique: `NonUnique` when a
/// zero-reduced-cost nonbasic arc admits a pivot with nonzero step,
/// `Unique` when every nonbasic reduced cost exceeds 1e-7, else
/// `Undetermined`.
pub fn is_unique_plan(sol: &LPSolution) -> Uniqueness {
    let m = sol.coupling.first().len();
    let n = sol.coupling.second().len();
    if m * n == sol.basis.len() {
        // Every arc is basic (a marginal is a Dirac): the polytope is a point.
        return Uniqueness::Unique;
    }
    let tree = BasisTree::new(m, n, &sol.basis);
    let mut flows = vec![0.0; sol.basis.len()];
    for &(i, j, f) in sol.coupling.entries() {
        if let Some(slot) = tree.arc_slot(i, j) {
            flows[slot] = f;
        }
    }
    let in_basis: std::collections::HashSet<(usize, usize)> = sol.basis.iter().copied().collect();
    let mut any_zero_rc = false;
    for i in 0..m {
        for j in 0..n {
            if in_basis.contains(&(i, j)) {
                continue;
            }
            let r = sol.cost[i][j] - sol.potentials.u[i] - sol.potentials.v[j];
            if r <= 1e-7 {
                any_zero_rc = true;
                let path = tree.path(i, m + j);
                let step = path
                    .iter()
                    .enumerate()
                    .filter(|(idx, _)| idx % 2 == 0)
                    .map(|(_, &slot)| flows[slot])
                    .fold(f64::INFINITY, f64::min);
                if step > 1e-11 {
                    return Uniqueness::NonUnique;
                }
            }
        }
    }
    if any_zero_rc {
        Uniqueness::Undetermined
    } else {
        Uniqueness::Unique
    }
}

fn sorted_order(m: &DiscreteMeasure) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m.len()).collect();
    order.sort_by(|&x, &y| {
        m.point(x)
            .partial_cmp(m.point(y))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.cmp(&y))
    });
    order
}

/// Spanning-tree adjacency over the bipartite node set (rows `0..m`, columns
/// `m..m+n`).
struct BasisTree {
    adj: Vec<Vec<usize>>,
    arcs: Vec<(usize, usize)>,
    m: usize,
}

impl BasisTree {
    fn new(m: usize, n: usize, arcs: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); m + n];
        for (slot, &(i, j)) in arcs.iter().enumerate() {
            adj[i].push(slot);
            adj[m + j].push(slot);
        }
        BasisTree { adj, arcs: arcs.to_vec(), m }
    }

    fn arc_slot(&self, i: usize, j: usize) -> Option<usize> {
        self.adj[i].iter().copied().find(|&s| self.arcs[s] == (i, j))
    }

    fn other_end(&self, slot: usize, node: usize) -> usize {
        let (i, j) = self.arcs[slot];
        if node == i {
            self.m + j
        } else {
            i
        }
    }

    /// Arc slots along the unique tree path between two nodes.
    fn path(&self, from: usize, to: usize) -> Vec<usize> {
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; self.adj.len()];
        let mut seen = vec![false; self.adj.len()];
        let mut queue = std::collections::VecDeque::new();
        seen[from] = true;
        queue.push_back(from);
        while let Some(v) = queue.pop_front() {
            if v == to {
                break;
            }
            for &slot in &self.adj[v] {
                let w = self.other_end(slot, v);
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some((v, slot));
                    queue.push_back(w);
                }
            }
        }
        let mut path = Vec::new();
        let mut cur = to;
        while let Some((prev, slot)) = parent[cur] {
            path.push(slot);
            cur = prev;
        }
        path.reverse();
        path
    }
}

struct TransportSimplex {
    m: usize,
    n: usize,
    /// Cost in permuted coordinates.
    cost: Vec<Vec<f64>>,
    /// Basis arcs in permuted coordinates with parallel flows.
    arcs: Vec<(usize, usize)>,
    flows: Vec<f64>,
    adj: Vec<Vec<usize>>,
    u: Vec<f64>,
    v: Vec<f64>,
    row_order: Vec<usize>,
    col_order: Vec<usize>,
    iterations: usize,
    cursor: usize,
    cost_scale: f64,
}

impl TransportSimplex {
    fn new(
        a_m: &DiscreteMeasure,
        b_m: &DiscreteMeasure,
        cost_orig: Vec<Vec<f64>>,
        row_order: Vec<usize>,
        col_order: Vec<usize>,
    ) -> Result<Self> {
        let m = a_m.len();
        let n = b_m.len();
        let a: Vec<f64> = row_order.iter().map(|&i| a_m.weight(i)).collect();
        let mut b: Vec<f64> = col_order.iter().map(|&j| b_m.weight(j)).collect();
        // Absorb the sub-1e-12 mass mismatch into the largest demand so the
        // north-west fill closes exactly.
        let diff: f64 = a.iter().sum::<f64>() - b.iter().sum::<f64>();
        if diff.abs() > 1e-9 {
            return Err(Error::Validation(format!("marginal masses differ by {diff:.3e}")));
        }
        let jmax = (0..n).max_by(|&x, &y| b[x].partial_cmp(&b[y]).unwrap()).unwrap();
        b[jmax] += diff;
        let cost: Vec<Vec<f64>> = row_order
            .iter()
            .map(|&i| col_order.iter().map(|&j| cost_orig[i][j]).collect())
            .collect();
        let cost_scale = 1.0
            + cost
                .iter()
                .flatten()
                .fold(0.0_f64, |acc, &c| acc.max(c.abs()));

        // North-west corner start.
        let mut arcs = Vec::with_capacity(m + n - 1);
        let mut flows = Vec::with_capacity(m + n - 1);
        let (mut i, mut j) = (0usize, 0usize);
        let mut rem_a = a.clone();
        let mut rem_b = b.clone();
        loop {
            let f = rem_a[i].min(rem_b[j]).max(0.0);
            arcs.push((i, j));
            flows.push(f);
            rem_a[i] -= f;
            rem_b[j] -= f;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if rem_a[i] <= rem_b[j] && i < m - 1 {
                i += 1;
            } else if j < n - 1 {
                j += 1;
            } else {
                i += 1;
            }
        }
        debug_assert_eq!(arcs.len(), m + n - 1);
        let mut adj = vec![Vec::new(); m + n];
        for (slot, &(r, c)) in arcs.iter().enumerate() {
            adj[r].push(slot);
            adj[m + c].push(slot);
        }
        let mut s = TransportSimplex {
            m,
            n,
            cost,
            arcs,
            flows,
            adj,
            u: vec![0.0; m],
            v: vec![0.0; n],
            row_order,
            col_order,
            iterations: 0,
            cursor: 0,
            cost_scale,
        };
        s.recompute_duals();
        Ok(s)
    }

    fn other_end(&self, slot: usize, node: usize) -> usize {
        let (i, j) = self.arcs[slot];
        if node == i {
            self.m + j
        } else {
            i
        }
    }

    /// BFS over the tree from column node 0 (`v[0] = 0` gauge applied later
    /// in original indices).
    fn recompute_duals(&mut self) {
        let root = self.m;
        let mut seen = vec![false; self.m + self.n];
        seen[root] = true;
        self.v[0] = 0.0;
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(root);
        while let Some(node) = queue.pop_front() {
            for &slot in &self.adj[node] {
                let w = self.other_end(slot, node);
                if seen[w] {
                    continue;
                }
                seen[w] = true;
                let (i, j) = self.arcs[slot];
                if w < self.m {
                    // w is a row: u_i = c_ij - v_j
                    self.u[i] = self.cost[i][j] - self.v[j];
                } else {
                    self.v[j] = self.cost[i][j] - self.u[i];
                }
                queue.push_back(w);
            }
        }
    }

    fn reduced(&self, i: usize, j: usize) -> f64 {
        self.cost[i][j] - self.u[i] - self.v[j]
    }

    /// Most negative reduced cost within rotating blocks; lexicographically
    /// first improving arc in Bland mode.
    fn price(&mut self, bland: bool) -> Option<(usize, usize)> {
        let total = self.m * self.n;
        let tol = -1e-11 * self.cost_scale;
        if bland {
            for flat in 0..total {
                let (i, j) = (flat / self.n, flat % self.n);
                if self.reduced(i, j) < tol {
                    return Some((i, j));
                }
            }
            return None;
        }
        let block = (4 * self.n.max(self.m)).max(4096).min(total);
        let mut scanned = 0;
        let mut best: Option<((usize, usize), f64)> = None;
        while scanned < total {
            let start = self.cursor;
            let chunk = block.min(total - scanned);
            for off in 0..chunk {
                let flat = (start + off) % total;
                let (i, j) = (flat / self.n, flat % self.n);
                let r = self.reduced(i, j);
                if r < tol {
                    match best {
                        Some((_, rb)) if r >= rb => {}
                        _ => best = Some(((i, j), r)),
                    }
                }
            }
            scanned += chunk;
            self.cursor = (start + chunk) % total;
            if best.is_some() {
                return best.map(|(arc, _)| arc);
            }
        }
        None
    }

    fn tree_path(&self, from: usize, to: usize) -> Vec<usize> {
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; self.m + self.n];
        let mut seen = vec![false; self.m + self.n];
        seen[from] = true;
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(from);
        while let Some(vtx) = queue.pop_front() {
            if vtx == to {
                break;
            }
            for &slot in &self.adj[vtx] {
                let w = self.other_end(slot, vtx);
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some((vtx, slot));
                    queue.push_back(w);
                }
            }
        }
        let mut path = Vec::new();
        let mut cur = to;
        while let Some((prev, slot)) = parent[cur] {
            path.push(slot);
            cur = prev;
        }
        path.reverse();
        path
    }

    fn optimize(&mut self) -> Result<()> {
        let cap = 400_000 + 200 * (self.m + self.n);
        let mut degen_streak = 0usize;
        let mut bland = false;
        while let Some((ei, ej)) = self.price(bland) {
            if self.iterations > cap {
                return Err(Error::Solver(format!(
                    "transportation simplex exceeded {cap} pivots on a {}x{} instance",
                    self.m, self.n
                )));
            }
            // Path from the entering arc's row node to its column node; arcs
            // at even positions lose flow.
            let path = self.tree_path(ei, self.m + ej);
            let mut theta = f64::INFINITY;
            let mut leave: Option<usize> = None;
            for (pos, &slot) in path.iter().enumerate() {
                if pos % 2 == 0 {
                    let f = self.flows[slot];
                    let better = match leave {
                        None => true,
                        Some(cur) => {
                            f < theta - 1e-15
                                || ((f - theta).abs() <= 1e-15 && self.arcs[slot] < self.arcs[cur])
                        }
                    };
                    if better {
                        theta = f;
                        leave = Some(slot);
                    }
                }
            }
            let leave = leave.ok_or_else(|| Error::Solver("degenerate pivot path".into()))?;
            for (pos, &slot) in path.iter().enumerate() {
                if pos % 2 == 0 {
                    self.flows[slot] = (self.flows[slot] - theta).max(0.0);
                } else {
                    self.flows[slot] += theta;
                }
            }
            // Replace the leaving arc by the entering one in the same slot.
            let (li, lj) = self.arcs[leave];
            self.adj[li].retain(|&s| s != leave);
            self.adj[self.m + lj].retain(|&s| s != leave);
            self.arcs[leave] = (ei, ej);
            self.flows[leave] = theta;
            self.adj[ei].push(leave);
            self.adj[self.m + ej].push(leave);
            self.recompute_duals();
            self.iterations += 1;
            if theta <= 1e-15 {
                degen_streak += 1;
                if degen_streak > 2 * (self.m + self.n) {
                    bland = true;
                }
            } else {
                degen_streak = 0;
                bland = false;
            }
        }
        Ok(())
    }

    fn into_solution(self, a_m: &DiscreteMeasure, b_m: &DiscreteMeasure) -> Result<LPSolution> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        let mut basis = Vec::with_capacity(self.arcs.len());
        for (slot, &(i, j)) in self.arcs.iter().enumerate() {
            let (oi, oj) = (self.row_order[i], self.col_order[j]);
            basis.push((oi, oj));
            if self.flows[slot] > 0.0 {
                entries.push((oi, oj, self.flows[slot]));
            }
        }
        entries.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        basis.sort_unstable();

        let mut cost = vec![vec![0.0; self.n]; self.m];
        for i in 0..self.m {
            for j in 0..self.n {
                cost[self.row_order[i]][self.col_order[j]] = self.cost[i][j];
            }
        }
        let mut u = vec![0.0; self.m];
        let mut v = vec![0.0; self.n];
        for i in 0..self.m {
            u[self.row_order[i]] = self.u[i];
        }
        for j in 0..self.n {
            v[self.col_order[j]] = self.v[j];
        }
        // Gauge: v = 0 at the first atom of the second marginal.
        let shift = v[0];
        for vj in v.iter_mut() {
            *vj -= shift;
        }
        for ui in u.iter_mut() {
            *ui += shift;
        }
        let value: f64 = entries.iter().map(|&(i, j, f)| f * cost[i][j]).sum();
        let mut degenerate = false;
        let in_basis: std::collections::HashSet<(usize, usize)> = basis.iter().copied().collect();
        'outer: for i in 0..self.m {
            for j in 0..self.n {
                if !in_basis.contains(&(i, j)) && cost[i][j] - u[i] - v[j] < 1e-9 {
                    degenerate = true;
                    break 'outer;
                }
            }
        }
        let coupling = Coupling::new(a_m.clone(), b_m.clone(), entries, value)?;
        Ok(LPSolution {
            coupling,
            potentials: Potentials { u, v },
            value,
            iterations: self.iterations,
            degenerate,
            basis,
            cost,
        })
    }
}
