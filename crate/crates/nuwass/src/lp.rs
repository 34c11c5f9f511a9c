//! A small deterministic revised-simplex solver for the constrained and
//! multi-marginal coupling problems.
//!
//! Columns are sparse (coupling variables touch a handful of marginal rows),
//! the basis inverse is dense (row counts stay small at desk scale). Two
//! phases with artificial variables; entering variable by most negative
//! reduced cost with smallest-index tie-breaking, switching to Bland's rule
//! after a streak of degenerate pivots.

use crate::{Error, Result};

/// Row sense of a constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowType {
    Eq,
    Le,
}

/// `min c·x  s.t.  A x {=,<=} b, x >= 0`.
#[derive(Debug, Clone)]
pub struct LpProblem {
    n_vars: usize,
    costs: Vec<f64>,
    /// Per-variable sparse column: `(row, coefficient)`.
    cols: Vec<Vec<(usize, f64)>>,
    rows: Vec<RowType>,
    rhs: Vec<f64>,
}

/// Vertex solution with row duals and basis information.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub duals: Vec<f64>,
    pub iterations: usize,
    /// A nonbasic structural variable has (near-)zero reduced cost:
    /// alternative optima are plausible.
    pub degenerate: bool,
}

impl LpProblem {
    pub fn new(n_vars: usize, costs: Vec<f64>) -> Self {
        assert_eq!(costs.len(), n_vars);
        LpProblem { n_vars, costs, cols: vec![Vec::new(); n_vars], rows: Vec::new(), rhs: Vec::new() }
    }

    /// Adds a row `sum coeff_j x_j {=,<=} rhs`; `terms` must reference valid
    /// variables.
    pub fn add_row(&mut self, sense: RowType, rhs: f64, terms: &[(usize, f64)]) {
        let r = self.rows.len();
        self.rows.push(sense);
        self.rhs.push(rhs);
        for &(j, a) in terms {
            debug_assert!(j < self.n_vars);
            if a != 0.0 {
                self.cols[j].push((r, a));
            }
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn solve(&self) -> Result<LpSolution> {
        Simplex::new(self)?.run()
    }
}

struct Simplex {
    m: usize,
    /// total columns: structural + slack + artificial
    n_total: usize,
    n_struct: usize,
    n_slack: usize,
    cols: Vec<Vec<(usize, f64)>>,
    costs: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    binv: Vec<Vec<f64>>,
    xb: Vec<f64>,
    iterations: usize,
    cost_scale: f64,
}

const ENTER_TOL: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 128;

impl Simplex {
    fn new(p: &LpProblem) -> Result<Self> {
        let m = p.rows.len();
        if m == 0 {
            return Err(Error::Validation("LP has no constraints".into()));
        }
        let n_slack = p.rows.iter().filter(|&&t| t == RowType::Le).count();
        let n_struct = p.n_vars;
        let n_total = n_struct + n_slack + m;
        let mut cols = Vec::with_capacity(n_total);
        let mut costs = vec![0.0; n_total];

        // Flip rows so the rhs is nonnegative (keeps the artificial start
        // primal feasible).
        let flip: Vec<f64> = p.rhs.iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();

        for j in 0..n_struct {
            let col: Vec<(usize, f64)> = p.cols[j].iter().map(|&(r, a)| (r, a * flip[r])).collect();
            cols.push(col);
            costs[j] = p.costs[j];
        }
        let mut slack_id = n_struct;
        for (r, &t) in p.rows.iter().enumerate() {
            if t == RowType::Le {
                cols.push(vec![(r, flip[r])]);
                debug_assert_eq!(cols.len() - 1, slack_id);
                slack_id += 1;
            }
        }
        for r in 0..m {
            cols.push(vec![(r, 1.0)]);
        }
        let rhs: Vec<f64> = p.rhs.iter().zip(&flip).map(|(&b, &f)| b * f).collect();
        let basis: Vec<usize> = (0..m).map(|r| n_struct + n_slack + r).collect();
        let binv: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let xb = rhs.clone();
        let cost_scale = 1.0 + p.costs.iter().fold(0.0_f64, |a, &c| a.max(c.abs()));
        Ok(Simplex {
            m,
            n_total,
            n_struct,
            n_slack,
            cols,
            costs,
            rhs,
            basis,
            binv,
            xb,
            iterations: 0,
            cost_scale,
        })
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n_struct + self.n_slack
    }

    fn col_times_binv_row(&self, j: usize, y: &[f64]) -> f64 {
        self.cols[j].iter().map(|&(r, a)| y[r] * a).sum()
    }

    /// `d = B^{-1} A_j`.
    fn direction(&self, j: usize) -> Vec<f64> {
        let mut d = vec![0.0; self.m];
        for &(r, a) in &self.cols[j] {
            if a != 0.0 {
                for i in 0..self.m {
                    d[i] += self.binv[i][r] * a;
                }
            }
        }
        d
    }

    fn dual_row(&self, phase1: bool) -> Vec<f64> {
        // y = c_B B^{-1}
        let mut y = vec![0.0; self.m];
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = if phase1 {
                if self.is_artificial(b) {
                    1.0
                } else {
                    0.0
                }
            } else {
                self.costs[b]
            };
            if cb != 0.0 {
                for r in 0..self.m {
                    y[r] += cb * self.binv[i][r];
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64], phase1: bool) -> f64 {
        let cj = if phase1 {
            if self.is_artificial(j) {
                1.0
            } else {
                0.0
            }
        } else {
            self.costs[j]
        };
        cj - self.col_times_binv_row(j, y)
    }

    fn refactorize(&mut self) -> Result<()> {
        // Rebuild B^{-1} by Gauss-Jordan with partial pivoting.
        let m = self.m;
        let mut aug: Vec<Vec<f64>> = vec![vec![0.0; 2 * m]; m];
        for (i, &b) in self.basis.iter().enumerate() {
            for &(r, a) in &self.cols[b] {
                aug[r][i] = a;
            }
        }
        for i in 0..m {
            aug[i][m + i] = 1.0;
        }
        for c in 0..m {
            let piv = (c..m)
                .max_by(|&a, &b| aug[a][c].abs().partial_cmp(&aug[b][c].abs()).unwrap())
                .unwrap();
            if aug[piv][c].abs() < 1e-13 {
                return Err(Error::Solver("singular basis during refactorization".into()));
            }
            aug.swap(c, piv);
            let p = aug[c][c];
            for v in aug[c].iter_mut() {
                *v /= p;
            }
            for r in 0..m {
                if r != c && aug[r][c] != 0.0 {
                    let f = aug[r][c];
                    for k in 0..2 * m {
                        aug[r][k] -= f * aug[c][k];
                    }
                }
            }
        }
        for i in 0..m {
            for r in 0..m {
                self.binv[i][r] = aug[i][m + r];
            }
        }
        // x_B = B^{-1} b
        for i in 0..m {
            self.xb[i] = (0..m).map(|r| self.binv[i][r] * self.rhs[r]).sum();
            if self.xb[i] < 0.0 && self.xb[i] > -1e-9 {
                self.xb[i] = 0.0;
            }
        }
        Ok(())
    }

    fn pivot(&mut self, enter: usize, leave_row: usize, d: &[f64]) {
        let theta = self.xb[leave_row] / d[leave_row];
        for i in 0..self.m {
            if i != leave_row {
                self.xb[i] -= theta * d[i];
                if self.xb[i] < 0.0 && self.xb[i] > -1e-11 {
                    self.xb[i] = 0.0;
                }
            }
        }
        self.xb[leave_row] = theta;
        // B^{-1} update: eliminate the entering column from other rows.
        let piv = d[leave_row];
        for r in 0..self.m {
            self.binv[leave_row][r] /= piv;
        }
        for i in 0..self.m {
            if i != leave_row && d[i] != 0.0 {
                let f = d[i];
                for r in 0..self.m {
                    self.binv[i][r] -= f * self.binv[leave_row][r];
                }
            }
        }
        self.basis[leave_row] = enter;
    }

    /// One simplex phase. Returns true when optimal was reached.
    fn phase(&mut self, phase1: bool, max_iters: usize) -> Result<()> {
        let mut degen_streak = 0usize;
        loop {
            if self.iterations >= max_iters {
                return Err(Error::Solver(format!(
                    "simplex iteration cap {max_iters} exceeded (m = {}, n = {})",
                    self.m, self.n_total
                )));
            }
            if self.iterations % REFACTOR_EVERY == REFACTOR_EVERY - 1 {
                self.refactorize()?;
            }
            let y = self.dual_row(phase1);
            let tol = ENTER_TOL * self.cost_scale;
            let bland = degen_streak > 4 * self.m + 16;
            let mut enter: Option<(usize, f64)> = None;
            for j in 0..self.n_total {
                if !phase1 && self.is_artificial(j) {
                    continue;
                }
                if self.basis.contains(&j) {
                    continue;
                }
                let r = self.reduced_cost(j, &y, phase1);
                if r < -tol {
                    if bland {
                        enter = Some((j, r));
                        break;
                    }
                    match enter {
                        Some((_, best)) if r >= best => {}
                        _ => enter = Some((j, r)),
                    }
                }
            }
            let Some((enter, _)) = enter else {
                return Ok(());
            };
            let d = self.direction(enter);
            let mut leave: Option<usize> = None;
            let mut best_theta = f64::INFINITY;
            for i in 0..self.m {
                if d[i] > PIVOT_TOL {
                    let theta = (self.xb[i].max(0.0)) / d[i];
                    let better = match leave {
                        None => true,
                        Some(cur) => {
                            theta < best_theta - 1e-12
                                || (theta < best_theta + 1e-12 && self.basis[i] < self.basis[cur])
                        }
                    };
                    if better {
                        best_theta = theta;
                        leave = Some(i);
                    }
                }
            }
            let Some(leave_row) = leave else {
                return Err(Error::Solver("LP is unbounded".into()));
            };
            if best_theta <= 1e-12 {
                degen_streak += 1;
            } else {
                degen_streak = 0;
            }
            self.pivot(enter, leave_row, &d);
            self.iterations += 1;
        }
    }

    fn run(mut self) -> Result<LpSolution> {
        let max_iters = 20_000 + 400 * self.m + 2 * self.n_total;
        self.phase(true, max_iters)?;
        let phase1_obj: f64 = self
            .basis
            .iter()
            .zip(&self.xb)
            .filter(|&(&b, _)| self.is_artificial(b))
            .map(|(_, &x)| x)
            .sum();
        if phase1_obj > 1e-7 {
            return Err(Error::Infeasible(format!("phase-1 objective {phase1_obj:.3e}")));
        }
        // Drive zero-level artificials out of the basis where a usable pivot
        // exists; rows without one are redundant and keep their artificial
        // pinned at zero.
        for i in 0..self.m {
            if self.is_artificial(self.basis[i]) {
                let mut replaced = false;
                for j in 0..self.n_struct + self.n_slack {
                    if self.basis.contains(&j) {
                        continue;
                    }
                    let d = self.direction(j);
                    if d[i].abs() > 1e-7 {
                        self.pivot(j, i, &d);
                        self.iterations += 1;
                        replaced = true;
                        break;
                    }
                }
                if !replaced {
                    continue;
                }
            }
        }
        self.refactorize()?;
        self.phase(false, max_iters)?;
        self.refactorize()?;

        let mut x = vec![0.0; self.n_struct];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n_struct {
                x[b] = self.xb[i].max(0.0);
            } else if self.is_artificial(b) && self.xb[i] > 1e-7 {
                return Err(Error::Solver(format!(
                    "artificial variable stuck at level {:.3e}",
                    self.xb[i]
                )));
            }
        }
        let objective: f64 = x.iter().zip(&self.costs).map(|(xi, ci)| xi * ci).sum();
        let y = self.dual_row(false);
        let mut degenerate = false;
        for j in 0..self.n_struct {
            if self.basis.contains(&j) {
                continue;
            }
            let r = self.reduced_cost(j, &y, false);
            if r < 1e-9 * self.cost_scale {
                degenerate = true;
                break;
            }
        }
        Ok(LpSolution { x, objective, duals: y, iterations: self.iterations, degenerate })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_transport_as_lp() {
        // 2x2 transport: a = (0.5, 0.5), b = (0.5, 0.5),
        // costs [[0, 1], [1, 0]] -> identity coupling, value 0.
        let mut p = LpProblem::new(4, vec![0.0, 1.0, 1.0, 0.0]);
        p.add_row(RowType::Eq, 0.5, &[(0, 1.0), (1, 1.0)]);
        p.add_row(RowType::Eq, 0.5, &[(2, 1.0), (3, 1.0)]);
        p.add_row(RowType::Eq, 0.5, &[(0, 1.0), (2, 1.0)]);
        p.add_row(RowType::Eq, 0.5, &[(1, 1.0), (3, 1.0)]);
        let s = p.solve().unwrap();
        assert!(s.objective.abs() < 1e-12);
        assert!((s.x[0] - 0.5).abs() < 1e-12);
        assert!((s.x[3] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn inequality_rows() {
        // min -x - y st x <= 2, y <= 3, x + y <= 4
        let mut p = LpProblem::new(2, vec![-1.0, -1.0]);
        p.add_row(RowType::Le, 2.0, &[(0, 1.0)]);
        p.add_row(RowType::Le, 3.0, &[(1, 1.0)]);
        p.add_row(RowType::Le, 4.0, &[(0, 1.0), (1, 1.0)]);
        let s = p.solve().unwrap();
        assert!((s.objective + 4.0).abs() < 1e-10);
    }

    #[test]
    fn infeasible_detected() {
        let mut p = LpProblem::new(1, vec![1.0]);
        p.add_row(RowType::Eq, 1.0, &[(0, 1.0)]);
        p.add_row(RowType::Eq, 2.0, &[(0, 1.0)]);
        assert!(matches!(p.solve(), Err(Error::Infeasible(_))));
    }

    #[test]
    fn redundant_rows_tolerated() {
        // Duplicate marginal constraints (sum-to-one appears twice).
        let mut p = LpProblem::new(2, vec![1.0, 2.0]);
        p.add_row(RowType::Eq, 1.0, &[(0, 1.0), (1, 1.0)]);
        p.add_row(RowType::Eq, 1.0, &[(0, 1.0), (1, 1.0)]);
        let s = p.solve().unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert!((s.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_alternative_optima_flagged() {
        // both columns cost 1: any split optimal
        let mut p = LpProblem::new(2, vec![1.0, 1.0]);
        p.add_row(RowType::Eq, 1.0, &[(0, 1.0), (1, 1.0)]);
        let s = p.solve().unwrap();
        assert!(s.degenerate);
        assert!((s.objective - 1.0).abs() < 1e-12);
    }
}
