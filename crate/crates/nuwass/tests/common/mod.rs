//! Shared test support: brute-force oracles independent of the simplex
//! path, and seeded instance helpers.

use nuwass::measures::{sq_dist, DiscreteMeasure};

/// Exhaustively enumerates vertex couplings of a small transportation
/// polytope by greedy saturation in every order, returning the minimum cost.
/// Every basic feasible solution is reachable this way, so the minimum over
/// the enumeration is the exact optimal value.
pub fn bf_ot_value(a: &[f64], b: &[f64], cost: &dyn Fn(usize, usize) -> f64) -> f64 {
    let mut best = f64::INFINITY;
    let mut rem_a = a.to_vec();
    let mut rem_b = b.to_vec();
    bf_rec(&mut rem_a, &mut rem_b, cost, 0.0, &mut best);
    best
}

fn bf_rec(
    rem_a: &mut [f64],
    rem_b: &mut [f64],
    cost: &dyn Fn(usize, usize) -> f64,
    acc: f64,
    best: &mut f64,
) {
    const TOL: f64 = 1e-13;
    if acc >= *best {
        return;
    }
    if rem_a.iter().all(|&r| r <= TOL) {
        *best = (*best).min(acc);
        return;
    }
    // Branch over every live pair: restricting the row choice misses
    // vertices whose row splits feed columns saturated by later rows.
    for i in 0..rem_a.len() {
        if rem_a[i] <= TOL {
            continue;
        }
        for j in 0..rem_b.len() {
            if rem_b[j] > TOL {
                let delta = rem_a[i].min(rem_b[j]);
                rem_a[i] -= delta;
                rem_b[j] -= delta;
                bf_rec(rem_a, rem_b, cost, acc + delta * cost(i, j), best);
                rem_a[i] += delta;
                rem_b[j] += delta;
            }
        }
    }
}

/// All optimal vertex couplings (cost within `1e-11` of the optimum).
pub fn bf_optimal_plans(
    a: &[f64],
    b: &[f64],
    cost: &dyn Fn(usize, usize) -> f64,
) -> Vec<Vec<(usize, usize, f64)>> {
    let opt = bf_ot_value(a, b, cost);
    let mut plans = Vec::new();
    let mut rem_a = a.to_vec();
    let mut rem_b = b.to_vec();
    let mut current = Vec::new();
    collect_rec(&mut rem_a, &mut rem_b, cost, 0.0, opt, &mut current, &mut plans);
    // Deduplicate by support signature.
    plans.sort_by(|x, y| format!("{x:?}").cmp(&format!("{y:?}")));
    plans.dedup_by(|x, y| {
        x.len() == y.len()
            && x.iter()
                .zip(y.iter())
                .all(|(p, q)| p.0 == q.0 && p.1 == q.1 && (p.2 - q.2).abs() < 1e-12)
    });
    plans
}

#[allow(clippy::too_many_arguments)]
fn collect_rec(
    rem_a: &mut [f64],
    rem_b: &mut [f64],
    cost: &dyn Fn(usize, usize) -> f64,
    acc: f64,
    opt: f64,
    current: &mut Vec<(usize, usize, f64)>,
    plans: &mut Vec<Vec<(usize, usize, f64)>>,
) {
    const TOL: f64 = 1e-13;
    if acc > opt + 1e-11 {
        return;
    }
    if rem_a.iter().all(|&r| r <= TOL) {
        let mut plan = current.clone();
        plan.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        plans.push(plan);
        return;
    }
    if plans.len() > 4000 {
        return; // cap blowup; instances in tests are tiny
    }
    for i in 0..rem_a.len() {
        if rem_a[i] <= TOL {
            continue;
        }
        for j in 0..rem_b.len() {
            if rem_b[j] > TOL {
                let delta = rem_a[i].min(rem_b[j]);
                rem_a[i] -= delta;
                rem_b[j] -= delta;
                current.push((i, j, delta));
                collect_rec(rem_a, rem_b, cost, acc + delta * cost(i, j), opt, current, plans);
                current.pop();
                rem_a[i] += delta;
                rem_b[j] += delta;
            }
        }
    }
}

/// Brute-force `W_ν²`: for every pair of optimal vertex plans to the
/// reference, disintegrate and couple the conditional slices by exhaustive
/// search; minimize over the plan pairs. Exact whenever the optimal plans
/// are vertices of their faces (always true when each face is a singleton).
pub fn bf_w_nu_sq(mu0: &DiscreteMeasure, mu1: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let cost0 = |i: usize, k: usize| sq_dist(mu0.point(i), nu.point(k));
    let cost1 = |j: usize, k: usize| sq_dist(mu1.point(j), nu.point(k));
    let plans0 = bf_optimal_plans(mu0.weights(), nu.weights(), &cost0);
    let plans1 = bf_optimal_plans(mu1.weights(), nu.weights(), &cost1);
    let mut best = f64::INFINITY;
    for p0 in &plans0 {
        for p1 in &plans1 {
            let mut total = 0.0;
            for (k, &nu_k) in nu.weights().iter().enumerate() {
                if nu_k <= 0.0 {
                    continue;
                }
                let row0: Vec<(usize, f64)> =
                    p0.iter().filter(|&&(_, kk, m)| kk == k && m > 1e-13).map(|&(i, _, m)| (i, m / nu_k)).collect();
                let row1: Vec<(usize, f64)> =
                    p1.iter().filter(|&&(_, kk, m)| kk == k && m > 1e-13).map(|&(j, _, m)| (j, m / nu_k)).collect();
                let w0: Vec<f64> = row0.iter().map(|&(_, m)| m).collect();
                let w1: Vec<f64> = row1.iter().map(|&(_, m)| m).collect();
                let slice_cost = |ii: usize, jj: usize| sq_dist(mu0.point(row0[ii].0), mu1.point(row1[jj].0));
                total += nu_k * bf_ot_value(&w0, &w1, &slice_cost);
            }
            best = best.min(total);
        }
    }
    best
}
