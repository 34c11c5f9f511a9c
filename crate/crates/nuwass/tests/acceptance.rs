//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers. Tolerances are pinned here, not configurable.

mod common;

use nuwass::cost::{CostSpec, Curve, EmbeddedForm};
use nuwass::gen;
use nuwass::geodesics::{
    convexity_scan, geodesic, geodesic_check, uniform_t_grid, DensityFn, FunctionalSpec,
    HistogramGrid, PointFn,
};
use nuwass::layerwise::{knothe_rosenblatt_2d, layerwise_equivalence_check};
use nuwass::measures::{DiscreteMeasure, GridMeasure, TriCoupling};
use nuwass::numetric::{
    default_eps_schedule, mm_epsilon, mm_limit, w_nu, w_nu_auto, w_nu_disintegration,
};
use nuwass::ot::{is_unique_plan, ot_1d, solve_ot, Uniqueness};
use nuwass::unequal::nestedness_check;
use std::time::Instant;

fn segment_cost(lo: f64, hi: f64) -> CostSpec {
    CostSpec::embedded(
        Curve::Segment { origin: vec![0.0, 0.0], direction: vec![1.0, 0.0], range: [lo, hi] },
        EmbeddedForm::SqDist,
    )
    .unwrap()
}

/// Criterion 1: the triangle-failure example reproduces the three distances
/// and the violation margin within 1e-9, in under a second.
#[test]
fn acceptance_01_triangle_failure() {
    let t0 = Instant::now();
    let eps = 0.5;
    let (nu, mu0, mu1, mu2) = gen::paper_triangle(eps).unwrap();
    let c = CostSpec::Quadratic;
    let w01 = w_nu(&mu0, &mu1, &nu, &c).unwrap().value;
    let w02 = w_nu(&mu0, &mu2, &nu, &c).unwrap().value;
    let w12 = w_nu(&mu1, &mu2, &nu, &c).unwrap().value;
    assert!((w01 - 0.5).abs() < 1e-9, "W(mu0,mu1) = {w01}");
    assert!((w02 - 0.5).abs() < 1e-9, "W(mu0,mu2) = {w02}");
    assert!((w12 - 2.0).abs() < 1e-9, "W(mu1,mu2) = {w12}");
    let violation = w12 - w01 - w02;
    assert!(violation >= 1.0 - 1e-9, "violation {violation}");
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 1 (triangle failure): PASS — W01={w01:.9}, W02={w02:.9}, W12={w12:.9}, violation={violation:.9}, {elapsed:?}"
    );
}

/// Criterion 2: with a Dirac reference the metric collapses to the plain
/// quadratic Wasserstein distance on 20 random instances.
#[test]
fn acceptance_02_dirac_base() {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let n0 = 2 + (seed % 7) as usize;
        let n1 = 2 + ((seed / 2) % 7) as usize;
        let mu0 = gen::weighted_cloud(seed * 3 + 1, n0, 2, 1.0).unwrap();
        let mu1 = gen::weighted_cloud(seed * 3 + 2, n1, 2, 1.0).unwrap();
        let nu = DiscreteMeasure::dirac(vec![0.1 * seed as f64 / 20.0, -0.3]).unwrap();
        let r = w_nu(&mu0, &mu1, &nu, &CostSpec::Quadratic).unwrap();
        let w2 = solve_ot(&mu0, &mu1, &CostSpec::Quadratic).unwrap().value.sqrt();
        worst = worst.max((r.value - w2).abs());
    }
    assert!(worst < 1e-8, "worst gap {worst:.3e}");
    println!("ACCEPTANCE 2 (Dirac base = W2): PASS — worst |W_nu - W2| = {worst:.3e} over 20 instances");
}

/// Criterion 3: constrained-LP and disintegration agree on instances with
/// unique plans, and both match the exhaustive vertex-search oracle on
/// 3-atom instances.
#[test]
fn acceptance_03_method_agreement() {
    let c = CostSpec::Quadratic;
    let mut worst_pair: f64 = 0.0;
    let mut used = 0;
    let mut seed = 0u64;
    while used < 20 && seed < 200 {
        seed += 1;
        let mu0 = gen::weighted_cloud(seed * 11 + 1, 2 + (seed % 7) as usize, 2, 1.0).unwrap();
        let mu1 = gen::weighted_cloud(seed * 11 + 2, 2 + ((seed / 3) % 7) as usize, 2, 1.0).unwrap();
        let nu = gen::weighted_cloud(seed * 11 + 3, 2 + ((seed / 2) % 5) as usize, 2, 1.0).unwrap();
        let lp = w_nu(&mu0, &mu1, &nu, &c).unwrap();
        if lp.uniqueness.iter().any(|&u| u != Uniqueness::Unique) {
            continue;
        }
        used += 1;
        let pi0 = solve_ot(&mu0, &nu, &c).unwrap().coupling.transposed();
        let pi1 = solve_ot(&mu1, &nu, &c).unwrap().coupling.transposed();
        let dis = w_nu_disintegration(&pi0, &pi1, &nu, &c).unwrap();
        worst_pair = worst_pair.max((lp.value - dis.value).abs());
    }
    assert_eq!(used, 20, "could not collect 20 unique instances");
    assert!(worst_pair < 1e-8, "worst lp-vs-disintegration gap {worst_pair:.3e}");

    // 3-atom instances against the brute-force oracle.
    let mut worst_bf: f64 = 0.0;
    let mut oracle_used = 0;
    for seed in 0..10u64 {
        let mu0 = gen::weighted_cloud(seed * 7 + 3, 3, 2, 1.0).unwrap();
        let mu1 = gen::weighted_cloud(seed * 7 + 4, 3, 2, 1.0).unwrap();
        let nu = gen::weighted_cloud(seed * 7 + 5, 3, 2, 1.0).unwrap();
        let lp = w_nu(&mu0, &mu1, &nu, &c).unwrap();
        if lp.uniqueness.iter().any(|&u| u != Uniqueness::Unique) {
            continue;
        }
        oracle_used += 1;
        let bf = common::bf_w_nu_sq(&mu0, &mu1, &nu);
        let pi0 = solve_ot(&mu0, &nu, &c).unwrap().coupling.transposed();
        let pi1 = solve_ot(&mu1, &nu, &c).unwrap().coupling.transposed();
        let dis = w_nu_disintegration(&pi0, &pi1, &nu, &c).unwrap();
        worst_bf = worst_bf.max((lp.value * lp.value - bf).abs());
        worst_bf = worst_bf.max((dis.value * dis.value - bf).abs());
    }
    assert!(oracle_used >= 8, "only {oracle_used} unique oracle instances");
    assert!(worst_bf < 1e-8, "worst oracle gap {worst_bf:.3e}");
    println!(
        "ACCEPTANCE 3 (method agreement): PASS — lp vs disint {worst_pair:.3e} (20 unique), vs oracle {worst_bf:.3e} ({oracle_used} instances)"
    );
}

/// Criterion 4: the ε-relaxation converges — cross terms within 1e-4 of
/// `W_ν²` at ε = 1e-4, the Γ-functional monotone and within 1e-3 — on the
/// triangle instance and five random instances, all within 30 s.
#[test]
fn acceptance_04_eps_limit() {
    let t0 = Instant::now();
    let c = CostSpec::Quadratic;
    let schedule = default_eps_schedule();
    let mut cases: Vec<(DiscreteMeasure, DiscreteMeasure, DiscreteMeasure)> = Vec::new();
    {
        let (nu, mu0, mu1, _) = gen::paper_triangle(0.5).unwrap();
        cases.push((mu0, mu1, nu));
    }
    for seed in [101u64, 102, 103, 104, 105] {
        cases.push((
            gen::weighted_cloud(seed + 50, 6, 2, 1.0).unwrap(),
            gen::weighted_cloud(seed + 100, 5, 2, 1.0).unwrap(),
            gen::weighted_cloud(seed, 4, 2, 1.0).unwrap(),
        ));
    }
    let mut worst_cross: f64 = 0.0;
    let mut worst_f: f64 = 0.0;
    for (idx, (mu0, mu1, nu)) in cases.iter().enumerate() {
        let lim = mm_limit(mu0, mu1, nu, &c, &schedule).unwrap();
        let last = lim.table.last().unwrap();
        assert!(lim.converged, "case {idx} did not converge: {last:?}");
        worst_cross = worst_cross.max((last.cross_term - lim.w_nu_sq).abs());
        // Γ-functional: monotone non-decreasing along the decreasing
        // schedule, converging to W_ν² from below.
        for w in lim.table.windows(2) {
            assert!(w[1].f_eps >= w[0].f_eps - 1e-8, "case {idx}: F_eps not monotone");
        }
        for row in &lim.table {
            assert!(row.f_eps <= lim.w_nu_sq + 1e-8, "case {idx}: F_eps above W_nu^2");
        }
        worst_f = worst_f.max((last.f_eps - lim.w_nu_sq).abs());
    }
    assert!(worst_cross < 1e-4, "worst cross gap {worst_cross:.3e}");
    assert!(worst_f < 1e-3, "worst F gap {worst_f:.3e}");

    // Triangle instance at ε = 1e-3: pair costs exactly optimal, cross
    // bounded by the square diameter.
    {
        let (nu, mu0, mu1, _) = gen::paper_triangle(0.5).unwrap();
        let base0 = solve_ot(&mu0, &nu, &c).unwrap().value;
        let base1 = solve_ot(&mu1, &nu, &c).unwrap().value;
        let mm = mm_epsilon(&mu0, &mu1, &nu, &c, 1e-3).unwrap();
        assert!((mm.pair_costs[0] - base0).abs() < 1e-9);
        assert!((mm.pair_costs[1] - base1).abs() < 1e-9);
        assert!(mm.cross_term <= 4.0 + 1e-12);
    }
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 4 (eps limit): PASS — worst cross gap {worst_cross:.3e}, worst F gap {worst_f:.3e}, {elapsed:?}"
    );
}

/// Criterion 5: layerwise equivalence for a segment reference on correlated
/// Gaussian grid pairs — below 2 % at 32², shrinking at 64².
#[test]
fn acceptance_05_layerwise_equivalence() {
    let seg = Curve::Segment { origin: vec![0.0, 0.0], direction: vec![1.0, 0.0], range: [-0.2, 1.2] };
    let mut gaps = Vec::new();
    for (n, nu_n) in [(32usize, 48usize), (64, 96)] {
        let mu0 = gen::grid_gaussian(11, n, [0.0, 1.0], 2).unwrap().to_discrete().unwrap();
        let mu1 = gen::grid_gaussian(12, n, [0.0, 1.0], 2).unwrap().to_discrete().unwrap();
        let nu = GridMeasure::new(vec![[-0.1, 1.1]], vec![nu_n], vec![1.0 / 1.2; nu_n]).unwrap();
        let (rep, _) = layerwise_equivalence_check(&mu0, &mu1, &seg, &nu, 64, 0.02).unwrap();
        assert!(rep.pass, "{n}x{n}: rel gap {:.3e}", rep.rel_gap);
        gaps.push(rep.rel_gap);
    }
    assert!(gaps[1] < gaps[0], "gap did not shrink: {gaps:?}");
    println!(
        "ACCEPTANCE 5 (layerwise equivalence): PASS — rel gap {:.3e} at 32², {:.3e} at 64²",
        gaps[0], gaps[1]
    );
}

/// Criterion 6: on 20-point planar clouds with distinct coordinates, the
/// optimal coupling against a fine segment reference is exactly the
/// Knothe-Rosenblatt permutation.
#[test]
fn acceptance_06_kr_coupling() {
    let mu0 = gen::point_cloud(21, 20, 2, 1.0).unwrap();
    let mu1 = gen::point_cloud(22, 20, 2, 1.0).unwrap();
    let nu = gen::segment_param_cloud(60, -1.1, 1.1).unwrap();
    let c = segment_cost(-1.1, 1.1);
    let r = w_nu(&mu0, &mu1, &nu, &c).unwrap();
    let kr = knothe_rosenblatt_2d(&mu0, &mu1).unwrap();
    let pair = r.gamma.project_x0x1().unwrap();
    // The LP vertex carries face-slack dust below 1e-7; the support after
    // pruning must be exactly the permutation with uniform masses.
    let mut off_mass: f64 = 0.0;
    let mut on_pairs = vec![false; mu0.len()];
    for &(i, j, m) in pair.entries() {
        if m <= 1e-7 {
            off_mass += m;
            continue;
        }
        assert_eq!(kr.permutation[i], j, "support entry ({i},{j}) with mass {m:.3e} off the permutation");
        assert!((m - 0.05).abs() < 1e-6, "pair ({i},{j}) mass {m}");
        on_pairs[i] = true;
    }
    assert!(on_pairs.iter().all(|&b| b), "some pair missing");
    assert!(off_mass < 1e-6, "off-support dust {off_mass:.3e}");
    println!(
        "ACCEPTANCE 6 (KR coupling): PASS — coupling support = KR permutation, dust {off_mass:.3e}"
    );
}

/// Criterion 7: the geodesic property `W_ν(μ_s, μ_t) = |t-s| W_ν(μ₀, μ₁)`
/// on a 9-point grid for the segment-reference grid instance.
#[test]
fn acceptance_07_geodesic_property() {
    let g0 = GridMeasure::new(vec![[0.0, 1.0], [0.0, 1.0]], vec![16, 16], vec![1.0; 256]).unwrap();
    let mu0 = g0.to_discrete().unwrap();
    let mu1 = mu0.translated(&[0.4, 0.25]).unwrap();
    let nu = gen::segment_param_cloud(16, 0.0, 1.0).unwrap();
    let c = segment_cost(0.0, 1.0);
    let r = w_nu_auto(&mu0, &mu1, &nu, &c).unwrap();
    let curve = geodesic(&r.gamma, &uniform_t_grid(9)).unwrap();
    let rep = geodesic_check(&curve, &nu, &c).unwrap();
    assert!(rep.pass, "max error {:.3e} vs w01 {:.6}", rep.max_error, rep.w01);
    assert!(rep.max_error < 1e-6 * rep.w01 + 1e-9);
    println!(
        "ACCEPTANCE 7 (geodesic property): PASS — w01={:.6}, max deviation {:.3e} over {} pairs",
        rep.w01,
        rep.max_error,
        rep.pairs.len()
    );
}

/// Aligned compression instance: uniform grids, the second compressed in
/// the vertical coordinate to `[0.5, 1]`, coupled column-by-column with
/// vertical rank pairing. The projections are certified optimal against the
/// 1-D closed form (the embedded segment cost separates into the
/// first-coordinate part plus a coupling-independent term).
fn aligned_compression_gamma(n: usize) -> (TriCoupling, DiscreteMeasure, CostSpec) {
    let g0 = GridMeasure::new(vec![[0.0, 1.0], [0.0, 1.0]], vec![n, n], vec![1.0; n * n]).unwrap();
    let g1 = GridMeasure::new(vec![[0.0, 1.0], [0.5, 1.0]], vec![n, n], vec![2.0; n * n]).unwrap();
    let mu0 = g0.to_discrete().unwrap();
    let mu1 = g1.to_discrete().unwrap();
    let nu = gen::segment_param_cloud(n, 0.0, 1.0).unwrap();
    let c = segment_cost(0.0, 1.0);
    let w = 1.0 / (n * n) as f64;
    let mut entries = Vec::with_capacity(n * n);
    for col in 0..n {
        for row in 0..n {
            entries.push((col, col * n + row, col * n + row, w));
        }
    }
    let gamma = TriCoupling::new(nu.clone(), mu0.clone(), mu1.clone(), entries).unwrap();
    // Optimality certificate for both projections: the first-coordinate part
    // must match the monotone 1-D optimum.
    for (mu, side) in [(&mu0, 0usize), (&mu1, 1usize)] {
        let proj = gamma.project_y_side(side).unwrap();
        let vert = mu.marginal_1d(0).unwrap();
        let opt_1d = ot_1d(&vert, &nu).unwrap().value;
        let plan_1d: f64 = proj
            .entries()
            .iter()
            .map(|&(k, i, m)| {
                let d = mu.point(i)[0] - nu.point(k)[0];
                m * d * d
            })
            .sum();
        assert!(
            (plan_1d - opt_1d).abs() < 1e-10,
            "side {side}: first-coordinate cost {plan_1d} vs optimum {opt_1d}"
        );
    }
    (gamma, nu, c)
}

/// Criterion 8: the convexity suite — distance-to-reference is 1-convex,
/// quadratic potential and interaction kernels are convex (interaction
/// strictly on equal-barycenter endpoints), and the entropy passes within
/// the declared `O(h)` allowance at 32² with a smaller allowance at 64².
#[test]
fn acceptance_08_convexity_suite() {
    let c = CostSpec::Quadratic;
    // Scanned geodesics: the triangle instance and two random instances.
    let mut curves = Vec::new();
    {
        let (nu, mu0, mu1, _) = gen::paper_triangle(0.5).unwrap();
        let gamma = w_nu(&mu0, &mu1, &nu, &c).unwrap().gamma;
        curves.push((geodesic(&gamma, &uniform_t_grid(17)).unwrap(), nu));
    }
    for seed in [7u64, 8] {
        let nu = gen::weighted_cloud(seed * 13 + 5, 3, 2, 1.0).unwrap();
        let mu0 = gen::weighted_cloud(seed * 13 + 6, 5, 2, 1.0).unwrap();
        let mu1 = gen::weighted_cloud(seed * 13 + 7, 4, 2, 1.0).unwrap();
        let gamma = w_nu(&mu0, &mu1, &nu, &c).unwrap().gamma;
        curves.push((geodesic(&gamma, &uniform_t_grid(17)).unwrap(), nu));
    }
    for (idx, (curve, nu)) in curves.iter().enumerate() {
        let rep = convexity_scan(&FunctionalSpec::WassToNu, curve, Some(nu), Some(&c)).unwrap();
        assert!(rep.pass_convex, "curve {idx}: wass-to-nu not convex");
        assert_eq!(rep.pass_one_convex, Some(true), "curve {idx}: 1-convexity failed");
        let rep_v = convexity_scan(&FunctionalSpec::Potential { v: PointFn::SqNorm }, curve, None, None).unwrap();
        assert!(rep_v.pass_convex, "curve {idx}: quadratic potential not convex");
        let rep_w =
            convexity_scan(&FunctionalSpec::Interaction { w: PointFn::SqNorm }, curve, None, None).unwrap();
        assert!(rep_w.pass_convex, "curve {idx}: quadratic interaction not convex");
    }

    // Strict interaction convexity on equal-barycenter endpoints: a cloud
    // and its half-turn rotation share the barycenter.
    {
        let nu = DiscreteMeasure::dirac(vec![0.0, 0.0]).unwrap();
        let raw = gen::point_cloud(33, 6, 2, 1.0).unwrap();
        let center = raw.barycenter();
        let centered: Vec<Vec<f64>> =
            raw.points().iter().map(|p| vec![p[0] - center[0], p[1] - center[1]]).collect();
        let mu0 = DiscreteMeasure::uniform(centered).unwrap();
        let rotated: Vec<Vec<f64>> = mu0.points().iter().map(|p| vec![-p[0], -p[1]]).collect();
        let mu1 = DiscreteMeasure::uniform(rotated).unwrap();
        let b0 = mu0.barycenter();
        let b1 = mu1.barycenter();
        assert!((b0[0] - b1[0]).abs() < 1e-12 && (b0[1] - b1[1]).abs() < 1e-12);
        let gamma = w_nu(&mu0, &mu1, &nu, &c).unwrap().gamma;
        let curve = geodesic(&gamma, &uniform_t_grid(17)).unwrap();
        let rep =
            convexity_scan(&FunctionalSpec::Interaction { w: PointFn::SqNorm }, &curve, None, None).unwrap();
        assert!(rep.pass_convex);
        assert!(
            rep.min_second_difference > 1e-6,
            "interaction not strictly convex: {:.3e}",
            rep.min_second_difference
        );
    }

    // Internal energy along the aligned compression geodesic.
    let (gamma, _, _) = aligned_compression_gamma(128);
    let curve = geodesic(&gamma, &uniform_t_grid(17)).unwrap();
    let mut allowances = Vec::new();
    for cells in [32usize, 64] {
        let f = FunctionalSpec::Internal {
            u: DensityFn::RLogR,
            grid: HistogramGrid { ranges: vec![[0.0, 1.0], [0.0, 1.0]], cells: vec![cells, cells] },
        };
        let rep = convexity_scan(&f, &curve, None, None).unwrap();
        assert!(
            rep.pass_convex,
            "entropy at {cells}²: min d² {:.3e} vs tol {:.3e}",
            rep.min_second_difference,
            rep.tol
        );
        allowances.push(rep.allowance);
    }
    assert!(allowances[1] < allowances[0], "allowance did not shrink: {allowances:?}");
    println!(
        "ACCEPTANCE 8 (convexity suite): PASS — 1-convexity, potential, interaction (strict), entropy allowances {:.4} → {:.4}",
        allowances[0], allowances[1]
    );
}

/// Criterion 9: circular-sector nestedness — nested for θ̄ = 2.0 with the
/// split function pinned near zero, violated for θ̄ = 4.0 with witnesses in
/// the third quadrant.
#[test]
fn acceptance_09_nestedness_examples() {
    let (mu, nu, c) = gen::sector_instance(2.0, 256, 64).unwrap();
    let y_grid: Vec<f64> = (0..48).map(|j| 2.0 * (j as f64 + 0.5) / 48.0).collect();
    let rep = nestedness_check(&mu, &nu, &c, &y_grid).unwrap();
    assert!(rep.nested, "{} violations", rep.violations.len());
    let h = 2.0 / 256.0;
    let kmax = rep.k.values().iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    assert!(kmax < 2.0 * h, "max |k| = {kmax:.4e} vs 2h = {:.4e}", 2.0 * h);

    let (mu4, nu4, c4) = gen::sector_instance(4.0, 256, 64).unwrap();
    let y_grid4: Vec<f64> = (0..48).map(|j| 4.0 * (j as f64 + 0.5) / 48.0).collect();
    let rep4 = nestedness_check(&mu4, &nu4, &c4, &y_grid4).unwrap();
    assert!(!rep4.nested);
    let third_quadrant = rep4
        .violations
        .iter()
        .filter(|v| v.witness[0] < 0.0 && v.witness[1] < 0.0)
        .count();
    assert!(third_quadrant > 0, "no third-quadrant witness among {} violations", rep4.violations.len());
    println!(
        "ACCEPTANCE 9 (nestedness cases): PASS — θ̄=2: nested, max|k|={kmax:.2e} < {:.2e}; θ̄=4: {} violations, {third_quadrant} in the third quadrant",
        2.0 * h,
        rep4.violations.len()
    );
}

/// Frozen regression baseline for the contraction factor of the square
/// example (128² source cells, 256 strategy samples, ȳ = 0.1, C = 4),
/// recorded from the first computation.
const SQUARE_EXAMPLE_FACTOR: f64 = 0.329340176499116;

/// Criterion 10: the equilibrium example certifies contraction, iterates to
/// the fixed point with step ratios below the factor, and verifies the
/// equilibrium first-order condition, all within 10 s.
#[test]
fn acceptance_10_fixed_point() {
    let t0 = Instant::now();
    let spec = gen::square_fixedpoint_spec(0.1, 128, 256).unwrap();
    let p = nuwass::fixedpoint::FixedPointProblem::from_spec(spec).unwrap();
    let bounds = nuwass::fixedpoint::cost_y_bounds(&p);
    // Paper constants up to the half-cell sampling gap.
    assert!((bounds.a_max - 1.0).abs() < 1e-12);
    assert!((p.b_min - 0.25).abs() < 1e-12);
    assert!((bounds.d_hi - 1.0).abs() <= 1.0 / 128.0);
    assert!((bounds.d_lo + 1.0).abs() <= 1.0 / 128.0);
    let cert = nuwass::fixedpoint::contraction_factor(&p).unwrap();
    assert!(cert.contraction, "factor {} >= 1", cert.factor);
    assert!(
        (cert.factor - SQUARE_EXAMPLE_FACTOR).abs() < 1e-9,
        "factor {} drifted from the frozen baseline {}",
        cert.factor,
        SQUARE_EXAMPLE_FACTOR
    );
    let trace = nuwass::fixedpoint::iterate(&p, &p.default_start().unwrap(), 1e-9, 200).unwrap();
    assert!(trace.converged);
    for s in &trace.steps {
        if let Some(r) = s.ratio {
            assert!(r <= cert.factor + 0.05, "ratio {r} above factor + 0.05");
        }
    }
    assert!(trace.residual < 1e-6, "first-order residual {:.3e}", trace.residual);
    let sn = nuwass::fixedpoint::nestedness_at_solution(&p, &trace.k_fixed, 24).unwrap();
    assert!(sn.report.nested);
    assert!(sn.all_margins_negative);
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 10 (fixed point): PASS — factor={:.12}, {} iterations, residual={:.3e}, nested, {elapsed:?}",
        cert.factor,
        trace.steps.len(),
        trace.residual
    );
}

/// Criterion 11: the randomized property corpus — semi-metric axioms,
/// marginal invariants, duality gaps, cyclical monotonicity, mass and
/// barycenter conservation along geodesics — green in under 5 minutes.
#[test]
fn acceptance_11_property_suite() {
    let t0 = Instant::now();
    let c = CostSpec::Quadratic;

    // Semi-metric axioms: identity and symmetry.
    for seed in 0..5u64 {
        let nu = gen::weighted_cloud(900 + seed, 3, 2, 1.0).unwrap();
        let mu = gen::weighted_cloud(910 + seed, 5, 2, 1.0).unwrap();
        let r = w_nu(&mu, &mu, &nu, &c).unwrap();
        // The identity axiom holds at the square root of LP roundoff.
        assert!(r.value < 1e-7, "W(mu,mu) = {}", r.value);
    }
    for seed in 0..10u64 {
        let nu = gen::weighted_cloud(920 + seed, 3, 2, 1.0).unwrap();
        let mu0 = gen::weighted_cloud(930 + seed, 4, 2, 1.0).unwrap();
        let mu1 = gen::weighted_cloud(940 + seed, 5, 2, 1.0).unwrap();
        let a = w_nu(&mu0, &mu1, &nu, &c).unwrap().value;
        let b = w_nu(&mu1, &mu0, &nu, &c).unwrap().value;
        assert!((a - b).abs() < 1e-10, "symmetry gap {:.3e}", (a - b).abs());
    }

    // Triangle inequality on the unique-plan set.
    let mut triples = 0;
    let mut seed = 0u64;
    while triples < 10 && seed < 300 {
        seed += 1;
        let nu = gen::weighted_cloud(950 + seed, 3, 2, 1.0).unwrap();
        let mus: Vec<DiscreteMeasure> = (0..3)
            .map(|i| gen::weighted_cloud(960 + 3 * seed + i, 4, 2, 1.0).unwrap())
            .collect();
        let unique = mus
            .iter()
            .all(|mu| is_unique_plan(&solve_ot(mu, &nu, &c).unwrap()) == Uniqueness::Unique);
        if !unique {
            continue;
        }
        triples += 1;
        let w01 = w_nu(&mus[0], &mus[1], &nu, &c).unwrap().value;
        let w12 = w_nu(&mus[1], &mus[2], &nu, &c).unwrap().value;
        let w02 = w_nu(&mus[0], &mus[2], &nu, &c).unwrap().value;
        assert!(w02 <= w01 + w12 + 1e-8, "triangle violated: {w02} > {w01} + {w12}");
        assert!(w01 <= w02 + w12 + 1e-8);
        assert!(w12 <= w01 + w02 + 1e-8);
    }
    assert_eq!(triples, 10);

    // The failure example violates the triangle inequality by 2 - 2ε.
    for eps in [0.25, 0.5, 0.75] {
        let (nu, mu0, mu1, mu2) = gen::paper_triangle(eps).unwrap();
        let w01 = w_nu(&mu0, &mu1, &nu, &c).unwrap().value;
        let w02 = w_nu(&mu0, &mu2, &nu, &c).unwrap().value;
        let w12 = w_nu(&mu1, &mu2, &nu, &c).unwrap().value;
        assert!(w12 - w01 - w02 >= 1.0 - 2.0 * eps - 1e-9);
    }

    // Sandwich: the plain Wasserstein distance never exceeds the
    // reference-based one. Also validate the result invariants.
    for seed in 0..15u64 {
        let nu = gen::weighted_cloud(970 + seed, 3, 2, 1.0).unwrap();
        let mu0 = gen::weighted_cloud(980 + seed, 5, 2, 1.0).unwrap();
        let mu1 = gen::weighted_cloud(990 + seed, 4, 2, 1.0).unwrap();
        let r = w_nu(&mu0, &mu1, &nu, &c).unwrap();
        let w2 = solve_ot(&mu0, &mu1, &c).unwrap().value.sqrt();
        assert!(w2 <= r.value + 1e-9, "sandwich violated");
        assert!(r.pair_gaps.iter().all(|&g| g < 1e-8), "pair gaps {:?}", r.pair_gaps);
        assert!((r.value * r.value - r.gamma.cross_cost()).abs() < 1e-9);
    }

    // Exact-solver properties: duality gap, dual feasibility, cyclical
    // monotonicity, 1-D agreement, W2 metric axioms.
    let mut rng_seed = 0u64;
    for trial in 0..100u64 {
        rng_seed += 1;
        let n = 2 + (trial % 29) as usize;
        let m = 2 + ((trial / 2) % 29) as usize;
        let a = gen::weighted_cloud(3000 + rng_seed, n, 2, 1.0).unwrap();
        let b = gen::weighted_cloud(4000 + rng_seed, m, 2, 1.0).unwrap();
        let s = solve_ot(&a, &b, &c).unwrap();
        let gap = (s.value - s.dual_objective()).abs();
        assert!(gap <= 1e-9, "duality gap {gap:.3e} on trial {trial}");
        let cm = s.cost_matrix();
        let feas = s
            .potentials
            .u
            .iter()
            .enumerate()
            .flat_map(|(i, &ui)| {
                s.potentials.v.iter().enumerate().map(move |(j, &vj)| (i, j, ui + vj))
            })
            .map(|(i, j, uv)| uv - cm[i][j])
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(feas < 1e-9, "dual infeasibility {feas:.3e}");
        for &(i, j, _) in s.coupling.entries() {
            for &(i2, j2, _) in s.coupling.entries() {
                assert!(cm[i][j] + cm[i2][j2] <= cm[i][j2] + cm[i2][j] + 1e-8);
            }
        }
    }
    for seed in 0..20u64 {
        let n = 2 + (seed % 9) as usize;
        let a = gen::weighted_cloud(5000 + seed, n, 1, 1.0).unwrap();
        let b = gen::weighted_cloud(6000 + seed, n + 1, 1, 1.0).unwrap();
        let s = solve_ot(&a, &b, &c).unwrap();
        let s1 = ot_1d(&a, &b).unwrap();
        assert!((s.value - s1.value).abs() < 1e-10);
    }
    for seed in 0..10u64 {
        let a = gen::weighted_cloud(7000 + seed, 4, 2, 1.0).unwrap();
        let b = gen::weighted_cloud(7100 + seed, 5, 2, 1.0).unwrap();
        let d = gen::weighted_cloud(7200 + seed, 3, 2, 1.0).unwrap();
        let wab = solve_ot(&a, &b, &c).unwrap().value.sqrt();
        let wba = solve_ot(&b, &a, &c).unwrap().value.sqrt();
        assert!((wab - wba).abs() < 1e-12, "W2 symmetry gap {:.3e}", (wab - wba).abs());
        let wad = solve_ot(&a, &d, &c).unwrap().value.sqrt();
        let wdb = solve_ot(&d, &b, &c).unwrap().value.sqrt();
        assert!(wab <= wad + wdb + 1e-9, "W2 triangle violated");
    }

    // Mass and barycenter conservation along geodesics.
    for seed in 0..5u64 {
        let nu = gen::weighted_cloud(8000 + seed, 3, 2, 1.0).unwrap();
        let mu0 = gen::weighted_cloud(8100 + seed, 4, 2, 1.0).unwrap();
        let mu1 = gen::weighted_cloud(8200 + seed, 5, 2, 1.0).unwrap();
        let gamma = w_nu(&mu0, &mu1, &nu, &c).unwrap().gamma;
        let curve = geodesic(&gamma, &uniform_t_grid(9)).unwrap();
        let b0 = curve.at(0).barycenter();
        let b1 = curve.at(8).barycenter();
        for (idx, &t) in curve.ts().iter().enumerate() {
            let mu_t = curve.at(idx);
            assert!((mu_t.total_mass() - 1.0).abs() < 1e-12);
            let bt = mu_t.barycenter();
            for ax in 0..2 {
                let expect = (1.0 - t) * b0[ax] + t * b1[ax];
                assert!((bt[ax] - expect).abs() < 1e-12, "barycenter drift at t={t}");
            }
        }
    }

    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    println!("ACCEPTANCE 11 (property suite): PASS — all randomized properties green, {elapsed:?}");
}
