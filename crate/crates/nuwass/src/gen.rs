//! Deterministic instance generators: the worked examples from the theory
//! (triangle failure, circular sector, square equilibrium problem) and
//! seeded random measures for the property suites.

use crate::cost::{CostSpec, Curve, EmbeddedForm};
use crate::fixedpoint::FixedPointSpec;
use crate::measures::{DiscreteMeasure, GridMeasure};
use crate::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The triangle-inequality failure instance: reference on `(±1, 0)`, target
/// on `(0, ±1)` and two slanted ε-perturbations. Returns
/// `(ν, μ₀, μ₁, μ₂)`; the cost is quadratic.
pub fn paper_triangle(eps: f64) -> Result<(DiscreteMeasure, DiscreteMeasure, DiscreteMeasure, DiscreteMeasure)> {
    let nu = DiscreteMeasure::new(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![0.5, 0.5])?;
    let mu0 = DiscreteMeasure::new(vec![vec![0.0, 1.0], vec![0.0, -1.0]], vec![0.5, 0.5])?;
    let mu1 = DiscreteMeasure::new(vec![vec![eps, 1.0], vec![-eps, -1.0]], vec![0.5, 0.5])?;
    let mu2 = DiscreteMeasure::new(vec![vec![-eps, 1.0], vec![eps, -1.0]], vec![0.5, 0.5])?;
    Ok((nu, mu0, mu1, mu2))
}

/// Uniform sector `{0 < r < 1, 0 < θ < θ̄}` of the unit disc as a grid
/// density on `[-1,1]²`, the uniform reference on `(0, θ̄)`, and the unit
/// arc cost `-x · (cos y, sin y)`.
pub fn sector_instance(
    theta_bar: f64,
    grid_cells: usize,
    nu_cells: usize,
) -> Result<(GridMeasure, GridMeasure, CostSpec)> {
    let n = grid_cells;
    let h = 2.0 / n as f64;
    let mut density = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let x = -1.0 + (i as f64 + 0.5) * h;
            let y = -1.0 + (j as f64 + 0.5) * h;
            let r = (x * x + y * y).sqrt();
            let mut th = y.atan2(x);
            if th < 0.0 {
                th += 2.0 * std::f64::consts::PI;
            }
            if r < 1.0 && th > 0.0 && th < theta_bar {
                density[i * n + j] = 1.0;
            }
        }
    }
    let mu = GridMeasure::new_renormalized(vec![[-1.0, 1.0], [-1.0, 1.0]], vec![n, n], density)?;
    let nu = GridMeasure::new(vec![[0.0, theta_bar]], vec![nu_cells], vec![1.0 / theta_bar; nu_cells])?;
    let cost = CostSpec::embedded(
        Curve::Arc { center: [0.0, 0.0], radius: 1.0, range: [0.0, theta_bar] },
        EmbeddedForm::Dot,
    )?;
    Ok((mu, nu, cost))
}

/// The square equilibrium example: uniform density on `[-1,1]²`, index cost
/// `-x₁ y` on `[0, ybar]`, level-curve constant 4.
pub fn square_fixedpoint_spec(ybar: f64, grid_cells: usize, y_resolution: usize) -> Result<FixedPointSpec> {
    let n = grid_cells;
    Ok(FixedPointSpec {
        mu: crate::io::Measure::Grid {
            ranges: vec![[-1.0, 1.0], [-1.0, 1.0]],
            cells: vec![n, n],
            density: vec![0.25; n * n],
        },
        interval: [0.0, ybar],
        cost: CostSpec::embedded(
            Curve::Segment { origin: vec![0.0, 0.0], direction: vec![1.0, 0.0], range: [0.0, ybar] },
            EmbeddedForm::Dot,
        )?,
        y_resolution,
        c_level: 4.0,
    })
}

/// Gaussian density sampled on a grid (renormalized to unit mass). The mean
/// and scales are drawn from the seed; in two dimensions a seeded
/// correlation couples the coordinates (a separable density would make the
/// layerwise conditionals constant, which degenerates several tests).
pub fn grid_gaussian(seed: u64, cells: usize, range: [f64; 2], dim: usize) -> Result<GridMeasure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = range[1] - range[0];
    let mean: Vec<f64> = (0..dim)
        .map(|_| range[0] + span * (0.35 + 0.3 * rng.gen::<f64>()))
        .collect();
    let sigma: Vec<f64> = (0..dim).map(|_| span * (0.1 + 0.15 * rng.gen::<f64>())).collect();
    let rho: f64 = if dim == 2 { -0.6 + 1.2 * rng.gen::<f64>() } else { 0.0 };
    let ranges = vec![range; dim];
    let cell_list = vec![cells; dim];
    let total: usize = cell_list.iter().product();
    let mut density = vec![0.0; total];
    let h = span / cells as f64;
    for (idx, d) in density.iter_mut().enumerate() {
        let mut rem = idx;
        let mut z = vec![0.0; dim];
        for ax in (0..dim).rev() {
            let i = rem % cells;
            rem /= cells;
            let x = range[0] + (i as f64 + 0.5) * h;
            z[ax] = (x - mean[ax]) / sigma[ax];
        }
        let expo = if dim == 2 {
            -(z[0] * z[0] - 2.0 * rho * z[0] * z[1] + z[1] * z[1]) / (2.0 * (1.0 - rho * rho))
        } else {
            -0.5 * z.iter().map(|v| v * v).sum::<f64>()
        };
        *d = expo.exp();
    }
    GridMeasure::new_renormalized(ranges, cell_list, density)
}

/// Seeded uniform point cloud in a box with uniform weights.
pub fn point_cloud(seed: u64, n: usize, dim: usize, half_width: f64) -> Result<DiscreteMeasure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(-half_width..half_width)).collect())
        .collect();
    DiscreteMeasure::uniform(points)
}

/// Seeded point cloud with random (normalized) weights.
pub fn weighted_cloud(seed: u64, n: usize, dim: usize, half_width: f64) -> Result<DiscreteMeasure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(-half_width..half_width)).collect())
        .collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    DiscreteMeasure::new_renormalized(points, raw)
}

/// Uniform atoms on the first-coordinate axis segment `[lo, hi] × {0}^(m-1)`
/// embedded in `R^m`.
pub fn segment_cloud(n: usize, lo: f64, hi: f64, dim: usize) -> Result<DiscreteMeasure> {
    let h = (hi - lo) / n as f64;
    let points: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut p = vec![0.0; dim];
            p[0] = lo + (j as f64 + 0.5) * h;
            p
        })
        .collect();
    DiscreteMeasure::uniform(points)
}

/// Uniform 1-D atom grid on `[lo, hi]` (parameter-space reference for
/// embedded costs).
pub fn segment_param_cloud(n: usize, lo: f64, hi: f64) -> Result<DiscreteMeasure> {
    segment_cloud(n, lo, hi, 1)
}
