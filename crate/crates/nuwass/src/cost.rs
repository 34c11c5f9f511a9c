//! Cost evaluators: quadratic `|x-y|²`, costs to an embedded curve
//! (`|x-f(y)|²` or `-x·f(y)`) with analytic first and second derivatives of
//! `f`, and tabulated cost matrices.

use crate::measures::{sq_dist, DiscreteMeasure};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Embedded curve primitives `f: Y ⊂ R -> R^m` with analytic `f'` and `f''`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Curve {
    /// `f(y) = origin + y · direction`.
    Segment {
        origin: Vec<f64>,
        direction: Vec<f64>,
        range: [f64; 2],
    },
    /// `f(y) = center + radius · (cos y, sin y)` in the plane.
    Arc {
        center: [f64; 2],
        radius: f64,
        range: [f64; 2],
    },
    /// Per-coordinate polynomial: `f_c(y) = Σ_d coeffs[c][d] y^d`.
    Poly {
        coeffs: Vec<Vec<f64>>,
        range: [f64; 2],
    },
}

impl Curve {
    /// Ambient dimension `m` of the curve image.
    pub fn ambient_dim(&self) -> usize {
        match self {
            Curve::Segment { origin, .. } => origin.len(),
            Curve::Arc { .. } => 2,
            Curve::Poly { coeffs, .. } => coeffs.len(),
        }
    }

    /// Parameter range the curve is defined on.
    pub fn range(&self) -> [f64; 2] {
        match self {
            Curve::Segment { range, .. } | Curve::Arc { range, .. } | Curve::Poly { range, .. } => *range,
        }
    }

    pub fn eval(&self, y: f64) -> Vec<f64> {
        match self {
            Curve::Segment { origin, direction, .. } => {
                origin.iter().zip(direction).map(|(o, d)| o + y * d).collect()
            }
            Curve::Arc { center, radius, .. } => {
                vec![center[0] + radius * y.cos(), center[1] + radius * y.sin()]
            }
            Curve::Poly { coeffs, .. } => coeffs.iter().map(|c| horner(c, y)).collect(),
        }
    }

    pub fn deriv(&self, y: f64) -> Vec<f64> {
        match self {
            Curve::Segment { direction, .. } => direction.clone(),
            Curve::Arc { radius, .. } => vec![-radius * y.sin(), radius * y.cos()],
            Curve::Poly { coeffs, .. } => coeffs.iter().map(|c| horner(&poly_deriv(c), y)).collect(),
        }
    }

    pub fn deriv2(&self, y: f64) -> Vec<f64> {
        match self {
            Curve::Segment { origin, .. } => vec![0.0; origin.len()],
            Curve::Arc { radius, .. } => vec![-radius * y.cos(), -radius * y.sin()],
            Curve::Poly { coeffs, .. } => coeffs
                .iter()
                .map(|c| horner(&poly_deriv(&poly_deriv(c)), y))
                .collect(),
        }
    }

    /// Samples the parameter range and checks injectivity (no two samples
    /// mapped within 1e-9) and a nonvanishing tangent.
    fn validate(&self) -> Result<()> {
        let [lo, hi] = self.range();
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Validation(format!("invalid curve range [{lo}, {hi}]")));
        }
        if self.ambient_dim() == 0 {
            return Err(Error::Validation("curve has ambient dimension 0".into()));
        }
        if let Curve::Segment { origin, direction, .. } = self {
            if origin.len() != direction.len() {
                return Err(Error::DimensionMismatch { expected: origin.len(), got: direction.len() });
            }
        }
        const SAMPLES: usize = 64;
        let mut pts = Vec::with_capacity(SAMPLES + 1);
        for s in 0..=SAMPLES {
            let y = lo + (hi - lo) * s as f64 / SAMPLES as f64;
            let t = self.deriv(y);
            let tn: f64 = t.iter().map(|c| c * c).sum::<f64>().sqrt();
            if tn <= 1e-12 {
                return Err(Error::Validation(format!("curve tangent vanishes at y = {y}")));
            }
            pts.push(self.eval(y));
        }
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                if sq_dist(&pts[i], &pts[j]) < 1e-18 {
                    return Err(Error::Validation(
                        "curve is not injective on its parameter range (two samples within 1e-9)".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn horner(coeffs: &[f64], y: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * y + c)
}

fn poly_deriv(coeffs: &[f64]) -> Vec<f64> {
    if coeffs.len() <= 1 {
        return vec![0.0];
    }
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(d, &c)| d as f64 * c)
        .collect()
}

/// Which algebraic form an embedded cost takes. The two are equivalent for
/// optimal plans (they differ by marginal-only terms) but not in value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddedForm {
    /// `c(x, y) = |x - f(y)|²`.
    #[default]
    SqDist,
    /// `c(x, y) = -x · f(y)`.
    Dot,
}

/// Cost evaluator for the transport problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CostSpec {
    /// `c(x, y) = |x - y|²` between points of equal dimension.
    Quadratic,
    /// Cost to a curve; the second measure lives in the 1-D parameter space.
    Embedded {
        curve: Curve,
        #[serde(default)]
        form: EmbeddedForm,
    },
    /// Explicit matrix indexed by atom pairs.
    Tabulated { matrix: Vec<Vec<f64>> },
}

impl CostSpec {
    pub fn quadratic() -> Self {
        CostSpec::Quadratic
    }

    pub fn embedded(curve: Curve, form: EmbeddedForm) -> Result<Self> {
        curve.validate()?;
        Ok(CostSpec::Embedded { curve, form })
    }

    pub fn tabulated(matrix: Vec<Vec<f64>>) -> Result<Self> {
        if matrix.is_empty() || matrix[0].is_empty() {
            return Err(Error::Validation("tabulated cost matrix must be non-empty".into()));
        }
        let w = matrix[0].len();
        if matrix.iter().any(|r| r.len() != w) {
            return Err(Error::Validation("tabulated cost matrix must be rectangular".into()));
        }
        if matrix.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Validation("tabulated cost matrix has non-finite entries".into()));
        }
        Ok(CostSpec::Tabulated { matrix })
    }

    /// Validates internal consistency (curve injectivity and tangent rank).
    pub fn validate(&self) -> Result<()> {
        match self {
            CostSpec::Embedded { curve, .. } => curve.validate(),
            _ => Ok(()),
        }
    }

    pub fn curve(&self) -> Option<&Curve> {
        match self {
            CostSpec::Embedded { curve, .. } => Some(curve),
            _ => None,
        }
    }

    /// Pointwise evaluation. `y` is a full point for the quadratic variant
    /// and a 1-vector of the curve parameter for the embedded variants.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            CostSpec::Quadratic => {
                if x.len() != y.len() {
                    return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
                }
                Ok(sq_dist(x, y))
            }
            CostSpec::Embedded { curve, form } => {
                if y.len() != 1 {
                    return Err(Error::DimensionMismatch { expected: 1, got: y.len() });
                }
                let fy = curve.eval(y[0]);
                if fy.len() != x.len() {
                    return Err(Error::DimensionMismatch { expected: fy.len(), got: x.len() });
                }
                Ok(match form {
                    EmbeddedForm::SqDist => sq_dist(x, &fy),
                    EmbeddedForm::Dot => -dot(x, &fy),
                })
            }
            CostSpec::Tabulated { .. } => Err(Error::UnsupportedCost(
                "tabulated costs are indexed by atoms, not points".into(),
            )),
        }
    }

    /// `∂c/∂y (x, y)` for costs with a 1-D second argument.
    pub fn c_y(&self, x: &[f64], y: f64) -> Result<f64> {
        match self {
            CostSpec::Quadratic => {
                if x.len() != 1 {
                    return Err(Error::UnsupportedCost(
                        "quadratic c_y is only defined for 1-D transport".into(),
                    ));
                }
                Ok(-2.0 * (x[0] - y))
            }
            CostSpec::Embedded { curve, form } => {
                let df = curve.deriv(y);
                Ok(match form {
                    EmbeddedForm::Dot => -dot(x, &df),
                    EmbeddedForm::SqDist => {
                        let fy = curve.eval(y);
                        -2.0 * x.iter().zip(&fy).zip(&df) .map(|((xi, fi), di)| (xi - fi) * di).sum::<f64>()
                    }
                })
            }
            CostSpec::Tabulated { .. } => {
                Err(Error::UnsupportedCost("tabulated costs have no y-derivative".into()))
            }
        }
    }

    /// Prepared evaluator of `x ↦ ∂c/∂y(x, y)` at a fixed `y` (amortizes the
    /// curve derivatives over a grid sweep).
    pub fn c_y_fn(&self, y: f64) -> Result<impl Fn(&[f64]) -> f64 + Sync + '_> {
        let (df, fy, kind) = match self {
            CostSpec::Quadratic => (Vec::new(), Vec::new(), 0u8),
            CostSpec::Embedded { curve, form } => {
                let df = curve.deriv(y);
                match form {
                    EmbeddedForm::Dot => (df, Vec::new(), 1),
                    EmbeddedForm::SqDist => (df, curve.eval(y), 2),
                }
            }
            CostSpec::Tabulated { .. } => {
                return Err(Error::UnsupportedCost("tabulated costs have no y-derivative".into()))
            }
        };
        Ok(move |x: &[f64]| match kind {
            0 => -2.0 * (x[0] - y),
            1 => -x.iter().zip(&df).map(|(xi, di)| xi * di).sum::<f64>(),
            _ => {
                -2.0 * x
                    .iter()
                    .zip(&fy)
                    .zip(&df)
                    .map(|((xi, fi), di)| (xi - fi) * di)
                    .sum::<f64>()
            }
        })
    }

    /// `D_x ∂c/∂y (x, y)` for costs with a 1-D second argument.
    pub fn grad_x_c_y(&self, x: &[f64], y: f64) -> Result<Vec<f64>> {
        match self {
            CostSpec::Quadratic => {
                if x.len() != 1 {
                    return Err(Error::UnsupportedCost(
                        "quadratic c_y is only defined for 1-D transport".into(),
                    ));
                }
                Ok(vec![-2.0])
            }
            CostSpec::Embedded { curve, form } => {
                let df = curve.deriv(y);
                Ok(match form {
                    EmbeddedForm::Dot => df.iter().map(|d| -d).collect(),
                    EmbeddedForm::SqDist => df.iter().map(|d| -2.0 * d).collect(),
                })
            }
            CostSpec::Tabulated { .. } => {
                Err(Error::UnsupportedCost("tabulated costs have no y-derivative".into()))
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Tabulates `c(a_i, b_j)`; for embedded variants `b` must live in the 1-D
/// parameter space of the curve.
pub fn cost_matrix(a: &DiscreteMeasure, b: &DiscreteMeasure, c: &CostSpec) -> Result<Vec<Vec<f64>>> {
    match c {
        CostSpec::Tabulated { matrix } => {
            if matrix.len() != a.len() || matrix[0].len() != b.len() {
                return Err(Error::Validation(format!(
                    "tabulated cost is {}x{}, measures are {}x{}",
                    matrix.len(),
                    matrix[0].len(),
                    a.len(),
                    b.len()
                )));
            }
            Ok(matrix.clone())
        }
        _ => a
            .points()
            .iter()
            .map(|p| b.points().iter().map(|q| c.eval(p, q)).collect())
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_matrix() {
        let a = DiscreteMeasure::dirac(vec![0.0]).unwrap();
        let b = DiscreteMeasure::dirac(vec![3.0]).unwrap();
        let m = cost_matrix(&a, &b, &CostSpec::Quadratic).unwrap();
        assert_eq!(m, vec![vec![9.0]]);
    }

    #[test]
    fn quadratic_symmetric_nonneg_zero_diag() {
        let a = DiscreteMeasure::uniform(vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![0.5, 0.5]]).unwrap();
        let m = cost_matrix(&a, &a, &CostSpec::Quadratic).unwrap();
        for i in 0..3 {
            assert_eq!(m[i][i], 0.0);
            for j in 0..3 {
                assert!(m[i][j] >= 0.0);
                assert_eq!(m[i][j], m[j][i]);
            }
        }
    }

    #[test]
    fn embedded_point_on_arc() {
        let c = CostSpec::embedded(
            Curve::Arc { center: [0.0, 0.0], radius: 1.0, range: [0.0, 2.0] },
            EmbeddedForm::SqDist,
        )
        .unwrap();
        let v = c.eval(&[1.0, 0.0], &[0.0]).unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn embedded_dot_product() {
        let c = CostSpec::embedded(
            Curve::Segment { origin: vec![0.0, 0.0], direction: vec![1.0, 0.0], range: [0.0, 5.0] },
            EmbeddedForm::Dot,
        )
        .unwrap();
        // f(3) = (3, 0); -x.f = -(2*3 + 5*0) = -6
        let v = c.eval(&[2.0, 5.0], &[3.0]).unwrap();
        assert!((v - (-6.0)).abs() < 1e-15);
    }

    #[test]
    fn c_y_index_cost() {
        // c = -x1 y: c_y = -x1, D_x c_y = (-1, 0)
        let c = CostSpec::embedded(
            Curve::Segment { origin: vec![0.0, 0.0], direction: vec![1.0, 0.0], range: [0.0, 1.0] },
            EmbeddedForm::Dot,
        )
        .unwrap();
        assert!((c.c_y(&[0.3, -0.7], 0.5).unwrap() - (-0.3)).abs() < 1e-15);
        assert_eq!(c.grad_x_c_y(&[0.3, -0.7], 0.5).unwrap(), vec![-1.0, 0.0]);
    }

    #[test]
    fn c_y_arc_unit_gradient() {
        let c = CostSpec::embedded(
            Curve::Arc { center: [0.0, 0.0], radius: 1.0, range: [0.0, 2.0] },
            EmbeddedForm::Dot,
        )
        .unwrap();
        let g = c.grad_x_c_y(&[0.3, 0.4], 1.1).unwrap();
        let n: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn arc_second_derivative_points_inward() {
        let curve = Curve::Arc { center: [0.0, 0.0], radius: 2.0, range: [0.0, 3.0] };
        let y = 0.7;
        let f = curve.eval(y);
        let f2 = curve.deriv2(y);
        assert!((f2[0] + f[0]).abs() < 1e-12);
        assert!((f2[1] + f[1]).abs() < 1e-12);
    }

    #[test]
    fn poly_curve_derivatives() {
        // f(y) = (y, y^2): f' = (1, 2y), f'' = (0, 2)
        let curve = Curve::Poly { coeffs: vec![vec![0.0, 1.0], vec![0.0, 0.0, 1.0]], range: [0.0, 1.0] };
        assert_eq!(curve.eval(0.5), vec![0.5, 0.25]);
        assert_eq!(curve.deriv(0.5), vec![1.0, 1.0]);
        assert_eq!(curve.deriv2(0.5), vec![0.0, 2.0]);
    }

    #[test]
    fn non_injective_curve_rejected() {
        // full circle traced twice
        let res = CostSpec::embedded(
            Curve::Arc { center: [0.0, 0.0], radius: 1.0, range: [0.0, 12.566370614359172] },
            EmbeddedForm::Dot,
        );
        assert!(res.is_err());
    }
}
