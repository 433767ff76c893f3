//! Cost functions, finite-difference oracles and the built-in test corpus.
//!
//! The optimizer assumes `f` is at least C². Smoothness is the caller's
//! obligation; nothing here can check it.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{self, norm, norm_inf, SymmetricMatrix};

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type HessFn = dyn Fn(&[f64]) -> SymmetricMatrix + Send + Sync;

/// An objective `f: R^m -> R` together with its gradient and Hessian.
///
/// All three callbacks must be pure functions of `x`: batch runs evaluate the
/// same `CostFunction` from several threads at once.
#[derive(Clone)]
pub struct CostFunction {
    dim: usize,
    label: String,
    eval: Arc<EvalFn>,
    grad: Arc<GradFn>,
    hess: Arc<HessFn>,
    analytic: bool,
}

impl fmt::Debug for CostFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostFunction")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("analytic", &self.analytic)
            .finish()
    }
}

/// Default finite-difference step at `x`.
pub fn default_step(x: &[f64]) -> f64 {
    1e-5 * norm_inf(x).max(1.0)
}

impl CostFunction {
    /// Cost function with analytic first and second derivatives.
    pub fn new(
        label: impl Into<String>,
        dim: usize,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        hess: impl Fn(&[f64]) -> SymmetricMatrix + Send + Sync + 'static,
    ) -> Self {
        assert!(dim > 0, "cost function dimension must be at least 1");
        Self {
            dim,
            label: label.into(),
            eval: Arc::new(eval),
            grad: Arc::new(grad),
            hess: Arc::new(hess),
            analytic: true,
        }
    }

    /// Black-box objective. Gradient and Hessian are central differences of
    /// `eval`, which costs `O(m²)` evaluations per Hessian and is noticeably
    /// less accurate than analytic derivatives.
    pub fn from_fn(
        label: impl Into<String>,
        dim: usize,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        assert!(dim > 0, "cost function dimension must be at least 1");
        let eval: Arc<EvalFn> = Arc::new(eval);
        let e1 = Arc::clone(&eval);
        let e2 = Arc::clone(&eval);
        Self {
            dim,
            label: label.into(),
            grad: Arc::new(move |x| central_gradient(&*e1, x, default_step(x))),
            hess: Arc::new(move |x| {
                let h = 1e2 * default_step(x);
                let g = |y: &[f64]| central_gradient(&*e2, y, h);
                central_jacobian(&g, x, h)
            }),
            eval,
            analytic: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.analytic
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        (self.grad)(x)
    }

    pub fn hess(&self, x: &[f64]) -> SymmetricMatrix {
        (self.hess)(x)
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }
}

fn central_gradient(f: &EvalFn, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let up = f(&y);
            y[i] = x[i] - h;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn central_jacobian(g: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> SymmetricMatrix {
    let m = x.len();
    let mut cols = Vec::with_capacity(m);
    let mut y = x.to_vec();
    for j in 0..m {
        y[j] = x[j] + h;
        let up = g(&y);
        y[j] = x[j] - h;
        let down = g(&y);
        y[j] = x[j];
        cols.push(
            up.iter()
                .zip(&down)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect::<Vec<_>>(),
        );
    }
    // entry (i, j) = d g_i / d x_j; the constructor averages with the transpose
    SymmetricMatrix::from_fn(m, |i, j| cols[j][i])
}

/// Central-difference gradient of `f.eval` with step `h`.
pub fn fd_gradient(f: &CostFunction, x: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "finite-difference step must be positive");
    central_gradient(&*f.eval, x, h)
}

/// Symmetrized central differences of `f.grad` with step `h`.
pub fn fd_hessian(f: &CostFunction, x: &[f64], h: f64) -> SymmetricMatrix {
    assert!(h > 0.0, "finite-difference step must be positive");
    central_jacobian(&|y| f.grad(y), x, h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    LocalMin,
    Saddle,
    LocalMax,
    Degenerate,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::LocalMin => "local-min",
            Classification::Saddle => "saddle",
            Classification::LocalMax => "local-max",
            Classification::Degenerate => "degenerate",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalPointReport {
    pub location: Vec<f64>,
    pub f_value: f64,
    pub grad_norm: f64,
    pub hessian_eigenvalues: Vec<f64>,
    pub classification: Classification,
}

/// Sorts a spectrum into the min / saddle / max / degenerate taxonomy with
/// tolerance `1e-8 * max(1, |H|_F)`.
pub fn classify_spectrum(eigenvalues: &[f64], hess_norm: f64) -> Classification {
    let tol = 1e-8 * hess_norm.max(1.0);
    if eigenvalues.iter().any(|l| l.abs() <= tol || l.is_nan()) {
        Classification::Degenerate
    } else if eigenvalues.iter().all(|&l| l > tol) {
        Classification::LocalMin
    } else if eigenvalues.iter().all(|&l| l < -tol) {
        Classification::LocalMax
    } else {
        Classification::Saddle
    }
}

/// Reports the gradient norm and Hessian spectrum at `x`. The gradient is not
/// required to vanish.
pub fn classify_critical_point(f: &CostFunction, x: &[f64]) -> CriticalPointReport {
    let grad_norm = norm(&f.grad(x));
    let hess = f.hess(x);
    let hessian_eigenvalues = match linalg::eigen_decompose(&hess) {
        Ok(e) => e.eigenvalues,
        Err(_) => vec![f64::NAN; f.dim()],
    };
    let classification = classify_spectrum(&hessian_eigenvalues, hess.frobenius_norm());
    CriticalPointReport {
        location: x.to_vec(),
        f_value: f.eval(x),
        grad_norm,
        hessian_eigenvalues,
        classification,
    }
}

/// `f(x) = ½ xᵀQx − bᵀx`.
pub fn quadratic(q: SymmetricMatrix, b: Vec<f64>) -> Result<CostFunction> {
    let m = q.dim();
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: b.len(),
        });
    }
    let q = Arc::new(q);
    let b = Arc::new(b);
    let (q1, b1, q2, q3) = (
        Arc::clone(&q),
        Arc::clone(&b),
        Arc::clone(&q),
        Arc::clone(&q),
    );
    Ok(CostFunction::new(
        "quadratic",
        m,
        move |x| 0.5 * linalg::dot(x, &q1.mul_vec(x)) - linalg::dot(&b1, x),
        move |x| linalg::sub(&q2.mul_vec(x), &b),
        move |_| (*q3).clone(),
    ))
}

/// `½|x|²` in `m` dimensions.
pub fn half_squared_norm(m: usize) -> CostFunction {
    quadratic(SymmetricMatrix::identity(m), vec![0.0; m]).expect("dimensions agree")
}

/// `(1 − x)² + 100 (y − x²)²`, global minimum at `(1, 1)`.
pub fn rosenbrock() -> CostFunction {
    CostFunction::new(
        "rosenbrock",
        2,
        |v| {
            let (x, y) = (v[0], v[1]);
            (1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2)
        },
        |v| {
            let (x, y) = (v[0], v[1]);
            vec![
                -400.0 * x * (y - x * x) - 2.0 * (1.0 - x),
                200.0 * (y - x * x),
            ]
        },
        |v| {
            let (x, y) = (v[0], v[1]);
            SymmetricMatrix::from_rows(&[
                vec![1200.0 * x * x - 400.0 * y + 2.0, -400.0 * x],
                vec![-400.0 * x, 200.0],
            ])
            .expect("2x2")
        },
    )
}

/// `x²/2 − y²/2 + y⁴/4`: saddle at the origin, minima at `(0, ±1)`.
pub fn double_well_saddle() -> CostFunction {
    CostFunction::new(
        "double_well_saddle",
        2,
        |v| {
            let (x, y) = (v[0], v[1]);
            0.5 * x * x - 0.5 * y * y + 0.25 * y.powi(4)
        },
        |v| vec![v[0], v[1].powi(3) - v[1]],
        |v| SymmetricMatrix::diagonal(&[1.0, 3.0 * v[1] * v[1] - 1.0]),
    )
}

/// `|x|⁴`, whose only critical point (the origin) has a zero Hessian.
pub fn quartic_degenerate(m: usize) -> CostFunction {
    CostFunction::new(
        "quartic_degenerate",
        m,
        |x| linalg::dot(x, x).powi(2),
        |x| {
            let r2 = linalg::dot(x, x);
            x.iter().map(|c| 4.0 * r2 * c).collect()
        },
        |x| {
            let r2 = linalg::dot(x, x);
            SymmetricMatrix::from_fn(x.len(), |i, j| {
                8.0 * x[i] * x[j] + if i == j { 4.0 * r2 } else { 0.0 }
            })
        },
    )
}

/// Names accepted by [`corpus_function`].
pub const CORPUS_NAMES: [&str; 4] = [
    "quadratic",
    "rosenbrock",
    "double_well_saddle",
    "quartic_degenerate",
];

/// Looks up a corpus function by name. `quadratic` is `½|x|²` and, like
/// `quartic_degenerate`, takes its dimension from `dim`; the others are fixed
/// at two dimensions.
pub fn corpus_function(name: &str, dim: usize) -> Option<CostFunction> {
    match name {
        "quadratic" => Some(half_squared_norm(dim)),
        "rosenbrock" => Some(rosenbrock()),
        "double_well_saddle" => Some(double_well_saddle()),
        "quartic_degenerate" => Some(quartic_degenerate(dim)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bilinear() -> CostFunction {
        CostFunction::from_fn("xy", 2, |v| v[0] * v[1])
    }

    #[test]
    fn fd_gradient_examples() {
        let f = half_squared_norm(2);
        let g = fd_gradient(&f, &[1.0, 2.0], 1e-5);
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(g[1], 2.0, epsilon = 1e-8);

        let c = CostFunction::from_fn("const", 3, |_| 4.2);
        assert_eq!(fd_gradient(&c, &[0.3, 1.0, -2.0], 1e-5), vec![0.0; 3]);

        let g = fd_gradient(&rosenbrock(), &[0.0, 0.0], 1e-5);
        assert_abs_diff_eq!(g[0], -2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn fd_hessian_examples() {
        let h = fd_hessian(&half_squared_norm(3), &[0.4, -1.0, 2.0], 1e-5);
        assert!(h.max_abs_diff(&SymmetricMatrix::identity(3)) < 1e-6);

        let xy = bilinear();
        let expected = SymmetricMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(fd_hessian(&xy, &[0.7, -0.2], 1e-5).max_abs_diff(&expected) < 1e-6);
        assert!(xy.hess(&[0.7, -0.2]).max_abs_diff(&expected) < 1e-6);

        let expected =
            SymmetricMatrix::from_rows(&[vec![802.0, -400.0], vec![-400.0, 200.0]]).unwrap();
        assert!(fd_hessian(&rosenbrock(), &[1.0, 1.0], 1e-5).max_abs_diff(&expected) < 1e-3);
        assert_eq!(rosenbrock().hess(&[1.0, 1.0]), expected);
    }

    #[test]
    fn classification_examples() {
        let r = classify_critical_point(&half_squared_norm(3), &[0.0; 3]);
        assert_eq!(r.classification, Classification::LocalMin);
        assert_eq!(r.hessian_eigenvalues, vec![1.0; 3]);
        assert_eq!(r.grad_norm, 0.0);

        let f = double_well_saddle();
        let r = classify_critical_point(&f, &[0.0, 0.0]);
        assert_eq!(r.classification, Classification::Saddle);
        assert_eq!(r.hessian_eigenvalues, vec![-1.0, 1.0]);

        let r = classify_critical_point(&f, &[0.0, 1.0]);
        assert_eq!(r.classification, Classification::LocalMin);
        assert_eq!(r.hessian_eigenvalues, vec![1.0, 2.0]);
        let r = classify_critical_point(&f, &[0.0, -1.0]);
        assert_eq!(r.classification, Classification::LocalMin);

        let r = classify_critical_point(&quartic_degenerate(2), &[0.0, 0.0]);
        assert_eq!(r.classification, Classification::Degenerate);

        let r = classify_critical_point(&rosenbrock(), &[1.0, 1.0]);
        assert_eq!(r.classification, Classification::LocalMin);

        let neg = quadratic(SymmetricMatrix::diagonal(&[-1.0, -2.0]), vec![0.0, 0.0]).unwrap();
        let r = classify_critical_point(&neg, &[0.0, 0.0]);
        assert_eq!(r.classification, Classification::LocalMax);
    }

    #[test]
    fn quadratic_rejects_mismatched_linear_term() {
        assert!(quadratic(SymmetricMatrix::identity(2), vec![1.0]).is_err());
    }

    #[test]
    fn corpus_lookup() {
        for name in CORPUS_NAMES {
            assert_eq!(corpus_function(name, 2).unwrap().label(), name);
        }
        assert!(corpus_function("himmelblau", 2).is_none());
        assert_eq!(corpus_function("quadratic", 5).unwrap().dim(), 5);
    }

    #[test]
    fn black_box_derivatives_are_close() {
        let f = CostFunction::from_fn("rb", 2, |v| rosenbrock().eval(v));
        assert!(!f.has_analytic_derivatives());
        let x = [-0.7, 1.3];
        let g = f.grad(&x);
        let ga = rosenbrock().grad(&x);
        for (a, b) in g.iter().zip(&ga) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-5 * b.abs().max(1.0));
        }
        let h = f.hess(&x);
        assert!(h.max_abs_diff(&rosenbrock().hess(&x)) < 1e-3 * 1e3);
    }
}
