//! Python bindings: `import qnewton`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qnewton::linalg::{self, SymmetricMatrix};
use qnewton::objective::{corpus_function, CORPUS_NAMES};
use qnewton::polysys::{self, SolveOptions};
use qnewton::stepper::{estimate_order_from_errors, IterationRecord};
use qnewton::{BasisStrategy, CostFunction, Error, StepperConfig, Variant};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NumericFailure(_) | Error::EigenNoConvergence { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<SymmetricMatrix> {
    SymmetricMatrix::from_rows(&rows).map_err(to_py)
}

/// Smallest absolute eigenvalue of a symmetric matrix.
#[pyfunction]
fn minsp(a: Vec<Vec<f64>>) -> PyResult<f64> {
    linalg::minsp(&matrix(a)?).map_err(to_py)
}

/// Spectral radius of a symmetric matrix.
#[pyfunction]
fn sp(a: Vec<Vec<f64>>) -> PyResult<f64> {
    linalg::sp(&matrix(a)?).map_err(to_py)
}

/// `(eigenvalues, eigenvectors)`, eigenvalues ascending; `eigenvectors[i]`
/// belongs to `eigenvalues[i]`.
#[pyfunction]
fn eigh(a: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let e = linalg::eigen_decompose(&matrix(a)?).map_err(to_py)?;
    Ok((e.eigenvalues, e.eigenvectors))
}

#[pyfunction]
fn corpus_names() -> Vec<&'static str> {
    CORPUS_NAMES.to_vec()
}

/// Least-squares convergence order of an error sequence.
#[pyfunction]
fn estimate_order(errors: Vec<f64>) -> PyResult<f64> {
    Ok(estimate_order_from_errors(&errors).map_err(to_py)?.order)
}

/// Wraps Python callables. Exceptions raised by them become `NaN`, which
/// ends the run with a numeric-failure termination.
fn python_cost(
    dim: usize,
    f: Py<PyAny>,
    grad: Option<Py<PyAny>>,
    hess: Option<Py<PyAny>>,
) -> CostFunction {
    let eval = move |x: &[f64]| -> f64 {
        Python::attach(|py| {
            f.call1(py, (x.to_vec(),))
                .and_then(|v| v.bind(py).extract::<f64>())
                .unwrap_or(f64::NAN)
        })
    };
    match (grad, hess) {
        (Some(g), Some(h)) => CostFunction::new(
            "python",
            dim,
            eval,
            move |x: &[f64]| {
                Python::attach(|py| {
                    g.call1(py, (x.to_vec(),))
                        .and_then(|v| v.bind(py).extract::<Vec<f64>>())
                        .unwrap_or_else(|_| vec![f64::NAN; x.len()])
                })
            },
            move |x: &[f64]| {
                Python::attach(|py| {
                    h.call1(py, (x.to_vec(),))
                        .and_then(|v| v.bind(py).extract::<Vec<Vec<f64>>>())
                        .ok()
                        .and_then(|rows| SymmetricMatrix::from_rows(&rows).ok())
                        .unwrap_or_else(|| SymmetricMatrix::from_fn(x.len(), |_, _| f64::NAN))
                })
            },
        ),
        _ => CostFunction::from_fn("python", dim, eval),
    }
}

/// Outcome of [`minimize`].
#[pyclass(name = "RunResult", frozen, get_all)]
struct PyRunResult {
    x: Vec<f64>,
    f: f64,
    grad_norm: f64,
    termination: String,
    iterations: usize,
    armijo_trials: usize,
    classification: String,
    hessian_eigenvalues: Vec<f64>,
    deltas: Vec<f64>,
    kappa: f64,
    delta_seed: u64,
    /// Iterates including the final point.
    iterates: Vec<Vec<f64>>,
    f_values: Vec<f64>,
    delta_indices: Vec<Option<usize>>,
    gammas: Vec<f64>,
}

#[pymethods]
impl PyRunResult {
    fn converged(&self) -> bool {
        self.termination == "grad_tolerance_met"
    }

    /// Convergence order of the iterates towards `x_star`.
    fn order(&self, x_star: Vec<f64>) -> PyResult<f64> {
        let errors: Vec<f64> = self
            .iterates
            .iter()
            .map(|x| linalg::distance(x, &x_star))
            .collect();
        estimate_order(errors)
    }

    fn __repr__(&self) -> String {
        format!(
            "RunResult(termination={:?}, iterations={}, f={:e}, x={:?})",
            self.termination, self.iterations, self.f, self.x
        )
    }
}

/// Minimizes a corpus function (by name) or a Python callable.
///
/// Callables receive a list of floats. `grad` and `hess` are optional; when
/// either is missing both are approximated by finite differences.
#[pyfunction]
#[pyo3(signature = (
    objective, x0, *, grad=None, hess=None, variant="G", tau=None, basis="eigen",
    deltas=None, delta_seed=0, random_delta_mode=false, gamma0=None,
    max_iterations=10_000, grad_tolerance=1e-10,
))]
#[allow(clippy::too_many_arguments)]
fn minimize(
    objective: &Bound<'_, PyAny>,
    x0: Vec<f64>,
    grad: Option<Py<PyAny>>,
    hess: Option<Py<PyAny>>,
    variant: &str,
    tau: Option<f64>,
    basis: &str,
    deltas: Option<Vec<f64>>,
    delta_seed: u64,
    random_delta_mode: bool,
    gamma0: Option<f64>,
    max_iterations: usize,
    grad_tolerance: f64,
) -> PyResult<PyRunResult> {
    let dim = x0.len();
    let cost = if let Ok(name) = objective.extract::<String>() {
        corpus_function(&name, dim)
            .ok_or_else(|| PyValueError::new_err(format!("unknown corpus function '{name}'")))?
    } else if objective.is_callable() {
        python_cost(dim, objective.clone().unbind(), grad, hess)
    } else {
        return Err(PyValueError::new_err(
            "objective must be a corpus name or a callable",
        ));
    };
    let variant: Variant = variant.parse().map_err(to_py)?;
    let mut cfg = StepperConfig::for_variant(variant, dim, delta_seed)
        .with_basis(BasisStrategy::from_name(basis).map_err(to_py)?)
        .with_random_delta_mode(random_delta_mode)
        .with_max_iterations(max_iterations)
        .with_grad_tolerance(grad_tolerance);
    if let Some(t) = tau {
        cfg = cfg.with_tau(t);
    }
    if let Some(d) = deltas {
        cfg = cfg.with_deltas(d);
    }
    if let Some(g) = gamma0 {
        cfg = cfg.with_gamma0(g);
    }
    let r = objective
        .py()
        .detach(|| qnewton::run(&cost, &x0, &cfg))
        .map_err(to_py)?;
    let step = |f: fn(&IterationRecord) -> f64| r.trace.iter().map(f).collect::<Vec<_>>();
    Ok(PyRunResult {
        iterates: r.iterates(),
        f_values: step(|t| t.f_value),
        delta_indices: r.trace.iter().map(|t| t.outcome.delta_index).collect(),
        gammas: step(|t| t.outcome.gamma),
        x: r.final_x.clone(),
        f: r.final_f,
        grad_norm: r.final_grad_norm,
        termination: r.termination.as_str().to_string(),
        iterations: r.iterations(),
        armijo_trials: r.total_armijo_trials(),
        classification: r.final_report.classification.as_str().to_string(),
        hessian_eigenvalues: r.final_report.hessian_eigenvalues.clone(),
        deltas: r.deltas.clone(),
        kappa: r.kappa,
        delta_seed: r.delta_seed,
    })
}

/// A system of real polynomial equations.
#[pyclass(name = "PolySystem", frozen)]
struct PyPolySystem {
    inner: qnewton::PolySystem,
}

#[pymethods]
impl PyPolySystem {
    /// Parses one polynomial per line, e.g. `"x1^2 + x2^2 - 1\nx1 - x2"`.
    /// With `complex=True` the variables are complex and `i` is allowed; the
    /// system is split into real and imaginary parts.
    #[staticmethod]
    #[pyo3(signature = (text, complex=false))]
    fn parse(text: &str, complex: bool) -> PyResult<Self> {
        let inner = if complex {
            polysys::complex_to_real(&polysys::parse_complex_system(text).map_err(to_py)?)
        } else {
            polysys::parse_system(text)
        }
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn num_vars(&self) -> usize {
        self.inner.num_vars()
    }

    /// The polynomials in text form.
    #[getter]
    fn polynomials(&self) -> Vec<String> {
        self.inner
            .polynomials()
            .iter()
            .map(|p| p.to_string())
            .collect()
    }

    /// `Σ P_i(x)²`.
    fn residual(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.residual(&x).map_err(to_py)
    }

    /// Dict with `degree`, `r`, `bound` and the recommended `tau`.
    fn tau0<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let t = polysys::tau0(&self.inner).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("degree", t.degree)?;
        d.set_item("r", t.r)?;
        d.set_item("bound", t.bound)?;
        d.set_item("tau", t.tau)?;
        Ok(d)
    }

    /// Multi-start root search. Returns a dict with `tau`, `roots` and
    /// `critical_points` (lists of `(x, f)`), `diverged` and `unresolved`.
    #[pyo3(signature = (starts=20, lo=-2.0, hi=2.0, seed=0, tau=None))]
    fn solve<'py>(
        &self,
        py: Python<'py>,
        starts: usize,
        lo: f64,
        hi: f64,
        seed: u64,
        tau: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        if !(lo <= hi) {
            return Err(PyValueError::new_err("need lo <= hi"));
        }
        let xs = polysys::uniform_starts(&vec![(lo, hi); self.inner.num_vars()], starts, seed);
        let options = SolveOptions {
            tau,
            delta_seed: seed,
            ..SolveOptions::default()
        };
        let report = py
            .detach(|| polysys::solve_system(&self.inner, &xs, &options))
            .map_err(to_py)?;
        let points = |v: &[polysys::FoundPoint]| -> Vec<(Vec<f64>, f64)> {
            v.iter().map(|p| (p.x.clone(), p.residual)).collect()
        };
        let d = PyDict::new(py);
        d.set_item("tau", report.tau)?;
        d.set_item("roots", points(&report.roots))?;
        d.set_item("critical_points", points(&report.critical_points))?;
        d.set_item("diverged", report.diverged)?;
        d.set_item("unresolved", report.unresolved)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("PolySystem({:?})", self.polynomials())
    }
}

#[pymodule]
#[pyo3(name = "qnewton")]
fn qnewton_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(minsp, m)?)?;
    m.add_function(wrap_pyfunction!(sp, m)?)?;
    m.add_function(wrap_pyfunction!(eigh, m)?)?;
    m.add_function(wrap_pyfunction!(corpus_names, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_order, m)?)?;
    m.add_function(wrap_pyfunction!(minimize, m)?)?;
    m.add_class::<PyRunResult>()?;
    m.add_class::<PyPolySystem>()?;
    Ok(())
}
