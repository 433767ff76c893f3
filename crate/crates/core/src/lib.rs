//! Saddle-avoiding modified Newton methods.
//!
//! The crate implements New Q-Newton's method and its Backtracking family:
//! the Hessian is perturbed by `δ |∇f|^τ Id` with `δ` picked from a finite
//! sequence so the perturbed matrix stays well away from singular, and the
//! step divides each gradient component by `|A e_i|` instead of by a signed
//! eigenvalue. Negative curvature therefore pushes iterates away from saddle
//! points, while near a non-degenerate minimum the method reduces to Newton's
//! method with its quadratic rate.
//!
//! ```
//! use qnewton::{objective, run, StepperConfig, Termination};
//!
//! let f = objective::rosenbrock();
//! let config = StepperConfig::g(2, 7).with_tau(0.9);
//! let result = run(&f, &[-1.2, 1.0], &config).unwrap();
//! assert_eq!(result.termination, Termination::GradToleranceMet);
//! assert!((result.final_x[0] - 1.0).abs() < 1e-6);
//! ```
//!
//! Modules:
//! - [`linalg`]: symmetric eigendecomposition and spectral helpers
//! - [`objective`]: cost functions, finite-difference oracles, test corpus
//! - [`stepper`]: `δ` selection, bases, step directions, line search, runs
//! - [`polysys`]: polynomial systems and the `Σ|P_i|²` objective

pub mod error;
pub mod linalg;
pub mod objective;
pub mod polysys;
pub mod stepper;

pub use error::{Error, Result};
pub use linalg::{EigenDecomposition, OrthonormalBasis, SymmetricMatrix};
pub use objective::{Classification, CostFunction, CriticalPointReport};
pub use polysys::{ComplexPolynomial, PolySystem, Polynomial};
pub use stepper::{
    run, take_step, BasisStrategy, FixedBasis, IterationRecord, RunResult, StepOutcome,
    StepperConfig, Termination, Variant,
};
