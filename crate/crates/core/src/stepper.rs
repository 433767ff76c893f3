//! The optimizer core.
//!
//! Every variant shares the same skeleton. At `x` with gradient `g` and
//! Hessian `H`:
//!
//! 1. pick the first `δ_j` for which `A = H + δ_j |g|^τ Id` satisfies
//!    `minsp(A) >= κ |g|^τ`, where `κ` is half the smallest gap between the
//!    `δ`s;
//! 2. choose an orthonormal basis `e_1..e_m`;
//! 3. form `w = Σ <g, e_i> / |A e_i| · e_i`;
//! 4. optionally normalize to `ŵ = w / max(1, |w|)`;
//! 5. backtrack `γ ∈ {γ₀, γ₀/3, ...}` until
//!    `f(x − γŵ) − f(x) <= −γ <ŵ, g> / 3`, and move to `x − γŵ`.
//!
//! The plain `Nqn` variant skips the line search and uses the
//! projection form `w = pr₊(A⁻¹g) − pr₋(A⁻¹g)` with `γ = 1`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    self, complete_to_orthonormal_basis, dot, eigen_decompose, norm, EigenDecomposition,
    OrthonormalBasis, SymmetricMatrix,
};
use crate::objective::{classify_critical_point, CostFunction, CriticalPointReport};

/// Random stream used for per-step `δ` draws in random-δ mode.
pub type DeltaRng = ChaCha8Rng;

/// Smallest `|A e_i|` the step formula will divide by.
const DIVISION_GUARD: f64 = 1e-300;
/// Coefficients `<g, e_i>` below this fraction of `|g|` are treated as zero
/// when computing the conditioning diagnostic.
const LAMBDA_SUPPORT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// No line search, unit step, projection-form direction.
    Nqn,
    /// Eigenvector basis, `τ > 1`, normalized step, Armijo backtracking.
    Nqnb,
    /// As `Nqnb` but the line search runs on the raw `w`.
    NqnbS,
    /// General framework: any `τ > 0`, any basis strategy.
    G,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Nqn => "NQN",
            Variant::Nqnb => "NQNB",
            Variant::NqnbS => "NQNB_S",
            Variant::G => "G",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "NQN" => Ok(Variant::Nqn),
            "NQNB" => Ok(Variant::Nqnb),
            "NQNB_S" => Ok(Variant::NqnbS),
            "G" => Ok(Variant::G),
            other => Err(Error::InvalidConfig(format!(
                "unknown variant {other:?} (expected NQN, NQNB, NQNB_S or G)"
            ))),
        }
    }
}

/// A position-dependent basis supplied by the caller. It should vary smoothly
/// with `x`; that is not checked.
pub type BasisField = Arc<dyn Fn(&[f64]) -> OrthonormalBasis + Send + Sync>;

/// Basis used when the strategy does not depend on the Hessian.
#[derive(Clone, Default)]
pub enum FixedBasis {
    #[default]
    Standard,
    Constant(OrthonormalBasis),
    Field(BasisField),
}

impl FixedBasis {
    fn at(&self, x: &[f64]) -> OrthonormalBasis {
        match self {
            FixedBasis::Standard => OrthonormalBasis::standard(x.len()),
            FixedBasis::Constant(b) => b.clone(),
            FixedBasis::Field(field) => field(x),
        }
    }
}

impl fmt::Debug for FixedBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FixedBasis::Standard => f.write_str("Standard"),
            FixedBasis::Constant(b) => f.debug_tuple("Constant").field(b).finish(),
            FixedBasis::Field(_) => f.write_str("Field(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum BasisStrategy {
    /// Eigenvectors of the Hessian (G1, and the NQNB family).
    Eigen,
    /// A basis independent of the Hessian (G2, G3 with smooth fields).
    Fixed(FixedBasis),
    /// First vector along the gradient; reduces to rescaled backtracking
    /// gradient descent.
    GradientAligned,
    /// Eigenvectors when `minsp(A) >= κ |g|^threshold_exponent`, the fallback
    /// basis otherwise (G4).
    Hybrid {
        threshold_exponent: f64,
        fallback: FixedBasis,
    },
}

impl BasisStrategy {
    pub fn fixed() -> Self {
        BasisStrategy::Fixed(FixedBasis::Standard)
    }

    pub fn hybrid() -> Self {
        BasisStrategy::Hybrid {
            threshold_exponent: 0.5,
            fallback: FixedBasis::Standard,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BasisStrategy::Eigen => "eigen",
            BasisStrategy::Fixed(_) => "fixed",
            BasisStrategy::GradientAligned => "gradient_aligned",
            BasisStrategy::Hybrid { .. } => "hybrid",
        }
    }

    /// Parses the four strategy names with default parameters.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "eigen" => Ok(BasisStrategy::Eigen),
            "fixed" => Ok(BasisStrategy::fixed()),
            "gradient_aligned" => Ok(BasisStrategy::GradientAligned),
            "hybrid" => Ok(BasisStrategy::hybrid()),
            other => Err(Error::InvalidConfig(format!(
                "unknown basis strategy {other:?} (expected eigen, fixed, gradient_aligned or hybrid)"
            ))),
        }
    }
}

/// `½ min_{i≠j} |δ_i − δ_j|`.
pub fn kappa_of(deltas: &[f64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..deltas.len() {
        for j in (i + 1)..deltas.len() {
            gap = gap.min((deltas[i] - deltas[j]).abs());
        }
    }
    0.5 * gap
}

/// `δ₀ = 0` followed by `dim` distinct values drawn from the grid
/// `{-1 + k/(2·dim)}` on `[-1, 1]` with zero removed, so `κ >= 1/(4·dim)`.
pub fn default_deltas(dim: usize, seed: u64) -> Vec<f64> {
    assert!(dim > 0, "dimension must be at least 1");
    let steps = 4 * dim;
    let spacing = 1.0 / (2 * dim) as f64;
    let grid: Vec<f64> = (0..=steps)
        .filter(|&k| k != 2 * dim)
        .map(|k| -1.0 + k as f64 * spacing)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut deltas = Vec::with_capacity(dim + 1);
    deltas.push(0.0);
    deltas.extend(
        index::sample(&mut rng, grid.len(), dim)
            .iter()
            .map(|i| grid[i]),
    );
    deltas
}

/// Hyperparameters of a run.
#[derive(Debug, Clone)]
pub struct StepperConfig {
    pub variant: Variant,
    /// Exponent on `|∇f|` in the Hessian perturbation.
    pub tau: f64,
    deltas: Vec<f64>,
    kappa: f64,
    /// Initial learning rate for the backtracking search.
    pub gamma0: f64,
    pub armijo_constant: f64,
    pub backtrack_factor: f64,
    pub basis_strategy: BasisStrategy,
    pub normalize_step: bool,
    pub max_iterations: usize,
    pub grad_tolerance: f64,
    /// Draw `δ ~ U[-1, 1]` at each step instead of running the admissibility
    /// search.
    pub random_delta_mode: bool,
    /// Seed behind the default `δ` sequence and the random-δ stream.
    pub delta_seed: u64,
    pub max_armijo_trials: usize,
    /// Runs stop as diverged once `|x|` exceeds this.
    pub divergence_bound: f64,
}

impl StepperConfig {
    fn base(variant: Variant, dim: usize, seed: u64, tau: f64) -> Self {
        let deltas = default_deltas(dim, seed);
        Self {
            variant,
            tau,
            kappa: kappa_of(&deltas),
            deltas,
            gamma0: 1.0,
            armijo_constant: 1.0 / 3.0,
            backtrack_factor: 1.0 / 3.0,
            basis_strategy: BasisStrategy::Eigen,
            normalize_step: variant != Variant::NqnbS && variant != Variant::Nqn,
            max_iterations: 10_000,
            grad_tolerance: 1e-10,
            random_delta_mode: false,
            delta_seed: seed,
            max_armijo_trials: 100,
            divergence_bound: 1e8,
        }
    }

    /// General framework with `τ = 1` and the eigenvector basis.
    pub fn g(dim: usize, seed: u64) -> Self {
        Self::base(Variant::G, dim, seed, 1.0)
    }

    /// Backtracking variant with `τ = 1.5`.
    pub fn nqnb(dim: usize, seed: u64) -> Self {
        Self::base(Variant::Nqnb, dim, seed, 1.5)
    }

    pub fn nqnb_s(dim: usize, seed: u64) -> Self {
        Self::base(Variant::NqnbS, dim, seed, 1.5)
    }

    pub fn nqn(dim: usize, seed: u64) -> Self {
        Self::base(Variant::Nqn, dim, seed, 1.5)
    }

    pub fn for_variant(variant: Variant, dim: usize, seed: u64) -> Self {
        match variant {
            Variant::Nqn => Self::nqn(dim, seed),
            Variant::Nqnb => Self::nqnb(dim, seed),
            Variant::NqnbS => Self::nqnb_s(dim, seed),
            Variant::G => Self::g(dim, seed),
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_basis(mut self, basis: BasisStrategy) -> Self {
        self.basis_strategy = basis;
        self
    }

    pub fn with_gamma0(mut self, gamma0: f64) -> Self {
        self.gamma0 = gamma0;
        self
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn with_grad_tolerance(mut self, tol: f64) -> Self {
        self.grad_tolerance = tol;
        self
    }

    pub fn with_random_delta_mode(mut self, on: bool) -> Self {
        self.random_delta_mode = on;
        self
    }

    /// Replaces the `δ` sequence and recomputes `κ`. Validity is checked by
    /// [`validate`](Self::validate).
    pub fn with_deltas(mut self, deltas: Vec<f64>) -> Self {
        self.kappa = kappa_of(&deltas);
        self.deltas = deltas;
        self
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn uses_line_search(&self) -> bool {
        self.variant != Variant::Nqn
    }

    /// Checks every invariant for a problem of dimension `dim`.
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.deltas.len() != dim + 1 {
            return bad(format!(
                "deltas must have dim + 1 = {} entries, got {}",
                dim + 1,
                self.deltas.len()
            ));
        }
        if self.deltas.iter().any(|d| !d.is_finite()) {
            return bad("deltas must be finite".into());
        }
        for i in 0..self.deltas.len() {
            for j in (i + 1)..self.deltas.len() {
                if self.deltas[i] == self.deltas[j] {
                    return bad(format!(
                        "deltas must be pairwise distinct (deltas[{i}] == deltas[{j}] == {})",
                        self.deltas[i]
                    ));
                }
            }
        }
        if self.kappa != kappa_of(&self.deltas) {
            return bad("kappa does not match half the minimum delta gap".into());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.gamma0 > 0.0 && self.gamma0 <= 1.0) {
            return bad(format!("gamma0 must lie in (0, 1], got {}", self.gamma0));
        }
        if !(self.armijo_constant > 0.0 && self.armijo_constant < 1.0) {
            return bad(format!(
                "armijo_constant must lie in (0, 1), got {}",
                self.armijo_constant
            ));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad(format!(
                "backtrack_factor must lie in (0, 1), got {}",
                self.backtrack_factor
            ));
        }
        if !(self.grad_tolerance >= 0.0) {
            return bad("grad_tolerance must be non-negative".into());
        }
        if let BasisStrategy::Hybrid {
            threshold_exponent, ..
        } = &self.basis_strategy
        {
            if !(*threshold_exponent > 0.0) {
                return bad("hybrid threshold exponent must be positive".into());
            }
        }
        match self.variant {
            Variant::Nqnb | Variant::NqnbS => {
                if self.tau <= 1.0 {
                    return bad(format!(
                        "{} requires tau > 1, got {}",
                        self.variant, self.tau
                    ));
                }
                if !matches!(self.basis_strategy, BasisStrategy::Eigen) {
                    return bad(format!("{} requires the eigen basis", self.variant));
                }
                let want = self.variant == Variant::Nqnb;
                if self.normalize_step != want {
                    return bad(format!("{} requires normalize_step = {want}", self.variant));
                }
            }
            Variant::Nqn => {
                if self.tau <= 1.0 {
                    return bad(format!("NQN requires tau > 1, got {}", self.tau));
                }
            }
            Variant::G => {}
        }
        Ok(())
    }
}

/// Result of the `δ` search: the perturbed Hessian `A` and its spectrum.
#[derive(Debug, Clone)]
pub struct DeltaChoice {
    /// `None` in random-δ mode.
    pub index: Option<usize>,
    pub delta: f64,
    pub matrix: SymmetricMatrix,
    pub eigen: EigenDecomposition,
}

fn check_grad_norm(grad_norm: f64) -> Result<()> {
    if !(grad_norm > 0.0 && grad_norm.is_finite()) {
        return Err(Error::Domain(format!(
            "gradient norm must be positive and finite, got {grad_norm}"
        )));
    }
    Ok(())
}

/// Returns the first `δ_j` with `minsp(H + δ_j g^τ Id) >= κ g^τ`.
///
/// Each Hessian eigenvalue rules out at most one `δ_j`, so some
/// `j <= m` always qualifies in exact arithmetic.
pub fn select_delta(
    hess: &SymmetricMatrix,
    grad_norm: f64,
    config: &StepperConfig,
) -> Result<DeltaChoice> {
    check_grad_norm(grad_norm)?;
    let eigen = eigen_decompose(hess)?;
    select_delta_from(hess, &eigen, grad_norm, config)
}

fn select_delta_from(
    hess: &SymmetricMatrix,
    eigen: &EigenDecomposition,
    grad_norm: f64,
    config: &StepperConfig,
) -> Result<DeltaChoice> {
    let scale = grad_norm.powf(config.tau);
    let threshold = config.kappa * scale;
    for (j, &delta) in config.deltas.iter().enumerate() {
        let shifted = eigen.shifted(delta * scale);
        // strict `<` in the rejection test, so the boundary is admissible
        if shifted.minsp() >= threshold {
            return Ok(DeltaChoice {
                index: Some(j),
                delta,
                matrix: hess.shifted(delta * scale),
                eigen: shifted,
            });
        }
    }
    Err(Error::NumericFailure(format!(
        "no delta satisfies minsp(A) >= {threshold:e}"
    )))
}

fn random_delta(
    hess: &SymmetricMatrix,
    eigen: &EigenDecomposition,
    grad_norm: f64,
    config: &StepperConfig,
    rng: &mut DeltaRng,
) -> DeltaChoice {
    let delta: f64 = rng.random_range(-1.0..=1.0);
    let shift = delta * grad_norm.powf(config.tau);
    DeltaChoice {
        index: None,
        delta,
        matrix: hess.shifted(shift),
        eigen: eigen.shifted(shift),
    }
}

fn basis_from(
    a_eigen: &EigenDecomposition,
    grad: &[f64],
    x: &[f64],
    config: &StepperConfig,
) -> Result<OrthonormalBasis> {
    match &config.basis_strategy {
        BasisStrategy::Eigen => Ok(a_eigen.basis()),
        BasisStrategy::Fixed(fixed) => Ok(fixed.at(x)),
        BasisStrategy::GradientAligned => {
            let n = norm(grad);
            check_grad_norm(n)?;
            let unit: Vec<f64> = grad.iter().map(|g| g / n).collect();
            complete_to_orthonormal_basis(&unit)
        }
        BasisStrategy::Hybrid {
            threshold_exponent,
            fallback,
        } => {
            let n = norm(grad);
            if a_eigen.minsp() >= config.kappa * n.powf(*threshold_exponent) {
                Ok(a_eigen.basis())
            } else {
                Ok(fallback.at(x))
            }
        }
    }
}

/// Chooses `e_1..e_m` at `x` according to the configured strategy.
///
/// `a` and `hess` differ by a multiple of the identity, so their eigenvectors
/// coincide; the Eigen strategy decomposes `a`.
pub fn build_basis(
    a: &SymmetricMatrix,
    hess: &SymmetricMatrix,
    grad: &[f64],
    x: &[f64],
    config: &StepperConfig,
) -> Result<OrthonormalBasis> {
    debug_assert_eq!(a.dim(), hess.dim());
    check_grad_norm(norm(grad))?;
    let eigen = eigen_decompose(a)?;
    basis_from(&eigen, grad, x, config)
}

/// Step direction plus the `min |Ae_i| / max |Ae_i|` ratio over the basis
/// vectors with non-zero gradient component.
#[derive(Debug, Clone)]
pub struct Direction {
    pub w: Vec<f64>,
    pub cond_ratio: f64,
}

pub fn step_direction_with_diagnostics(
    a: &SymmetricMatrix,
    grad: &[f64],
    basis: &OrthonormalBasis,
) -> Result<Direction> {
    let m = grad.len();
    if a.dim() != m || basis.dim() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: a.dim().min(basis.dim()),
        });
    }
    let gnorm = norm(grad);
    let mut w = vec![0.0; m];
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for e in basis.vectors() {
        let c = dot(grad, e);
        if c == 0.0 {
            continue;
        }
        let ae = norm(&a.mul_vec(e));
        if !(ae > DIVISION_GUARD) {
            return Err(Error::NumericFailure(format!(
                "|A e_i| = {ae:e} is too small to divide by"
            )));
        }
        if c.abs() > LAMBDA_SUPPORT_TOL * gnorm {
            lo = lo.min(ae);
            hi = hi.max(ae);
        }
        let s = c / ae;
        for (wi, ei) in w.iter_mut().zip(e) {
            *wi += s * ei;
        }
    }
    let cond_ratio = if hi > 0.0 { lo / hi } else { f64::NAN };
    Ok(Direction { w, cond_ratio })
}

/// `w = Σ <grad, e_i> / |A e_i| · e_i`.
pub fn step_direction(
    a: &SymmetricMatrix,
    grad: &[f64],
    basis: &OrthonormalBasis,
) -> Result<Vec<f64>> {
    Ok(step_direction_with_diagnostics(a, grad, basis)?.w)
}

fn nqn_direction_from(
    a: &SymmetricMatrix,
    eigen: &EigenDecomposition,
    grad: &[f64],
) -> Result<Vec<f64>> {
    let threshold = linalg::invertibility_threshold(a);
    if eigen.minsp() <= threshold {
        return Err(Error::Domain(format!(
            "A is singular (minsp {:e})",
            eigen.minsp()
        )));
    }
    let m = grad.len();
    // v = A⁻¹ g through the spectral decomposition
    let mut v = vec![0.0; m];
    for (lambda, q) in eigen.eigenvalues.iter().zip(&eigen.eigenvectors) {
        let c = dot(grad, q) / lambda;
        for (vi, qi) in v.iter_mut().zip(q) {
            *vi += c * qi;
        }
    }
    let (plus, minus) = linalg::split_with(eigen, threshold, &v)?;
    Ok(plus.iter().zip(&minus).map(|(p, n)| p - n).collect())
}

/// `pr₊(v) − pr₋(v)` with `v = A⁻¹ grad`; the Newton step `A⁻¹ grad` when
/// `A` is positive definite.
pub fn nqn_direction(a: &SymmetricMatrix, grad: &[f64]) -> Result<Vec<f64>> {
    if grad.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: grad.len(),
        });
    }
    let eigen = eigen_decompose(a)?;
    nqn_direction_from(a, &eigen, grad)
}

/// Relative slack on `f(x)` in the Armijo comparison, covering the rounding
/// error of evaluating `f`.
pub const ARMIJO_ROUNDING_SLACK: f64 = 4.0 * f64::EPSILON;

/// Outcome of a successful backtracking search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoStep {
    pub gamma: f64,
    pub trials: usize,
    /// `f(x − γŵ)` at the accepted `γ`.
    pub f_next: f64,
}

/// Shrinks `γ` from `γ₀` by `backtrack_factor` until
/// `f(x − γŵ) − f(x) <= −c γ <ŵ, ∇f(x)>`.
///
/// `f_x` is `f(x)` and `directional_derivative` is `<ŵ, ∇f(x)>`, which must be
/// positive. The comparison allows [`ARMIJO_ROUNDING_SLACK`]` · |f(x)|` so that
/// steps whose true decrease is below the rounding error of `f` still pass.
pub fn armijo_search(
    f: &CostFunction,
    x: &[f64],
    f_x: f64,
    w_hat: &[f64],
    directional_derivative: f64,
    config: &StepperConfig,
) -> Result<ArmijoStep> {
    if !(directional_derivative > 0.0) {
        return Err(Error::Domain(format!(
            "line search needs a descent direction, <w, grad> = {directional_derivative:e}"
        )));
    }
    let slack = ARMIJO_ROUNDING_SLACK * f_x.abs();
    let mut gamma = config.gamma0;
    let mut trial = vec![0.0; x.len()];
    for trials in 0..=config.max_armijo_trials {
        for ((t, xi), wi) in trial.iter_mut().zip(x).zip(w_hat) {
            *t = xi - gamma * wi;
        }
        if trial == x {
            return Err(Error::NumericFailure(format!(
                "step vanished below floating-point resolution after {trials} reductions"
            )));
        }
        let f_next = f.eval(&trial);
        // NaN fails the comparison and keeps shrinking
        if f_next - f_x <= -config.armijo_constant * gamma * directional_derivative + slack {
            return Ok(ArmijoStep {
                gamma,
                trials,
                f_next,
            });
        }
        gamma *= config.backtrack_factor;
    }
    Err(Error::NumericFailure(format!(
        "Armijo condition not met after {} reductions",
        config.max_armijo_trials
    )))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub x_next: Vec<f64>,
    /// Index of the accepted `δ`; `None` in random-δ mode.
    pub delta_index: Option<usize>,
    pub delta: f64,
    pub gamma: f64,
    pub w: Vec<f64>,
    pub w_hat: Vec<f64>,
    pub armijo_trials: usize,
    /// `<ŵ, ∇f(x)>`.
    pub directional_derivative: f64,
    pub cond_ratio: f64,
    pub f_next: f64,
}

/// One iteration from `x`. Requires `∇f(x) ≠ 0`.
pub fn take_step(
    f: &CostFunction,
    x: &[f64],
    config: &StepperConfig,
    rng: &mut DeltaRng,
) -> Result<StepOutcome> {
    f.check_dim(x)?;
    let grad = f.grad(x);
    step_from(f, x, f.eval(x), &grad, config, rng)
}

fn step_from(
    f: &CostFunction,
    x: &[f64],
    f_x: f64,
    grad: &[f64],
    config: &StepperConfig,
    rng: &mut DeltaRng,
) -> Result<StepOutcome> {
    let grad_norm = norm(grad);
    check_grad_norm(grad_norm)?;
    let hess = f.hess(x);
    let h_eigen = eigen_decompose(&hess)?;
    let choice = if config.random_delta_mode {
        random_delta(&hess, &h_eigen, grad_norm, config, rng)
    } else {
        select_delta_from(&hess, &h_eigen, grad_norm, config)?
    };

    let (w, cond_ratio) = if config.variant == Variant::Nqn {
        let w = nqn_direction_from(&choice.matrix, &choice.eigen, grad)?;
        let diag = step_direction_with_diagnostics(&choice.matrix, grad, &choice.eigen.basis())?;
        (w, diag.cond_ratio)
    } else {
        let basis = basis_from(&choice.eigen, grad, x, config)?;
        let d = step_direction_with_diagnostics(&choice.matrix, grad, &basis)?;
        (d.w, d.cond_ratio)
    };

    let w_hat = if config.normalize_step && config.variant != Variant::Nqn {
        let scale = norm(&w).max(1.0);
        w.iter().map(|c| c / scale).collect()
    } else {
        w.clone()
    };
    let directional_derivative = dot(&w_hat, grad);

    let (gamma, armijo_trials, f_next) = if config.uses_line_search() {
        let s = armijo_search(f, x, f_x, &w_hat, directional_derivative, config)?;
        (s.gamma, s.trials, s.f_next)
    } else {
        let x_next = linalg::sub(x, &w_hat);
        (1.0, 0, f.eval(&x_next))
    };
    let x_next = x
        .iter()
        .zip(&w_hat)
        .map(|(xi, wi)| xi - gamma * wi)
        .collect();

    Ok(StepOutcome {
        x_next,
        delta_index: choice.index,
        delta: choice.delta,
        gamma,
        w,
        w_hat,
        armijo_trials,
        directional_derivative,
        cond_ratio,
        f_next,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Point the step was taken from.
    pub x: Vec<f64>,
    pub f_value: f64,
    pub grad_norm: f64,
    pub outcome: StepOutcome,
    pub wall_time_ns: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    GradToleranceMet,
    MaxIterations,
    Diverged,
    NumericFailure(String),
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::GradToleranceMet => "grad_tolerance_met",
            Termination::MaxIterations => "max_iterations",
            Termination::Diverged => "diverged",
            Termination::NumericFailure(_) => "numeric_failure",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::NumericFailure(msg) => write!(f, "numeric_failure ({msg})"),
            other => f.write_str(other.as_str()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: Vec<IterationRecord>,
    pub termination: Termination,
    pub final_x: Vec<f64>,
    pub final_f: f64,
    pub final_grad_norm: f64,
    pub final_report: CriticalPointReport,
    /// Seed of the `δ` sequence and random-δ stream, for reproduction.
    pub delta_seed: u64,
    pub deltas: Vec<f64>,
    pub kappa: f64,
}

impl RunResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn total_armijo_trials(&self) -> usize {
        self.trace.iter().map(|r| r.outcome.armijo_trials).sum()
    }

    /// Every visited point, ending with `final_x`.
    pub fn iterates(&self) -> Vec<Vec<f64>> {
        self.trace
            .iter()
            .map(|r| r.x.clone())
            .chain(std::iter::once(self.final_x.clone()))
            .collect()
    }
}

/// Stream for random-δ draws, independent of the stream that generated the
/// default `δ` sequence.
pub fn delta_rng(seed: u64) -> DeltaRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Iterates [`take_step`] from `x0` until the gradient tolerance is met, the
/// iteration cap is hit, `|x|` passes the divergence bound, or a step fails.
///
/// Returns `Err` only for an invalid configuration or a starting point of the
/// wrong dimension; everything else is reported through
/// [`RunResult::termination`].
pub fn run(f: &CostFunction, x0: &[f64], config: &StepperConfig) -> Result<RunResult> {
    f.check_dim(x0)?;
    config.validate(f.dim())?;
    let mut rng = delta_rng(config.delta_seed);
    let mut trace = Vec::new();
    let mut x = x0.to_vec();
    let mut fx = f.eval(&x);
    let mut grad = f.grad(&x);

    let termination = loop {
        let grad_norm = norm(&grad);
        if !grad_norm.is_finite() || !fx.is_finite() {
            break Termination::NumericFailure(format!(
                "non-finite objective or gradient (f = {fx}, |grad| = {grad_norm})"
            ));
        }
        if grad_norm <= config.grad_tolerance {
            break Termination::GradToleranceMet;
        }
        if norm(&x) > config.divergence_bound {
            break Termination::Diverged;
        }
        if trace.len() >= config.max_iterations {
            break Termination::MaxIterations;
        }
        let started = Instant::now();
        let outcome = match step_from(f, &x, fx, &grad, config, &mut rng) {
            Ok(o) => o,
            Err(e) => break Termination::NumericFailure(e.to_string()),
        };
        let wall_time_ns = started.elapsed().as_nanos() as u64;
        log::debug!(
            "iter {} f={:e} |g|={:e} delta={:?} gamma={:e} trials={}",
            trace.len(),
            fx,
            grad_norm,
            outcome.delta_index,
            outcome.gamma,
            outcome.armijo_trials
        );
        let next_x = outcome.x_next.clone();
        let next_f = outcome.f_next;
        trace.push(IterationRecord {
            iteration: trace.len(),
            x: std::mem::replace(&mut x, next_x),
            f_value: fx,
            grad_norm,
            outcome,
            wall_time_ns,
        });
        fx = next_f;
        grad = f.grad(&x);
    };

    log::info!(
        "{} on {}: {} after {} iterations",
        config.variant,
        f.label(),
        termination,
        trace.len()
    );
    let final_report = classify_critical_point(f, &x);
    Ok(RunResult {
        trace,
        termination,
        final_grad_norm: norm(&grad),
        final_f: fx,
        final_x: x,
        final_report,
        delta_seed: config.delta_seed,
        deltas: config.deltas.clone(),
        kappa: config.kappa,
    })
}

/// Upper end of the error window used for rate estimation.
pub const RATE_WINDOW_HI: f64 = 1e-2;
/// Errors at or below this are treated as converged and excluded.
pub const RATE_WINDOW_LO: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct OrderEstimate {
    pub order: f64,
    /// Errors the fit used, oldest first.
    pub tail: Vec<f64>,
}

/// Fits `log e_{n+1} = c + ε log e_n` by least squares over the final run of
/// errors inside `(1e-13, 1e-2]`, extended back by one iterate so that the
/// first pair enters the window. Needs at least four errors in that tail.
pub fn estimate_order_from_errors(errors: &[f64]) -> Result<OrderEstimate> {
    let last = errors
        .iter()
        .rposition(|&e| e > RATE_WINDOW_LO && e.is_finite())
        .ok_or_else(|| Error::InsufficientData("no error above 1e-13".into()))?;
    let mut first = last;
    while first > 0 && errors[first - 1] > RATE_WINDOW_LO && errors[first - 1] <= RATE_WINDOW_HI {
        first -= 1;
    }
    if errors[last] > RATE_WINDOW_HI {
        return Err(Error::InsufficientData(format!(
            "final error {:e} never entered the window (1e-13, 1e-2]",
            errors[last]
        )));
    }
    let start = first.saturating_sub(1);
    let tail = &errors[start..=last];
    if tail.len() < 4 || tail.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::InsufficientData(format!(
            "need at least 4 qualifying iterates, found {}",
            tail.len()
        )));
    }
    let pts: Vec<(f64, f64)> = tail.windows(2).map(|p| (p[0].ln(), p[1].ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData(
            "errors are constant over the tail".into(),
        ));
    }
    Ok(OrderEstimate {
        order: sxy / sxx,
        tail: tail.to_vec(),
    })
}

/// Empirical convergence order of a run towards `x_star`.
pub fn estimate_order(result: &RunResult, x_star: &[f64]) -> Result<f64> {
    let errors: Vec<f64> = result
        .iterates()
        .iter()
        .map(|x| linalg::distance(x, x_star))
        .collect();
    Ok(estimate_order_from_errors(&errors)?.order)
}
