//! Polynomial systems `P_1 = ... = P_N = 0` solved by minimizing
//! `f = Σ P_i²` with the general stepper.
//!
//! For a polynomial objective of degree `d` in `m` variables the Łojasiewicz
//! exponent at every critical point is at most `1 − 1/R` with
//! `R = d (3d − 3)^(m−1)`. Any `τ < 1/(R − 1)` then guarantees that each
//! trajectory either escapes to infinity or converges; [`tau0`] returns a
//! value just inside that bound.

mod parse;

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, SymmetricMatrix};
use crate::objective::CostFunction;
use crate::stepper::{self, BasisStrategy, StepperConfig, Termination};

pub use parse::{parse_complex_system, parse_system};

/// Coefficient ring for [`MultiPoly`].
pub trait Coefficient:
    Copy
    + PartialEq
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
    + 'static
{
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool {
        *self == Self::zero()
    }
}

impl Coefficient for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
}

impl Coefficient for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
}

/// Sparse multivariate polynomial in canonical form: one entry per exponent
/// vector, no zero coefficients.
#[derive(Clone, PartialEq)]
pub struct MultiPoly<C: Coefficient> {
    num_vars: usize,
    terms: BTreeMap<Vec<u32>, C>,
}

/// Real polynomial.
pub type Polynomial = MultiPoly<f64>;
/// Polynomial with complex coefficients in complex variables.
pub type ComplexPolynomial = MultiPoly<Complex64>;

impl<C: Coefficient> MultiPoly<C> {
    /// Builds a polynomial from `(coefficient, exponents)` pairs, merging
    /// repeated exponent vectors and dropping zero coefficients.
    pub fn new(
        num_vars: usize,
        monomials: impl IntoIterator<Item = (C, Vec<u32>)>,
    ) -> Result<Self> {
        if num_vars == 0 {
            return Err(Error::Domain(
                "a polynomial needs at least one variable".into(),
            ));
        }
        let mut p = Self::zero(num_vars);
        for (c, exps) in monomials {
            if exps.len() != num_vars {
                return Err(Error::DimensionMismatch {
                    expected: num_vars,
                    got: exps.len(),
                });
            }
            p.add_term(exps, c);
        }
        Ok(p)
    }

    pub fn zero(num_vars: usize) -> Self {
        Self {
            num_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(num_vars: usize, c: C) -> Self {
        let mut p = Self::zero(num_vars);
        p.add_term(vec![0; num_vars], c);
        p
    }

    /// The monomial `x_var` (0-based).
    pub fn variable(num_vars: usize, var: usize) -> Self {
        assert!(var < num_vars, "variable index out of range");
        let mut exps = vec![0; num_vars];
        exps[var] = 1;
        let mut p = Self::zero(num_vars);
        p.add_term(exps, C::one());
        p
    }

    fn add_term(&mut self, exps: Vec<u32>, c: C) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(exps) {
            Entry::Vacant(slot) => {
                slot.insert(c);
            }
            Entry::Occupied(mut slot) => {
                let sum = *slot.get() + c;
                if sum.is_zero() {
                    slot.remove();
                } else {
                    *slot.get_mut() = sum;
                }
            }
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// `(coefficient, exponents)` pairs in ascending exponent order.
    pub fn monomials(&self) -> impl Iterator<Item = (C, &[u32])> + '_ {
        self.terms.iter().map(|(e, c)| (*c, e.as_slice()))
    }

    /// Embeds the polynomial in a ring with more variables.
    pub fn with_num_vars(&self, num_vars: usize) -> Result<Self> {
        if num_vars < self.num_vars {
            return Err(Error::Domain(format!(
                "cannot shrink a polynomial from {} to {num_vars} variables",
                self.num_vars
            )));
        }
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| {
                let mut e = e.clone();
                e.resize(num_vars, 0);
                (e, *c)
            })
            .collect();
        Ok(Self { num_vars, terms })
    }

    pub fn scale(&self, c: C) -> Self {
        let mut out = Self::zero(self.num_vars);
        for (e, v) in &self.terms {
            out.add_term(e.clone(), *v * c);
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Self::constant(self.num_vars, C::one());
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    fn assert_compatible(&self, other: &Self) {
        assert_eq!(
            self.num_vars, other.num_vars,
            "polynomials live in rings with different numbers of variables"
        );
    }
}

impl<C: Coefficient> Add for &MultiPoly<C> {
    type Output = MultiPoly<C>;
    fn add(self, rhs: Self) -> MultiPoly<C> {
        self.assert_compatible(rhs);
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }
}

impl<C: Coefficient> Sub for &MultiPoly<C> {
    type Output = MultiPoly<C>;
    fn sub(self, rhs: Self) -> MultiPoly<C> {
        self.assert_compatible(rhs);
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), -*c);
        }
        out
    }
}

impl<C: Coefficient> Mul for &MultiPoly<C> {
    type Output = MultiPoly<C>;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, rhs: Self) -> MultiPoly<C> {
        self.assert_compatible(rhs);
        let mut out = MultiPoly::zero(self.num_vars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let e = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, *ca * *cb);
            }
        }
        out
    }
}

impl<C: Coefficient> Neg for &MultiPoly<C> {
    type Output = MultiPoly<C>;
    fn neg(self) -> MultiPoly<C> {
        self.scale(-C::one())
    }
}

impl<C: Coefficient> fmt::Debug for MultiPoly<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiPoly")
            .field("num_vars", &self.num_vars)
            .field("terms", &self.terms)
            .finish()
    }
}

impl Polynomial {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.num_vars {
            return Err(Error::DimensionMismatch {
                expected: self.num_vars,
                got: x.len(),
            });
        }
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter().zip(x).fold(
                    *c,
                    |acc, (&k, &xi)| if k == 0 { acc } else { acc * xi.powi(k as i32) },
                )
            })
            .sum()
    }

    /// Exact partial derivative with respect to variable `var` (0-based).
    pub fn diff(&self, var: usize) -> Self {
        assert!(var < self.num_vars, "variable index out of range");
        let mut out = Self::zero(self.num_vars);
        for (e, c) in &self.terms {
            if e[var] == 0 {
                continue;
            }
            let mut d = e.clone();
            d[var] -= 1;
            out.add_term(d, c * e[var] as f64);
        }
        out
    }

    /// Parses a single polynomial in `x1..xm` notation.
    pub fn parse(text: &str, num_vars: usize) -> Result<Self> {
        let sys = parse::parse_lines_with(text, Some(num_vars), false)?;
        match sys.as_slice() {
            [p] => Ok(p.real_part_exact()?),
            _ => Err(Error::Parse {
                line: 1,
                column: 1,
                message: "expected exactly one polynomial".into(),
            }),
        }
    }
}

impl fmt::Display for Polynomial {
    /// Writes the polynomial in the text format accepted by the parser, highest
    /// exponent vectors first.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (e, &c)) in self.terms.iter().rev().enumerate() {
            let (sign, mag) = if c < 0.0 { ("-", -c) } else { ("+", c) };
            match (i, sign) {
                (0, "-") => f.write_str("-")?,
                (0, _) => {}
                _ => write!(f, " {sign} ")?,
            }
            let vars: Vec<String> = e
                .iter()
                .enumerate()
                .filter(|(_, &k)| k > 0)
                .map(|(j, &k)| {
                    if k == 1 {
                        format!("x{}", j + 1)
                    } else {
                        format!("x{}^{k}", j + 1)
                    }
                })
                .collect();
            if vars.is_empty() {
                write!(f, "{mag}")?;
            } else if mag == 1.0 {
                f.write_str(&vars.join("*"))?;
            } else {
                write!(f, "{mag}*{}", vars.join("*"))?;
            }
        }
        Ok(())
    }
}

impl ComplexPolynomial {
    pub fn eval(&self, z: &[Complex64]) -> Result<Complex64> {
        if z.len() != self.num_vars {
            return Err(Error::DimensionMismatch {
                expected: self.num_vars,
                got: z.len(),
            });
        }
        Ok(self
            .terms
            .iter()
            .map(|(e, c)| {
                e.iter().zip(z).fold(
                    *c,
                    |acc, (&k, zi)| if k == 0 { acc } else { acc * zi.powu(k) },
                )
            })
            .sum())
    }

    /// The polynomial with real coefficients, failing if any coefficient has a
    /// non-zero imaginary part.
    pub fn real_part_exact(&self) -> Result<Polynomial> {
        let mut out = Polynomial::zero(self.num_vars);
        for (e, c) in &self.terms {
            if c.im != 0.0 {
                return Err(Error::Domain(
                    "coefficient has a non-zero imaginary part".into(),
                ));
            }
            out.add_term(e.clone(), c.re);
        }
        Ok(out)
    }
}

impl From<&Polynomial> for ComplexPolynomial {
    fn from(p: &Polynomial) -> Self {
        let mut out = ComplexPolynomial::zero(p.num_vars);
        for (e, c) in &p.terms {
            out.add_term(e.clone(), Complex64::new(*c, 0.0));
        }
        out
    }
}

/// A non-empty list of real polynomials sharing one set of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct PolySystem {
    polys: Vec<Polynomial>,
    num_vars: usize,
}

impl PolySystem {
    pub fn new(polys: Vec<Polynomial>) -> Result<Self> {
        let first = polys.first().ok_or_else(|| {
            Error::Domain("a polynomial system needs at least one polynomial".into())
        })?;
        let num_vars = first.num_vars();
        if let Some(p) = polys.iter().find(|p| p.num_vars() != num_vars) {
            return Err(Error::DimensionMismatch {
                expected: num_vars,
                got: p.num_vars(),
            });
        }
        Ok(Self { polys, num_vars })
    }

    pub fn polynomials(&self) -> &[Polynomial] {
        &self.polys
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Degree of `f = Σ P_i²`, i.e. twice the largest `deg P_i`.
    pub fn cost_degree(&self) -> u32 {
        2 * self.polys.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    /// `Σ P_i(x)²`.
    pub fn residual(&self, x: &[f64]) -> Result<f64> {
        let mut s = 0.0;
        for p in &self.polys {
            s += p.eval(x)?.powi(2);
        }
        Ok(s)
    }
}

/// Symbolic first and second partials of every polynomial in a system.
struct CompiledSystem {
    polys: Vec<Polynomial>,
    /// `grads[i][j] = ∂P_i/∂x_j`
    grads: Vec<Vec<Polynomial>>,
    /// `hess[i][j][k] = ∂²P_i/∂x_j∂x_k` for `k >= j`
    hess: Vec<Vec<Vec<Polynomial>>>,
    m: usize,
}

impl CompiledSystem {
    fn new(sys: &PolySystem) -> Self {
        let m = sys.num_vars();
        let grads: Vec<Vec<Polynomial>> = sys
            .polys
            .iter()
            .map(|p| (0..m).map(|j| p.diff(j)).collect())
            .collect();
        let hess = grads
            .iter()
            .map(|g| {
                (0..m)
                    .map(|j| (j..m).map(|k| g[j].diff(k)).collect())
                    .collect()
            })
            .collect();
        Self {
            polys: sys.polys.clone(),
            grads,
            hess,
            m,
        }
    }

    fn values(&self, x: &[f64]) -> Vec<f64> {
        self.polys.iter().map(|p| p.eval_unchecked(x)).collect()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.values(x).iter().map(|v| v * v).sum()
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let vals = self.values(x);
        let mut g = vec![0.0; self.m];
        for (v, dp) in vals.iter().zip(&self.grads) {
            for (gj, dpj) in g.iter_mut().zip(dp) {
                *gj += 2.0 * v * dpj.eval_unchecked(x);
            }
        }
        g
    }

    fn hess(&self, x: &[f64]) -> SymmetricMatrix {
        let m = self.m;
        let mut h = vec![0.0; m * m];
        for (i, p) in self.polys.iter().enumerate() {
            let v = p.eval_unchecked(x);
            let dp: Vec<f64> = self.grads[i].iter().map(|q| q.eval_unchecked(x)).collect();
            for j in 0..m {
                for k in j..m {
                    let second = self.hess[i][j][k - j].eval_unchecked(x);
                    let add = 2.0 * (dp[j] * dp[k] + v * second);
                    h[j * m + k] += add;
                    if k != j {
                        h[k * m + j] += add;
                    }
                }
            }
        }
        SymmetricMatrix::new(m, h).expect("square by construction")
    }
}

/// `f = Σ P_i²` with analytic gradient `2 Σ P_i ∇P_i` and Hessian
/// `2 Σ (∇P_i ∇P_iᵀ + P_i ∇²P_i)`.
pub fn system_cost(sys: &PolySystem) -> CostFunction {
    let c = Arc::new(CompiledSystem::new(sys));
    let (c1, c2, c3) = (Arc::clone(&c), Arc::clone(&c), c);
    CostFunction::new(
        "polysys",
        sys.num_vars(),
        move |x| c1.eval(x),
        move |x| c2.grad(x),
        move |x| c3.hess(x),
    )
}

/// Exponent bound for a polynomial objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tau0 {
    pub num_vars: usize,
    /// Degree `d` of `f`.
    pub degree: u32,
    /// `R(m, d) = d (3d − 3)^(m−1)`; infinite if it overflows.
    pub r: f64,
    pub log_r: f64,
    /// Open upper bound `1/(1 − 1/R) − 1 = 1/(R − 1)` on admissible `τ`.
    pub bound: f64,
    /// Recommended `τ = 0.99 · bound`.
    pub tau: f64,
}

/// Safety factor keeping `τ` strictly below the open bound.
pub const TAU0_SAFETY: f64 = 0.99;

/// `τ₀` for an objective of degree `degree` in `num_vars` variables.
pub fn tau0_for(num_vars: usize, degree: u32) -> Result<Tau0> {
    if degree < 2 {
        return Err(Error::Domain(format!(
            "cost degree must be at least 2, got {degree} (constant system)"
        )));
    }
    if num_vars == 0 {
        return Err(Error::Domain("need at least one variable".into()));
    }
    let d = degree as f64;
    let exponent = (num_vars - 1) as f64;
    let log_r = d.ln() + exponent * (3.0 * d - 3.0).ln();
    let r = d * (3.0 * d - 3.0).powf(exponent);
    let bound = if r.is_finite() {
        1.0 / (r - 1.0)
    } else {
        // R - 1 == R at this size
        (-log_r).exp()
    };
    let tau = (TAU0_SAFETY * bound).max(f64::MIN_POSITIVE);
    Ok(Tau0 {
        num_vars,
        degree,
        r,
        log_r,
        bound,
        tau,
    })
}

pub fn tau0(sys: &PolySystem) -> Result<Tau0> {
    tau0_for(sys.num_vars(), sys.cost_degree())
}

/// Real and imaginary parts of a polynomial in `(x_1, y_1, x_2, y_2, ...)`.
struct RealPair {
    re: Polynomial,
    im: Polynomial,
}

impl RealPair {
    fn mul(&self, other: &RealPair) -> RealPair {
        RealPair {
            re: &(&self.re * &other.re) - &(&self.im * &other.im),
            im: &(&self.re * &other.im) + &(&self.im * &other.re),
        }
    }
}

/// Substitutes `z_j = x_j + i y_j` and splits each polynomial into real and
/// imaginary parts. Real variables are interleaved as
/// `(Re z_1, Im z_1, Re z_2, Im z_2, ...)`, so `Σ (Re² + Im²)` of the output
/// equals `Σ |P_i|²` of the input.
pub fn complex_to_real(polys: &[ComplexPolynomial]) -> Result<PolySystem> {
    let n = polys
        .first()
        .ok_or_else(|| Error::Domain("need at least one polynomial".into()))?
        .num_vars();
    if let Some(p) = polys.iter().find(|p| p.num_vars() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: p.num_vars(),
        });
    }
    let m = 2 * n;
    let z: Vec<RealPair> = (0..n)
        .map(|j| RealPair {
            re: Polynomial::variable(m, 2 * j),
            im: Polynomial::variable(m, 2 * j + 1),
        })
        .collect();
    let mut powers: Vec<Vec<RealPair>> = (0..n)
        .map(|_| {
            vec![RealPair {
                re: Polynomial::constant(m, 1.0),
                im: Polynomial::zero(m),
            }]
        })
        .collect();

    let mut out = Vec::with_capacity(2 * polys.len());
    for p in polys {
        let mut re = Polynomial::zero(m);
        let mut im = Polynomial::zero(m);
        for (c, exps) in p.monomials() {
            let mut prod = RealPair {
                re: Polynomial::constant(m, 1.0),
                im: Polynomial::zero(m),
            };
            for (j, &k) in exps.iter().enumerate() {
                while powers[j].len() <= k as usize {
                    let next = powers[j].last().expect("seeded").mul(&z[j]);
                    powers[j].push(next);
                }
                if k > 0 {
                    prod = prod.mul(&powers[j][k as usize]);
                }
            }
            re = &re + &(&prod.re.scale(c.re) - &prod.im.scale(c.im));
            im = &im + &(&prod.im.scale(c.re) + &prod.re.scale(c.im));
        }
        out.push(re);
        out.push(im);
    }
    PolySystem::new(out)
}

/// Knobs for [`solve_system`].
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Overrides `τ₀` when set.
    pub tau: Option<f64>,
    pub basis: BasisStrategy,
    pub delta_seed: u64,
    pub max_iterations: usize,
    pub grad_tolerance: f64,
    /// Terminal points with `f` at or below this count as roots.
    pub root_tolerance: f64,
    /// Terminal points closer than this are merged.
    pub dedup_radius: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tau: None,
            basis: BasisStrategy::Eigen,
            delta_seed: 0,
            max_iterations: 10_000,
            grad_tolerance: 1e-10,
            root_tolerance: 1e-16,
            dedup_radius: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoundPoint {
    pub x: Vec<f64>,
    /// `f = Σ P_i²` at `x`.
    pub residual: f64,
    pub grad_norm: f64,
    /// Number of starts that ended here.
    pub hits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub tau0: Tau0,
    pub tau: f64,
    pub roots: Vec<FoundPoint>,
    /// Critical points of `f` that are not roots.
    pub critical_points: Vec<FoundPoint>,
    pub diverged: usize,
    /// Runs that hit the iteration cap or failed numerically away from a root.
    pub unresolved: usize,
}

fn dedup(mut points: Vec<FoundPoint>, radius: f64) -> Vec<FoundPoint> {
    points.sort_by(|a, b| {
        a.x.iter()
            .zip(&b.x)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut kept: Vec<FoundPoint> = Vec::new();
    for p in points {
        match kept
            .iter_mut()
            .find(|k| linalg::distance(&k.x, &p.x) < radius)
        {
            Some(k) => k.hits += p.hits,
            None => kept.push(p),
        }
    }
    kept
}

/// Runs the general stepper with `τ = τ₀` from every start and collects the
/// distinct roots and non-root critical points it lands on.
///
/// Multi-start search is a heuristic: roots whose basins no start falls into
/// are missed.
pub fn solve_system(
    sys: &PolySystem,
    starts: &[Vec<f64>],
    options: &SolveOptions,
) -> Result<SolveReport> {
    let t0 = tau0(sys)?;
    let tau = options.tau.unwrap_or(t0.tau);
    let m = sys.num_vars();
    let mut config = StepperConfig::g(m, options.delta_seed)
        .with_tau(tau)
        .with_basis(options.basis.clone())
        .with_max_iterations(options.max_iterations)
        .with_grad_tolerance(options.grad_tolerance);
    config.delta_seed = options.delta_seed;
    config.validate(m)?;
    let f = system_cost(sys);

    let results = starts
        .par_iter()
        .map(|x0| stepper::run(&f, x0, &config))
        .collect::<Result<Vec<_>>>()?;

    let mut roots = Vec::new();
    let mut critical = Vec::new();
    let (mut diverged, mut unresolved) = (0, 0);
    for r in results {
        let point = FoundPoint {
            residual: r.final_f,
            grad_norm: r.final_grad_norm,
            x: r.final_x,
            hits: 1,
        };
        if point.residual <= options.root_tolerance {
            roots.push(point);
        } else {
            match r.termination {
                Termination::GradToleranceMet => critical.push(point),
                Termination::Diverged => diverged += 1,
                _ => unresolved += 1,
            }
        }
    }
    Ok(SolveReport {
        tau0: t0,
        tau,
        roots: dedup(roots, options.dedup_radius),
        critical_points: dedup(critical, options.dedup_radius),
        diverged,
        unresolved,
    })
}

/// `n` start points drawn uniformly from the box `bounds[j] = (lo_j, hi_j)`.
pub fn uniform_starts(bounds: &[(f64, f64)], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| {
                    if hi > lo {
                        rng.random_range(lo..hi)
                    } else {
                        lo
                    }
                })
                .collect()
        })
        .collect()
}
