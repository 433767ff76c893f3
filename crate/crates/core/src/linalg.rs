//! Dense symmetric linear algebra.
//!
//! Everything the stepper needs from a Hessian goes through here: a cyclic
//! Jacobi eigensolver, the spectral quantities `minsp` / `sp`, the projections
//! onto the positive and negative eigenspaces, and completion of a unit vector
//! to an orthonormal basis.

use crate::error::{Error, Result};

/// Maximum number of full Jacobi sweeps before giving up.
pub const MAX_SWEEPS: usize = 100;
/// Sweeps stop once the off-diagonal Frobenius norm drops below this fraction
/// of the input's Frobenius norm.
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;
/// Components smaller than this are skipped when fixing eigenvector signs.
const SIGN_THRESHOLD: f64 = 1e-12;
/// Relative threshold below which `minsp` is treated as zero.
pub const SINGULAR_TOL: f64 = 1e-12;
/// Allowed deviation from orthonormality for bases and unit vectors.
pub const ORTHO_TOL: f64 = 1e-10;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `a - b`, elementwise.
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Dense real symmetric matrix stored row-major.
///
/// Construction symmetrizes the input as `(M + Mᵀ)/2`, so the stored entries
/// satisfy `a[i][j] == a[j][i]` bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl SymmetricMatrix {
    /// Builds a matrix from `dim * dim` row-major entries.
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("matrix dimension must be at least 1".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        let mut m = Self { dim, entries };
        m.symmetrize();
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            entries.extend_from_slice(row);
        }
        Self::new(dim, entries)
    }

    /// Builds a matrix by evaluating `f(i, j)` for every entry.
    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        assert!(dim > 0, "matrix dimension must be at least 1");
        let mut entries = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                entries.push(f(i, j));
            }
        }
        let mut m = Self { dim, entries };
        m.symmetrize();
        m
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_fn(dim, |_, _| 0.0)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diagonal(values: &[f64]) -> Self {
        Self::from_fn(values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    fn symmetrize(&mut self) {
        let n = self.dim;
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (self.entries[i * n + j] + self.entries[j * n + i]);
                self.entries[i * n + j] = avg;
                self.entries[j * n + i] = avg;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(
            v.len(),
            self.dim,
            "vector length must match matrix dimension"
        );
        (0..self.dim).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.entries)
    }

    /// Returns `self + shift * Id`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.entries[i * self.dim + i] += shift;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Eigenvalues in ascending order with their orthonormal eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[i]` is paired with `eigenvalues[i]`.
    pub eigenvectors: Vec<Vec<f64>>,
}

impl EigenDecomposition {
    pub fn minsp(&self) -> f64 {
        self.eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, l| m.min(l.abs()))
    }

    pub fn sp(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()))
    }

    /// Decomposition of `A + shift * Id`: same eigenvectors, shifted spectrum.
    pub fn shifted(&self, shift: f64) -> Self {
        Self {
            eigenvalues: self.eigenvalues.iter().map(|l| l + shift).collect(),
            eigenvectors: self.eigenvectors.clone(),
        }
    }

    /// Rebuilds `Q Λ Qᵀ`.
    pub fn reconstruct(&self) -> SymmetricMatrix {
        let n = self.eigenvalues.len();
        SymmetricMatrix::from_fn(n, |i, j| {
            self.eigenvalues
                .iter()
                .zip(&self.eigenvectors)
                .map(|(l, q)| l * q[i] * q[j])
                .sum()
        })
    }

    pub fn basis(&self) -> OrthonormalBasis {
        OrthonormalBasis {
            vectors: self.eigenvectors.clone(),
        }
    }
}

/// `m` orthonormal vectors spanning `R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    vectors: Vec<Vec<f64>>,
}

impl OrthonormalBasis {
    /// Validates pairwise inner products against `ORTHO_TOL`.
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let m = vectors.len();
        if m == 0 {
            return Err(Error::Domain(
                "basis must contain at least one vector".into(),
            ));
        }
        for v in &vectors {
            if v.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: v.len(),
                });
            }
        }
        for i in 0..m {
            for j in i..m {
                let expected = if i == j { 1.0 } else { 0.0 };
                let ip = dot(&vectors[i], &vectors[j]);
                if (ip - expected).abs() > ORTHO_TOL {
                    return Err(Error::Domain(format!(
                        "vectors {i} and {j} have inner product {ip}, expected {expected}"
                    )));
                }
            }
        }
        Ok(Self { vectors })
    }

    pub fn standard(dim: usize) -> Self {
        let vectors = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { vectors }
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn into_vectors(self) -> Vec<Vec<f64>> {
        self.vectors
    }
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigendecomposition.
///
/// Eigenvalues come back ascending; each eigenvector has its first component
/// of magnitude above `1e-12` made positive so the output is reproducible.
pub fn eigen_decompose(a: &SymmetricMatrix) -> Result<EigenDecomposition> {
    if !a.is_finite() {
        return Err(Error::NumericFailure(
            "matrix has non-finite entries".into(),
        ));
    }
    let n = a.dim();
    let mut m = a.entries.clone();
    let mut v = SymmetricMatrix::identity(n).entries;
    let target = OFF_DIAGONAL_TOL * a.frobenius_norm();

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&m, n);
        if off <= target {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::EigenNoConvergence {
                sweeps,
                residual: off,
            });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        sweeps += 1;
    }

    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|j| {
            let mut col: Vec<f64> = (0..n).map(|i| v[i * n + j]).collect();
            if let Some(first) = col.iter().find(|c| c.abs() > SIGN_THRESHOLD) {
                if *first < 0.0 {
                    col.iter_mut().for_each(|c| *c = -*c);
                }
            }
            (m[j * n + j], col)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (eigenvalues, eigenvectors) = pairs.into_iter().unzip();
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Smallest eigenvalue magnitude, i.e. `min_{|e|=1} |Ae|`.
pub fn minsp(a: &SymmetricMatrix) -> Result<f64> {
    Ok(eigen_decompose(a)?.minsp())
}

/// Spectral radius, i.e. `max_{|e|=1} |Ae|`.
pub fn sp(a: &SymmetricMatrix) -> Result<f64> {
    Ok(eigen_decompose(a)?.sp())
}

/// Threshold on `minsp` above which a matrix counts as invertible.
pub fn invertibility_threshold(a: &SymmetricMatrix) -> f64 {
    SINGULAR_TOL * a.frobenius_norm().max(1.0)
}

/// Orthogonal projections of `v` onto the positive and negative eigenspaces
/// of an invertible `a`.
pub fn spectral_split(a: &SymmetricMatrix, v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if v.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: v.len(),
        });
    }
    let eig = eigen_decompose(a)?;
    split_with(&eig, invertibility_threshold(a), v)
}

pub(crate) fn split_with(
    eig: &EigenDecomposition,
    threshold: f64,
    v: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let min = eig.minsp();
    if min <= threshold {
        return Err(Error::Domain(format!(
            "matrix is singular (minsp {min:e} <= {threshold:e})"
        )));
    }
    let n = v.len();
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    for (lambda, q) in eig.eigenvalues.iter().zip(&eig.eigenvectors) {
        let c = dot(v, q);
        let target = if *lambda > 0.0 { &mut plus } else { &mut minus };
        for (t, qi) in target.iter_mut().zip(q) {
            *t += c * qi;
        }
    }
    Ok((plus, minus))
}

/// Extends a unit vector `u` to an orthonormal basis whose first element is
/// `u`, by Gram-Schmidt over the standard axes with the axis most parallel to
/// `u` left out.
pub fn complete_to_orthonormal_basis(u: &[f64]) -> Result<OrthonormalBasis> {
    let m = u.len();
    if m == 0 {
        return Err(Error::Domain("cannot complete an empty vector".into()));
    }
    let len = norm(u);
    if (len - 1.0).abs() > ORTHO_TOL {
        return Err(Error::Domain(format!("vector has norm {len}, expected 1")));
    }
    let skip = u
        .iter()
        .enumerate()
        .fold((0, -1.0), |best, (i, c)| {
            if c.abs() > best.1 {
                (i, c.abs())
            } else {
                best
            }
        })
        .0;

    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(m);
    vectors.push(u.to_vec());
    for axis in (0..m).filter(|&i| i != skip) {
        let mut e = vec![0.0; m];
        e[axis] = 1.0;
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for q in &vectors {
                let c = dot(&e, q);
                for (ei, qi) in e.iter_mut().zip(q) {
                    *ei -= c * qi;
                }
            }
        }
        let n = norm(&e);
        e.iter_mut().for_each(|c| *c /= n);
        vectors.push(e);
    }
    OrthonormalBasis::new(vectors)
}
