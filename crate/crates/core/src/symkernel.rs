//! Dense symmetric-matrix kernel.
//!
//! Everything the solver does with matrices goes through [`SymmetricMatrix`]:
//! the packed `svec` vectorization, a sorted eigendecomposition, projections
//! onto the PSD cone and onto the spectral box `{O <= Z <= zmax I}`, the
//! Jordan product, and the directional derivative of the PSD projection.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, SqsdpError};

/// Relative gap below which two eigenvalues are treated as equal when
/// forming the first divided differences of `[.]_+`.
const EIGEN_TIE_RTOL: f64 = 1e-12;

const EIGEN_MAX_SWEEPS: usize = 10_000;

/// A dense real symmetric matrix. Entry `(i, j)` and `(j, i)` are always
/// bit-identical.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix {
    inner: DMatrix<f64>,
}

impl SymmetricMatrix {
    /// Builds a symmetric matrix from an arbitrary square matrix by taking
    /// `(A + A^T) / 2`.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(SqsdpError::DimensionMismatch {
                context: "SymmetricMatrix::new (square)",
                expected: a.nrows(),
                got: a.ncols(),
            });
        }
        if a.nrows() == 0 {
            return Err(SqsdpError::InvalidArgument(
                "symmetric matrix dimension must be at least 1".into(),
            ));
        }
        Ok(Self::symmetrized(a))
    }

    /// Same as [`SymmetricMatrix::new`] for callers that already guarantee a
    /// non-empty square input.
    pub(crate) fn symmetrized(mut a: DMatrix<f64>) -> Self {
        let d = a.nrows();
        for j in 0..d {
            for i in (j + 1)..d {
                let v = 0.5 * (a[(i, j)] + a[(j, i)]);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        Self { inner: a }
    }

    pub fn from_fn(d: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(d >= 1, "symmetric matrix dimension must be at least 1");
        Self::symmetrized(DMatrix::from_fn(d, d, f))
    }

    /// Row-major construction, convenient for literals.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let d = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(SqsdpError::DimensionMismatch {
                context: "SymmetricMatrix::from_rows",
                expected: d,
                got: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn zeros(d: usize) -> Self {
        Self::from_fn(d, |_, _| 0.0)
    }

    pub fn identity(d: usize) -> Self {
        Self::from_fn(d, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self::from_fn(diag.len(), |i, j| if i == j { diag[i] } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn trace(&self) -> f64 {
        self.inner.trace()
    }

    /// Frobenius inner product `tr(AB)`.
    pub fn inner(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.inner.dot(&other.inner)
    }

    pub fn norm_fro(&self) -> f64 {
        self.inner.norm()
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &Self) -> Self {
        Self {
            inner: &self.inner + &other.inner * alpha,
        }
    }

    fn check_same_dim(&self, other: &Self, context: &'static str) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(SqsdpError::DimensionMismatch {
                context,
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }

    /// Packed vectorization: column-major lower triangle, off-diagonal
    /// entries scaled by `sqrt(2)`, so that `svec(A).dot(svec(B)) == <A, B>`.
    pub fn svec(&self) -> DVector<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * (d + 1) / 2);
        for j in 0..d {
            out.push(self.inner[(j, j)]);
            for i in (j + 1)..d {
                out.push(std::f64::consts::SQRT_2 * self.inner[(i, j)]);
            }
        }
        DVector::from_vec(out)
    }

    /// Inverse of [`SymmetricMatrix::svec`].
    pub fn smat(v: &DVector<f64>) -> Result<Self> {
        let d = triangular_root(v.len()).ok_or(SqsdpError::NotTriangular(v.len()))?;
        let mut a = DMatrix::zeros(d, d);
        let mut k = 0;
        for j in 0..d {
            a[(j, j)] = v[k];
            k += 1;
            for i in (j + 1)..d {
                let e = v[k] / std::f64::consts::SQRT_2;
                a[(i, j)] = e;
                a[(j, i)] = e;
                k += 1;
            }
        }
        Ok(Self { inner: a })
    }

    pub fn eig(&self) -> Result<EigenDecomposition> {
        eig_sym(self)
    }

    /// Projection onto the PSD cone, `[A]_+`.
    pub fn psd_project(&self) -> Result<Self> {
        Ok(self.eig()?.psd_part())
    }

    /// Jordan product `(AB + BA) / 2`.
    pub fn jordan(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other, "jordan_product")?;
        let ab = &self.inner * &other.inner;
        let mut s = &ab + ab.transpose();
        s *= 0.5;
        Ok(Self::symmetrized(s))
    }

    /// Frobenius projection onto `{Z : O <= Z <= zmax I}`.
    pub fn box_project_spectral(&self, zmax: f64) -> Result<Self> {
        if !(zmax > 0.0) {
            return Err(SqsdpError::InvalidArgument(format!(
                "spectral box bound must be positive, got {zmax}"
            )));
        }
        Ok(self.eig()?.map_eigenvalues(|l| l.clamp(0.0, zmax)))
    }

    pub fn lambda_min(&self) -> Result<f64> {
        Ok(self.eig()?.eigenvalues[0])
    }

    pub fn lambda_max(&self) -> Result<f64> {
        let e = self.eig()?;
        Ok(e.eigenvalues[e.eigenvalues.len() - 1])
    }
}

/// Returns `d` with `d(d+1)/2 == len`, if any.
pub fn triangular_root(len: usize) -> Option<usize> {
    if len == 0 {
        return None;
    }
    let d = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    (d * (d + 1) / 2 == len).then_some(d)
}

pub fn svec(a: &SymmetricMatrix) -> DVector<f64> {
    a.svec()
}

pub fn smat(v: &DVector<f64>) -> Result<SymmetricMatrix> {
    SymmetricMatrix::smat(v)
}

pub fn psd_project(a: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    a.psd_project()
}

pub fn jordan_product(a: &SymmetricMatrix, b: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    a.jordan(b)
}

pub fn box_project_spectral(a: &SymmetricMatrix, zmax: f64) -> Result<SymmetricMatrix> {
    a.box_project_spectral(zmax)
}

/// Directional derivative of `[.]_+` at `a` in direction `h`.
pub fn dpsd_project(a: &SymmetricMatrix, h: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    a.check_same_dim(h, "dpsd_project")?;
    Ok(a.eig()?.dpsd_apply(h))
}

/// `A = P diag(eigenvalues) P^T` with eigenvalues in ascending order.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

pub fn eig_sym(a: &SymmetricMatrix) -> Result<EigenDecomposition> {
    let d = a.dim();
    let raw = SymmetricEigen::try_new(a.inner.clone(), f64::EPSILON, EIGEN_MAX_SWEEPS)
        .ok_or(SqsdpError::EigenFailure { norm: a.norm_fro() })?;
    if raw.eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(SqsdpError::EigenFailure { norm: a.norm_fro() });
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| raw.eigenvalues[i].total_cmp(&raw.eigenvalues[j]));
    let eigenvalues = DVector::from_fn(d, |k, _| raw.eigenvalues[order[k]]);
    let eigenvectors = DMatrix::from_fn(d, d, |i, k| raw.eigenvectors[(i, order[k])]);
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `P diag(f(lambda_i)) P^T`.
    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> SymmetricMatrix {
        let p = &self.eigenvectors;
        let mut scaled = p.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.eigenvalues[k]);
        }
        SymmetricMatrix::symmetrized(scaled * p.transpose())
    }

    pub fn reconstruct(&self) -> SymmetricMatrix {
        self.map_eigenvalues(|l| l)
    }

    pub fn psd_part(&self) -> SymmetricMatrix {
        self.map_eigenvalues(|l| l.max(0.0))
    }

    /// First divided differences of `[.]_+` at the eigenvalues.
    pub fn projection_divided_differences(&self) -> DMatrix<f64> {
        let d = self.dim();
        let lam = &self.eigenvalues;
        DMatrix::from_fn(d, d, |i, j| {
            let (a, b) = (lam[i], lam[j]);
            let scale = 1.0_f64.max(a.abs()).max(b.abs());
            if (a - b).abs() <= EIGEN_TIE_RTOL * scale {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (a.max(0.0) - b.max(0.0)) / (a - b)
            }
        })
    }

    /// `U^T H U` for the stored eigenbasis `U`.
    pub fn rotate_in(&self, h: &SymmetricMatrix) -> DMatrix<f64> {
        self.eigenvectors.transpose() * h.as_matrix() * &self.eigenvectors
    }

    /// Directional derivative of `[.]_+` at the decomposed matrix along `h`.
    pub fn dpsd_apply(&self, h: &SymmetricMatrix) -> SymmetricMatrix {
        let omega = self.projection_divided_differences();
        let inner = self.rotate_in(h).component_mul(&omega);
        SymmetricMatrix::symmetrized(&self.eigenvectors * inner * self.eigenvectors.transpose())
    }
}

impl Add for &SymmetricMatrix {
    type Output = SymmetricMatrix;
    fn add(self, rhs: Self) -> SymmetricMatrix {
        SymmetricMatrix {
            inner: &self.inner + &rhs.inner,
        }
    }
}

impl Sub for &SymmetricMatrix {
    type Output = SymmetricMatrix;
    fn sub(self, rhs: Self) -> SymmetricMatrix {
        SymmetricMatrix {
            inner: &self.inner - &rhs.inner,
        }
    }
}

impl Mul<f64> for &SymmetricMatrix {
    type Output = SymmetricMatrix;
    fn mul(self, rhs: f64) -> SymmetricMatrix {
        SymmetricMatrix {
            inner: &self.inner * rhs,
        }
    }
}

impl Neg for &SymmetricMatrix {
    type Output = SymmetricMatrix;
    fn neg(self) -> SymmetricMatrix {
        SymmetricMatrix {
            inner: -&self.inner,
        }
    }
}
