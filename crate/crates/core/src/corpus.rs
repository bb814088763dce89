//! Built-in benchmark problems.
//!
//! * [`problem_no_kkt`]: `min 2x  s.t. [[0, -x], [-x, 1]] PSD`. The only
//!   feasible point `x = 0` is optimal but admits no KKT multipliers.
//! * [`problem_degenerate`]: `min <C, X>  s.t. X_ii = 1, <J, X> = 0, X PSD`
//!   with `J` the all-ones matrix. No strictly feasible point exists.
//! * [`problem_random_smooth`]: convex quadratic objective, affine
//!   constraints and a recorded point where `X(x0)` is positive definite.
//!
//! Random data comes from ChaCha8 seeded with `seed_from_u64`, and uniform
//! draws on `[-1, 1]` are built from the top 53 bits of each `u64`.

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SqsdpError};
use crate::model::NsdpProblem;
use crate::symkernel::SymmetricMatrix;

/// Canonical seeds for the degenerate benchmark family.
pub const CANONICAL_SEEDS: std::ops::RangeInclusive<u64> = 1..=10;

pub(crate) struct UniformSource(ChaCha8Rng);

impl UniformSource {
    pub(crate) fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform on `[0, 1)` with 53 random mantissa bits.
    pub(crate) fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[-1, 1)`.
    pub(crate) fn symmetric(&mut self) -> f64 {
        2.0 * self.unit() - 1.0
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        // column-major fill order
        DMatrix::from_fn(rows, cols, |_, _| self.symmetric())
    }
}

#[derive(Clone, Debug, Default)]
pub struct NoKktProblem;

pub fn problem_no_kkt() -> NoKktProblem {
    NoKktProblem
}

impl NsdpProblem for NoKktProblem {
    fn name(&self) -> &str {
        "no-kkt"
    }
    fn n(&self) -> usize {
        1
    }
    fn m(&self) -> usize {
        0
    }
    fn d(&self) -> usize {
        2
    }
    fn f(&self, x: &DVector<f64>) -> f64 {
        2.0 * x[0]
    }
    fn grad_f(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, 2.0)
    }
    fn g(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(0)
    }
    fn jac_g(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(1, 0)
    }
    fn x_mat(&self, x: &DVector<f64>) -> SymmetricMatrix {
        SymmetricMatrix::from_fn(2, |i, j| match (i, j) {
            (0, 0) => 0.0,
            (1, 1) => 1.0,
            _ => -x[0],
        })
    }
    fn a_mat(&self, _x: &DVector<f64>, _j: usize) -> SymmetricMatrix {
        SymmetricMatrix::from_fn(2, |i, j| if i == j { 0.0 } else { -1.0 })
    }
    fn hess_lagrangian(
        &self,
        _x: &DVector<f64>,
        _y: &DVector<f64>,
        _z: &SymmetricMatrix,
    ) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(1, 1))
    }
}

/// One member of the degenerate family. The decision vector is `svec(X)`.
#[derive(Clone, Debug)]
pub struct DegenerateInstance {
    pub n_mat: usize,
    pub c: SymmetricMatrix,
    pub seed: u64,
    name: String,
    c_packed: DVector<f64>,
    ones_packed: DVector<f64>,
    diag_index: Vec<usize>,
}

pub fn problem_degenerate(n_mat: usize, seed: u64) -> Result<DegenerateInstance> {
    if n_mat < 2 {
        return Err(SqsdpError::InvalidArgument(format!(
            "degenerate family needs matrix order >= 2, got {n_mat}"
        )));
    }
    let mut rng = UniformSource::new(seed);
    let c = SymmetricMatrix::new(rng.matrix(n_mat, n_mat))?;
    let ones = SymmetricMatrix::from_fn(n_mat, |_, _| 1.0);
    // svec stores column j's diagonal first, followed by its n_mat - j - 1
    // strictly-lower entries.
    let mut diag_index = Vec::with_capacity(n_mat);
    let mut k = 0;
    for j in 0..n_mat {
        diag_index.push(k);
        k += n_mat - j;
    }
    Ok(DegenerateInstance {
        n_mat,
        c_packed: c.svec(),
        c,
        seed,
        name: format!("degenerate:{n_mat}:{seed}"),
        ones_packed: ones.svec(),
        diag_index,
    })
}

impl DegenerateInstance {
    fn unpack(&self, x: &DVector<f64>) -> SymmetricMatrix {
        SymmetricMatrix::smat(x).expect("decision vector has triangular length")
    }
}

impl NsdpProblem for DegenerateInstance {
    fn name(&self) -> &str {
        &self.name
    }
    fn n(&self) -> usize {
        self.n_mat * (self.n_mat + 1) / 2
    }
    fn m(&self) -> usize {
        self.n_mat + 1
    }
    fn d(&self) -> usize {
        self.n_mat
    }
    fn f(&self, x: &DVector<f64>) -> f64 {
        self.c_packed.dot(x)
    }
    fn grad_f(&self, _x: &DVector<f64>) -> DVector<f64> {
        self.c_packed.clone()
    }
    fn g(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.m());
        for (i, &k) in self.diag_index.iter().enumerate() {
            out[i] = x[k] - 1.0;
        }
        out[self.n_mat] = self.ones_packed.dot(x);
        out
    }
    fn jac_g(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.n(), self.m());
        for (i, &k) in self.diag_index.iter().enumerate() {
            jac[(k, i)] = 1.0;
        }
        jac.set_column(self.n_mat, &self.ones_packed);
        jac
    }
    fn x_mat(&self, x: &DVector<f64>) -> SymmetricMatrix {
        self.unpack(x)
    }
    fn a_mat(&self, _x: &DVector<f64>, j: usize) -> SymmetricMatrix {
        let mut e = DVector::zeros(self.n());
        e[j] = 1.0;
        self.unpack(&e)
    }
    fn hess_lagrangian(
        &self,
        _x: &DVector<f64>,
        _y: &DVector<f64>,
        _z: &SymmetricMatrix,
    ) -> Option<DMatrix<f64>> {
        Some(DMatrix::zeros(self.n(), self.n()))
    }
}

/// Convex quadratic objective, affine `g` and affine `X` with
/// `g(x0) = 0` and `X(x0) = I + E`, `||E||_F <= 0.5`.
#[derive(Clone, Debug)]
pub struct RandomSmoothProblem {
    pub seed: u64,
    pub x0: DVector<f64>,
    name: String,
    quad: DMatrix<f64>,
    lin: DVector<f64>,
    eq: DMatrix<f64>,
    base: SymmetricMatrix,
    slopes: Vec<SymmetricMatrix>,
}

pub fn problem_random_smooth(
    n: usize,
    m: usize,
    d: usize,
    seed: u64,
) -> Result<RandomSmoothProblem> {
    if n == 0 || d == 0 || m > n {
        return Err(SqsdpError::InvalidArgument(format!(
            "random instance needs n >= 1, d >= 1, m <= n (got n={n}, m={m}, d={d})"
        )));
    }
    let mut rng = UniformSource::new(seed);
    let l = rng.matrix(n, n);
    let quad = SymmetricMatrix::new(&l * l.transpose() / n as f64 + DMatrix::identity(n, n) * 0.5)?
        .into_matrix();
    let lin = DVector::from_fn(n, |_, _| rng.symmetric());
    let eq = rng.matrix(m, n);
    let x0 = DVector::from_fn(n, |_, _| rng.symmetric());
    let noise = SymmetricMatrix::new(rng.matrix(d, d))?;
    let noise = &noise * (0.5 / noise.norm_fro().max(1e-300));
    let slopes: Vec<_> = (0..n)
        .map(|_| SymmetricMatrix::new(rng.matrix(d, d) * 0.5))
        .collect::<Result<_>>()?;
    let mut base = (&SymmetricMatrix::identity(d) + &noise).into_matrix();
    for (xj, aj) in x0.iter().zip(&slopes) {
        base -= aj.as_matrix() * *xj;
    }
    Ok(RandomSmoothProblem {
        seed,
        x0,
        name: format!("random:{n}:{m}:{d}:{seed}"),
        quad,
        lin,
        eq,
        base: SymmetricMatrix::new(base)?,
        slopes,
    })
}

impl NsdpProblem for RandomSmoothProblem {
    fn name(&self) -> &str {
        &self.name
    }
    fn n(&self) -> usize {
        self.quad.nrows()
    }
    fn m(&self) -> usize {
        self.eq.nrows()
    }
    fn d(&self) -> usize {
        self.base.dim()
    }
    fn f(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.quad * x)) + self.lin.dot(x)
    }
    fn grad_f(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.quad * x + &self.lin
    }
    fn g(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.eq * (x - &self.x0)
    }
    fn jac_g(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.eq.transpose()
    }
    fn x_mat(&self, x: &DVector<f64>) -> SymmetricMatrix {
        let mut acc = self.base.as_matrix().clone();
        for (xj, aj) in x.iter().zip(&self.slopes) {
            acc += aj.as_matrix() * *xj;
        }
        SymmetricMatrix::symmetrized(acc)
    }
    fn a_mat(&self, _x: &DVector<f64>, j: usize) -> SymmetricMatrix {
        self.slopes[j].clone()
    }
    fn hess_lagrangian(
        &self,
        _x: &DVector<f64>,
        _y: &DVector<f64>,
        _z: &SymmetricMatrix,
    ) -> Option<DMatrix<f64>> {
        Some(self.quad.clone())
    }
}
