//! Problem abstraction for
//!
//! ```text
//! minimize f(x)  subject to  g(x) = 0,  X(x) PSD
//! ```
//!
//! with `f: R^n -> R`, `g: R^n -> R^m` and `X: R^n -> S^d`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqsdpError};
use crate::symkernel::SymmetricMatrix;

/// Oracle bundle for a nonlinear SDP. Implementations must be pure.
pub trait NsdpProblem: Send + Sync {
    fn name(&self) -> &str;

    /// Number of decision variables.
    fn n(&self) -> usize;
    /// Number of equality constraints (may be zero).
    fn m(&self) -> usize;
    /// Order of the matrix constraint.
    fn d(&self) -> usize;

    fn f(&self, x: &DVector<f64>) -> f64;
    fn grad_f(&self, x: &DVector<f64>) -> DVector<f64>;
    fn g(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Transposed Jacobian, `n x m`; column `i` is the gradient of `g_i`.
    fn jac_g(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn x_mat(&self, x: &DVector<f64>) -> SymmetricMatrix;
    /// Partial derivative of `X` with respect to `x_j` (zero-based).
    fn a_mat(&self, x: &DVector<f64>, j: usize) -> SymmetricMatrix;

    /// Hessian of the Lagrangian in `x`, when available.
    fn hess_lagrangian(
        &self,
        _x: &DVector<f64>,
        _y: &DVector<f64>,
        _z: &SymmetricMatrix,
    ) -> Option<DMatrix<f64>> {
        None
    }
}

/// Lagrange multipliers `(y, Z)` for the equality and conic constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierPair {
    pub y: DVector<f64>,
    pub z: SymmetricMatrix,
}

impl MultiplierPair {
    pub fn zeros(m: usize, d: usize) -> Self {
        Self {
            y: DVector::zeros(m),
            z: SymmetricMatrix::zeros(d),
        }
    }
}

fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(SqsdpError::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}

pub(crate) fn check_point<P: NsdpProblem + ?Sized>(p: &P, x: &DVector<f64>) -> Result<()> {
    check_len("decision vector", p.n(), x.len())
}

pub(crate) fn check_multipliers<P: NsdpProblem + ?Sized>(
    p: &P,
    y: &DVector<f64>,
    z: &SymmetricMatrix,
) -> Result<()> {
    check_len("equality multiplier", p.m(), y.len())?;
    check_len("conic multiplier", p.d(), z.dim())
}

/// The matrices `A_1(x), ..., A_n(x)` evaluated once, with the linear map
/// `u -> sum_j u_j A_j(x)` and its adjoint.
#[derive(Clone, Debug)]
pub struct LinearizedCone {
    mats: Vec<SymmetricMatrix>,
    d: usize,
}

impl LinearizedCone {
    pub fn at<P: NsdpProblem + ?Sized>(p: &P, x: &DVector<f64>) -> Result<Self> {
        check_point(p, x)?;
        let mats: Vec<_> = (0..p.n()).map(|j| p.a_mat(x, j)).collect();
        for a in &mats {
            check_len("A_j(x) dimension", p.d(), a.dim())?;
        }
        Ok(Self { mats, d: p.d() })
    }

    pub fn from_mats(d: usize, mats: Vec<SymmetricMatrix>) -> Result<Self> {
        for a in &mats {
            check_len("A_j dimension", d, a.dim())?;
        }
        Ok(Self { mats, d })
    }

    pub fn n(&self) -> usize {
        self.mats.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mats(&self) -> &[SymmetricMatrix] {
        &self.mats
    }

    pub fn apply(&self, u: &DVector<f64>) -> Result<SymmetricMatrix> {
        check_len("A(x)u direction", self.n(), u.len())?;
        let mut acc = DMatrix::zeros(self.d, self.d);
        for (uj, aj) in u.iter().zip(&self.mats) {
            if *uj != 0.0 {
                acc += aj.as_matrix() * *uj;
            }
        }
        Ok(SymmetricMatrix::symmetrized(acc))
    }

    pub fn adjoint(&self, w: &SymmetricMatrix) -> Result<DVector<f64>> {
        check_len("A*(x)U argument", self.d, w.dim())?;
        Ok(DVector::from_iterator(
            self.n(),
            self.mats.iter().map(|aj| aj.inner(w)),
        ))
    }
}

pub fn apply_a<P: NsdpProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<SymmetricMatrix> {
    LinearizedCone::at(p, x)?.apply(u)
}

pub fn apply_a_adjoint<P: NsdpProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    w: &SymmetricMatrix,
) -> Result<DVector<f64>> {
    LinearizedCone::at(p, x)?.adjoint(w)
}

pub fn lagrangian_value<P: NsdpProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &SymmetricMatrix,
) -> Result<f64> {
    check_point(p, x)?;
    check_multipliers(p, y, z)?;
    Ok(p.f(x) - p.g(x).dot(y) - p.x_mat(x).inner(z))
}

/// `grad f(x) - grad g(x) y - A*(x) Z`.
pub fn lagrangian_grad<P: NsdpProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &SymmetricMatrix,
) -> Result<DVector<f64>> {
    check_multipliers(p, y, z)?;
    let cone = LinearizedCone::at(p, x)?;
    Ok(p.grad_f(x) - p.jac_g(x) * y - cone.adjoint(z)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianMode {
    /// Exact Hessian when the problem provides one, identity otherwise.
    ExactOrIdentity,
    /// Exact Hessian; a missing oracle is a configuration error.
    ExactOnly,
    Identity,
}

/// How `H_k` is chosen and regularized so that
/// `lambda_min(H + grad g grad g^T / sigma) >= nu1` and `lambda_max(H) <= nu2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HessianPolicy {
    pub mode: HessianMode,
    pub nu1: f64,
    pub nu2: f64,
}

impl Default for HessianPolicy {
    fn default() -> Self {
        Self {
            mode: HessianMode::ExactOrIdentity,
            nu1: 1e-8,
            nu2: 1e8,
        }
    }
}

pub fn hessian_or_approx<P: NsdpProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &SymmetricMatrix,
    sigma: f64,
    policy: &HessianPolicy,
) -> Result<DMatrix<f64>> {
    if !(sigma > 0.0) {
        return Err(SqsdpError::InvalidArgument(format!(
            "penalty parameter must be positive, got {sigma}"
        )));
    }
    check_point(p, x)?;
    let n = p.n();
    let exact = match policy.mode {
        HessianMode::Identity => None,
        HessianMode::ExactOrIdentity | HessianMode::ExactOnly => p.hess_lagrangian(x, y, z),
    };
    let h = match (exact, policy.mode) {
        (Some(h), _) => {
            if h.nrows() != n || h.ncols() != n {
                return Err(SqsdpError::DimensionMismatch {
                    context: "Lagrangian Hessian",
                    expected: n,
                    got: h.nrows(),
                });
            }
            h
        }
        (None, HessianMode::ExactOnly) => {
            return Err(SqsdpError::Config(format!(
                "problem '{}' has no Hessian oracle and the identity fallback is disabled",
                p.name()
            )))
        }
        (None, _) => DMatrix::identity(n, n),
    };
    let jac = p.jac_g(x);
    regularize_hessian(h, &jac, sigma, policy.nu1, policy.nu2)
}

/// Clips eigenvalues of `h` above `nu2`, then shifts by the smallest
/// `delta >= 0` making `lambda_min(h + jac jac^T / sigma) >= nu1`.
///
/// When `jac jac^T / sigma` is so large that `nu1` is below the rounding
/// error of its eigenvalues, the floor is raised to that rounding level so
/// the result stays numerically positive definite.
pub fn regularize_hessian(
    h: DMatrix<f64>,
    jac_g: &DMatrix<f64>,
    sigma: f64,
    nu1: f64,
    nu2: f64,
) -> Result<DMatrix<f64>> {
    let mut h = SymmetricMatrix::new(h)?;
    if h.lambda_max()? > nu2 {
        h = h.eig()?.map_eigenvalues(|l| l.min(nu2));
    }
    let mut h = h.into_matrix();
    let n = h.nrows();
    let gram = SymmetricMatrix::new(&h + jac_g * jac_g.transpose() / sigma)?;
    let lmin = gram.lambda_min()?;
    let floor = nu1.max(64.0 * f64::EPSILON * gram.norm_fro());
    if lmin < floor {
        let delta = floor - lmin;
        for i in 0..n {
            h[(i, i)] += delta;
        }
    }
    Ok(h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Oracle {
    GradF,
    JacG,
    AMat,
}

#[derive(Clone, Debug)]
pub struct DerivativeMismatch {
    pub oracle: Oracle,
    /// `(row, column)`; for `AMat` this is `(j, svec index)`.
    pub index: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Maximum relative errors of the derivative oracles against central
/// differences, plus every entry above tolerance.
#[derive(Clone, Debug)]
pub struct DerivativeReport {
    pub grad_f_err: f64,
    pub jac_g_err: f64,
    pub a_err: f64,
    pub tolerance: f64,
    pub flagged: Vec<DerivativeMismatch>,
}

impl DerivativeReport {
    pub fn passed(&self) -> bool {
        self.flagged.is_empty()
    }

    pub fn max_err(&self) -> f64 {
        self.grad_f_err.max(self.jac_g_err).max(self.a_err)
    }
}

pub fn check_derivatives<P: NsdpProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    tolerance: f64,
) -> Result<DerivativeReport> {
    check_point(p, x)?;
    let grad = p.grad_f(x);
    let jac = p.jac_g(x);
    let cone = LinearizedCone::at(p, x)?;
    let mut report = DerivativeReport {
        grad_f_err: 0.0,
        jac_g_err: 0.0,
        a_err: 0.0,
        tolerance,
        flagged: Vec::new(),
    };
    let record = |oracle: Oracle, index, analytic: f64, numeric: f64, rep: &mut DerivativeReport| {
        let rel_err = (analytic - numeric).abs() / numeric.abs().max(1.0);
        let slot = match oracle {
            Oracle::GradF => &mut rep.grad_f_err,
            Oracle::JacG => &mut rep.jac_g_err,
            Oracle::AMat => &mut rep.a_err,
        };
        *slot = slot.max(rel_err);
        if !(rel_err <= tolerance) {
            rep.flagged.push(DerivativeMismatch {
                oracle,
                index,
                analytic,
                numeric,
                rel_err,
            });
        }
    };

    for j in 0..p.n() {
        let h = 1e-6 * x[j].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let width = xp[j] - xm[j];

        let df = (p.f(&xp) - p.f(&xm)) / width;
        record(Oracle::GradF, (j, 0), grad[j], df, &mut report);

        let dg = (p.g(&xp) - p.g(&xm)) / width;
        for i in 0..p.m() {
            record(Oracle::JacG, (j, i), jac[(j, i)], dg[i], &mut report);
        }

        let dx = (p.x_mat(&xp).svec() - p.x_mat(&xm).svec()) / width;
        let aj = cone.mats()[j].svec();
        for (k, (a, num)) in aj.iter().zip(dx.iter()).enumerate() {
            record(Oracle::AMat, (j, k), *a, *num, &mut report);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{problem_no_kkt, problem_random_smooth};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn apply_a_examples() {
        let p = problem_no_kkt();
        let x = DVector::from_element(1, 0.3);
        assert_eq!(apply_a(&p, &x, &DVector::zeros(1)).unwrap(), SymmetricMatrix::zeros(2));
        let t = 1.7;
        let expect = SymmetricMatrix::from_rows(&[&[0.0, -t], &[-t, 0.0]]).unwrap();
        assert_eq!(apply_a(&p, &x, &DVector::from_element(1, t)).unwrap(), expect);

        let q = problem_random_smooth(3, 1, 3, 4).unwrap();
        let x = DVector::from_vec(vec![0.1, -0.2, 0.4]);
        for j in 0..3 {
            let e = DVector::from_fn(3, |i, _| if i == j { 1.0 } else { 0.0 });
            assert_eq!(apply_a(&q, &x, &e).unwrap(), q.a_mat(&x, j));
        }
        assert!(apply_a(&q, &x, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn adjoint_examples() {
        let p = problem_no_kkt();
        let x = DVector::from_element(1, -0.4);
        assert_eq!(apply_a_adjoint(&p, &x, &SymmetricMatrix::zeros(2)).unwrap()[0], 0.0);
        let (a, b, c) = (0.3, -1.25, 2.0);
        let u = SymmetricMatrix::from_rows(&[&[a, b], &[b, c]]).unwrap();
        assert_eq!(apply_a_adjoint(&p, &x, &u).unwrap()[0], -2.0 * b);
        assert!(apply_a_adjoint(&p, &x, &SymmetricMatrix::zeros(3)).is_err());
    }

    #[test]
    fn adjoint_identity_on_random_instance() {
        let p = problem_random_smooth(3, 1, 3, 17).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let u = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let w = SymmetricMatrix::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let lhs = apply_a(&p, &x, &u).unwrap().inner(&w);
            let rhs = u.dot(&apply_a_adjoint(&p, &x, &w).unwrap());
            assert!((lhs - rhs).abs() <= 1e-12);
        }
    }

    #[test]
    fn lagrangian_grad_examples() {
        let p = problem_no_kkt();
        let x = DVector::from_element(1, 0.2);
        let y = DVector::zeros(0);
        let g0 = lagrangian_grad(&p, &x, &y, &SymmetricMatrix::zeros(2)).unwrap();
        assert_eq!(g0, p.grad_f(&x));
        let z12 = 0.35;
        let z = SymmetricMatrix::from_rows(&[&[1.0, z12], &[z12, 3.0]]).unwrap();
        let g = lagrangian_grad(&p, &x, &y, &z).unwrap();
        assert!((g[0] - (2.0 + 2.0 * z12)).abs() < 1e-15);
        let z = SymmetricMatrix::from_rows(&[&[1.0, -1.0], &[-1.0, 1.0]]).unwrap();
        assert_eq!(lagrangian_grad(&p, &x, &y, &z).unwrap()[0], 0.0);
        assert!(lagrangian_grad(&p, &x, &DVector::zeros(1), &z).is_err());
    }

    #[test]
    fn hessian_no_op_when_bounds_hold() {
        let p = problem_random_smooth(2, 1, 2, 3).unwrap();
        let x = DVector::zeros(2);
        let y = DVector::zeros(1);
        let z = SymmetricMatrix::zeros(2);
        let exact = p.hess_lagrangian(&x, &y, &z).unwrap();
        let h = hessian_or_approx(&p, &x, &y, &z, 0.1, &HessianPolicy::default()).unwrap();
        assert_eq!(h, exact);
    }

    #[test]
    fn hessian_shift_example() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0]));
        let out = regularize_hessian(h, &DMatrix::zeros(2, 0), 0.1, 1e-8, 1e8).unwrap();
        let delta = 1.0 + 1e-8;
        assert!((out[(0, 0)] - (-1.0 + delta)).abs() < 1e-15);
        assert!((out[(1, 1)] - (1.0 + delta)).abs() < 1e-15);
        assert_eq!(out[(0, 1)], 0.0);
    }

    #[test]
    fn hessian_upper_clip() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![1e9, 1.0]));
        let out = regularize_hessian(h, &DMatrix::zeros(2, 0), 1.0, 1e-8, 1e8).unwrap();
        assert!((out[(0, 0)] - 1e8).abs() < 1e-6);
        assert_eq!(out[(1, 1)], 1.0);
    }

    struct NoHessian;
    impl NsdpProblem for NoHessian {
        fn name(&self) -> &str {
            "no-hessian"
        }
        fn n(&self) -> usize {
            2
        }
        fn m(&self) -> usize {
            0
        }
        fn d(&self) -> usize {
            1
        }
        fn f(&self, x: &DVector<f64>) -> f64 {
            x.norm_squared()
        }
        fn grad_f(&self, x: &DVector<f64>) -> DVector<f64> {
            x * 2.0
        }
        fn g(&self, _: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(0)
        }
        fn jac_g(&self, _: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::zeros(2, 0)
        }
        fn x_mat(&self, x: &DVector<f64>) -> SymmetricMatrix {
            SymmetricMatrix::from_diagonal(&[x[0]])
        }
        fn a_mat(&self, _: &DVector<f64>, j: usize) -> SymmetricMatrix {
            SymmetricMatrix::from_diagonal(&[if j == 0 { 1.0 } else { 0.0 }])
        }
    }

    #[test]
    fn hessian_fallback_and_config_error() {
        let x = DVector::zeros(2);
        let y = DVector::zeros(0);
        let z = SymmetricMatrix::zeros(1);
        let h = hessian_or_approx(&NoHessian, &x, &y, &z, 0.1, &HessianPolicy::default()).unwrap();
        assert_eq!(h, DMatrix::identity(2, 2));
        let strict = HessianPolicy {
            mode: HessianMode::ExactOnly,
            ..HessianPolicy::default()
        };
        assert!(matches!(
            hessian_or_approx(&NoHessian, &x, &y, &z, 0.1, &strict),
            Err(SqsdpError::Config(_))
        ));
        assert!(hessian_or_approx(&NoHessian, &x, &y, &z, 0.0, &HessianPolicy::default()).is_err());
    }

    #[test]
    fn check_derivatives_no_kkt() {
        let p = problem_no_kkt();
        let rep = check_derivatives(&p, &DVector::from_element(1, 0.3), 1e-6).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.max_err() <= 1e-6);
    }

    struct Corrupted<P>(P);
    impl<P: NsdpProblem> NsdpProblem for Corrupted<P> {
        fn name(&self) -> &str {
            "corrupted"
        }
        fn n(&self) -> usize {
            self.0.n()
        }
        fn m(&self) -> usize {
            self.0.m()
        }
        fn d(&self) -> usize {
            self.0.d()
        }
        fn f(&self, x: &DVector<f64>) -> f64 {
            self.0.f(x)
        }
        fn grad_f(&self, x: &DVector<f64>) -> DVector<f64> {
            let mut g = self.0.grad_f(x);
            g[0] += 0.1;
            g
        }
        fn g(&self, x: &DVector<f64>) -> DVector<f64> {
            self.0.g(x)
        }
        fn jac_g(&self, x: &DVector<f64>) -> DMatrix<f64> {
            self.0.jac_g(x)
        }
        fn x_mat(&self, x: &DVector<f64>) -> SymmetricMatrix {
            self.0.x_mat(x)
        }
        fn a_mat(&self, x: &DVector<f64>, j: usize) -> SymmetricMatrix {
            self.0.a_mat(x, j)
        }
    }

    #[test]
    fn check_derivatives_flags_corrupted_gradient() {
        let p = Corrupted(problem_random_smooth(3, 2, 2, 8).unwrap());
        let rep = check_derivatives(&p, &DVector::from_element(3, 0.5), 1e-6).unwrap();
        assert!(!rep.passed());
        assert_eq!(rep.flagged.len(), 1);
        assert_eq!(rep.flagged[0].oracle, Oracle::GradF);
        assert_eq!(rep.flagged[0].index, (0, 0));
        // affine g: central differences are exact up to rounding
        assert!(rep.jac_g_err <= 1e-9);
    }
}
