//! The stabilized quadratic SDP subproblem
//!
//! ```text
//! minimize    <c, xi> + <M xi, xi>/2 + (sigma/2) |Sigma|_F^2
//! subject to  A(x) xi + sigma (Sigma - T) PSD
//! ```
//!
//! with `c = grad f(x) - grad g(x) s`, `s = y - g(x)/sigma`,
//! `T = Z - X(x)/sigma` and `M = H + grad g grad g^T / sigma`.
//!
//! For fixed `xi` the optimal `Sigma` is `[T - A(x) xi / sigma]_+`, so the
//! subproblem is equivalent to minimizing the strongly convex C^1 function
//!
//! ```text
//! theta(xi) = <c, xi> + <M xi, xi>/2 + (sigma/2) |[T - A(x) xi / sigma]_+|_F^2
//! ```
//!
//! whose gradient `c + M xi - A*(x) [T - A(x) xi / sigma]_+` is semismooth.
//! We solve `grad theta = 0` by a damped semismooth Newton method.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqsdpError};
use crate::model::{check_multipliers, check_point, LinearizedCone, NsdpProblem};
use crate::symkernel::{EigenDecomposition, SymmetricMatrix};

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
/// Newton iterations without halving the best residual before giving up.
const STALL_WINDOW: usize = 10;

#[derive(Clone, Debug)]
pub struct SubproblemData {
    pub c: DVector<f64>,
    pub m: DMatrix<f64>,
    pub sigma: f64,
    pub t: SymmetricMatrix,
    pub cone: LinearizedCone,
    pub s: DVector<f64>,
    pub g_x: DVector<f64>,
    pub jac_g: DMatrix<f64>,
    pub y: DVector<f64>,
    pub z: SymmetricMatrix,
}

impl SubproblemData {
    /// Builds the subproblem at `(x, y, Z)` for a given (already
    /// regularized) Hessian approximation `h`.
    pub fn assemble<P: NsdpProblem + ?Sized>(
        p: &P,
        x: &DVector<f64>,
        y: &DVector<f64>,
        z: &SymmetricMatrix,
        sigma: f64,
        h: &DMatrix<f64>,
    ) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(SqsdpError::InvalidArgument(format!(
                "penalty parameter must be positive, got {sigma}"
            )));
        }
        check_point(p, x)?;
        check_multipliers(p, y, z)?;
        let g_x = p.g(x);
        let jac_g = p.jac_g(x);
        let s = y - &g_x / sigma;
        let c = p.grad_f(x) - &jac_g * &s;
        let t = z.axpy(-1.0 / sigma, &p.x_mat(x));
        let m = SymmetricMatrix::new(h + &jac_g * jac_g.transpose() / sigma)?.into_matrix();
        Ok(Self {
            c,
            m,
            sigma,
            t,
            cone: LinearizedCone::at(p, x)?,
            s,
            g_x,
            jac_g,
            y: y.clone(),
            z: z.clone(),
        })
    }

    /// A subproblem with no equality constraints; `T` plays the role of
    /// `Z - X(x)/sigma` directly and `Z` is taken as `O`.
    pub fn conic_only(
        c: DVector<f64>,
        m: DMatrix<f64>,
        sigma: f64,
        t: SymmetricMatrix,
        cone: LinearizedCone,
    ) -> Result<Self> {
        let n = c.len();
        let d = t.dim();
        let data = Self {
            c,
            m,
            sigma,
            z: SymmetricMatrix::zeros(d),
            t,
            cone,
            s: DVector::zeros(0),
            g_x: DVector::zeros(0),
            jac_g: DMatrix::zeros(n, 0),
            y: DVector::zeros(0),
        };
        data.validate()?;
        Ok(data)
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if !(self.sigma > 0.0) {
            return Err(SqsdpError::InvalidArgument(format!(
                "penalty parameter must be positive, got {}",
                self.sigma
            )));
        }
        let dims = [
            ("M rows", n, self.m.nrows()),
            ("M cols", n, self.m.ncols()),
            ("A(x) variables", n, self.cone.n()),
            ("T dimension", self.cone.d(), self.t.dim()),
            ("Z dimension", self.cone.d(), self.z.dim()),
            ("grad g rows", n, self.jac_g.nrows()),
            ("grad g cols", self.g_x.len(), self.jac_g.ncols()),
            ("y length", self.g_x.len(), self.y.len()),
        ];
        for (context, expected, got) in dims {
            if expected != got {
                return Err(SqsdpError::DimensionMismatch {
                    context,
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }

    /// `T - A(x) xi / sigma`.
    pub fn shifted(&self, xi: &DVector<f64>) -> Result<SymmetricMatrix> {
        Ok(self.t.axpy(-1.0 / self.sigma, &self.cone.apply(xi)?))
    }

    /// Objective of the joint `(xi, Sigma)` problem.
    pub fn full_objective(&self, xi: &DVector<f64>, sigma_mat: &SymmetricMatrix) -> f64 {
        self.c.dot(xi) + 0.5 * xi.dot(&(&self.m * xi)) + 0.5 * self.sigma * sigma_mat.inner(sigma_mat)
    }

    /// `A(x) xi + sigma (Sigma - T)`, which must be PSD.
    pub fn slack(&self, xi: &DVector<f64>, sigma_mat: &SymmetricMatrix) -> Result<SymmetricMatrix> {
        let diff = sigma_mat - &self.t;
        Ok(self.cone.apply(xi)?.axpy(self.sigma, &diff))
    }
}

/// Value and gradient of the reduced objective `theta`.
pub fn reduced_objective(data: &SubproblemData, xi: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    let eig = data.shifted(xi)?.eig()?;
    let proj = eig.psd_part();
    Ok(reduced_parts(data, xi, &proj))
}

fn reduced_parts(data: &SubproblemData, xi: &DVector<f64>, proj: &SymmetricMatrix) -> (f64, DVector<f64>) {
    let mxi = &data.m * xi;
    let value = data.c.dot(xi) + 0.5 * xi.dot(&mxi) + 0.5 * data.sigma * proj.inner(proj);
    let grad = &data.c + mxi - data.cone.adjoint(proj).expect("dimensions validated");
    (value, grad)
}

/// `theta(xi)` and the sum of the magnitudes of its three terms, which
/// bounds the rounding error in the value.
fn reduced_value(data: &SubproblemData, xi: &DVector<f64>) -> Result<(f64, f64)> {
    let proj = data.shifted(xi)?.psd_project()?;
    let terms = [
        data.c.dot(xi),
        0.5 * xi.dot(&(&data.m * xi)),
        0.5 * data.sigma * proj.inner(&proj),
    ];
    Ok((terms.iter().sum(), terms.iter().map(|t| t.abs()).sum()))
}

#[derive(Clone, Debug)]
pub struct SubproblemSolution {
    pub xi: DVector<f64>,
    /// The optimal `Sigma`, always a PSD projection.
    pub sigma_mat: SymmetricMatrix,
    pub y_trial: DVector<f64>,
    pub z_trial: SymmetricMatrix,
    /// `|grad theta(xi)|` at the returned point.
    pub kkt_residual: f64,
    /// `kkt_residual` divided by the magnitude of the terms it balances.
    pub relative_residual: f64,
    pub newton_iters: usize,
    pub objective: f64,
}

/// Residuals of the optimality conditions of the joint problem at a
/// solution.
#[derive(Clone, Copy, Debug)]
pub struct SubproblemResiduals {
    /// `|Sigma - [T - A xi / sigma]_+|_F`
    pub projection: f64,
    /// `max(0, -lambda_min(A xi + sigma (Sigma - T)))`
    pub slack_infeasibility: f64,
    /// `|<Sigma, A xi + sigma (Sigma - T)>|`
    pub complementarity: f64,
    /// `|c + M xi - A*(x) Sigma|`
    pub stationarity: f64,
}

impl SubproblemResiduals {
    pub fn max(&self) -> f64 {
        self.projection
            .max(self.slack_infeasibility)
            .max(self.complementarity)
            .max(self.stationarity)
    }
}

pub fn subproblem_residuals(data: &SubproblemData, sol: &SubproblemSolution) -> Result<SubproblemResiduals> {
    let expected = data.shifted(&sol.xi)?.psd_project()?;
    let slack = data.slack(&sol.xi, &sol.sigma_mat)?;
    let stationarity =
        (&data.c + &data.m * &sol.xi - data.cone.adjoint(&sol.sigma_mat)?).norm();
    Ok(SubproblemResiduals {
        projection: (&sol.sigma_mat - &expected).norm_fro(),
        slack_infeasibility: (-slack.lambda_min()?).max(0.0),
        complementarity: sol.sigma_mat.inner(&slack).abs(),
        stationarity,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubproblemSettings {
    /// Relative tolerance on `|grad theta|`.
    pub tol: f64,
    pub max_iter: usize,
    /// A solve that stops making progress is still accepted when its
    /// relative residual is at most this.
    pub stall_tol: f64,
}

impl Default for SubproblemSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
            stall_tol: 1e-6,
        }
    }
}

/// Generalized Jacobian of `grad theta` at `xi`:
/// `M + (1/sigma) A* o d[.]_+(W) o A`, with `W` given by its eigendecomposition.
fn newton_matrix(data: &SubproblemData, eig: &EigenDecomposition) -> DMatrix<f64> {
    let n = data.n();
    let omega = eig.projection_divided_differences();
    let rotated: Vec<DMatrix<f64>> = data.cone.mats().iter().map(|a| eig.rotate_in(a)).collect();
    let weighted: Vec<DMatrix<f64>> = rotated.iter().map(|a| a.component_mul(&omega)).collect();
    let mut jac = data.m.clone();
    for j in 0..n {
        for i in j..n {
            let v = rotated[i].dot(&weighted[j]) / data.sigma;
            jac[(i, j)] += v;
            if i != j {
                jac[(j, i)] += v;
            }
        }
    }
    jac
}

fn newton_direction(jac: DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let rhs = -grad;
    if let Some(chol) = Cholesky::new(jac.clone()) {
        return chol.solve(&rhs);
    }
    jac.lu().solve(&rhs).unwrap_or_else(|| rhs.clone())
}

/// Scale against which the stationarity residual is measured: the sum of the
/// magnitudes of the three terms that cancel at the solution.
fn residual_scale(data: &SubproblemData, xi: &DVector<f64>, proj: &SymmetricMatrix) -> f64 {
    1.0 + data.c.norm() + (&data.m * xi).norm() + data.cone.adjoint(proj).map(|v| v.norm()).unwrap_or(0.0)
}

/// Smallest `|grad theta|` resolvable in floating point. The projection of
/// `W` is only accurate to about `eps |W|_F`, which `A*` amplifies by at
/// most `|A|_F`; `M xi` carries an error of about `eps |M|_F |xi|`.
fn rounding_floor(data: &SubproblemData, xi: &DVector<f64>, eig: &EigenDecomposition) -> f64 {
    let cone_norm = data.cone.mats().iter().map(|a| a.inner(a)).sum::<f64>().sqrt();
    16.0 * f64::EPSILON * (eig.eigenvalues.norm() * cone_norm + data.m.norm() * xi.norm())
}

pub fn solve_subproblem(data: &SubproblemData, settings: &SubproblemSettings) -> Result<SubproblemSolution> {
    data.validate()?;
    let m_sym = SymmetricMatrix::new(data.m.clone())?;
    let lambda_min = m_sym.lambda_min()?;
    if !(lambda_min > 0.0) {
        return Err(SqsdpError::NotPositiveDefinite { lambda_min });
    }

    let n = data.n();
    let mut xi = DVector::zeros(n);
    // Lowest theta seen. Since theta(xi) - theta(0) >= <grad F, xi>, this
    // keeps the fallback a descent direction for the merit function.
    let mut best: Option<SubproblemSolution> = None;
    let mut best_rel = f64::INFINITY;
    let mut done = 0;
    // best_rel at the last substantial improvement, and when it happened
    let mut progress_mark = (f64::INFINITY, 0usize);

    for iter in 0..=settings.max_iter {
        let eig = data.shifted(&xi)?.eig()?;
        let proj = eig.psd_part();
        let (theta, grad) = reduced_parts(data, &xi, &proj);
        let residual = grad.norm();
        let rel = residual / residual_scale(data, &xi, &proj);
        done = iter;
        if rel <= settings.tol || residual <= rounding_floor(data, &xi, &eig) {
            return Ok(finish(data, &xi, proj, residual, rel, iter, theta));
        }
        best_rel = best_rel.min(rel);
        if best.as_ref().is_none_or(|b| theta < b.objective) {
            best = Some(finish(data, &xi, proj.clone(), residual, rel, iter, theta));
        }
        if best_rel <= 0.5 * progress_mark.0 {
            progress_mark = (best_rel, iter);
        }
        if iter == settings.max_iter || iter - progress_mark.1 >= STALL_WINDOW {
            break;
        }

        let mut dir = newton_direction(newton_matrix(data, &eig), &grad);
        let mut slope = grad.dot(&dir);
        if !(slope < 0.0) {
            dir = -&grad;
            slope = -residual * residual;
        }

        // Armijo on theta, allowing for rounding in theta itself
        let (_, theta_scale) = reduced_value(data, &xi)?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &xi + &dir * alpha;
            let (value, scale) = reduced_value(data, &trial)?;
            let noise = 16.0 * f64::EPSILON * (theta_scale + scale + 1.0);
            if value <= theta + ARMIJO_C * alpha * slope + noise {
                xi = trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let best = best.expect("at least one iterate evaluated");
    if best.relative_residual <= settings.stall_tol {
        return Ok(best);
    }
    Err(SqsdpError::SubproblemNonConvergence {
        iterations: done,
        residual: best.relative_residual,
        tolerance: settings.tol,
        best: Box::new(best),
    })
}

fn finish(
    data: &SubproblemData,
    xi: &DVector<f64>,
    proj: SymmetricMatrix,
    residual: f64,
    relative: f64,
    iters: usize,
    objective: f64,
) -> SubproblemSolution {
    let y_trial = &data.s - data.jac_g.transpose() * xi / data.sigma;
    SubproblemSolution {
        xi: xi.clone(),
        z_trial: proj.clone(),
        sigma_mat: proj,
        y_trial,
        kkt_residual: residual,
        relative_residual: relative,
        newton_iters: iters,
        objective,
    }
}

/// Measured terms of the descent inequality
/// `<grad F, xi> <= -<M xi, xi> - sigma |Sigma - Z|_F^2`.
#[derive(Clone, Copy, Debug)]
pub struct DescentCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs + allowance - lhs`; non-negative when the inequality holds.
    pub slack: f64,
    pub passed: bool,
    /// Slack of the same inequality with `Z` replaced by `[T]_+`, which
    /// follows from firm nonexpansiveness of the projection and so holds
    /// for every exact solution.
    pub projected_slack: f64,
}

pub fn descent_check(data: &SubproblemData, sol: &SubproblemSolution, merit_gradient: &DVector<f64>) -> DescentCheck {
    let xi = &sol.xi;
    let lhs = merit_gradient.dot(xi);
    let dist = (&sol.sigma_mat - &data.z).norm_fro();
    let rhs = -xi.dot(&(&data.m * xi)) - data.sigma * dist * dist;
    let allowance = 1e-8 * (1.0 + xi.norm_squared());
    let slack = rhs + allowance - lhs;
    let projected_slack = match data.t.psd_project() {
        Ok(t_plus) => {
            let dist = (&sol.sigma_mat - &t_plus).norm_fro();
            -xi.dot(&(&data.m * xi)) - data.sigma * dist * dist + allowance - lhs
        }
        Err(_) => f64::NAN,
    };
    DescentCheck {
        lhs,
        rhs,
        slack,
        passed: slack >= 0.0,
        projected_slack,
    }
}
