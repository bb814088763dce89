//! Augmented-Lagrangian merit function and the feasibility measure.
//!
//! ```text
//! F(x; s, y, Z) = f(x) + |s y - g(x)|^2 / (2s) + |[s Z - X(x)]_+|_F^2 / (2s)
//! P(x)          = |g(x)|^2 / 2 + |[-X(x)]_+|_F^2 / 2
//! ```
//!
//! Both are C^1 because `W -> |[W]_+|^2 / 2` has gradient `[W]_+`.

use nalgebra::DVector;

use crate::error::{Result, SqsdpError};
use crate::model::{check_multipliers, check_point, LinearizedCone, NsdpProblem};
use crate::symkernel::SymmetricMatrix;

#[derive(Clone, Debug)]
pub struct MeritParams {
    pub sigma: f64,
    pub y: DVector<f64>,
    pub z: SymmetricMatrix,
}

impl MeritParams {
    pub fn new(sigma: f64, y: DVector<f64>, z: SymmetricMatrix) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(SqsdpError::InvalidArgument(format!(
                "merit penalty must be positive, got {sigma}"
            )));
        }
        Ok(Self { sigma, y, z })
    }

    fn validate<P: NsdpProblem + ?Sized>(&self, p: &P, x: &DVector<f64>) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(SqsdpError::InvalidArgument(format!(
                "merit penalty must be positive, got {}",
                self.sigma
            )));
        }
        check_point(p, x)?;
        check_multipliers(p, &self.y, &self.z)
    }

    /// `[Z - X(x)/sigma]_+`, the multiplier estimate carried by the merit.
    pub fn shifted_projection(&self, x_mat: &SymmetricMatrix) -> Result<SymmetricMatrix> {
        self.z.axpy(-1.0 / self.sigma, x_mat).psd_project()
    }
}

pub fn merit_value<P: NsdpProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    mp: &MeritParams,
) -> Result<f64> {
    mp.validate(p, x)?;
    let s = mp.sigma;
    let eq = &mp.y * s - p.g(x);
    let cone = (&mp.z * s).axpy(-1.0, &p.x_mat(x)).psd_project()?;
    let cone_sq = cone.svec().norm_squared();
    Ok(p.f(x) + (eq.norm_squared() + cone_sq) / (2.0 * s))
}

/// `grad f(x) - grad g(x) (y - g(x)/sigma) - A*(x) [Z - X(x)/sigma]_+`.
pub fn merit_grad<P: NsdpProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    mp: &MeritParams,
) -> Result<DVector<f64>> {
    mp.validate(p, x)?;
    let cone = LinearizedCone::at(p, x)?;
    let shifted_y = &mp.y - p.g(x) / mp.sigma;
    let proj = mp.shifted_projection(&p.x_mat(x))?;
    Ok(p.grad_f(x) - p.jac_g(x) * shifted_y - cone.adjoint(&proj)?)
}

pub fn feasibility_p<P: NsdpProblem + ?Sized>(p: &P, x: &DVector<f64>) -> Result<f64> {
    check_point(p, x)?;
    let viol = (-&p.x_mat(x)).psd_project()?;
    Ok(0.5 * p.g(x).norm_squared() + 0.5 * viol.svec().norm_squared())
}

/// `grad g(x) g(x) - A*(x) [-X(x)]_+`.
pub fn feasibility_p_grad<P: NsdpProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_point(p, x)?;
    let cone = LinearizedCone::at(p, x)?;
    let viol = (-&p.x_mat(x)).psd_project()?;
    Ok(p.jac_g(x) * p.g(x) - cone.adjoint(&viol)?)
}
