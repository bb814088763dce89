//! Optimality measures and the multiplier/penalty update rules.

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqsdpError};
use crate::model::{check_point, lagrangian_grad, MultiplierPair, NsdpProblem};
use crate::symkernel::SymmetricMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlParams {
    pub kappa: f64,
    pub y_max: f64,
    pub z_max: f64,
}

impl ControlParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(SqsdpError::Config(format!("kappa must lie in (0, 1), got {}", self.kappa)));
        }
        if !(self.y_max > 0.0 && self.z_max > 0.0) {
            return Err(SqsdpError::Config(format!(
                "multiplier bounds must be positive, got y_max={} z_max={}",
                self.y_max, self.z_max
            )));
        }
        Ok(())
    }
}

/// Thresholds `phi`, `psi`, `gamma` and the penalty `sigma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlState {
    pub phi: f64,
    pub psi: f64,
    pub gamma: f64,
    pub sigma: f64,
}

/// Which branch of the multiplier update fired.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepTag {
    /// Violation: `Phi` halved its threshold.
    V,
    /// Optimality: `Psi` halved its threshold.
    O,
    /// Merit: the merit gradient fell below `gamma`.
    M,
    /// Failure: nothing changes.
    F,
}

impl fmt::Display for StepTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StepTag::V => "V",
            StepTag::O => "O",
            StepTag::M => "M",
            StepTag::F => "F",
        };
        f.write_str(s)
    }
}

/// `|g(x)| + [lambda_max(-X(x))]_+`.
pub fn r_v<P: NsdpProblem + ?Sized>(p: &P, x: &DVector<f64>) -> Result<f64> {
    check_point(p, x)?;
    let neg = -&p.x_mat(x);
    Ok(p.g(x).norm() + neg.lambda_max()?.max(0.0))
}

/// `|grad_x L(x, y, Z)| + |X(x) Z|_F` (plain matrix product).
pub fn r_o<P: NsdpProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &SymmetricMatrix,
) -> Result<f64> {
    let grad = lagrangian_grad(p, x, y, z)?;
    let prod = p.x_mat(x).as_matrix() * z.as_matrix();
    Ok(grad.norm() + prod.norm())
}

/// `r = r_V + r_O`.
pub fn kkt_measure<P: NsdpProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &SymmetricMatrix,
) -> Result<f64> {
    Ok(r_v(p, x)? + r_o(p, x, y, z)?)
}

pub fn phi_from_residuals(rv: f64, ro: f64, kappa: f64) -> (f64, f64) {
    (rv + kappa * ro, kappa * rv + ro)
}

/// `(Phi, Psi) = (r_V + kappa r_O, kappa r_V + r_O)`.
pub fn phi_psi<P: NsdpProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &SymmetricMatrix,
    cp: &ControlParams,
) -> Result<(f64, f64)> {
    Ok(phi_from_residuals(r_v(p, x)?, r_o(p, x, y, z)?, cp.kappa))
}

/// Componentwise clamp onto `[-y_max, y_max]^m`.
pub fn box_clamp(y: &DVector<f64>, y_max: f64) -> DVector<f64> {
    y.map(|v| v.clamp(-y_max, y_max))
}

/// One pass of the V/O/M/F cascade. `merit_grad_norm_at_next` is
/// `|grad F(x_{k+1}; sigma_k, y_k, Z_k)|`.
pub fn procedure_update<P: NsdpProblem + ?Sized>(
    p: &P,
    x_next: &DVector<f64>,
    trial: &MultiplierPair,
    current: &MultiplierPair,
    state: &ControlState,
    merit_grad_norm_at_next: f64,
    cp: &ControlParams,
) -> Result<(MultiplierPair, ControlState, StepTag)> {
    let (phi_val, psi_val) = phi_psi(p, x_next, &trial.y, &trial.z, cp)?;
    let mut next = *state;
    if phi_val <= 0.5 * state.phi {
        next.phi = 0.5 * state.phi;
        return Ok((trial.clone(), next, StepTag::V));
    }
    if psi_val <= 0.5 * state.psi {
        next.psi = 0.5 * state.psi;
        return Ok((trial.clone(), next, StepTag::O));
    }
    if merit_grad_norm_at_next <= state.gamma {
        next.gamma = 0.5 * state.gamma;
        let sigma = state.sigma;
        let y = box_clamp(&(&current.y - p.g(x_next) / sigma), cp.y_max);
        let z = current
            .z
            .axpy(-1.0 / sigma, &p.x_mat(x_next))
            .psd_project()?
            .box_project_spectral(cp.z_max)?;
        return Ok((MultiplierPair { y, z }, next, StepTag::M));
    }
    Ok((current.clone(), next, StepTag::F))
}

/// New penalty parameter. `r_next` is `r(x_{k+1}, y_{k+1}, Z_{k+1})`.
pub fn penalty_update(state: &ControlState, merit_grad_norm_at_next: f64, r_next: f64, sigma_min: f64) -> f64 {
    if merit_grad_norm_at_next <= state.gamma {
        (0.5 * state.sigma).min(r_next.powf(1.5)).max(sigma_min)
    } else {
        state.sigma
    }
}

/// `|X(x) o Z|_F` with `o` the Jordan product.
pub fn cakkt_residual<P: NsdpProblem + ?Sized>(p: &P, x: &DVector<f64>, z: &SymmetricMatrix) -> Result<f64> {
    check_point(p, x)?;
    Ok(p.x_mat(x).jordan(z)?.norm_fro())
}

/// `|<X(x), Z>|`.
pub fn takkt_residual<P: NsdpProblem + ?Sized>(p: &P, x: &DVector<f64>, z: &SymmetricMatrix) -> Result<f64> {
    check_point(p, x)?;
    let xm = p.x_mat(x);
    if xm.dim() != z.dim() {
        return Err(SqsdpError::DimensionMismatch {
            context: "takkt_residual",
            expected: xm.dim(),
            got: z.dim(),
        });
    }
    Ok(xm.inner(z).abs())
}
