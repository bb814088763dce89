//! Outer loop of the stabilized SQSDP method.
//!
//! Each iteration: stop test, merit-stationarity shortcut or subproblem
//! solve, Armijo backtracking on the merit function, V/O/M/F multiplier
//! update, penalty update.

use std::io::{self, Write};
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::control::{
    cakkt_residual, kkt_measure, penalty_update, phi_from_residuals, procedure_update, r_o, r_v,
    takkt_residual, ControlParams, ControlState, StepTag,
};
use crate::error::{Result, SqsdpError};
use crate::merit::{merit_grad, merit_value, MeritParams};
use crate::model::{check_multipliers, check_point, hessian_or_approx, HessianPolicy, MultiplierPair, NsdpProblem};
use crate::subqp::{descent_check, solve_subproblem, SubproblemData, SubproblemSettings};
use crate::symkernel::SymmetricMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub tau: f64,
    pub omega: f64,
    pub beta: f64,
    pub kappa: f64,
    pub y_max: f64,
    pub z_max: f64,
    pub epsilon: f64,
    pub k_max: usize,
    pub phi0: f64,
    pub psi0: f64,
    pub gamma0: f64,
    pub sigma0: f64,
    /// `|grad F| <= grad_f_zero_tol` triggers the no-subproblem shortcut.
    pub grad_f_zero_tol: f64,
    pub subproblem: SubproblemSettings,
    pub sigma_min: f64,
    /// Largest backtracking exponent tried before the line search fails.
    pub ell_max: u32,
    pub hessian: HessianPolicy,
    /// Recover from subproblem and line-search failures by the fallbacks
    /// listed in [`Direction`] instead of aborting.
    pub fallback: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tau: 1e-4,
            omega: 1e-4,
            beta: 0.5,
            kappa: 1e-5,
            y_max: 1e6,
            z_max: 1e6,
            epsilon: 1e-4,
            k_max: 200,
            phi0: 1e3,
            psi0: 1e3,
            gamma0: 0.1,
            sigma0: 0.1,
            grad_f_zero_tol: 1e-4,
            subproblem: SubproblemSettings::default(),
            sigma_min: 1e-12,
            ell_max: 60,
            hessian: HessianPolicy::default(),
            fallback: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("tau", self.tau),
            ("omega", self.omega),
            ("beta", self.beta),
            ("kappa", self.kappa),
        ];
        for (name, v) in unit {
            if !(v > 0.0 && v < 1.0) {
                return Err(SqsdpError::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        let positive = [
            ("y_max", self.y_max),
            ("z_max", self.z_max),
            ("epsilon", self.epsilon),
            ("phi0", self.phi0),
            ("psi0", self.psi0),
            ("gamma0", self.gamma0),
            ("sigma0", self.sigma0),
            ("subproblem tol", self.subproblem.tol),
            ("nu1", self.hessian.nu1),
            ("nu2", self.hessian.nu2),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SqsdpError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.grad_f_zero_tol >= 0.0) || !(self.sigma_min >= 0.0) {
            return Err(SqsdpError::Config(
                "grad_f_zero_tol and sigma_min must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn control_params(&self) -> ControlParams {
        ControlParams {
            kappa: self.kappa,
            y_max: self.y_max,
            z_max: self.z_max,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Iterate {
    pub k: usize,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: SymmetricMatrix,
    pub control: ControlState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    /// `r(x_k, y_k, Z_k) <= epsilon`.
    ResidualConverged,
    /// `gamma_k <= epsilon`.
    GammaConverged,
    MaxIterations,
    /// Aborted by a subproblem or line-search failure.
    Failed,
}

impl SolveStatus {
    pub fn is_converged(self) -> bool {
        matches!(self, SolveStatus::ResidualConverged | SolveStatus::GammaConverged)
    }
}

/// Measurements at iterate `k` plus what the step from `k` did.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub r: f64,
    pub r_v: f64,
    pub r_o: f64,
    /// `Phi(x_k, y_k, Z_k)`.
    pub phi: f64,
    /// `Psi(x_k, y_k, Z_k)`.
    pub psi: f64,
    pub phi_threshold: f64,
    pub psi_threshold: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub cakkt: f64,
    pub merit_grad_norm: f64,
    pub step_tag: Option<StepTag>,
    pub direction: Option<Direction>,
    pub ell: Option<u32>,
    pub xi_norm: Option<f64>,
    pub newton_iters: Option<usize>,
    /// Relative stationarity residual of the accepted subproblem solution.
    pub subproblem_residual: Option<f64>,
    /// Slack of the subproblem descent inequality (negative = violated).
    pub descent_slack: Option<f64>,
    /// Slack of the descent inequality measured against `[T]_+` instead of `Z_k`.
    pub projected_descent_slack: Option<f64>,
    /// `(F(x_k), F(x_{k+1}), tau beta^ell Delta_k)` under `(sigma_k, y_k, Z_k)`.
    pub merit_step: Option<(f64, f64, f64)>,
}

pub const TRACE_CSV_HEADER: &str = "k,r,rV,rO,phi,psi,gamma,sigma,step_tag,ell,xi_norm,cakkt";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub problem: String,
    pub status: SolveStatus,
    pub iterations: usize,
    pub final_r: f64,
    pub final_r_v: f64,
    pub final_r_o: f64,
    pub final_cakkt: f64,
    pub final_takkt: f64,
    pub final_merit_grad_norm: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `svec` of the final conic multiplier.
    pub z_svec: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub wall_time_secs: f64,
    pub error: Option<String>,
}

impl SolveReport {
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{TRACE_CSV_HEADER}")?;
        for row in &self.trace {
            let tag = row.step_tag.map(|t| t.to_string()).unwrap_or_default();
            let ell = row.ell.map(|l| l.to_string()).unwrap_or_default();
            let xi = row.xi_norm.map(|v| format!("{v:e}")).unwrap_or_default();
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{},{:e}",
                row.k, row.r, row.r_v, row.r_o, row.phi, row.psi, row.gamma, row.sigma, tag, ell, xi, row.cakkt
            )?;
        }
        Ok(())
    }

    pub fn trace_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_trace_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }
}

/// A solve aborted by an error; `report` holds everything up to the failure.
#[derive(Debug)]
pub struct SolveFailure {
    pub report: Box<SolveReport>,
    pub error: SqsdpError,
}

impl std::fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} aborted at iteration {}: {}", self.report.problem, self.report.iterations, self.error)
    }
}

impl std::error::Error for SolveFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

#[derive(Clone, Debug)]
pub struct LineSearchResult {
    pub alpha: f64,
    pub ell: u32,
    pub merit_before: f64,
    pub merit_after: f64,
    pub delta: f64,
}

/// Smallest `ell` in `[0, ell_max]` with
/// `F(x + beta^ell p) <= F(x) + tau beta^ell Delta`,
/// `Delta = max(<grad F(x), p>, -omega |p|^2)`.
pub fn line_search<P: NsdpProblem + ?Sized>(
    p: &P,
    x: &DVector<f64>,
    dir: &DVector<f64>,
    mp: &MeritParams,
    merit_gradient: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<LineSearchResult> {
    let delta = merit_gradient.dot(dir).max(-opts.omega * dir.norm_squared());
    let merit_before = merit_value(p, x, mp)?;
    if !(delta < 0.0) {
        return Err(SqsdpError::LineSearchFailure {
            ell_max: 0,
            delta,
            merit: merit_before,
            samples: Vec::new(),
        });
    }
    let mut samples = Vec::new();
    let mut alpha = 1.0;
    for ell in 0..=opts.ell_max {
        let trial = x + dir * alpha;
        let value = merit_value(p, &trial, mp)?;
        if value <= merit_before + opts.tau * alpha * delta {
            return Ok(LineSearchResult {
                alpha,
                ell,
                merit_before,
                merit_after: value,
                delta,
            });
        }
        samples.push((alpha, value));
        alpha *= opts.beta;
    }
    Err(SqsdpError::LineSearchFailure {
        ell_max: opts.ell_max,
        delta,
        merit: merit_before,
        samples,
    })
}

struct Measurement {
    r_v: f64,
    r_o: f64,
    cakkt: f64,
    merit_grad: DVector<f64>,
}

fn measure<P: NsdpProblem + ?Sized>(p: &P, it: &Iterate) -> Result<Measurement> {
    let mp = MeritParams::new(it.control.sigma, it.y.clone(), it.z.clone())?;
    Ok(Measurement {
        r_v: r_v(p, &it.x)?,
        r_o: r_o(p, &it.x, &it.y, &it.z)?,
        cakkt: cakkt_residual(p, &it.x, &it.z)?,
        merit_grad: merit_grad(p, &it.x, &mp)?,
    })
}

/// Where the step of an iteration came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// `|grad F|` below `grad_f_zero_tol`; no subproblem, `x` kept.
    Shortcut,
    /// Subproblem solved to tolerance.
    Subproblem,
    /// Subproblem failed or gave no Armijo step; steepest descent on the merit.
    Gradient,
    /// No direction gave an Armijo step; `x` kept.
    Null,
}

#[derive(Default)]
struct StepRecord {
    ell: Option<u32>,
    xi_norm: f64,
    newton_iters: Option<usize>,
    subproblem_residual: Option<f64>,
    descent_slack: Option<f64>,
    projected_descent_slack: Option<f64>,
    merit_step: Option<(f64, f64, f64)>,
}

struct StepOutcome {
    next: Iterate,
    tag: StepTag,
    direction: Direction,
    record: StepRecord,
}

/// `(y - g(x)/sigma, [Z - X(x)/sigma]_+)`.
fn merit_multipliers<P: NsdpProblem + ?Sized>(p: &P, x: &DVector<f64>, mp: &MeritParams) -> Result<MultiplierPair> {
    Ok(MultiplierPair {
        y: &mp.y - p.g(x) / mp.sigma,
        z: mp.shifted_projection(&p.x_mat(x))?,
    })
}

fn step<P: NsdpProblem + ?Sized>(
    p: &P,
    it: &Iterate,
    merit_gradient: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<StepOutcome> {
    let sigma = it.control.sigma;
    let mp = MeritParams::new(sigma, it.y.clone(), it.z.clone())?;
    let mut rec = StepRecord::default();

    let (x_next, trial, direction) = if merit_gradient.norm() <= opts.grad_f_zero_tol {
        (it.x.clone(), merit_multipliers(p, &it.x, &mp)?, Direction::Shortcut)
    } else {
        let h = hessian_or_approx(p, &it.x, &it.y, &it.z, sigma, &opts.hessian)?;
        let data = SubproblemData::assemble(p, &it.x, &it.y, &it.z, sigma, &h)?;
        let sol = match solve_subproblem(&data, &opts.subproblem) {
            Ok(sol) => Some(sol),
            Err(SqsdpError::SubproblemNonConvergence { best, .. }) if opts.fallback => {
                rec.newton_iters = Some(best.newton_iters);
                rec.subproblem_residual = Some(best.relative_residual);
                None
            }
            Err(e) => return Err(e),
        };
        let accepted = match sol {
            Some(sol) => {
                rec.xi_norm = sol.xi.norm();
                rec.newton_iters = Some(sol.newton_iters);
                rec.subproblem_residual = Some(sol.relative_residual);
                let check = descent_check(&data, &sol, merit_gradient);
                rec.descent_slack = Some(check.slack);
                rec.projected_descent_slack = Some(check.projected_slack);
                match line_search(p, &it.x, &sol.xi, &mp, merit_gradient, opts) {
                    Ok(ls) => {
                        rec.ell = Some(ls.ell);
                        rec.merit_step = Some((ls.merit_before, ls.merit_after, opts.tau * ls.alpha * ls.delta));
                        let trial = MultiplierPair {
                            y: sol.y_trial,
                            z: sol.z_trial,
                        };
                        Some((&it.x + &sol.xi * ls.alpha, trial, Direction::Subproblem))
                    }
                    Err(e) if !opts.fallback => return Err(e),
                    Err(_) => None,
                }
            }
            None => None,
        };
        match accepted {
            Some(step) => step,
            // steepest descent on the merit, then a null step
            None => {
                let descent = -merit_gradient;
                match line_search(p, &it.x, &descent, &mp, merit_gradient, opts) {
                    Ok(ls) => {
                        rec.xi_norm = descent.norm();
                        rec.ell = Some(ls.ell);
                        rec.merit_step = Some((ls.merit_before, ls.merit_after, opts.tau * ls.alpha * ls.delta));
                        let x_next = &it.x + descent * ls.alpha;
                        let trial = merit_multipliers(p, &x_next, &mp)?;
                        (x_next, trial, Direction::Gradient)
                    }
                    Err(_) => (it.x.clone(), merit_multipliers(p, &it.x, &mp)?, Direction::Null),
                }
            }
        }
    };

    let grad_next_norm = match direction {
        Direction::Shortcut | Direction::Null => merit_gradient.norm(),
        _ => merit_grad(p, &x_next, &mp)?.norm(),
    };
    let current = MultiplierPair {
        y: it.y.clone(),
        z: it.z.clone(),
    };
    let (mult, mut control, tag) = procedure_update(
        p,
        &x_next,
        &trial,
        &current,
        &it.control,
        grad_next_norm,
        &opts.control_params(),
    )?;
    if grad_next_norm <= it.control.gamma {
        let r_next = kkt_measure(p, &x_next, &mult.y, &mult.z)?;
        control.sigma = penalty_update(&it.control, grad_next_norm, r_next, opts.sigma_min);
    }

    Ok(StepOutcome {
        next: Iterate {
            k: it.k + 1,
            x: x_next,
            y: mult.y,
            z: mult.z,
            control,
        },
        tag,
        direction,
        record: rec,
    })
}

fn row_from(it: &Iterate, m: &Measurement, kappa: f64) -> TraceRow {
    let (phi, psi) = phi_from_residuals(m.r_v, m.r_o, kappa);
    TraceRow {
        k: it.k,
        r: m.r_v + m.r_o,
        r_v: m.r_v,
        r_o: m.r_o,
        phi,
        psi,
        phi_threshold: it.control.phi,
        psi_threshold: it.control.psi,
        gamma: it.control.gamma,
        sigma: it.control.sigma,
        cakkt: m.cakkt,
        merit_grad_norm: m.merit_grad.norm(),
        step_tag: None,
        direction: None,
        ell: None,
        xi_norm: None,
        newton_iters: None,
        subproblem_residual: None,
        descent_slack: None,
        projected_descent_slack: None,
        merit_step: None,
    }
}

/// Runs the method from `(x0, y0, Z0)`.
pub fn solve<P: NsdpProblem + ?Sized>(
    p: &P,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    z0: &SymmetricMatrix,
    opts: &SolverOptions,
) -> std::result::Result<SolveReport, SolveFailure> {
    let start = Instant::now();
    let mut trace: Vec<TraceRow> = Vec::new();
    let mut it = Iterate {
        k: 0,
        x: x0.clone(),
        y: y0.clone(),
        z: z0.clone(),
        control: ControlState {
            phi: opts.phi0,
            psi: opts.psi0,
            gamma: opts.gamma0,
            sigma: opts.sigma0,
        },
    };

    let fail = |it: &Iterate, trace: Vec<TraceRow>, error: SqsdpError| {
        let mut report = build_report(p, it, trace, SolveStatus::Failed, start);
        report.error = Some(error.to_string());
        SolveFailure {
            report: Box::new(report),
            error,
        }
    };

    if let Err(e) = opts
        .validate()
        .and_then(|_| check_point(p, x0))
        .and_then(|_| check_multipliers(p, y0, z0))
    {
        return Err(fail(&it, trace, e));
    }

    loop {
        let m = match measure(p, &it) {
            Ok(m) => m,
            Err(e) => return Err(fail(&it, trace, e)),
        };
        let mut row = row_from(&it, &m, opts.kappa);

        let status = if row.r <= opts.epsilon {
            Some(SolveStatus::ResidualConverged)
        } else if it.control.gamma <= opts.epsilon {
            Some(SolveStatus::GammaConverged)
        } else if it.k >= opts.k_max {
            Some(SolveStatus::MaxIterations)
        } else {
            None
        };
        if let Some(status) = status {
            trace.push(row);
            return Ok(build_report(p, &it, trace, status, start));
        }

        match step(p, &it, &m.merit_grad, opts) {
            Ok(out) => {
                row.step_tag = Some(out.tag);
                row.direction = Some(out.direction);
                row.ell = out.record.ell;
                row.xi_norm = Some(out.record.xi_norm);
                row.newton_iters = out.record.newton_iters;
                row.subproblem_residual = out.record.subproblem_residual;
                row.descent_slack = out.record.descent_slack;
                row.projected_descent_slack = out.record.projected_descent_slack;
                row.merit_step = out.record.merit_step;
                trace.push(row);
                it = out.next;
            }
            Err(e) => {
                trace.push(row);
                return Err(fail(&it, trace, e));
            }
        }
    }
}

/// Solves from the origin with zero multipliers.
pub fn solve_from_origin<P: NsdpProblem + ?Sized>(
    p: &P,
    opts: &SolverOptions,
) -> std::result::Result<SolveReport, SolveFailure> {
    solve(
        p,
        &DVector::zeros(p.n()),
        &DVector::zeros(p.m()),
        &SymmetricMatrix::zeros(p.d()),
        opts,
    )
}

fn build_report<P: NsdpProblem + ?Sized>(
    p: &P,
    it: &Iterate,
    trace: Vec<TraceRow>,
    status: SolveStatus,
    start: Instant,
) -> SolveReport {
    let last = trace.last();
    let nan = f64::NAN;
    SolveReport {
        problem: p.name().to_string(),
        status,
        iterations: it.k,
        final_r: last.map_or(nan, |r| r.r),
        final_r_v: last.map_or(nan, |r| r.r_v),
        final_r_o: last.map_or(nan, |r| r.r_o),
        final_cakkt: last.map_or(nan, |r| r.cakkt),
        final_takkt: takkt_residual(p, &it.x, &it.z).unwrap_or(nan),
        final_merit_grad_norm: last.map_or(nan, |r| r.merit_grad_norm),
        x: it.x.iter().copied().collect(),
        y: it.y.iter().copied().collect(),
        z_svec: it.z.svec().iter().copied().collect(),
        trace,
        wall_time_secs: start.elapsed().as_secs_f64(),
        error: None,
    }
}
