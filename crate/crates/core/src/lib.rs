//! Stabilized sequential quadratic semidefinite programming (SQSDP) for
//! nonlinear semidefinite programs
//!
//! ```text
//! min f(x)  s.t.  g(x) = 0,  X(x) ⪰ 0
//! ```
//!
//! The method drives an augmented-Lagrangian merit function down with
//! directions from a stabilized quadratic semidefinite subproblem, and
//! updates multipliers and the penalty parameter by residual tests. It
//! reaches approximate KKT points (AKKT/CAKKT) even when no exact KKT point
//! exists.
//!
//! ```
//! use sqsdp::{corpus::problem_no_kkt, solve_from_origin, SolverOptions};
//!
//! let report = solve_from_origin(&problem_no_kkt(), &SolverOptions::default()).unwrap();
//! assert!(report.status.is_converged());
//! assert!(report.x[0].abs() < 1e-2);
//! ```

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod corpus;
pub mod driver;
pub mod error;
pub mod merit;
pub mod model;
pub mod subqp;
pub mod suite;
pub mod symkernel;

pub use control::{ControlParams, ControlState, StepTag};
pub use driver::{
    solve, solve_from_origin, SolveFailure, SolveReport, SolveStatus, SolverOptions, TraceRow, TRACE_CSV_HEADER,
};
pub use error::{Result, SqsdpError};
pub use model::{HessianMode, HessianPolicy, MultiplierPair, NsdpProblem};
pub use subqp::SubproblemSettings;
pub use symkernel::SymmetricMatrix;
