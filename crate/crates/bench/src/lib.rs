//! Fixed inputs for the criterion benchmarks in `benches/`.

use nalgebra::{DMatrix, DVector};
use sqsdp::corpus::problem_degenerate;
use sqsdp::model::hessian_or_approx;
use sqsdp::subqp::SubproblemData;
use sqsdp::{HessianPolicy, NsdpProblem, SymmetricMatrix};

/// A dense symmetric `d x d` matrix with a spread spectrum and no zero
/// eigenvalues, deterministic in `d`.
pub fn spread_matrix(d: usize) -> SymmetricMatrix {
    let a = DMatrix::from_fn(d, d, |i, j| {
        let (i, j) = (i as f64, j as f64);
        (1.0 + i * 0.37 + j * 0.11).sin() + if i == j { i - d as f64 / 2.0 + 0.5 } else { 0.0 }
    });
    SymmetricMatrix::new(&a + a.transpose()).expect("square input")
}

/// The first subproblem of the degenerate instance `(n_mat, seed)` started
/// from `X = I` with zero multipliers.
pub fn degenerate_subproblem(n_mat: usize, seed: u64, sigma: f64) -> SubproblemData {
    let p = problem_degenerate(n_mat, seed).expect("valid instance");
    let x = SymmetricMatrix::identity(n_mat).svec();
    let y = DVector::zeros(p.m());
    let z = SymmetricMatrix::zeros(n_mat);
    let h = hessian_or_approx(&p, &x, &y, &z, sigma, &HessianPolicy::default()).expect("regular Hessian");
    SubproblemData::assemble(&p, &x, &y, &z, sigma, &h).expect("consistent dimensions")
}
