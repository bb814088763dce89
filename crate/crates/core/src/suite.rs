//! Batch runs over the degenerate benchmark family.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::corpus::problem_degenerate;
use crate::driver::{solve_from_origin, SolveFailure, SolveReport, SolverOptions};

/// One seed of a benchmark batch.
#[derive(Debug)]
pub struct BenchRun {
    pub seed: u64,
    pub outcome: Result<SolveReport, SolveFailure>,
}

impl BenchRun {
    /// The report whether or not the solve aborted.
    pub fn report(&self) -> &SolveReport {
        match &self.outcome {
            Ok(r) => r,
            Err(f) => &f.report,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchSummary {
    pub n_mat: usize,
    pub count: usize,
    pub failures: usize,
    pub avg_iterations: f64,
    pub avg_r: f64,
    pub max_r: f64,
    pub min_r: f64,
    pub median_r: f64,
}

/// Solves the degenerate instances `seed_base .. seed_base + count` on up to
/// `jobs` threads. Results are returned in seed order regardless of `jobs`.
pub fn run_degenerate(
    n_mat: usize,
    count: usize,
    seed_base: u64,
    opts: &SolverOptions,
    jobs: usize,
) -> Vec<BenchRun> {
    let slots: Vec<Mutex<Option<BenchRun>>> = (0..count).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= count {
            break;
        }
        let seed = seed_base + i as u64;
        let outcome = match problem_degenerate(n_mat, seed) {
            Ok(p) => solve_from_origin(&p, opts),
            Err(error) => Err(SolveFailure {
                report: Box::new(empty_report(format!("degenerate-{n_mat}-{seed}"))),
                error,
            }),
        };
        *slots[i].lock().expect("slot poisoned") = Some(BenchRun { seed, outcome });
    };
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, count.max(1)) {
            s.spawn(worker);
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot poisoned").expect("every slot filled"))
        .collect()
}

fn empty_report(problem: String) -> SolveReport {
    SolveReport {
        problem,
        status: crate::driver::SolveStatus::Failed,
        iterations: 0,
        final_r: f64::NAN,
        final_r_v: f64::NAN,
        final_r_o: f64::NAN,
        final_cakkt: f64::NAN,
        final_takkt: f64::NAN,
        final_merit_grad_norm: f64::NAN,
        x: Vec::new(),
        y: Vec::new(),
        z_svec: Vec::new(),
        trace: Vec::new(),
        wall_time_secs: 0.0,
        error: None,
    }
}

/// Statistics over the final residuals. Aborted runs count as failures and
/// contribute their last recorded residual.
pub fn summarize(n_mat: usize, runs: &[BenchRun]) -> BenchSummary {
    let count = runs.len();
    let failures = runs.iter().filter(|r| r.outcome.is_err()).count();
    let mut rs: Vec<f64> = runs.iter().map(|r| r.report().final_r).filter(|v| !v.is_nan()).collect();
    rs.sort_by(f64::total_cmp);
    let iters: f64 = runs.iter().map(|r| r.report().iterations as f64).sum();
    let avg = |total: f64, n: usize| if n == 0 { f64::NAN } else { total / n as f64 };
    BenchSummary {
        n_mat,
        count,
        failures,
        avg_iterations: avg(iters, count),
        avg_r: avg(rs.iter().sum(), rs.len()),
        max_r: rs.last().copied().unwrap_or(f64::NAN),
        min_r: rs.first().copied().unwrap_or(f64::NAN),
        median_r: median(&rs),
    }
}

/// Median of an ascending slice; mean of the two middle values for even length.
pub fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => sorted[n / 2],
        _ => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    }
}
