//! `sqsdp`: run single solves or the degenerate benchmark from the shell.
//!
//! Exit codes: 0 converged, 2 iteration budget exhausted, 1 solver or I/O
//! error, 64 bad command line or configuration.

mod config;
mod selector;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use config::{OptionFlags, DEFAULTS_ENV};
use selector::ProblemSelector;
use sqsdp::suite::{run_degenerate, summarize, BenchRun, BenchSummary};
use sqsdp::{solve_from_origin, SolveReport, SolveStatus, SolverOptions};

const EXIT_CONVERGED: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_MAX_ITERATIONS: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "sqsdp", version, about = "Sequential quadratic SDP solver for nonlinear semidefinite programs")]
#[command(after_help = "Solver defaults can be overridden by a TOML file named in SQSDP_DEFAULTS; flags win over the file.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one problem from the origin with zero multipliers
    Solve {
        /// no-kkt, degenerate:N[:SEED] or random:N:M:D[:SEED]
        #[arg(long, value_name = "SELECTOR")]
        problem: ProblemSelector,
        /// Instance seed when the selector carries none (default 1)
        #[arg(long)]
        seed: Option<u64>,
        /// Write the iteration trace as CSV
        #[arg(long, value_name = "PATH")]
        out_trace: Option<PathBuf>,
        /// Write the full report as JSON
        #[arg(long, value_name = "PATH")]
        out_report: Option<PathBuf>,
        /// Print the trace to stderr
        #[arg(short, long)]
        verbose: bool,
        #[command(flatten)]
        options: OptionFlags,
    },
    /// Solve a batch of seeded degenerate instances and summarise them
    Bench {
        /// Matrix order of the instances
        #[arg(long, default_value_t = 5, value_name = "N")]
        n_mat: usize,
        /// Number of instances
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        count: u64,
        /// Seed of the first instance; the rest follow consecutively
        #[arg(long, default_value_t = 1)]
        seed_base: u64,
        /// Worker threads (default: available parallelism)
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: Option<u64>,
        /// Directory receiving one trace CSV per instance
        #[arg(long, value_name = "DIR")]
        out_trace: Option<PathBuf>,
        /// Write the summary and per-instance results as JSON
        #[arg(long, value_name = "PATH")]
        out_report: Option<PathBuf>,
        /// Print one line per instance to stderr
        #[arg(short, long)]
        verbose: bool,
        #[command(flatten)]
        options: OptionFlags,
    },
}

/// Failure classified by exit code.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn exit(self) -> ExitCode {
        let (code, err) = match self {
            Failure::Usage(e) => (EXIT_USAGE, e),
            Failure::Runtime(e) => (EXIT_ERROR, e),
        };
        eprintln!("error: {err:#}");
        ExitCode::from(code)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => f.exit(),
    }
}

fn options(flags: &OptionFlags) -> Result<SolverOptions, Failure> {
    let env = std::env::var_os(DEFAULTS_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    config::resolve(env.as_deref(), flags).map_err(Failure::Usage)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Solve {
            problem,
            seed,
            out_trace,
            out_report,
            verbose,
            options: flags,
        } => {
            let opts = options(&flags)?;
            let problem = problem.with_seed(seed).map_err(|e| Failure::Usage(e.into()))?;
            let p = problem.build().map_err(|e| Failure::Usage(e.into()))?;
            let (report, error) = match solve_from_origin(p.as_ref(), &opts) {
                Ok(r) => (r, None),
                Err(f) => (*f.report, Some(f.error)),
            };
            if verbose {
                report.write_trace_csv(io::stderr().lock()).map_err(|e| Failure::Runtime(e.into()))?;
            }
            write_outputs(&report, out_trace.as_deref(), out_report.as_deref()).map_err(Failure::Runtime)?;
            print_solve_summary(&report);
            match error {
                Some(e) => Err(Failure::Runtime(anyhow::Error::new(e).context("solve aborted"))),
                None if report.status.is_converged() => Ok(EXIT_CONVERGED),
                None => Ok(EXIT_MAX_ITERATIONS),
            }
        }
        Command::Bench {
            n_mat,
            count,
            seed_base,
            jobs,
            out_trace,
            out_report,
            verbose,
            options: flags,
        } => {
            let opts = options(&flags)?;
            if n_mat < 2 {
                return Err(Failure::Usage(anyhow::anyhow!("--n-mat must be at least 2, got {n_mat}")));
            }
            let jobs = jobs.map_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()), |j| j as usize);
            let runs = run_degenerate(n_mat, count as usize, seed_base, &opts, jobs);
            let summary = summarize(n_mat, &runs);
            if verbose {
                for run in &runs {
                    let r = run.report();
                    eprintln!("seed {:>4}  {:<18} iterations {:>4}  r {:.3e}", run.seed, format!("{:?}", r.status), r.iterations, r.final_r);
                }
            }
            for run in &runs {
                if let Err(f) = &run.outcome {
                    eprintln!("error: seed {}: {}", run.seed, f.error);
                }
            }
            if let Some(dir) = &out_trace {
                write_bench_traces(dir, n_mat, &runs).map_err(Failure::Runtime)?;
            }
            if let Some(path) = &out_report {
                write_bench_report(path, &summary, &runs).map_err(Failure::Runtime)?;
            }
            print_bench_table(&summary, seed_base);
            Ok(if summary.failures > 0 { EXIT_ERROR } else { EXIT_CONVERGED })
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_outputs(report: &SolveReport, trace: Option<&Path>, json: Option<&Path>) -> Result<()> {
    if let Some(path) = trace {
        let mut w = create(path)?;
        report.write_trace_csv(&mut w)?;
        w.flush()?;
    }
    if let Some(path) = json {
        let mut w = create(path)?;
        writeln!(w, "{}", report.to_json())?;
        w.flush()?;
    }
    Ok(())
}

fn print_solve_summary(report: &SolveReport) {
    println!("problem     {}", report.problem);
    println!("status      {:?}", report.status);
    println!("iterations  {}", report.iterations);
    println!("r           {:.6e}  (rV {:.3e}, rO {:.3e})", report.final_r, report.final_r_v, report.final_r_o);
    println!("cakkt       {:.6e}", report.final_cakkt);
    println!("|grad F|    {:.6e}", report.final_merit_grad_norm);
    println!("time        {:.3} s", report.wall_time_secs);
}

fn write_bench_traces(dir: &Path, n_mat: usize, runs: &[BenchRun]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for run in runs {
        let path = dir.join(format!("degenerate-{n_mat}-{}.csv", run.seed));
        let mut w = create(&path)?;
        run.report().write_trace_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RunRecord {
    seed: u64,
    status: SolveStatus,
    iterations: usize,
    final_r: f64,
    error: Option<String>,
}

#[derive(Serialize)]
struct BenchReport<'a> {
    summary: &'a BenchSummary,
    runs: Vec<RunRecord>,
}

fn write_bench_report(path: &Path, summary: &BenchSummary, runs: &[BenchRun]) -> Result<()> {
    let records = runs
        .iter()
        .map(|run| {
            let r = run.report();
            RunRecord {
                seed: run.seed,
                status: r.status,
                iterations: r.iterations,
                final_r: r.final_r,
                error: run.outcome.as_ref().err().map(|f| f.error.to_string()),
            }
        })
        .collect();
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &BenchReport { summary, runs: records })?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn print_bench_table(s: &BenchSummary, seed_base: u64) {
    let last = seed_base + s.count as u64 - 1;
    let solved = s.count - s.failures;
    println!("degenerate n_mat = {}, seeds {seed_base}..={last}, {solved} of {} completed", s.n_mat, s.count);
    println!("avg iterations  {:.1}", s.avg_iterations);
    println!("avg r           {:.3e}", s.avg_r);
    println!("max r           {:.3e}", s.max_r);
    println!("min r           {:.3e}", s.min_r);
}
