//! Solver options from defaults, an optional TOML file named by
//! `SQSDP_DEFAULTS`, and command-line flags, in increasing precedence.

use std::path::Path;

use anyhow::{Context, Result};
use clap::Args;

use sqsdp::SolverOptions;

pub const DEFAULTS_ENV: &str = "SQSDP_DEFAULTS";

#[derive(Args, Clone, Debug, Default)]
pub struct OptionFlags {
    /// Iteration budget
    #[arg(long, value_name = "N")]
    pub k_max: Option<usize>,
    /// Stopping tolerance on the KKT measure and on gamma
    #[arg(long, value_name = "TOL")]
    pub epsilon: Option<f64>,
    /// Initial penalty parameter
    #[arg(long, value_name = "SIGMA")]
    pub sigma0: Option<f64>,
    /// Initial merit-gradient threshold
    #[arg(long, value_name = "GAMMA")]
    pub gamma0: Option<f64>,
}

/// Parses a TOML table whose keys are `SolverOptions` fields. Missing keys
/// keep their defaults; unknown keys are an error.
pub fn parse_options(text: &str) -> Result<SolverOptions> {
    Ok(toml::from_str(text)?)
}

pub fn load_file(path: &Path) -> Result<SolverOptions> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_options(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Builds the effective options. `env_path` is the value of `SQSDP_DEFAULTS`,
/// if set.
pub fn resolve(env_path: Option<&Path>, flags: &OptionFlags) -> Result<SolverOptions> {
    let mut opts = match env_path {
        Some(path) => load_file(path)?,
        None => SolverOptions::default(),
    };
    if let Some(v) = flags.k_max {
        opts.k_max = v;
    }
    if let Some(v) = flags.epsilon {
        opts.epsilon = v;
    }
    if let Some(v) = flags.sigma0 {
        opts.sigma0 = v;
    }
    if let Some(v) = flags.gamma0 {
        opts.gamma0 = v;
    }
    opts.validate()?;
    Ok(opts)
}
