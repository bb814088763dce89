//! Problem selectors: `no-kkt`, `degenerate:N[:SEED]`, `random:N:M:D[:SEED]`.

use std::fmt;
use std::str::FromStr;

use sqsdp::corpus::{problem_degenerate, problem_no_kkt, problem_random_smooth};
use sqsdp::NsdpProblem;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemSelector {
    NoKkt,
    Degenerate { n_mat: usize, seed: Option<u64> },
    Random { n: usize, m: usize, d: usize, seed: Option<u64> },
}

#[derive(Debug, PartialEq, Eq)]
pub struct SelectorError(String);

impl fmt::Display for SelectorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}; expected no-kkt, degenerate:N[:SEED] or random:N:M:D[:SEED]",
            self.0
        )
    }
}

impl std::error::Error for SelectorError {}

fn number<T: FromStr>(field: &str, raw: &str) -> Result<T, SelectorError> {
    raw.parse()
        .map_err(|_| SelectorError(format!("{field} must be a non-negative integer, got {raw:?}")))
}

impl FromStr for ProblemSelector {
    type Err = SelectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["no-kkt"] => Ok(Self::NoKkt),
            ["degenerate", n] | ["degenerate", n, _] => {
                let n_mat = number("n_mat", n)?;
                if n_mat < 2 {
                    return Err(SelectorError(format!("n_mat must be at least 2, got {n_mat}")));
                }
                let seed = parts.get(2).map(|v| number("seed", v)).transpose()?;
                Ok(Self::Degenerate { n_mat, seed })
            }
            ["random", n, m, d] | ["random", n, m, d, _] => {
                let (n, m, d) = (number("n", n)?, number("m", m)?, number("d", d)?);
                if n == 0 || d == 0 || m > n {
                    return Err(SelectorError(format!(
                        "random instances need n >= 1, d >= 1 and m <= n, got {n}:{m}:{d}"
                    )));
                }
                let seed = parts.get(4).map(|v| number("seed", v)).transpose()?;
                Ok(Self::Random { n, m, d, seed })
            }
            _ => Err(SelectorError(format!("unrecognised problem {s:?}"))),
        }
    }
}

impl ProblemSelector {
    /// Fills in the seed from `--seed`. Giving a seed in both places is
    /// ambiguous and rejected.
    pub fn with_seed(self, flag: Option<u64>) -> Result<Self, SelectorError> {
        let merge = |own: Option<u64>| match (own, flag) {
            (Some(_), Some(_)) => Err(SelectorError("seed given both in the selector and by --seed".into())),
            (own, flag) => Ok(Some(own.or(flag).unwrap_or(1))),
        };
        Ok(match self {
            Self::NoKkt => {
                if flag.is_some() {
                    return Err(SelectorError("no-kkt takes no seed".into()));
                }
                Self::NoKkt
            }
            Self::Degenerate { n_mat, seed } => Self::Degenerate {
                n_mat,
                seed: merge(seed)?,
            },
            Self::Random { n, m, d, seed } => Self::Random {
                n,
                m,
                d,
                seed: merge(seed)?,
            },
        })
    }

    pub fn build(self) -> sqsdp::Result<Box<dyn NsdpProblem>> {
        Ok(match self {
            Self::NoKkt => Box::new(problem_no_kkt()),
            Self::Degenerate { n_mat, seed } => Box::new(problem_degenerate(n_mat, seed.unwrap_or(1))?),
            Self::Random { n, m, d, seed } => Box::new(problem_random_smooth(n, m, d, seed.unwrap_or(1))?),
        })
    }
}
