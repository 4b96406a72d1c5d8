//! Reports, sweeps and the CLI back end.

pub mod report;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use report::{compare_chainlink, comparison_csv, ComparisonRow, CostReport, CostRow};

use crate::config::{max_faults, ConfigError, ScenarioConfig, ThresholdRule};
use crate::netsim::{resolve_script, run_scenario, RunResult};
use crate::participants::world::SetupError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("setup failed: {0}")]
    Setup(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("report error: {0}")]
    Report(String),
    #[error("invariant violated: {0}")]
    Violation(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Violation(_) => EXIT_VIOLATION,
            _ => EXIT_CONFIG,
        }
    }
}

impl From<SetupError> for HarnessError {
    fn from(e: SetupError) -> Self {
        match e {
            SetupError::Config(c) => Self::Config(c),
            other => Self::Setup(other.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(ScenarioConfig::from_toml(&text)?)
}

pub fn run_config(config: &ScenarioConfig) -> Result<RunResult, HarnessError> {
    let script = resolve_script(config)?;
    Ok(run_scenario(config, &script)?)
}

/// Human-readable outcome of one run.
pub fn summary(r: &RunResult) -> String {
    let w = &r.world;
    let c = &r.trace.config;
    let mut s = String::new();
    let _ = writeln!(s, "scenario n={} t={} f={} m={} datum={}B seed={}", c.n, c.t, c.f, c.m, c.datum_size_bytes, c.seed);
    let _ = writeln!(s, "adversary {}", r.trace.script.name);
    let _ = writeln!(s, "contract calls {}", r.outcome.contract_calls);
    let _ = writeln!(s, "total gas {}", r.outcome.total_gas);
    let _ = writeln!(s, "key sessions {}", r.outcome.key_sessions);
    let _ = writeln!(s, "reconstructed {}/{}", r.outcome.reconstructed, c.m);
    let _ = writeln!(s, "blocks {}{}", r.outcome.blocks, if r.outcome.stalled { " (stalled)" } else { "" });
    let _ = writeln!(s, "provider income {}", r.monitor.provider_income);
    let _ = writeln!(s, "consumer refunds {}", r.monitor.consumer_refunds);
    if !r.monitor.challenge_refunds.is_empty() {
        let nodes: Vec<String> = r.monitor.challenge_refunds.iter().map(u32::to_string).collect();
        let _ = writeln!(s, "refunded nodes {}", nodes.join(","));
    }
    for ch in &w.consumer.challenges {
        let outcome = match &ch.outcome {
            Ok(o) => format!("{o:?}"),
            Err(e) => format!("failed: {e}"),
        };
        let _ = writeln!(s, "challenge case {} at block {}: {outcome}", ch.case, ch.block);
    }
    let _ = writeln!(s, "coalition peak {}", r.monitor.coalition_peak());
    if r.monitor.violations.is_empty() {
        let _ = writeln!(s, "invariants ok");
    }
    for v in &r.monitor.violations {
        let _ = writeln!(s, "VIOLATION {}: {}", v.check, v.detail);
    }
    s
}

/// Files written by [`run_to_dir`].
pub struct RunFiles {
    pub trace: PathBuf,
    pub gas_csv: PathBuf,
    pub summary: PathBuf,
}

/// Runs a config and writes `trace.txt`, `gas.csv` and `summary.txt` into
/// `out`. Returns the summary text; an invariant violation is an error after
/// the files are written.
pub fn run_to_dir(config: &ScenarioConfig, out: &Path) -> Result<(String, RunFiles), HarnessError> {
    let r = run_config(config)?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let files =
        RunFiles { trace: out.join("trace.txt"), gas_csv: out.join("gas.csv"), summary: out.join("summary.txt") };
    let text = summary(&r);
    std::fs::write(&files.trace, r.trace.render()).map_err(io_err(&files.trace))?;
    std::fs::write(&files.gas_csv, r.world.ledger.gas_csv()).map_err(io_err(&files.gas_csv))?;
    std::fs::write(&files.summary, &text).map_err(io_err(&files.summary))?;
    if let Some(v) = r.monitor.violations.first() {
        return Err(HarnessError::Violation(format!("{}: {}", v.check, v.detail)));
    }
    Ok((text, files))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    N,
    T,
    F,
    M,
    DatumSize,
    Seed,
}

impl std::str::FromStr for Axis {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Ok(match s {
            "n" | "N" => Self::N,
            "t" => Self::T,
            "f" | "F" => Self::F,
            "m" | "M" => Self::M,
            "datum_size_bytes" | "datum_size" => Self::DatumSize,
            "seed" => Self::Seed,
            _ => return Err(ConfigError::Invalid(format!("unknown sweep axis {s:?}"))),
        })
    }
}

/// Parses `1,5,20`, `5..50` (inclusive) or a mix of both.
pub fn parse_values(s: &str) -> Result<Vec<u64>, ConfigError> {
    let bad = || ConfigError::Invalid(format!("bad value list {s:?}"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

/// Derives one config per value. With a threshold rule, `t` follows `n` and
/// `f` is the largest admissible fault count.
pub fn derive_configs(
    base: &ScenarioConfig,
    axis: Axis,
    values: &[u64],
    rule: Option<ThresholdRule>,
) -> Result<Vec<ScenarioConfig>, ConfigError> {
    values
        .iter()
        .map(|&v| {
            let mut c = base.clone();
            let u = v as usize;
            match axis {
                Axis::N => c.n = u,
                Axis::T => c.t = u,
                Axis::F => c.f = u,
                Axis::M => c.m = u,
                Axis::DatumSize => c.datum_size_bytes = u,
                Axis::Seed => c.seed = v,
            }
            if let Some(rule) = rule {
                c.t = rule.threshold(c.n);
                c.f = max_faults(c.n, c.t);
            }
            if axis == Axis::N && base.price.is_some() {
                c.price = Some(base.price() / base.n as u64 * c.n as u64);
            }
            c.validate()?;
            Ok(c)
        })
        .collect()
}

fn label(c: &ScenarioConfig) -> String {
    format!("n={} t={} f={} m={} datum={}B", c.n, c.t, c.f, c.m, c.datum_size_bytes)
}

/// Runs every config, in parallel, and returns rows in input order.
pub fn run_all(configs: &[ScenarioConfig]) -> Result<CostReport, HarnessError> {
    let workers = std::thread::available_parallelism().map_or(1, |p| p.get()).min(configs.len().max(1));
    let chunk = configs.len().div_ceil(workers).max(1);
    let results: Vec<Result<Vec<CostRow>, HarnessError>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|c| {
                            let r = run_config(c)?;
                            Ok(CostRow::from_world(label(c), &r.world, r.monitor.violations.len()))
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let mut rows = Vec::with_capacity(configs.len());
    for part in results {
        rows.extend(part?);
    }
    Ok(CostReport { rows })
}

pub fn sweep(
    base: &ScenarioConfig,
    axis: Axis,
    values: &[u64],
    rule: Option<ThresholdRule>,
) -> Result<CostReport, HarnessError> {
    run_all(&derive_configs(base, axis, values, rule)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_lists() {
        assert_eq!(parse_values("1,5,20").unwrap(), [1, 5, 20]);
        assert_eq!(parse_values("3..5, 9").unwrap(), [3, 4, 5, 9]);
        assert!(parse_values("5..3").is_err());
        assert!(parse_values("").is_err());
        assert!(parse_values("a").is_err());
    }

    #[test]
    fn threshold_rule_drives_t_and_f() {
        let base = ScenarioConfig::new(5, 3, 2, 1);
        let cs = derive_configs(&base, Axis::N, &[6, 9], Some(ThresholdRule::TwoThirds)).unwrap();
        assert_eq!((cs[0].n, cs[0].t, cs[0].f), (6, 4, 2));
        assert_eq!((cs[1].n, cs[1].t, cs[1].f), (9, 6, 3));
    }

    #[test]
    fn invalid_derived_config_is_rejected() {
        let base = ScenarioConfig::new(5, 3, 2, 1);
        assert!(derive_configs(&base, Axis::T, &[5], None).is_err());
    }

    #[test]
    fn sweep_rows_follow_input_order() {
        let base = ScenarioConfig::new(5, 3, 2, 1);
        let report = sweep(&base, Axis::M, &[3, 1, 2], None).unwrap();
        let ms: Vec<usize> = report.rows.iter().map(|r| r.m).collect();
        assert_eq!(ms, [3, 1, 2]);
        assert!(report.rows.iter().all(|r| r.total_calls == 26));
    }
}
