use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dexo::config::ThresholdRule;
use dexo::harness::{self, Axis, CostReport, HarnessError, EXIT_CONFIG, EXIT_OK, EXIT_VIOLATION};
use dexo::netsim::replay_text;

#[derive(Parser)]
#[command(name = "dexo", about = "Run and measure simulated DEXO data exchanges")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario; writes trace.txt, gas.csv and summary.txt.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Sweep one parameter and write a cost report CSV.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: String,
        /// Comma-separated values and inclusive ranges, e.g. `1,5,20` or `5..50`.
        #[arg(long)]
        values: String,
        /// Derive t from n (and f as the largest admissible value).
        #[arg(long, value_enum)]
        t_rule: Option<TRule>,
        /// Report path; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Add Chainlink comparison columns to a cost report.
    Compare {
        report: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-execute a trace and check it matches byte for byte.
    Replay { trace: PathBuf },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum TRule {
    Half,
    TwoThirds,
}

impl From<TRule> for ThresholdRule {
    fn from(r: TRule) -> Self {
        match r {
            TRule::Half => ThresholdRule::Half,
            TRule::TwoThirds => ThresholdRule::TwoThirds,
        }
    }
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), HarnessError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|source| HarnessError::Io { path: p.to_path_buf(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn exec(cmd: Cmd) -> Result<i32, HarnessError> {
    match cmd {
        Cmd::Run { config, out } => {
            let cfg = harness::load_config(&config)?;
            let (text, files) = harness::run_to_dir(&cfg, &out)?;
            print!("{text}");
            eprintln!("wrote {} {} {}", files.trace.display(), files.gas_csv.display(), files.summary.display());
            Ok(EXIT_OK)
        }
        Cmd::Sweep { config, axis, values, t_rule, out } => {
            let cfg = harness::load_config(&config)?;
            let axis: Axis = axis.parse()?;
            let values = harness::parse_values(&values)?;
            let report = harness::sweep(&cfg, axis, &values, t_rule.map(Into::into))?;
            emit(out.as_deref(), &report.to_csv())?;
            if report.violations() > 0 {
                return Err(HarnessError::Violation(format!("{} violations across the sweep", report.violations())));
            }
            Ok(EXIT_OK)
        }
        Cmd::Compare { report, out } => {
            let report = CostReport::from_csv(&read(&report)?).map_err(|e| HarnessError::Report(e.to_string()))?;
            if report.rows.is_empty() {
                return Err(HarnessError::Report("report has no rows".into()));
            }
            emit(out.as_deref(), &harness::comparison_csv(&harness::compare_chainlink(&report)))?;
            Ok(EXIT_OK)
        }
        Cmd::Replay { trace } => match replay_text(&read(&trace)?) {
            Ok(true) => {
                println!("replay identical");
                Ok(EXIT_OK)
            }
            Ok(false) => Err(HarnessError::Violation("replay diverged from the recorded trace".into())),
            Err(e) => Err(HarnessError::Report(e.to_string())),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match exec(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    debug_assert!([EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION].contains(&code));
    ExitCode::from(code as u8)
}
