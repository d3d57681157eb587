//! `riskgrad` command-line interface.

mod commands;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{ConfigError, RunConfig};
use crate::refine::RefineMode;

pub const EXIT_OK: i32 = 0;
pub const EXIT_SELFTEST: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_ALL_FAILED: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "riskgrad",
    version,
    about = "Risk-distribution scoring and risk-guided prompt refinement"
)]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override a config value by dotted path; repeatable, applied in order.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads for per-example work (overrides `jobs`).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    FineGrained,
    Coarse,
}

impl From<ModeArg> for RefineMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::FineGrained => RefineMode::FineGrained,
            ModeArg::Coarse => RefineMode::Coarse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    Digamma,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on `paths.dataset`; writes the checkpoint and per-epoch stats.
    Train,
    /// Score a JSONL file of {id, prompt, response}; emits {id, d, d_prime} lines.
    Score {
        #[arg(long)]
        input: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Refine every prompt of a JSONL file; emits one trace per prompt.
    Refine {
        #[arg(long)]
        input: PathBuf,
        /// Defaults to `<output_dir>/traces.json`, else stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Overrides `refine.mode`.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// FPR / detection over thresholds, from scored or labeled JSONL.
    Sweep {
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated, strictly increasing [default: 0.3,0.5,0.7].
        #[arg(long, value_delimiter = ',')]
        taus: Option<Vec<f64>>,
    },
    /// Ask the judge backend for safety / helpfulness / naturalness scores.
    Judge {
        #[arg(long)]
        input: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the built-in numerical checks.
    Selftest {
        #[arg(long, hide = true, value_enum)]
        inject_fault: Option<Fault>,
    },
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(e: impl fmt::Display) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }
    }

    pub fn data(e: impl fmt::Display) -> Self {
        Self {
            code: EXIT_DATA,
            message: e.to_string(),
        }
    }

    pub fn numeric(e: impl fmt::Display) -> Self {
        Self {
            code: EXIT_NUMERIC,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::config(e)
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    if let Command::Selftest { inject_fault } = cli.command {
        return Ok(commands::selftest(inject_fault));
    }
    let mut config = RunConfig::resolve(cli.config.as_deref(), &cli.overrides)?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::config("--jobs must be at least 1"));
        }
        config.jobs = jobs;
    }
    match cli.command {
        Command::Train => commands::train(&config),
        Command::Score { input, output } => commands::score(&config, &input, output.as_deref()),
        Command::Refine {
            input,
            output,
            mode,
        } => {
            if let Some(mode) = mode {
                config.refine.mode = mode.into();
            }
            commands::refine(&config, &input, output.as_deref())
        }
        Command::Sweep { input, taus } => commands::sweep(&config, &input, taus.as_deref()),
        Command::Judge { input, output } => commands::judge(&config, &input, output.as_deref()),
        Command::Selftest { .. } => unreachable!("handled above"),
    }
}
