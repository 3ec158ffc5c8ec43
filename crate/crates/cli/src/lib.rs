//! Batch front end for the two-stage enhancement pipeline.
//!
//! Every command works on a dataset directory with one subdirectory per
//! mixture (as written by `simulate`) and a work directory that collects
//! the per-mixture products of the later stages:
//!
//! | stage             | writes (per mixture)                 |
//! |-------------------|--------------------------------------|
//! | `aec`             | `e.wav`, `dhat.wav`, `trace.spxc`    |
//! | `export-features` | `features.spxc`                      |
//! | `oracle`          | `net.spxc`                           |
//! | `enhance`         | `enhanced.wav`                       |
//! | `eval`            | one JSON report for the corpus       |

mod commands;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    ablate, aec, enhance, eval, export_features, oracle, set_dir_name, simulate, AblateReport, AblateRow,
    NetSource,
};

/// Output file names inside a per-mixture work directory.
pub mod files {
    pub const E: &str = "e.wav";
    pub const DHAT: &str = "dhat.wav";
    pub const TRACE: &str = "trace.spxc";
    pub const FEATURES: &str = "features.spxc";
    pub const NET: &str = "net.spxc";
    pub const ENHANCED: &str = "enhanced.wav";
    pub const REPORT: &str = "report.json";
}

#[derive(Debug, Parser)]
#[command(name = "hse", version, about = "Kalman echo cancellation with a spectral postfilter")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Default seed for manifest entries without their own.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for utterance-level parallelism (0: all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// JSON file overriding the default pipeline configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset directory written by `simulate`.
    #[arg(long)]
    pub data: PathBuf,
    /// Directory for stage outputs [default: the dataset directory].
    #[arg(long)]
    pub work: Option<PathBuf>,
}

impl DataArgs {
    pub fn work_dir(&self) -> PathBuf {
        self.work.clone().unwrap_or_else(|| self.data.clone())
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a JSON-lines manifest into a dataset.
    Simulate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the Kalman echo canceller on every mixture.
    Aec {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Write second-stage input spectra.
    ExportFeatures {
        #[command(flatten)]
        data: DataArgs,
        /// Inputs such as `Y,Dhat,E`; must contain E.
        #[arg(long)]
        inputs: Option<String>,
    },
    /// Write oracle network outputs (zero, identity or wiener).
    Oracle {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "wiener")]
        kind: String,
        /// OutE or OutM.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Apply network outputs to the AEC output.
    Enhance {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        mode: Option<String>,
        /// Network output file name inside each work subdirectory.
        #[arg(long, default_value = files::NET)]
        net: String,
    },
    /// Measure ERLE, ΔSNR and PESQ and write a JSON report.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long, default_value = files::NET)]
        net: String,
        /// PESQ executable [default: $HSE_PESQ].
        #[arg(long)]
        pesq: Option<PathBuf>,
        /// Report path [default: <work>/report.json].
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate several input sets and tabulate the results.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        mode: Option<String>,
        /// Input set (repeatable), or `all` for every set containing E.
        #[arg(long = "set", required = true)]
        sets: Vec<String>,
        /// Directory holding `<set>/<mixture>/net.spxc`, with `<set>`
        /// written like `Y_Dhat_E` [default: <work>/ablate].
        #[arg(long)]
        net_root: Option<PathBuf>,
        /// Use an oracle instead of stored network outputs.
        #[arg(long)]
        oracle: Option<String>,
        #[arg(long)]
        pesq: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

/// How a command ended when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Some items of a batch failed; the rest were processed.
    Partial { failed: usize, total: usize },
}

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration.
    Usage(String),
    /// Unreadable, missing or inconsistent data.
    Data(anyhow::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

impl From<hse_core::Error> for CliError {
    fn from(e: hse_core::Error) -> Self {
        CliError::Data(e.into())
    }
}

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

pub fn exit_code(result: &Result<Outcome, CliError>) -> i32 {
    match result {
        Ok(Outcome::Success) => EXIT_SUCCESS,
        Ok(Outcome::Partial { .. }) => EXIT_PARTIAL,
        Err(CliError::Usage(_)) => EXIT_USAGE,
        Err(CliError::Data(_)) => EXIT_DATA,
    }
}

/// Runs a parsed command line inside a worker pool of the requested size.
pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", cli.global.workers)))?;
    pool.install(|| commands::dispatch(&cli.global, cli.command))
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_SUCCESS };
            let _ = e.print();
            return code;
        }
    };
    let result = run(cli);
    match &result {
        Ok(Outcome::Partial { failed, total }) => {
            eprintln!("{failed} of {total} items failed");
        }
        Err(e) => eprintln!("{e}"),
        Ok(Outcome::Success) => {}
    }
    exit_code(&result)
}
