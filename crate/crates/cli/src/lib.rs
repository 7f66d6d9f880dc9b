//! Command implementations behind the `wdrn` binary.
//!
//! Every command returns `Ok(())` on success or a [`CliError`] whose
//! [`CliError::exit_code`] is 1 for runtime and data failures and 2 for
//! usage or configuration mistakes.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod ablate;
mod eval;
mod gradcheck;
mod infer;
mod train;

pub use ablate::{ablate, run_ablation, AblationRow, ABLATION_HEADER};
pub use eval::{eval, evaluate_dirs, read_lpips, EvalReport};
pub use gradcheck::gradcheck;
pub use infer::{infer, infer_dir, InferReport};
pub use train::{resolve_train_config, train, TrainSetup};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] wdrn::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    /// Some items failed; the rest were processed.
    #[error("{0}")]
    Partial(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use wdrn::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(E::Config(_) | E::ConfigFile { .. } | E::MissingKey(_)) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "wdrn", version, about = "Wavelet-decomposed relighting network")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write checkpoint, log and summary to `--out`.
    Train(TrainArgs),
    /// Relight every PNG in a directory.
    Infer(InferArgs),
    /// Compare predictions against ground truth.
    Eval(EvalArgs),
    /// Train architectural variants under one seed and budget.
    Ablate(AblateArgs),
    /// Check every backward pass against finite differences.
    Gradcheck(GradcheckArgs),
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Train(a) => train(&a),
        Command::Infer(a) => infer(&a),
        Command::Eval(a) => eval(&a),
        Command::Ablate(a) => ablate(&a),
        Command::Gradcheck(a) => gradcheck(&a),
    }
}

/// Flags override values from `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    /// Flat `key = value` file; must define epochs, batch_size and lr.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset root with `input/` and `target/` PNG directories.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub data: Option<PathBuf>,
    /// Generate this many synthetic pairs instead of reading `--data`.
    #[arg(long)]
    pub synthetic: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub levels: Option<usize>,
    /// `wavelet` or `strided`.
    #[arg(long)]
    pub domain: Option<String>,
    /// Channel multiplier such as `1/4`.
    #[arg(long)]
    pub width_scale: Option<String>,
    /// Side length of synthetic images.
    #[arg(long)]
    pub size: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// CSV of `name,lpips` scores; enables the MPS column.
    #[arg(long)]
    pub lpips: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    /// Wavelet against strided-convolution resampling.
    Domain,
    /// Two, three and four decomposition levels.
    Levels,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[arg(long, value_enum)]
    pub which: Ablation,
    /// Number of synthetic pairs; a quarter is held out for scoring.
    #[arg(long, default_value_t = 8)]
    pub synthetic: usize,
    /// Optimizer steps per variant.
    #[arg(long, default_value_t = 100)]
    pub steps: u64,
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value = "1/8")]
    pub width_scale: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 2)]
    pub batch_size: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = wdrn::verify::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
    /// Corrupt one op's backward pass (negative control).
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

fn create_output(path: Option<&std::path::Path>) -> CliResult<Box<dyn std::io::Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            Box::new(std::io::BufWriter::new(std::fs::File::create(p)?))
        }
        None => Box::new(std::io::stdout().lock()),
    })
}
