//! `koopman` command-line driver.

mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use koopman_core::KoopmanError;
use thiserror::Error;

use crate::config::{DictionarySpec, RankSpec, SnapshotFormat, System};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] KoopmanError),
}

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 1 I/O, 2 configuration, 3 input format, 4 numeric failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                KoopmanError::Io(_) => 1,
                KoopmanError::InvalidParameter(_) => 2,
                KoopmanError::Format { .. }
                | KoopmanError::Json(_)
                | KoopmanError::DimensionMismatch(_)
                | KoopmanError::TrajectoryTooShort { .. } => 3,
                _ => 4,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "koopman", version, about = "Koopman spectral analysis from snapshot data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate snapshot pairs from a built-in system.
    Simulate(SimulateArgs),
    /// Train a neural dictionary on snapshot data.
    Train(TrainArgs),
    /// EDMD spectrum with residuals for a fixed or trained dictionary.
    Spectrum(SpectrumArgs),
    /// Scan the residual pseudospectrum over a grid.
    Pseudospec(PseudospecArgs),
    /// Koopman modes of the state observable.
    Modes(ModesArgs),
    /// Time-delay DMD spectrum of a series.
    Hankel(HankelArgs),
    /// Davies-Bouldin index of labelled features.
    Dbi(DbiArgs),
    /// Render a spectrum and pseudospectrum as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub system: Option<System>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n_init: Option<usize>,
    #[arg(long)]
    pub n_steps: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Row-major, rows separated by `;`, e.g. `0.9,0;0,0.5`.
    #[arg(long, allow_hyphen_values = true)]
    pub matrix: Option<String>,
    #[arg(long)]
    pub regimes: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, value_enum)]
    pub format: Option<SnapshotFormat>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Comma-separated widths, e.g. `64,64,64`.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub network_seed: Option<u64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub loss_threshold: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// A row count or `full`.
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k_update_period: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `monomial:DEG`, `rbf:N,BW`, `fourier-hermite:H,F` or `neural:PATH`.
    #[arg(long)]
    pub dictionary: Option<DictionarySpec>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PseudospecArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub dictionary: Option<DictionarySpec>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// `re_min,re_max,im_min,im_max`
    #[arg(long = "box", value_parser = config::parse_box, allow_hyphen_values = true)]
    pub bounds: Option<[f64; 4]>,
    /// `n_re,n_im`
    #[arg(long, value_parser = config::parse_resolution)]
    pub resolution: Option<[usize; 2]>,
}

#[derive(Debug, Args)]
pub struct ModesArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the matching spectrum here.
    #[arg(long)]
    pub spectrum_out: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub dictionary: Option<DictionarySpec>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub svd_rank: Option<usize>,
}

#[derive(Debug, Args)]
pub struct HankelArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub series: Option<PathBuf>,
    #[arg(long)]
    pub delay: Option<usize>,
    /// `full` or a positive integer.
    #[arg(long)]
    pub rank: Option<RankSpec>,
    #[arg(long)]
    pub trial: Option<i64>,
}

#[derive(Debug, Args)]
pub struct DbiArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub exclude: Option<Vec<String>>,
    /// Write `{"dbi": ...}` here as well as printing it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub spectrum: Option<PathBuf>,
    #[arg(long)]
    pub pseudospectrum: Option<PathBuf>,
    #[arg(long)]
    pub size: Option<u32>,
    #[arg(long)]
    pub title: Option<String>,
}

fn apply_thread_limit() -> Result<(), CliError> {
    match std::env::var("KOOPMAN_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                koopman_core::limit_parallelism(n);
                Ok(())
            }
            _ => Err(CliError::Config(format!("KOOPMAN_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    apply_thread_limit()?;
    match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Train(a) => commands::train(a),
        Command::Spectrum(a) => commands::spectrum(a),
        Command::Pseudospec(a) => commands::pseudospec(a),
        Command::Modes(a) => commands::modes(a),
        Command::Hankel(a) => commands::hankel(a),
        Command::Dbi(a) => commands::dbi(a),
        Command::Plot(a) => commands::plot(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("koopman: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
