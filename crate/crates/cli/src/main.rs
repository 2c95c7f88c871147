//! `listrecon`: simulate, reconstruct, train, evaluate and benchmark.

mod bench;
mod config;
mod error;
mod eval;
mod recon;
mod sidecar;
mod simulate;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "listrecon",
    version,
    about = "TOF-PET list-mode simulation and reconstruction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to LISTRECON_THREADS.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a phantom and write its list-mode events.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Reconstruct an event file.
    Recon {
        #[command(flatten)]
        common: Common,
        /// Event file written by `simulate`.
        #[arg(long)]
        events: PathBuf,
        /// Overrides the configured algorithm.
        #[arg(long)]
        algorithm: Option<String>,
        /// Overrides the configured network checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Ground truth for per-iteration PSNR and SSIM.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Train the unrolled network on a directory of simulated pairs.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory whose subdirectories each hold a `simulate` output.
        #[arg(long)]
        dataset: PathBuf,
        /// Continue from the training state in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Image-quality metrics of reconstructions against the truth.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        truth: PathBuf,
        /// One image per noise realization.
        #[arg(long, num_args = 1.., required = true)]
        images: Vec<PathBuf>,
    },
    /// Time forward and back projection at several thread counts.
    Bench {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Self::Simulate { common }
            | Self::Recon { common, .. }
            | Self::Train { common, .. }
            | Self::Eval { common, .. }
            | Self::Bench { common } => common,
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("LISTRECON_THREADS") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            CliError::Config(format!(
                "LISTRECON_THREADS must be a positive integer, got '{v}'"
            ))
        }),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = cli.command.common();
    if let Some(n) = thread_count(common.threads)? {
        if n == 0 {
            return Err(CliError::Config("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    let config = Config::load(&common.config)?;
    std::fs::create_dir_all(&common.out)
        .map_err(|e| CliError::Io(format!("{}: {e}", common.out.display())))?;
    match &cli.command {
        Command::Simulate { common } => simulate::run(&config, common.seed, &common.out),
        Command::Recon {
            common,
            events,
            algorithm,
            checkpoint,
            truth,
        } => recon::run(
            &config,
            &recon::Inputs {
                events,
                algorithm: algorithm.as_deref(),
                checkpoint: checkpoint.as_deref(),
                truth: truth.as_deref(),
                seed: common.seed,
            },
            &common.out,
        ),
        Command::Train {
            common,
            dataset,
            resume,
        } => train::run(&config, common.seed, dataset, *resume, &common.out),
        Command::Eval {
            common,
            truth,
            images,
        } => eval::run(&config, common.seed, truth, images, &common.out),
        Command::Bench { common } => bench::run(&config, common.seed, &common.out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
