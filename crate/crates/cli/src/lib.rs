//! Command-line driver: phantom → acquisition → reconstruction → patches →
//! training → inference → baselines → evaluation, from one JSON config.

pub mod config;
pub mod stages;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tempoflow_core::baselines::Interpolation;

use crate::config::ExperimentConfig;
use crate::stages::Context;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "tempoflow",
    version,
    about = "Temporal super-resolution experiments for synthetic flow MRI"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON experiment config; defaults apply to anything it omits
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// output root
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// overrides the config's seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// worker threads; falls back to TEMPOFLOW_THREADS
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// override a config leaf, e.g. `--set acquisition.snr_db_range=[14,17]`
    #[arg(long = "set", global = true, value_name = "PATH=JSON")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineChoice {
    Linear,
    Sinc,
    Both,
}

impl BaselineChoice {
    fn methods(self) -> Vec<Interpolation> {
        match self {
            BaselineChoice::Linear => vec![Interpolation::Linear],
            BaselineChoice::Sinc => vec![Interpolation::Sinc],
            BaselineChoice::Both => vec![Interpolation::Linear, Interpolation::Sinc],
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate phantoms into high- and low-rate truth fields
    Phantom,
    /// Simulate the multi-coil undersampled acquisition
    Acquire,
    /// Compressed-sensing reconstruction of the acquired k-space
    Recon,
    /// Extract train, validation and test patch sets
    Patches,
    /// Train the network
    Train,
    /// Super-resolve the test reconstructions
    Infer {
        /// model container; defaults to `<out>/model.f4d`
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Temporal interpolation baselines
    Baseline {
        #[arg(long, value_enum, default_value = "both")]
        method: BaselineChoice,
    },
    /// Metric tables, regression series and plane flow curves
    Evaluate {
        /// field to score as `sr`; defaults to `<out>/sr/<case>.f4d`
        #[arg(long)]
        sr: Option<PathBuf>,
    },
    /// Every stage in order
    Pipeline,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Phantom => "phantom",
            Command::Acquire => "acquire",
            Command::Recon => "recon",
            Command::Patches => "patches",
            Command::Train => "train",
            Command::Infer { .. } => "infer",
            Command::Baseline { .. } => "baseline",
            Command::Evaluate { .. } => "evaluate",
            Command::Pipeline => "pipeline",
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, String> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("TEMPOFLOW_THREADS") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("TEMPOFLOW_THREADS must be a positive integer, got `{s}`")),
        Err(_) => Ok(None),
    }
}

/// Parse `args` (program name first), run the subcommand and return the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let threads = match thread_count(cli.common.threads) {
        Ok(Some(0)) => {
            eprintln!("error: thread count must be at least 1");
            return EXIT_USAGE;
        }
        Ok(t) => t,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_USAGE;
        }
    };
    if let Some(n) = threads {
        // fails only if a pool already exists in this process
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_err()
        {
            log::warn!("thread pool already initialised; --threads {n} ignored");
        }
    }
    let cfg = match ExperimentConfig::load(
        cli.common.config.as_deref(),
        &cli.common.overrides,
        cli.common.seed,
    ) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let ctx = Context::new(cfg, cli.common.out.clone());
    println!("{}", ctx.provenance_line(cli.command.name()));
    let result = match &cli.command {
        Command::Phantom => stages::phantom(&ctx),
        Command::Acquire => stages::acquire(&ctx),
        Command::Recon => stages::recon(&ctx),
        Command::Patches => stages::patches(&ctx),
        Command::Train => stages::train_stage(&ctx),
        Command::Infer { model } => stages::infer(&ctx, model.as_deref()),
        Command::Baseline { method } => stages::baseline(&ctx, &method.methods()),
        Command::Evaluate { sr } => stages::evaluate(&ctx, sr.as_deref()),
        Command::Pipeline => stages::pipeline(&ctx),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}
