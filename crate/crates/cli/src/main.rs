//! drivescope: decide whether a monitored vehicle is human-driven or
//! autonomous from its kinematic state and camera detections.
//!
//! Exit codes: 0 on success, 2 for configuration mistakes (bad flags,
//! impossible grids, missing required options), 1 for runtime failures
//! (I/O, unusable data, training collapse). Given the same config and
//! seed, every report is reproduced byte for byte.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use drivescope_core::Result;

use crate::config::{pick, pick_opt, FileConfig, DEFAULT_SEED};

#[derive(Parser, Debug)]
#[command(name = "drivescope", version, about = "Driver-type analysis toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON config file; command-line flags override its values
    #[arg(long, global = true, env = "DRIVESCOPE_CONFIG")]
    config: Option<PathBuf>,

    /// Master seed driving all randomness
    #[arg(long, global = true, env = "DRIVESCOPE_SEED")]
    seed: Option<u64>,

    /// Worker threads (defaults to all cores; result bytes do not
    /// depend on this)
    #[arg(long, global = true, env = "DRIVESCOPE_JOBS")]
    jobs: Option<usize>,

    /// Directory reports and generated data are written to
    #[arg(long, global = true, env = "DRIVESCOPE_OUT")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labelled synthetic scene corpus
    Synth(commands::SynthArgs),
    /// Normalize an external scene archive into the canonical layout
    Ingest(commands::IngestArgs),
    /// Pick the target's box per frame from raw detector output
    Detect(commands::DetectArgs),
    /// Train and evaluate driver-type classifiers
    Classify(commands::ClassifyArgs),
    /// Score classifiers under test-time state masking
    Degrade(commands::DegradeArgs),
    /// Sweep history/future horizons for state forecasting
    Autoregress(commands::AutoregressArgs),
}

fn run(cli: &Cli) -> Result<()> {
    let file = FileConfig::load(cli.common.config.as_deref())?;
    let seed = pick(cli.common.seed, file.seed, DEFAULT_SEED);
    let out = pick(cli.common.out.clone(), file.out.clone(), PathBuf::from("out"));

    // Workers only affect wall time, never results; 0 means "all cores".
    let jobs = pick_opt(cli.common.jobs, file.jobs).unwrap_or(0);
    let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();

    match &cli.command {
        Command::Synth(args) => commands::cmd_synth(args, &file, seed, &out),
        Command::Ingest(args) => commands::cmd_ingest(args, &file, seed, &out),
        Command::Detect(args) => commands::cmd_detect(args, &file, seed, &out),
        Command::Classify(args) => commands::cmd_classify(args, &file, seed, &out),
        Command::Degrade(args) => commands::cmd_degrade(args, &file, seed, &out),
        Command::Autoregress(args) => commands::cmd_autoregress(args, &file, seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
