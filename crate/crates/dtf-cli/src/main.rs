//! `dtf`: deep temporal fusion of scene flow from the command line.
//!
//! Subcommands: `generate` (synthetic datasets), `train-inverter`
//! (pretraining), `train` (end-to-end fine-tuning), `fuse` (inference),
//! `eval` (metrics and visualizations).
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "dtf", version, about = "Deep temporal fusion of scene flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Run configuration file (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the config's global seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with ground truth and occlusion masks.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Pretrain the motion inverter on ground-truth field pairs.
    TrainInverter {
        #[command(flatten)]
        common: CommonArgs,
        /// Resume from the out directory's last training state.
        #[arg(long)]
        resume: bool,
    },
    /// Fine-tune inverter and fusion end to end on estimator outputs.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Fusion variant (overrides the config).
        #[arg(long, value_parser = ["basic", "spatial", "4ch", "spatial-4ch"])]
        variant: Option<String>,
        #[arg(long)]
        resume: bool,
    },
    /// Run the fusion pipeline and write fused fields and occlusion maps.
    Fuse {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_parser = ["basic", "spatial", "4ch", "spatial-4ch"])]
        variant: Option<String>,
        /// Inversion to apply to the backward estimate.
        #[arg(long, value_parser = ["learned", "constant-linear"], default_value = "learned")]
        inverter: String,
        /// Use ground truth to select the better candidate per pixel
        /// (upper bound; also writes the selection masks).
        #[arg(long)]
        oracle: bool,
    },
    /// Evaluate estimates against a dataset and render error maps.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Reconstruct occluded-only rates from all/noc rates, e.g.
        /// `--reconstruct-occ ratio=0.843`.
        #[arg(long, value_name = "ratio=R")]
        reconstruct_occ: Option<String>,
    },
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    if let Some(lib_err) = err.downcast_ref::<dtf::Error>() {
        return match lib_err.category() {
            dtf::ErrorCategory::Usage => 1,
            dtf::ErrorCategory::Data => 2,
            dtf::ErrorCategory::Numeric => 3,
        };
    }
    if err.downcast_ref::<toml::de::Error>().is_some() {
        return 1;
    }
    // config/context errors created by the CLI itself count as usage when
    // they surface before any data was touched
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 2;
    }
    2
}

fn load_config(common: &CommonArgs) -> anyhow::Result<RunConfig> {
    let mut config = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate { common } => {
            let config = load_config(&common)?;
            commands::generate::run(&config, &common.out)
        }
        Command::TrainInverter { common, resume } => {
            let config = load_config(&common)?;
            commands::train_inverter::run(&config, &common.out, resume)
        }
        Command::Train {
            common,
            variant,
            resume,
        } => {
            let mut config = load_config(&common)?;
            if let Some(v) = variant {
                if let Some(train) = config.train.as_mut() {
                    train.variant = v;
                }
            }
            commands::train::run(&config, &common.out, resume)
        }
        Command::Fuse {
            common,
            variant,
            inverter,
            oracle,
        } => {
            let mut config = load_config(&common)?;
            if let Some(v) = variant {
                if let Some(fuse) = config.fuse.as_mut() {
                    fuse.variant = v;
                }
            }
            commands::fuse::run(&config, &common.out, &inverter, oracle)
        }
        Command::Eval {
            common,
            reconstruct_occ,
        } => {
            let config = load_config(&common)?;
            let ratio = reconstruct_occ
                .map(|spec| commands::eval::parse_ratio(&spec))
                .transpose()?;
            commands::eval::run(&config, &common.out, ratio)
        }
    }
}

fn main() -> ExitCode {
    // clap's default exit code for usage errors is 2; this tool reserves 2
    // for data errors, so parse manually and map to 1.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help / --version are successful exits
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
