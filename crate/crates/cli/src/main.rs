mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Override;

/// Multi-scale feature fusion hand joint detector.
#[derive(Debug, Parser)]
#[command(name = "msff", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration field, e.g. `--set train.learning_rate=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<Override>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic hand dataset.
    GenData {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train a model on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate a checkpoint on a dataset directory.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Detect the joints of the hand(s) in one image.
    Predict {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Hand region `x,y,w,h` in pixels; repeatable. Defaults to the
        /// largest centered square.
        #[arg(long, value_name = "X,Y,W,H")]
        region: Vec<commands::RegionArg>,
    },
    /// Train and evaluate every ablation variant.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData { n, seed, out, config } => commands::gen_data(n, seed, &out, &config),
        Command::Train {
            data,
            out,
            resume,
            config,
        } => commands::train(&data, &out, resume.as_deref(), &config),
        Command::Eval {
            data,
            checkpoint,
            out,
            config,
        } => commands::eval(&data, &checkpoint, &out, &config),
        Command::Predict {
            image,
            checkpoint,
            out,
            region,
        } => commands::predict(&image, &checkpoint, &out, &region),
        Command::Ablate { data, out, config } => commands::ablate(&data, &out, &config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {line}", e.kind());
            ExitCode::FAILURE
        }
    }
}
