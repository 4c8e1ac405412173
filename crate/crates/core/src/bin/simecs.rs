use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, CommandFactory, Parser, Subcommand};
use simec::cli::{self, Common, MODEL_FILE};
use simec::experiments::EXPERIMENTS;
use simec::SimecError;

/// Similarity encoders: train, evaluate, and run the experiment sweeps.
#[derive(Parser)]
#[command(name = "simecs", version)]
struct Cli {
    /// Seed for data generation, initialization and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory with the MNIST IDX files.
    #[arg(long, global = true, env = "SIMECS_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a saved model on the problem a run config describes.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the model file in the output directory.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run one experiment sweep and write its CSV.
    Experiment {
        #[arg(long, value_parser = EXPERIMENTS)]
        experiment: String,
        /// Multiplies the default number of rows.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = Common {
        seed: cli.seed,
        data_dir: cli.data_dir,
        out: cli.out,
    };
    if let Command::Train { config } | Command::Eval { config, .. } = &cli.command {
        if !config.is_file() {
            Cli::command()
                .error(ErrorKind::ValueValidation, format!("config file {} not found", config.display()))
                .exit();
        }
    }
    let mut stdout = io::stdout().lock();
    let result = match &cli.command {
        Command::Train { config } => cli::cmd_train(config, &common, &mut stdout),
        Command::Eval { config, model } => {
            let model = model.clone().unwrap_or_else(|| common.out.join(MODEL_FILE));
            cli::cmd_eval(config, &model, &common, &mut stdout)
        }
        Command::Experiment { experiment, scale } => {
            cli::cmd_experiment(experiment, *scale, &common, &mut stdout)
        }
    };
    let _ = stdout.flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                SimecError::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
