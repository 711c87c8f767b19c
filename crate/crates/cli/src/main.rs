//! `tanet`: synthesize weather data, train, restore, evaluate, ablate and
//! check gradients.
//!
//! Exit codes: 0 success, 1 runtime failure (diverged training, failed
//! gradient check), 2 I/O error, 3 bad arguments or shapes, 4 missing or
//! corrupt checkpoint.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "tanet", version, about = "All-in-one adverse weather restoration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// `key = value` run configuration; defaults apply to missing keys.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override a key, e.g. `--set steps=100`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Degrade clean images with haze, rain and snow and write train/test manifests.
    Synth {
        /// Directory of clean .png/.ppm images. Procedural scenes are
        /// generated into `<out-dir>/scenes` when omitted.
        #[arg(long)]
        clean_dir: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 100)]
        per_kind: usize,
        #[arg(long, default_value_t = 0.9)]
        split: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Number of procedural scenes when no clean directory is given.
        #[arg(long, default_value_t = 100)]
        scenes: usize,
        /// Side length of procedural scenes.
        #[arg(long, default_value_t = 96)]
        size: usize,
    },
    /// Train a model on `<data_dir>/train.manifest`.
    Train(ConfigArgs),
    /// Restore one image of any size.
    Restore {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score a checkpoint on a manifest, per weather kind.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Where eval.csv and eval.txt go; defaults to the checkpoint's directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Repetitions of the 256x256 timing run; 0 skips timing.
        #[arg(long, default_value_t = 3)]
        time_reps: usize,
    },
    /// Train and score the five component variants under one budget.
    Ablate(ConfigArgs),
    /// Finite-difference check of every module's gradients.
    Gradcheck(ConfigArgs),
    /// Print the parameter count of a configuration.
    Params {
        #[command(flatten)]
        config: ConfigArgs,
        /// Use the width/depth whose count is closest to 9M instead.
        #[arg(long)]
        full_scale: bool,
    },
    /// Write the freshly initialized (identity) model as a checkpoint.
    Init {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        output: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth {
            clean_dir,
            out_dir,
            per_kind,
            split,
            seed,
            scenes,
            size,
        } => commands::synth(clean_dir, &out_dir, per_kind, split, seed, scenes, size),
        Command::Train(args) => commands::train(&args),
        Command::Restore {
            checkpoint,
            input,
            output,
        } => commands::restore(&checkpoint, &input, &output),
        Command::Eval {
            checkpoint,
            manifest,
            out_dir,
            time_reps,
        } => commands::eval(&checkpoint, &manifest, out_dir, time_reps),
        Command::Ablate(args) => commands::ablate(&args),
        Command::Gradcheck(args) => commands::gradcheck(&args),
        Command::Params { config, full_scale } => commands::params(&config, full_scale),
        Command::Init { config, output } => commands::init(&config, &output),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
