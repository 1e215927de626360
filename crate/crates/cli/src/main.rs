mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lmpt::dataio::Split;
use lmpt::eval::ReportFormat;
use lmpt::LmptError;

#[derive(Parser)]
#[command(name = "lmpt", version, about = "Landmark detection on 3D point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Markdown,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic femur dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// human, dog or both
        #[arg(long, default_value = "human")]
        species: String,
        #[arg(long, default_value_t = 2048)]
        points: usize,
        /// Test split size (default: a fifth of the shapes).
        #[arg(long)]
        test_count: Option<usize>,
    },
    /// Train from a JSON run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override a config key, e.g. `--set train.epochs=1`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Predict landmarks on one shape.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        shape: PathBuf,
        #[arg(long)]
        species: String,
        #[arg(long)]
        out: PathBuf,
        /// Sampling seed (default: the checkpoint's training seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on one manifest split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long)]
        report: PathBuf,
        /// Default: markdown for `.md` paths, CSV otherwise.
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        #[arg(long, hide = true)]
        ground_truth: bool,
    },
    /// Merge repeated annotation rounds by per-landmark medoid.
    Medoid {
        #[arg(long)]
        rounds: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every op and a tiny network.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Scale analytic gradients to simulate a broken backward pass.
        #[arg(long, hide = true)]
        inject_fault: Option<f64>,
    },
}

fn exit_code(err: &LmptError) -> u8 {
    match err {
        LmptError::Config(_) | LmptError::Range(_) | LmptError::InvalidInput(_) | LmptError::KTooLarge { .. } => 2,
        LmptError::Schema(_) | LmptError::Condition { .. } => 3,
        LmptError::Numerical(_) => 4,
        _ => 1,
    }
}

fn init_threads() -> Result<(), LmptError> {
    let threads = match std::env::var("LMPT_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| LmptError::Config(format!("LMPT_THREADS must be a positive integer, got {v:?}")))?,
        Err(_) => 1,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| LmptError::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<ExitCode, LmptError> {
    init_threads()?;
    match cli.command {
        Command::Synth { out, count, seed, species, points, test_count } => {
            commands::synth(&commands::SynthArgs { out, count, seed, species, points, test_count })?
        }
        Command::Train { config, overrides } => commands::train(&config, &overrides)?,
        Command::Predict { checkpoint, shape, species, out, seed } => {
            commands::predict(&commands::PredictArgs { checkpoint, shape, species, out, seed })?
        }
        Command::Eval { checkpoint, manifest, split, report, format, ground_truth } => {
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let format = format.map(|f| match f {
                FormatArg::Csv => ReportFormat::Csv,
                FormatArg::Markdown => ReportFormat::Markdown,
            });
            commands::eval(&commands::EvalArgs { checkpoint, manifest, split, report, format, ground_truth })?
        }
        Command::Medoid { rounds, out } => commands::medoid(&rounds, &out)?,
        Command::Gradcheck { seeds, inject_fault } => {
            if !commands::gradcheck(seeds, inject_fault)? {
                return Ok(ExitCode::from(4));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
