//! `vdensity` command-line tool: synthesize scenes, train, predict, evaluate, and check
//! gradients.

mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "vdensity", version, about = "Vehicle density estimation and counting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a scene config.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Extract features, optionally cross-validate, and fit a model.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the convergence tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Predict per-frame counts with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model against annotated frames.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Dataset to score; defaults to the manifest named in `--config`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Experiment config whose feature settings the data must be prepared with.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic gradients with central finite differences.
    CheckGrad {
        #[arg(long, default_value_t = vdensity::gradcheck::DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[arg(long, hide = true)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FaultArg {
    HuberSignFlip,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { config, out, seed } => commands::synth(&config, &out, seed),
        Command::Train {
            config,
            out,
            seed,
            tol,
        } => commands::train(&config, out.as_deref(), seed, tol),
        Command::Predict {
            model,
            manifest,
            out,
        } => commands::predict(&model, &manifest, &out),
        Command::Eval {
            model,
            manifest,
            config,
            out,
        } => commands::eval(&model, manifest.as_deref(), config.as_deref(), &out),
        Command::CheckGrad {
            tol,
            points,
            inject_fault,
        } => commands::check_grad(
            tol,
            points,
            inject_fault.map(|FaultArg::HuberSignFlip| vdensity::gradcheck::Fault::HuberSignFlip),
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
