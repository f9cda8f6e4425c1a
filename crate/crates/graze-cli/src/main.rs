//! `graze` — one front door for the whole pipeline: synthetic dataset
//! generation, ensemble training, evaluation, cross-validation, inspection
//! planning, and the gradient oracle.
//!
//! Every artifact-producing command writes a `.run.json` sidecar holding the
//! fully resolved configuration. Sidecars and artifacts carry no timestamps,
//! so a rerun with the same flags and seed produces identical bytes.
//!
//! Failures print a single machine-parsable line to stderr,
//! `error[CODE]: message`, and exit with status 1; status 0 means the
//! command completed.

mod commands;
mod sidecar;

use clap::{Parser, Subcommand};
use graze_core::Error;

#[derive(Parser)]
#[command(name = "graze", version, about = "Seasonal grazing detection from satellite time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset directory
    GenData(commands::gen_data::GenDataArgs),
    /// Train an ensemble on a dataset directory
    Train(commands::train::TrainArgs),
    /// Evaluate a trained checkpoint on a recorded split
    Eval(commands::eval::EvalArgs),
    /// Run repeated independent train/validation splits
    Crossval(commands::crossval::CrossvalArgs),
    /// Inspection-planning curves and policy comparisons
    Plan(commands::plan::PlanArgs),
    /// Check analytic gradients against finite differences
    Gradcheck(commands::gradcheck::GradcheckArgs),
}

/// Stable error codes, one per failure class, for scripting against stderr.
fn error_code(err: &Error) -> &'static str {
    match err {
        Error::ShapeMismatch { .. } => "E_SHAPE",
        Error::InvalidPolygon(_) => "E_POLYGON",
        Error::InvalidConfig(_) => "E_CONFIG",
        Error::NonFinite { .. } => "E_NONFINITE",
        Error::EmptySample { .. } => "E_EMPTY_SAMPLE",
        Error::Format(_) => "E_FORMAT",
        Error::Checksum { .. } => "E_CHECKSUM",
        Error::UnknownAblation(_) => "E_ABLATION",
        Error::Evaluation(_) => "E_EVAL",
        Error::InvalidScenario(_) => "E_SCENARIO",
        Error::Io(_) => "E_IO",
        Error::Json(_) => "E_JSON",
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(args) => commands::gen_data::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Crossval(args) => commands::crossval::run(args),
        Command::Plan(args) => commands::plan::run(args),
        Command::Gradcheck(args) => commands::gradcheck::run(args),
    };
    if let Err(err) = result {
        eprintln!("error[{}]: {err}", error_code(&err));
        std::process::exit(1);
    }
}
