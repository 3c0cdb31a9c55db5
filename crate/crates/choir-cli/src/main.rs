//! `choir`: predict characteristic orientations of 3D point clouds.
//!
//! Subcommands cover the whole workflow: `gen-data` builds the synthetic
//! corpus, `train` fits a model, `eval` reports stability/consistency,
//! `canonicalize` rotates clouds into the canonical frame, `knn-audit`
//! measures rotation-induced neighbor changes per precision, and
//! `selfcheck` runs the built-in numerical diagnostics.

mod commands;
mod meta;

use clap::{Parser, Subcommand};

use commands::{canonicalize, eval, gen_data, knn_audit, selfcheck, train};

#[derive(Parser)]
#[command(
    name = "choir",
    version,
    about = "Characteristic orientations for 3D point clouds",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus plus its manifest.
    GenData(gen_data::Args),
    /// Train a model on a corpus manifest.
    Train(train::Args),
    /// Evaluate a checkpoint: per-class stability and consistency.
    Eval(eval::Args),
    /// Rotate clouds into the model's canonical frame.
    Canonicalize(canonicalize::Args),
    /// Count rotation-induced kNN edge changes per precision.
    KnnAudit(knn_audit::Args),
    /// Run the numerical diagnostics suites.
    Selfcheck(selfcheck::Args),
}

/// Command failure with the exit code it maps to.
pub enum Failure {
    /// Library error: 2 for data problems, 3 for numerical failures.
    Core(choir_core::Error),
    /// Invalid invocation beyond what argument parsing catches.
    Usage(String),
    /// Some inputs failed; the rest were processed.
    Partial(String),
    /// One or more selfcheck suites failed.
    Selfcheck(String),
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Core(e) => e.exit_code(),
            Failure::Usage(_) => 1,
            Failure::Partial(_) => 2,
            Failure::Selfcheck(_) => 4,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Core(e) => e.to_string(),
            Failure::Usage(m) | Failure::Partial(m) | Failure::Selfcheck(m) => m.clone(),
        }
    }
}

impl From<choir_core::Error> for Failure {
    fn from(e: choir_core::Error) -> Failure {
        Failure::Core(e)
    }
}

pub type CmdResult = std::result::Result<(), Failure>;

/// Cap rayon's pool when CHOIR_THREADS is set to a positive integer.
fn init_threads() {
    if let Ok(raw) = std::env::var("CHOIR_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => eprintln!("warning: ignoring CHOIR_THREADS='{raw}' (want a positive integer)"),
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version print to stdout and succeed; anything else
            // is a usage error.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    init_threads();
    let result = match cli.command {
        Command::GenData(args) => gen_data::run(args),
        Command::Train(args) => train::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Canonicalize(args) => canonicalize::run(args),
        Command::KnnAudit(args) => knn_audit::run(args),
        Command::Selfcheck(args) => selfcheck::run(args),
    };
    if let Err(f) = result {
        eprintln!("error: {}", f.message());
        std::process::exit(f.exit_code());
    }
}
