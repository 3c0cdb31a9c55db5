//! `choir selfcheck`: numerical diagnostics with a pass/fail table.

use choir_core::diagnostics::{self, Suite};

use crate::{CmdResult, Failure};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Base seed for every suite (default 0).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run one suite: equivariance, invariance, gradcheck, rotation-mean.
    #[arg(long)]
    pub suite: Option<String>,
}

pub fn run(args: Args) -> CmdResult {
    let suites: Vec<Suite> = match args.suite.as_deref() {
        None => diagnostics::run_all(args.seed)?,
        Some("equivariance") => vec![diagnostics::equivariance_suite(args.seed)?],
        Some("invariance") => vec![diagnostics::invariance_suite(args.seed)?],
        Some("gradcheck") => vec![diagnostics::gradcheck_suite(args.seed)?],
        Some("rotation-mean") => vec![diagnostics::rotation_mean_suite(args.seed)?],
        Some(other) => {
            return Err(Failure::Usage(format!(
                "unknown suite '{other}' (equivariance|invariance|gradcheck|rotation-mean)"
            )))
        }
    };

    println!("{:<14} {:<56} {:<6} detail", "suite", "check", "result");
    let mut failed: Vec<String> = Vec::new();
    let mut total = 0usize;
    for suite in &suites {
        for check in &suite.checks {
            total += 1;
            let verdict = if check.passed { "PASS" } else { "FAIL" };
            println!(
                "{:<14} {:<56} {:<6} {}",
                suite.name, check.name, verdict, check.detail
            );
            if !check.passed {
                failed.push(format!("{}: {}", suite.name, check.name));
            }
        }
    }
    if failed.is_empty() {
        println!("all {total} checks passed");
        Ok(())
    } else {
        Err(Failure::Selfcheck(format!(
            "{} of {total} checks failed: {}",
            failed.len(),
            failed.join("; ")
        )))
    }
}
