//! `choir eval`: stability/consistency reports for a checkpoint.

use std::path::PathBuf;

use choir_core::checkpoint::load_model;
use choir_core::config::{self, ConfigBag};
use choir_core::metrics::evaluate;
use choir_core::pointcloud::io::load_dataset;
use choir_core::{Dataset, Error, EvalConfig, KnnMode, Perturb, Precision, Scalar};

use crate::meta::{self, RunMetadata};
use crate::CmdResult;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Corpus manifest to evaluate on.
    #[arg(long)]
    pub data: PathBuf,
    /// Model checkpoint (as written by train).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output directory for report.json, report.csv, and metadata.
    #[arg(long)]
    pub out: PathBuf,
    /// `key = value` config file; flags override file values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Random rotations per instance for stability (default 10).
    #[arg(long = "K")]
    pub k_rotations: Option<usize>,
    /// Overrides the config-file / default seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Test-time perturbation: none, resample:N, or gaussian:SIGMA.
    #[arg(long)]
    pub perturb: Option<Perturb>,
    /// Overrides the checkpoint's kNN regime for this evaluation.
    #[arg(long)]
    pub knn_mode: Option<KnnMode>,
    /// Numeric precision: single or double.
    #[arg(long, default_value = "double")]
    pub precision: Precision,
}

pub fn run(args: Args) -> CmdResult {
    match args.precision {
        Precision::Single => run_typed::<f32>(&args),
        Precision::Double => run_typed::<f64>(&args),
    }
}

fn run_typed<S: Scalar>(args: &Args) -> CmdResult {
    let bag = match &args.config {
        Some(p) => ConfigBag::parse_file(p)?,
        None => ConfigBag::default(),
    };
    let mut cfg = EvalConfig::default();
    config::apply_eval(&bag, &mut cfg)?;
    if let Some(k) = args.k_rotations {
        cfg.k_rotations = k;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(p) = args.perturb {
        cfg.perturb = p;
    }

    let mut model = load_model::<S>(&args.checkpoint)?;
    if let Some(m) = args.knn_mode {
        model.knn_mode = m;
    }
    let data: Dataset<S> = load_dataset(&args.data)?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::io(args.out.display().to_string(), e))?;
    let meta = RunMetadata::start(
        "eval",
        serde_json::json!({
            "eval": meta::eval_json(&cfg),
            "model": meta::model_json(&model.config()),
            "checkpoint": args.checkpoint.display().to_string(),
        }),
        cfg.seed,
        S::precision_name(),
        model.knn_mode.name(),
    );

    let report = evaluate(&model, &data, &cfg)?;
    for class in &report.classes {
        println!(
            "class {:<12} stability {:>10.4} deg  consistency {:>10.4} deg",
            class.class_id, class.stability_deg, class.consistency_deg
        );
        for w in &class.warnings {
            eprintln!("warning [{}]: {w}", class.class_id);
        }
    }
    println!(
        "mean: stability {:.4} deg, consistency {:.4} deg",
        report.mean_stability_deg, report.mean_consistency_deg
    );

    let json_path = args.out.join("report.json");
    std::fs::write(&json_path, report.to_json())
        .map_err(|e| Error::io(json_path.display().to_string(), e))?;
    let csv_path = args.out.join("report.csv");
    std::fs::write(&csv_path, report.to_csv())
        .map_err(|e| Error::io(csv_path.display().to_string(), e))?;
    meta.finish_into(&args.out)?;
    println!("reports written to {}", args.out.display());
    Ok(())
}
