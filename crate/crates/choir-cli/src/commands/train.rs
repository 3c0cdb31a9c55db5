//! `choir train`: self-supervised Siamese training.

use std::path::PathBuf;

use choir_core::checkpoint::save_model;
use choir_core::config::{self, ConfigBag};
use choir_core::pointcloud::io::load_dataset;
use choir_core::training::{self, TrainConfig};
use choir_core::{
    CharacteristicOrientationPredictor, Dataset, Error, KnnMode, PairMode, Precision,
    PredictorConfig, Scalar,
};

use crate::meta::{self, RunMetadata};
use crate::CmdResult;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Corpus manifest (as written by gen-data).
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for checkpoint, history, and metadata.
    #[arg(long)]
    pub out: PathBuf,
    /// `key = value` config file; flags override file values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config-file / default seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Numeric precision: single or double.
    #[arg(long, default_value = "double")]
    pub precision: Precision,
    /// kNN regime: adaptive (recomputed per view) or frozen.
    #[arg(long)]
    pub knn_mode: Option<KnnMode>,
    /// Pairing mode: cross-instance, same-instance, or mixed.
    #[arg(long)]
    pub mode: Option<PairMode>,
    /// Train the hypothesis-only ablation without the residual predictor.
    #[arg(long)]
    pub no_residual: bool,
}

pub fn run(args: Args) -> CmdResult {
    let bag = match &args.config {
        Some(p) => ConfigBag::parse_file(p)?,
        None => ConfigBag::default(),
    };
    let mut tcfg = TrainConfig::default();
    config::apply_train(&bag, &mut tcfg)?;
    if let Some(s) = args.seed {
        tcfg.seed = s;
    }
    if let Some(m) = args.mode {
        tcfg.pair_mode = m;
    }
    let mut mcfg = PredictorConfig::default();
    config::apply_model(&bag, &mut mcfg)?;
    if let Some(k) = args.knn_mode {
        mcfg.knn_mode = k;
    }
    if args.no_residual {
        mcfg.use_residual = false;
    }

    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::io(args.out.display().to_string(), e))?;
    let meta = RunMetadata::start(
        "train",
        serde_json::json!({
            "train": meta::train_json(&tcfg),
            "model": meta::model_json(&mcfg),
        }),
        tcfg.seed,
        match args.precision {
            Precision::Single => "single",
            Precision::Double => "double",
        },
        mcfg.knn_mode.name(),
    );

    match args.precision {
        Precision::Single => run_typed::<f32>(&args, &tcfg, mcfg, meta),
        Precision::Double => run_typed::<f64>(&args, &tcfg, mcfg, meta),
    }
}

fn run_typed<S: Scalar>(
    args: &Args,
    tcfg: &TrainConfig,
    mcfg: PredictorConfig,
    meta: RunMetadata,
) -> CmdResult {
    let data: Dataset<S> = load_dataset(&args.data)?;
    let mut model = CharacteristicOrientationPredictor::<S>::new(mcfg, tcfg.seed)?;
    let outcome = training::train_with_progress(&mut model, &data, tcfg, |row| {
        match (row.val_stability_deg, row.val_consistency_deg) {
            (Some(s), Some(c)) => println!(
                "epoch {:>4}  loss {:.6}  val stability {:.3} deg  val consistency {:.3} deg",
                row.epoch, row.loss, s, c
            ),
            _ => println!("epoch {:>4}  loss {:.6}", row.epoch, row.loss),
        }
    });
    let result = match outcome {
        Ok(r) => r,
        Err(e) => {
            if matches!(e, Error::NonFiniteLoss { .. }) {
                let argv: Vec<String> = std::env::args().collect();
                eprintln!(
                    "loss became non-finite; replay deterministically with: {}",
                    argv.join(" ")
                );
            }
            return Err(e.into());
        }
    };

    save_model(&args.out.join("checkpoint.choir"), &model)?;
    training::write_history_csv(&args.out.join("history.csv"), &result.history)?;
    meta.finish_into(&args.out)?;
    match result.selected_epoch {
        Some(e) => println!(
            "selected epoch {e}: val stability {:.3} deg, val consistency {:.3} deg",
            result.selected_val_stability_deg, result.selected_val_consistency_deg
        ),
        None => println!("no validated epoch; kept the final parameters"),
    }
    println!("checkpoint + history written to {}", args.out.display());
    Ok(())
}
