//! Run metadata accompanying every artifact directory.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use choir_core::training::TrainConfig;
use choir_core::{EvalConfig, PredictorConfig, Result};

/// Reproducibility record written as `run_metadata.json` next to every
/// artifact: the exact invocation plus the effective configuration.
#[derive(Debug, serde::Serialize)]
pub struct RunMetadata {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub precision: String,
    pub knn_mode: String,
    pub version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

impl RunMetadata {
    pub fn start(
        command: &str,
        config: serde_json::Value,
        seed: u64,
        precision: &str,
        knn_mode: &str,
    ) -> RunMetadata {
        RunMetadata {
            command: command.to_string(),
            argv: std::env::args().collect(),
            config,
            seed,
            precision: precision.to_string(),
            knn_mode: knn_mode.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
        }
    }

    /// Stamp the end time and write `run_metadata.json` into `dir`.
    pub fn finish_into(mut self, dir: &Path) -> Result<()> {
        self.finished_unix_ms = now_ms();
        let path = dir.join("run_metadata.json");
        let text = serde_json::to_string_pretty(&self).expect("metadata is serializable");
        std::fs::write(&path, text)
            .map_err(|e| choir_core::Error::io(path.display().to_string(), e))
    }
}

/// Model architecture snapshot; keys match the config-file vocabulary.
pub fn model_json(cfg: &PredictorConfig) -> serde_json::Value {
    serde_json::json!({
        "widths": cfg.hypothesizer.widths,
        "k": cfg.hypothesizer.k,
        "aggregation": cfg.hypothesizer.aggregation.name(),
        "hidden": cfg.residual.hidden,
        "blocks": cfg.residual.blocks,
        "k_att": cfg.residual.k_att,
        "pos_hidden": cfg.residual.pos_hidden,
        "knn_mode": cfg.knn_mode.name(),
        "use_residual": cfg.use_residual,
    })
}

/// Training hyperparameter snapshot; keys match the config-file vocabulary.
pub fn train_json(cfg: &TrainConfig) -> serde_json::Value {
    serde_json::json!({
        "epochs": cfg.epochs,
        "steps_per_epoch": cfg.steps_per_epoch,
        "batch_pairs": cfg.batch_pairs,
        "lr": cfg.lr,
        "beta1": cfg.beta1,
        "beta2": cfg.beta2,
        "adam_eps": cfg.adam_eps,
        "val_every": cfg.val_every,
        "val_fraction": cfg.val_fraction,
        "val_rotations": cfg.val_rotations,
        "val_stability_instances": cfg.val_stability_instances,
        "val_consistency_instances": cfg.val_consistency_instances,
        "train_points": cfg.train_points,
        "patch_removal": cfg.patch_removal,
        "patch_size": cfg.patch_size,
        "noise_sigma": cfg.noise_sigma,
        "pair_mode": cfg.pair_mode.name(),
        "seed": cfg.seed,
    })
}

/// Evaluation snapshot; keys match the config-file vocabulary.
pub fn eval_json(cfg: &EvalConfig) -> serde_json::Value {
    serde_json::json!({
        "k_rotations": cfg.k_rotations,
        "seed": cfg.seed,
        "perturb": cfg.perturb.name(),
        "consistency_on_rotated": cfg.consistency_on_rotated,
    })
}
