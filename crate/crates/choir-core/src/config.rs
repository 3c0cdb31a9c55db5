//! Flat `key = value` configuration files.
//!
//! One assignment per line, `#` starts a comment, keys are validated
//! against the known set. Values parse on demand with errors that name
//! the key, the offending value, and the line. Command-line flags always
//! override file values; the file overrides built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hypothesizer::HypothesizerConfig;
use crate::metrics::EvalConfig;
use crate::pointcloud::synthetic::CorpusSpec;
use crate::residual::{PredictorConfig, ResidualConfig};
use crate::training::TrainConfig;

/// Every key a configuration file may set.
pub const KNOWN_KEYS: &[&str] = &[
    // training
    "epochs",
    "steps_per_epoch",
    "batch_pairs",
    "lr",
    "beta1",
    "beta2",
    "adam_eps",
    "val_every",
    "val_fraction",
    "val_rotations",
    "val_stability_instances",
    "val_consistency_instances",
    "train_points",
    "patch_removal",
    "patch_size",
    "noise_sigma",
    "pair_mode",
    "seed",
    // model
    "widths",
    "k",
    "aggregation",
    "hidden",
    "blocks",
    "k_att",
    "pos_hidden",
    "knn_mode",
    "use_residual",
    // evaluation
    "k_rotations",
    "perturb",
    "consistency_on_rotated",
    // corpus generation
    "classes",
    "instances_per_class",
    "points",
    "verify_symmetry",
];

/// Parsed config file: raw string values plus their source lines.
#[derive(Debug, Clone, Default)]
pub struct ConfigBag {
    path: String,
    values: BTreeMap<String, (String, usize)>,
}

impl ConfigBag {
    pub fn parse_file(path: &Path) -> Result<ConfigBag> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse_str(&text, &path.display().to_string())
    }

    pub fn parse_str(text: &str, path: &str) -> Result<ConfigBag> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_string(),
                line: line_no,
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line: line_no,
                    message: format!("unknown key '{key}'"),
                });
            }
            if values.insert(key.clone(), (value, line_no)).is_some() {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line: line_no,
                    message: format!("duplicate key '{key}'"),
                });
            }
        }
        Ok(ConfigBag {
            path: path.to_string(),
            values,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get_raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    /// Parse a value if the key is present; errors carry key + line.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<T>().map(Some).map_err(|_| Error::Parse {
                path: self.path.clone(),
                line: *line,
                message: format!("bad value '{v}' for '{key}'"),
            }),
        }
    }

    /// Comma-separated positive integer list (encoder widths).
    pub fn get_usize_list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((v, line)) => {
                let parsed: std::result::Result<Vec<usize>, _> =
                    v.split(',').map(|p| p.trim().parse::<usize>()).collect();
                parsed.map(Some).map_err(|_| Error::Parse {
                    path: self.path.clone(),
                    line: *line,
                    message: format!("bad value '{v}' for '{key}' (expected e.g. 8,16,32,64)"),
                })
            }
        }
    }
}

macro_rules! set_if {
    ($bag:expr, $key:literal, $slot:expr) => {
        if let Some(v) = $bag.get($key)? {
            $slot = v;
        }
    };
}

/// Overlay file values onto training defaults.
pub fn apply_train(bag: &ConfigBag, cfg: &mut TrainConfig) -> Result<()> {
    set_if!(bag, "epochs", cfg.epochs);
    set_if!(bag, "steps_per_epoch", cfg.steps_per_epoch);
    set_if!(bag, "batch_pairs", cfg.batch_pairs);
    set_if!(bag, "lr", cfg.lr);
    set_if!(bag, "beta1", cfg.beta1);
    set_if!(bag, "beta2", cfg.beta2);
    set_if!(bag, "adam_eps", cfg.adam_eps);
    set_if!(bag, "val_every", cfg.val_every);
    set_if!(bag, "val_fraction", cfg.val_fraction);
    set_if!(bag, "val_rotations", cfg.val_rotations);
    set_if!(bag, "val_stability_instances", cfg.val_stability_instances);
    set_if!(bag, "val_consistency_instances", cfg.val_consistency_instances);
    set_if!(bag, "train_points", cfg.train_points);
    set_if!(bag, "patch_removal", cfg.patch_removal);
    set_if!(bag, "patch_size", cfg.patch_size);
    set_if!(bag, "noise_sigma", cfg.noise_sigma);
    set_if!(bag, "pair_mode", cfg.pair_mode);
    set_if!(bag, "seed", cfg.seed);
    Ok(())
}

/// Overlay file values onto the model architecture defaults.
pub fn apply_model(bag: &ConfigBag, cfg: &mut PredictorConfig) -> Result<()> {
    let HypothesizerConfig {
        widths,
        k,
        aggregation,
    } = &mut cfg.hypothesizer;
    if let Some(w) = bag.get_usize_list("widths")? {
        *widths = w;
    }
    set_if!(bag, "k", *k);
    set_if!(bag, "aggregation", *aggregation);
    let ResidualConfig {
        hidden,
        blocks,
        k_att,
        pos_hidden,
    } = &mut cfg.residual;
    set_if!(bag, "hidden", *hidden);
    set_if!(bag, "blocks", *blocks);
    set_if!(bag, "k_att", *k_att);
    set_if!(bag, "pos_hidden", *pos_hidden);
    set_if!(bag, "knn_mode", cfg.knn_mode);
    set_if!(bag, "use_residual", cfg.use_residual);
    Ok(())
}

/// Overlay file values onto evaluation defaults.
pub fn apply_eval(bag: &ConfigBag, cfg: &mut EvalConfig) -> Result<()> {
    set_if!(bag, "k_rotations", cfg.k_rotations);
    set_if!(bag, "seed", cfg.seed);
    set_if!(bag, "perturb", cfg.perturb);
    set_if!(bag, "consistency_on_rotated", cfg.consistency_on_rotated);
    Ok(())
}

/// Overlay file values onto corpus generation defaults.
pub fn apply_corpus(bag: &ConfigBag, spec: &mut CorpusSpec) -> Result<()> {
    set_if!(bag, "classes", spec.classes);
    set_if!(bag, "instances_per_class", spec.instances_per_class);
    set_if!(bag, "points", spec.points);
    set_if!(bag, "seed", spec.seed);
    set_if!(bag, "verify_symmetry", spec.verify_symmetry);
    Ok(())
}
