//! Self-supervised Siamese training.
//!
//! Each step samples pairs of clouds, gives every view an independent
//! random rotation, and penalizes the difference between the predicted
//! relative orientation and the known one:
//! `L = || F1^T F2 - R1^T R2 ||_F^2`. No orientation labels are needed;
//! the loss is invariant under a global re-gauging `F -> Q F`, so the
//! network is free to pick any characteristic frame as long as it picks
//! it consistently.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{class_consistency, instance_stability, Perturb};
use crate::pointcloud::{Dataset, PointCloud};
use crate::residual::CharacteristicOrientationPredictor;
use crate::rng::stream;
use crate::scalar::Scalar;
use crate::so3::{mat, sample_uniform, Rotation};
use crate::tensor::{Tape, Var};

/// How the two views of a pair are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairMode {
    /// Two different instances of the same class (drives consistency).
    #[default]
    CrossInstance,
    /// The same instance twice with independent augmentations.
    SameInstance,
    /// Coin flip between the two per pair.
    Mixed,
}

impl PairMode {
    pub fn name(self) -> &'static str {
        match self {
            PairMode::CrossInstance => "cross",
            PairMode::SameInstance => "same",
            PairMode::Mixed => "mixed",
        }
    }
}

impl std::str::FromStr for PairMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cross" | "cross-instance" => Ok(PairMode::CrossInstance),
            "same" | "same-instance" => Ok(PairMode::SameInstance),
            "mixed" => Ok(PairMode::Mixed),
            other => Err(format!("unknown pair mode '{other}' (cross|same|mixed)")),
        }
    }
}

/// Trainer hyperparameters and augmentation settings.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_pairs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Validate (and consider snapshotting) every this many epochs.
    pub val_every: usize,
    /// Fraction of instances per class held out for validation.
    pub val_fraction: f64,
    /// Rotations per instance in validation stability.
    pub val_rotations: usize,
    /// Instances per class probed for validation stability.
    pub val_stability_instances: usize,
    /// Instances per class in validation consistency.
    pub val_consistency_instances: usize,
    /// Points per training view (resampled from the stored clouds).
    pub train_points: usize,
    pub patch_removal: bool,
    pub patch_size: usize,
    pub noise_sigma: f64,
    pub pair_mode: PairMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            steps_per_epoch: 1,
            batch_pairs: 8,
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            val_every: 10,
            val_fraction: 0.2,
            val_rotations: 4,
            val_stability_instances: 2,
            val_consistency_instances: 8,
            train_points: 1024,
            patch_removal: true,
            patch_size: 64,
            noise_sigma: 0.0,
            pair_mode: PairMode::CrossInstance,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.steps_per_epoch == 0 || self.batch_pairs == 0 {
            return Err(Error::Config {
                message: "epochs, steps_per_epoch, and batch_pairs must be >= 1".into(),
            });
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config {
                message: format!("learning rate must be positive, got {}", self.lr),
            });
        }
        if self.val_every == 0 {
            return Err(Error::Config {
                message: "val_every must be >= 1".into(),
            });
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config {
                message: format!("val_fraction must be in [0, 1), got {}", self.val_fraction),
            });
        }
        if self.val_rotations < 2 {
            return Err(Error::Config {
                message: "val_rotations must be >= 2".into(),
            });
        }
        if self.train_points == 0 {
            return Err(Error::Config {
                message: "train_points must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// One Siamese training pair: two augmented, independently rotated views
/// and the rotations that were applied.
#[derive(Debug, Clone)]
pub struct TrainingPair<S: Scalar> {
    pub view1: PointCloud<S>,
    pub view2: PointCloud<S>,
    pub r1: Rotation<S>,
    pub r2: Rotation<S>,
}

fn augment_view<S: Scalar, R: Rng + ?Sized>(
    pc: &PointCloud<S>,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(PointCloud<S>, Rotation<S>)> {
    let mut out = pc.clone();
    if cfg.patch_removal && out.len() > cfg.patch_size + 1 {
        out = out.knn_patch_removal(cfg.patch_size, rng)?;
    }
    if cfg.train_points < out.len() {
        out = out.resample(cfg.train_points, rng)?.center();
    }
    if cfg.noise_sigma > 0.0 {
        out = out.gaussian_noise(cfg.noise_sigma, rng)?;
    }
    let r: Rotation<S> = sample_uniform(rng);
    let view = out.apply_rotation(&r);
    Ok((view, r))
}

/// Draw one pair according to the configured mode. Classes are sampled
/// uniformly; instances uniformly within the class.
pub fn sample_pair<S: Scalar, R: Rng + ?Sized>(
    train: &Dataset<S>,
    classes: &[String],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainingPair<S>> {
    if classes.is_empty() {
        return Err(Error::EmptyInput { op: "sample_pair" });
    }
    let class = &classes[rng.gen_range(0..classes.len())];
    let instances = train.of_class(class);
    let same = match cfg.pair_mode {
        PairMode::CrossInstance => false,
        PairMode::SameInstance => true,
        PairMode::Mixed => rng.gen_bool(0.5),
    };
    let (a, b) = if same {
        let i = rng.gen_range(0..instances.len());
        (instances[i], instances[i])
    } else {
        if instances.len() < 2 {
            return Err(Error::Config {
                message: format!(
                    "class '{class}' has {} training instance(s); cross-instance pairs \
                     need at least 2",
                    instances.len()
                ),
            });
        }
        let i = rng.gen_range(0..instances.len());
        let mut j = rng.gen_range(0..instances.len() - 1);
        if j >= i {
            j += 1;
        }
        (instances[i], instances[j])
    };
    let (view1, r1) = augment_view(a, cfg, rng)?;
    let (view2, r2) = augment_view(b, cfg, rng)?;
    Ok(TrainingPair {
        view1,
        view2,
        r1,
        r2,
    })
}

/// Record the pair loss `|| F1^T F2 - R1^T R2 ||_F^2` on the tape.
pub fn pair_loss_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    rows1: Var,
    rows2: Var,
    r1: &Rotation<S>,
    r2: &Rotation<S>,
) -> Result<Var> {
    let f1t = tape.swap_axes(rows1, 0, 1)?;
    let rel = tape.matmul(f1t, rows2)?;
    let target = mat::matmul3(&mat::transpose3(r1.matrix()), r2.matrix());
    let flat: Vec<S> = target.iter().flatten().copied().collect();
    let c = tape.leaf(vec![3, 3], flat, false)?;
    let d = tape.sub(rel, c)?;
    let sq = tape.mul(d, d)?;
    tape.sum_all(sq)
}

/// Eager pair loss from extracted rotations (used by tests and by the
/// tape-equivalence checks).
pub fn pair_loss_value<S: Scalar>(
    f1: &Rotation<S>,
    f2: &Rotation<S>,
    r1: &Rotation<S>,
    r2: &Rotation<S>,
) -> f64 {
    let pred = mat::matmul3(&mat::transpose3(f1.matrix()), f2.matrix());
    let target = mat::matmul3(&mat::transpose3(r1.matrix()), r2.matrix());
    mat::frobenius_sq(&mat::sub_mat3(&pred, &target)).as_f64()
}

/// One epoch row of the training history.
#[derive(Debug, Clone)]
pub struct HistoryRow {
    pub epoch: usize,
    pub loss: f64,
    pub val_stability_deg: Option<f64>,
    pub val_consistency_deg: Option<f64>,
    pub selected: bool,
}

/// Index of the selected checkpoint row: the validated row minimizing
/// stability + consistency, earliest on ties.
pub fn select_checkpoint(history: &[HistoryRow]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in history.iter().enumerate() {
        if let (Some(s), Some(c)) = (row.val_stability_deg, row.val_consistency_deg) {
            let score = s + c;
            if best.map_or(true, |(_, b)| score < b) {
                best = Some((i, score));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Write history as CSV (`epoch,loss,val_stability_deg,val_consistency_deg,selected_flag`);
/// non-validation epochs leave the validation fields empty.
pub fn write_history_csv(path: &Path, history: &[HistoryRow]) -> Result<()> {
    let mut out = String::from("epoch,loss,val_stability_deg,val_consistency_deg,selected_flag\n");
    for row in history {
        let vs = row
            .val_stability_deg
            .map(|v| format!("{v:.6}"))
            .unwrap_or_default();
        let vc = row
            .val_consistency_deg
            .map(|v| format!("{v:.6}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{:.8},{},{},{}\n",
            row.epoch,
            row.loss,
            vs,
            vc,
            if row.selected { 1 } else { 0 }
        ));
    }
    let mut f = std::fs::File::create(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(out.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// Training outcome: the per-epoch history and validation scores of the
/// selected (restored) parameters.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub history: Vec<HistoryRow>,
    pub selected_epoch: Option<usize>,
    pub selected_val_stability_deg: f64,
    pub selected_val_consistency_deg: f64,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(sizes: &[usize]) -> Adam {
        Adam {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    fn step<S: Scalar>(
        &mut self,
        cfg: &TrainConfig,
        params: &mut CharacteristicOrientationPredictor<S>,
        grads: &[Vec<f64>],
    ) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for (i, (_, tensor)) in params.params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, val) in tensor.data.iter_mut().enumerate() {
                let g = grads[i][j];
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
                let update = cfg.lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + cfg.adam_eps);
                *val = *val - S::fl(update);
            }
        }
    }
}

/// Fixed validation subset: a few instances per class, resampled once to
/// the training point count so validation cost stays proportionate.
struct ValSubset<S: Scalar> {
    stability: Vec<PointCloud<S>>,
    consistency: Vec<Vec<PointCloud<S>>>,
}

fn make_val_subset<S: Scalar>(val: &Dataset<S>, cfg: &TrainConfig) -> Result<ValSubset<S>> {
    let mut rng = stream("val-resample", &[cfg.seed]);
    let mut stability = Vec::new();
    let mut consistency = Vec::new();
    for class in val.classes() {
        let instances = val.of_class(&class);
        let mut class_clouds = Vec::new();
        for (i, pc) in instances.iter().enumerate() {
            if i >= cfg.val_stability_instances.max(cfg.val_consistency_instances) {
                break;
            }
            let sub = if cfg.train_points < pc.len() {
                pc.resample(cfg.train_points, &mut rng)?.center()
            } else {
                (*pc).clone()
            };
            if i < cfg.val_stability_instances {
                stability.push(sub.clone());
            }
            if i < cfg.val_consistency_instances {
                class_clouds.push(sub);
            }
        }
        if !class_clouds.is_empty() {
            consistency.push(class_clouds);
        }
    }
    if stability.is_empty() || consistency.is_empty() {
        return Err(Error::Config {
            message: "validation split is empty; lower val_fraction or add instances".into(),
        });
    }
    Ok(ValSubset {
        stability,
        consistency,
    })
}

fn validate<S: Scalar>(
    model: &CharacteristicOrientationPredictor<S>,
    subset: &ValSubset<S>,
    cfg: &TrainConfig,
) -> Result<(f64, f64)> {
    let orient = |c: &PointCloud<S>| model.predict(c, None).map(|p| p.orientation);
    let stabilities: Vec<f64> = subset
        .stability
        .par_iter()
        .map(|pc| {
            instance_stability(&orient, pc, cfg.val_rotations, cfg.seed, Perturb::None)
                .map(|(deg, _)| deg)
        })
        .collect::<Result<_>>()?;
    let stability = stabilities.iter().sum::<f64>() / stabilities.len() as f64;
    let mut consistency = 0.0;
    for class_clouds in &subset.consistency {
        let refs: Vec<&PointCloud<S>> = class_clouds.iter().collect();
        let (deg, _) = class_consistency(&orient, &refs, cfg.seed, false)?;
        consistency += deg;
    }
    consistency /= subset.consistency.len() as f64;
    Ok((stability, consistency))
}

/// Train `model` in place. The dataset is split per class by instance-id
/// order (the trailing `val_fraction` validates). Every `val_every`
/// epochs the model is scored on the validation subset and the best
/// (stability + consistency, earliest on ties) parameter snapshot is
/// restored at the end.
pub fn train<S: Scalar>(
    model: &mut CharacteristicOrientationPredictor<S>,
    data: &Dataset<S>,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    train_with_progress(model, data, cfg, |_| {})
}

/// [`train`] with a per-epoch callback (history row just produced).
pub fn train_with_progress<S: Scalar>(
    model: &mut CharacteristicOrientationPredictor<S>,
    data: &Dataset<S>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&HistoryRow),
) -> Result<TrainResult> {
    cfg.validate()?;
    let (train_set, val_set) = data.split_validation(cfg.val_fraction);
    let classes = train_set.classes();
    if classes.is_empty() {
        return Err(Error::EmptyInput { op: "train" });
    }
    if cfg.pair_mode != PairMode::SameInstance {
        for class in &classes {
            if train_set.of_class(class).len() < 2 {
                return Err(Error::Config {
                    message: format!(
                        "class '{class}' has fewer than 2 training instances; \
                         cross-instance pairing is impossible"
                    ),
                });
            }
        }
    }
    let subset = make_val_subset(&val_set, cfg)?;
    let entry_sizes: Vec<usize> = model.params.iter().map(|(_, t)| t.numel()).collect();
    let mut adam = Adam::new(&entry_sizes);
    let mut rng = stream("train", &[cfg.seed]);
    let mut history: Vec<HistoryRow> = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, crate::params::ParamSet<S>, f64, f64)> = None;

    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for _ in 0..cfg.steps_per_epoch {
            let pairs: Vec<TrainingPair<S>> = (0..cfg.batch_pairs)
                .map(|_| sample_pair(&train_set, &classes, cfg, &mut rng))
                .collect::<Result<_>>()?;
            let results: Vec<(f64, Vec<Vec<f64>>)> = pairs
                .par_iter()
                .enumerate()
                .map(|(pi, pair)| pair_backward(model, pair, epoch, pi))
                .collect::<Result<_>>()?;
            let inv_b = 1.0 / cfg.batch_pairs as f64;
            let mut grads: Vec<Vec<f64>> =
                entry_sizes.iter().map(|&n| vec![0.0; n]).collect();
            let mut batch_loss = 0.0;
            for (loss, pair_grads) in &results {
                batch_loss += loss * inv_b;
                for (acc, g) in grads.iter_mut().zip(pair_grads) {
                    for (a, &gv) in acc.iter_mut().zip(g) {
                        *a += gv * inv_b;
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    context: "batch loss".into(),
                    epoch,
                    pair: usize::MAX,
                });
            }
            adam.step(cfg, model, &grads);
            epoch_loss += batch_loss / cfg.steps_per_epoch as f64;
        }

        let is_val_epoch = (epoch + 1) % cfg.val_every == 0 || epoch + 1 == cfg.epochs;
        let mut row = HistoryRow {
            epoch,
            loss: epoch_loss,
            val_stability_deg: None,
            val_consistency_deg: None,
            selected: false,
        };
        if is_val_epoch {
            let (vs, vc) = validate(model, &subset, cfg)?;
            row.val_stability_deg = Some(vs);
            row.val_consistency_deg = Some(vc);
            let score = vs + vc;
            if best.as_ref().map_or(true, |(b, ..)| score < *b) {
                best = Some((score, epoch, model.params.clone(), vs, vc));
            }
        }
        on_epoch(&row);
        history.push(row);
    }

    let (selected_epoch, vs, vc) = match best {
        Some((_, epoch, params, vs, vc)) => {
            model.params = params;
            (Some(epoch), vs, vc)
        }
        None => (None, f64::NAN, f64::NAN),
    };
    if let Some(idx) = select_checkpoint(&history) {
        debug_assert_eq!(Some(history[idx].epoch), selected_epoch);
        history[idx].selected = true;
    }
    Ok(TrainResult {
        history,
        selected_epoch,
        selected_val_stability_deg: vs,
        selected_val_consistency_deg: vc,
    })
}

/// Forward + backward for one pair on a private tape; returns the loss and
/// per-parameter gradients in registry order (f64 for the optimizer).
fn pair_backward<S: Scalar>(
    model: &CharacteristicOrientationPredictor<S>,
    pair: &TrainingPair<S>,
    epoch: usize,
    pair_index: usize,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let vars = model.params.leaf_all(&mut tape);
    let f1 = model.forward_on_tape(&mut tape, &vars, &pair.view1, None)?;
    let f2 = model.forward_on_tape(&mut tape, &vars, &pair.view2, None)?;
    let loss = pair_loss_on_tape(&mut tape, f1.rows, f2.rows, &pair.r1, &pair.r2)?;
    let loss_value = tape.scalar_value(loss).as_f64();
    if !loss_value.is_finite() {
        return Err(Error::NonFiniteLoss {
            context: "pair loss".into(),
            epoch,
            pair: pair_index,
        });
    }
    tape.backward(loss)?;
    let grads = model
        .params
        .iter()
        .map(|(name, t)| {
            let var = vars[name];
            match tape.grad(var) {
                Some(g) => g.iter().map(|v| v.as_f64()).collect(),
                None => vec![0.0; t.numel()],
            }
        })
        .collect();
    Ok((loss_value, grads))
}
