//! Stability and consistency of predicted orientations.
//!
//! **Stability** asks: rotate one instance K ways; after compensating for
//! the applied rotations, how far do the predictions spread around their
//! chordal mean? **Consistency** asks the same across instances of a
//! class in a shared frame. Both are root-mean-square angles to the mean,
//! reported in degrees.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pointcloud::{Dataset, PointCloud};
use crate::residual::{CharacteristicOrientationPredictor, KnnMode};
use crate::rng::{fnv1a, stream};
use crate::scalar::Scalar;
use crate::so3::{angle_between, chordal_mean, sample_uniform, Rotation};

/// Anything that maps a cloud to a characteristic orientation. Implemented
/// by closures, so tests can probe the metrics with synthetic predictors.
pub trait Orient<S: Scalar>: Sync {
    fn orient(&self, cloud: &PointCloud<S>) -> Result<Rotation<S>>;
}

impl<S: Scalar, F> Orient<S> for F
where
    F: Fn(&PointCloud<S>) -> Result<Rotation<S>> + Sync,
{
    fn orient(&self, cloud: &PointCloud<S>) -> Result<Rotation<S>> {
        self(cloud)
    }
}

/// Input perturbation applied to each rotated copy during stability runs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Perturb {
    #[default]
    None,
    /// Random subsample to `n` points (recentered).
    Resample(usize),
    /// Additive Gaussian coordinate noise with this sigma (recentered).
    Gaussian(f64),
}

impl Perturb {
    pub fn name(&self) -> String {
        match self {
            Perturb::None => "none".into(),
            Perturb::Resample(n) => format!("resample:{n}"),
            Perturb::Gaussian(s) => format!("gaussian:{s}"),
        }
    }
}

impl std::str::FromStr for Perturb {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("none") {
            return Ok(Perturb::None);
        }
        if let Some(n) = s.strip_prefix("resample:") {
            return n
                .parse::<usize>()
                .map(Perturb::Resample)
                .map_err(|_| format!("bad resample count '{n}'"));
        }
        if let Some(sig) = s.strip_prefix("gaussian:") {
            return sig
                .parse::<f64>()
                .map(Perturb::Gaussian)
                .map_err(|_| format!("bad noise sigma '{sig}'"));
        }
        Err(format!(
            "unknown perturbation '{s}' (none | resample:<n> | gaussian:<sigma>)"
        ))
    }
}

/// Evaluation protocol parameters.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// Rotations per instance for stability.
    pub k_rotations: usize,
    pub seed: u64,
    pub perturb: Perturb,
    /// Measure consistency on randomly rotated copies (compensated), not
    /// on the corpus-aligned poses.
    pub consistency_on_rotated: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k_rotations: 10,
            seed: 0,
            perturb: Perturb::None,
            consistency_on_rotated: false,
        }
    }
}

/// Root-mean-square angle (degrees) of rotations around their chordal
/// mean, plus whether the mean was degenerate (ambiguous projection).
fn angular_spread_deg<S: Scalar>(rs: &[Rotation<S>]) -> Result<(f64, bool)> {
    let mean = chordal_mean(rs)?;
    let mse: f64 = rs
        .iter()
        .map(|r| {
            let a = angle_between(r, &mean.rotation).as_f64();
            a * a
        })
        .sum::<f64>()
        / rs.len() as f64;
    Ok((mse.sqrt().to_degrees(), mean.degenerate))
}

/// Stability spread of rotation-compensated predictions (degrees).
pub fn stability_of_nets<S: Scalar>(nets: &[Rotation<S>]) -> Result<(f64, bool)> {
    angular_spread_deg(nets)
}

/// Consistency spread of per-instance orientations (degrees).
pub fn consistency_of_rotations<S: Scalar>(rs: &[Rotation<S>]) -> Result<(f64, bool)> {
    angular_spread_deg(rs)
}

/// Stability of one instance under `k_rotations` Haar rotations: each copy
/// is rotated (and optionally perturbed), oriented, and compensated by
/// the known rotation; the spread of the results is the stability.
pub fn instance_stability<S: Scalar>(
    orient: &dyn Orient<S>,
    cloud: &PointCloud<S>,
    k_rotations: usize,
    seed: u64,
    perturb: Perturb,
) -> Result<(f64, bool)> {
    if k_rotations < 2 {
        return Err(Error::Config {
            message: format!("stability needs >= 2 rotations, got {k_rotations}"),
        });
    }
    let mut rng = stream(
        "stability",
        &[
            seed,
            fnv1a(cloud.class_id.as_bytes()),
            fnv1a(cloud.instance_id.as_bytes()),
        ],
    );
    let mut nets = Vec::with_capacity(k_rotations);
    for _ in 0..k_rotations {
        let r: Rotation<S> = sample_uniform(&mut rng);
        let rotated = cloud.apply_rotation(&r);
        let probed = match perturb {
            Perturb::None => rotated,
            Perturb::Resample(n) => rotated.resample(n, &mut rng)?.center(),
            Perturb::Gaussian(sigma) => rotated.gaussian_noise(sigma, &mut rng)?,
        };
        let f = orient.orient(&probed)?;
        nets.push(f.compose(&r.transpose()));
    }
    stability_of_nets(&nets)
}

/// Consistency across instances (assumed same class). In the default
/// protocol the instances are oriented as stored (the corpus-aligned
/// frame); in the rotated protocol each gets a random rotation that is
/// compensated afterwards.
pub fn class_consistency<S: Scalar>(
    orient: &dyn Orient<S>,
    instances: &[&PointCloud<S>],
    seed: u64,
    on_rotated: bool,
) -> Result<(f64, bool)> {
    if instances.is_empty() {
        return Err(Error::EmptyInput {
            op: "class_consistency",
        });
    }
    let orientations: Vec<Rotation<S>> = instances
        .par_iter()
        .map(|pc| {
            if on_rotated {
                let mut rng = stream(
                    "consistency",
                    &[
                        seed,
                        fnv1a(pc.class_id.as_bytes()),
                        fnv1a(pc.instance_id.as_bytes()),
                    ],
                );
                let r: Rotation<S> = sample_uniform(&mut rng);
                let f = orient.orient(&pc.apply_rotation(&r))?;
                Ok(f.compose(&r.transpose()))
            } else {
                orient.orient(pc)
            }
        })
        .collect::<Result<_>>()?;
    consistency_of_rotations(&orientations)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct InstanceReport {
    pub instance_id: String,
    pub stability_deg: f64,
    /// The chordal mean underlying this number was ambiguous.
    pub degenerate_mean: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ClassReport {
    pub class_id: String,
    pub n_instances: usize,
    /// Mean of per-instance stabilities.
    pub stability_deg: f64,
    pub consistency_deg: f64,
    pub consistency_degenerate: bool,
    pub instances: Vec<InstanceReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EvalReport {
    pub k_rotations: usize,
    pub seed: u64,
    pub precision: String,
    pub knn_mode: String,
    pub perturb: String,
    pub consistency_on_rotated: bool,
    /// Mean over classes of per-class stability.
    pub mean_stability_deg: f64,
    /// Mean over classes of consistency.
    pub mean_consistency_deg: f64,
    pub classes: Vec<ClassReport>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Compact CSV: `#`-prefixed metadata lines, a header, one row per
    /// class. Per-instance detail stays in the JSON form.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# k_rotations = {}\n", self.k_rotations));
        out.push_str(&format!("# seed = {}\n", self.seed));
        out.push_str(&format!("# precision = {}\n", self.precision));
        out.push_str(&format!("# knn_mode = {}\n", self.knn_mode));
        out.push_str(&format!("# perturb = {}\n", self.perturb));
        out.push_str(&format!(
            "# consistency_on_rotated = {}\n",
            self.consistency_on_rotated
        ));
        out.push_str(&format!(
            "# mean_stability_deg = {:.6}\n",
            self.mean_stability_deg
        ));
        out.push_str(&format!(
            "# mean_consistency_deg = {:.6}\n",
            self.mean_consistency_deg
        ));
        out.push_str("class_id,n_instances,stability_deg,consistency_deg\n");
        for c in &self.classes {
            out.push_str(&format!(
                "{},{},{:.6},{:.6}\n",
                c.class_id, c.n_instances, c.stability_deg, c.consistency_deg
            ));
        }
        out
    }
}

/// Evaluate a model over a dataset: per-class stability (mean over
/// instances) and consistency, honoring the model's kNN mode.
///
/// In frozen mode each instance's graphs are computed once in the stored
/// pose and reused for every rotated copy, isolating the orientation
/// pipeline from kNN topology flips.
pub fn evaluate<S: Scalar>(
    model: &CharacteristicOrientationPredictor<S>,
    data: &Dataset<S>,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if model.knn_mode == KnnMode::Frozen {
        if let Perturb::Resample(_) = cfg.perturb {
            return Err(Error::Config {
                message: "frozen kNN mode cannot be combined with resampling \
                          (the cached graph would describe different points)"
                    .into(),
            });
        }
    }
    let mut classes = Vec::new();
    for class_id in data.classes() {
        let instances = data.of_class(&class_id);
        let mut warnings = Vec::new();
        if instances.len() == 1 {
            warnings.push(
                "single instance: consistency over one orientation is trivially zero".into(),
            );
        }
        let per_instance: Vec<InstanceReport> = instances
            .par_iter()
            .map(|pc| {
                let (stability_deg, degenerate_mean) = match model.knn_mode {
                    KnnMode::Adaptive => {
                        let orient = |c: &PointCloud<S>| {
                            model.predict(c, None).map(|p| p.orientation)
                        };
                        instance_stability(
                            &orient,
                            pc,
                            cfg.k_rotations,
                            cfg.seed,
                            cfg.perturb,
                        )?
                    }
                    KnnMode::Frozen => {
                        let graphs = model.compute_graphs(pc)?;
                        let orient = move |c: &PointCloud<S>| {
                            model.predict(c, Some(&graphs)).map(|p| p.orientation)
                        };
                        instance_stability(
                            &orient,
                            pc,
                            cfg.k_rotations,
                            cfg.seed,
                            cfg.perturb,
                        )?
                    }
                };
                Ok(InstanceReport {
                    instance_id: pc.instance_id.clone(),
                    stability_deg,
                    degenerate_mean,
                })
            })
            .collect::<Result<_>>()?;
        // Consistency in the stored frame; graphs are computed on the
        // clouds as presented, which matches both kNN modes.
        let orient =
            |c: &PointCloud<S>| model.predict(c, None).map(|p| p.orientation);
        let (consistency_deg, consistency_degenerate) = class_consistency(
            &orient,
            &instances,
            cfg.seed,
            cfg.consistency_on_rotated,
        )?;
        let stability_deg = per_instance
            .iter()
            .map(|i| i.stability_deg)
            .sum::<f64>()
            / per_instance.len().max(1) as f64;
        if per_instance.iter().any(|i| i.degenerate_mean) {
            warnings.push("at least one instance had a degenerate mean rotation".into());
        }
        classes.push(ClassReport {
            class_id,
            n_instances: instances.len(),
            stability_deg,
            consistency_deg,
            consistency_degenerate,
            instances: per_instance,
            warnings,
        });
    }
    if classes.is_empty() {
        return Err(Error::EmptyInput { op: "evaluate" });
    }
    let n = classes.len() as f64;
    Ok(EvalReport {
        k_rotations: cfg.k_rotations,
        seed: cfg.seed,
        precision: S::precision_name().to_string(),
        knn_mode: model.knn_mode.name().to_string(),
        perturb: cfg.perturb.name(),
        consistency_on_rotated: cfg.consistency_on_rotated,
        mean_stability_deg: classes.iter().map(|c| c.stability_deg).sum::<f64>() / n,
        mean_consistency_deg: classes.iter().map(|c| c.consistency_deg).sum::<f64>() / n,
        classes,
    })
}
