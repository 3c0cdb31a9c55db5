//! Residual rotation predictor and the composed orientation model.
//!
//! The residual stage sees only rotation-invariant inputs — the
//! hypothetically canonicalized coordinates `P H^T` and inner products of
//! encoder features with the auxiliary frame — so its output rotation `G`
//! is invariant, and the composition `f = G H` stays equivariant while
//! `G` corrects whatever systematic bias the hypothesizer head carries.

use std::rc::Rc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::hypothesizer::{
    canonicalize_on_tape, rows_from_head_value, Hypothesizer, HypothesizerConfig,
    HypothesizerVars,
};
use crate::params::{var, ParamSet, VarMap};
use crate::pointcloud::knn::{knn, KnnGraph};
use crate::pointcloud::PointCloud;
use crate::rng::stream;
use crate::scalar::Scalar;
use crate::so3::Rotation;
use crate::tensor::{Tape, Var};
use crate::vnn::{gram_schmidt_rows_tape, invariant_product};

/// Residual stage layout: embedding width, number of local-attention
/// blocks, attention neighborhood size, and the position-MLP hidden width.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ResidualConfig {
    pub hidden: usize,
    pub blocks: usize,
    pub k_att: usize,
    pub pos_hidden: usize,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        ResidualConfig {
            hidden: 64,
            blocks: 2,
            k_att: 16,
            pos_hidden: 16,
        }
    }
}

impl ResidualConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.blocks == 0 || self.k_att == 0 || self.pos_hidden == 0 {
            return Err(Error::Config {
                message: format!(
                    "residual layout must be positive: hidden {}, blocks {}, k_att {}, \
                     pos_hidden {}",
                    self.hidden, self.blocks, self.k_att, self.pos_hidden
                ),
            });
        }
        Ok(())
    }
}

/// Invariant point-transformer stage predicting the residual rotation.
#[derive(Debug, Clone)]
pub struct ResidualPredictor {
    pub config: ResidualConfig,
    /// Invariant feature width it was built for (3 + 3 * encoder channels).
    pub in_features: usize,
}

impl ResidualPredictor {
    pub fn new(config: ResidualConfig, in_features: usize) -> Result<Self> {
        config.validate()?;
        Ok(ResidualPredictor {
            config,
            in_features,
        })
    }

    pub fn init_params<S: Scalar, R: Rng + ?Sized>(
        &self,
        params: &mut ParamSet<S>,
        prefix: &str,
        rng: &mut R,
    ) -> Result<()> {
        let h = self.config.hidden;
        let p = self.config.pos_hidden;
        params.add_normal(
            format!("{prefix}embed.weight"),
            vec![self.in_features, h],
            self.in_features,
            rng,
        )?;
        params.add_zeros(format!("{prefix}embed.bias"), vec![h])?;
        for b in 0..self.config.blocks {
            for role in ["query", "key", "value"] {
                params.add_normal(format!("{prefix}block{b}.{role}.weight"), vec![h, h], h, rng)?;
                params.add_zeros(format!("{prefix}block{b}.{role}.bias"), vec![h])?;
            }
            params.add_normal(format!("{prefix}block{b}.pos.w1"), vec![3, p], 3, rng)?;
            params.add_zeros(format!("{prefix}block{b}.pos.b1"), vec![p])?;
            params.add_normal(format!("{prefix}block{b}.pos.w2"), vec![p, h], p, rng)?;
            params.add_zeros(format!("{prefix}block{b}.pos.b2"), vec![h])?;
            params.add_normal(format!("{prefix}block{b}.out.weight"), vec![h, h], h, rng)?;
            params.add_zeros(format!("{prefix}block{b}.out.bias"), vec![h])?;
        }
        params.add_normal(format!("{prefix}head.weight"), vec![h, 6], h, rng)?;
        params.add_zeros(format!("{prefix}head.bias"), vec![6])?;
        Ok(())
    }

    /// Run the residual stage. `canon [N, 3]` are hypothetically
    /// canonicalized coordinates, `inv [N, F]` the flattened invariant
    /// features, and `graph` a kNN graph over `canon` with `k_att`
    /// neighbors. Returns the raw `[2, 3]` head and the `[3, 3]` rows.
    pub fn forward_on_tape<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        vars: &VarMap,
        prefix: &str,
        canon: Var,
        inv: Var,
        graph: &KnnGraph,
    ) -> Result<(Var, Var)> {
        let n = tape.shape(canon)[0];
        let h = self.config.hidden;
        let k = self.config.k_att;
        if graph.n != n || graph.k != k {
            return Err(Error::Config {
                message: format!(
                    "attention graph ({} points, k = {}) does not match the cloud \
                     ({n} points, k_att = {k})",
                    graph.n, graph.k
                ),
            });
        }
        let x0 = tape.concat(canon, inv, 1)?;
        let mut z = self.linear(tape, vars, &format!("{prefix}embed"), x0)?;
        z = tape.relu(z);

        let idx = Rc::new(graph.indices.clone());
        let center_idx: Rc<Vec<u32>> = Rc::new(
            (0..n as u32)
                .flat_map(|i| std::iter::repeat(i).take(k))
                .collect(),
        );
        let scale = S::fl(1.0 / (h as f64).sqrt());
        for b in 0..self.config.blocks {
            let q = self.linear(tape, vars, &format!("{prefix}block{b}.query"), z)?;
            let key = self.linear(tape, vars, &format!("{prefix}block{b}.key"), z)?;
            let val = self.linear(tape, vars, &format!("{prefix}block{b}.value"), z)?;
            let kj = tape.gather_rows(key, idx.clone())?;
            let kj = tape.reshape(kj, vec![n, k, h])?;
            let vj = tape.gather_rows(val, idx.clone())?;
            let vj = tape.reshape(vj, vec![n, k, h])?;
            // Relative-position encoding of each edge.
            let cj = tape.gather_rows(canon, idx.clone())?;
            let ci = tape.gather_rows(canon, center_idx.clone())?;
            let rel = tape.sub(cj, ci)?;
            let w1 = var(vars, &format!("{prefix}block{b}.pos.w1"))?;
            let b1 = var(vars, &format!("{prefix}block{b}.pos.b1"))?;
            let w2 = var(vars, &format!("{prefix}block{b}.pos.w2"))?;
            let b2 = var(vars, &format!("{prefix}block{b}.pos.b2"))?;
            let p1 = tape.matmul(rel, w1)?;
            let p1 = tape.add(p1, b1)?;
            let p1 = tape.relu(p1);
            let delta = tape.matmul(p1, w2)?;
            let delta = tape.add(delta, b2)?;
            let delta = tape.reshape(delta, vec![n, k, h])?;

            let qi = tape.reshape(q, vec![n, 1, h])?;
            let keyed = tape.add(kj, delta)?;
            let qk = tape.mul(qi, keyed)?;
            let scores = tape.sum(qk, 2)?;
            let scores = tape.scale(scores, scale);
            let alpha = tape.softmax(scores, 1)?;
            let alpha = tape.reshape(alpha, vec![n, k, 1])?;
            let valued = tape.add(vj, delta)?;
            let weighted = tape.mul(alpha, valued)?;
            let attn = tape.sum(weighted, 1)?;
            let merged = self.linear(tape, vars, &format!("{prefix}block{b}.out"), attn)?;
            let zsum = tape.add(z, merged)?;
            z = tape.relu(zsum);
        }
        let pooled = tape.mean(z, 0)?;
        let pooled = tape.reshape(pooled, vec![1, h])?;
        let uv6 = self.linear(tape, vars, &format!("{prefix}head"), pooled)?;
        let head_uv = tape.reshape(uv6, vec![2, 3])?;
        let rows = gram_schmidt_rows_tape(tape, head_uv)?;
        Ok((head_uv, rows))
    }

    fn linear<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        vars: &VarMap,
        stem: &str,
        x: Var,
    ) -> Result<Var> {
        let w = var(vars, &format!("{stem}.weight"))?;
        let b = var(vars, &format!("{stem}.bias"))?;
        let y = tape.matmul(x, w)?;
        tape.add(y, b)
    }
}

/// Whether kNN graphs follow the cloud as presented (recomputed per call)
/// or are built once on a reference pose and reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum KnnMode {
    #[default]
    Adaptive,
    Frozen,
}

impl KnnMode {
    pub fn name(self) -> &'static str {
        match self {
            KnnMode::Adaptive => "adaptive",
            KnnMode::Frozen => "frozen",
        }
    }
}

impl std::str::FromStr for KnnMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "adaptive" => Ok(KnnMode::Adaptive),
            "frozen" => Ok(KnnMode::Frozen),
            other => Err(format!("unknown knn mode '{other}' (adaptive|frozen)")),
        }
    }
}

/// kNN graphs for one forward pass: the encoder graph over the input
/// cloud and (when the residual stage runs) the attention graph over the
/// hypothetically canonicalized cloud.
#[derive(Debug, Clone)]
pub struct Graphs {
    pub encoder: KnnGraph,
    pub attention: Option<KnnGraph>,
}

/// Full model configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PredictorConfig {
    pub hypothesizer: HypothesizerConfig,
    pub residual: ResidualConfig,
    pub knn_mode: KnnMode,
    pub use_residual: bool,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            hypothesizer: HypothesizerConfig::default(),
            residual: ResidualConfig::default(),
            knn_mode: KnnMode::Adaptive,
            use_residual: true,
        }
    }
}

/// Tape handles from a full forward pass.
pub struct ForwardVars {
    /// Input points `[N, 3]`.
    pub points: Var,
    pub hypothesizer: HypothesizerVars,
    /// Hypothetically canonicalized points `P H^T`, `[N, 3]`.
    pub canon: Var,
    /// Flattened invariant features `[N, 3C]` (residual stage only).
    pub invariant: Option<Var>,
    /// Residual raw head `[2, 3]` and rows `[3, 3]` (residual stage only).
    pub residual_uv: Option<Var>,
    pub residual_rows: Option<Var>,
    /// Final orientation rows `[3, 3]`: `G H` with residual, else `H`.
    pub rows: Var,
    /// Graphs actually used (reusable for frozen-mode evaluation).
    pub graphs: Graphs,
}

/// Eagerly extracted prediction.
#[derive(Debug, Clone)]
pub struct Prediction<S: Scalar> {
    /// Characteristic orientation `f(P)` (row frame).
    pub orientation: Rotation<S>,
    /// Hypothesizer output `H`.
    pub hypothesis: Rotation<S>,
    /// Residual rotation `G` (identity when the stage is disabled).
    pub residual: Rotation<S>,
}

/// The composed orientation model: equivariant hypothesizer plus
/// invariant residual stage, with its learned parameters.
#[derive(Debug, Clone)]
pub struct CharacteristicOrientationPredictor<S: Scalar> {
    pub hypothesizer: Hypothesizer,
    pub residual: ResidualPredictor,
    pub knn_mode: KnnMode,
    pub use_residual: bool,
    pub params: ParamSet<S>,
}

impl<S: Scalar> CharacteristicOrientationPredictor<S> {
    /// Build a model with freshly initialized parameters (deterministic in
    /// `seed`).
    pub fn new(config: PredictorConfig, seed: u64) -> Result<Self> {
        let hypothesizer = Hypothesizer::new(config.hypothesizer.clone())?;
        let in_features = 3 + 3 * config.hypothesizer.feature_channels();
        let residual = ResidualPredictor::new(config.residual.clone(), in_features)?;
        let mut params = ParamSet::new();
        let mut rng = stream("init", &[seed]);
        hypothesizer.init_params(&mut params, "hypothesizer.", &mut rng)?;
        residual.init_params(&mut params, "residual.", &mut rng)?;
        Ok(CharacteristicOrientationPredictor {
            hypothesizer,
            residual,
            knn_mode: config.knn_mode,
            use_residual: config.use_residual,
            params,
        })
    }

    pub fn config(&self) -> PredictorConfig {
        PredictorConfig {
            hypothesizer: self.hypothesizer.config.clone(),
            residual: self.residual.config.clone(),
            knn_mode: self.knn_mode,
            use_residual: self.use_residual,
        }
    }

    /// Record a full forward pass of `cloud` on `tape` using parameter
    /// vars from [`ParamSet::leaf_all`]. When `graphs` is `None` the kNN
    /// graphs are computed from the presented cloud (adaptive); passing
    /// graphs from a reference pose gives frozen-graph behavior.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape<S>,
        vars: &VarMap,
        cloud: &PointCloud<S>,
        graphs: Option<&Graphs>,
    ) -> Result<ForwardVars> {
        let n = cloud.len();
        if n <= self.hypothesizer.config.k || (self.use_residual && n <= self.residual.config.k_att)
        {
            let required = self.hypothesizer.config.k.max(if self.use_residual {
                self.residual.config.k_att
            } else {
                0
            }) + 1;
            return Err(Error::TooFewPoints {
                n,
                required,
                context: "model forward pass (kNN neighborhoods)".into(),
            });
        }
        let encoder_graph = match graphs {
            Some(g) => g.encoder.clone(),
            None => knn(cloud, self.hypothesizer.config.k, S::precision())?,
        };
        let flat: Vec<S> = cloud.points.iter().flatten().copied().collect();
        let points = tape.leaf(vec![n, 3], flat, false)?;
        let hyp =
            self.hypothesizer
                .forward_on_tape(tape, vars, "hypothesizer.", points, &encoder_graph)?;
        let canon = canonicalize_on_tape(tape, points, hyp.rows)?;
        if !self.use_residual {
            return Ok(ForwardVars {
                points,
                hypothesizer: hyp,
                canon,
                invariant: None,
                residual_uv: None,
                residual_rows: None,
                rows: hyp.rows,
                graphs: Graphs {
                    encoder: encoder_graph,
                    attention: None,
                },
            });
        }
        let attention_graph = match graphs {
            Some(Graphs {
                attention: Some(g), ..
            }) => g.clone(),
            Some(Graphs {
                attention: None, ..
            }) => {
                return Err(Error::Config {
                    message: "frozen graphs lack the attention graph the residual stage needs"
                        .into(),
                })
            }
            None => {
                // Topology comes from canonicalized *values*; gradients do
                // not flow through graph construction.
                let canon_cloud = cloud_from_values(tape.value(canon), cloud);
                knn(&canon_cloud, self.residual.config.k_att, S::precision())?
            }
        };
        let c = self.hypothesizer.config.feature_channels();
        let inv3 = invariant_product(tape, hyp.features, hyp.aux)?;
        let inv = tape.reshape(inv3, vec![n, 3 * c])?;
        let (res_uv, res_rows) =
            self.residual
                .forward_on_tape(tape, vars, "residual.", canon, inv, &attention_graph)?;
        let rows = tape.matmul(res_rows, hyp.rows)?;
        Ok(ForwardVars {
            points,
            hypothesizer: hyp,
            canon,
            invariant: Some(inv),
            residual_uv: Some(res_uv),
            residual_rows: Some(res_rows),
            rows,
            graphs: Graphs {
                encoder: encoder_graph,
                attention: Some(attention_graph),
            },
        })
    }

    /// Graphs an adaptive forward pass over `cloud` would use; freeze and
    /// reuse them to evaluate rotated copies with fixed topology.
    pub fn compute_graphs(&self, cloud: &PointCloud<S>) -> Result<Graphs> {
        let mut tape = Tape::new();
        let vars = self.params.leaf_all(&mut tape);
        let fwd = self.forward_on_tape(&mut tape, &vars, cloud, None)?;
        Ok(fwd.graphs)
    }

    /// Predict the characteristic orientation of `cloud`, extracting the
    /// exact (strict Gram-Schmidt) rotations from the raw heads.
    pub fn predict(&self, cloud: &PointCloud<S>, graphs: Option<&Graphs>) -> Result<Prediction<S>> {
        let mut tape = Tape::new();
        let vars = self.params.leaf_all(&mut tape);
        let fwd = self.forward_on_tape(&mut tape, &vars, cloud, graphs)?;
        self.extract_prediction(&tape, &fwd)
    }

    /// Strict eager extraction from an existing forward pass.
    pub fn extract_prediction(
        &self,
        tape: &Tape<S>,
        fwd: &ForwardVars,
    ) -> Result<Prediction<S>> {
        let hypothesis = rows_from_head_value(tape.value(fwd.hypothesizer.head_uv))?;
        let residual = match fwd.residual_uv {
            Some(uv) => rows_from_head_value(tape.value(uv))?,
            None => Rotation::identity(),
        };
        let orientation = residual.compose(&hypothesis);
        Ok(Prediction {
            orientation,
            hypothesis,
            residual,
        })
    }

    /// Express `cloud` in its predicted characteristic orientation:
    /// returns `P f(P)^T` and the orientation used.
    pub fn canonicalize(
        &self,
        cloud: &PointCloud<S>,
        graphs: Option<&Graphs>,
    ) -> Result<(PointCloud<S>, Rotation<S>)> {
        let pred = self.predict(cloud, graphs)?;
        let canon = cloud.apply_rotation(&pred.orientation.transpose());
        Ok((canon, pred.orientation))
    }

    /// Express `cloud` in the hypothesized orientation only (`P H^T`).
    pub fn canonicalize_hypothetically(
        &self,
        cloud: &PointCloud<S>,
        graphs: Option<&Graphs>,
    ) -> Result<(PointCloud<S>, Rotation<S>)> {
        let pred = self.predict(cloud, graphs)?;
        let canon = cloud.apply_rotation(&pred.hypothesis.transpose());
        Ok((canon, pred.hypothesis))
    }

    pub fn cast<T: Scalar>(&self) -> CharacteristicOrientationPredictor<T> {
        CharacteristicOrientationPredictor {
            hypothesizer: self.hypothesizer.clone(),
            residual: self.residual.clone(),
            knn_mode: self.knn_mode,
            use_residual: self.use_residual,
            params: self.params.cast(),
        }
    }
}

/// Rebuild a cloud from flat tape values, keeping identity labels.
fn cloud_from_values<S: Scalar>(values: &[S], like: &PointCloud<S>) -> PointCloud<S> {
    let points = values
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    PointCloud::new(points, like.class_id.clone(), like.instance_id.clone())
}
