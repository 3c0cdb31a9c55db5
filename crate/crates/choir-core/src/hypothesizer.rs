//! Orientation hypothesizer: a rotation-equivariant vector-neuron encoder
//! whose head emits two 3-vectors that Gram-Schmidt into a hypothesized
//! orientation `H`, plus an equivariant auxiliary frame `V` used to form
//! rotation-invariant features for the residual stage.
//!
//! Equivariance is with respect to right multiplication of row-vector
//! points: feeding `P R` yields features `x R`, frame `V R`, and
//! orientation `H R`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{var, ParamSet, VarMap};
use crate::pointcloud::knn::KnnGraph;
use crate::pointcloud::PointCloud;
use crate::scalar::Scalar;
use crate::so3::{gram_schmidt_frame, Rotation};
use crate::tensor::{Tape, Var};
use crate::vnn::{
    edge_conv_block, gram_schmidt_rows_tape, vn_mean_pool, vn_nonlinearity,
    Aggregation,
};

/// Encoder/head layout. `widths` are the per-block channel counts of the
/// edge-convolution stack; `k` the neighborhood size.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HypothesizerConfig {
    pub widths: Vec<usize>,
    pub k: usize,
    pub aggregation: Aggregation,
}

impl Default for HypothesizerConfig {
    fn default() -> Self {
        HypothesizerConfig {
            widths: vec![8, 16, 32, 64],
            k: 20,
            aggregation: Aggregation::Mean,
        }
    }
}

impl HypothesizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.iter().any(|&w| w == 0) {
            return Err(Error::Config {
                message: format!("encoder widths must be nonempty and positive, got {:?}", self.widths),
            });
        }
        if self.k == 0 {
            return Err(Error::Config {
                message: "neighborhood size k must be >= 1".into(),
            });
        }
        Ok(())
    }

    /// Channel count of the final encoder block.
    pub fn feature_channels(&self) -> usize {
        *self.widths.last().expect("validated nonempty")
    }
}

/// Equivariant feature trunk + orientation head + auxiliary frame.
#[derive(Debug, Clone)]
pub struct Hypothesizer {
    pub config: HypothesizerConfig,
}

/// Tape handles produced by one hypothesizer forward pass.
#[derive(Debug, Clone, Copy)]
pub struct HypothesizerVars {
    /// Encoder features `[N, C, 3]` (equivariant).
    pub features: Var,
    /// Auxiliary global frame `[3, 3]` (equivariant rows).
    pub aux: Var,
    /// Raw head output `[2, 3]` before orthonormalization.
    pub head_uv: Var,
    /// Hypothesized orientation `[3, 3]`, rows orthonormal (regularized).
    pub rows: Var,
}

impl Hypothesizer {
    pub fn new(config: HypothesizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Hypothesizer { config })
    }

    /// Register parameters under `prefix` (e.g. `"hypothesizer."`).
    pub fn init_params<S: Scalar, R: Rng + ?Sized>(
        &self,
        params: &mut ParamSet<S>,
        prefix: &str,
        rng: &mut R,
    ) -> Result<()> {
        let mut c_in = 1;
        for (i, &c_out) in self.config.widths.iter().enumerate() {
            let fan = 2 * c_in;
            params.add_normal(
                format!("{prefix}encoder.block{i}.linear.weight"),
                vec![c_out, 2 * c_in],
                fan,
                rng,
            )?;
            params.add_normal(
                format!("{prefix}encoder.block{i}.dir.weight"),
                vec![c_out, 2 * c_in],
                fan,
                rng,
            )?;
            c_in = c_out;
        }
        let c = self.config.feature_channels();
        params.add_normal(format!("{prefix}head.weight"), vec![2, c], c, rng)?;
        params.add_normal(format!("{prefix}aux.linear.weight"), vec![3, c], c, rng)?;
        params.add_normal(format!("{prefix}aux.dir.weight"), vec![3, 3], 3, rng)?;
        Ok(())
    }

    /// Run the encoder on a cloud already recorded as `points [N, 3]`.
    /// The kNN `graph` must describe the same cloud.
    pub fn forward_on_tape<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        vars: &VarMap,
        prefix: &str,
        points: Var,
        graph: &KnnGraph,
    ) -> Result<HypothesizerVars> {
        let n = tape.shape(points)[0];
        if graph.n != n || graph.k != self.config.k {
            return Err(Error::Config {
                message: format!(
                    "kNN graph ({} points, k = {}) does not match the cloud \
                     ({n} points, k = {})",
                    graph.n, graph.k, self.config.k
                ),
            });
        }
        // Lift points to one vector channel per point.
        let mut x = tape.reshape(points, vec![n, 1, 3])?;
        for i in 0..self.config.widths.len() {
            let w_lin = var(vars, &format!("{prefix}encoder.block{i}.linear.weight"))?;
            let w_dir = var(vars, &format!("{prefix}encoder.block{i}.dir.weight"))?;
            x = edge_conv_block(tape, w_lin, w_dir, x, graph, self.config.aggregation)?;
        }
        let pooled = vn_mean_pool(tape, x)?; // [C, 3]
        let w_head = var(vars, &format!("{prefix}head.weight"))?;
        let head_uv = tape.matmul(w_head, pooled)?; // [2, 3]
        let rows = gram_schmidt_rows_tape(tape, head_uv)?;
        let w_aux = var(vars, &format!("{prefix}aux.linear.weight"))?;
        let w_aux_dir = var(vars, &format!("{prefix}aux.dir.weight"))?;
        let aux_pre = tape.matmul(w_aux, pooled)?; // [3, 3]
        let aux_dir = tape.matmul(w_aux_dir, aux_pre)?;
        let aux = vn_nonlinearity(tape, aux_pre, aux_dir)?;
        Ok(HypothesizerVars {
            features: x,
            aux,
            head_uv,
            rows,
        })
    }
}

/// Exact orientation from a raw `[2, 3]` head value: strict Gram-Schmidt
/// returning the row-frame rotation (degenerate heads are hard errors).
pub fn rows_from_head_value<S: Scalar>(uv: &[S]) -> Result<Rotation<S>> {
    debug_assert_eq!(uv.len(), 6);
    let u = [uv[0], uv[1], uv[2]];
    let v = [uv[3], uv[4], uv[5]];
    Ok(gram_schmidt_frame(u, v)?.transpose())
}

/// Hypothetical canonicalization `P H^T`, recorded on the tape so
/// gradients flow through both the points and the frame.
pub fn canonicalize_on_tape<S: Scalar>(
    tape: &mut Tape<S>,
    points: Var,
    rows: Var,
) -> Result<Var> {
    let ht = tape.swap_axes(rows, 0, 1)?;
    tape.matmul(points, ht)
}

/// Eager hypothetical canonicalization of a cloud by a row-frame rotation.
pub fn canonicalize_cloud<S: Scalar>(pc: &PointCloud<S>, rows: &Rotation<S>) -> PointCloud<S> {
    pc.apply_rotation(&rows.transpose())
}
