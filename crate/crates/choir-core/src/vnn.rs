//! Vector-neuron layers: rotation-equivariant building blocks over
//! features shaped `[N, C, 3]` (N points, C vector channels).
//!
//! Every layer maps rotated inputs to identically rotated outputs because
//! weights only mix the channel axis and nonlinearities act along learned
//! per-channel directions. The k-nearest-neighbor edge convolution keeps
//! this property with mean aggregation; max aggregation (optional) picks
//! coordinate-wise maxima and is **not** strictly equivariant.

use std::rc::Rc;

use crate::error::Result;
use crate::pointcloud::knn::KnnGraph;
use crate::scalar::Scalar;
use crate::tensor::{Tape, Var};

/// Stabilizer inside vector-neuron nonlinearities and the differentiable
/// Gram-Schmidt head (added under square roots / to divisors).
pub const VN_EPSILON: f64 = 1e-8;

/// How edge features are pooled over a point's neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum Aggregation {
    /// Average over neighbors; commutes with the linear layer, exactly
    /// rotation-equivariant.
    #[default]
    Mean,
    /// Coordinate-wise maximum over neighbors; sharper features but only
    /// approximately equivariant.
    Max,
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(Aggregation::Mean),
            "max" => Ok(Aggregation::Max),
            other => Err(format!("unknown aggregation '{other}' (mean|max)")),
        }
    }
}

impl Aggregation {
    pub fn name(self) -> &'static str {
        match self {
            Aggregation::Mean => "mean",
            Aggregation::Max => "max",
        }
    }
}

/// Channel-mixing linear map with no bias: `w [C_out, C_in]` applied to
/// `x [.., C_in, 3]`, yielding `[.., C_out, 3]`.
pub fn vn_linear<S: Scalar>(tape: &mut Tape<S>, w: Var, x: Var) -> Result<Var> {
    tape.matmul(w, x)
}

/// Direction-gated nonlinearity: where `<x, d> < 0`, remove the component
/// of `x` along `d`; elsewhere pass through. Written as a relu composition
/// so the recorded graph uses only primitive gradient rules:
/// `x + relu(-<x,d>) / (|d|^2 + eps) * d`.
pub fn vn_nonlinearity<S: Scalar>(tape: &mut Tape<S>, x: Var, d: Var) -> Result<Var> {
    let rank = tape.shape(x).len();
    let mut lane_shape = tape.shape(x).to_vec();
    lane_shape[rank - 1] = 1;
    let xd = tape.mul(x, d)?;
    let ip = tape.sum(xd, rank - 1)?;
    let ip = tape.reshape(ip, lane_shape.clone())?;
    let dd = tape.mul(d, d)?;
    let dsq = tape.sum(dd, rank - 1)?;
    let dsq = tape.reshape(dsq, lane_shape)?;
    let dsq = tape.add_scalar(dsq, S::fl(VN_EPSILON));
    let neg_ip = tape.neg(ip);
    let gate = tape.relu(neg_ip);
    let coef = tape.div(gate, dsq)?;
    let corr = tape.mul(coef, d)?;
    tape.add(x, corr)
}

/// Mean-pool the point axis: `[N, C, 3] -> [C, 3]`.
pub fn vn_mean_pool<S: Scalar>(tape: &mut Tape<S>, x: Var) -> Result<Var> {
    tape.mean(x, 0)
}

/// One equivariant edge-convolution block: build edge features from the
/// kNN graph, apply a channel-mixing linear map and a learned-direction
/// nonlinearity, and aggregate over the neighborhood.
///
/// With mean aggregation the neighbor average is taken *before* the
/// linear map (they commute), which avoids materializing per-edge
/// features.
pub fn edge_conv_block<S: Scalar>(
    tape: &mut Tape<S>,
    w_lin: Var,
    w_dir: Var,
    x: Var,
    graph: &KnnGraph,
    aggregation: Aggregation,
) -> Result<Var> {
    let n = tape.shape(x)[0];
    let idx = Rc::new(graph.indices.clone());
    match aggregation {
        Aggregation::Mean => {
            let nbr = tape.neighbor_mean(x, idx, graph.k)?;
            let rel = tape.sub(nbr, x)?;
            let edge = tape.concat(rel, x, 1)?;
            let y = vn_linear(tape, w_lin, edge)?;
            let d = vn_linear(tape, w_dir, edge)?;
            vn_nonlinearity(tape, y, d)
        }
        Aggregation::Max => {
            let c = tape.shape(x)[1];
            let k = graph.k;
            let nbr = tape.gather_rows(x, idx)?; // [N*k, C, 3]
            let nbr = tape.reshape(nbr, vec![n, k, c, 3])?;
            let center_idx: Vec<u32> = (0..n as u32)
                .flat_map(|i| std::iter::repeat(i).take(k))
                .collect();
            let center = tape.gather_rows(x, Rc::new(center_idx))?;
            let center = tape.reshape(center, vec![n, k, c, 3])?;
            let rel = tape.sub(nbr, center)?;
            let edge = tape.concat(rel, center, 2)?; // [N, k, 2C, 3]
            let y = vn_linear(tape, w_lin, edge)?; // [N, k, C_out, 3]
            let d = vn_linear(tape, w_dir, edge)?;
            let act = vn_nonlinearity(tape, y, d)?;
            tape.max(act, 1)
        }
    }
}

/// Rotation-invariant pairing `a b^T` contracted over coordinates:
/// `a [N, C, 3]` against a global frame `b [3, 3]` gives `[N, C, 3]`
/// whose entries are inner products (invariant when both rotate).
pub fn invariant_product<S: Scalar>(tape: &mut Tape<S>, a: Var, b: Var) -> Result<Var> {
    let bt = tape.swap_axes(b, 0, 1)?;
    tape.matmul(a, bt)
}

/// Differentiable Gram-Schmidt head used during training: take a `[2, 3]`
/// tensor of two predicted vectors and return a `[3, 3]` tensor whose
/// *rows* are the orthonormalized frame (third row the cross product).
///
/// Norms are regularized with `VN_EPSILON` under the square roots, so the
/// result is only approximately orthonormal near degeneracy; inference
/// uses the exact (strict) Gram-Schmidt instead and reports degenerate
/// inputs as errors.
pub fn gram_schmidt_rows_tape<S: Scalar>(tape: &mut Tape<S>, uv: Var) -> Result<Var> {
    let eps = S::fl(VN_EPSILON);
    let u = tape.slice(uv, 0, 0, 1)?; // [1, 3]
    let v = tape.slice(uv, 0, 1, 1)?; // [1, 3]
    let uu = tape.mul(u, u)?;
    let usq = tape.sum(uu, 1)?;
    let usq = tape.reshape(usq, vec![1, 1])?;
    let usq = tape.add_scalar(usq, eps);
    let un = tape.sqrt(usq)?;
    let e1 = tape.div(u, un)?;
    let ve = tape.mul(v, e1)?;
    let proj = tape.sum(ve, 1)?;
    let proj = tape.reshape(proj, vec![1, 1])?;
    let along = tape.mul(proj, e1)?;
    let w = tape.sub(v, along)?;
    let ww = tape.mul(w, w)?;
    let wsq = tape.sum(ww, 1)?;
    let wsq = tape.reshape(wsq, vec![1, 1])?;
    let wsq = tape.add_scalar(wsq, eps);
    let wn = tape.sqrt(wsq)?;
    let e2 = tape.div(w, wn)?;
    let e3 = tape.cross3(e1, e2)?;
    let top = tape.concat(e1, e2, 0)?;
    tape.concat(top, e3, 0)
}
