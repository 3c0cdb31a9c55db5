//! Dense row-major tensors and a define-by-run reverse-mode tape.
//!
//! The engine is deliberately small: enough primitives for vector-neuron
//! layers, local attention, and the Gram-Schmidt rotation heads, with
//! hand-written gradient rules for each. Values are generic over the
//! scalar type; double precision is the default throughout the library.

mod tape;

pub use tape::{Tape, Var};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of elements implied by a shape (empty shape = scalar = 1).
pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Dense tensor value. `grad` is populated by [`Tape::backward`] for
/// parameters (tensors with `requires_grad` set) that took part in the
/// forward graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S: Scalar> {
    pub shape: Vec<usize>,
    pub data: Vec<S>,
    pub requires_grad: bool,
    pub grad: Option<Vec<S>>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::BadShape {
                op: "tensor",
                expected: "positive extents".into(),
                got: shape,
            });
        }
        if numel(&shape) != data.len() {
            return Err(Error::BadShape {
                op: "tensor",
                expected: format!("{} data values", numel(&shape)),
                got: shape,
            });
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    /// Learnable tensor (participates in gradient computation).
    pub fn param(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let mut t = Self::new(shape, data)?;
        t.requires_grad = true;
        Ok(t)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = numel(&shape);
        Tensor {
            shape,
            data: vec![S::zero(); n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(v: S) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Convert element type, preserving the gradient flag (grads dropped).
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::fl(v.as_f64())).collect(),
            requires_grad: self.requires_grad,
            grad: None,
        }
    }
}

/// Row-major strides for a shape.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * shape[d + 1];
    }
    s
}

/// NumPy-style broadcast of two shapes (right-aligned; extent-1 dims stretch).
pub(crate) fn broadcast_shapes(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for d in 0..rank {
        let ea = if d >= rank - a.len() { a[d - (rank - a.len())] } else { 1 };
        let eb = if d >= rank - b.len() { b[d - (rank - b.len())] } else { 1 };
        out[d] = if ea == eb {
            ea
        } else if ea == 1 {
            eb
        } else if eb == 1 {
            ea
        } else {
            return Err(Error::ShapeMismatch {
                op,
                left: a.to_vec(),
                right: b.to_vec(),
            });
        };
    }
    Ok(out)
}

/// Strides of `shape` viewed as `out` (0 where broadcast), with each
/// position scaled by `elem` (used for batched matmul where the trailing
/// matrix block is the "element").
pub(crate) fn broadcast_strides(out: &[usize], shape: &[usize], elem: usize) -> Vec<usize> {
    let shp_strides = strides(shape);
    let mut s = vec![0; out.len()];
    let off = out.len() - shape.len();
    for d in 0..out.len() {
        if d >= off && shape[d - off] != 1 {
            s[d] = shp_strides[d - off] * elem;
        }
    }
    s
}

/// Sum `data` of shape `from` down to shape `to` (where `to` broadcasts to
/// `from`). Used to reduce gradients of broadcast operands.
pub(crate) fn reduce_to_shape<S: Scalar>(data: &[S], from: &[usize], to: &[usize]) -> Vec<S> {
    if from == to {
        return data.to_vec();
    }
    let mut out = vec![S::zero(); numel(to)];
    let to_strides = broadcast_strides(from, to, 1);
    let from_strides = strides(from);
    for (i, &v) in data.iter().enumerate() {
        let mut off = 0;
        for d in 0..from.len() {
            let id = (i / from_strides[d]) % from[d];
            off += id * to_strides[d];
        }
        out[off] += v;
    }
    out
}
