use std::rc::Rc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{broadcast_shapes, broadcast_strides, numel, reduce_to_shape, strides, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug)]
enum Op<S: Scalar> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Relu(Var),
    Sqrt(Var),
    Scale(Var, S),
    AddScalar(Var),
    Matmul(Var, Var),
    Sum(Var, usize),
    Mean(Var, usize),
    /// Max over an axis; records the flat input index of each winner.
    Max(Var, Vec<u32>),
    Softmax(Var, usize),
    /// Row gather along axis 0.
    Gather(Var, Rc<Vec<u32>>),
    /// Fused per-row mean over k gathered rows (kNN aggregation).
    NeighborMean(Var, Rc<Vec<u32>>, usize),
    Concat(Var, Var, usize),
    Reshape(Var),
    SwapAxes(Var, usize, usize),
    Slice(Var, usize, usize),
    Cross3(Var, Var),
}

#[derive(Debug)]
struct Node<S: Scalar> {
    shape: Vec<usize>,
    value: Vec<S>,
    requires_grad: bool,
    op: Op<S>,
}

/// Define-by-run tape: every operation computes its value eagerly and
/// records the inputs needed for the reverse pass. A tape is built fresh
/// for each forward pass and replayed in reverse exactly once per
/// [`Tape::backward`] call; identical inputs replay to bitwise-identical
/// values and gradients.
#[derive(Debug, Default)]
pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
    grads: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[S] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Value of a single-element tensor.
    pub fn scalar_value(&self, v: Var) -> S {
        debug_assert_eq!(self.nodes[v.0].value.len(), 1);
        self.nodes[v.0].value[0]
    }

    /// Gradient of the last `backward` loss wrt `v`, if `v` required one.
    pub fn grad(&self, v: Var) -> Option<&[S]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<S>, requires_grad: bool, op: Op<S>) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node {
            shape,
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, shape: Vec<usize>, data: Vec<S>, requires_grad: bool) -> Result<Var> {
        if shape.iter().any(|&e| e == 0) || numel(&shape) != data.len() {
            return Err(Error::BadShape {
                op: "leaf",
                expected: format!("{} data values, positive extents", data.len()),
                got: shape,
            });
        }
        Ok(self.push(shape, data, requires_grad, Op::Leaf))
    }

    pub fn leaf_tensor(&mut self, t: &Tensor<S>) -> Var {
        self.push(
            t.shape.clone(),
            t.data.clone(),
            t.requires_grad,
            Op::Leaf,
        )
    }

    /// Constant scalar leaf.
    pub fn scalar(&mut self, v: S) -> Var {
        self.push(vec![], vec![v], false, Op::Leaf)
    }

    // ---- elementwise ----

    fn binary(
        &mut self,
        op_name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(S, S) -> S,
        op: impl Fn(Var, Var) -> Op<S>,
    ) -> Result<Var> {
        let (shape, value) = {
            let na = &self.nodes[a.0];
            let nb = &self.nodes[b.0];
            let shape = broadcast_shapes(op_name, &na.shape, &nb.shape)?;
            let value = ew_binary(&shape, &na.shape, &na.value, &nb.shape, &nb.value, f);
            (shape, value)
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, value, rg, op(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.nodes[b.0].value.iter().any(|v| *v == S::zero()) {
            return Err(Error::DivisionByZero);
        }
        self.binary("div", a, b, |x, y| x / y, Op::Div)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.iter().map(|&v| -v).collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.rg(a);
        self.push(shape, value, rg, Op::Neg(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0]
            .value
            .iter()
            .map(|&v| if v > S::zero() { v } else { S::zero() })
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.rg(a);
        self.push(shape, value, rg, Op::Relu(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if self.nodes[a.0].value.iter().any(|v| *v < S::zero()) {
            return Err(Error::NonFinite {
                context: "sqrt of negative value".into(),
            });
        }
        let value = self.nodes[a.0].value.iter().map(|v| v.sqrt()).collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.rg(a);
        Ok(self.push(shape, value, rg, Op::Sqrt(a)))
    }

    pub fn scale(&mut self, a: Var, c: S) -> Var {
        let value = self.nodes[a.0].value.iter().map(|&v| v * c).collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.rg(a);
        self.push(shape, value, rg, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: S) -> Var {
        let value = self.nodes[a.0].value.iter().map(|&v| v + c).collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.rg(a);
        self.push(shape, value, rg, Op::AddScalar(a))
    }

    // ---- matmul ----

    /// Batched matrix product with broadcasting over leading batch dims.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, value) = {
            let na = &self.nodes[a.0];
            let nb = &self.nodes[b.0];
            matmul_forward(&na.shape, &na.value, &nb.shape, &nb.value)?
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, value, rg, Op::Matmul(a, b)))
    }

    // ---- reductions ----

    fn check_axis(&self, op: &'static str, a: Var, axis: usize) -> Result<()> {
        let rank = self.nodes[a.0].shape.len();
        if axis >= rank {
            return Err(Error::InvalidAxis { op, axis, rank });
        }
        Ok(())
    }

    pub fn sum(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.check_axis("sum", a, axis)?;
        let (shape, value) = {
            let n = &self.nodes[a.0];
            reduce_sum(&n.shape, &n.value, axis)
        };
        let rg = self.rg(a);
        Ok(self.push(shape, value, rg, Op::Sum(a, axis)))
    }

    pub fn mean(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.check_axis("mean", a, axis)?;
        let (shape, mut value) = {
            let n = &self.nodes[a.0];
            reduce_sum(&n.shape, &n.value, axis)
        };
        let inv = S::one() / S::fl(self.nodes[a.0].shape[axis] as f64);
        for v in &mut value {
            *v *= inv;
        }
        let rg = self.rg(a);
        Ok(self.push(shape, value, rg, Op::Mean(a, axis)))
    }

    /// Max over an axis. The subgradient flows to the first maximal
    /// element along the axis (lowest index on ties).
    pub fn max(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.check_axis("max", a, axis)?;
        let (shape, value, arg) = {
            let n = &self.nodes[a.0];
            let st = strides(&n.shape);
            let extent = n.shape[axis];
            let stride = st[axis];
            let mut shape = n.shape.clone();
            shape.remove(axis);
            let out_n = numel(&shape);
            let outer_stride = stride * extent;
            let mut value = Vec::with_capacity(out_n);
            let mut arg = Vec::with_capacity(out_n);
            for o in 0..out_n {
                let base = (o / stride) * outer_stride + (o % stride);
                let mut best = n.value[base];
                let mut best_i = 0u32;
                for j in 1..extent {
                    let v = n.value[base + j * stride];
                    if v > best {
                        best = v;
                        best_i = j as u32;
                    }
                }
                value.push(best);
                arg.push((base + best_i as usize * stride) as u32);
            }
            (shape, value, arg)
        };
        let rg = self.rg(a);
        Ok(self.push(shape, value, rg, Op::Max(a, arg)))
    }

    /// Reduce all elements to a scalar by summation.
    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let n = self.nodes[a.0].value.len();
        let flat = self.reshape(a, vec![n])?;
        self.sum(flat, 0)
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.check_axis("softmax", a, axis)?;
        if self.nodes[a.0].value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "softmax input".into(),
            });
        }
        let (shape, value) = {
            let n = &self.nodes[a.0];
            let st = strides(&n.shape);
            let extent = n.shape[axis];
            let stride = st[axis];
            let outer_stride = stride * extent;
            let lanes = n.value.len() / extent;
            let mut value = vec![S::zero(); n.value.len()];
            for o in 0..lanes {
                let base = (o / stride) * outer_stride + (o % stride);
                let mut m = n.value[base];
                for j in 1..extent {
                    let v = n.value[base + j * stride];
                    if v > m {
                        m = v;
                    }
                }
                let mut total = S::zero();
                for j in 0..extent {
                    let e = (n.value[base + j * stride] - m).exp();
                    value[base + j * stride] = e;
                    total += e;
                }
                for j in 0..extent {
                    value[base + j * stride] /= total;
                }
            }
            (n.shape.clone(), value)
        };
        let rg = self.rg(a);
        Ok(self.push(shape, value, rg, Op::Softmax(a, axis)))
    }

    // ---- structural ----

    /// Gather rows along axis 0: out[r] = a[idx[r]].
    pub fn gather_rows(&mut self, a: Var, idx: Rc<Vec<u32>>) -> Result<Var> {
        let (shape, value) = {
            let n = &self.nodes[a.0];
            if n.shape.is_empty() {
                return Err(Error::BadShape {
                    op: "gather",
                    expected: "rank >= 1".into(),
                    got: n.shape.clone(),
                });
            }
            let rows = n.shape[0];
            let rowsz = n.value.len() / rows;
            let mut value = Vec::with_capacity(idx.len() * rowsz);
            for &r in idx.iter() {
                let r = r as usize;
                if r >= rows {
                    return Err(Error::IndexOutOfRange {
                        op: "gather",
                        index: r,
                        bound: rows,
                    });
                }
                value.extend_from_slice(&n.value[r * rowsz..(r + 1) * rowsz]);
            }
            let mut shape = n.shape.clone();
            shape[0] = idx.len();
            (shape, value)
        };
        let rg = self.rg(a);
        Ok(self.push(shape, value, rg, Op::Gather(a, idx)))
    }

    /// Fused neighborhood mean: out[i] = mean_j a[idx[i*k + j]] for
    /// i in 0..N, keeping the per-row shape. Avoids materializing the
    /// N x k gathered block.
    pub fn neighbor_mean(&mut self, a: Var, idx: Rc<Vec<u32>>, k: usize) -> Result<Var> {
        let (shape, value) = {
            let n = &self.nodes[a.0];
            if n.shape.is_empty() || k == 0 || idx.len() != n.shape[0] * k {
                return Err(Error::BadShape {
                    op: "neighbor_mean",
                    expected: format!(
                        "rank >= 1 and {} indices",
                        n.shape.first().copied().unwrap_or(0) * k
                    ),
                    got: n.shape.clone(),
                });
            }
            let rows = n.shape[0];
            let rowsz = n.value.len() / rows;
            let inv = S::one() / S::fl(k as f64);
            let mut value = vec![S::zero(); n.value.len()];
            for i in 0..rows {
                let out = i * rowsz;
                for j in 0..k {
                    let r = idx[i * k + j] as usize;
                    if r >= rows {
                        return Err(Error::IndexOutOfRange {
                            op: "neighbor_mean",
                            index: r,
                            bound: rows,
                        });
                    }
                    let src = r * rowsz;
                    for c in 0..rowsz {
                        value[out + c] += n.value[src + c];
                    }
                }
                for c in 0..rowsz {
                    value[out + c] *= inv;
                }
            }
            (n.shape.clone(), value)
        };
        let rg = self.rg(a);
        Ok(self.push(shape, value, rg, Op::NeighborMean(a, idx, k)))
    }

    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var> {
        let (shape, value) = {
            let na = &self.nodes[a.0];
            let nb = &self.nodes[b.0];
            if na.shape.len() != nb.shape.len()
                || axis >= na.shape.len()
                || na
                    .shape
                    .iter()
                    .zip(&nb.shape)
                    .enumerate()
                    .any(|(d, (x, y))| d != axis && x != y)
            {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    left: na.shape.clone(),
                    right: nb.shape.clone(),
                });
            }
            let st = strides(&na.shape);
            let inner = st[axis];
            let blk_a = na.shape[axis] * inner;
            let blk_b = nb.shape[axis] * inner;
            let outer = na.value.len() / blk_a;
            let mut value = Vec::with_capacity(na.value.len() + nb.value.len());
            for o in 0..outer {
                value.extend_from_slice(&na.value[o * blk_a..(o + 1) * blk_a]);
                value.extend_from_slice(&nb.value[o * blk_b..(o + 1) * blk_b]);
            }
            let mut shape = na.shape.clone();
            shape[axis] += nb.shape[axis];
            (shape, value)
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, value, rg, Op::Concat(a, b, axis)))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        if numel(&shape) != self.nodes[a.0].value.len() || shape.iter().any(|&e| e == 0) {
            return Err(Error::BadShape {
                op: "reshape",
                expected: format!("{} elements", self.nodes[a.0].value.len()),
                got: shape,
            });
        }
        let value = self.nodes[a.0].value.clone();
        let rg = self.rg(a);
        Ok(self.push(shape, value, rg, Op::Reshape(a)))
    }

    pub fn swap_axes(&mut self, a: Var, ax0: usize, ax1: usize) -> Result<Var> {
        let rank = self.nodes[a.0].shape.len();
        if ax0 >= rank || ax1 >= rank {
            return Err(Error::InvalidAxis {
                op: "swap_axes",
                axis: ax0.max(ax1),
                rank,
            });
        }
        let (shape, value) = {
            let n = &self.nodes[a.0];
            let mut shape = n.shape.clone();
            shape.swap(ax0, ax1);
            (shape.clone(), permute_swap(&n.shape, &n.value, ax0, ax1))
        };
        let rg = self.rg(a);
        Ok(self.push(shape, value, rg, Op::SwapAxes(a, ax0, ax1)))
    }

    /// Contiguous slice `[start, start+len)` along one axis.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let n_shape = self.nodes[a.0].shape.clone();
        if axis >= n_shape.len() {
            return Err(Error::InvalidAxis {
                op: "slice",
                axis,
                rank: n_shape.len(),
            });
        }
        if len == 0 || start + len > n_shape[axis] {
            return Err(Error::BadShape {
                op: "slice",
                expected: format!("start+len <= {}", n_shape[axis]),
                got: vec![start, len],
            });
        }
        let (shape, value) = {
            let n = &self.nodes[a.0];
            let st = strides(&n.shape);
            let inner = st[axis];
            let blk_in = n.shape[axis] * inner;
            let blk_out = len * inner;
            let outer = n.value.len() / blk_in;
            let mut value = Vec::with_capacity(outer * blk_out);
            for o in 0..outer {
                let base = o * blk_in + start * inner;
                value.extend_from_slice(&n.value[base..base + blk_out]);
            }
            let mut shape = n.shape.clone();
            shape[axis] = len;
            (shape, value)
        };
        let rg = self.rg(a);
        Ok(self.push(shape, value, rg, Op::Slice(a, axis, start)))
    }

    /// Cross product of 3-vectors along the last axis.
    pub fn cross3(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, value) = {
            let na = &self.nodes[a.0];
            let nb = &self.nodes[b.0];
            if na.shape != nb.shape || na.shape.last() != Some(&3) {
                return Err(Error::ShapeMismatch {
                    op: "cross3",
                    left: na.shape.clone(),
                    right: nb.shape.clone(),
                });
            }
            let mut value = vec![S::zero(); na.value.len()];
            for l in 0..na.value.len() / 3 {
                let o = l * 3;
                let (a0, a1, a2) = (na.value[o], na.value[o + 1], na.value[o + 2]);
                let (b0, b1, b2) = (nb.value[o], nb.value[o + 1], nb.value[o + 2]);
                value[o] = a1 * b2 - a2 * b1;
                value[o + 1] = a2 * b0 - a0 * b2;
                value[o + 2] = a0 * b1 - a1 * b0;
            }
            (na.shape.clone(), value)
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, value, rg, Op::Cross3(a, b)))
    }

    // ---- reverse pass ----

    /// Populate gradients of `loss` (a single-element tensor) with respect
    /// to every participating tensor that requires gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::NonScalarLoss {
                shape: self.nodes[loss.0].shape.clone(),
            });
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![S::one()]);
        for id in (0..=loss.0).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            if !self.nodes[id].requires_grad {
                grads[id] = Some(g);
                continue;
            }
            self.accumulate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        // Keep only gradients of nodes that asked for them.
        for (id, slot) in grads.iter_mut().enumerate() {
            if !self.nodes[id].requires_grad {
                *slot = None;
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn seed_grad(&self, grads: &mut [Option<Vec<S>>], v: Var) -> bool {
        if !self.nodes[v.0].requires_grad {
            return false;
        }
        if grads[v.0].is_none() {
            grads[v.0] = Some(vec![S::zero(); self.nodes[v.0].value.len()]);
        }
        true
    }

    fn accumulate(&self, id: usize, g: &[S], grads: &mut Vec<Option<Vec<S>>>) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.seed_grad(grads, v) {
                        let red =
                            reduce_to_shape(g, &node.shape, &self.nodes[v.0].shape.clone());
                        add_into(grads[v.0].as_mut().unwrap(), &red);
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.seed_grad(grads, *a) {
                    let red = reduce_to_shape(g, &node.shape, &self.nodes[a.0].shape.clone());
                    add_into(grads[a.0].as_mut().unwrap(), &red);
                }
                if self.seed_grad(grads, *b) {
                    let red = reduce_to_shape(g, &node.shape, &self.nodes[b.0].shape.clone());
                    sub_into(grads[b.0].as_mut().unwrap(), &red);
                }
            }
            Op::Mul(a, b) => {
                let (sa, sb) = (self.nodes[a.0].shape.clone(), self.nodes[b.0].shape.clone());
                if self.seed_grad(grads, *a) {
                    let full = ew_binary(&node.shape, &sb, &self.nodes[b.0].value, &node.shape, g, |bv, gv| bv * gv);
                    let red = reduce_to_shape(&full, &node.shape, &sa);
                    add_into(grads[a.0].as_mut().unwrap(), &red);
                }
                if self.seed_grad(grads, *b) {
                    let full = ew_binary(&node.shape, &sa, &self.nodes[a.0].value, &node.shape, g, |av, gv| av * gv);
                    let red = reduce_to_shape(&full, &node.shape, &sb);
                    add_into(grads[b.0].as_mut().unwrap(), &red);
                }
            }
            Op::Div(a, b) => {
                let (sa, sb) = (self.nodes[a.0].shape.clone(), self.nodes[b.0].shape.clone());
                if self.seed_grad(grads, *a) {
                    let full = ew_binary(&node.shape, &sb, &self.nodes[b.0].value, &node.shape, g, |bv, gv| gv / bv);
                    let red = reduce_to_shape(&full, &node.shape, &sa);
                    add_into(grads[a.0].as_mut().unwrap(), &red);
                }
                if self.seed_grad(grads, *b) {
                    // d(a/b)/db = -a / b^2 = -value / b
                    let quot = &node.value;
                    let full = ew3(
                        &node.shape,
                        &sb,
                        &self.nodes[b.0].value,
                        quot,
                        g,
                        |bv, q, gv| -(q / bv) * gv,
                    );
                    let red = reduce_to_shape(&full, &node.shape, &sb);
                    add_into(grads[b.0].as_mut().unwrap(), &red);
                }
            }
            Op::Neg(a) => {
                if self.seed_grad(grads, *a) {
                    sub_into(grads[a.0].as_mut().unwrap(), g);
                }
            }
            Op::Relu(a) => {
                if self.seed_grad(grads, *a) {
                    let ga = grads[a.0].as_mut().unwrap();
                    for (i, &x) in self.nodes[a.0].value.iter().enumerate() {
                        if x > S::zero() {
                            ga[i] += g[i];
                        }
                    }
                }
            }
            Op::Sqrt(a) => {
                if self.seed_grad(grads, *a) {
                    let half = S::fl(0.5);
                    let ga = grads[a.0].as_mut().unwrap();
                    for (i, &y) in node.value.iter().enumerate() {
                        ga[i] += g[i] * half / y;
                    }
                }
            }
            Op::Scale(a, c) => {
                if self.seed_grad(grads, *a) {
                    let ga = grads[a.0].as_mut().unwrap();
                    for i in 0..g.len() {
                        ga[i] += g[i] * *c;
                    }
                }
            }
            Op::AddScalar(a) => {
                if self.seed_grad(grads, *a) {
                    add_into(grads[a.0].as_mut().unwrap(), g);
                }
            }
            Op::Matmul(a, b) => {
                matmul_backward(
                    g,
                    &node.shape,
                    a,
                    b,
                    &self.nodes[a.0].shape.clone(),
                    &self.nodes[a.0].value,
                    &self.nodes[b.0].shape.clone(),
                    &self.nodes[b.0].value,
                    self.nodes[a.0].requires_grad,
                    self.nodes[b.0].requires_grad,
                    grads,
                    |grads, v| {
                        if grads[v.0].is_none() {
                            grads[v.0] = Some(vec![S::zero(); self.nodes[v.0].value.len()]);
                        }
                    },
                );
            }
            Op::Sum(a, axis) => {
                if self.seed_grad(grads, *a) {
                    let shape = &self.nodes[a.0].shape;
                    let st = strides(shape);
                    let extent = shape[*axis];
                    let stride = st[*axis];
                    let outer_stride = stride * extent;
                    let ga = grads[a.0].as_mut().unwrap();
                    for o in 0..g.len() {
                        let base = (o / stride) * outer_stride + (o % stride);
                        for j in 0..extent {
                            ga[base + j * stride] += g[o];
                        }
                    }
                }
            }
            Op::Mean(a, axis) => {
                if self.seed_grad(grads, *a) {
                    let shape = &self.nodes[a.0].shape;
                    let st = strides(shape);
                    let extent = shape[*axis];
                    let stride = st[*axis];
                    let outer_stride = stride * extent;
                    let inv = S::one() / S::fl(extent as f64);
                    let ga = grads[a.0].as_mut().unwrap();
                    for o in 0..g.len() {
                        let base = (o / stride) * outer_stride + (o % stride);
                        let gv = g[o] * inv;
                        for j in 0..extent {
                            ga[base + j * stride] += gv;
                        }
                    }
                }
            }
            Op::Max(a, arg) => {
                if self.seed_grad(grads, *a) {
                    let ga = grads[a.0].as_mut().unwrap();
                    for (o, &src) in arg.iter().enumerate() {
                        ga[src as usize] += g[o];
                    }
                }
            }
            Op::Softmax(a, axis) => {
                if self.seed_grad(grads, *a) {
                    let shape = &node.shape;
                    let st = strides(shape);
                    let extent = shape[*axis];
                    let stride = st[*axis];
                    let outer_stride = stride * extent;
                    let lanes = node.value.len() / extent;
                    let ga = grads[a.0].as_mut().unwrap();
                    for o in 0..lanes {
                        let base = (o / stride) * outer_stride + (o % stride);
                        let mut dot = S::zero();
                        for j in 0..extent {
                            let p = base + j * stride;
                            dot += g[p] * node.value[p];
                        }
                        for j in 0..extent {
                            let p = base + j * stride;
                            ga[p] += node.value[p] * (g[p] - dot);
                        }
                    }
                }
            }
            Op::Gather(a, idx) => {
                if self.seed_grad(grads, *a) {
                    let rows = self.nodes[a.0].shape[0];
                    let rowsz = self.nodes[a.0].value.len() / rows;
                    let ga = grads[a.0].as_mut().unwrap();
                    for (r_out, &r_in) in idx.iter().enumerate() {
                        let src = r_out * rowsz;
                        let dst = r_in as usize * rowsz;
                        for c in 0..rowsz {
                            ga[dst + c] += g[src + c];
                        }
                    }
                }
            }
            Op::NeighborMean(a, idx, k) => {
                if self.seed_grad(grads, *a) {
                    let rows = self.nodes[a.0].shape[0];
                    let rowsz = self.nodes[a.0].value.len() / rows;
                    let inv = S::one() / S::fl(*k as f64);
                    let ga = grads[a.0].as_mut().unwrap();
                    for i in 0..rows {
                        let src = i * rowsz;
                        for j in 0..*k {
                            let dst = idx[i * *k + j] as usize * rowsz;
                            for c in 0..rowsz {
                                ga[dst + c] += g[src + c] * inv;
                            }
                        }
                    }
                }
            }
            Op::Concat(a, b, axis) => {
                let sa = self.nodes[a.0].shape.clone();
                let sb = self.nodes[b.0].shape.clone();
                let st = strides(&sa);
                let inner = st[*axis];
                let blk_a = sa[*axis] * inner;
                let blk_b = sb[*axis] * inner;
                let outer = self.nodes[a.0].value.len() / blk_a;
                if self.seed_grad(grads, *a) {
                    let ga = grads[a.0].as_mut().unwrap();
                    for o in 0..outer {
                        let src = o * (blk_a + blk_b);
                        for c in 0..blk_a {
                            ga[o * blk_a + c] += g[src + c];
                        }
                    }
                }
                if self.seed_grad(grads, *b) {
                    let gb = grads[b.0].as_mut().unwrap();
                    for o in 0..outer {
                        let src = o * (blk_a + blk_b) + blk_a;
                        for c in 0..blk_b {
                            gb[o * blk_b + c] += g[src + c];
                        }
                    }
                }
            }
            Op::Reshape(a) => {
                if self.seed_grad(grads, *a) {
                    add_into(grads[a.0].as_mut().unwrap(), g);
                }
            }
            Op::SwapAxes(a, ax0, ax1) => {
                if self.seed_grad(grads, *a) {
                    let back = permute_swap(&node.shape, g, *ax0, *ax1);
                    add_into(grads[a.0].as_mut().unwrap(), &back);
                }
            }
            Op::Slice(a, axis, start) => {
                if self.seed_grad(grads, *a) {
                    let sa = &self.nodes[a.0].shape;
                    let st = strides(sa);
                    let inner = st[*axis];
                    let blk_in = sa[*axis] * inner;
                    let blk_out = node.shape[*axis] * inner;
                    let outer = self.nodes[a.0].value.len() / blk_in;
                    let ga = grads[a.0].as_mut().unwrap();
                    for o in 0..outer {
                        let dst = o * blk_in + start * inner;
                        for c in 0..blk_out {
                            ga[dst + c] += g[o * blk_out + c];
                        }
                    }
                }
            }
            Op::Cross3(a, b) => {
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                if self.seed_grad(grads, *a) {
                    let ga = grads[a.0].as_mut().unwrap();
                    for l in 0..g.len() / 3 {
                        let o = l * 3;
                        // dL/da = b x g
                        ga[o] += bv[o + 1] * g[o + 2] - bv[o + 2] * g[o + 1];
                        ga[o + 1] += bv[o + 2] * g[o] - bv[o] * g[o + 2];
                        ga[o + 2] += bv[o] * g[o + 1] - bv[o + 1] * g[o];
                    }
                }
                if self.seed_grad(grads, *b) {
                    let gb = grads[b.0].as_mut().unwrap();
                    for l in 0..g.len() / 3 {
                        let o = l * 3;
                        // dL/db = g x a
                        gb[o] += g[o + 1] * av[o + 2] - g[o + 2] * av[o + 1];
                        gb[o + 1] += g[o + 2] * av[o] - g[o] * av[o + 2];
                        gb[o + 2] += g[o] * av[o + 1] - g[o + 1] * av[o];
                    }
                }
            }
        }
    }
}

fn add_into<S: Scalar>(dst: &mut [S], src: &[S]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

fn sub_into<S: Scalar>(dst: &mut [S], src: &[S]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d -= *s;
    }
}

/// Elementwise binary with broadcasting.
fn ew_binary<S: Scalar>(
    out_shape: &[usize],
    a_shape: &[usize],
    a: &[S],
    b_shape: &[usize],
    b: &[S],
    f: impl Fn(S, S) -> S,
) -> Vec<S> {
    let n = numel(out_shape);
    if a_shape == b_shape {
        return a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect();
    }
    if a.len() == 1 {
        return b.iter().map(|&y| f(a[0], y)).collect();
    }
    if b.len() == 1 {
        return a.iter().map(|&x| f(x, b[0])).collect();
    }
    let so = strides(out_shape);
    let sa = broadcast_strides(out_shape, a_shape, 1);
    let sb = broadcast_strides(out_shape, b_shape, 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (mut oa, mut ob) = (0, 0);
        for d in 0..out_shape.len() {
            let id = (i / so[d]) % out_shape[d];
            oa += id * sa[d];
            ob += id * sb[d];
        }
        out.push(f(a[oa], b[ob]));
    }
    out
}

/// Elementwise ternary where the second and third operands share the
/// output shape (used by the div backward rule).
fn ew3<S: Scalar>(
    out_shape: &[usize],
    a_shape: &[usize],
    a: &[S],
    b: &[S],
    c: &[S],
    f: impl Fn(S, S, S) -> S,
) -> Vec<S> {
    let n = numel(out_shape);
    if a_shape == out_shape {
        return (0..n).map(|i| f(a[i], b[i], c[i])).collect();
    }
    let so = strides(out_shape);
    let sa = broadcast_strides(out_shape, a_shape, 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut oa = 0;
        for d in 0..out_shape.len() {
            let id = (i / so[d]) % out_shape[d];
            oa += id * sa[d];
        }
        out.push(f(a[oa], b[i], c[i]));
    }
    out
}

fn permute_swap<S: Scalar>(shape: &[usize], data: &[S], ax0: usize, ax1: usize) -> Vec<S> {
    if ax0 == ax1 {
        return data.to_vec();
    }
    let mut out_shape = shape.to_vec();
    out_shape.swap(ax0, ax1);
    let si = strides(shape);
    let so = strides(&out_shape);
    let mut out = vec![S::zero(); data.len()];
    for (i, &v) in data.iter().enumerate() {
        let mut o = 0;
        for d in 0..shape.len() {
            let id = (i / si[d]) % shape[d];
            let dd = if d == ax0 {
                ax1
            } else if d == ax1 {
                ax0
            } else {
                d
            };
            o += id * so[dd];
        }
        out[o] = v;
    }
    out
}

fn matmul_forward<S: Scalar>(
    a_shape: &[usize],
    a: &[S],
    b_shape: &[usize],
    b: &[S],
) -> Result<(Vec<usize>, Vec<S>)> {
    if a_shape.len() < 2 || b_shape.len() < 2 {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a_shape.to_vec(),
            right: b_shape.to_vec(),
        });
    }
    let (m, ka) = (a_shape[a_shape.len() - 2], a_shape[a_shape.len() - 1]);
    let (kb, n) = (b_shape[b_shape.len() - 2], b_shape[b_shape.len() - 1]);
    if ka != kb {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a_shape.to_vec(),
            right: b_shape.to_vec(),
        });
    }
    let batch_a = &a_shape[..a_shape.len() - 2];
    let batch_b = &b_shape[..b_shape.len() - 2];
    let batch = broadcast_shapes("matmul", batch_a, batch_b)?;
    let nb_batches = numel(&batch);
    let sa = broadcast_strides(&batch, batch_a, m * ka);
    let sb = broadcast_strides(&batch, batch_b, kb * n);
    let so = strides(&batch);
    let mut out_shape = batch.clone();
    out_shape.push(m);
    out_shape.push(n);
    let mut out = vec![S::zero(); nb_batches * m * n];
    for bi in 0..nb_batches {
        let (mut oa, mut ob) = (0, 0);
        for d in 0..batch.len() {
            let id = (bi / so[d]) % batch[d];
            oa += id * sa[d];
            ob += id * sb[d];
        }
        let oc = bi * m * n;
        for i in 0..m {
            for p in 0..ka {
                let av = a[oa + i * ka + p];
                if av == S::zero() {
                    continue;
                }
                let brow = ob + p * n;
                let crow = oc + i * n;
                for j in 0..n {
                    out[crow + j] += av * b[brow + j];
                }
            }
        }
    }
    Ok((out_shape, out))
}

#[allow(clippy::too_many_arguments)]
fn matmul_backward<S: Scalar>(
    g: &[S],
    out_shape: &[usize],
    a: &Var,
    b: &Var,
    a_shape: &[usize],
    a_val: &[S],
    b_shape: &[usize],
    b_val: &[S],
    a_rg: bool,
    b_rg: bool,
    grads: &mut Vec<Option<Vec<S>>>,
    seed: impl Fn(&mut Vec<Option<Vec<S>>>, Var),
) {
    let (m, ka) = (a_shape[a_shape.len() - 2], a_shape[a_shape.len() - 1]);
    let n = b_shape[b_shape.len() - 1];
    let batch = &out_shape[..out_shape.len() - 2];
    let nb_batches = numel(batch);
    let sa = broadcast_strides(batch, &a_shape[..a_shape.len() - 2], m * ka);
    let sb = broadcast_strides(batch, &b_shape[..b_shape.len() - 2], ka * n);
    let so = strides(batch);
    if a_rg {
        seed(grads, *a);
    }
    if b_rg {
        seed(grads, *b);
    }
    for bi in 0..nb_batches {
        let (mut oa, mut ob) = (0, 0);
        for d in 0..batch.len() {
            let id = (bi / so[d]) % batch[d];
            oa += id * sa[d];
            ob += id * sb[d];
        }
        let oc = bi * m * n;
        if a_rg {
            let ga = grads[a.0].as_mut().unwrap();
            // dA[i,p] += sum_j g[i,j] * B[p,j]
            for i in 0..m {
                for p in 0..ka {
                    let mut acc = S::zero();
                    let grow = oc + i * n;
                    let brow = ob + p * n;
                    for j in 0..n {
                        acc += g[grow + j] * b_val[brow + j];
                    }
                    ga[oa + i * ka + p] += acc;
                }
            }
        }
        if b_rg {
            let gb = grads[b.0].as_mut().unwrap();
            // dB[p,j] += sum_i A[i,p] * g[i,j]
            for i in 0..m {
                let grow = oc + i * n;
                for p in 0..ka {
                    let av = a_val[oa + i * ka + p];
                    if av == S::zero() {
                        continue;
                    }
                    let brow = ob + p * n;
                    for j in 0..n {
                        gb[brow + j] += av * g[grow + j];
                    }
                }
            }
        }
    }
}

fn reduce_sum<S: Scalar>(shape: &[usize], data: &[S], axis: usize) -> (Vec<usize>, Vec<S>) {
    let st = strides(shape);
    let extent = shape[axis];
    let stride = st[axis];
    let outer_stride = stride * extent;
    let mut out_shape = shape.to_vec();
    out_shape.remove(axis);
    let out_n = numel(&out_shape);
    let mut out = Vec::with_capacity(out_n);
    for o in 0..out_n {
        let base = (o / stride) * outer_stride + (o % stride);
        let mut acc = S::zero();
        for j in 0..extent {
            acc += data[base + j * stride];
        }
        out.push(acc);
    }
    (out_shape, out)
}
