//! Named parameter registry shared by the model, the optimizer, and the
//! checkpoint format.
//!
//! Parameters keep a stable insertion order (the order blocks declare
//! them) so gradient accumulation and optimizer state can be plain
//! vectors; lookup by name goes through a sorted index.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{numel, Tape, Tensor, Var};

/// Name -> tape variable map produced by [`ParamSet::leaf_all`].
pub type VarMap = BTreeMap<String, Var>;

#[derive(Debug, Clone, Default)]
pub struct ParamSet<S: Scalar> {
    entries: Vec<(String, Tensor<S>)>,
    index: BTreeMap<String, usize>,
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        ParamSet {
            entries: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<S>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config {
                message: format!("duplicate parameter name '{name}'"),
            });
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor));
        Ok(())
    }

    /// Gaussian-initialized learnable tensor with std 1/sqrt(fan_in).
    pub fn add_normal<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut R,
    ) -> Result<()> {
        let std = 1.0 / (fan_in.max(1) as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("finite std");
        let data = (0..numel(&shape))
            .map(|_| S::fl(dist.sample(rng)))
            .collect();
        self.add(name, Tensor::param(shape, data)?)
    }

    /// Zero-initialized learnable tensor (biases).
    pub fn add_zeros(&mut self, name: impl Into<String>, shape: Vec<usize>) -> Result<()> {
        let n = numel(&shape);
        self.add(name, Tensor::param(shape, vec![S::zero(); n])?)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<S>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    /// Record every parameter as a tape leaf; returns the name -> var map
    /// the forward pass reads from.
    pub fn leaf_all(&self, tape: &mut Tape<S>) -> VarMap {
        self.entries
            .iter()
            .map(|(n, t)| (n.clone(), tape.leaf_tensor(t)))
            .collect()
    }

    pub fn cast<T: Scalar>(&self) -> ParamSet<T> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), t.cast()))
                .collect(),
            index: self.index.clone(),
        }
    }
}

/// Fetch a parameter var by name; parameters are registered by the model
/// constructors, so a miss is a programming error surfaced as `Config`.
pub fn var(vars: &VarMap, name: &str) -> Result<Var> {
    vars.get(name).copied().ok_or_else(|| Error::Config {
        message: format!("missing parameter '{name}' in forward pass"),
    })
}
