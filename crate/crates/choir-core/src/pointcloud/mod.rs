//! Point-cloud representation, augmentation, and dataset helpers.
//!
//! Clouds are immutable: every operation returns a new value. Predictors
//! and metrics require centered clouds; centering is explicit.

pub mod io;
pub mod knn;
pub mod synthetic;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::so3::{mat, Rotation};

/// N x 3 coordinates with class/instance identity.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<S: Scalar> {
    pub points: Vec<[S; 3]>,
    pub class_id: String,
    pub instance_id: String,
}

impl<S: Scalar> PointCloud<S> {
    pub fn new(points: Vec<[S; 3]>, class_id: impl Into<String>, instance_id: impl Into<String>) -> Self {
        PointCloud {
            points,
            class_id: class_id.into(),
            instance_id: instance_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for p in &self.points {
            for d in 0..3 {
                c[d] += p[d].as_f64();
            }
        }
        let n = self.points.len().max(1) as f64;
        [c[0] / n, c[1] / n, c[2] / n]
    }

    /// Translate so the centroid is the origin (computed in f64 for
    /// accuracy regardless of the storage precision).
    pub fn center(&self) -> PointCloud<S> {
        let c = self.centroid();
        let mut out = self.clone();
        for p in &mut out.points {
            for d in 0..3 {
                p[d] = p[d] - S::fl(c[d]);
            }
        }
        out
    }

    /// `n` points drawn without replacement when n <= N, with replacement
    /// otherwise.
    pub fn resample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<PointCloud<S>> {
        if n == 0 {
            return Err(Error::Config {
                message: "resample count must be >= 1".into(),
            });
        }
        if self.points.is_empty() {
            return Err(Error::TooFewPoints {
                n: 0,
                required: 1,
                context: "resample".into(),
            });
        }
        let mut out = self.clone();
        if n <= self.points.len() {
            // Partial Fisher-Yates: the first n entries of a shuffle.
            let mut idx: Vec<usize> = (0..self.points.len()).collect();
            for i in 0..n {
                let j = rng.gen_range(i..idx.len());
                idx.swap(i, j);
            }
            out.points = idx[..n].iter().map(|&i| self.points[i]).collect();
        } else {
            out.points = (0..n)
                .map(|_| self.points[rng.gen_range(0..self.points.len())])
                .collect();
        }
        Ok(out)
    }

    /// Remove one random seed point and its (patch_size - 1) nearest
    /// neighbors, then re-center.
    pub fn knn_patch_removal<R: Rng + ?Sized>(
        &self,
        patch_size: usize,
        rng: &mut R,
    ) -> Result<PointCloud<S>> {
        if patch_size == 0 {
            return Err(Error::Config {
                message: "patch size must be >= 1".into(),
            });
        }
        if patch_size >= self.points.len() {
            return Err(Error::TooFewPoints {
                n: self.points.len(),
                required: patch_size + 1,
                context: "knn_patch_removal".into(),
            });
        }
        let seed = rng.gen_range(0..self.points.len());
        let sp = self.points[seed];
        let mut by_dist: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut d = 0.0;
                for c in 0..3 {
                    let t = p[c].as_f64() - sp[c].as_f64();
                    d += t * t;
                }
                (d, i)
            })
            .collect();
        by_dist.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut removed = vec![false; self.points.len()];
        for &(_, i) in by_dist.iter().take(patch_size) {
            removed[i] = true;
        }
        let mut out = self.clone();
        out.points = self
            .points
            .iter()
            .zip(&removed)
            .filter(|(_, &r)| !r)
            .map(|(p, _)| *p)
            .collect();
        Ok(out.center())
    }

    /// Add i.i.d. zero-mean Gaussian noise per coordinate, then re-center.
    pub fn gaussian_noise<R: Rng + ?Sized>(&self, sigma: f64, rng: &mut R) -> Result<PointCloud<S>> {
        if sigma < 0.0 || !sigma.is_finite() {
            return Err(Error::Config {
                message: format!("noise sigma must be finite and >= 0, got {sigma}"),
            });
        }
        if sigma == 0.0 {
            return Ok(self.clone());
        }
        let normal = Normal::new(0.0, sigma).expect("validated sigma");
        let mut out = self.clone();
        for p in &mut out.points {
            for d in 0..3 {
                p[d] = p[d] + S::fl(normal.sample(rng));
            }
        }
        Ok(out.center())
    }

    /// Rotate: points <- points * r (row-vector convention).
    pub fn apply_rotation(&self, r: &Rotation<S>) -> PointCloud<S> {
        let mut out = self.clone();
        for p in &mut out.points {
            *p = mat::rowvec_mul(*p, r.matrix());
        }
        out
    }

    pub fn cast<T: Scalar>(&self) -> PointCloud<T> {
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| [T::fl(p[0].as_f64()), T::fl(p[1].as_f64()), T::fl(p[2].as_f64())])
                .collect(),
            class_id: self.class_id.clone(),
            instance_id: self.instance_id.clone(),
        }
    }
}

/// A set of instances with class labels; the unit the trainer and the
/// evaluator operate on.
#[derive(Debug, Clone, Default)]
pub struct Dataset<S: Scalar> {
    pub instances: Vec<PointCloud<S>>,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(instances: Vec<PointCloud<S>>) -> Self {
        Dataset { instances }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Sorted unique class ids.
    pub fn classes(&self) -> Vec<String> {
        let mut c: Vec<String> = self.instances.iter().map(|i| i.class_id.clone()).collect();
        c.sort();
        c.dedup();
        c
    }

    /// Instances of one class, sorted by instance id.
    pub fn of_class(&self, class_id: &str) -> Vec<&PointCloud<S>> {
        let mut v: Vec<&PointCloud<S>> = self
            .instances
            .iter()
            .filter(|i| i.class_id == class_id)
            .collect();
        v.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
        v
    }

    /// Split by instance (no leakage): per class, the last
    /// round(fraction * n) instances in id order become validation.
    pub fn split_validation(&self, fraction: f64) -> (Dataset<S>, Dataset<S>) {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for class in self.classes() {
            let members = self.of_class(&class);
            let n = members.len();
            let mut n_val = ((n as f64) * fraction).round() as usize;
            if n_val >= n {
                n_val = n.saturating_sub(1);
            }
            let split = n - n_val;
            for (i, m) in members.into_iter().enumerate() {
                if i < split {
                    train.push(m.clone());
                } else {
                    val.push(m.clone());
                }
            }
        }
        (Dataset::new(train), Dataset::new(val))
    }

    pub fn cast<T: Scalar>(&self) -> Dataset<T> {
        Dataset {
            instances: self.instances.iter().map(|i| i.cast()).collect(),
        }
    }
}
