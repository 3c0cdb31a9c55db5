//! Exact k-nearest-neighbor graphs and the floating-point rotation audit.
//!
//! kNN is brute-force O(N^2) by squared Euclidean distance, computed in a
//! selectable precision, with ties broken by lowest index. Exact and
//! deterministic is the point: approximate structures would confound the
//! precision study, and the audit quantifies how often rotating a cloud
//! changes the graph purely through roundoff.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{Precision, Scalar};
use crate::so3::{sample_uniform, Rotation};

use super::PointCloud;

/// Neighbor index table: row i holds the k nearest neighbors of point i
/// (self excluded), ordered by (distance, index).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnnGraph {
    pub k: usize,
    pub n: usize,
    pub indices: Vec<u32>,
    pub precision: Precision,
    /// A frozen graph is reused verbatim through rotations and internal
    /// re-orientations of the cloud it was built on.
    pub frozen: bool,
}

impl KnnGraph {
    pub fn row(&self, i: usize) -> &[u32] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn freeze(mut self) -> KnnGraph {
        self.frozen = true;
        self
    }
}

/// Exact kNN of a cloud in the requested precision.
pub fn knn<S: Scalar>(pc: &PointCloud<S>, k: usize, precision: Precision) -> Result<KnnGraph> {
    if pc.points.len() <= k {
        return Err(Error::BadNeighborCount {
            k,
            n: pc.points.len(),
        });
    }
    if pc
        .points
        .iter()
        .any(|p| p.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::NonFinite {
            context: format!("knn input coordinates ({})", pc.instance_id),
        });
    }
    let indices = match precision {
        Precision::Single => {
            let pts: Vec<[f32; 3]> = pc
                .points
                .iter()
                .map(|p| [p[0].as_f64() as f32, p[1].as_f64() as f32, p[2].as_f64() as f32])
                .collect();
            knn_rows(&pts, k)
        }
        Precision::Double => {
            let pts: Vec<[f64; 3]> = pc
                .points
                .iter()
                .map(|p| [p[0].as_f64(), p[1].as_f64(), p[2].as_f64()])
                .collect();
            knn_rows(&pts, k)
        }
    };
    Ok(KnnGraph {
        k,
        n: pc.points.len(),
        indices,
        precision,
        frozen: false,
    })
}

fn knn_rows<T: Scalar>(pts: &[[T; 3]], k: usize) -> Vec<u32> {
    let n = pts.len();
    let mut indices = Vec::with_capacity(n * k);
    let mut cand: Vec<(T, u32)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        cand.clear();
        let pi = pts[i];
        for (j, pj) in pts.iter().enumerate() {
            if j == i {
                continue;
            }
            let dx = pi[0] - pj[0];
            let dy = pi[1] - pj[1];
            let dz = pi[2] - pj[2];
            cand.push((dx * dx + dy * dy + dz * dz, j as u32));
        }
        // Lexicographic (distance, index) order makes the k-subset unique.
        cand.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap());
        let head = &mut cand[..k];
        head.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        indices.extend(head.iter().map(|&(_, j)| j));
    }
    indices
}

/// Directional wrong-edge count: edges present in `base` but absent from
/// `other`, summed over rows.
pub fn wrong_edges(base: &KnnGraph, other: &KnnGraph) -> usize {
    debug_assert_eq!(base.n, other.n);
    debug_assert_eq!(base.k, other.k);
    let mut count = 0;
    let mut row = Vec::with_capacity(other.k);
    for i in 0..base.n {
        row.clear();
        row.extend_from_slice(other.row(i));
        row.sort_unstable();
        for &e in base.row(i) {
            if row.binary_search(&e).is_err() {
                count += 1;
            }
        }
    }
    count
}

/// Rotation-stability audit of the kNN graph (wrong edges after random
/// rotations, in the given compute precision).
#[derive(Debug, Clone, serde::Serialize)]
pub struct KnnAuditStats {
    pub k: usize,
    pub n: usize,
    pub total_edges: usize,
    pub trials: usize,
    pub per_trial_wrong: Vec<usize>,
    pub mean_wrong: f64,
}

/// For each of `trials` Haar-random rotations, count edges of the
/// unrotated graph missing from the rotated graph. With `frozen` set the
/// graph is reused, so the count is zero by construction.
pub fn knn_rotation_audit<S: Scalar, R: Rng + ?Sized>(
    pc: &PointCloud<S>,
    k: usize,
    precision: Precision,
    frozen: bool,
    trials: usize,
    rng: &mut R,
) -> Result<KnnAuditStats> {
    let base = knn(pc, k, precision)?;
    let mut per_trial_wrong = Vec::with_capacity(trials);
    for _ in 0..trials {
        let r: Rotation<f64> = sample_uniform(rng);
        if frozen {
            per_trial_wrong.push(0);
            continue;
        }
        let wrong = match precision {
            Precision::Single => {
                let rotated = pc.cast::<f32>().apply_rotation(&r.cast());
                wrong_edges(&base, &knn(&rotated, k, precision)?)
            }
            Precision::Double => {
                let rotated = pc.cast::<f64>().apply_rotation(&r.cast());
                wrong_edges(&base, &knn(&rotated, k, precision)?)
            }
        };
        per_trial_wrong.push(wrong);
    }
    let mean_wrong = if trials == 0 {
        0.0
    } else {
        per_trial_wrong.iter().sum::<usize>() as f64 / trials as f64
    };
    Ok(KnnAuditStats {
        k,
        n: pc.points.len(),
        total_edges: pc.points.len() * k,
        trials,
        per_trial_wrong,
        mean_wrong,
    })
}
