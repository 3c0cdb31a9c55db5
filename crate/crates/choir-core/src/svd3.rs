//! Singular value decomposition of 3x3 matrices by one-sided Jacobi.
//!
//! Small, dependency-free, and accurate enough for rotation projection:
//! the Jacobi sweeps orthogonalize the columns of A*V, which for 3x3
//! matrices converges in a handful of sweeps.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::so3::mat::{self, Mat3, Vec3};

/// A = U * diag(sigma) * V^T with sigma sorted descending (all >= 0),
/// U and V orthogonal (determinants +/-1).
#[derive(Debug, Clone)]
pub struct Svd3<S: Scalar> {
    pub u: Mat3<S>,
    pub sigma: Vec3<S>,
    pub v: Mat3<S>,
}

const MAX_SWEEPS: usize = 60;

pub fn svd3<S: Scalar>(a: &Mat3<S>) -> Result<Svd3<S>> {
    // b holds A with columns rotated in place; v accumulates the rotations.
    let mut b = *a;
    let mut v = mat::identity();
    let tol = S::epsilon() * S::fl(8.0);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut off = S::zero();
        for p in 0..2 {
            for q in (p + 1)..3 {
                let (app, aqq, apq) = column_gram(&b, p, q);
                let denom = (app * aqq).sqrt();
                if denom > S::zero() && apq.abs() > tol * denom {
                    off = off.max(apq.abs() / denom);
                    let zeta = (aqq - app) / (S::fl(2.0) * apq);
                    let t = {
                        let s = if zeta >= S::zero() { S::one() } else { -S::one() };
                        s / (zeta.abs() + (S::one() + zeta * zeta).sqrt())
                    };
                    let c = S::one() / (S::one() + t * t).sqrt();
                    let s = c * t;
                    rotate_columns(&mut b, p, q, c, s);
                    rotate_columns(&mut v, p, q, c, s);
                }
            }
        }
        if off == S::zero() {
            converged = true;
            break;
        }
    }
    if !converged {
        // A final sweep check: accept if the remaining coupling is tiny.
        let mut worst = S::zero();
        for p in 0..2 {
            for q in (p + 1)..3 {
                let (app, aqq, apq) = column_gram(&b, p, q);
                let denom = (app * aqq).sqrt();
                if denom > S::zero() {
                    worst = worst.max(apq.abs() / denom);
                }
            }
        }
        if worst > S::fl(1e-6) {
            return Err(Error::SvdNoConvergence { sweeps: MAX_SWEEPS });
        }
    }

    // Singular values are the column norms of b; normalized columns form U.
    let mut sigma: Vec3<S> = [S::zero(); 3];
    let mut cols: [Vec3<S>; 3] = [[S::zero(); 3]; 3];
    for c in 0..3 {
        let col = [b[0][c], b[1][c], b[2][c]];
        sigma[c] = mat::norm3(col);
        cols[c] = col;
    }

    // Sort descending, permuting U's columns and V's columns together.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());
    let sigma_sorted = [sigma[order[0]], sigma[order[1]], sigma[order[2]]];
    let cols_sorted = [cols[order[0]], cols[order[1]], cols[order[2]]];
    let mut v_sorted = mat::identity();
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..3 {
            v_sorted[r][dst] = v[r][src];
        }
    }

    // Build U, completing degenerate directions orthonormally.
    let tiny = sigma_sorted[0].max(S::one()) * S::epsilon() * S::fl(16.0);
    let mut u_cols: [Vec3<S>; 3] = [[S::zero(); 3]; 3];
    for c in 0..3 {
        if sigma_sorted[c] > tiny {
            u_cols[c] = mat::scale3(cols_sorted[c], S::one() / sigma_sorted[c]);
        } else if c == 0 {
            u_cols[c] = [S::one(), S::zero(), S::zero()];
        } else if c == 1 {
            u_cols[c] = mat::any_unit_orthogonal(u_cols[0]);
        } else {
            u_cols[c] = mat::cross3(u_cols[0], u_cols[1]);
        }
    }
    let mut u = mat::identity();
    for c in 0..3 {
        for r in 0..3 {
            u[r][c] = u_cols[c][r];
        }
    }

    Ok(Svd3 {
        u,
        sigma: sigma_sorted,
        v: v_sorted,
    })
}

fn column_gram<S: Scalar>(b: &Mat3<S>, p: usize, q: usize) -> (S, S, S) {
    let mut app = S::zero();
    let mut aqq = S::zero();
    let mut apq = S::zero();
    for r in 0..3 {
        app += b[r][p] * b[r][p];
        aqq += b[r][q] * b[r][q];
        apq += b[r][p] * b[r][q];
    }
    (app, aqq, apq)
}

fn rotate_columns<S: Scalar>(m: &mut Mat3<S>, p: usize, q: usize, c: S, s: S) {
    for r in 0..3 {
        let mp = m[r][p];
        let mq = m[r][q];
        m[r][p] = c * mp - s * mq;
        m[r][q] = s * mp + c * mq;
    }
}
