//! Rotation-group mathematics: Haar-uniform sampling, angular distance,
//! chordal averaging, SVD projection, and Gram-Schmidt frames.
//!
//! Convention: points are row vectors and rotations act on the right,
//! `p' = p * R`. All rotations returned by this module satisfy
//! `R^T R = I` and `det R = +1` within [`Scalar::rotation_tol`].

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::svd3::svd3;

/// Plain 3x3 / 3-vector helpers shared by the eager math paths.
pub mod mat {
    use crate::scalar::Scalar;

    pub type Vec3<S> = [S; 3];
    pub type Mat3<S> = [[S; 3]; 3];

    pub fn identity<S: Scalar>() -> Mat3<S> {
        let (o, z) = (S::one(), S::zero());
        [[o, z, z], [z, o, z], [z, z, o]]
    }

    pub fn dot3<S: Scalar>(a: Vec3<S>, b: Vec3<S>) -> S {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }

    pub fn cross3<S: Scalar>(a: Vec3<S>, b: Vec3<S>) -> Vec3<S> {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }

    pub fn sub3<S: Scalar>(a: Vec3<S>, b: Vec3<S>) -> Vec3<S> {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }

    pub fn add3<S: Scalar>(a: Vec3<S>, b: Vec3<S>) -> Vec3<S> {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }

    pub fn scale3<S: Scalar>(a: Vec3<S>, c: S) -> Vec3<S> {
        [a[0] * c, a[1] * c, a[2] * c]
    }

    pub fn norm3<S: Scalar>(a: Vec3<S>) -> S {
        dot3(a, a).sqrt()
    }

    /// Some unit vector orthogonal to `a` (|a| assumed ~1).
    pub fn any_unit_orthogonal<S: Scalar>(a: Vec3<S>) -> Vec3<S> {
        // Cross with the axis least aligned with `a`.
        let axis = if a[0].abs() <= a[1].abs() && a[0].abs() <= a[2].abs() {
            [S::one(), S::zero(), S::zero()]
        } else if a[1].abs() <= a[2].abs() {
            [S::zero(), S::one(), S::zero()]
        } else {
            [S::zero(), S::zero(), S::one()]
        };
        let c = cross3(a, axis);
        let n = norm3(c);
        scale3(c, S::one() / n)
    }

    pub fn matmul3<S: Scalar>(a: &Mat3<S>, b: &Mat3<S>) -> Mat3<S> {
        let mut out = [[S::zero(); 3]; 3];
        for i in 0..3 {
            for k in 0..3 {
                let av = a[i][k];
                for j in 0..3 {
                    out[i][j] += av * b[k][j];
                }
            }
        }
        out
    }

    pub fn transpose3<S: Scalar>(a: &Mat3<S>) -> Mat3<S> {
        let mut out = [[S::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = a[j][i];
            }
        }
        out
    }

    pub fn det3<S: Scalar>(a: &Mat3<S>) -> S {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    }

    pub fn trace3<S: Scalar>(a: &Mat3<S>) -> S {
        a[0][0] + a[1][1] + a[2][2]
    }

    pub fn sub_mat3<S: Scalar>(a: &Mat3<S>, b: &Mat3<S>) -> Mat3<S> {
        let mut out = [[S::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = a[i][j] - b[i][j];
            }
        }
        out
    }

    pub fn frobenius_sq<S: Scalar>(a: &Mat3<S>) -> S {
        let mut acc = S::zero();
        for row in a {
            for &v in row {
                acc += v * v;
            }
        }
        acc
    }

    /// Row vector times matrix: p' = p * m.
    pub fn rowvec_mul<S: Scalar>(p: Vec3<S>, m: &Mat3<S>) -> Vec3<S> {
        [
            p[0] * m[0][0] + p[1] * m[1][0] + p[2] * m[2][0],
            p[0] * m[0][1] + p[1] * m[1][1] + p[2] * m[2][1],
            p[0] * m[0][2] + p[1] * m[1][2] + p[2] * m[2][2],
        ]
    }
}

use mat::{Mat3, Vec3};

/// Orthonormal 3x3 matrix with determinant +1, acting on row vectors from
/// the right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation<S: Scalar>(Mat3<S>);

impl<S: Scalar> Rotation<S> {
    pub fn identity() -> Self {
        Rotation(mat::identity())
    }

    /// Validate and wrap a matrix.
    pub fn from_matrix(m: Mat3<S>) -> Result<Self> {
        let tol = S::rotation_tol();
        let mtm = mat::matmul3(&mat::transpose3(&m), &m);
        let mut worst = S::zero();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { S::one() } else { S::zero() };
                worst = worst.max((mtm[i][j] - target).abs());
            }
        }
        if worst > tol {
            return Err(Error::NotARotation {
                reason: format!(
                    "columns not orthonormal (max |R^T R - I| = {:.3e}, tol {:.1e})",
                    worst.as_f64(),
                    tol.as_f64()
                ),
            });
        }
        let det = mat::det3(&m);
        if (det - S::one()).abs() > tol {
            return Err(Error::NotARotation {
                reason: format!("determinant {} != +1", det.as_f64()),
            });
        }
        Ok(Rotation(m))
    }

    /// Wrap without validation; for internal products of already-valid
    /// rotations where drift is bounded by a few ulps.
    pub(crate) fn from_matrix_unchecked(m: Mat3<S>) -> Self {
        Rotation(m)
    }

    pub fn matrix(&self) -> &Mat3<S> {
        &self.0
    }

    /// Inverse rotation.
    pub fn transpose(&self) -> Self {
        Rotation(mat::transpose3(&self.0))
    }

    /// Matrix product self * other (apply self first to a row vector).
    pub fn compose(&self, other: &Rotation<S>) -> Self {
        Rotation(mat::matmul3(&self.0, &other.0))
    }

    /// Rotation by `angle` about an arbitrary axis (Rodrigues formula),
    /// in the row-vector convention.
    pub fn from_axis_angle(axis: Vec3<S>, angle: S) -> Result<Self> {
        let n = mat::norm3(axis);
        if n == S::zero() {
            return Err(Error::NotARotation {
                reason: "zero-length rotation axis".into(),
            });
        }
        let k = mat::scale3(axis, S::one() / n);
        let (s, c) = (angle.sin(), angle.cos());
        let one_c = S::one() - c;
        // Column-convention Rodrigues matrix, then transpose for row vectors.
        let mut m = [[S::zero(); 3]; 3];
        let kx = [
            [S::zero(), -k[2], k[1]],
            [k[2], S::zero(), -k[0]],
            [-k[1], k[0], S::zero()],
        ];
        for i in 0..3 {
            for j in 0..3 {
                let i_eq = if i == j { S::one() } else { S::zero() };
                let mut kx2 = S::zero();
                for l in 0..3 {
                    kx2 += kx[i][l] * kx[l][j];
                }
                m[i][j] = i_eq + s * kx[i][j] + one_c * kx2;
            }
        }
        Ok(Rotation(mat::transpose3(&m)))
    }

    pub fn about_x(angle: S) -> Self {
        Self::from_axis_angle([S::one(), S::zero(), S::zero()], angle).unwrap()
    }

    pub fn about_y(angle: S) -> Self {
        Self::from_axis_angle([S::zero(), S::one(), S::zero()], angle).unwrap()
    }

    pub fn about_z(angle: S) -> Self {
        Self::from_axis_angle([S::zero(), S::zero(), S::one()], angle).unwrap()
    }

    /// Rotation angle from the identity, in radians.
    pub fn angle(&self) -> S {
        angle_of(&self.0)
    }

    pub fn cast<T: Scalar>(&self) -> Rotation<T> {
        let mut m = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = T::fl(self.0[i][j].as_f64());
            }
        }
        Rotation(m)
    }
}

fn angle_of<S: Scalar>(m: &Mat3<S>) -> S {
    let c = (mat::trace3(m) - S::one()) / S::fl(2.0);
    c.min(S::one()).max(-S::one()).acos()
}

/// Haar-uniform random rotation via a normalized 4D Gaussian quaternion.
pub fn sample_uniform<S: Scalar, R: Rng + ?Sized>(rng: &mut R) -> Rotation<S> {
    loop {
        let q: [f64; 4] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        if n < 1e-6 {
            continue;
        }
        let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        // Column-convention matrix from the unit quaternion, transposed for
        // the row-vector action (the transpose is Haar-distributed too).
        let col = [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ];
        let mut m = [[S::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = S::fl(col[j][i]);
            }
        }
        return Rotation(m);
    }
}

/// Angle between two rotations in radians, in [0, pi]:
/// arccos((trace(a^T b) - 1) / 2), argument clamped to [-1, 1].
pub fn angle_between<S: Scalar>(a: &Rotation<S>, b: &Rotation<S>) -> S {
    let atb = mat::matmul3(&mat::transpose3(&a.0), &b.0);
    angle_of(&atb)
}

/// Projection of an arbitrary matrix to the nearest rotation, with a flag
/// for inputs whose projection is ambiguous.
#[derive(Debug, Clone, Copy)]
pub struct So3Projection<S: Scalar> {
    pub rotation: Rotation<S>,
    /// Set when the nearest rotation is not unique (rank-deficient or
    /// reflective input with tied trailing singular values).
    pub degenerate: bool,
}

/// Nearest rotation in Frobenius norm with det = +1 (SVD-based).
pub fn project_to_so3<S: Scalar>(m: &Mat3<S>) -> Result<So3Projection<S>> {
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "project_to_so3 input".into(),
        });
    }
    let svd = svd3(m)?;
    let sign = mat::det3(&svd.u) * mat::det3(&svd.v);
    let s = if sign < S::zero() { -S::one() } else { S::one() };
    // R = U diag(1, 1, s) V^T
    let mut u = svd.u;
    for r in 0..3 {
        u[r][2] *= s;
    }
    let r = mat::matmul3(&u, &mat::transpose3(&svd.v));
    let eps = S::fl(1e-9);
    let degenerate = (s < S::zero() && (svd.sigma[1] - svd.sigma[2]).abs() < eps)
        || svd.sigma[1] < eps;
    Ok(So3Projection {
        rotation: Rotation::from_matrix(r)?,
        degenerate,
    })
}

/// Chordal L2-mean: the arithmetic matrix mean projected to SO(3),
/// guaranteeing determinant +1. Degenerate (ambiguous) means are flagged,
/// not fatal; the caller decides.
pub fn chordal_mean<S: Scalar>(rs: &[Rotation<S>]) -> Result<So3Projection<S>> {
    if rs.is_empty() {
        return Err(Error::EmptyInput { op: "chordal_mean" });
    }
    let inv = S::one() / S::fl(rs.len() as f64);
    let mut m = [[S::zero(); 3]; 3];
    for r in rs {
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += r.0[i][j] * inv;
            }
        }
    }
    project_to_so3(&m)
}

/// Orthonormal frame from two vectors by Gram-Schmidt. The result has
/// COLUMNS e1 = u/|u|, e2 = normalized (v - (v.e1) e1), e3 = e1 x e2.
/// Degeneracy (either norm below `1e-8`) is a hard error; the
/// differentiable training path uses an epsilon-regularized variant
/// instead (see the network heads).
pub fn gram_schmidt_frame<S: Scalar>(u: Vec3<S>, v: Vec3<S>) -> Result<Rotation<S>> {
    let eps = S::fl(GS_EPSILON);
    let nu = mat::norm3(u);
    if nu <= eps {
        return Err(Error::DegenerateFrame {
            norm_a: nu.as_f64(),
            norm_b: mat::norm3(v).as_f64(),
            threshold: GS_EPSILON,
        });
    }
    let e1 = mat::scale3(u, S::one() / nu);
    let w = mat::sub3(v, mat::scale3(e1, mat::dot3(v, e1)));
    let nw = mat::norm3(w);
    if nw <= eps {
        return Err(Error::DegenerateFrame {
            norm_a: nu.as_f64(),
            norm_b: nw.as_f64(),
            threshold: GS_EPSILON,
        });
    }
    let e2 = mat::scale3(w, S::one() / nw);
    let e3 = mat::cross3(e1, e2);
    let mut m = [[S::zero(); 3]; 3];
    for r in 0..3 {
        m[r][0] = e1[r];
        m[r][1] = e2[r];
        m[r][2] = e3[r];
    }
    Ok(Rotation(m))
}

/// Degeneracy threshold shared by the eager and on-tape Gram-Schmidt paths.
pub const GS_EPSILON: f64 = 1e-8;

/// Serialize a rotation as 9 row-major little-endian f64 values.
pub fn rotation_to_le_bytes<S: Scalar>(r: &Rotation<S>) -> [u8; 72] {
    let mut out = [0u8; 72];
    for i in 0..3 {
        for j in 0..3 {
            let b = r.0[i][j].as_f64().to_le_bytes();
            out[(i * 3 + j) * 8..(i * 3 + j) * 8 + 8].copy_from_slice(&b);
        }
    }
    out
}

pub fn rotation_from_le_bytes<S: Scalar>(bytes: &[u8; 72]) -> Result<Rotation<S>> {
    let mut m = [[S::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut b = [0u8; 8];
            b.copy_from_slice(&bytes[(i * 3 + j) * 8..(i * 3 + j) * 8 + 8]);
            m[i][j] = S::fl(f64::from_le_bytes(b));
        }
    }
    Rotation::from_matrix(m)
}
