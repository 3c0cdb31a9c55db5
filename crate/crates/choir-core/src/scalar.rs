use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar the numerical core is generic over.
///
/// `f64` is the default working precision; `f32` exists as an explicit mode
/// for the kNN precision audit and for fast training.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Tolerance for validating orthonormality and determinant of rotations.
    fn rotation_tol() -> Self;

    /// Short name used in run metadata and audit tables.
    fn precision_name() -> &'static str;

    /// Precision selector matching this scalar type.
    fn precision() -> Precision {
        if Self::precision_name() == "single" {
            Precision::Single
        } else {
            Precision::Double
        }
    }

    /// Lossless-enough conversion from an `f64` literal.
    #[inline]
    fn fl(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal convertible to scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {
    #[inline]
    fn rotation_tol() -> f32 {
        1e-5
    }
    fn precision_name() -> &'static str {
        "single"
    }
}

impl Scalar for f64 {
    #[inline]
    fn rotation_tol() -> f64 {
        1e-9
    }
    fn precision_name() -> &'static str {
        "double"
    }
}

/// Numeric precision selector mirrored by CLI flags and file metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::Single => "single",
            Precision::Double => "double",
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" | "f32" | "float32" => Ok(Precision::Single),
            "double" | "f64" | "float64" => Ok(Precision::Double),
            other => Err(format!("unknown precision '{other}' (expected single|double)")),
        }
    }
}
