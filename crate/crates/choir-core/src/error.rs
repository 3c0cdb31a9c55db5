use thiserror::Error;

/// Crate-wide error type.
///
/// Numerical failures carry enough context (shapes, norms, seeds) to
/// reproduce the offending call without a debugger.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left {left:?} vs right {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: invalid axis {axis} for rank-{rank} tensor")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        rank: usize,
    },

    #[error("{op}: expected {expected}, got shape {got:?}")]
    BadShape {
        op: &'static str,
        expected: String,
        got: Vec<usize>,
    },

    #[error("backward called on non-scalar value of shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("division by zero in elementwise div")]
    DivisionByZero,

    #[error("{op}: index {index} out of range for extent {bound}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("matrix is not a rotation: {reason}")]
    NotARotation { reason: String },

    #[error(
        "degenerate frame in Gram-Schmidt: |a| = {norm_a:.3e}, |b_perp| = {norm_b:.3e} \
         (threshold {threshold:.1e})"
    )]
    DegenerateFrame {
        norm_a: f64,
        norm_b: f64,
        threshold: f64,
    },

    #[error("singular value decomposition did not converge after {sweeps} sweeps")]
    SvdNoConvergence { sweeps: usize },

    #[error("point cloud has {n} points but {required} are required ({context})")]
    TooFewPoints {
        n: usize,
        required: usize,
        context: String,
    },

    #[error("kNN requested k = {k} neighbors from a cloud of {n} points")]
    BadNeighborCount { k: usize, n: usize },

    #[error("non-finite value in {context} (epoch {epoch}, pair {pair})")]
    NonFiniteLoss {
        context: String,
        epoch: usize,
        pair: usize,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("bad file format in {path}: {message}")]
    Format { path: String, message: String },

    #[error("checkpoint is incompatible: {message}")]
    Checkpoint { message: String },

    #[error("invalid configuration: {message}")]
    Config { message: String },

    #[error("empty input to {op}")]
    EmptyInput { op: &'static str },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit code the CLI maps this error to: 2 for data problems,
    /// 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::Format { .. }
            | Error::Checkpoint { .. }
            | Error::Config { .. }
            | Error::Io { .. }
            | Error::TooFewPoints { .. }
            | Error::BadNeighborCount { .. }
            | Error::EmptyInput { .. } => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
