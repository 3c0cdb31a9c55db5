//! Core library for predicting characteristic orientations of 3D point
//! clouds.
//!
//! The model is a rotation-equivariant orientation hypothesizer paired
//! with a rotation-invariant residual predictor, trained self-supervised
//! on pairs of rotated clouds. Everything is generic over the scalar
//! type; concrete `f32`/`f64` aliases live at the crate root.

pub mod checkpoint;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod hypothesizer;
pub mod metrics;
pub mod params;
pub mod pointcloud;
pub mod residual;
pub mod rng;
pub mod scalar;
pub mod so3;
pub mod svd3;
pub mod tensor;
pub mod training;
pub mod vnn;

pub use error::{Error, Result};
pub use hypothesizer::HypothesizerConfig;
pub use metrics::{EvalConfig, EvalReport, Perturb};
pub use pointcloud::{Dataset, PointCloud};
pub use residual::{
    CharacteristicOrientationPredictor, Graphs, KnnMode, Prediction, PredictorConfig,
    ResidualConfig,
};
pub use scalar::{Precision, Scalar};
pub use so3::Rotation;
pub use tensor::{Tape, Tensor, Var};
pub use training::{PairMode, TrainConfig, TrainResult};

/// `f64` point cloud.
pub type PointCloud64 = PointCloud<f64>;
/// `f32` point cloud.
pub type PointCloud32 = PointCloud<f32>;
/// `f64` rotation.
pub type Rotation64 = Rotation<f64>;
/// `f32` rotation.
pub type Rotation32 = Rotation<f32>;
/// `f64` tensor.
pub type Tensor64 = Tensor<f64>;
/// `f32` tensor.
pub type Tensor32 = Tensor<f32>;
/// `f64` model.
pub type Predictor64 = CharacteristicOrientationPredictor<f64>;
/// `f32` model.
pub type Predictor32 = CharacteristicOrientationPredictor<f32>;
