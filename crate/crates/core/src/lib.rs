//! Conditional point transformer for anatomical landmark detection on 3D
//! point clouds.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common choices.

pub mod autodiff;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod gradsuite;
pub mod model;
pub mod scalar;
pub mod training;

pub use error::{LmptError, Result};
pub use scalar::Scalar;

pub type Tensor64 = autodiff::Tensor<f64>;
pub type Tensor32 = autodiff::Tensor<f32>;
pub type Tape64 = autodiff::Tape<f64>;
pub type Tape32 = autodiff::Tape<f32>;
pub type PointCloud64 = geometry::PointCloud<f64>;
pub type PointCloud32 = geometry::PointCloud<f32>;
pub type LandmarkSet64 = dataio::LandmarkSet<f64>;
pub type LandmarkSet32 = dataio::LandmarkSet<f32>;
pub type Model64 = model::LmptModel<f64>;
pub type Model32 = model::LmptModel<f32>;
