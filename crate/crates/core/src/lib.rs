//! Joint point and line segment matching between two images.
//!
//! Keypoints and line segments of each image are merged into a wireframe
//! graph. An attention graph network with line message passing refines its
//! descriptors, which a dual-softmax assignment with dustbins then matches. The
//! crate also carries the ground-truth labeler, the training loop, a hybrid
//! RANSAC rotation estimator and the evaluation metrics.
//!
//! The numeric core is generic over [`Scalar`] (`f32` / `f64`); the aliases
//! at the crate root fix it to `f64`, which is what the file formats, the
//! trainer and the CLI use.

pub mod assignment;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod features;
pub mod gnn;
pub mod groundtruth;
pub mod io;
pub mod linalg;
pub mod matcher;
pub mod wireframe;
pub mod numerics;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = numerics::Tensor<f64>;
pub type Tensor32 = numerics::Tensor<f32>;
pub type Tape = numerics::Tape<f64>;
pub type ParamStore = numerics::ParamStore<f64>;
pub type MlpParams = numerics::MlpParams<f64>;
