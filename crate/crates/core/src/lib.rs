//! Video super-resolution core: tensors, differentiable operators, the
//! dual-dense restoration network, its trainer, and the frame pipeline.

pub mod autodiff;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod parallel;
pub mod rng;
pub mod selftest;
pub mod tensor;
pub mod train;
pub mod video;

pub use error::{Error, Result};
pub use tensor::Tensor;
