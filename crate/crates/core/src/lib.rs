//! Glioma segmentation with a squeeze-and-excitation ResNet encoder inside a
//! U-Net, built on a small CPU tensor engine with reverse-mode differentiation.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{Error, ErrorClass, Result};
pub use tensor::{Fill, Tape, Tensor, Var};
