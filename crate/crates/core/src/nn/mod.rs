//! Layer library: convolution, batch normalization, pooling, resampling,
//! concatenation and fully connected transforms.
//!
//! The functional forms are methods on [`Tape`](crate::tensor::Tape); the
//! structs here own parameter ids in a [`ParamStore`] and apply them inside a
//! [`Session`].

mod conv;
mod dense;
mod norm;
mod params;
mod pool;
mod resample;

pub use conv::Conv2d;
pub use dense::Dense;
pub use norm::{BatchMoments, BatchNorm2d, NormStats, BN_EPSILON, BN_MOMENTUM};
pub use params::{Init, Mode, Param, ParamId, ParamStore, Session};
pub(crate) use params::expect_rank4;
