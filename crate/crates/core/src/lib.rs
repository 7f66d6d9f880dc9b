//! Wavelet-decomposed encoder-decoder for one-to-one image relighting.

pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod shuffle;
pub mod tensor;
pub mod trainer;
pub mod verify;
pub mod wavelet;

pub use error::{Error, Result};
pub use tensor::{Graph, Padding, Real, Shape, Tensor, Var};
