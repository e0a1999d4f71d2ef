//! Binarized convolutional networks: packed XNOR kernels, smooth progressive
//! quantization, layer graphs and a small training stack.

pub mod binarize;
pub mod data;
pub mod bitcore;
pub mod cli;
mod error;
pub mod layers;
pub mod models;
pub mod net;
pub mod train;
mod real;

pub use error::{Error, Result};
pub use real::Real;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/packed_kernels.md")]
    mod packed_kernels {}
    #[doc = include_str!("../../../book/src/smooth_binarization.md")]
    mod smooth_binarization {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
