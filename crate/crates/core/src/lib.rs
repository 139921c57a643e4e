//! Implicit neural representation video codec with parameter reuse.
//!
//! A video is encoded by overfitting a HiNeRV-style network to it,
//! fine-tuning under simulated 6-bit quantization, and arithmetic coding the
//! quantized weights. Deepening and widening reuse stored weights at decode
//! time, so they change quality and compute but never the bitstream size.

pub mod codec;
pub mod error;
pub mod network;
pub mod pipeline;
pub mod tensor;
pub mod training;
pub mod video;

pub use error::{Error, Result};

/// Guide chapters, compiled as doctests so their snippets stay current.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tensors.md")]
    mod tensors {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/reuse.md")]
    mod reuse {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/codec.md")]
    mod codec {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
