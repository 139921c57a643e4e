//! HiNeRV-style network with parameter reuse.
//!
//! Patch coordinates `(i, j, t)` sample a learned base grid, a linear stem
//! lifts it to feature channels, and `n` HiNeRV blocks each upsample, add a
//! projected local grid and run a ConvNeXt stack. A convolutional head maps
//! the last feature map to RGB.
//!
//! Reuse (deepening by repeated application, widening by weight
//! concatenation) changes the forward graph but never the stored parameters.

mod config;
mod macs;
mod model;
mod params;
pub mod presets;
pub mod sampling;

pub use config::{Granularity, NetworkConfig, ReuseMode, ReuseSpec, CONFIG_VERSION};
pub use macs::{count_macs, count_macs_native};
pub use model::{
    convnext_branch, convnext_forward, decode_video, deepened_forward, forward_patch, hinerv_block_forward,
    patch_target, stem, stem_patch, widened_convnext_forward, widened_weights, BlockParams, BlockRegion, BoundParams,
    ConvNextParams, LAYER_NORM_EPS,
};
pub use params::{count_unique_params, ParameterStore, HEAD_BIAS_INIT};
