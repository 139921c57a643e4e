//! Named network configurations.

use super::config::{NetworkConfig, ReuseSpec, CONFIG_VERSION};

/// Desk-scale network: four HiNeRV blocks with depths {3, 3, 3, 1} on a
/// 16 x 64 x 64 video, one patch per frame.
pub fn desk() -> NetworkConfig {
    NetworkConfig {
        version: CONFIG_VERSION,
        frames: 16,
        height: 64,
        width: 64,
        patch: [8, 8],
        base_grid: [4, 8, 8, 4],
        stem_channels: 16,
        depths: vec![3, 3, 3, 1],
        channels: vec![16, 16, 16, 12],
        scales: vec![2, 2, 2, 1],
        local_grids: vec![[4, 8, 8, 2], [4, 8, 8, 2], [4, 16, 16, 2], [4, 16, 16, 2]],
        expansion: 2,
        kernel: 3,
        head_kernel: 3,
        reuse: ReuseSpec::none(4),
    }
}

/// Smallest configuration used for rate-distortion runs: three blocks and
/// about 3k parameters, so a trained 6-bit model of the 16 x 64 x 64 corpus
/// packs below 0.5 bpp including the header. The base grid keeps 8 time
/// samples; with 4, objects moving a few pixels per frame smear between
/// samples.
pub fn toy() -> NetworkConfig {
    NetworkConfig {
        version: CONFIG_VERSION,
        frames: 16,
        height: 64,
        width: 64,
        patch: [8, 8],
        base_grid: [8, 8, 8, 2],
        stem_channels: 8,
        depths: vec![1, 1, 1],
        channels: vec![8, 8, 6],
        scales: vec![2, 2, 2],
        local_grids: vec![[4, 4, 4, 2], [4, 8, 8, 2], [4, 8, 8, 1]],
        expansion: 2,
        kernel: 3,
        head_kernel: 3,
        reuse: ReuseSpec::none(3),
    }
}

/// Full-size configuration (depths {3, 3, 3, 1}, 280 channels) on a
/// 240 x 1080 x 1920 sequence, used for complexity accounting only.
pub fn paper_1080p() -> NetworkConfig {
    NetworkConfig {
        version: CONFIG_VERSION,
        frames: 240,
        height: 1080,
        width: 1920,
        patch: [9, 16],
        base_grid: [60, 9, 16, 16],
        stem_channels: 280,
        depths: vec![3, 3, 3, 1],
        channels: vec![280, 280, 280, 32],
        scales: vec![5, 4, 3, 2],
        local_grids: vec![[60, 45, 80, 4], [60, 90, 160, 2], [60, 180, 320, 2], [60, 180, 320, 2]],
        expansion: 4,
        kernel: 3,
        head_kernel: 3,
        reuse: ReuseSpec::none(4),
    }
}

pub fn by_name(name: &str) -> Option<NetworkConfig> {
    match name {
        "desk" => Some(desk()),
        "toy" => Some(toy()),
        "paper-1080p" => Some(paper_1080p()),
        _ => None,
    }
}

pub const NAMES: &[&str] = &["desk", "toy", "paper-1080p"];
