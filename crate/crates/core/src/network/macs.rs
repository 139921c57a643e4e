use super::config::{Granularity, NetworkConfig, ReuseMode};

/// Multiply-accumulate count of one ConvNeXt block at `pixels` positions.
fn convnext_macs(pixels: u64, k: u64, cin: u64, hidden: u64, cout: u64, dw_reps: u64, width: u64) -> u64 {
    pixels * (k * k * cin * dw_reps + cin * hidden * width + hidden * width * cout)
}

/// MACs of the ConvNeXt stack of block `k` per frame (no reuse applied to
/// the stack as a whole, per-layer reuse applied when `layer_reuse`).
fn stack_macs(cfg: &NetworkConfig, k: usize, pixels: u64, layer_reuse: bool) -> u64 {
    let kk = cfg.kernel as u64;
    let cin = cfg.in_channels(k) as u64;
    let cout = cfg.out_channels(k) as u64;
    let d = cfg.depths[k];
    let m = cfg.reuse.multiplier as u64;
    (0..d)
        .map(|j| {
            let to = if j + 1 == d { cout } else { cin };
            let hidden = cfg.expansion as u64 * to;
            let (apps, dw_reps, width) = match (layer_reuse, cfg.reuse.mode, cfg.reuse.granularity) {
                (true, ReuseMode::Deepen, Granularity::ConvnextBlock) => (m, 1, 1),
                (true, ReuseMode::Deepen, Granularity::ConvLayer) => (1, m, 1),
                (true, ReuseMode::Widen, _) => (1, 1, m),
                _ => (1, 1, 1),
            };
            apps * convnext_macs(pixels, kk, cin, hidden, to, dw_reps, width)
        })
        .sum()
}

/// Analytic MAC count for decoding `frames` frames of `height` x `width`.
///
/// Covers the stem linear, grid projections, depthwise convolutions,
/// ConvNeXt linears and the head convolution. Interpolation, normalization
/// and activations are not counted. Reuse multiplies the repeated portion.
pub fn count_macs(cfg: &NetworkConfig, frames: usize, height: usize, width: usize) -> u64 {
    let px = |level: usize| {
        let (h, w) = cfg.level_dims(level, height, width);
        (h * w) as u64
    };
    let mut per_frame = px(0) * (cfg.base_grid[3] * cfg.stem_channels) as u64;
    for k in 0..cfg.num_blocks() {
        let p = px(k + 1);
        per_frame += p * (cfg.local_grids[k][3] * cfg.in_channels(k)) as u64;
        let active = cfg.reuse.active(k);
        per_frame +=
            if active && cfg.reuse.mode == ReuseMode::Deepen && cfg.reuse.granularity == Granularity::HinervBlock {
                cfg.reuse.multiplier as u64 * stack_macs(cfg, k, p, false)
            } else {
                stack_macs(cfg, k, p, active)
            };
    }
    let hk = cfg.head_kernel as u64;
    let cn = cfg.out_channels(cfg.num_blocks() - 1) as u64;
    per_frame += px(cfg.num_blocks()) * hk * hk * cn * 3;
    per_frame * frames as u64
}

/// `count_macs` at the config's own video dimensions.
pub fn count_macs_native(cfg: &NetworkConfig) -> u64 {
    count_macs(cfg, cfg.frames, cfg.height, cfg.width)
}
