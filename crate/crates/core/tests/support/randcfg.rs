//! Random small network configurations.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use reuse_inr::network::{Granularity, NetworkConfig, ReuseMode, ReuseSpec, CONFIG_VERSION};

pub const GRANULARITIES: [Granularity; 3] =
    [Granularity::ConvLayer, Granularity::ConvnextBlock, Granularity::HinervBlock];

/// A valid config with 1 to 3 blocks, at least one of them reuse-eligible,
/// and frames of at most 24 x 24.
pub fn random_config<R: Rng>(rng: &mut R) -> NetworkConfig {
    loop {
        let n = rng.gen_range(1..=3);
        let stem = rng.gen_range(2..=6);
        let mut channels = Vec::with_capacity(n);
        let mut prev = stem;
        for _ in 0..n {
            let c = if rng.gen_bool(0.6) { prev } else { rng.gen_range(2..=6) };
            channels.push(c);
            prev = c;
        }
        let scales: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=2)).collect();
        let patch = [rng.gen_range(1..=3), rng.gen_range(1..=3)];
        let total: usize = scales.iter().product();
        let (gh, gw) = (rng.gen_range(1..=2), rng.gen_range(1..=2));
        let cfg = NetworkConfig {
            version: CONFIG_VERSION,
            frames: rng.gen_range(1..=3),
            height: patch[0] * total * gh,
            width: patch[1] * total * gw,
            patch,
            base_grid: [rng.gen_range(1..=2), rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=3)],
            stem_channels: stem,
            depths: (0..n).map(|_| rng.gen_range(1..=2)).collect(),
            channels,
            scales,
            local_grids: (0..n)
                .map(|_| [rng.gen_range(1..=2), rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=2)])
                .collect(),
            expansion: rng.gen_range(1..=2),
            kernel: *[1, 3].choose(rng).unwrap(),
            head_kernel: *[1, 3].choose(rng).unwrap(),
            reuse: ReuseSpec::none(n),
        };
        cfg.validate().expect("generator produces valid configs");
        if cfg.eligible_mask().contains(&true) {
            return cfg;
        }
    }
}

/// Every location mask that is a subset of the eligible blocks of `cfg`.
pub fn eligible_masks(cfg: &NetworkConfig) -> Vec<Vec<bool>> {
    let eligible = cfg.eligible_mask();
    let n = eligible.len();
    (0u32..1 << n)
        .map(|bits| (0..n).map(|k| bits & (1 << k) != 0).collect::<Vec<bool>>())
        .filter(|m| m.iter().zip(&eligible).all(|(&on, &ok)| !on || ok))
        .collect()
}

/// Every valid `(mode, granularity)` pair with reuse.
pub fn reuse_kinds() -> Vec<(ReuseMode, Granularity)> {
    let mut v: Vec<_> = GRANULARITIES.iter().map(|&g| (ReuseMode::Deepen, g)).collect();
    v.push((ReuseMode::Widen, Granularity::ConvnextBlock));
    v
}
