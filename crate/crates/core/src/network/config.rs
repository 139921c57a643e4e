use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version tag written into every serialized network config.
pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReuseMode {
    None,
    Deepen,
    Widen,
}

/// What a deepening reuse repeats.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// Only the depthwise convolution inside each ConvNeXt block.
    ConvLayer,
    /// Each whole ConvNeXt block.
    ConvnextBlock,
    /// Grid add plus the ConvNeXt stack of a HiNeRV block (not the upsampler).
    HinervBlock,
}

/// How stored parameters are reused at forward time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReuseSpec {
    pub mode: ReuseMode,
    pub granularity: Granularity,
    /// Number of applications of the reused unit; 1 means no reuse.
    pub multiplier: usize,
    /// One flag per HiNeRV block.
    pub location: Vec<bool>,
}

impl ReuseSpec {
    pub fn none(blocks: usize) -> Self {
        ReuseSpec {
            mode: ReuseMode::None,
            granularity: Granularity::ConvnextBlock,
            multiplier: 1,
            location: vec![false; blocks],
        }
    }

    /// Whether block `k` actually runs with reuse.
    pub fn active(&self, k: usize) -> bool {
        self.mode != ReuseMode::None && self.multiplier > 1 && self.location.get(k).copied().unwrap_or(false)
    }
}

/// Full architecture description. Serialized as TOML; the same bytes go into
/// the bitstream header.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub version: u32,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Patch size at stem resolution, `[h_p, w_p]`.
    pub patch: [usize; 2],
    /// Base grid `[T, H, W, C]`.
    pub base_grid: [usize; 4],
    pub stem_channels: usize,
    pub depths: Vec<usize>,
    pub channels: Vec<usize>,
    pub scales: Vec<usize>,
    /// Local grid `[T, H, W, C]` per HiNeRV block.
    pub local_grids: Vec<[usize; 4]>,
    pub expansion: usize,
    pub kernel: usize,
    pub head_kernel: usize,
    pub reuse: ReuseSpec,
}

impl NetworkConfig {
    pub fn num_blocks(&self) -> usize {
        self.depths.len()
    }

    pub fn in_channels(&self, k: usize) -> usize {
        if k == 0 {
            self.stem_channels
        } else {
            self.channels[k - 1]
        }
    }

    pub fn out_channels(&self, k: usize) -> usize {
        self.channels[k]
    }

    /// Reuse is only defined where a block keeps its channel count.
    pub fn reuse_eligible(&self, k: usize) -> bool {
        self.in_channels(k) == self.out_channels(k)
    }

    /// Location mask with every eligible block switched on.
    pub fn eligible_mask(&self) -> Vec<bool> {
        (0..self.num_blocks()).map(|k| self.reuse_eligible(k)).collect()
    }

    pub fn total_scale(&self) -> usize {
        self.scales.iter().product()
    }

    /// Spatial size of the feature map after block `level` (0 = stem).
    pub fn level_dims(&self, level: usize, height: usize, width: usize) -> (usize, usize) {
        let below: usize = self.scales[level..].iter().product();
        (height / below, width / below)
    }

    /// Output patch size in pixels.
    pub fn output_patch(&self) -> (usize, usize) {
        (self.patch[0] * self.total_scale(), self.patch[1] * self.total_scale())
    }

    pub fn patch_grid(&self) -> (usize, usize) {
        let (ph, pw) = self.output_patch();
        (self.height / ph, self.width / pw)
    }

    pub fn with_reuse(mut self, reuse: ReuseSpec) -> Self {
        self.reuse = reuse;
        self
    }

    /// Deepening with `m` applications on every eligible block.
    pub fn deepened(self, m: usize, granularity: Granularity) -> Self {
        let location = self.eligible_mask();
        self.with_reuse(ReuseSpec { mode: ReuseMode::Deepen, granularity, multiplier: m, location })
    }

    pub fn widened(self, m: usize) -> Self {
        let location = self.eligible_mask();
        self.with_reuse(ReuseSpec {
            mode: ReuseMode::Widen,
            granularity: Granularity::ConvnextBlock,
            multiplier: m,
            location,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.version != CONFIG_VERSION {
            return cfg(format!("unsupported config version {}", self.version));
        }
        let n = self.depths.len();
        if n == 0 {
            return cfg("at least one HiNeRV block is required".into());
        }
        if self.channels.len() != n || self.scales.len() != n || self.local_grids.len() != n {
            return cfg(format!(
                "per-block lists disagree: depths {n}, channels {}, scales {}, local_grids {}",
                self.channels.len(),
                self.scales.len(),
                self.local_grids.len()
            ));
        }
        if self.reuse.location.len() != n {
            return cfg(format!("reuse.location has {} flags for {n} blocks", self.reuse.location.len()));
        }
        let positive = [self.frames, self.height, self.width, self.stem_channels, self.expansion]
            .into_iter()
            .chain(self.patch)
            .chain(self.base_grid)
            .chain(self.depths.iter().copied())
            .chain(self.channels.iter().copied())
            .chain(self.scales.iter().copied())
            .chain(self.local_grids.iter().flatten().copied())
            .all(|v| v > 0);
        if !positive {
            return cfg("all dimensions must be positive".into());
        }
        if self.kernel.is_multiple_of(2) || self.head_kernel.is_multiple_of(2) {
            return cfg(format!("kernel sizes must be odd (kernel {}, head {})", self.kernel, self.head_kernel));
        }
        let (ph, pw) = self.output_patch();
        if !self.height.is_multiple_of(ph) || !self.width.is_multiple_of(pw) {
            return cfg(format!(
                "frame {}x{} is not tiled by output patches {ph}x{pw} (patch {:?} x scale {})",
                self.height,
                self.width,
                self.patch,
                self.total_scale()
            ));
        }
        if self.reuse.multiplier < 1 {
            return cfg("reuse multiplier must be >= 1".into());
        }
        for (k, &on) in self.reuse.location.iter().enumerate() {
            if on && !self.reuse_eligible(k) {
                return cfg(format!(
                    "block {k} changes channels {} -> {} and cannot be reused",
                    self.in_channels(k),
                    self.out_channels(k)
                ));
            }
        }
        if self.reuse.mode == ReuseMode::Widen && self.reuse.granularity != Granularity::ConvnextBlock {
            return cfg("widening is only defined at ConvNeXt block granularity".into());
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("network config always serializes")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let cfg: NetworkConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
