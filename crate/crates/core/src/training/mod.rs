//! Overfitting a network to one video, then fine-tuning it under simulated
//! quantization.
//!
//! Stage one minimizes the MSE over every output patch with Adam, a linear
//! warmup and cosine annealing. Stage two (QAT) is appended after it and
//! restarts the cosine schedule at the base rate without warmup. Each
//! forward pass adds fresh uniform noise of one quantization step to every
//! weight, and the gradient flows straight through to the clean weights.

mod adam;
mod qat;

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPS};
pub use qat::{qat_forward, qat_noise};

use crate::codec::{quantized_copy, BITS_RANGE, DEFAULT_BITS};
use crate::error::{Error, Result};
use crate::network::{decode_video, forward_patch, patch_target, BoundParams, NetworkConfig, ParameterStore};
use crate::tensor::{Tape, Tensor};
use crate::video::{psnr, VideoBuffer};

/// Version tag written into every serialized training config.
pub const TRAIN_CONFIG_VERSION: u32 = 1;

/// Consecutive epochs compared by the divergence check.
pub const DIVERGENCE_WINDOW: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub version: u32,
    /// Stage one length, warmup included.
    pub total_epochs: usize,
    /// Leading epochs of stage one with a linearly rising learning rate.
    pub warmup_epochs: usize,
    /// Appended quantization-aware epochs.
    pub qat_epochs: usize,
    pub base_lr: f32,
    /// Patches per optimizer step.
    pub batch: usize,
    pub seed: u64,
    pub quant_bits: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            version: TRAIN_CONFIG_VERSION,
            total_epochs: 300,
            warmup_epochs: 30,
            qat_epochs: 30,
            base_lr: 5e-4,
            batch: 1,
            seed: 0,
            quant_bits: DEFAULT_BITS,
        }
    }
}

impl TrainConfig {
    /// The default schedule with two patches per step and a 2e-3 peak
    /// learning rate, for the 16 x 64 x 64 desk-scale corpus: 2640 steps
    /// per video.
    pub fn desk() -> Self {
        TrainConfig { base_lr: 2e-3, batch: 2, ..TrainConfig::default() }
    }

    /// Multiplies every epoch count by `factor`, keeping at least one
    /// stage-one epoch.
    pub fn scaled(mut self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::Config(format!("epoch scale must be positive, got {factor}")));
        }
        let scale = |e: usize| (e as f64 * factor).round() as usize;
        self.total_epochs = scale(self.total_epochs).max(1);
        self.warmup_epochs = scale(self.warmup_epochs).min(self.total_epochs - 1);
        self.qat_epochs = scale(self.qat_epochs);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.version != TRAIN_CONFIG_VERSION {
            return bad(format!("training config version {} (expected {TRAIN_CONFIG_VERSION})", self.version));
        }
        if self.total_epochs == 0 || self.warmup_epochs >= self.total_epochs {
            return bad(format!(
                "need 0 <= warmup_epochs < total_epochs, got {} and {}",
                self.warmup_epochs, self.total_epochs
            ));
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return bad(format!("base_lr must be positive, got {}", self.base_lr));
        }
        if self.batch == 0 {
            return bad("batch must be at least 1".into());
        }
        if !BITS_RANGE.contains(&self.quant_bits) {
            return bad(format!("quant_bits must be in {BITS_RANGE:?}, got {}", self.quant_bits));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("training config always serializes")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Linear warmup from 0 to `base_lr` over `warmup_steps`, then cosine decay
/// towards 0 at `total_steps`.
pub fn lr_at(step: usize, total_steps: usize, warmup_steps: usize, base_lr: f32) -> f32 {
    let base = base_lr as f64;
    if step < warmup_steps {
        return (base * step as f64 / warmup_steps as f64) as f32;
    }
    let span = total_steps.saturating_sub(warmup_steps).max(1) as f64;
    let progress = (step - warmup_steps) as f64 / span;
    (base * 0.5 * (1.0 + (PI * progress).cos())) as f32
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Fit,
    Qat,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Fit => "fit",
            Stage::Qat => "qat",
        })
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    /// Counted across both stages.
    pub epoch: usize,
    pub stage: Stage,
    /// Mean per-step training loss.
    pub loss: f64,
    /// `-10 log10(loss)`, capped like [`psnr`].
    pub psnr: f64,
    /// Learning rate of the epoch's last step.
    pub lr: f32,
}

/// Writes `epoch,stage,loss,psnr,lr` rows with a header line.
pub fn write_log_csv<W: Write>(rows: &[EpochLog], mut out: W) -> Result<()> {
    writeln!(out, "epoch,stage,loss,psnr,lr")?;
    for r in rows {
        writeln!(out, "{},{},{:.9e},{:.4},{:.6e}", r.epoch, r.stage, r.loss, r.psnr, r.lr)?;
    }
    Ok(())
}

/// Whether the mean loss of any window of [`DIVERGENCE_WINDOW`] epochs
/// exceeds that of the window before it, within each stage.
pub fn diverged(log: &[EpochLog]) -> bool {
    [Stage::Fit, Stage::Qat].into_iter().any(|stage| {
        let losses: Vec<f64> = log.iter().filter(|r| r.stage == stage).map(|r| r.loss).collect();
        let means: Vec<f64> =
            losses.chunks_exact(DIVERGENCE_WINDOW).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
        means.windows(2).any(|p| p[1] > p[0])
    })
}

/// Result of [`fit`].
#[derive(Clone, Debug)]
pub struct FitOutput {
    /// Parameters after both stages.
    pub params: ParameterStore,
    /// Parameters at the end of stage one.
    pub pre_qat: ParameterStore,
    pub log: Vec<EpochLog>,
    /// Total optimizer steps taken.
    pub steps: usize,
    pub diverged: bool,
}

fn loss_psnr(mse: f64) -> f64 {
    if mse <= 0.0 {
        crate::video::PSNR_CAP
    } else {
        (-10.0 * mse.log10()).min(crate::video::PSNR_CAP)
    }
}

/// Checks that `video` has the dims `cfg` reconstructs.
pub fn check_video(video: &VideoBuffer, cfg: &NetworkConfig) -> Result<()> {
    if video.dims() != (cfg.frames, cfg.height, cfg.width) {
        return Err(Error::Config(format!(
            "video is {:?} (frames, height, width) but the network produces {:?}",
            video.dims(),
            (cfg.frames, cfg.height, cfg.width)
        )));
    }
    Ok(())
}

/// Trains freshly initialized parameters (seeded by `tcfg.seed`).
pub fn fit(video: &VideoBuffer, cfg: &NetworkConfig, tcfg: &TrainConfig) -> Result<FitOutput> {
    fit_with(video, cfg, tcfg, ParameterStore::init(cfg, tcfg.seed), |_| {})
}

/// Trains `init`, reporting each finished epoch to `on_epoch`.
pub fn fit_with(
    video: &VideoBuffer,
    cfg: &NetworkConfig,
    tcfg: &TrainConfig,
    init: ParameterStore,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<FitOutput> {
    cfg.validate()?;
    tcfg.validate()?;
    check_video(video, cfg)?;
    if init.len() != ParameterStore::names_for(cfg).len() {
        return Err(Error::Config("initial parameters do not match the config layout".into()));
    }

    let (gh, gw) = cfg.patch_grid();
    let patches: Vec<(usize, usize, usize)> =
        (0..cfg.frames).flat_map(|t| (0..gh).flat_map(move |i| (0..gw).map(move |j| (t, i, j)))).collect();
    let targets: Vec<Tensor> = patches.iter().map(|&(t, i, j)| patch_target(video, cfg, t, i, j)).collect();
    let steps_per_epoch = patches.len().div_ceil(tcfg.batch);

    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut store = init;
    let mut adam = AdamState::new(&store);
    let mut log = Vec::with_capacity(tcfg.total_epochs + tcfg.qat_epochs);
    let mut order: Vec<usize> = (0..patches.len()).collect();
    let mut pre_qat = None;
    let mut steps = 0;

    let stages = [
        (Stage::Fit, tcfg.total_epochs, tcfg.warmup_epochs, tcfg.base_lr),
        (Stage::Qat, tcfg.qat_epochs, 0, tcfg.base_lr),
    ];
    for (stage, epochs, warmup, lr0) in stages {
        if stage == Stage::Qat {
            pre_qat = Some(store.clone());
        }
        let total_steps = epochs * steps_per_epoch;
        let warmup_steps = warmup * steps_per_epoch;
        let mut stage_step = 0;
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            let mut lr = 0.0;
            for chunk in order.chunks(tcfg.batch) {
                lr = lr_at(stage_step, total_steps, warmup_steps, lr0);
                let noise = match stage {
                    Stage::Fit => None,
                    Stage::Qat => Some(qat_noise(&store, tcfg.quant_bits, &mut rng)?),
                };
                let mut tape = Tape::new();
                let bp = BoundParams::bind(&mut tape, cfg, &store, true, noise.as_deref());
                let mut total = None;
                for &p in chunk {
                    let (t, i, j) = patches[p];
                    let y = forward_patch(&mut tape, cfg, &bp, t, i, j)?;
                    let target = tape.constant(targets[p].clone());
                    let l = tape.mse_loss(y, target)?;
                    total = Some(match total {
                        None => l,
                        Some(acc) => tape.add(acc, l)?,
                    });
                }
                let total = total.expect("chunks are non-empty");
                let loss = tape.scale(total, 1.0 / chunk.len() as f32);
                tape.backward(loss)?;
                let grads: Vec<Option<&[f32]>> = bp.vars.iter().map(|&v| tape.grad(v)).collect();
                adam_step(&mut store, &grads, &mut adam, lr)?;
                loss_sum += tape.value(loss).data()[0] as f64;
                stage_step += 1;
                steps += 1;
            }
            let loss = loss_sum / steps_per_epoch as f64;
            if !loss.is_finite() {
                return Err(Error::Evaluation(format!("training loss became {loss} in epoch {}", log.len())));
            }
            let row = EpochLog { epoch: log.len(), stage, loss, psnr: loss_psnr(loss), lr };
            on_epoch(&row);
            log.push(row);
        }
    }
    let diverged = diverged(&log);
    Ok(FitOutput { params: store, pre_qat: pre_qat.expect("QAT stage always runs"), log, steps, diverged })
}

/// PSNR of the clamped reconstruction against `video`, in the float domain.
pub fn reconstruction_psnr(video: &VideoBuffer, cfg: &NetworkConfig, store: &ParameterStore) -> Result<f64> {
    check_video(video, cfg)?;
    psnr(&decode_video(cfg, store)?, &video.to_float())
}

/// Reconstruction PSNR after quantizing the parameters at `bits`.
pub fn quantized_psnr(video: &VideoBuffer, cfg: &NetworkConfig, store: &ParameterStore, bits: u32) -> Result<f64> {
    reconstruction_psnr(video, cfg, &quantized_copy(cfg, store, bits)?)
}
