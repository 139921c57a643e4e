//! Whole-video encode and decode, and the synthetic evaluation corpus.
//!
//! Reported PSNR always compares the 8-bit source with the 8-bit output the
//! decoder writes, so an encoder-side figure and a figure measured on the
//! decoded file agree exactly.

use crate::codec::{pack_model, quantized_copy, unpack_model};
use crate::error::Result;
use crate::network::{decode_video, NetworkConfig, ParameterStore};
use crate::training::{check_video, fit_with, EpochLog, FitOutput, TrainConfig};
use crate::video::{bpp, psnr, synth_video, SynthKind, VideoBuffer};

/// `(frames, height, width)` of every corpus sequence.
pub const CORPUS_DIMS: (usize, usize, usize) = (16, 64, 64);

/// A packed model and what a decoder will make of it.
#[derive(Clone, Debug)]
pub struct Packed {
    pub bitstream: Vec<u8>,
    /// The 8-bit video a decoder reconstructs from `bitstream`.
    pub reconstruction: VideoBuffer,
    pub psnr: f64,
    pub bpp: f64,
}

/// Quantizes and packs `params` without training, scoring against `video`.
pub fn package(video: &VideoBuffer, cfg: &NetworkConfig, params: &ParameterStore, bits: u32) -> Result<Packed> {
    check_video(video, cfg)?;
    let bitstream = pack_model(params, cfg, bits)?;
    let reconstruction = decode_video(cfg, &quantized_copy(cfg, params, bits)?)?.to_u8();
    let psnr = psnr(&video.to_u8(), &reconstruction)?;
    let (t, h, w) = video.dims();
    let bpp = bpp(bitstream.len(), t, h, w);
    Ok(Packed { bitstream, reconstruction, psnr, bpp })
}

/// Trains `init` on `video`, then quantizes and packs the result.
pub fn encode(
    video: &VideoBuffer,
    cfg: &NetworkConfig,
    tcfg: &TrainConfig,
    init: ParameterStore,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(FitOutput, Packed)> {
    let fit = fit_with(video, cfg, tcfg, init, on_epoch)?;
    let packed = package(video, cfg, &fit.params, tcfg.quant_bits)?;
    Ok((fit, packed))
}

/// Rebuilds the 8-bit video carried by a bitstream.
pub fn decode(bytes: &[u8]) -> Result<(NetworkConfig, VideoBuffer)> {
    let (cfg, store) = unpack_model(bytes)?;
    let video = decode_video(&cfg, &store)?.to_u8();
    Ok((cfg, video))
}

/// The four synthetic sequences at [`CORPUS_DIMS`], in [`SynthKind::ALL`]
/// order.
pub fn corpus(seed: u64) -> Result<Vec<(SynthKind, VideoBuffer)>> {
    let (t, h, w) = CORPUS_DIMS;
    SynthKind::ALL.into_iter().map(|k| Ok((k, synth_video(k, t, h, w, seed)?))).collect()
}
