//! Forward pass of the HiNeRV-style network and the three reuse mechanisms.

use super::config::{Granularity, NetworkConfig, ReuseMode};
use super::params::ParameterStore;
use super::sampling::{grid_tap, grid_taps, upsample_source_range, upsample_taps};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};
use crate::video::VideoBuffer;

pub const LAYER_NORM_EPS: f32 = 1e-6;

/// Tape handles for one ConvNeXt block.
#[derive(Clone, Copy, Debug)]
pub struct ConvNextParams {
    pub dw_weight: Var,
    pub dw_bias: Var,
    pub norm_gamma: Var,
    pub norm_beta: Var,
    pub fc1_weight: Var,
    pub fc1_bias: Var,
    pub fc2_weight: Var,
    pub fc2_bias: Var,
}

#[derive(Clone, Debug)]
pub struct BlockParams {
    pub grid: Var,
    pub grid_weight: Var,
    pub grid_bias: Var,
    pub convnext: Vec<ConvNextParams>,
}

/// A [`ParameterStore`] recorded on a tape, in canonical order.
#[derive(Clone, Debug)]
pub struct BoundParams {
    /// Every stored tensor, same order as the store.
    pub vars: Vec<Var>,
    pub base_grid: Var,
    pub stem_weight: Var,
    pub stem_bias: Var,
    pub blocks: Vec<BlockParams>,
    pub head_weight: Var,
    pub head_bias: Var,
}

impl BoundParams {
    /// Records every tensor of `store` on `tape`. With `trainable` the leaves
    /// collect gradients. `offsets`, when given, is added elementwise to the
    /// stored values first (quantization noise during QAT); the gradient then
    /// flows straight through to the unperturbed weights.
    pub fn bind(
        tape: &mut Tape,
        cfg: &NetworkConfig,
        store: &ParameterStore,
        trainable: bool,
        offsets: Option<&[Vec<f32>]>,
    ) -> Self {
        let mut vars = Vec::with_capacity(store.len());
        for (i, t) in store.tensors().enumerate() {
            let mut t = t.clone();
            if let Some(off) = offsets {
                for (v, o) in t.data_mut().iter_mut().zip(&off[i]) {
                    *v += o;
                }
            }
            vars.push(if trainable { tape.param(t) } else { tape.constant(t) });
        }
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("store matches config layout");
        let base_grid = next();
        let stem_weight = next();
        let stem_bias = next();
        let mut blocks = Vec::with_capacity(cfg.num_blocks());
        for b in 0..cfg.num_blocks() {
            let grid = next();
            let grid_weight = next();
            let grid_bias = next();
            let convnext = (0..cfg.depths[b])
                .map(|_| ConvNextParams {
                    dw_weight: next(),
                    dw_bias: next(),
                    norm_gamma: next(),
                    norm_beta: next(),
                    fc1_weight: next(),
                    fc1_bias: next(),
                    fc2_weight: next(),
                    fc2_bias: next(),
                })
                .collect();
            blocks.push(BlockParams { grid, grid_weight, grid_bias, convnext });
        }
        let head_weight = next();
        let head_bias = next();
        BoundParams { vars, base_grid, stem_weight, stem_bias, blocks, head_weight, head_bias }
    }
}

/// The ConvNeXt residual branch
/// `fc2(gelu(fc1(norm(dwconv^dw_repeats(x)))))`, with `fc1`/`fc2` widened
/// by `width_copies` concatenated copies.
pub fn convnext_branch(
    tape: &mut Tape,
    x: Var,
    p: &ConvNextParams,
    dw_repeats: usize,
    width_copies: usize,
) -> Result<Var> {
    if dw_repeats < 1 || width_copies < 1 {
        return Err(Error::Config("reuse multiplier must be >= 1".into()));
    }
    let cin = p_channels(tape, p);
    if tape.shape(x).last() != Some(&cin) {
        return Err(Error::dim("convnext", format!("input {:?} does not have {cin} channels", tape.shape(x))));
    }
    let mut h = x;
    for _ in 0..dw_repeats {
        h = tape.depthwise_conv2d(h, p.dw_weight, p.dw_bias)?;
    }
    h = tape.layer_norm(h, p.norm_gamma, p.norm_beta, LAYER_NORM_EPS)?;
    let (w1, b1, w2) = if width_copies == 1 {
        (p.fc1_weight, p.fc1_bias, p.fc2_weight)
    } else {
        widened_weights(tape, p.fc1_weight, p.fc1_bias, p.fc2_weight, width_copies)?
    };
    h = tape.linear(h, w1, b1)?;
    h = tape.gelu(h);
    tape.linear(h, w2, p.fc2_bias)
}

fn p_channels(tape: &Tape, p: &ConvNextParams) -> usize {
    tape.shape(p.dw_bias)[0]
}

/// `x + branch(x)`; a channel-changing block has no residual path.
pub fn convnext_forward(tape: &mut Tape, x: Var, p: &ConvNextParams) -> Result<Var> {
    convnext_apply(tape, x, p, 1, 1)
}

fn convnext_apply(tape: &mut Tape, x: Var, p: &ConvNextParams, dw_repeats: usize, width: usize) -> Result<Var> {
    let branch = convnext_branch(tape, x, p, dw_repeats, width)?;
    if tape.shape(branch) == tape.shape(x) {
        tape.add(x, branch)
    } else {
        Ok(branch)
    }
}

/// The same ConvNeXt block applied `m` times with shared parameters.
pub fn deepened_forward(tape: &mut Tape, x: Var, p: &ConvNextParams, m: usize) -> Result<Var> {
    if m < 1 {
        return Err(Error::Config("reuse multiplier must be >= 1".into()));
    }
    let mut y = x;
    for _ in 0..m {
        y = convnext_forward(tape, y, p)?;
    }
    Ok(y)
}

/// Derives widened weights by concatenating `copies` copies: `W1` and `b1`
/// along the output axis, `W2` along its input axis. `b2` is left alone.
/// Nothing new is stored; gradients of the copies sum into the originals.
pub fn widened_weights(tape: &mut Tape, w1: Var, b1: Var, w2: Var, copies: usize) -> Result<(Var, Var, Var)> {
    let hidden = tape.shape(w1)[0];
    if tape.shape(w2).len() != 2 || tape.shape(w2)[1] != hidden || tape.shape(b1) != [hidden] {
        return Err(Error::dim(
            "widened_weights",
            format!(
                "W1 {:?} / b1 {:?} output axis does not match W2 {:?} input axis",
                tape.shape(w1),
                tape.shape(b1),
                tape.shape(w2)
            ),
        ));
    }
    let w1n = tape.concat(&vec![w1; copies], 0)?;
    let b1n = tape.concat(&vec![b1; copies], 0)?;
    let w2n = tape.concat(&vec![w2; copies], 1)?;
    Ok((w1n, b1n, w2n))
}

pub fn widened_convnext_forward(tape: &mut Tape, x: Var, p: &ConvNextParams, copies: usize) -> Result<Var> {
    convnext_apply(tape, x, p, 1, copies)
}

/// Spatial and temporal sampling positions for one block evaluation.
#[derive(Clone, Debug)]
pub struct BlockRegion {
    pub frame: usize,
    /// Global rows / cols of the block output region at its own level.
    pub rows: (usize, usize),
    pub cols: (usize, usize),
    /// Global rows / cols of the input region at the previous level.
    pub in_rows: (usize, usize),
    pub in_cols: (usize, usize),
}

impl BlockRegion {
    /// Region covering the whole frame at level `k + 1`.
    pub fn full(cfg: &NetworkConfig, k: usize, frame: usize) -> Self {
        let (h, w) = cfg.level_dims(k + 1, cfg.height, cfg.width);
        let (ih, iw) = cfg.level_dims(k, cfg.height, cfg.width);
        BlockRegion { frame, rows: (0, h), cols: (0, w), in_rows: (0, ih), in_cols: (0, iw) }
    }
}

/// Samples a `[T, H, W, C]` grid at global positions of a level with
/// dimensions `level`, returning an `[h, w, C]` map.
fn sample_grid(
    tape: &mut Tape,
    grid: Var,
    frame: usize,
    frames: usize,
    rows: (usize, usize),
    cols: (usize, usize),
    level: (usize, usize),
) -> Result<Var> {
    let gs = tape.shape(grid).to_vec();
    let plane = tape.lerp_frames(grid, grid_tap(frame, frames, gs[0]))?;
    let rt = grid_taps(rows.0, rows.1 - rows.0, level.0, gs[1]);
    let ct = grid_taps(cols.0, cols.1 - cols.0, level.1, gs[2]);
    tape.resample(plane, rt, ct)
}

/// Stem: base grid sampled over `rows` x `cols` of level 0, then the stem
/// linear layer.
pub fn stem(
    tape: &mut Tape,
    cfg: &NetworkConfig,
    bp: &BoundParams,
    frame: usize,
    rows: (usize, usize),
    cols: (usize, usize),
) -> Result<Var> {
    let level = cfg.level_dims(0, cfg.height, cfg.width);
    if frame >= cfg.frames || rows.1 > level.0 || cols.1 > level.1 || rows.0 >= rows.1 || cols.0 >= cols.1 {
        return Err(Error::Index(format!(
            "stem region frame {frame} rows {rows:?} cols {cols:?} outside {} x {level:?}",
            cfg.frames
        )));
    }
    let g = sample_grid(tape, bp.base_grid, frame, cfg.frames, rows, cols, level)?;
    tape.linear(g, bp.stem_weight, bp.stem_bias)
}

/// Stem output for patch `(pi, pj)` of `frame`, shape `(h_p, w_p, C0)`.
pub fn stem_patch(
    tape: &mut Tape,
    cfg: &NetworkConfig,
    bp: &BoundParams,
    frame: usize,
    pi: usize,
    pj: usize,
) -> Result<Var> {
    let [hp, wp] = cfg.patch;
    stem(tape, cfg, bp, frame, (pi * hp, (pi + 1) * hp), (pj * wp, (pj + 1) * wp))
}

fn conv_stack(tape: &mut Tape, cfg: &NetworkConfig, mut x: Var, p: &BlockParams, in_block_reuse: bool) -> Result<Var> {
    let reuse = &cfg.reuse;
    let m = reuse.multiplier;
    for cp in &p.convnext {
        x = match (in_block_reuse, reuse.mode, reuse.granularity) {
            (true, ReuseMode::Deepen, Granularity::ConvnextBlock) => deepened_forward(tape, x, cp, m)?,
            (true, ReuseMode::Deepen, Granularity::ConvLayer) => convnext_apply(tape, x, cp, m, 1)?,
            (true, ReuseMode::Widen, _) => widened_convnext_forward(tape, x, cp, m)?,
            _ => convnext_forward(tape, x, cp)?,
        };
    }
    Ok(x)
}

/// One HiNeRV block: upsample, add the projected local grid, run the
/// ConvNeXt stack, with reuse dispatched per the config.
///
/// `x` covers `region.in_rows` x `region.in_cols` at the previous level;
/// the result covers `region.rows` x `region.cols`.
pub fn hinerv_block_forward(
    tape: &mut Tape,
    cfg: &NetworkConfig,
    k: usize,
    x: Var,
    p: &BlockParams,
    region: &BlockRegion,
) -> Result<Var> {
    let s = cfg.scales[k];
    let (ih, iw) = cfg.level_dims(k, cfg.height, cfg.width);
    let level = cfg.level_dims(k + 1, cfg.height, cfg.width);
    let in_shape = tape.shape(x).to_vec();
    if in_shape.len() != 3
        || in_shape[0] != region.in_rows.1 - region.in_rows.0
        || in_shape[1] != region.in_cols.1 - region.in_cols.0
    {
        return Err(Error::dim("hinerv_block", format!("input {in_shape:?} does not match region {region:?}")));
    }
    let rows = upsample_taps(region.rows.0, region.rows.1 - region.rows.0, s, ih, region.in_rows.0);
    let cols = upsample_taps(region.cols.0, region.cols.1 - region.cols.0, s, iw, region.in_cols.0);
    if rows.iter().any(|t| t.i1.max(t.i0) >= in_shape[0]) || cols.iter().any(|t| t.i1.max(t.i0) >= in_shape[1]) {
        return Err(Error::Index(format!("block {k} region {region:?} reads outside its input")));
    }
    let up = tape.resample(x, rows, cols)?;
    let g = sample_grid(tape, p.grid, region.frame, cfg.frames, region.rows, region.cols, level)?;
    let g = tape.linear(g, p.grid_weight, p.grid_bias)?;
    let active = cfg.reuse.active(k);
    if active && cfg.reuse.mode == ReuseMode::Deepen && cfg.reuse.granularity == Granularity::HinervBlock {
        let mut y = up;
        for _ in 0..cfg.reuse.multiplier {
            y = tape.add(y, g)?;
            y = conv_stack(tape, cfg, y, p, false)?;
        }
        Ok(y)
    } else {
        let y = tape.add(up, g)?;
        conv_stack(tape, cfg, y, p, active)
    }
}

type Span = (usize, usize);

/// Regions each level must produce so that a patch comes out exactly as it
/// would inside a full-frame decode.
#[derive(Clone, Debug)]
struct AxisPlan {
    /// Valid region needed at each level `0..=n` (half-open, global).
    need: Vec<Span>,
    /// Region computed by block `k` (at level `k + 1`), margins included.
    computed: Vec<Span>,
    tile: Span,
}

fn dw_applications(cfg: &NetworkConfig, k: usize) -> usize {
    let d = cfg.depths[k];
    if cfg.reuse.active(k) && cfg.reuse.mode == ReuseMode::Deepen {
        d * cfg.reuse.multiplier
    } else {
        d
    }
}

fn plan_axis(cfg: &NetworkConfig, tile: Span, lens: &[usize]) -> AxisPlan {
    let n = cfg.num_blocks();
    let grow = |s: Span, by: usize, len: usize| (s.0.saturating_sub(by), (s.1 + by).min(len));
    let mut need = vec![(0, 0); n + 1];
    let mut computed = vec![(0, 0); n];
    need[n] = grow(tile, cfg.head_kernel / 2, lens[n]);
    for k in (0..n).rev() {
        let c = grow(need[k + 1], dw_applications(cfg, k) * (cfg.kernel / 2), lens[k + 1]);
        computed[k] = c;
        need[k] = upsample_source_range(c.0, c.1 - c.0, cfg.scales[k], lens[k]);
    }
    AxisPlan { need, computed, tile }
}

/// Decodes one output patch, shape `[h_p * S, w_p * S, 3]` (unclamped).
pub fn forward_patch(
    tape: &mut Tape,
    cfg: &NetworkConfig,
    bp: &BoundParams,
    frame: usize,
    pi: usize,
    pj: usize,
) -> Result<Var> {
    let (ph, pw) = cfg.output_patch();
    let n = cfg.num_blocks();
    let row_lens: Vec<usize> = (0..=n).map(|l| cfg.level_dims(l, cfg.height, cfg.width).0).collect();
    let col_lens: Vec<usize> = (0..=n).map(|l| cfg.level_dims(l, cfg.height, cfg.width).1).collect();
    let (gh, gw) = cfg.patch_grid();
    if frame >= cfg.frames || pi >= gh || pj >= gw {
        return Err(Error::Index(format!("patch ({frame}, {pi}, {pj}) outside {} x {gh} x {gw}", cfg.frames)));
    }
    let rp = plan_axis(cfg, (pi * ph, (pi + 1) * ph), &row_lens);
    let cp = plan_axis(cfg, (pj * pw, (pj + 1) * pw), &col_lens);

    let mut x = stem(tape, cfg, bp, frame, rp.need[0], cp.need[0])?;
    let mut cur = (rp.need[0], cp.need[0]);
    for k in 0..n {
        x = crop_to(tape, x, cur, (rp.need[k], cp.need[k]))?;
        let region =
            BlockRegion { frame, rows: rp.computed[k], cols: cp.computed[k], in_rows: rp.need[k], in_cols: cp.need[k] };
        x = hinerv_block_forward(tape, cfg, k, x, &bp.blocks[k], &region)?;
        cur = (rp.computed[k], cp.computed[k]);
    }
    x = crop_to(tape, x, cur, (rp.need[n], cp.need[n]))?;
    x = tape.conv2d(x, bp.head_weight, bp.head_bias)?;
    crop_to(tape, x, (rp.need[n], cp.need[n]), (rp.tile, cp.tile))
}

fn crop_to(tape: &mut Tape, x: Var, from: (Span, Span), to: (Span, Span)) -> Result<Var> {
    let ((fr, fc), (tr, tc)) = (from, to);
    if tr.0 < fr.0 || tc.0 < fc.0 || tr.1 > fr.1 || tc.1 > fc.1 {
        return Err(Error::Index(format!("crop {to:?} outside computed {from:?}")));
    }
    tape.crop(x, tr.0 - fr.0, tc.0 - fc.0, tr.1 - tr.0, tc.1 - tc.0)
}

/// Target pixels of one patch as an `[h, w, 3]` tensor.
pub fn patch_target(video: &VideoBuffer, cfg: &NetworkConfig, frame: usize, pi: usize, pj: usize) -> Tensor {
    let (ph, pw) = cfg.output_patch();
    video.region_hwc(frame, pi * ph, pj * pw, ph, pw)
}

/// Reconstructs the whole video with the given parameters. Output is
/// clamped to `[0, 1]`.
pub fn decode_video(cfg: &NetworkConfig, store: &ParameterStore) -> Result<VideoBuffer> {
    cfg.validate()?;
    let mut out = VideoBuffer::float_zeros(cfg.frames, cfg.height, cfg.width);
    let (gh, gw) = cfg.patch_grid();
    let (ph, pw) = cfg.output_patch();
    for t in 0..cfg.frames {
        for pi in 0..gh {
            for pj in 0..gw {
                let mut tape = Tape::new();
                let bp = BoundParams::bind(&mut tape, cfg, store, false, None);
                let y = forward_patch(&mut tape, cfg, &bp, t, pi, pj)?;
                out.write_hwc_clamped(t, pi * ph, pj * pw, tape.value(y));
            }
        }
    }
    Ok(out)
}
