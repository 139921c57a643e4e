//! Coordinate maps for interpolation.
//!
//! Every tap is a function of the *global* output coordinate only, so a
//! patch decoded on its own sees exactly the same weights as the same pixels
//! decoded inside a full frame.

use crate::tensor::Tap;

/// Taps for rows `[out_start, out_start + out_len)` of an upsampling by `s`
/// (align-corners=false, edge clamped) from an input axis of `in_len`
/// samples. Returned indices are relative to `in_offset`.
pub fn upsample_taps(out_start: usize, out_len: usize, s: usize, in_len: usize, in_offset: usize) -> Vec<Tap> {
    (out_start..out_start + out_len)
        .map(|y| {
            let (q, r) = (y / s, y % s);
            // Fractional source offset depends only on the phase `r`.
            let frac = (r as f64 + 0.5) / s as f64 - 0.5;
            let (base, w) = if frac < 0.0 { (q as i64 - 1, frac + 1.0) } else { (q as i64, frac) };
            clamp_tap(base, w as f32, in_len, in_offset)
        })
        .collect()
}

/// Taps sampling a grid axis of `grid_len` cells at output coordinates
/// `[start, start + len)` of an axis with `axis_len` samples.
pub fn grid_taps(start: usize, len: usize, axis_len: usize, grid_len: usize) -> Vec<Tap> {
    (start..start + len).map(|y| grid_tap(y, axis_len, grid_len)).collect()
}

pub fn grid_tap(y: usize, axis_len: usize, grid_len: usize) -> Tap {
    let src = ((y as f64 + 0.5) * grid_len as f64 / axis_len as f64 - 0.5).clamp(0.0, (grid_len - 1) as f64);
    let base = src.floor();
    clamp_tap(base as i64, (src - base) as f32, grid_len, 0)
}

fn clamp_tap(base: i64, w: f32, len: usize, offset: usize) -> Tap {
    let last = len as i64 - 1;
    let i0 = base.clamp(0, last) as usize;
    let i1 = (base + 1).clamp(0, last) as usize;
    if i0 == i1 || w == 0.0 {
        Tap { i0: i0 - offset, i1: i0 - offset, w: 0.0 }
    } else {
        Tap { i0: i0 - offset, i1: i1 - offset, w }
    }
}

/// Input rows (global, half-open) read by `upsample_taps` for the given
/// output range.
pub fn upsample_source_range(out_start: usize, out_len: usize, s: usize, in_len: usize) -> (usize, usize) {
    let taps = upsample_taps(out_start, out_len, s, in_len, 0);
    let lo = taps.iter().map(|t| t.i0.min(t.i1)).min().unwrap_or(0);
    let hi = taps.iter().map(|t| t.i0.max(t.i1)).max().unwrap_or(0);
    (lo, hi + 1)
}
