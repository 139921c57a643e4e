use nalgebra::{DMatrix, DVector};

use super::VideoBuffer;
use crate::error::{Error, Result};

/// PSNR reported for identical inputs.
pub const PSNR_CAP: f64 = 100.0;

/// `10 log10(1 / MSE)` over every sample of both videos jointly, in the
/// float domain (peak 1.0). Zero error gives [`PSNR_CAP`].
pub fn psnr(a: &VideoBuffer, b: &VideoBuffer) -> Result<f64> {
    if a.dims() != b.dims() || a.is_u8() != b.is_u8() {
        return Err(Error::dim(
            "psnr",
            format!(
                "{:?} ({}) vs {:?} ({})",
                a.dims(),
                if a.is_u8() { "u8" } else { "f32" },
                b.dims(),
                if b.is_u8() { "u8" } else { "f32" }
            ),
        ));
    }
    let (x, y) = (a.float_values(), b.float_values());
    let sse: f64 = x.iter().zip(&y).map(|(&p, &q)| (p as f64 - q as f64).powi(2)).sum();
    let mse = sse / x.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Bits per pixel of `bytes` spread over `T * H * W` pixels.
pub fn bpp(bytes: usize, frames: usize, height: usize, width: usize) -> f64 {
    8.0 * bytes as f64 / (frames * height * width) as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdPoint {
    pub bpp: f64,
    pub psnr: f64,
}

/// Rate-distortion points sorted by strictly increasing bpp.
#[derive(Clone, Debug, PartialEq)]
pub struct RdCurve {
    points: Vec<RdPoint>,
}

impl RdCurve {
    pub fn new(mut points: Vec<RdPoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Evaluation(format!("an RD curve needs at least 2 points, got {}", points.len())));
        }
        if points.iter().any(|p| !(p.bpp > 0.0) || !p.psnr.is_finite()) {
            return Err(Error::Evaluation("RD points need bpp > 0 and finite PSNR".into()));
        }
        points.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
        if points.windows(2).any(|w| w[0].bpp == w[1].bpp) {
            return Err(Error::Evaluation("RD curve has repeated bpp values".into()));
        }
        Ok(RdCurve { points })
    }

    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }

    fn psnr_range(&self) -> (f64, f64) {
        let lo = self.points.iter().map(|p| p.psnr).fold(f64::INFINITY, f64::min);
        let hi = self.points.iter().map(|p| p.psnr).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Mean of `ln(rate)` over `[lo, hi]` in PSNR.
    fn mean_log_rate(&self, lo: f64, hi: f64, piecewise: bool) -> Result<f64> {
        if piecewise {
            Ok(piecewise_mean(&self.points, lo, hi))
        } else {
            cubic_mean(&self.points, lo, hi)
        }
    }
}

/// Result of a Bjøntegaard comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BdRate {
    /// Average rate change of test against anchor at equal PSNR, in percent.
    /// Negative means the test curve needs fewer bits.
    pub percent: f64,
    /// Set when either curve had fewer than 4 points and the piecewise-linear
    /// interpolation replaced the cubic fit.
    pub piecewise: bool,
}

/// Bjøntegaard delta rate: fit `ln(bpp)` as a cubic in PSNR for each curve,
/// average the difference over the shared PSNR interval and report it as a
/// percentage rate change.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<BdRate> {
    let (a0, a1) = anchor.psnr_range();
    let (t0, t1) = test.psnr_range();
    let (lo, hi) = (a0.max(t0), a1.min(t1));
    if !(hi > lo) {
        return Err(Error::Evaluation(format!("PSNR ranges [{a0}, {a1}] and [{t0}, {t1}] do not overlap")));
    }
    let piecewise = anchor.points.len() < 4 || test.points.len() < 4;
    let da = anchor.mean_log_rate(lo, hi, piecewise)?;
    let dt = test.mean_log_rate(lo, hi, piecewise)?;
    Ok(BdRate { percent: ((dt - da).exp() - 1.0) * 100.0, piecewise })
}

/// Least-squares cubic of `ln(bpp)` against normalized PSNR, averaged over
/// `[lo, hi]`.
fn cubic_mean(points: &[RdPoint], lo: f64, hi: f64) -> Result<f64> {
    let n = points.len();
    let center = points.iter().map(|p| p.psnr).sum::<f64>() / n as f64;
    let spread = points.iter().map(|p| (p.psnr - center).abs()).fold(0.0, f64::max).max(1e-12);
    let u = |x: f64| (x - center) / spread;
    let a = DMatrix::from_fn(n, 4, |i, j| u(points[i].psnr).powi(j as i32));
    let b = DVector::from_iterator(n, points.iter().map(|p| p.bpp.ln()));
    let coef = a.svd(true, true).solve(&b, 1e-12).map_err(|e| Error::Evaluation(format!("cubic fit failed: {e}")))?;
    let antiderivative = |x: f64| (0..4).map(|j| coef[j] * x.powi(j as i32 + 1) / (j as f64 + 1.0)).sum::<f64>();
    let (ul, uh) = (u(lo), u(hi));
    Ok((antiderivative(uh) - antiderivative(ul)) / (uh - ul))
}

/// `ln(bpp)` linearly interpolated between points ordered by PSNR, averaged
/// over `[lo, hi]` exactly.
fn piecewise_mean(points: &[RdPoint], lo: f64, hi: f64) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.psnr, p.bpp.ln())).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let eval = |x: f64| {
        let i = pts.partition_point(|p| p.0 <= x).clamp(1, pts.len() - 1);
        let (x0, y0) = pts[i - 1];
        let (x1, y1) = pts[i];
        if x1 == x0 {
            y0
        } else {
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        }
    };
    let mut knots: Vec<f64> = std::iter::once(lo)
        .chain(pts.iter().map(|p| p.0).filter(|&x| x > lo && x < hi))
        .chain(std::iter::once(hi))
        .collect();
    knots.dedup();
    let area: f64 = knots.windows(2).map(|w| 0.5 * (eval(w[0]) + eval(w[1])) * (w[1] - w[0])).sum();
    area / (hi - lo)
}
