//! Deterministic synthetic test sequences.

use std::f64::consts::TAU;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Pixels, VideoBuffer};
use crate::error::{Error, Result};

/// Per-frame `(rows, cols)` offset of the moving gradient: frame `t` at
/// `(y, x)` equals frame 0 at `((y + t*dy) mod H, (x + t*dx) mod W)`.
pub const GRADIENT_SHIFT: (usize, usize) = (1, 2);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    /// One flat color for every pixel of every frame.
    Constant,
    /// A periodic two-axis cosine pattern scrolling by [`GRADIENT_SHIFT`].
    MovingGradient,
    /// A soft-edged disc bouncing over a smooth background.
    BouncingBall,
    /// A few drifting low-frequency sinusoids plus faint per-pixel noise.
    NoiseTextured,
}

impl SynthKind {
    pub const ALL: [SynthKind; 4] =
        [SynthKind::Constant, SynthKind::MovingGradient, SynthKind::BouncingBall, SynthKind::NoiseTextured];

    pub fn name(self) -> &'static str {
        match self {
            SynthKind::Constant => "constant",
            SynthKind::MovingGradient => "moving_gradient",
            SynthKind::BouncingBall => "bouncing_ball",
            SynthKind::NoiseTextured => "noise_textured",
        }
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SynthKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown synthetic kind {s:?}")))
    }
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Generates `frames x height x width` 8-bit RGB, bit-identical for a given
/// `seed`.
pub fn synth_video(kind: SynthKind, frames: usize, height: usize, width: usize, seed: u64) -> Result<VideoBuffer> {
    if frames == 0 || height == 0 || width == 0 {
        return Err(Error::Config(format!("synthetic video needs positive dims, got {frames} x {height} x {width}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plane = height * width;
    let mut bytes = vec![0u8; frames * 3 * plane];
    let mut put =
        |t: usize, c: usize, y: usize, x: usize, v: f64| bytes[(t * 3 + c) * plane + y * width + x] = to_byte(v);
    let (h, w) = (height as f64, width as f64);
    match kind {
        SynthKind::Constant => {
            let color: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.15..0.85));
            for t in 0..frames {
                for (c, &v) in color.iter().enumerate() {
                    for y in 0..height {
                        for x in 0..width {
                            put(t, c, y, x, v);
                        }
                    }
                }
            }
        }
        SynthKind::MovingGradient => {
            let phase: [(f64, f64); 3] = std::array::from_fn(|_| (rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU)));
            let (dy, dx) = GRADIENT_SHIFT;
            for t in 0..frames {
                for (c, &(px, py)) in phase.iter().enumerate() {
                    for y in 0..height {
                        let yy = ((y + t * dy) % height) as f64;
                        for x in 0..width {
                            let xx = ((x + t * dx) % width) as f64;
                            let v = 0.5 + 0.25 * (TAU * xx / w + px).cos() + 0.15 * (TAU * yy / h + py).cos();
                            put(t, c, y, x, v);
                        }
                    }
                }
            }
        }
        SynthKind::BouncingBall => {
            let ball: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.6..0.95));
            let back: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.1..0.4));
            let radius = h.min(w) / 6.0;
            let (vy, vx) = (rng.gen_range(1.0..3.0), rng.gen_range(1.0..3.0));
            let (y0, x0) = (rng.gen_range(0.0..h), rng.gen_range(0.0..w));
            // Reflecting motion inside [r, L - r] as a triangle wave.
            let bounce = |p: f64, len: f64| {
                let span = (len - 2.0 * radius).max(1.0);
                let m = p.rem_euclid(2.0 * span);
                radius + if m < span { m } else { 2.0 * span - m }
            };
            for t in 0..frames {
                let cy = bounce(y0 + vy * t as f64, h);
                let cx = bounce(x0 + vx * t as f64, w);
                for y in 0..height {
                    for x in 0..width {
                        let d = ((y as f64 + 0.5 - cy).powi(2) + (x as f64 + 0.5 - cx).powi(2)).sqrt();
                        // Two-pixel smoothstep edge.
                        let e = ((radius + 1.0 - d) / 2.0).clamp(0.0, 1.0);
                        let cover = e * e * (3.0 - 2.0 * e);
                        let shade = 0.8 + 0.2 * (y as f64 / h);
                        for c in 0..3 {
                            put(t, c, y, x, back[c] * shade + cover * (ball[c] - back[c] * shade));
                        }
                    }
                }
            }
        }
        SynthKind::NoiseTextured => {
            // (amplitude, fy, fx, phase, drift) per wave and channel.
            let waves: Vec<[(f64, f64, f64, f64, f64); 3]> = (0..4)
                .map(|_| {
                    std::array::from_fn(|_| {
                        (
                            rng.gen_range(0.04..0.1),
                            rng.gen_range(1..=3) as f64,
                            rng.gen_range(1..=3) as f64,
                            rng.gen_range(0.0..TAU),
                            rng.gen_range(-0.2..0.2),
                        )
                    })
                })
                .collect();
            for t in 0..frames {
                for c in 0..3 {
                    for y in 0..height {
                        for x in 0..width {
                            let mut v = 0.5;
                            for wv in &waves {
                                let (a, fy, fx, p, drift) = wv[c];
                                v += a * (TAU * (fy * y as f64 / h + fx * x as f64 / w) + p + drift * t as f64).sin();
                            }
                            v += rng.gen_range(-2.0..2.0) / 255.0;
                            put(t, c, y, x, v);
                        }
                    }
                }
            }
        }
    }
    VideoBuffer::new(frames, height, width, Pixels::U8(bytes))
}
