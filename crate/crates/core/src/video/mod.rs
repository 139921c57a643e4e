//! Video buffers, raw file I/O, synthetic sequences and evaluation metrics.

mod metrics;
mod raw;
mod synth;

pub use metrics::{bd_rate, bpp, psnr, BdRate, RdCurve, RdPoint, PSNR_CAP};
pub use raw::{decode_raw, encode_raw, load_raw, read_sidecar, save_raw, sidecar_path, RawSidecar, RAW_FORMAT};
pub use synth::{synth_video, SynthKind, GRADIENT_SHIFT};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Storage of the pixel values.
#[derive(Clone, Debug, PartialEq)]
pub enum Pixels {
    /// 8-bit RGB, `value / 255` in the float domain.
    U8(Vec<u8>),
    /// Unit-interval floats (unclamped until a clamping write).
    F32(Vec<f32>),
}

/// `T` frames of `H x W` RGB, planar and frame-major: index
/// `((t * 3 + c) * H + y) * W + x`.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoBuffer {
    frames: usize,
    height: usize,
    width: usize,
    pixels: Pixels,
}

impl VideoBuffer {
    pub fn new(frames: usize, height: usize, width: usize, pixels: Pixels) -> Result<Self> {
        let n = frames * height * width * 3;
        let len = match &pixels {
            Pixels::U8(v) => v.len(),
            Pixels::F32(v) => v.len(),
        };
        if n == 0 || len != n {
            return Err(Error::dim("video", format!("{frames} x {height} x {width} x 3 needs {n} values, got {len}")));
        }
        Ok(VideoBuffer { frames, height, width, pixels })
    }

    pub fn float_zeros(frames: usize, height: usize, width: usize) -> Self {
        VideoBuffer { frames, height, width, pixels: Pixels::F32(vec![0.0; frames * height * width * 3]) }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(T, H, W)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.frames, self.height, self.width)
    }

    /// `T * H * W`.
    pub fn pixel_count(&self) -> usize {
        self.frames * self.height * self.width
    }

    pub fn pixels(&self) -> &Pixels {
        &self.pixels
    }

    pub fn is_u8(&self) -> bool {
        matches!(self.pixels, Pixels::U8(_))
    }

    fn index(&self, t: usize, c: usize, y: usize, x: usize) -> usize {
        ((t * 3 + c) * self.height + y) * self.width + x
    }

    /// Float-domain value of one sample.
    pub fn get(&self, t: usize, c: usize, y: usize, x: usize) -> f32 {
        let i = self.index(t, c, y, x);
        match &self.pixels {
            Pixels::U8(v) => v[i] as f32 / 255.0,
            Pixels::F32(v) => v[i],
        }
    }

    /// All samples in the float domain, storage order.
    pub fn float_values(&self) -> Vec<f32> {
        match &self.pixels {
            Pixels::U8(v) => v.iter().map(|&b| b as f32 / 255.0).collect(),
            Pixels::F32(v) => v.clone(),
        }
    }

    pub fn to_float(&self) -> VideoBuffer {
        VideoBuffer { pixels: Pixels::F32(self.float_values()), ..*self }
    }

    /// 8-bit version; floats are clamped to `[0, 1]` and rounded.
    pub fn to_u8(&self) -> VideoBuffer {
        let bytes = match &self.pixels {
            Pixels::U8(v) => v.clone(),
            Pixels::F32(v) => v.iter().map(|&f| (f.clamp(0.0, 1.0) * 255.0).round() as u8).collect(),
        };
        VideoBuffer { pixels: Pixels::U8(bytes), ..*self }
    }

    /// One frame as a single-frame buffer.
    pub fn frame(&self, t: usize) -> VideoBuffer {
        let plane = 3 * self.height * self.width;
        let r = t * plane..(t + 1) * plane;
        let pixels = match &self.pixels {
            Pixels::U8(v) => Pixels::U8(v[r].to_vec()),
            Pixels::F32(v) => Pixels::F32(v[r].to_vec()),
        };
        VideoBuffer { frames: 1, height: self.height, width: self.width, pixels }
    }

    /// The `h x w` window at `(y0, x0)` of frame `t` as an `[h, w, 3]` tensor.
    pub fn region_hwc(&self, t: usize, y0: usize, x0: usize, h: usize, w: usize) -> Tensor {
        let mut data = Vec::with_capacity(h * w * 3);
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                for c in 0..3 {
                    data.push(self.get(t, c, y, x));
                }
            }
        }
        Tensor::new(vec![h, w, 3], data).expect("region shape matches its data")
    }

    /// Writes an `[h, w, 3]` tensor at `(y0, x0)` of frame `t`, clamping to
    /// `[0, 1]`. The buffer must be float.
    pub fn write_hwc_clamped(&mut self, t: usize, y0: usize, x0: usize, patch: &Tensor) {
        let (h, w) = (patch.shape()[0], patch.shape()[1]);
        let mut src = patch.data().iter();
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                for c in 0..3 {
                    let i = self.index(t, c, y, x);
                    let v = src.next().expect("patch holds h * w * 3 values").clamp(0.0, 1.0);
                    match &mut self.pixels {
                        Pixels::F32(d) => d[i] = v,
                        Pixels::U8(_) => panic!("write_hwc_clamped needs a float buffer"),
                    }
                }
            }
        }
    }
}
