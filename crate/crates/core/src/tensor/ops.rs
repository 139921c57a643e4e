use super::tape::{grad_slot, Node, Tape, Var};
use super::Tensor;
use crate::error::{Error, Result};

/// One output coordinate of a separable linear interpolation:
/// `out = in[i0] + w * (in[i1] - in[i0])`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tap {
    pub i0: usize,
    pub i1: usize,
    pub w: f32,
}

impl Tap {
    pub fn exact(i: usize) -> Self {
        Tap { i0: i, i1: i, w: 0.0 }
    }
}

const SQRT_2_OVER_PI: f32 = 0.797_884_6;
const GELU_CUBIC: f32 = 0.044_715;

/// GeLU, tanh form: `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
pub fn gelu_scalar(x: f32) -> f32 {
    0.5 * x * (1.0 + gelu_tanh(x))
}

fn gelu_tanh(x: f32) -> f32 {
    (SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x)).tanh()
}

/// Derivative of GeLU given `t = gelu_tanh(x)`.
fn gelu_grad(x: f32, t: f32) -> f32 {
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x)
}

pub(super) enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    DepthwiseConv { x: Var, k: Var, b: Var },
    Conv { x: Var, k: Var, b: Var },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f32>, inv_std: Vec<f32> },
    Gelu { x: Var, tanh: Vec<f32> },
    Resample { x: Var, rows: Vec<Tap>, cols: Vec<Tap> },
    LerpFrames { x: Var, tap: Tap },
    Add { a: Var, b: Var },
    Scale { x: Var, s: f32 },
    Sum { x: Var },
    Mse { pred: Var, target: Var },
    Concat { parts: Vec<Var>, axis: usize },
    Crop { x: Var, y0: usize, x0: usize },
}

/// Visits every kernel tap `(ky, kx)` of a same-padded `ks x ks` window over
/// an `h x w` map, and for each output row `y` the contiguous run of `n`
/// output columns from `x0` whose source row `sy` and columns from `sx0` lie
/// inside the map. Taps are visited in ascending `(ky, kx)` order, so each
/// output accumulates its terms in that order.
fn for_each_tap(h: usize, w: usize, ks: usize, mut f: impl FnMut(usize, usize, usize, usize, usize, usize, usize)) {
    let r = ks / 2;
    for ky in 0..ks {
        for kx in 0..ks {
            let x0 = r.saturating_sub(kx);
            let x1 = (w + r).saturating_sub(kx).min(w);
            if x1 <= x0 {
                continue;
            }
            for y in 0..h {
                let Some(sy) = (y + ky).checked_sub(r).filter(|&v| v < h) else { continue };
                f(ky, kx, y, sy, x0, x0 + kx - r, x1 - x0);
            }
        }
    }
}

fn hwc(tape: &Tape, v: Var, op: &'static str) -> Result<(usize, usize, usize)> {
    match *tape.shape(v) {
        [h, w, c] => Ok((h, w, c)),
        ref s => Err(Error::dim(op, format!("expected [H, W, C] input, got {s:?}"))),
    }
}

impl Tape {
    fn derived(&mut self, value: Tensor, inputs: &[Var], op: Op) -> Var {
        let rg = inputs.iter().any(|&v| self.requires_grad(v));
        self.push(value, rg, op)
    }

    /// `out[.., o] = b[o] + sum_i x[.., i] * w[o, i]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let (cout, cin) = match *self.shape(w) {
            [o, i] => (o, i),
            ref s => return Err(Error::dim("linear", format!("weight must be 2-D, got {s:?}"))),
        };
        let last = *xs.last().ok_or_else(|| Error::dim("linear", "scalar input"))?;
        if last != cin {
            return Err(Error::dim(
                "linear",
                format!("input axis {} has {last} channels, weight expects {cin}", xs.len() - 1),
            ));
        }
        if self.shape(b) != [cout] {
            return Err(Error::dim(
                "linear",
                format!("bias axis 0 has {:?}, weight has {cout} outputs", self.shape(b)),
            ));
        }
        let rows = self.value(x).numel() / cin;
        let (xd, wd, bd) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        // Accumulating over inputs with the outputs innermost keeps each
        // output's summation order (inputs ascending, bias last) while the
        // inner loop vectorizes.
        let mut wt = vec![0.0f32; cin * cout];
        for (o, wr) in wd.chunks_exact(cin).enumerate() {
            for (i, &v) in wr.iter().enumerate() {
                wt[i * cout + o] = v;
            }
        }
        let mut out = vec![0.0f32; rows * cout];
        for (xr, or) in xd.chunks_exact(cin).zip(out.chunks_exact_mut(cout)) {
            for (&a, wr) in xr.iter().zip(wt.chunks_exact(cout)) {
                for (o, &b) in or.iter_mut().zip(wr) {
                    *o += a * b;
                }
            }
            for (o, &bias) in or.iter_mut().zip(bd) {
                *o += bias;
            }
        }
        let mut shape = xs;
        *shape.last_mut().unwrap() = cout;
        Ok(self.derived(Tensor { shape, data: out }, &[x, w, b], Op::Linear { x, w, b }))
    }

    /// Per-channel 2-D cross-correlation with zero padding `(K - 1) / 2`.
    pub fn depthwise_conv2d(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let (h, w, c) = hwc(self, x, "depthwise_conv2d")?;
        let ks = match *self.shape(k) {
            [k0, k1, kc] if k0 == k1 && kc == c => k0,
            ref s => return Err(Error::dim("depthwise_conv2d", format!("kernel {s:?} does not match [K, K, {c}]"))),
        };
        if ks % 2 == 0 {
            return Err(Error::Config(format!("depthwise kernel size {ks} must be odd")));
        }
        if self.shape(b) != [c] {
            return Err(Error::dim("depthwise_conv2d", format!("bias {:?} vs {c} channels", self.shape(b))));
        }
        let (xd, kd, bd) = (self.value(x).data(), self.value(k).data(), self.value(b).data());
        let mut out = bd.repeat(h * w);
        for_each_tap(h, w, ks, |ky, kx, y, sy, x0, sx0, n| {
            let kr = &kd[(ky * ks + kx) * c..][..c];
            let src = &xd[(sy * w + sx0) * c..][..n * c];
            let dst = &mut out[(y * w + x0) * c..][..n * c];
            for (o, s) in dst.chunks_exact_mut(c).zip(src.chunks_exact(c)) {
                for ((o, s), kv) in o.iter_mut().zip(s).zip(kr) {
                    *o += s * kv;
                }
            }
        });
        let value = Tensor { shape: vec![h, w, c], data: out };
        Ok(self.derived(value, &[x, k, b], Op::DepthwiseConv { x, k, b }))
    }

    /// Dense 2-D convolution, kernel layout `[K, K, Cin, Cout]`, zero padding.
    pub fn conv2d(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let (h, w, cin) = hwc(self, x, "conv2d")?;
        let (ks, cout) = match *self.shape(k) {
            [k0, k1, ki, ko] if k0 == k1 && ki == cin => (k0, ko),
            ref s => return Err(Error::dim("conv2d", format!("kernel {s:?} does not match [K, K, {cin}, _]"))),
        };
        if ks % 2 == 0 {
            return Err(Error::Config(format!("conv kernel size {ks} must be odd")));
        }
        if self.shape(b) != [cout] {
            return Err(Error::dim("conv2d", format!("bias {:?} vs {cout} outputs", self.shape(b))));
        }
        let (xd, kd, bd) = (self.value(x).data(), self.value(k).data(), self.value(b).data());
        let mut out = bd.repeat(h * w);
        for_each_tap(h, w, ks, |ky, kx, y, sy, x0, sx0, n| {
            let kb = &kd[(ky * ks + kx) * cin * cout..][..cin * cout];
            let src = &xd[(sy * w + sx0) * cin..][..n * cin];
            let dst = &mut out[(y * w + x0) * cout..][..n * cout];
            for (o, s) in dst.chunks_exact_mut(cout).zip(src.chunks_exact(cin)) {
                for (s, kr) in s.iter().zip(kb.chunks_exact(cout)) {
                    for (o, kv) in o.iter_mut().zip(kr) {
                        *o += s * kv;
                    }
                }
            }
        });
        let value = Tensor { shape: vec![h, w, cout], data: out };
        Ok(self.derived(value, &[x, k, b], Op::Conv { x, k, b }))
    }

    /// Normalizes over the last axis with the biased variance estimate.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f32) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let c = *xs.last().ok_or_else(|| Error::dim("layer_norm", "scalar input"))?;
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::dim(
                "layer_norm",
                format!("affine params {:?}/{:?} vs {c} channels", self.shape(gamma), self.shape(beta)),
            ));
        }
        let (xd, gd, bd) = (self.value(x).data(), self.value(gamma).data(), self.value(beta).data());
        let rows = xd.len() / c;
        let mut out = vec![0.0f32; xd.len()];
        let mut xhat = vec![0.0f32; xd.len()];
        let mut inv_std = vec![0.0f32; rows];
        let inv_c = 1.0 / c as f32;
        for (r, ((xr, or), hr)) in
            xd.chunks_exact(c).zip(out.chunks_exact_mut(c)).zip(xhat.chunks_exact_mut(c)).enumerate()
        {
            let mean = xr.iter().sum::<f32>() * inv_c;
            let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() * inv_c;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[r] = inv;
            for i in 0..c {
                let n = (xr[i] - mean) * inv;
                hr[i] = n;
                or[i] = n * gd[i] + bd[i];
            }
        }
        let value = Tensor { shape: xs, data: out };
        Ok(self.derived(value, &[x, gamma, beta], Op::LayerNorm { x, gamma, beta, xhat, inv_std }))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let tanh: Vec<f32> = t.data().iter().map(|&v| gelu_tanh(v)).collect();
        let data = t.data().iter().zip(&tanh).map(|(&v, &th)| 0.5 * v * (1.0 + th)).collect();
        let value = Tensor { shape: t.shape().to_vec(), data };
        self.derived(value, &[x], Op::Gelu { x, tanh })
    }

    /// Separable bilinear resampling of an `[H, W, C]` map. Each output row
    /// and column is described by a [`Tap`] into the input.
    pub fn resample(&mut self, x: Var, rows: Vec<Tap>, cols: Vec<Tap>) -> Result<Var> {
        let (h, w, c) = hwc(self, x, "resample")?;
        if rows.iter().any(|t| t.i0 >= h || t.i1 >= h) || cols.iter().any(|t| t.i0 >= w || t.i1 >= w) {
            return Err(Error::Index(format!("resample tap outside {h}x{w} input")));
        }
        if rows.is_empty() || cols.is_empty() {
            return Err(Error::dim("resample", "empty output"));
        }
        let xd = self.value(x).data();
        let (oh, ow) = (rows.len(), cols.len());
        let mut out = vec![0.0f32; oh * ow * c];
        for (y, ty) in rows.iter().enumerate() {
            let r0 = &xd[ty.i0 * w * c..][..w * c];
            let r1 = &xd[ty.i1 * w * c..][..w * c];
            for (xx, tx) in cols.iter().enumerate() {
                let o = &mut out[(y * ow + xx) * c..][..c];
                let (a, b) = (&r0[tx.i0 * c..][..c], &r0[tx.i1 * c..][..c]);
                let (d, e) = (&r1[tx.i0 * c..][..c], &r1[tx.i1 * c..][..c]);
                for i in 0..c {
                    let top = a[i] + tx.w * (b[i] - a[i]);
                    let bot = d[i] + tx.w * (e[i] - d[i]);
                    o[i] = top + ty.w * (bot - top);
                }
            }
        }
        let value = Tensor { shape: vec![oh, ow, c], data: out };
        Ok(self.derived(value, &[x], Op::Resample { x, rows, cols }))
    }

    /// Bilinear upsampling by an integer factor, align-corners=false with
    /// edge clamping. `s == 1` is the identity.
    pub fn bilinear_upsample(&mut self, x: Var, s: usize) -> Result<Var> {
        if s < 1 {
            return Err(Error::Config("upsample factor must be >= 1".into()));
        }
        let (h, w, _) = hwc(self, x, "bilinear_upsample")?;
        let rows = crate::network::sampling::upsample_taps(0, h * s, s, h, 0);
        let cols = crate::network::sampling::upsample_taps(0, w * s, s, w, 0);
        self.resample(x, rows, cols)
    }

    /// Linear interpolation between two frames of a `[T, H, W, C]` grid.
    pub fn lerp_frames(&mut self, x: Var, tap: Tap) -> Result<Var> {
        let (t, h, w, c) = match *self.shape(x) {
            [t, h, w, c] => (t, h, w, c),
            ref s => return Err(Error::dim("lerp_frames", format!("expected [T, H, W, C], got {s:?}"))),
        };
        if tap.i0 >= t || tap.i1 >= t {
            return Err(Error::Index(format!("frame tap {tap:?} outside {t} frames")));
        }
        let plane = h * w * c;
        let xd = self.value(x).data();
        let (a, b) = (&xd[tap.i0 * plane..][..plane], &xd[tap.i1 * plane..][..plane]);
        let data = a.iter().zip(b).map(|(a, b)| a + tap.w * (b - a)).collect();
        let value = Tensor { shape: vec![h, w, c], data };
        Ok(self.derived(value, &[x], Op::LerpFrames { x, tap }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim("add", format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let value = Tensor { shape: self.shape(a).to_vec(), data };
        Ok(self.derived(value, &[a, b], Op::Add { a, b }))
    }

    pub fn scale(&mut self, x: Var, s: f32) -> Var {
        let t = self.value(x);
        let value = Tensor { shape: t.shape().to_vec(), data: t.data().iter().map(|v| v * s).collect() };
        self.derived(value, &[x], Op::Scale { x, s })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.derived(Tensor::scalar(s), &[x], Op::Sum { x })
    }

    /// Mean squared error over all elements.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(Error::dim("mse_loss", format!("{:?} vs {:?}", self.shape(pred), self.shape(target))));
        }
        let (p, t) = (self.value(pred).data(), self.value(target).data());
        let sq: f32 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        let value = Tensor::scalar(sq / p.len() as f32);
        Ok(self.derived(value, &[pred, target], Op::Mse { pred, target }))
    }

    /// Concatenates along `axis`; all other axes must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::dim("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::dim("concat", format!("axis {axis} out of range for {base:?}")));
        }
        let mut shape = base.clone();
        shape[axis] = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != base.len() || s.iter().enumerate().any(|(i, &d)| i != axis && d != base[i]) {
                return Err(Error::dim("concat", format!("{s:?} does not align with {base:?} on axis {axis}")));
            }
            shape[axis] += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let chunk = self.shape(p)[axis] * inner;
                data.extend_from_slice(&self.value(p).data()[o * chunk..][..chunk]);
            }
        }
        let value = Tensor { shape, data };
        Ok(self.derived(value, parts, Op::Concat { parts: parts.to_vec(), axis }))
    }

    /// Crops a `[h, w, C]` window starting at `(y0, x0)`.
    pub fn crop(&mut self, x: Var, y0: usize, x0: usize, h: usize, w: usize) -> Result<Var> {
        let (ih, iw, c) = hwc(self, x, "crop")?;
        if y0 + h > ih || x0 + w > iw || h == 0 || w == 0 {
            return Err(Error::Index(format!("crop {h}x{w}@({y0},{x0}) outside {ih}x{iw}")));
        }
        if (y0, x0, h, w) == (0, 0, ih, iw) {
            return Ok(x);
        }
        let xd = self.value(x).data();
        let mut data = Vec::with_capacity(h * w * c);
        for y in 0..h {
            data.extend_from_slice(&xd[((y0 + y) * iw + x0) * c..][..w * c]);
        }
        let value = Tensor { shape: vec![h, w, c], data };
        Ok(self.derived(value, &[x], Op::Crop { x, y0, x0 }))
    }
}

pub(super) fn backward_node(nodes: &[Node], grads: &mut [Option<Vec<f32>>], id: usize, g: &[f32]) {
    let val = |v: Var| nodes[v.0].value.data();
    let shape = |v: Var| nodes[v.0].value.shape();
    match &nodes[id].op {
        Op::Leaf => {}
        Op::Linear { x, w, b } => {
            let (cout, cin) = (shape(*w)[0], shape(*w)[1]);
            let (xd, wd) = (val(*x), val(*w));
            if let Some(dx) = grad_slot(nodes, grads, *x) {
                for (dxr, gr) in dx.chunks_exact_mut(cin).zip(g.chunks_exact(cout)) {
                    for (&go, wr) in gr.iter().zip(wd.chunks_exact(cin)) {
                        for (d, wv) in dxr.iter_mut().zip(wr) {
                            *d += go * wv;
                        }
                    }
                }
            }
            if let Some(dw) = grad_slot(nodes, grads, *w) {
                for (xr, gr) in xd.chunks_exact(cin).zip(g.chunks_exact(cout)) {
                    for (&go, dwr) in gr.iter().zip(dw.chunks_exact_mut(cin)) {
                        for (d, xv) in dwr.iter_mut().zip(xr) {
                            *d += go * xv;
                        }
                    }
                }
            }
            if let Some(db) = grad_slot(nodes, grads, *b) {
                for gr in g.chunks_exact(cout) {
                    for (d, go) in db.iter_mut().zip(gr) {
                        *d += go;
                    }
                }
            }
        }
        Op::DepthwiseConv { x, k, b } => {
            let (h, w, c) = (shape(*x)[0], shape(*x)[1], shape(*x)[2]);
            let ks = shape(*k)[0];
            let (xd, kd) = (val(*x), val(*k));
            if let Some(dx) = grad_slot(nodes, grads, *x) {
                for_each_tap(h, w, ks, |ky, kx, y, sy, x0, sx0, n| {
                    let kr = &kd[(ky * ks + kx) * c..][..c];
                    let go = &g[(y * w + x0) * c..][..n * c];
                    let d = &mut dx[(sy * w + sx0) * c..][..n * c];
                    for (d, go) in d.chunks_exact_mut(c).zip(go.chunks_exact(c)) {
                        for ((d, gv), kv) in d.iter_mut().zip(go).zip(kr) {
                            *d += gv * kv;
                        }
                    }
                });
            }
            if let Some(dk) = grad_slot(nodes, grads, *k) {
                for_each_tap(h, w, ks, |ky, kx, y, sy, x0, sx0, n| {
                    let dkr = &mut dk[(ky * ks + kx) * c..][..c];
                    let go = &g[(y * w + x0) * c..][..n * c];
                    let src = &xd[(sy * w + sx0) * c..][..n * c];
                    for (go, s) in go.chunks_exact(c).zip(src.chunks_exact(c)) {
                        for ((d, gv), xv) in dkr.iter_mut().zip(go).zip(s) {
                            *d += gv * xv;
                        }
                    }
                });
            }
            if let Some(db) = grad_slot(nodes, grads, *b) {
                for gr in g.chunks_exact(c) {
                    for (d, go) in db.iter_mut().zip(gr) {
                        *d += go;
                    }
                }
            }
        }
        Op::Conv { x, k, b } => {
            let (h, w, cin) = (shape(*x)[0], shape(*x)[1], shape(*x)[2]);
            let (ks, cout) = (shape(*k)[0], shape(*k)[3]);
            let (xd, kd) = (val(*x), val(*k));
            if let Some(dx) = grad_slot(nodes, grads, *x) {
                for_each_tap(h, w, ks, |ky, kx, y, sy, x0, sx0, n| {
                    let kb = &kd[(ky * ks + kx) * cin * cout..][..cin * cout];
                    let go = &g[(y * w + x0) * cout..][..n * cout];
                    let d = &mut dx[(sy * w + sx0) * cin..][..n * cin];
                    for (d, go) in d.chunks_exact_mut(cin).zip(go.chunks_exact(cout)) {
                        for (d, kr) in d.iter_mut().zip(kb.chunks_exact(cout)) {
                            let mut acc = 0.0f32;
                            for (gv, kv) in go.iter().zip(kr) {
                                acc += gv * kv;
                            }
                            *d += acc;
                        }
                    }
                });
            }
            if let Some(dk) = grad_slot(nodes, grads, *k) {
                for_each_tap(h, w, ks, |ky, kx, y, sy, x0, sx0, n| {
                    let dkb = &mut dk[(ky * ks + kx) * cin * cout..][..cin * cout];
                    let go = &g[(y * w + x0) * cout..][..n * cout];
                    let src = &xd[(sy * w + sx0) * cin..][..n * cin];
                    for (go, s) in go.chunks_exact(cout).zip(src.chunks_exact(cin)) {
                        for (xv, dkr) in s.iter().zip(dkb.chunks_exact_mut(cout)) {
                            for (d, gv) in dkr.iter_mut().zip(go) {
                                *d += xv * gv;
                            }
                        }
                    }
                });
            }
            if let Some(db) = grad_slot(nodes, grads, *b) {
                for gr in g.chunks_exact(cout) {
                    for (d, go) in db.iter_mut().zip(gr) {
                        *d += go;
                    }
                }
            }
        }
        Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
            let c = shape(*gamma)[0];
            let gd = val(*gamma);
            if let Some(dx) = grad_slot(nodes, grads, *x) {
                let inv_c = 1.0 / c as f32;
                let mut dxhat = vec![0.0f32; c];
                for (r, ((dxr, gr), hr)) in
                    dx.chunks_exact_mut(c).zip(g.chunks_exact(c)).zip(xhat.chunks_exact(c)).enumerate()
                {
                    let mut m1 = 0.0f32;
                    let mut m2 = 0.0f32;
                    for i in 0..c {
                        dxhat[i] = gr[i] * gd[i];
                        m1 += dxhat[i];
                        m2 += dxhat[i] * hr[i];
                    }
                    m1 *= inv_c;
                    m2 *= inv_c;
                    let inv = inv_std[r];
                    for i in 0..c {
                        dxr[i] += inv * (dxhat[i] - m1 - hr[i] * m2);
                    }
                }
            }
            if let Some(dg) = grad_slot(nodes, grads, *gamma) {
                for (gr, hr) in g.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                    for i in 0..c {
                        dg[i] += gr[i] * hr[i];
                    }
                }
            }
            if let Some(db) = grad_slot(nodes, grads, *beta) {
                for gr in g.chunks_exact(c) {
                    for (d, go) in db.iter_mut().zip(gr) {
                        *d += go;
                    }
                }
            }
        }
        Op::Gelu { x, tanh } => {
            let xd = val(*x);
            if let Some(dx) = grad_slot(nodes, grads, *x) {
                for (((d, gv), &xv), &t) in dx.iter_mut().zip(g).zip(xd).zip(tanh) {
                    *d += gv * gelu_grad(xv, t);
                }
            }
        }
        Op::Resample { x, rows, cols } => {
            let (w, c) = (shape(*x)[1], shape(*x)[2]);
            let ow = cols.len();
            if let Some(dx) = grad_slot(nodes, grads, *x) {
                for (y, ty) in rows.iter().enumerate() {
                    for (xx, tx) in cols.iter().enumerate() {
                        let go = &g[(y * ow + xx) * c..][..c];
                        let w00 = (1.0 - ty.w) * (1.0 - tx.w);
                        let w01 = (1.0 - ty.w) * tx.w;
                        let w10 = ty.w * (1.0 - tx.w);
                        let w11 = ty.w * tx.w;
                        for (iy, ix, wt) in
                            [(ty.i0, tx.i0, w00), (ty.i0, tx.i1, w01), (ty.i1, tx.i0, w10), (ty.i1, tx.i1, w11)]
                        {
                            if wt == 0.0 {
                                continue;
                            }
                            let d = &mut dx[(iy * w + ix) * c..][..c];
                            for (d, gv) in d.iter_mut().zip(go) {
                                *d += wt * gv;
                            }
                        }
                    }
                }
            }
        }
        Op::LerpFrames { x, tap } => {
            let plane = g.len();
            if let Some(dx) = grad_slot(nodes, grads, *x) {
                for (i, gv) in g.iter().enumerate() {
                    dx[tap.i0 * plane + i] += (1.0 - tap.w) * gv;
                }
                if tap.w != 0.0 {
                    for (i, gv) in g.iter().enumerate() {
                        dx[tap.i1 * plane + i] += tap.w * gv;
                    }
                }
            }
        }
        Op::Add { a, b } => {
            for v in [*a, *b] {
                if let Some(d) = grad_slot(nodes, grads, v) {
                    for (d, gv) in d.iter_mut().zip(g) {
                        *d += gv;
                    }
                }
            }
        }
        Op::Scale { x, s } => {
            if let Some(d) = grad_slot(nodes, grads, *x) {
                for (d, gv) in d.iter_mut().zip(g) {
                    *d += s * gv;
                }
            }
        }
        Op::Sum { x } => {
            if let Some(d) = grad_slot(nodes, grads, *x) {
                for d in d.iter_mut() {
                    *d += g[0];
                }
            }
        }
        Op::Mse { pred, target } => {
            let (p, t) = (val(*pred), val(*target));
            let k = 2.0 * g[0] / p.len() as f32;
            if let Some(d) = grad_slot(nodes, grads, *pred) {
                for ((d, a), b) in d.iter_mut().zip(p).zip(t) {
                    *d += k * (a - b);
                }
            }
            if let Some(d) = grad_slot(nodes, grads, *target) {
                for ((d, a), b) in d.iter_mut().zip(p).zip(t) {
                    *d -= k * (a - b);
                }
            }
        }
        Op::Concat { parts, axis } => {
            let out_shape = nodes[id].value.shape();
            let outer: usize = out_shape[..*axis].iter().product();
            let inner: usize = out_shape[axis + 1..].iter().product();
            let row = out_shape[*axis] * inner;
            let mut offset = 0;
            for &p in parts {
                let chunk = shape(p)[*axis] * inner;
                if let Some(d) = grad_slot(nodes, grads, p) {
                    for o in 0..outer {
                        let src = &g[o * row + offset..][..chunk];
                        for (d, gv) in d[o * chunk..][..chunk].iter_mut().zip(src) {
                            *d += gv;
                        }
                    }
                }
                offset += chunk;
            }
        }
        Op::Crop { x, y0, x0 } => {
            let (iw, c) = (shape(*x)[1], shape(*x)[2]);
            let out_shape = nodes[id].value.shape();
            let (h, w) = (out_shape[0], out_shape[1]);
            if let Some(d) = grad_slot(nodes, grads, *x) {
                for y in 0..h {
                    let dst = &mut d[((y0 + y) * iw + x0) * c..][..w * c];
                    for (d, gv) in dst.iter_mut().zip(&g[y * w * c..][..w * c]) {
                        *d += gv;
                    }
                }
            }
        }
    }
}
