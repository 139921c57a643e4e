//! fp64 reference implementations written directly from the operator
//! definitions, plus central finite differences. Nothing here calls into the
//! library's numeric kernels.

#![allow(dead_code)]

use reuse_inr::network::{Granularity, NetworkConfig, ParameterStore, ReuseMode};
use reuse_inr::tensor::Tensor;

/// Dense fp64 array, row-major.
#[derive(Clone, Debug)]
pub struct A {
    pub shape: Vec<usize>,
    pub v: Vec<f64>,
}

impl A {
    pub fn new(shape: &[usize], v: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), v.len());
        A { shape: shape.to_vec(), v }
    }

    pub fn of(t: &Tensor) -> Self {
        A::new(t.shape(), t.data().iter().map(|&x| x as f64).collect())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        A::new(shape, vec![0.0; shape.iter().product()])
    }
}

pub fn linear(x: &A, w: &A, b: &A) -> A {
    let (cout, cin) = (w.shape[0], w.shape[1]);
    let rows = x.v.len() / cin;
    let mut out = vec![0.0; rows * cout];
    for r in 0..rows {
        for o in 0..cout {
            let mut s = b.v[o];
            for i in 0..cin {
                s += x.v[r * cin + i] * w.v[o * cin + i];
            }
            out[r * cout + o] = s;
        }
    }
    let mut shape = x.shape.clone();
    *shape.last_mut().unwrap() = cout;
    A::new(&shape, out)
}

fn padded(x: &A, y: i64, xx: i64, c: usize) -> f64 {
    let (h, w, ch) = (x.shape[0] as i64, x.shape[1] as i64, x.shape[2]);
    if y < 0 || xx < 0 || y >= h || xx >= w {
        0.0
    } else {
        x.v[((y * w + xx) as usize) * ch + c]
    }
}

pub fn depthwise(x: &A, k: &A, b: &A) -> A {
    let (h, w, c) = (x.shape[0], x.shape[1], x.shape[2]);
    let ks = k.shape[0];
    let r = (ks / 2) as i64;
    let mut out = A::zeros(&[h, w, c]);
    for y in 0..h {
        for xx in 0..w {
            for ch in 0..c {
                let mut s = b.v[ch];
                for ky in 0..ks {
                    for kx in 0..ks {
                        let v = padded(x, y as i64 + ky as i64 - r, xx as i64 + kx as i64 - r, ch);
                        s += v * k.v[(ky * ks + kx) * c + ch];
                    }
                }
                out.v[(y * w + xx) * c + ch] = s;
            }
        }
    }
    out
}

pub fn conv(x: &A, k: &A, b: &A) -> A {
    let (h, w, cin) = (x.shape[0], x.shape[1], x.shape[2]);
    let (ks, cout) = (k.shape[0], k.shape[3]);
    let r = (ks / 2) as i64;
    let mut out = A::zeros(&[h, w, cout]);
    for y in 0..h {
        for xx in 0..w {
            for o in 0..cout {
                let mut s = b.v[o];
                for ky in 0..ks {
                    for kx in 0..ks {
                        for i in 0..cin {
                            let v = padded(x, y as i64 + ky as i64 - r, xx as i64 + kx as i64 - r, i);
                            s += v * k.v[((ky * ks + kx) * cin + i) * cout + o];
                        }
                    }
                }
                out.v[(y * w + xx) * cout + o] = s;
            }
        }
    }
    out
}

pub fn layer_norm(x: &A, g: &A, b: &A, eps: f64) -> A {
    let c = *x.shape.last().unwrap();
    let mut out = x.clone();
    for r in 0..x.v.len() / c {
        let row = &x.v[r * c..(r + 1) * c];
        let mean = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
        for i in 0..c {
            out.v[r * c + i] = (row[i] - mean) / (var + eps).sqrt() * g.v[i] + b.v[i];
        }
    }
    out
}

pub fn gelu(x: &A) -> A {
    let f = |v: f64| 0.5 * v * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (v + 0.044715 * v.powi(3))).tanh());
    A::new(&x.shape, x.v.iter().map(|&v| f(v)).collect())
}

pub fn add(a: &A, b: &A) -> A {
    assert_eq!(a.shape, b.shape);
    A::new(&a.shape, a.v.iter().zip(&b.v).map(|(x, y)| x + y).collect())
}

pub fn mse(p: &A, t: &A) -> f64 {
    p.v.iter().zip(&t.v).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.v.len() as f64
}

/// Align-corners=false source position of output sample `o` when an axis of
/// `n_in` samples is resampled to `n_out`, clamped to the valid range.
pub fn source_coord(o: usize, n_out: usize, n_in: usize) -> f64 {
    ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64)
}

fn lerp_axis(pos: f64, n: usize) -> (usize, usize, f64) {
    let i0 = pos.floor() as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, pos - i0 as f64)
}

/// Bilinear resample of `[H, W, C]` to `[oh, ow, C]`.
pub fn resize(x: &A, oh: usize, ow: usize) -> A {
    let (h, w, c) = (x.shape[0], x.shape[1], x.shape[2]);
    let mut out = A::zeros(&[oh, ow, c]);
    for y in 0..oh {
        let (y0, y1, fy) = lerp_axis(source_coord(y, oh, h), h);
        for xx in 0..ow {
            let (x0, x1, fx) = lerp_axis(source_coord(xx, ow, w), w);
            for ch in 0..c {
                let at = |r: usize, q: usize| x.v[(r * w + q) * c + ch];
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                out.v[(y * ow + xx) * c + ch] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    out
}

/// Samples a `[T, H, W, C]` grid at frame `t` of `frames`, resized to
/// `[oh, ow, C]`.
pub fn sample_grid(grid: &A, t: usize, frames: usize, oh: usize, ow: usize) -> A {
    let (tg, hg, wg, c) = (grid.shape[0], grid.shape[1], grid.shape[2], grid.shape[3]);
    let (t0, t1, ft) = lerp_axis(source_coord(t, frames, tg), tg);
    let plane = hg * wg * c;
    let v = (0..plane).map(|i| grid.v[t0 * plane + i] * (1.0 - ft) + grid.v[t1 * plane + i] * ft).collect();
    resize(&A::new(&[hg, wg, c], v), oh, ow)
}

/// fp64 view of one ConvNeXt block's tensors.
pub struct Block64 {
    pub dw_w: A,
    pub dw_b: A,
    pub g: A,
    pub beta: A,
    pub w1: A,
    pub b1: A,
    pub w2: A,
    pub b2: A,
}

/// Every stored tensor of a model in fp64, canonical order.
#[derive(Clone, Debug)]
pub struct Params64 {
    pub names: Vec<String>,
    pub tensors: Vec<A>,
}

impl Params64 {
    pub fn of(store: &ParameterStore) -> Self {
        let (names, tensors) = store.iter().map(|(n, t)| (n.to_string(), A::of(t))).unzip();
        Params64 { names, tensors }
    }

    pub fn get(&self, name: &str) -> &A {
        let i = self.names.iter().position(|n| n == name).unwrap_or_else(|| panic!("no tensor {name}"));
        &self.tensors[i]
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.v.iter().copied()).collect()
    }

    pub fn with_flat(&self, flat: &[f64]) -> Self {
        let mut out = self.clone();
        let mut off = 0;
        for t in &mut out.tensors {
            let n = t.v.len();
            t.v.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        out
    }
}

impl Block64 {
    pub fn from_params(params: &Params64, prefix: &str) -> Self {
        let get = |s: &str| params.get(&format!("{prefix}.{s}")).clone();
        Block64 {
            dw_w: get("dw.weight"),
            dw_b: get("dw.bias"),
            g: get("norm.gamma"),
            beta: get("norm.beta"),
            w1: get("fc1.weight"),
            b1: get("fc1.bias"),
            w2: get("fc2.weight"),
            b2: get("fc2.bias"),
        }
    }

    /// Residual branch with the depthwise conv applied `dw` times and the
    /// hidden layer widened by `copies` duplicated copies.
    pub fn branch(&self, x: &A, dw: usize, copies: usize) -> A {
        let mut h = x.clone();
        for _ in 0..dw {
            h = depthwise(&h, &self.dw_w, &self.dw_b);
        }
        h = layer_norm(&h, &self.g, &self.beta, 1e-6);
        let (hid, cin) = (self.w1.shape[0], self.w1.shape[1]);
        let cout = self.w2.shape[0];
        let w1 = A::new(&[hid * copies, cin], (0..copies).flat_map(|_| self.w1.v.clone()).collect());
        let b1 = A::new(&[hid * copies], (0..copies).flat_map(|_| self.b1.v.clone()).collect());
        let w2 = A::new(
            &[cout, hid * copies],
            (0..cout)
                .flat_map(|o| (0..copies).flat_map(move |_| (0..hid).map(move |j| (o, j))))
                .map(|(o, j)| self.w2.v[o * hid + j])
                .collect(),
        );
        h = linear(&h, &w1, &b1);
        h = gelu(&h);
        linear(&h, &w2, &self.b2)
    }

    pub fn apply(&self, x: &A, dw: usize, copies: usize) -> A {
        let br = self.branch(x, dw, copies);
        if br.shape == x.shape {
            add(x, &br)
        } else {
            br
        }
    }
}

/// Full-frame decode of `frame` in fp64, following the network definition
/// step by step (no patching). Returns `[H, W, 3]`, unclamped.
pub fn network_frame(cfg: &NetworkConfig, params: &Params64, frame: usize) -> A {
    let get = |s: &str| params.get(s).clone();
    let (h0, w0) = cfg.level_dims(0, cfg.height, cfg.width);
    let g = sample_grid(&get("base_grid"), frame, cfg.frames, h0, w0);
    let mut x = linear(&g, &get("stem.weight"), &get("stem.bias"));
    let reuse = &cfg.reuse;
    for k in 0..cfg.num_blocks() {
        let (h, w) = cfg.level_dims(k + 1, cfg.height, cfg.width);
        let up = resize(&x, h, w);
        let p = format!("block{k}");
        let lg = sample_grid(&get(&format!("{p}.grid")), frame, cfg.frames, h, w);
        let lg = linear(&lg, &get(&format!("{p}.grid_proj.weight")), &get(&format!("{p}.grid_proj.bias")));
        let blocks: Vec<Block64> =
            (0..cfg.depths[k]).map(|j| Block64::from_params(params, &format!("{p}.convnext{j}"))).collect();
        let on = reuse.mode != ReuseMode::None && reuse.multiplier > 1 && reuse.location[k];
        let m = reuse.multiplier;
        let stack = |mut y: A, inner: bool| {
            for b in &blocks {
                y = match (inner, reuse.mode, reuse.granularity) {
                    (true, ReuseMode::Deepen, Granularity::ConvnextBlock) => {
                        (0..m).fold(y, |acc, _| b.apply(&acc, 1, 1))
                    }
                    (true, ReuseMode::Deepen, Granularity::ConvLayer) => b.apply(&y, m, 1),
                    (true, ReuseMode::Widen, _) => b.apply(&y, 1, m),
                    _ => b.apply(&y, 1, 1),
                };
            }
            y
        };
        x = if on && reuse.mode == ReuseMode::Deepen && reuse.granularity == Granularity::HinervBlock {
            let mut y = up;
            for _ in 0..m {
                y = stack(add(&y, &lg), false);
            }
            y
        } else {
            stack(add(&up, &lg), on)
        };
    }
    conv(&x, &get("head.weight"), &get("head.bias"))
}

/// Central differences of `f` at `x` for the listed coordinates.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], coords: &[usize], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    coords
        .iter()
        .map(|&i| {
            let orig = p[i];
            p[i] = orig + h;
            let fp = f(&p);
            p[i] = orig - h;
            let fm = f(&p);
            p[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Max-norm relative error `max|a - e| / max|e|`.
pub fn rel_err(analytic: &[f64], expected: &[f64]) -> f64 {
    let scale = expected.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = analytic.iter().zip(expected).fold(0.0f64, |m, (a, e)| m.max((a - e).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
