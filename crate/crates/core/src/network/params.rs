use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Initial head bias: a mid-gray start.
pub const HEAD_BIAS_INIT: f32 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Init {
    /// Uniform in `±sqrt(1 / fan_in)`.
    Uniform {
        fan_in: usize,
    },
    Const(f32),
}

/// Name, shape and initializer of every stored tensor, in canonical order.
fn layout(cfg: &NetworkConfig) -> Vec<(String, Vec<usize>, Init)> {
    let mut out = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init: Init| out.push((name, shape, init));
    let [tg, hg, wg, cg] = cfg.base_grid;
    let c0 = cfg.stem_channels;
    push("base_grid".into(), vec![tg, hg, wg, cg], Init::Uniform { fan_in: cg });
    push("stem.weight".into(), vec![c0, cg], Init::Uniform { fan_in: cg });
    push("stem.bias".into(), vec![c0], Init::Uniform { fan_in: cg });
    let k = cfg.kernel;
    for b in 0..cfg.num_blocks() {
        let cin = cfg.in_channels(b);
        let cout = cfg.out_channels(b);
        let [lt, lh, lw, lc] = cfg.local_grids[b];
        let p = format!("block{b}");
        push(format!("{p}.grid"), vec![lt, lh, lw, lc], Init::Uniform { fan_in: lc });
        push(format!("{p}.grid_proj.weight"), vec![cin, lc], Init::Uniform { fan_in: lc });
        push(format!("{p}.grid_proj.bias"), vec![cin], Init::Uniform { fan_in: lc });
        let depth = cfg.depths[b];
        for j in 0..depth {
            let to = if j + 1 == depth { cout } else { cin };
            // A channel-changing block expands to a multiple of its output width.
            let hidden = cfg.expansion * to;
            let q = format!("{p}.convnext{j}");
            push(format!("{q}.dw.weight"), vec![k, k, cin], Init::Uniform { fan_in: k * k });
            push(format!("{q}.dw.bias"), vec![cin], Init::Uniform { fan_in: k * k });
            push(format!("{q}.norm.gamma"), vec![cin], Init::Const(1.0));
            push(format!("{q}.norm.beta"), vec![cin], Init::Const(0.0));
            push(format!("{q}.fc1.weight"), vec![hidden, cin], Init::Uniform { fan_in: cin });
            push(format!("{q}.fc1.bias"), vec![hidden], Init::Uniform { fan_in: cin });
            push(format!("{q}.fc2.weight"), vec![to, hidden], Init::Uniform { fan_in: hidden });
            push(format!("{q}.fc2.bias"), vec![to], Init::Uniform { fan_in: hidden });
        }
    }
    let hk = cfg.head_kernel;
    let cn = cfg.out_channels(cfg.num_blocks() - 1);
    push("head.weight".into(), vec![hk, hk, cn, 3], Init::Uniform { fan_in: hk * hk * cn });
    push("head.bias".into(), vec![3], Init::Const(HEAD_BIAS_INIT));
    out
}

/// Ordered collection of the unique learnable tensors of a model. This is
/// exactly what gets quantized and entropy coded; reuse never adds entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterStore {
    entries: Vec<(String, Tensor)>,
}

impl ParameterStore {
    /// Freshly initialized parameters, deterministic in `seed`.
    pub fn init(cfg: &NetworkConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = layout(cfg)
            .into_iter()
            .map(|(name, shape, init)| {
                let t = match init {
                    Init::Uniform { fan_in } => Tensor::uniform(&shape, (1.0 / fan_in as f32).sqrt(), &mut rng),
                    Init::Const(v) => Tensor::full(&shape, v),
                };
                (name, t)
            })
            .collect();
        ParameterStore { entries }
    }

    /// Builds a store from tensors given in canonical order, checking names
    /// and shapes against the config.
    pub fn from_tensors(cfg: &NetworkConfig, tensors: Vec<Tensor>) -> Result<Self> {
        let spec = layout(cfg);
        if spec.len() != tensors.len() {
            return Err(Error::dim(
                "parameter store",
                format!("config expects {} tensors, got {}", spec.len(), tensors.len()),
            ));
        }
        let mut entries = Vec::with_capacity(spec.len());
        for ((name, shape, _), t) in spec.into_iter().zip(tensors) {
            if t.shape() != shape.as_slice() {
                return Err(Error::dim("parameter store", format!("{name}: expected {shape:?}, got {:?}", t.shape())));
            }
            entries.push((name, t));
        }
        Ok(ParameterStore { entries })
    }

    /// Tensor names in canonical order.
    pub fn names_for(cfg: &NetworkConfig) -> Vec<String> {
        layout(cfg).into_iter().map(|(n, _, _)| n).collect()
    }

    pub fn shapes_for(cfg: &NetworkConfig) -> Vec<Vec<usize>> {
        layout(cfg).into_iter().map(|(_, s, _)| s).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    /// Number of stored scalars.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }
}

/// Unique stored parameter count for a config; reuse settings do not enter.
pub fn count_unique_params(cfg: &NetworkConfig) -> usize {
    layout(cfg).iter().map(|(_, s, _)| s.iter().product::<usize>()).sum()
}
