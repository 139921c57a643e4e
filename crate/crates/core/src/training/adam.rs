use crate::error::{Error, Result};
use crate::network::ParameterStore;

pub const BETA1: f32 = 0.9;
pub const BETA2: f32 = 0.999;
pub const EPS: f32 = 1e-8;

/// Adam moments, one array per stored tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
    /// Number of updates applied so far.
    pub step: u64,
}

impl AdamState {
    pub fn new(store: &ParameterStore) -> Self {
        let zeros: Vec<Vec<f32>> = store.tensors().map(|t| vec![0.0; t.numel()]).collect();
        AdamState { m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// One bias-corrected Adam update. `grads[i]` belongs to the `i`-th stored
/// tensor.
pub fn adam_step(store: &mut ParameterStore, grads: &[Option<&[f32]>], state: &mut AdamState, lr: f32) -> Result<()> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(Error::Usage(format!("{} gradients for {} tensors", grads.len(), store.len())));
    }
    for (i, ((name, t), g)) in store.iter().zip(grads).enumerate() {
        match g {
            None => return Err(Error::Usage(format!("no gradient for {name}"))),
            Some(g) if g.len() != t.numel() || state.m[i].len() != t.numel() => {
                return Err(Error::Usage(format!("gradient for {name} has {} entries, tensor {}", g.len(), t.numel())))
            }
            Some(_) => {}
        }
    }
    state.step += 1;
    let t = i32::try_from(state.step).unwrap_or(i32::MAX);
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (i, p) in store.tensors_mut().enumerate() {
        let g = grads[i].expect("checked above");
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
        }
    }
    Ok(())
}
