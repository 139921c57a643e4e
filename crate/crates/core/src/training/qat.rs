use rand::Rng;

use crate::codec::{quant_step, BITS_RANGE};
use crate::error::{Error, Result};
use crate::network::ParameterStore;

/// Uniform `[-step/2, step/2]` noise for every stored value, with the step
/// the codec would use for that tensor. A tensor of zeros gets zero noise.
pub fn qat_noise<R: Rng + ?Sized>(store: &ParameterStore, bits: u32, rng: &mut R) -> Result<Vec<Vec<f32>>> {
    if !BITS_RANGE.contains(&bits) {
        return Err(Error::Config(format!("QAT needs quantization bits in {BITS_RANGE:?}, got {bits}")));
    }
    store
        .tensors()
        .map(|t| {
            let half = quant_step(t.max_abs(), bits)? / 2.0;
            Ok(if half == 0.0 {
                vec![0.0; t.numel()]
            } else {
                (0..t.numel()).map(|_| rng.gen_range(-half..=half)).collect()
            })
        })
        .collect()
}

/// A copy of `store` with fresh quantization noise added. Training passes the
/// noise as bind offsets instead, so gradients reach the clean weights.
pub fn qat_forward<R: Rng + ?Sized>(store: &ParameterStore, bits: u32, rng: &mut R) -> Result<ParameterStore> {
    let noise = qat_noise(store, bits, rng)?;
    let mut out = store.clone();
    for (t, n) in out.tensors_mut().zip(&noise) {
        for (v, e) in t.data_mut().iter_mut().zip(n) {
            *v += e;
        }
    }
    Ok(out)
}
