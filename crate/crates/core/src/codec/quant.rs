//! Symmetric per-tensor max-abs quantization.

use crate::error::{Error, Result};
use crate::network::{NetworkConfig, ParameterStore};
use crate::tensor::Tensor;

/// Bit width used by the codec unless configured otherwise.
pub const DEFAULT_BITS: u32 = 6;

/// Supported bit widths.
pub const BITS_RANGE: std::ops::RangeInclusive<u32> = 2..=8;

/// Symbol that dequantizes to zero: `2^(bits-1) - 1`.
pub fn center(bits: u32) -> u32 {
    (1 << (bits - 1)) - 1
}

/// Number of distinct symbols, `2^bits - 1`; symbols lie in `[0, 2*center]`.
pub fn alphabet_size(bits: u32) -> usize {
    (1 << bits) - 1
}

fn check_bits(bits: u32) -> Result<()> {
    if BITS_RANGE.contains(&bits) {
        Ok(())
    } else {
        Err(Error::Config(format!("quantization bits must be in {BITS_RANGE:?}, got {bits}")))
    }
}

/// Quantization step of a tensor with the given largest magnitude.
pub fn quant_step(max_abs: f32, bits: u32) -> Result<f32> {
    check_bits(bits)?;
    Ok(max_abs / center(bits) as f32)
}

/// A tensor stored as integer symbols and one scale.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedTensor {
    pub bits: u32,
    /// `0` exactly when every original value was zero.
    pub step: f32,
    pub shape: Vec<usize>,
    pub symbols: Vec<u32>,
}

impl QuantizedTensor {
    /// `(symbol - center) * step` per entry.
    pub fn dequantize(&self) -> Tensor {
        let c = center(self.bits) as i64;
        let data = self.symbols.iter().map(|&s| (s as i64 - c) as f32 * self.step).collect();
        Tensor::new(self.shape.clone(), data).expect("symbol count matches shape")
    }
}

/// Maps each value to `round(v / step) + center`, clamped to the symmetric
/// range.
pub fn quantize_tensor(t: &Tensor, bits: u32) -> Result<QuantizedTensor> {
    check_bits(bits)?;
    if let Some(i) = t.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("cannot quantize non-finite value {} at index {i}", t.data()[i])));
    }
    let c = center(bits);
    let step = quant_step(t.max_abs(), bits)?;
    let symbols = if step == 0.0 {
        vec![c; t.numel()]
    } else {
        // The rounding decision is made in f64 so only the dequantizing
        // product rounds in f32.
        let (c, step) = (c as f64, step as f64);
        t.data().iter().map(|&v| ((v as f64 / step).round() + c).clamp(0.0, 2.0 * c) as u32).collect()
    };
    Ok(QuantizedTensor { bits, step, shape: t.shape().to_vec(), symbols })
}

/// Quantizes every tensor of a store in canonical order.
pub fn quantize_store(store: &ParameterStore, bits: u32) -> Result<Vec<QuantizedTensor>> {
    store.tensors().map(|t| quantize_tensor(t, bits)).collect()
}

/// Rebuilds a store from quantized tensors.
pub fn dequantize_store(cfg: &NetworkConfig, qs: &[QuantizedTensor]) -> Result<ParameterStore> {
    ParameterStore::from_tensors(cfg, qs.iter().map(QuantizedTensor::dequantize).collect())
}

/// The parameters a decoder will see: quantize then dequantize.
pub fn quantized_copy(cfg: &NetworkConfig, store: &ParameterStore, bits: u32) -> Result<ParameterStore> {
    dequantize_store(cfg, &quantize_store(store, bits)?)
}
