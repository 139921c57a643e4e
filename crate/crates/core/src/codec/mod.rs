//! Parameter quantization, entropy coding and the model bitstream.

mod arith;
mod bitstream;
mod quant;

pub use arith::{
    ac_decode, ac_encode, decode_stream, encode_stream, raw_width, AdaptiveModel, BitReader, BitWriter, Decoder,
    Encoder, Payload, INCREMENT, MAX_TOTAL,
};
pub use bitstream::{
    fnv1a64, pack_model, pack_parts, unpack_model, unpack_parts, Record, StreamParts, FORMAT_VERSION,
    HEADER_FIXED_BYTES, MAGIC,
};
pub use quant::{
    alphabet_size, center, dequantize_store, quant_step, quantize_store, quantize_tensor, quantized_copy,
    QuantizedTensor, BITS_RANGE, DEFAULT_BITS,
};
