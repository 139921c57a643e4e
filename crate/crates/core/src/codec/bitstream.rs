//! Model bitstream: header, per-tensor records and one coded payload.
//!
//! Layout, all integers little-endian:
//!
//! | field | bytes |
//! |---|---|
//! | magic `INRC` | 4 |
//! | format version | 1 |
//! | config text length, then UTF-8 config text | 4 + n |
//! | tensor count | 2 |
//! | per tensor: name hash, rank, dims, step, symbol count | 8 + 1 + 4·rank + 4 + 8 |
//! | payload bit length | 8 |
//! | payload | ceil(bits / 8) |
//!
//! Every tensor's symbols are concatenated in canonical order and coded as a
//! single stream with one adaptive model.

use serde::{Deserialize, Serialize};

use super::arith::{decode_stream, encode_stream, Payload};
use super::quant::{alphabet_size, dequantize_store, quantize_store, QuantizedTensor, BITS_RANGE};
use crate::error::{Error, Result};
use crate::network::{NetworkConfig, ParameterStore};

pub const MAGIC: [u8; 4] = *b"INRC";
pub const FORMAT_VERSION: u8 = 1;

/// Size of a stream with an empty config text and no tensors, excluding the
/// payload bytes.
pub const HEADER_FIXED_BYTES: usize = 4 + 1 + 4 + 2 + 8;

/// 64-bit FNV-1a, used to tie each record to its tensor name.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Text stored in the config block.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StreamConfig {
    quant_bits: u32,
    network: NetworkConfig,
}

/// Serializes already quantized tensors. All tensors must share `bits`.
pub fn pack_parts(config_text: &str, names: &[String], tensors: &[QuantizedTensor], bits: u32) -> Result<Vec<u8>> {
    if names.len() != tensors.len() {
        return Err(Error::dim("pack", format!("{} names for {} tensors", names.len(), tensors.len())));
    }
    let count = u16::try_from(tensors.len()).map_err(|_| Error::Config("more than 65535 tensors".into()))?;
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(config_text.len() as u32).to_le_bytes());
    out.extend_from_slice(config_text.as_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    let mut symbols = Vec::new();
    for (name, q) in names.iter().zip(tensors) {
        if q.bits != bits {
            return Err(Error::Config(format!("tensor {name} quantized at {} bits, stream uses {bits}", q.bits)));
        }
        out.extend_from_slice(&fnv1a64(name.as_bytes()).to_le_bytes());
        out.push(q.shape.len() as u8);
        for &d in &q.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&q.step.to_le_bytes());
        out.extend_from_slice(&(q.symbols.len() as u64).to_le_bytes());
        symbols.extend_from_slice(&q.symbols);
    }
    let payload = encode_stream(&symbols, alphabet_size(bits))?;
    out.extend_from_slice(&payload.bit_len.to_le_bytes());
    out.extend_from_slice(&payload.bytes);
    Ok(out)
}

/// Per-tensor header record.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name_hash: u64,
    pub shape: Vec<usize>,
    pub step: f32,
    pub count: u64,
}

/// A parsed but not yet entropy-decoded stream.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamParts {
    pub config_text: String,
    pub records: Vec<Record>,
    pub payload: Payload,
}

impl StreamParts {
    /// Entropy-decodes the payload and splits it per record.
    pub fn tensors(&self, bits: u32) -> Result<Vec<QuantizedTensor>> {
        let total: u64 = self.records.iter().map(|r| r.count).sum();
        let total = usize::try_from(total).map_err(|_| Error::Corruption("symbol count overflows".into()))?;
        let mut symbols = decode_stream(&self.payload, total, alphabet_size(bits))?.into_iter();
        Ok(self
            .records
            .iter()
            .map(|r| QuantizedTensor {
                bits,
                step: r.step,
                shape: r.shape.clone(),
                symbols: symbols.by_ref().take(r.count as usize).collect(),
            })
            .collect())
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Corruption(format!("stream ends inside {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("take returns N bytes"))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.array::<1>(what)?[0])
    }
    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }
    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array(what)?))
    }
}

/// Parses the container without decoding the payload.
pub fn unpack_parts(bytes: &[u8]) -> Result<StreamParts> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c.take(4, "magic").map_err(|_| Error::Format("stream shorter than its magic".into()))?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = c.u8("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let len = c.u32("config length")? as usize;
    let config_text = std::str::from_utf8(c.take(len, "config text")?)
        .map_err(|e| Error::Corruption(format!("config text is not UTF-8: {e}")))?
        .to_owned();
    let n = c.u16("tensor count")?;
    let mut records = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let name_hash = c.u64("record")?;
        let rank = c.u8("record")?;
        let shape = (0..rank).map(|_| c.u32("record").map(|d| d as usize)).collect::<Result<_>>()?;
        let step = c.f32("record")?;
        let count = c.u64("record")?;
        records.push(Record { name_hash, shape, step, count });
    }
    let bit_len = c.u64("payload length")?;
    let payload_bytes = usize::try_from(bit_len.div_ceil(8))
        .map_err(|_| Error::Corruption(format!("payload length {bit_len} overflows")))?;
    let payload = Payload { bytes: c.take(payload_bytes, "payload")?.to_vec(), bit_len };
    if c.pos != bytes.len() {
        return Err(Error::Corruption(format!("{} trailing bytes after payload", bytes.len() - c.pos)));
    }
    Ok(StreamParts { config_text, records, payload })
}

/// Quantizes `store` at `bits` and serializes it with its config.
pub fn pack_model(store: &ParameterStore, cfg: &NetworkConfig, bits: u32) -> Result<Vec<u8>> {
    cfg.validate()?;
    let text = toml::to_string(&StreamConfig { quant_bits: bits, network: cfg.clone() })
        .map_err(|e| Error::Config(e.to_string()))?;
    let names: Vec<String> = store.iter().map(|(n, _)| n.to_owned()).collect();
    if names != ParameterStore::names_for(cfg) {
        return Err(Error::Config("parameter store does not match the config layout".into()));
    }
    pack_parts(&text, &names, &quantize_store(store, bits)?, bits)
}

/// Parses, entropy-decodes and dequantizes a stream. Returns the config and
/// the dequantized parameters.
pub fn unpack_model(bytes: &[u8]) -> Result<(NetworkConfig, ParameterStore)> {
    let parts = unpack_parts(bytes)?;
    let sc: StreamConfig =
        toml::from_str(&parts.config_text).map_err(|e| Error::Corruption(format!("config block: {e}")))?;
    if !BITS_RANGE.contains(&sc.quant_bits) {
        return Err(Error::Corruption(format!("config block declares {} bits", sc.quant_bits)));
    }
    let cfg = sc.network;
    cfg.validate()?;
    let names = ParameterStore::names_for(&cfg);
    let shapes = ParameterStore::shapes_for(&cfg);
    if parts.records.len() != names.len() {
        return Err(Error::Corruption(format!("{} records, config has {} tensors", parts.records.len(), names.len())));
    }
    for ((r, name), shape) in parts.records.iter().zip(&names).zip(&shapes) {
        if r.name_hash != fnv1a64(name.as_bytes()) {
            return Err(Error::Corruption(format!("record hash does not match tensor {name}")));
        }
        if &r.shape != shape || r.count != shape.iter().product::<usize>() as u64 {
            return Err(Error::Corruption(format!("record for {name} has shape {:?}, count {}", r.shape, r.count)));
        }
        if !r.step.is_finite() || r.step < 0.0 {
            return Err(Error::Corruption(format!("record for {name} has step {}", r.step)));
        }
    }
    let store = dequantize_store(&cfg, &parts.tensors(sc.quant_bits)?)?;
    Ok((cfg, store))
}
