//! Adaptive order-0 binary arithmetic coder over a small integer alphabet.
//!
//! Integer interval coder with 32-bit state and pending-bit (underflow)
//! handling. The symbol model starts every count at 1 and adds
//! [`INCREMENT`] after each coded symbol; when the total would exceed
//! [`MAX_TOTAL`] all counts are halved, rounding up. Encoder and decoder
//! update the model identically, so no frequency table is transmitted.

use crate::error::{Error, Result};

const STATE_BITS: u32 = 32;
const TOP: u64 = (1 << STATE_BITS) - 1;
const HALF: u64 = 1 << (STATE_BITS - 1);
const QUARTER: u64 = 1 << (STATE_BITS - 2);

/// Count added to a symbol each time it is coded.
pub const INCREMENT: u32 = 32;

/// Upper bound on the model total. Keeps every sub-interval non-empty, since
/// a renormalized range always exceeds a quarter of the state space.
pub const MAX_TOTAL: u32 = 1 << 16;

/// Adaptive symbol frequencies shared by encoder and decoder.
#[derive(Clone, Debug)]
pub struct AdaptiveModel {
    counts: Vec<u32>,
    total: u32,
}

impl AdaptiveModel {
    pub fn new(alphabet: usize) -> Self {
        assert!((1..=256).contains(&alphabet), "alphabet size {alphabet} outside 1..=256");
        AdaptiveModel { counts: vec![1; alphabet], total: alphabet as u32 }
    }

    pub fn alphabet(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    /// `(cum_low, cum_high)` of symbol `s`.
    pub fn interval(&self, s: usize) -> (u32, u32) {
        let lo: u32 = self.counts[..s].iter().sum();
        (lo, lo + self.counts[s])
    }

    /// The symbol whose cumulative interval contains `target`.
    fn find(&self, target: u32) -> (usize, u32, u32) {
        let mut lo = 0;
        for (s, &c) in self.counts.iter().enumerate() {
            if target < lo + c {
                return (s, lo, lo + c);
            }
            lo += c;
        }
        unreachable!("target below total")
    }

    pub fn update(&mut self, s: usize) {
        self.counts[s] += INCREMENT;
        self.total += INCREMENT;
        if self.total > MAX_TOTAL {
            self.total = 0;
            for c in &mut self.counts {
                *c = c.div_ceil(2);
                self.total += *c;
            }
        }
    }
}

/// Growable bit sequence, most significant bit of each byte first.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BitWriter {
    bytes: Vec<u8>,
    len: u64,
}

impl BitWriter {
    pub fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().expect("byte pushed above") |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u32, width: u32) {
        for i in (0..width).rev() {
            self.push(value >> i & 1 == 1);
        }
    }

    pub fn bit_len(&self) -> u64 {
        self.len
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

/// Reads bits of a payload; positions at or past `len` read as zero.
#[derive(Clone, Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    len: u64,
    pos: u64,
}

impl<'a> BitReader<'a> {
    /// Fails when `bytes` holds fewer than `len` bits.
    pub fn new(bytes: &'a [u8], len: u64) -> Result<Self> {
        if (bytes.len() as u64) < len.div_ceil(8) {
            return Err(Error::Corruption(format!("payload declares {len} bits but holds {} bytes", bytes.len())));
        }
        Ok(BitReader { bytes, len, pos: 0 })
    }

    pub fn next_bit(&mut self) -> bool {
        let bit = self.pos < self.len && self.bytes[(self.pos / 8) as usize] & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        bit
    }

    pub fn bits(&mut self, width: u32) -> u32 {
        (0..width).fold(0, |acc, _| acc << 1 | self.next_bit() as u32)
    }

    pub fn position(&self) -> u64 {
        self.pos
    }
}

/// Arithmetic encoder writing into a [`BitWriter`].
#[derive(Clone, Debug)]
pub struct Encoder {
    low: u64,
    high: u64,
    pending: u64,
    out: BitWriter,
}

impl Default for Encoder {
    fn default() -> Self {
        Encoder { low: 0, high: TOP, pending: 0, out: BitWriter::default() }
    }
}

impl Encoder {
    fn emit(&mut self, bit: bool) {
        self.out.push(bit);
        for _ in 0..self.pending {
            self.out.push(!bit);
        }
        self.pending = 0;
    }

    /// Codes `s` under the model's current state, then updates the model.
    pub fn encode(&mut self, model: &mut AdaptiveModel, s: usize) {
        let (lo, hi) = model.interval(s);
        let total = model.total() as u64;
        let range = self.high - self.low + 1;
        self.high = self.low + range * hi as u64 / total - 1;
        self.low += range * lo as u64 / total;
        loop {
            if self.high < HALF {
                self.emit(false);
            } else if self.low >= HALF {
                self.emit(true);
                self.low -= HALF;
                self.high -= HALF;
            } else if self.low >= QUARTER && self.high < 3 * QUARTER {
                self.pending += 1;
                self.low -= QUARTER;
                self.high -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = self.high << 1 | 1;
        }
        model.update(s);
    }

    /// Emits two disambiguating bits (plus any pending ones).
    pub fn finish(mut self) -> BitWriter {
        self.pending += 1;
        self.emit(self.low >= QUARTER);
        self.out
    }
}

/// Arithmetic decoder mirroring [`Encoder`].
#[derive(Debug)]
pub struct Decoder<'a> {
    low: u64,
    high: u64,
    value: u64,
    shifts: u64,
    input: BitReader<'a>,
}

impl<'a> Decoder<'a> {
    pub fn new(mut input: BitReader<'a>) -> Self {
        let value = input.bits(STATE_BITS) as u64;
        Decoder { low: 0, high: TOP, value, shifts: 0, input }
    }

    pub fn decode(&mut self, model: &mut AdaptiveModel) -> usize {
        let total = model.total() as u64;
        let range = self.high - self.low + 1;
        let target = ((self.value - self.low + 1) * total - 1) / range;
        let (s, lo, hi) = model.find(target as u32);
        self.high = self.low + range * hi as u64 / total - 1;
        self.low += range * lo as u64 / total;
        loop {
            if self.high < HALF {
            } else if self.low >= HALF {
                self.low -= HALF;
                self.high -= HALF;
                self.value -= HALF;
            } else if self.low >= QUARTER && self.high < 3 * QUARTER {
                self.low -= QUARTER;
                self.high -= QUARTER;
                self.value -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = self.high << 1 | 1;
            self.value = self.value << 1 | self.input.next_bit() as u64;
            self.shifts += 1;
        }
        model.update(s);
        s
    }

    /// Bits the matching encoder must have produced: one per interval
    /// doubling plus the two flush bits.
    pub fn expected_bits(&self) -> u64 {
        self.shifts + 2
    }
}

/// Arithmetic codes `symbols` with a fresh model. Returns the bits.
pub fn ac_encode(symbols: &[u32], alphabet: usize) -> Result<BitWriter> {
    let mut model = AdaptiveModel::new(alphabet);
    let mut enc = Encoder::default();
    for (i, &s) in symbols.iter().enumerate() {
        if s as usize >= alphabet {
            return Err(Error::Data(format!("symbol {s} at {i} outside alphabet of {alphabet}")));
        }
        enc.encode(&mut model, s as usize);
    }
    Ok(enc.finish())
}

/// Inverse of [`ac_encode`]. `bit_len` must equal the encoder's output
/// length exactly.
pub fn ac_decode(bytes: &[u8], bit_len: u64, count: usize, alphabet: usize) -> Result<Vec<u32>> {
    let mut model = AdaptiveModel::new(alphabet);
    let mut dec = Decoder::new(BitReader::new(bytes, bit_len)?);
    let out = (0..count).map(|_| dec.decode(&mut model) as u32).collect();
    if dec.expected_bits() != bit_len {
        return Err(Error::Corruption(format!(
            "arithmetic payload is {bit_len} bits, decoding {count} symbols implies {}",
            dec.expected_bits()
        )));
    }
    Ok(out)
}

/// Bits per symbol in raw mode, `ceil(log2(alphabet))`.
pub fn raw_width(alphabet: usize) -> u32 {
    usize::BITS - (alphabet.max(2) - 1).leading_zeros()
}

/// A coded symbol sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Payload {
    pub bytes: Vec<u8>,
    pub bit_len: u64,
}

/// Codes a symbol sequence. A leading mode bit selects arithmetic coding
/// (`0`) or fixed-width raw packing (`1`), whichever is shorter, so the
/// payload never exceeds `1 + count * raw_width(alphabet)` bits.
pub fn encode_stream(symbols: &[u32], alphabet: usize) -> Result<Payload> {
    let ac = ac_encode(symbols, alphabet)?;
    let width = raw_width(alphabet);
    let mut out = BitWriter::default();
    if ac.bit_len() <= symbols.len() as u64 * width as u64 {
        out.push(false);
        let len = ac.bit_len();
        let bytes = ac.into_bytes();
        let mut r = BitReader::new(&bytes, len)?;
        for _ in 0..len {
            out.push(r.next_bit());
        }
    } else {
        out.push(true);
        for &s in symbols {
            out.push_bits(s, width);
        }
    }
    let bit_len = out.bit_len();
    Ok(Payload { bytes: out.into_bytes(), bit_len })
}

/// Inverse of [`encode_stream`].
pub fn decode_stream(payload: &Payload, count: usize, alphabet: usize) -> Result<Vec<u32>> {
    let mut r = BitReader::new(&payload.bytes, payload.bit_len)?;
    if payload.bit_len == 0 {
        return Err(Error::Corruption("empty payload has no mode bit".into()));
    }
    if !r.next_bit() {
        let body: Vec<u8> = {
            let mut w = BitWriter::default();
            for _ in 1..payload.bit_len {
                w.push(r.next_bit());
            }
            w.into_bytes()
        };
        return ac_decode(&body, payload.bit_len - 1, count, alphabet);
    }
    let width = raw_width(alphabet);
    if payload.bit_len != 1 + count as u64 * width as u64 {
        return Err(Error::Corruption(format!(
            "raw payload is {} bits, {count} symbols need {}",
            payload.bit_len,
            1 + count as u64 * width as u64
        )));
    }
    (0..count)
        .map(|i| {
            let s = r.bits(width);
            if s as usize >= alphabet {
                Err(Error::Corruption(format!("raw symbol {s} at {i} outside alphabet of {alphabet}")))
            } else {
                Ok(s)
            }
        })
        .collect()
}
