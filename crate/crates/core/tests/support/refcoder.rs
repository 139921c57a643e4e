//! Brute-force reference decoder for the arithmetic coder.
//!
//! Tracks the coding interval in absolute coordinates with arbitrary
//! precision instead of a renormalized 32-bit window, and decodes each
//! symbol by testing every candidate: the right one is the only candidate
//! whose sub-interval contains the code value. The frequency model is
//! re-stated here from its definition (counts start at 1, +32 per use,
//! halve rounding up once the total exceeds 2^16).

use num_bigint::BigUint;
use reuse_inr::codec::{ac_decode, ac_encode, AdaptiveModel, Encoder};

const STATE_BITS: u32 = 32;

#[derive(Clone)]
pub struct RefModel {
    counts: Vec<u64>,
}

impl RefModel {
    pub fn new(alphabet: usize) -> Self {
        RefModel { counts: vec![1; alphabet] }
    }

    fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn cum(&self, s: usize) -> (u64, u64) {
        let lo: u64 = self.counts[..s].iter().sum();
        (lo, lo + self.counts[s])
    }

    fn update(&mut self, s: usize) {
        self.counts[s] += 32;
        if self.total() > 1 << 16 {
            for c in &mut self.counts {
                *c = c.div_ceil(2);
            }
        }
    }
}

/// The interval `[lo, hi]` in units of `2^-bits`, and the base of the
/// 32-bit window a renormalizing coder would currently see.
#[derive(Clone)]
struct Interval {
    lo: BigUint,
    hi: BigUint,
    window: BigUint,
    bits: u64,
}

impl Interval {
    fn new() -> Self {
        Interval {
            lo: BigUint::from(0u32),
            hi: BigUint::from((1u64 << STATE_BITS) - 1),
            window: BigUint::from(0u32),
            bits: STATE_BITS as u64,
        }
    }

    fn narrow(&mut self, cum: (u64, u64), total: u64) {
        self.split(cum, total);
        self.renormalize();
    }

    /// The sub-interval of `[lo, hi]` owned by cumulative counts
    /// `[clo, chi)` out of `total`, at the current resolution.
    fn split(&mut self, (clo, chi): (u64, u64), total: u64) {
        let range = &self.hi - &self.lo + 1u32;
        self.hi = &self.lo + &range * chi / total - 1u32;
        self.lo = &self.lo + &range * clo / total;
    }

    /// Follows the window a 32-bit coder would shift out.
    fn renormalize(&mut self) {
        let half = BigUint::from(1u64 << (STATE_BITS - 1));
        let quarter = BigUint::from(1u64 << (STATE_BITS - 2));
        loop {
            let (rel_lo, rel_hi) = (&self.lo - &self.window, &self.hi - &self.window);
            if rel_hi < half {
            } else if rel_lo >= half {
                self.window += &half;
            } else if rel_lo >= quarter && rel_hi < &quarter * 3u32 {
                self.window += &quarter;
            } else {
                break;
            }
            // Doubling the resolution leaves the represented real interval
            // unchanged.
            self.lo <<= 1;
            self.hi = (&self.hi << 1) + 1u32;
            self.window <<= 1;
            self.bits += 1;
        }
    }
}

/// First `n` bits of the payload as an integer; bits past the end are zero.
fn prefix(bytes: &[u8], bit_len: u64, n: u64) -> BigUint {
    let mut v = BigUint::from(0u32);
    for i in 0..n {
        let bit = i < bit_len && bytes[(i / 8) as usize] & (0x80 >> (i % 8)) != 0;
        v = (v << 1) + bit as u32;
    }
    v
}

/// Decodes `count` symbols from a raw arithmetic-coded bit string.
pub fn reference_decode(bytes: &[u8], bit_len: u64, count: usize, alphabet: usize) -> Vec<u32> {
    let mut model = RefModel::new(alphabet);
    let mut iv = Interval::new();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let total = model.total();
        let mut found = None;
        for s in 0..alphabet {
            let mut cand = iv.clone();
            cand.narrow(model.cum(s), total);
            let v = prefix(bytes, bit_len, cand.bits);
            if cand.lo <= v && v <= cand.hi {
                assert!(found.is_none(), "two candidates contain the code value");
                found = Some((s, cand));
            }
        }
        let (s, next) = found.expect("some candidate contains the code value");
        out.push(s as u32);
        iv = next;
        model.update(s);
    }
    out
}

/// Every sequence over `alphabet` symbols of length `n`, in lexicographic order.
pub fn all_sequences(alphabet: u32, n: usize) -> impl Iterator<Item = Vec<u32>> {
    (0..(alphabet as u64).pow(n as u32)).map(move |mut code| {
        let mut s = vec![0; n];
        for v in s.iter_mut().rev() {
            *v = (code % alphabet as u64) as u32;
            code /= alphabet as u64;
        }
        s
    })
}

/// Encodes `s`, checks both decoders recover it and returns the code
/// (bit length then bytes).
pub fn check_against_reference(s: &[u32], alphabet: usize) -> Vec<u8> {
    let bits = ac_encode(s, alphabet).unwrap();
    let len = bits.bit_len();
    let bytes = bits.into_bytes();
    assert_eq!(ac_decode(&bytes, len, s.len(), alphabet).unwrap(), s);
    assert_eq!(reference_decode(&bytes, len, s.len(), alphabet), s);
    let mut key = len.to_le_bytes().to_vec();
    key.extend(bytes);
    key
}

/// Checks every sequence of length `<= max_len` by walking the tree of
/// prefixes, so each prefix is narrowed once. Returns the number of
/// sequences checked.
///
/// At every node the exact sub-intervals of the symbols are checked to tile
/// the parent interval with no gaps or overlaps. With that, the reference
/// decoder recovers a sequence exactly when its code value lies inside the
/// sequence's own exact interval, which is the one test made per sequence.
pub fn exhaustive_check(alphabet: usize, max_len: usize) -> u64 {
    struct Node {
        enc: Encoder,
        model: AdaptiveModel,
        reference: RefModel,
        iv: Interval,
        seq: Vec<u32>,
    }

    fn visit(node: Node, alphabet: usize, max_len: usize) -> u64 {
        let bits = node.enc.clone().finish();
        let len = bits.bit_len();
        let bytes = bits.into_bytes();
        assert_eq!(ac_decode(&bytes, len, node.seq.len(), alphabet).unwrap(), node.seq);
        let v = prefix(&bytes, len, node.iv.bits);
        assert!(node.iv.lo <= v && v <= node.iv.hi, "{:?} escapes its interval", node.seq);
        if node.seq.len() == max_len {
            return 1;
        }

        let total = node.reference.total();
        let children: Vec<Interval> = (0..alphabet)
            .map(|s| {
                let mut c = node.iv.clone();
                c.split(node.reference.cum(s), total);
                c
            })
            .collect();
        assert_eq!(children[0].lo, node.iv.lo);
        assert_eq!(children[alphabet - 1].hi, node.iv.hi);
        for w in children.windows(2) {
            assert!(w[0].lo <= w[0].hi && w[0].hi.clone() + 1u32 == w[1].lo, "gap or overlap after {:?}", node.seq);
        }

        let mut count = 1;
        for (s, mut iv) in children.into_iter().enumerate() {
            iv.renormalize();
            let (mut enc, mut model, mut reference) = (node.enc.clone(), node.model.clone(), node.reference.clone());
            enc.encode(&mut model, s);
            reference.update(s);
            let mut seq = node.seq.clone();
            seq.push(s as u32);
            count += visit(Node { enc, model, reference, iv, seq }, alphabet, max_len);
        }
        count
    }

    let root = Node {
        enc: Encoder::default(),
        model: AdaptiveModel::new(alphabet),
        reference: RefModel::new(alphabet),
        iv: Interval::new(),
        seq: Vec::new(),
    };
    visit(root, alphabet, max_len)
}
