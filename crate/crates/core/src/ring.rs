//! Arithmetic over `Z_{2^l}` and fixed-point encoding.
//!
//! Ring elements are carried as `u64` words that are always reduced modulo
//! `2^l`. Every operation goes through a [`Ring`] so the modulus is never
//! widened by accident.

use serde::{Deserialize, Serialize};

use crate::error::RingError;

/// A raw ring element. Always `< 2^l` for the ring it was produced by.
pub type RingElem = u64;

/// The ring `Z_{2^l}` for `l` in `8..=64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ring {
    bits: u32,
}

impl Ring {
    pub const DEFAULT_BITS: u32 = 32;

    /// Only whole-byte widths are supported so that wire encoding is exact.
    pub fn new(bits: u32) -> Result<Self, RingError> {
        if !(8..=64).contains(&bits) || bits % 8 != 0 {
            return Err(RingError::UnsupportedWidth(bits));
        }
        Ok(Self { bits })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn bytes_per_elem(&self) -> usize {
        (self.bits / 8) as usize
    }

    #[inline]
    pub fn mask(&self) -> u64 {
        if self.bits == 64 {
            u64::MAX
        } else {
            (1u64 << self.bits) - 1
        }
    }

    #[inline]
    pub fn reduce(&self, v: u64) -> RingElem {
        v & self.mask()
    }

    #[inline]
    pub fn add(&self, a: RingElem, b: RingElem) -> RingElem {
        self.reduce(a.wrapping_add(b))
    }

    #[inline]
    pub fn sub(&self, a: RingElem, b: RingElem) -> RingElem {
        self.reduce(a.wrapping_sub(b))
    }

    #[inline]
    pub fn mul(&self, a: RingElem, b: RingElem) -> RingElem {
        self.reduce(a.wrapping_mul(b))
    }

    #[inline]
    pub fn neg(&self, a: RingElem) -> RingElem {
        self.reduce(a.wrapping_neg())
    }

    /// Bit `l-1`; 1 iff the signed interpretation is negative.
    #[inline]
    pub fn msb(&self, a: RingElem) -> u8 {
        ((a >> (self.bits - 1)) & 1) as u8
    }

    /// Two's-complement view of `a` as a signed integer.
    #[inline]
    pub fn to_signed(&self, a: RingElem) -> i64 {
        let shift = 64 - self.bits;
        ((a << shift) as i64) >> shift
    }

    #[inline]
    pub fn from_signed(&self, v: i64) -> RingElem {
        self.reduce(v as u64)
    }

    /// Arithmetic (sign-preserving) right shift of the signed value.
    #[inline]
    pub fn shr_signed(&self, a: RingElem, k: u32) -> RingElem {
        self.from_signed(self.to_signed(a) >> k)
    }

    /// `2^k` as a ring element (`k < l`).
    #[inline]
    pub fn pow2(&self, k: u32) -> RingElem {
        self.reduce(1u64 << k)
    }

    pub fn encode_words(&self, words: &[RingElem]) -> Vec<u8> {
        let n = self.bytes_per_elem();
        let mut out = Vec::with_capacity(words.len() * n);
        for w in words {
            out.extend_from_slice(&w.to_le_bytes()[..n]);
        }
        out
    }

    pub fn decode_words(&self, bytes: &[u8]) -> Result<Vec<RingElem>, RingError> {
        let n = self.bytes_per_elem();
        if bytes.len() % n != 0 {
            return Err(RingError::BadWordBuffer {
                len: bytes.len(),
                width: n,
            });
        }
        Ok(bytes
            .chunks_exact(n)
            .map(|c| {
                let mut buf = [0u8; 8];
                buf[..n].copy_from_slice(c);
                u64::from_le_bytes(buf)
            })
            .collect())
    }
}

impl Default for Ring {
    fn default() -> Self {
        Self {
            bits: Self::DEFAULT_BITS,
        }
    }
}

/// Fixed-point codec: reals are scaled by `2^frac_bits` and rounded half away
/// from zero into the ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointCodec {
    ring: Ring,
    frac_bits: u32,
}

impl FixedPointCodec {
    pub const DEFAULT_FRAC_BITS: u32 = 13;

    pub fn new(ring: Ring, frac_bits: u32) -> Result<Self, RingError> {
        if frac_bits + 1 >= ring.bits() {
            return Err(RingError::FracBitsTooLarge {
                frac_bits,
                ring_bits: ring.bits(),
            });
        }
        Ok(Self { ring, frac_bits })
    }

    pub fn ring(&self) -> Ring {
        self.ring
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// One unit in the last place, `2^-f`.
    pub fn ulp(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    /// Largest magnitude accepted by [`encode`](Self::encode): `2^(l-f-1)`.
    pub fn max_abs(&self) -> f64 {
        ((self.ring.bits() - self.frac_bits - 1) as f64).exp2()
    }

    pub fn encode(&self, x: f64) -> Result<RingElem, RingError> {
        self.encode_at(x, self.frac_bits)
    }

    /// Encode at an explicit scale `2^scale` (used for biases stored at `2^{2f}`).
    pub fn encode_at(&self, x: f64, scale: u32) -> Result<RingElem, RingError> {
        let limit = ((self.ring.bits() - 1) as f64 - scale as f64).exp2();
        if !x.is_finite() || x.abs() >= limit {
            return Err(RingError::Overflow { value: x, limit });
        }
        // f64::round is half-away-from-zero.
        let scaled = (x * (scale as f64).exp2()).round() as i64;
        Ok(self.ring.from_signed(scaled))
    }

    pub fn decode(&self, e: RingElem) -> f64 {
        self.decode_at(e, self.frac_bits)
    }

    pub fn decode_at(&self, e: RingElem, scale: u32) -> f64 {
        self.ring.to_signed(e) as f64 / (scale as f64).exp2()
    }
}

impl Default for FixedPointCodec {
    fn default() -> Self {
        Self {
            ring: Ring::default(),
            frac_bits: Self::DEFAULT_FRAC_BITS,
        }
    }
}
