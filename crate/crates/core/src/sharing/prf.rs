//! Pairwise PRF keys and the correlated randomness built from them.
//!
//! Key `k_j` is held by `P_j` and `P_{j-1}`; party `P_i` therefore holds
//! `(k_i, k_{i+1})`. The PRF is AES-128 in counter mode over the block
//! `kind | counter | block index`. Counters are kept per `(kind, key)` so
//! that a draw on one key never disturbs the stream of another.

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes128;
use sha2::{Digest, Sha256};

use super::{BitShare, RssShare};
use crate::ring::{Ring, RingElem};
use crate::tensor::{BitTensor, Tensor};
use crate::transport::PartyId;

/// Independent randomness streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandKind {
    /// 3-out-of-3 sharings of zero.
    Zero,
    /// 2-out-of-3 sharings of a random value.
    Rss,
    /// Sender/receiver masks inside the three-party OT.
    OtMask,
    /// Arithmetic masks of bit-to-arithmetic conversion.
    B2aMask,
    /// Components of input sharing.
    Input,
    /// Components dealt by the truncation helper.
    Trunc,
    /// Components dealt by the MSB-extraction helper.
    Msb,
}

impl RandKind {
    const COUNT: usize = 7;

    fn index(self) -> usize {
        self as usize
    }
}

/// Setup material for a run. A single master seed stands in for the
/// out-of-band phase that hands each party its two PRF keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SetupSeeds {
    master: [u8; 32],
}

impl SetupSeeds {
    pub fn from_u64(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"cbnn/setup");
        h.update(seed.to_le_bytes());
        Self {
            master: h.finalize().into(),
        }
    }

    fn derive(&self, label: &[u8], index: u8) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.master);
        h.update(label);
        h.update([index]);
        h.finalize().into()
    }

    /// Key `k_j`.
    pub fn prf_key(&self, j: usize) -> [u8; 16] {
        self.derive(b"prf-key", j as u8)[..16].try_into().unwrap()
    }

    /// Seed of a party's private generator.
    pub fn private_seed(&self, party: PartyId) -> [u8; 32] {
        self.derive(b"private", party.index() as u8)
    }

    /// Seed for a trusted dealer used only in tests and local simulation.
    pub fn dealer_seed(&self) -> [u8; 32] {
        self.derive(b"dealer", 0)
    }

    pub fn context_for(&self, party: PartyId) -> RandomnessCtx {
        RandomnessCtx::new(
            party,
            self.prf_key(party.index()),
            self.prf_key(party.next().index()),
        )
    }
}

#[derive(Clone)]
struct Prf(Aes128);

impl Prf {
    fn new(key: [u8; 16]) -> Self {
        Prf(Aes128::new(&GenericArray::from(key)))
    }

    /// `n` 64-bit words of `F(k, kind || counter)`.
    fn words(&self, kind: RandKind, counter: u64, n: usize) -> Vec<u64> {
        let mut out = Vec::with_capacity(n + 1);
        for block_idx in 0..n.div_ceil(2) as u32 {
            let mut block = [0u8; 16];
            block[0] = kind.index() as u8;
            block[4..12].copy_from_slice(&counter.to_le_bytes());
            block[12..16].copy_from_slice(&block_idx.to_le_bytes());
            let mut b = GenericArray::from(block);
            self.0.encrypt_block(&mut b);
            out.push(u64::from_le_bytes(b[..8].try_into().unwrap()));
            out.push(u64::from_le_bytes(b[8..].try_into().unwrap()));
        }
        out.truncate(n);
        out
    }
}

/// Per-party correlated randomness source.
#[derive(Clone)]
pub struct RandomnessCtx {
    party: PartyId,
    /// PRFs keyed by `k_i` and `k_{i+1}`.
    prfs: [Prf; 2],
    counters: [[u64; 3]; RandKind::COUNT],
}

impl RandomnessCtx {
    pub fn new(party: PartyId, key_own: [u8; 16], key_next: [u8; 16]) -> Self {
        Self {
            party,
            prfs: [Prf::new(key_own), Prf::new(key_next)],
            counters: [[0; 3]; RandKind::COUNT],
        }
    }

    pub fn party(&self) -> PartyId {
        self.party
    }

    /// Current counter of `(kind, k_j)`.
    pub fn counter(&self, kind: RandKind, key: usize) -> u64 {
        self.counters[kind.index()][key]
    }

    /// Draws `n` words from key `k_j`; this party must hold it.
    pub fn draw_key(&mut self, key: usize, kind: RandKind, n: usize) -> Vec<u64> {
        let own = self.party.index();
        let slot = if key == own {
            0
        } else if key == (own + 1) % 3 {
            1
        } else {
            panic!("{} does not hold k_{key}", self.party);
        };
        let c = &mut self.counters[kind.index()][key];
        let cnt = *c;
        *c += 1;
        self.prfs[slot].words(kind, cnt, n)
    }

    /// Index of the key shared with `other`.
    pub fn shared_key_with(&self, other: PartyId) -> usize {
        assert_ne!(other, self.party, "no key is shared with oneself");
        if other == self.party.next() {
            other.index()
        } else {
            self.party.index()
        }
    }

    /// Words known to exactly this party and `other`.
    pub fn draw_pair(&mut self, other: PartyId, kind: RandKind, n: usize) -> Vec<u64> {
        let key = self.shared_key_with(other);
        self.draw_key(key, kind, n)
    }

    /// `a_i = F(k_{i+1}) - F(k_i)`; the three parties' outputs sum to zero.
    pub fn zero_share(&mut self, ring: Ring, n: usize) -> Vec<RingElem> {
        let own = self.party.index();
        let a = self.draw_key(own, RandKind::Zero, n);
        let b = self.draw_key((own + 1) % 3, RandKind::Zero, n);
        a.iter().zip(&b).map(|(&x, &y)| ring.sub(ring.reduce(y), ring.reduce(x))).collect()
    }

    /// Zero sharing of a bit vector (XOR of the three outputs is zero).
    pub fn zero_share_bits(&mut self, n: usize) -> Vec<u8> {
        let own = self.party.index();
        let a = self.draw_key(own, RandKind::Zero, n);
        let b = self.draw_key((own + 1) % 3, RandKind::Zero, n);
        a.iter().zip(&b).map(|(&x, &y)| ((x ^ y) & 1) as u8).collect()
    }

    /// `(F(k_i), F(k_{i+1}))`: a replicated sharing of a value nobody knows.
    pub fn rand_rss(&mut self, ring: Ring, shape: &[usize]) -> RssShare {
        let n = shape.iter().product();
        let own = self.party.index();
        let first = self.draw_key(own, RandKind::Rss, n);
        let second = self.draw_key((own + 1) % 3, RandKind::Rss, n);
        let t = |v: Vec<u64>| Tensor::new(shape.to_vec(), v.into_iter().map(|x| ring.reduce(x)).collect()).unwrap();
        RssShare::new(self.party, t(first), t(second)).unwrap()
    }

    /// Replicated sharing of random bits nobody knows.
    pub fn rand_bits(&mut self, shape: &[usize]) -> BitShare {
        let n = shape.iter().product();
        let own = self.party.index();
        let first = self.draw_key(own, RandKind::Rss, n);
        let second = self.draw_key((own + 1) % 3, RandKind::Rss, n);
        let t = |v: Vec<u64>| BitTensor::new(shape.to_vec(), v.into_iter().map(|x| (x & 1) as u8).collect()).unwrap();
        BitShare::new(self.party, t(first), t(second)).unwrap()
    }
}
