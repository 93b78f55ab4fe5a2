//! Analytic traffic of every protocol, per party, for `n` elements.
//!
//! These are closed-form counts derived from the message pattern of each
//! protocol, independent of the implementation's bookkeeping; tests and the
//! acceptance suite compare them with measured [`TrafficStats`].

use crate::transport::{PartyId, PhaseStats, TrafficStats};

/// Traffic of all three parties, indexed by party.
pub type Cost = [PhaseStats; 3];

fn ps(messages: u64, words: u64, rounds: u64, w: u64) -> PhaseStats {
    PhaseStats {
        messages,
        bytes: words * w,
        rounds,
    }
}

fn words(ring_bits: u32) -> u64 {
    (ring_bits / 8) as u64
}

pub fn zero() -> Cost {
    [PhaseStats::default(); 3]
}

pub fn sum(a: &Cost, b: &Cost) -> Cost {
    let mut out = *a;
    for (o, b) in out.iter_mut().zip(b) {
        o.accumulate(b);
    }
    out
}

/// Multiplication or a linear layer with `n` outputs: one reshare.
pub fn reshare(ring_bits: u32, n: usize) -> Cost {
    let w = words(ring_bits);
    [ps(1, n as u64, 1, w); 3]
}

/// Input dealt by `owner`: the third component goes to both neighbours.
pub fn share_input(ring_bits: u32, owner: PartyId, n: usize) -> Cost {
    let mut c = [ps(0, 0, 1, 0); 3];
    c[owner.index()] = ps(2, 2 * n as u64, 1, words(ring_bits));
    c
}

/// Three-party OT on `n` messages: the sender ships both masked messages
/// to the helper, which forwards one. Two rounds.
pub fn ot3(ring_bits: u32, sender: PartyId, helper: PartyId, n: usize) -> Cost {
    let w = words(ring_bits);
    let mut c = [ps(0, 0, 2, w); 3];
    c[sender.index()] = ps(1, 2 * n as u64, 2, w);
    c[helper.index()] = ps(1, n as u64, 2, w);
    c
}

/// Truncation: `P2` deals `(r, r >> f)` as one message pair, then `x + r`
/// is opened between `P0` and `P1`. Two rounds.
pub fn truncate(ring_bits: u32, n: usize) -> Cost {
    let (w, n) = (words(ring_bits), n as u64);
    [ps(1, n, 2, w), ps(1, n, 2, w), ps(2, 4 * n, 2, w)]
}

/// Bit-to-arithmetic conversion (and hence Sign given the MSB): two OTs
/// sent by `P1` side by side. Two rounds.
pub fn b2a(ring_bits: u32, n: usize) -> Cost {
    let (w, n) = (words(ring_bits), n as u64);
    [ps(1, n, 2, w), ps(2, 4 * n, 2, w), ps(1, n, 2, w)]
}

/// MSB extraction. Four rounds.
pub fn msb(ring_bits: u32, n: usize) -> Cost {
    let (w, n) = (words(ring_bits), n as u64);
    // P0: OT forward, two reshares, open.   P1: both OT offers, two
    // reshares, open.   P2: mask deal to two parties, OT forward, two reshares.
    [ps(4, 4 * n, 4, w), ps(5, 7 * n, 4, w), ps(5, 5 * n, 4, w)]
}

/// Sign of a shared value: MSB then conversion. Six rounds.
pub fn sign(ring_bits: u32, n: usize) -> Cost {
    sum(&msb(ring_bits, n), &b2a(ring_bits, n))
}

/// ReLU given the MSB: two sequential OTs and a reshare. Five rounds.
pub fn relu_after_msb(ring_bits: u32, n: usize) -> Cost {
    let a = ot3(ring_bits, PartyId::P1, PartyId::P0, n);
    let b = ot3(ring_bits, PartyId::P0, PartyId::P2, n);
    sum(&sum(&a, &b), &reshare(ring_bits, n))
}

/// ReLU of a shared value, including its MSB. Nine rounds.
pub fn relu(ring_bits: u32, n: usize) -> Cost {
    sum(&msb(ring_bits, n), &relu_after_msb(ring_bits, n))
}

/// Fused Sign-maxpool with `n` pooled outputs. Six rounds.
pub fn sign_maxpool(ring_bits: u32, n: usize) -> Cost {
    sign(ring_bits, n)
}

/// Output revealed to `to` only.
pub fn reveal_to(ring_bits: u32, to: PartyId, n: usize) -> Cost {
    let mut c = [ps(0, 0, 1, 0); 3];
    c[to.next().index()] = ps(1, n as u64, 1, words(ring_bits));
    c
}

/// Output opened to everyone.
pub fn open(ring_bits: u32, n: usize) -> Cost {
    reshare(ring_bits, n)
}

/// Measured totals in the same layout.
pub fn measured(stats: &[TrafficStats; 3]) -> Cost {
    [0, 1, 2].map(|i| stats[i].total)
}

/// Measured traffic for one phase label.
pub fn measured_phase(stats: &[TrafficStats; 3], phase: &str) -> Cost {
    [0, 1, 2].map(|i| stats[i].phases.get(phase).copied().unwrap_or_default())
}
