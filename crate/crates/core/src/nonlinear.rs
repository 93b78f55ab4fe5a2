//! Non-linear protocols: bit-to-arithmetic conversion, MSB extraction,
//! Sign, ReLU and the Sign-fused max-pool.
//!
//! Round costs (all parties advance together):
//!
//! | protocol            | rounds |
//! |---------------------|--------|
//! | `b2a_convert`       | 2      |
//! | `msb_extract`       | 4      |
//! | `secure_sign`       | 2      |
//! | `secure_relu`       | 5      |
//! | `fused_sign_maxpool`| 6      |

use rand::Rng;

use crate::error::{ProtocolError, Result, ShapeError};
use crate::ot::{OtInput, OtRoles, OtSession};
use crate::party::Party;
use crate::ring::RingElem;
use crate::sharing::ops::{helper_deal_send, mul, open_between, reshare, reshare_send};
use crate::sharing::{mul_local, BitShare, RandKind, RssShare};
use crate::tensor::{BitTensor, Tensor};
use crate::transport::{tags, PartyId};

/// Default bit-width of the multiplicative mask in MSB extraction.
pub const DEFAULT_MSB_MASK_BITS: u32 = 8;

/// Largest magnitude `|x|` that MSB extraction handles correctly in an
/// `l`-bit ring with a `d`-bit mask: the masked product `(2x+1)·r` must
/// stay below `2^(l-1)`.
pub fn msb_budget(ring_bits: u32, mask_bits: u32) -> u64 {
    1u64 << (ring_bits - 2 - mask_bits)
}

/// Bit-to-arithmetic conversion in progress.
///
/// The model owner `P_1` knows `x_1^B, x_2^B` and draws arithmetic `x_1`
/// (shared with `P_0`) and `x_2` (shared with `P_2`). It offers
/// `m_i = (i ⊕ x_1^B ⊕ x_2^B) − x_1 − x_2` in two OTs run side by side, one
/// delivering `m_{x_0^B}` to `P_0` (helped by `P_2`) and one to `P_2`
/// (helped by `P_0`), so both holders of `x_0` learn it without an extra
/// resharing round.
pub struct B2aSession {
    shape: Vec<usize>,
    /// The components this party drew itself: `x_1` at P0, `(x_1, x_2)` at
    /// P1, `x_2` at P2.
    drawn: Vec<Vec<RingElem>>,
    to_p0: OtSession,
    to_p2: OtSession,
}

const TO_P0: OtRoles = OtRoles {
    sender: PartyId::P1,
    receiver: PartyId::P0,
    helper: PartyId::P2,
};
const TO_P2: OtRoles = OtRoles {
    sender: PartyId::P1,
    receiver: PartyId::P2,
    helper: PartyId::P0,
};

impl B2aSession {
    /// Round 1 sends.
    pub fn start(p: &mut Party, x: &BitShare) -> Result<Self> {
        let ring = p.ring();
        let n = x.len();
        let me = p.id();
        let draw = |p: &mut Party, key: usize| -> Vec<RingElem> {
            p.ctx.draw_key(key, RandKind::B2aMask, n).into_iter().map(|v| ring.reduce(v)).collect()
        };
        let (drawn, to_p0, to_p2) = match me.index() {
            1 => {
                let a1 = draw(p, 1);
                let a2 = draw(p, 2);
                let (b1, b2) = (x.first().data(), x.second().data());
                let m: [Vec<RingElem>; 2] = [0u8, 1].map(|i| {
                    (0..n)
                        .map(|k| ring.sub(ring.sub((i ^ b1[k] ^ b2[k]) as RingElem, a1[k]), a2[k]))
                        .collect()
                });
                let inp = OtInput::Sender { m0: &m[0], m1: &m[1] };
                let s0 = OtSession::start(p, TO_P0, inp)?;
                let s2 = OtSession::start(p, TO_P2, inp)?;
                (vec![a1, a2], s0, s2)
            }
            0 => {
                let a1 = draw(p, 1);
                let c = x.first().data();
                let s0 = OtSession::start(p, TO_P0, OtInput::Receiver { choice: c })?;
                let s2 = OtSession::start(p, TO_P2, OtInput::Helper { choice: c })?;
                (vec![a1], s0, s2)
            }
            _ => {
                let a2 = draw(p, 2);
                let c = x.second().data();
                let s0 = OtSession::start(p, TO_P0, OtInput::Helper { choice: c })?;
                let s2 = OtSession::start(p, TO_P2, OtInput::Receiver { choice: c })?;
                (vec![a2], s0, s2)
            }
        };
        Ok(Self {
            shape: x.shape().to_vec(),
            drawn,
            to_p0,
            to_p2,
        })
    }

    /// Round 1 receives.
    pub fn leg1_recv(&mut self, p: &mut Party) -> Result<()> {
        self.to_p0.leg1_recv(p)?;
        self.to_p2.leg1_recv(p)
    }

    /// Round 2 sends.
    pub fn leg2_send(&mut self, p: &mut Party) -> Result<()> {
        self.to_p0.leg2_send(p)?;
        self.to_p2.leg2_send(p)
    }

    /// Round 2 receives; returns the arithmetic sharing.
    pub fn finish(self, p: &mut Party) -> Result<RssShare> {
        let me = p.id();
        let got0 = self.to_p0.finish(p)?;
        let got2 = self.to_p2.finish(p)?;
        let t = |v: Vec<RingElem>| Tensor::new(self.shape.clone(), v);
        let mut drawn = self.drawn.into_iter();
        let first = drawn.next().expect("drawn component");
        Ok(match me.index() {
            0 => RssShare::new(me, t(got0.expect("P0 receives"))?, t(first)?)?,
            1 => RssShare::new(me, t(first)?, t(drawn.next().expect("x_2"))?)?,
            _ => RssShare::new(me, t(first)?, t(got2.expect("P2 receives"))?)?,
        })
    }
}

/// Converts a shared bit into a sharing of 0 or 1 in `Z_{2^l}`. Two rounds.
pub fn b2a_convert(p: &mut Party, x: &BitShare) -> Result<RssShare> {
    let mut s = B2aSession::start(p, x)?;
    s.leg1_recv(p)?;
    p.net.round();
    s.leg2_send(p)?;
    let out = s.finish(p)?;
    p.net.round();
    Ok(out)
}

/// Shares of the most significant bit of `x`.
///
/// With a random shared bit `β` and `r` uniform on `[1, 2^d]` sampled by
/// `P_2`, the parties compute `u = (2x+1)·r·(1−2β)` and open it to `P_0` and
/// `P_1`. Since `2x+1` is never zero and has the sign of `x`,
/// `msb(x) = msb(u) ⊕ β` as long as `|x| < 2^(l−2−d)`. The closed range
/// makes `r mod 2^d`, and so the low `d` bits of `u`, exactly uniform.
/// Four rounds:
///
/// 1. OT leg 1 of `b2a(β)`; `P_2` deals `r`.
/// 2. OT leg 2 of `b2a(β)`; multiply `(2x+1)·r`.
/// 3. multiply by `1 − 2β`.
/// 4. open `u` to `P_0`, `P_1`.
pub fn msb_extract(p: &mut Party, x: &RssShare, mask_bits: u32) -> Result<BitShare> {
    Ok(msb_extract_view(p, x, mask_bits)?.0)
}

/// [`msb_extract`], also returning the opened `u` at the two parties that
/// see it.
pub fn msb_extract_view(p: &mut Party, x: &RssShare, mask_bits: u32) -> Result<(BitShare, Option<Tensor>)> {
    let ring = p.ring();
    if mask_bits == 0 || mask_bits + 2 >= ring.bits() {
        return Err(ProtocolError::Precondition(format!(
            "mask width {mask_bits} unusable in a {}-bit ring",
            ring.bits()
        ))
        .into());
    }
    let shape = x.shape().to_vec();
    let n = x.len();
    let me = p.id();

    let beta = p.ctx.rand_bits(&shape);
    let r_vals: Option<Vec<RingElem>> = (me == PartyId::P2).then(|| (0..n).map(|_| p.rng.gen_range(1..=1u64 << mask_bits)).collect());

    // Round 1.
    let mut b2a = B2aSession::start(p, &beta)?;
    let deal = helper_deal_send(p, RandKind::Msb, tags::MSB_DEAL, r_vals.as_deref(), &shape)?;
    b2a.leg1_recv(p)?;
    let r = deal.recv(p)?;
    p.net.round();

    // Round 2.
    let x2 = x.scale(ring, 2).add_const(ring, &Tensor::filled(&shape, 1))?;
    b2a.leg2_send(p)?;
    let pending = reshare_send(p, mul_local(ring, &x2, &r)?, &shape)?;
    let beta_a = b2a.finish(p)?;
    let xr = pending.recv(p)?;
    p.net.round();

    // Round 3.
    let sign = beta_a.scale(ring, ring.neg(2)).add_const(ring, &Tensor::filled(&shape, 1))?;
    let u = mul(p, &xr, &sign)?;

    // Round 4.
    let opened = open_between(p, &u, PartyId::P0, tags::MSB_OPEN)?;
    let flip = match &opened {
        Some(u) => BitTensor::new(shape.clone(), u.data().iter().map(|&v| ring.msb(v)).collect())?,
        None => BitTensor::zeros(&shape),
    };
    // β' is known to P_0 and P_1, the two holders of component 1.
    Ok((beta.xor_const_at(1, &flip)?, opened))
}

/// `1 ⊕ msb` as 0/1 in the ring: 1 for non-negative inputs. Two rounds.
pub fn secure_sign(p: &mut Party, msb: &BitShare) -> Result<RssShare> {
    b2a_convert(p, &msb.not())
}

/// `max(x, 0)` from `x` and its MSB. Two OTs in sequence, then a reshare;
/// five rounds.
///
/// The first OT (sender `P_1`, receiver `P_2`, helper `P_0`, choice
/// `msb_0`) delivers `(1⊕msb)·(x_1+x_2) − α`; the second (sender `P_0`,
/// receiver `P_1`, helper `P_2`, choice `msb_2`) delivers
/// `(1⊕msb)·x_0 − γ`. `α` and `γ` are private to the senders. The
/// additive pieces are then `P_0: γ`, `P_1: α + m⁽²⁾`, `P_2: m⁽¹⁾`.
pub fn secure_relu(p: &mut Party, x: &RssShare, msb: &BitShare) -> Result<RssShare> {
    let ring = p.ring();
    if x.shape() != msb.shape() {
        return Err(ShapeError::Mismatch {
            left: x.shape().to_vec(),
            right: msb.shape().to_vec(),
        }
        .into());
    }
    let n = x.len();
    let me = p.id();
    let ot1 = OtRoles::new(PartyId::P1, PartyId::P2, PartyId::P0);
    let ot2 = OtRoles::new(PartyId::P0, PartyId::P1, PartyId::P2);

    let mut mask = vec![0; n];
    let first = match me.index() {
        1 => {
            mask = (0..n).map(|_| ring.reduce(p.rng.gen())).collect();
            let (b1, b2) = (msb.first().data(), msb.second().data());
            let xs = x.first().add(ring, x.second())?;
            let m = offered(ring, n, |k| 1 ^ b1[k] ^ b2[k], xs.data(), &mask);
            crate::ot::ot3_transfer(p, ot1, OtInput::Sender { m0: &m[0], m1: &m[1] })?
        }
        0 => crate::ot::ot3_transfer(p, ot1, OtInput::Helper { choice: msb.first().data() })?,
        _ => crate::ot::ot3_transfer(p, ot1, OtInput::Receiver { choice: msb.second().data() })?,
    };
    let second = match me.index() {
        0 => {
            mask = (0..n).map(|_| ring.reduce(p.rng.gen())).collect();
            let (b0, b1) = (msb.first().data(), msb.second().data());
            let m = offered(ring, n, |k| 1 ^ b0[k] ^ b1[k], x.first().data(), &mask);
            crate::ot::ot3_transfer(p, ot2, OtInput::Sender { m0: &m[0], m1: &m[1] })?
        }
        1 => crate::ot::ot3_transfer(p, ot2, OtInput::Receiver { choice: msb.second().data() })?,
        _ => crate::ot::ot3_transfer(p, ot2, OtInput::Helper { choice: msb.first().data() })?,
    };
    let z: Vec<RingElem> = match me.index() {
        0 => mask,
        1 => {
            let m2 = second.expect("P1 receives the second OT");
            mask.iter().zip(&m2).map(|(&a, &b)| ring.add(a, b)).collect()
        }
        _ => first.expect("P2 receives the first OT"),
    };
    reshare(p, z, x.shape())
}

/// `m_i = (i ⊕ bit(k)) · v_k − mask_k` for `i ∈ {0, 1}`.
fn offered(
    ring: crate::ring::Ring,
    n: usize,
    bit: impl Fn(usize) -> u8,
    v: &[RingElem],
    mask: &[RingElem],
) -> [Vec<RingElem>; 2] {
    [0u8, 1].map(|i| {
        (0..n)
            .map(|k| {
                let keep = (i ^ bit(k)) & 1;
                ring.sub(if keep == 1 { v[k] } else { 0 }, mask[k])
            })
            .collect()
    })
}

/// Window sums of a `(C, H, W)` tensor, laid out `(C, OH, OW)`.
pub fn window_sum(ring: crate::ring::Ring, x: &Tensor, kernel: usize, stride: usize) -> Result<Tensor, ShapeError> {
    let s = x.shape();
    if s.len() != 3 || kernel == 0 || stride == 0 || s[1] < kernel || s[2] < kernel {
        return Err(ShapeError::Geometry(format!("cannot pool {s:?} with kernel {kernel}, stride {stride}")));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let (oh, ow) = ((h - kernel) / stride + 1, (w - kernel) / stride + 1);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0;
                for dy in 0..kernel {
                    for dx in 0..kernel {
                        acc = ring.add(acc, x.data()[(ch * h + oy * stride + dy) * w + ox * stride + dx]);
                    }
                }
                out.push(acc);
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

/// Max-pool over 0/1 activations: the window maximum is 1 exactly when the
/// window sum minus one is non-negative, so pooling is one local sum and a
/// Sign. Six rounds.
pub fn fused_sign_maxpool(p: &mut Party, x: &RssShare, kernel: usize, stride: usize, mask_bits: u32) -> Result<RssShare> {
    let ring = p.ring();
    let summed = x.map_linear(|t| window_sum(ring, t, kernel, stride))?;
    let shifted = summed.add_const(ring, &Tensor::filled(summed.shape(), ring.neg(1)))?;
    let msb = msb_extract(p, &shifted, mask_bits)?;
    secure_sign(p, &msb)
}
