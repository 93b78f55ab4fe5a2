//! Interactive share protocols: resharing, multiplication, input dealing,
//! opening. Every function here is called by all three parties in the
//! same order with matching arguments.

use super::{and_local, mul_local, BitShare, RandKind, RssShare};
use crate::error::Result;
use crate::party::Party;
use crate::ring::RingElem;
use crate::tensor::{BitTensor, Tensor};
use crate::transport::{tags, PartyId};

/// Turns a 3-out-of-3 additive component into a replicated share: `P_i`
/// masks `z_i` with a zero sharing and sends it to `P_{i-1}`. One round.
pub fn reshare(p: &mut Party, z: Vec<RingElem>, shape: &[usize]) -> Result<RssShare> {
    let pending = reshare_send(p, z, shape)?;
    let out = pending.recv(p)?;
    p.net.round();
    Ok(out)
}

/// A reshare whose message has been sent but not yet received; lets a
/// caller overlap it with other traffic in the same round.
pub struct PendingReshare {
    z: Vec<RingElem>,
    shape: Vec<usize>,
}

pub fn reshare_send(p: &mut Party, mut z: Vec<RingElem>, shape: &[usize]) -> Result<PendingReshare> {
    let ring = p.ring();
    let a = p.ctx.zero_share(ring, z.len());
    for (v, m) in z.iter_mut().zip(&a) {
        *v = ring.add(*v, *m);
    }
    let me = p.id();
    p.net.send_words(me.prev(), tags::RESHARE, &z)?;
    Ok(PendingReshare { z, shape: shape.to_vec() })
}

impl PendingReshare {
    /// Receives the neighbour's component. Does not close the round.
    pub fn recv(self, p: &mut Party) -> Result<RssShare> {
        let me = p.id();
        let next = p.net.recv_words(me.next(), tags::RESHARE, self.z.len())?;
        Ok(RssShare::new(
            me,
            Tensor::new(self.shape.clone(), self.z)?,
            Tensor::new(self.shape, next)?,
        )?)
    }
}

pub fn reshare_bits(p: &mut Party, mut z: Vec<u8>, shape: &[usize]) -> Result<BitShare> {
    let a = p.ctx.zero_share_bits(z.len());
    for (v, m) in z.iter_mut().zip(&a) {
        *v ^= m;
    }
    let me = p.id();
    p.net.send_bits(me.prev(), tags::BIT_RESHARE, &z)?;
    let next = p.net.recv_bits(me.next(), tags::BIT_RESHARE, z.len())?;
    p.net.round();
    Ok(BitShare::new(
        me,
        BitTensor::new(shape.to_vec(), z)?,
        BitTensor::new(shape.to_vec(), next)?,
    )?)
}

/// Element-wise product. One round, one word per element per party.
pub fn mul(p: &mut Party, x: &RssShare, y: &RssShare) -> Result<RssShare> {
    let z = mul_local(p.ring(), x, y)?;
    reshare(p, z, x.shape())
}

/// Element-wise AND. One round, one bit per element per party.
pub fn and_bits(p: &mut Party, x: &BitShare, y: &BitShare) -> Result<BitShare> {
    let z = and_local(x, y)?;
    reshare_bits(p, z, x.shape())
}

/// Shares a tensor held in the clear by `owner`. The owner's two
/// components come from the keys it shares with each neighbour; the third
/// component is sent to both neighbours. One round.
pub fn share_input(p: &mut Party, owner: PartyId, x: Option<&Tensor>, shape: &[usize]) -> Result<RssShare> {
    let ring = p.ring();
    let n: usize = shape.iter().product();
    let me = p.id();
    let (o, o1, o2) = (owner.index(), owner.next().index(), owner.offset(2).index());
    let draw = |p: &mut Party, key: usize| -> Vec<RingElem> {
        p.ctx.draw_key(key, RandKind::Input, n).into_iter().map(|v| ring.reduce(v)).collect()
    };
    let tensor = |v: Vec<RingElem>| Tensor::new(shape.to_vec(), v);
    let share = if me == owner {
        let x = x.ok_or_else(|| crate::error::ProtocolError::Precondition(format!("{me} owns the input but has none")))?;
        if x.shape() != shape {
            return Err(crate::error::ShapeError::Mismatch {
                left: x.shape().to_vec(),
                right: shape.to_vec(),
            }
            .into());
        }
        let c0 = draw(p, o);
        let c1 = draw(p, o1);
        let c2: Vec<RingElem> = x
            .data()
            .iter()
            .zip(c0.iter().zip(&c1))
            .map(|(&v, (&a, &b))| ring.sub(ring.sub(v, a), b))
            .collect();
        p.net.send_words(owner.next(), tags::INPUT, &c2)?;
        p.net.send_words(owner.offset(2), tags::INPUT, &c2)?;
        RssShare::new(me, tensor(c0)?, tensor(c1)?)?
    } else if me.index() == o1 {
        let c1 = draw(p, o1);
        let c2 = p.net.recv_words(owner, tags::INPUT, n)?;
        RssShare::new(me, tensor(c1)?, tensor(c2)?)?
    } else {
        debug_assert_eq!(me.index(), o2);
        let c0 = draw(p, o);
        let c2 = p.net.recv_words(owner, tags::INPUT, n)?;
        RssShare::new(me, tensor(c2)?, tensor(c0)?)?
    };
    p.net.round();
    Ok(share)
}

/// Values sampled in the clear by the helper `P_2` and dealt as a
/// replicated sharing: `x_2` and `x_0` come from the keys `P_2` shares
/// with `P_1` and `P_0`, and `x_1` is sent to both. Split into a send and
/// a receive half so the deal can ride along with other traffic.
pub struct HelperDeal {
    shape: Vec<usize>,
    kind: RandKind,
    tag: u16,
    mine: Option<RssShare>,
}

/// Send half. `values` must be `Some` exactly at `P_2`.
pub fn helper_deal_send(
    p: &mut Party,
    kind: RandKind,
    tag: u16,
    values: Option<&[RingElem]>,
    shape: &[usize],
) -> Result<HelperDeal> {
    let ring = p.ring();
    let n: usize = shape.iter().product();
    let mine = if p.id() == PartyId::P2 {
        let v = values.ok_or_else(|| crate::error::ProtocolError::Precondition("helper deal without values".into()))?;
        let c2: Vec<RingElem> = p.ctx.draw_key(2, kind, n).into_iter().map(|x| ring.reduce(x)).collect();
        let c0: Vec<RingElem> = p.ctx.draw_key(0, kind, n).into_iter().map(|x| ring.reduce(x)).collect();
        let c1: Vec<RingElem> = (0..n).map(|k| ring.sub(ring.sub(v[k], c0[k]), c2[k])).collect();
        p.net.send_words(PartyId::P0, tag, &c1)?;
        p.net.send_words(PartyId::P1, tag, &c1)?;
        Some(RssShare::new(
            PartyId::P2,
            Tensor::new(shape.to_vec(), c2)?,
            Tensor::new(shape.to_vec(), c0)?,
        )?)
    } else {
        None
    };
    Ok(HelperDeal {
        shape: shape.to_vec(),
        kind,
        tag,
        mine,
    })
}

impl HelperDeal {
    /// Receive half. Does not close the round.
    pub fn recv(self, p: &mut Party) -> Result<RssShare> {
        if let Some(s) = self.mine {
            return Ok(s);
        }
        let ring = p.ring();
        let n: usize = self.shape.iter().product();
        let me = p.id();
        let key = if me == PartyId::P0 { 0 } else { 2 };
        let own: Vec<RingElem> = p.ctx.draw_key(key, self.kind, n).into_iter().map(|x| ring.reduce(x)).collect();
        let c1 = p.net.recv_words(PartyId::P2, self.tag, n)?;
        let (own, c1) = (Tensor::new(self.shape.clone(), own)?, Tensor::new(self.shape, c1)?);
        Ok(if me == PartyId::P0 {
            RssShare::new(me, own, c1)?
        } else {
            RssShare::new(me, c1, own)?
        })
    }
}

/// Opens `x` to every party. One round, one word per element per party.
pub fn open(p: &mut Party, x: &RssShare) -> Result<Tensor> {
    let ring = p.ring();
    let me = p.id();
    p.net.send_words(me.next(), tags::OPEN, x.first().data())?;
    let missing = p.net.recv_words(me.prev(), tags::OPEN, x.len())?;
    p.net.round();
    let missing = Tensor::new(x.shape().to_vec(), missing)?;
    Ok(x.first().add(ring, x.second())?.add(ring, &missing)?)
}

/// Opens `x` to `a` and `a.next()` only; the third party learns nothing.
/// One round.
pub fn open_between(p: &mut Party, x: &RssShare, a: PartyId, tag: u16) -> Result<Option<Tensor>> {
    let ring = p.ring();
    let me = p.id();
    let b = a.next();
    let missing = if me == a {
        p.net.send_words(b, tag, x.first().data())?;
        Some(p.net.recv_words(b, tag, x.len())?)
    } else if me == b {
        p.net.send_words(a, tag, x.second().data())?;
        Some(p.net.recv_words(a, tag, x.len())?)
    } else {
        None
    };
    p.net.round();
    match missing {
        Some(m) => {
            let m = Tensor::new(x.shape().to_vec(), m)?;
            Ok(Some(x.first().add(ring, x.second())?.add(ring, &m)?))
        }
        None => Ok(None),
    }
}

/// Reveals `x` to `to` alone: `P_{to+1}` sends the component `to` lacks.
/// One round.
pub fn reveal_to(p: &mut Party, x: &RssShare, to: PartyId) -> Result<Option<Tensor>> {
    let ring = p.ring();
    let me = p.id();
    let out = if me == to.next() {
        p.net.send_words(to, tags::REVEAL, x.second().data())?;
        None
    } else if me == to {
        let m = p.net.recv_words(to.next(), tags::REVEAL, x.len())?;
        let m = Tensor::new(x.shape().to_vec(), m)?;
        Some(x.first().add(ring, x.second())?.add(ring, &m)?)
    } else {
        None
    };
    p.net.round();
    Ok(out)
}

pub fn open_bits(p: &mut Party, x: &BitShare) -> Result<BitTensor> {
    let me = p.id();
    p.net.send_bits(me.next(), tags::OPEN, x.first().data())?;
    let missing = p.net.recv_bits(me.prev(), tags::OPEN, x.len())?;
    p.net.round();
    let missing = BitTensor::new(x.shape().to_vec(), missing)?;
    Ok(x.first().xor(x.second())?.xor(&missing)?)
}
