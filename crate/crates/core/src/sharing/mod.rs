//! Replicated secret sharing over `Z_{2^l}` and over `Z_2`.
//!
//! A secret `x = x_0 + x_1 + x_2` is held as `(x_i, x_{i+1})` by `P_i`.
//! Everything here is local; the protocols that talk to other parties
//! live in [`ops`].

pub mod ops;
mod prf;

use rand::Rng;

use crate::error::{ShapeError, ShareError};
use crate::ring::{Ring, RingElem};
use crate::tensor::{BitTensor, Tensor};
use crate::transport::PartyId;

pub use prf::{RandKind, RandomnessCtx, SetupSeeds};

/// One party's pair of additive components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RssShare {
    party: PartyId,
    first: Tensor,
    second: Tensor,
}

impl RssShare {
    pub fn new(party: PartyId, first: Tensor, second: Tensor) -> Result<Self, ShapeError> {
        first.check_same_shape(&second)?;
        Ok(Self { party, first, second })
    }

    /// The trivial sharing of zero.
    pub fn zeros(party: PartyId, shape: &[usize]) -> Self {
        Self {
            party,
            first: Tensor::zeros(shape),
            second: Tensor::zeros(shape),
        }
    }

    pub fn party(&self) -> PartyId {
        self.party
    }

    /// Component `x_i`.
    pub fn first(&self) -> &Tensor {
        &self.first
    }

    /// Component `x_{i+1}`.
    pub fn second(&self) -> &Tensor {
        &self.second
    }

    /// Component `x_j`, if this party holds it.
    pub fn component(&self, j: usize) -> Option<&Tensor> {
        if j == self.party.index() {
            Some(&self.first)
        } else if j == self.party.next().index() {
            Some(&self.second)
        } else {
            None
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.first.shape()
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self, ShapeError> {
        Ok(Self {
            party: self.party,
            first: self.first.reshape(shape)?,
            second: self.second.reshape(shape)?,
        })
    }

    pub fn into_parts(self) -> (Tensor, Tensor) {
        (self.first, self.second)
    }

    pub fn add(&self, ring: Ring, other: &RssShare) -> Result<Self, ShapeError> {
        Ok(Self {
            party: self.party,
            first: self.first.add(ring, &other.first)?,
            second: self.second.add(ring, &other.second)?,
        })
    }

    pub fn sub(&self, ring: Ring, other: &RssShare) -> Result<Self, ShapeError> {
        Ok(Self {
            party: self.party,
            first: self.first.sub(ring, &other.first)?,
            second: self.second.sub(ring, &other.second)?,
        })
    }

    pub fn neg(&self, ring: Ring) -> Self {
        Self {
            party: self.party,
            first: self.first.neg(ring),
            second: self.second.neg(ring),
        }
    }

    /// Adds a public constant to component `j`; both holders of `x_j` do it.
    pub fn add_const_at(&self, ring: Ring, j: usize, c: &Tensor) -> Result<Self, ShapeError> {
        self.first.check_same_shape(c)?;
        let mut out = self.clone();
        if j == self.party.index() {
            out.first = out.first.add(ring, c)?;
        } else if j == self.party.next().index() {
            out.second = out.second.add(ring, c)?;
        }
        Ok(out)
    }

    /// Adds a public constant. The global convention puts it on `x_0`, so
    /// `P_0` changes its first component and `P_2` its second.
    pub fn add_const(&self, ring: Ring, c: &Tensor) -> Result<Self, ShapeError> {
        self.add_const_at(ring, 0, c)
    }

    /// Multiplies every component element-wise by a public tensor.
    pub fn mul_public(&self, ring: Ring, c: &Tensor) -> Result<Self, ShapeError> {
        Ok(Self {
            party: self.party,
            first: self.first.mul_elem(ring, c)?,
            second: self.second.mul_elem(ring, c)?,
        })
    }

    pub fn scale(&self, ring: Ring, k: RingElem) -> Self {
        Self {
            party: self.party,
            first: self.first.map(|a| ring.mul(a, k)),
            second: self.second.map(|a| ring.mul(a, k)),
        }
    }

    /// Applies the same local linear map to both components.
    pub fn map_linear(&self, f: impl Fn(&Tensor) -> Result<Tensor, ShapeError>) -> Result<Self, ShapeError> {
        Self::new(self.party, f(&self.first)?, f(&self.second)?)
    }
}

/// One party's pair of XOR components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitShare {
    party: PartyId,
    first: BitTensor,
    second: BitTensor,
}

impl BitShare {
    pub fn new(party: PartyId, first: BitTensor, second: BitTensor) -> Result<Self, ShapeError> {
        if first.shape() != second.shape() {
            return Err(ShapeError::Mismatch {
                left: first.shape().to_vec(),
                right: second.shape().to_vec(),
            });
        }
        Ok(Self { party, first, second })
    }

    pub fn party(&self) -> PartyId {
        self.party
    }

    pub fn first(&self) -> &BitTensor {
        &self.first
    }

    pub fn second(&self) -> &BitTensor {
        &self.second
    }

    pub fn component(&self, j: usize) -> Option<&BitTensor> {
        if j == self.party.index() {
            Some(&self.first)
        } else if j == self.party.next().index() {
            Some(&self.second)
        } else {
            None
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.first.shape()
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    pub fn xor(&self, other: &BitShare) -> Result<Self, ShapeError> {
        Ok(Self {
            party: self.party,
            first: self.first.xor(&other.first)?,
            second: self.second.xor(&other.second)?,
        })
    }

    /// XORs public bits into component `j` (both holders apply it).
    pub fn xor_const_at(&self, j: usize, c: &BitTensor) -> Result<Self, ShapeError> {
        let mut out = self.clone();
        if j == self.party.index() {
            out.first = out.first.xor(c)?;
        } else if j == self.party.next().index() {
            out.second = out.second.xor(c)?;
        } else if c.shape() != self.shape() {
            return Err(ShapeError::Mismatch {
                left: self.shape().to_vec(),
                right: c.shape().to_vec(),
            });
        }
        Ok(out)
    }

    pub fn not(&self) -> Self {
        self.xor_const_at(0, &BitTensor::new(self.shape().to_vec(), vec![1; self.len()]).unwrap())
            .expect("same shape")
    }
}

/// Dealer-side sharing of a plaintext tensor.
pub fn share_secret(ring: Ring, x: &Tensor, rng: &mut impl Rng) -> [RssShare; 3] {
    let x0: Vec<RingElem> = (0..x.len()).map(|_| ring.reduce(rng.gen())).collect();
    let x1: Vec<RingElem> = (0..x.len()).map(|_| ring.reduce(rng.gen())).collect();
    let x2: Vec<RingElem> = x
        .data()
        .iter()
        .zip(x0.iter().zip(&x1))
        .map(|(&v, (&a, &b))| ring.sub(ring.sub(v, a), b))
        .collect();
    from_components(x.shape(), [x0, x1, x2])
}

/// Assembles the three parties' shares from the three components.
pub fn from_components(shape: &[usize], comps: [Vec<RingElem>; 3]) -> [RssShare; 3] {
    let t = |v: &Vec<RingElem>| Tensor::new(shape.to_vec(), v.clone()).expect("component length");
    PartyId::ALL.map(|p| RssShare {
        party: p,
        first: t(&comps[p.index()]),
        second: t(&comps[p.next().index()]),
    })
}

/// Reconstructs from two distinct parties' shares, checking the component
/// they both hold.
pub fn reconstruct(ring: Ring, a: &RssShare, b: &RssShare) -> Result<Tensor, ShareError> {
    if a.party == b.party {
        return Err(ShareError::SameParty(a.party));
    }
    a.first.check_same_shape(&b.first)?;
    let mut comps: [Option<&Tensor>; 3] = [None; 3];
    for s in [a, b] {
        for (j, t) in [(s.party.index(), &s.first), (s.party.next().index(), &s.second)] {
            if let Some(prev) = comps[j] {
                if let Some(i) = prev.data().iter().zip(t.data()).position(|(x, y)| x != y) {
                    return Err(ShareError::Inconsistent { component: j, index: i });
                }
            }
            comps[j] = Some(t);
        }
    }
    let [Some(c0), Some(c1), Some(c2)] = comps else {
        unreachable!("two distinct parties cover all three components")
    };
    Ok(c0.add(ring, c1)?.add(ring, c2)?)
}

/// Reconstructs from all three shares, checking every replicated component.
pub fn reconstruct_all(ring: Ring, s: &[RssShare; 3]) -> Result<Tensor, ShareError> {
    let v = reconstruct(ring, &s[0], &s[1])?;
    reconstruct(ring, &s[1], &s[2])?;
    reconstruct(ring, &s[2], &s[0])?;
    Ok(v)
}

pub fn share_bits(x: &BitTensor, rng: &mut impl Rng) -> [BitShare; 3] {
    let x0: Vec<u8> = (0..x.len()).map(|_| rng.gen::<u8>() & 1).collect();
    let x1: Vec<u8> = (0..x.len()).map(|_| rng.gen::<u8>() & 1).collect();
    let x2: Vec<u8> = x.data().iter().zip(x0.iter().zip(&x1)).map(|(v, (a, b))| v ^ a ^ b).collect();
    bit_from_components(x.shape(), [x0, x1, x2])
}

pub fn bit_from_components(shape: &[usize], comps: [Vec<u8>; 3]) -> [BitShare; 3] {
    let t = |v: &Vec<u8>| BitTensor::new(shape.to_vec(), v.clone()).expect("component length");
    PartyId::ALL.map(|p| BitShare {
        party: p,
        first: t(&comps[p.index()]),
        second: t(&comps[p.next().index()]),
    })
}

pub fn reconstruct_bits(a: &BitShare, b: &BitShare) -> Result<BitTensor, ShareError> {
    if a.party == b.party {
        return Err(ShareError::SameParty(a.party));
    }
    if a.shape() != b.shape() {
        return Err(ShapeError::Mismatch {
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        }
        .into());
    }
    let mut comps: [Option<&BitTensor>; 3] = [None; 3];
    for s in [a, b] {
        for (j, t) in [(s.party.index(), &s.first), (s.party.next().index(), &s.second)] {
            if let Some(prev) = comps[j] {
                if let Some(i) = prev.data().iter().zip(t.data()).position(|(x, y)| x != y) {
                    return Err(ShareError::Inconsistent { component: j, index: i });
                }
            }
            comps[j] = Some(t);
        }
    }
    let [Some(c0), Some(c1), Some(c2)] = comps else {
        unreachable!()
    };
    Ok(c0.xor(c1)?.xor(c2)?)
}

pub fn reconstruct_bits_all(s: &[BitShare; 3]) -> Result<BitTensor, ShareError> {
    let v = reconstruct_bits(&s[0], &s[1])?;
    reconstruct_bits(&s[1], &s[2])?;
    reconstruct_bits(&s[2], &s[0])?;
    Ok(v)
}

/// `x_i y_i + x_i y_{i+1} + x_{i+1} y_i`: this party's additive component
/// of the product, before masking and resharing.
pub fn mul_local(ring: Ring, x: &RssShare, y: &RssShare) -> Result<Vec<RingElem>, ShapeError> {
    x.first.check_same_shape(&y.first)?;
    let (a0, a1, b0, b1) = (x.first.data(), x.second.data(), y.first.data(), y.second.data());
    Ok((0..a0.len())
        .map(|k| {
            let t = ring.add(ring.mul(a0[k], b0[k]), ring.mul(a0[k], b1[k]));
            ring.add(t, ring.mul(a1[k], b0[k]))
        })
        .collect())
}

pub fn and_local(x: &BitShare, y: &BitShare) -> Result<Vec<u8>, ShapeError> {
    if x.shape() != y.shape() {
        return Err(ShapeError::Mismatch {
            left: x.shape().to_vec(),
            right: y.shape().to_vec(),
        });
    }
    let (a0, a1, b0, b1) = (x.first.data(), x.second.data(), y.first.data(), y.second.data());
    Ok((0..a0.len()).map(|k| (a0[k] & b0[k]) ^ (a0[k] & b1[k]) ^ (a1[k] & b0[k])).collect())
}
