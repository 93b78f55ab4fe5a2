//! Three-party oblivious transfer.
//!
//! The sender holds `(m_0, m_1)`; the receiver and the helper both hold the
//! choice bit `c`. The sender XOR-masks both messages with masks it shares
//! with the receiver and hands them to the helper, who forwards only
//! `s_c`. Two message legs, so two rounds; batched element-wise.
//!
//! [`OtSession`] exposes the legs separately so callers can overlap an OT
//! with other traffic in the same round; [`ot3_transfer`] runs one OT on
//! its own.

use crate::error::{ProtocolError, Result};
use crate::party::Party;
use crate::ring::RingElem;
use crate::sharing::RandKind;
use crate::transport::{tags, PartyId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OtRoles {
    pub sender: PartyId,
    pub receiver: PartyId,
    pub helper: PartyId,
}

impl OtRoles {
    pub fn new(sender: PartyId, receiver: PartyId, helper: PartyId) -> Self {
        assert!(
            sender != receiver && sender != helper && receiver != helper,
            "OT roles must be three distinct parties"
        );
        Self { sender, receiver, helper }
    }
}

/// What the calling party contributes.
#[derive(Debug, Clone, Copy)]
pub enum OtInput<'a> {
    Sender { m0: &'a [RingElem], m1: &'a [RingElem] },
    Receiver { choice: &'a [u8] },
    Helper { choice: &'a [u8] },
}

enum State {
    Sender,
    Receiver { masks: Vec<RingElem>, choice: Vec<u8> },
    Helper { choice: Vec<u8>, masked: Option<Vec<RingElem>> },
}

/// One batched OT in progress.
pub struct OtSession {
    roles: OtRoles,
    n: usize,
    state: State,
}

impl OtSession {
    /// First half of leg 1: the sender masks and sends `(s_0, s_1)` to the
    /// helper. The receiver derives the same masks.
    pub fn start(p: &mut Party, roles: OtRoles, input: OtInput<'_>) -> Result<Self> {
        let me = p.id();
        let ring = p.ring();
        let role_err = |what: &str| ProtocolError::Precondition(format!("{me} supplied {what} input but plays another OT role"));
        let (n, state) = match input {
            OtInput::Sender { m0, m1 } => {
                if me != roles.sender {
                    return Err(role_err("sender").into());
                }
                if m0.len() != m1.len() {
                    return Err(ProtocolError::Precondition("OT message vectors differ in length".into()).into());
                }
                let n = m0.len();
                let masks = p.ctx.draw_pair(roles.receiver, RandKind::OtMask, 2 * n);
                let mut s = Vec::with_capacity(2 * n);
                s.extend(m0.iter().zip(&masks[..n]).map(|(&m, &k)| ring.reduce(m ^ k)));
                s.extend(m1.iter().zip(&masks[n..]).map(|(&m, &k)| ring.reduce(m ^ k)));
                p.net.send_words(roles.helper, tags::OT_SENDER, &s)?;
                (n, State::Sender)
            }
            OtInput::Receiver { choice } => {
                if me != roles.receiver {
                    return Err(role_err("receiver").into());
                }
                let n = choice.len();
                let masks = p.ctx.draw_pair(roles.sender, RandKind::OtMask, 2 * n);
                let masks = (0..n).map(|k| ring.reduce(masks[k + n * (choice[k] & 1) as usize])).collect();
                (n, State::Receiver { masks, choice: choice.to_vec() })
            }
            OtInput::Helper { choice } => {
                if me != roles.helper {
                    return Err(role_err("helper").into());
                }
                (choice.len(), State::Helper { choice: choice.to_vec(), masked: None })
            }
        };
        Ok(Self { roles, n, state })
    }

    /// Second half of leg 1: the helper receives `(s_0, s_1)`.
    pub fn leg1_recv(&mut self, p: &mut Party) -> Result<()> {
        if let State::Helper { masked, .. } = &mut self.state {
            *masked = Some(p.net.recv_words(self.roles.sender, tags::OT_SENDER, 2 * self.n)?);
        }
        Ok(())
    }

    /// First half of leg 2: the helper forwards `s_c`.
    pub fn leg2_send(&mut self, p: &mut Party) -> Result<()> {
        if let State::Helper { choice, masked } = &self.state {
            let s = masked.as_ref().expect("leg1_recv runs before leg2_send");
            let n = self.n;
            let sel: Vec<RingElem> = (0..n).map(|k| s[k + n * (choice[k] & 1) as usize]).collect();
            p.net.send_words(self.roles.receiver, tags::OT_HELPER, &sel)?;
        }
        Ok(())
    }

    /// Second half of leg 2: the receiver unmasks `m_c`. Other roles get
    /// `None`.
    pub fn finish(self, p: &mut Party) -> Result<Option<Vec<RingElem>>> {
        match self.state {
            State::Receiver { masks, .. } => {
                let s = p.net.recv_words(self.roles.helper, tags::OT_HELPER, self.n)?;
                Ok(Some(s.iter().zip(&masks).map(|(&v, &k)| v ^ k).collect()))
            }
            _ => Ok(None),
        }
    }

    pub fn roles(&self) -> OtRoles {
        self.roles
    }

    pub fn choice_len(&self) -> usize {
        match &self.state {
            State::Receiver { choice, .. } | State::Helper { choice, .. } => choice.len(),
            State::Sender => self.n,
        }
    }
}

/// Runs one batched OT. The receiver gets `m_c`, everyone else `None`.
/// Two rounds; the sender sends `2n` words, the helper `n`.
pub fn ot3_transfer(p: &mut Party, roles: OtRoles, input: OtInput<'_>) -> Result<Option<Vec<RingElem>>> {
    let mut s = OtSession::start(p, roles, input)?;
    s.leg1_recv(p)?;
    p.net.round();
    s.leg2_send(p)?;
    let out = s.finish(p)?;
    p.net.round();
    Ok(out)
}

/// Convenience wrapper: builds each party's input from the full picture.
/// Used by tests and by protocols whose roles are fixed per call site.
pub fn input_for<'a>(me: PartyId, roles: OtRoles, m: (&'a [RingElem], &'a [RingElem]), choice: &'a [u8]) -> OtInput<'a> {
    if me == roles.sender {
        OtInput::Sender { m0: m.0, m1: m.1 }
    } else if me == roles.receiver {
        OtInput::Receiver { choice }
    } else {
        OtInput::Helper { choice }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::Ring;
    use crate::sharing::SetupSeeds;
    use crate::transport::{run_three_parties, Mode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ring() -> Ring {
        Ring::new(32).unwrap()
    }

    fn run(roles: OtRoles, m0: &[u64], m1: &[u64], c: &[u8], seed: u64) -> crate::transport::RunOutput<Option<Vec<u64>>> {
        run_three_parties(SetupSeeds::from_u64(seed), ring(), Mode::InProcess, |p| {
            let me = p.id();
            ot3_transfer(p, roles, input_for(me, roles, (m0, m1), c))
        })
        .unwrap()
    }

    #[test]
    fn receiver_gets_chosen_message() {
        let roles = OtRoles::new(PartyId::P1, PartyId::P0, PartyId::P2);
        let out = run(roles, &[5], &[9], &[1], 1);
        assert_eq!(out.outputs[0], Some(vec![9]));
        assert_eq!(out.outputs[1], None);
        assert_eq!(out.outputs[2], None);
        let same = run(roles, &[42, 42], &[42, 42], &[0, 1], 2);
        assert_eq!(same.outputs[0], Some(vec![42, 42]));
    }

    #[test]
    fn all_role_assignments_and_choices() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = ring();
        let m0: Vec<u64> = (0..100).map(|_| r.reduce(rng.gen())).collect();
        let m1: Vec<u64> = (0..100).map(|_| r.reduce(rng.gen())).collect();
        for s in PartyId::ALL {
            for recv in PartyId::ALL.into_iter().filter(|&x| x != s) {
                let helper = PartyId::ALL.into_iter().find(|&x| x != s && x != recv).unwrap();
                let roles = OtRoles::new(s, recv, helper);
                for c in [0u8, 1] {
                    let choice = vec![c; 100];
                    let out = run(roles, &m0, &m1, &choice, 4);
                    let want = if c == 0 { &m0 } else { &m1 };
                    assert_eq!(out.outputs[recv.index()].as_ref(), Some(want));
                }
            }
        }
    }

    #[test]
    fn traffic_matches_leg_sizes() {
        let roles = OtRoles::new(PartyId::P0, PartyId::P2, PartyId::P1);
        let n = 37;
        let m = vec![1u64; n];
        let out = run(roles, &m, &m, &vec![1; n], 5);
        let s = &out.stats;
        assert_eq!(s[0].bytes(), (2 * n * 4) as u64);
        assert_eq!(s[1].bytes(), (n * 4) as u64);
        assert_eq!(s[2].bytes(), 0);
        assert!(s.iter().all(|x| x.rounds() == 2));
    }

    #[test]
    fn wrong_role_input_is_rejected() {
        let roles = OtRoles::new(PartyId::P1, PartyId::P0, PartyId::P2);
        let err = run_three_parties(SetupSeeds::from_u64(1), ring(), Mode::InProcess, |p| {
            ot3_transfer(p, roles, OtInput::Helper { choice: &[0] })
        });
        assert!(err.is_err());
    }
}
