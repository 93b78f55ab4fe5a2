//! Three-party runtime: party identities, framed message passing over
//! in-process channels or TCP, and round/byte accounting.
//!
//! A *round* is declared explicitly by protocol code through
//! [`Net::round`]; every party declares the same barriers, so round counts
//! are identical across parties and across transports.

mod cost;
mod local;
mod net;
mod runner;
mod stats;
mod tcp;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::TransportError;

pub use cost::{estimate_time, NetProfile, TimeEstimate};
pub use local::{local_mesh, LocalTransport};
pub use net::{tags, Net, Received};
pub use runner::{run_party, run_three_parties, run_three_parties_with, Mode, RunOptions, RunOutput};
pub use stats::{PhaseStats, TrafficStats};
pub use tcp::TcpTransport;

/// One of the three parties. `P0` is the data owner, `P1` the model owner
/// and `P2` the helper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PartyId(u8);

impl PartyId {
    pub const P0: PartyId = PartyId(0);
    pub const P1: PartyId = PartyId(1);
    pub const P2: PartyId = PartyId(2);
    pub const ALL: [PartyId; 3] = [Self::P0, Self::P1, Self::P2];

    pub fn new(id: usize) -> Option<Self> {
        (id < 3).then_some(PartyId(id as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn next(self) -> Self {
        PartyId((self.0 + 1) % 3)
    }

    pub fn prev(self) -> Self {
        PartyId((self.0 + 2) % 3)
    }

    /// `self + k (mod 3)`.
    pub fn offset(self, k: usize) -> Self {
        PartyId(((self.0 as usize + k) % 3) as u8)
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

/// A tagged message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub tag: u16,
    pub payload: Vec<u8>,
}

/// Point-to-point delivery between the three parties. Delivery is
/// exactly-once and in order per sender.
pub trait Transport: Send {
    fn id(&self) -> PartyId;
    fn send(&mut self, to: PartyId, frame: Frame) -> Result<(), TransportError>;
    fn recv(&mut self, from: PartyId, timeout: Duration) -> Result<Frame, TransportError>;
}
