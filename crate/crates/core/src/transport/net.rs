use std::time::Duration;

use sha2::{Digest, Sha256};

use super::{Frame, PartyId, TrafficStats, Transport};
use crate::error::TransportError;
use crate::ring::{Ring, RingElem};

/// Wire tags, one per protocol step. A receiver always names the tag it
/// expects, so a party that has fallen out of step fails loudly.
pub mod tags {
    pub const INPUT: u16 = 1;
    pub const RESHARE: u16 = 2;
    pub const OPEN: u16 = 3;
    pub const BIT_RESHARE: u16 = 4;
    pub const OT_SENDER: u16 = 10;
    pub const OT_HELPER: u16 = 11;
    pub const TRUNC_DEAL: u16 = 20;
    pub const TRUNC_OPEN: u16 = 21;
    pub const MSB_DEAL: u16 = 30;
    pub const MSB_OPEN: u16 = 31;
    pub const REVEAL: u16 = 40;
    pub const USER: u16 = 1000;
}

/// A party's view of the network: a transport plus traffic accounting.
pub struct Net {
    transport: Box<dyn Transport>,
    ring: Ring,
    stats: TrafficStats,
    phase: String,
    timeout: Duration,
    inject_latency: Option<Duration>,
    transcript: Sha256,
    received: Option<Vec<Received>>,
}

/// A frame as it arrived, kept when receive logging is on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Received {
    pub from: PartyId,
    pub tag: u16,
    pub phase: String,
    pub payload: Vec<u8>,
}

impl Net {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

    pub fn new(transport: Box<dyn Transport>, ring: Ring) -> Self {
        Self {
            transport,
            ring,
            stats: TrafficStats::default(),
            phase: "setup".to_string(),
            timeout: Self::DEFAULT_TIMEOUT,
            inject_latency: None,
            transcript: Sha256::new(),
            received: None,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Debug aid: sleep this long at every round barrier.
    pub fn with_injected_latency(mut self, latency: Option<Duration>) -> Self {
        self.inject_latency = latency;
        self
    }

    /// Keep a copy of every frame received from now on (privacy tests).
    pub fn log_received(&mut self) {
        self.received.get_or_insert_with(Vec::new);
    }

    pub fn received(&self) -> &[Received] {
        self.received.as_deref().unwrap_or(&[])
    }

    pub fn id(&self) -> PartyId {
        self.transport.id()
    }

    pub fn ring(&self) -> Ring {
        self.ring
    }

    pub fn stats(&self) -> &TrafficStats {
        &self.stats
    }

    pub fn phase(&self) -> &str {
        &self.phase
    }

    /// Sets the label traffic is charged to; returns the previous one.
    pub fn set_phase(&mut self, phase: impl Into<String>) -> String {
        std::mem::replace(&mut self.phase, phase.into())
    }

    pub fn send(&mut self, to: PartyId, tag: u16, payload: Vec<u8>) -> Result<(), TransportError> {
        if to == self.id() {
            return Err(TransportError::SelfSend(to));
        }
        self.stats.record_send(&self.phase, payload.len());
        self.transcript.update([to.index() as u8]);
        self.transcript.update(tag.to_le_bytes());
        self.transcript.update((payload.len() as u64).to_le_bytes());
        self.transcript.update(&payload);
        self.transport.send(to, Frame { tag, payload })
    }

    pub fn recv(&mut self, from: PartyId, tag: u16) -> Result<Vec<u8>, TransportError> {
        let frame = self.transport.recv(from, self.timeout).map_err(|e| match e {
            TransportError::Timeout { from, .. } => TransportError::Timeout { from, tag },
            other => other,
        })?;
        if frame.tag != tag {
            return Err(TransportError::TagMismatch {
                from,
                expected: tag,
                got: frame.tag,
            });
        }
        if let Some(log) = &mut self.received {
            log.push(Received {
                from,
                tag,
                phase: self.phase.clone(),
                payload: frame.payload.clone(),
            });
        }
        Ok(frame.payload)
    }

    /// Sends ring words using `l/8` bytes each.
    pub fn send_words(&mut self, to: PartyId, tag: u16, words: &[RingElem]) -> Result<(), TransportError> {
        let bytes = self.ring.encode_words(words);
        self.send(to, tag, bytes)
    }

    pub fn recv_words(&mut self, from: PartyId, tag: u16, count: usize) -> Result<Vec<RingElem>, TransportError> {
        let bytes = self.recv(from, tag)?;
        let expected = count * self.ring.bytes_per_elem();
        if bytes.len() != expected {
            return Err(TransportError::PayloadSize {
                expected: count,
                got: bytes.len(),
            });
        }
        Ok(self.ring.decode_words(&bytes).expect("length checked"))
    }

    /// Sends bits packed eight per byte, LSB first.
    pub fn send_bits(&mut self, to: PartyId, tag: u16, bits: &[u8]) -> Result<(), TransportError> {
        let mut packed = vec![0u8; bits.len().div_ceil(8)];
        for (i, b) in bits.iter().enumerate() {
            packed[i / 8] |= (b & 1) << (i % 8);
        }
        self.send(to, tag, packed)
    }

    pub fn recv_bits(&mut self, from: PartyId, tag: u16, count: usize) -> Result<Vec<u8>, TransportError> {
        let packed = self.recv(from, tag)?;
        if packed.len() != count.div_ceil(8) {
            return Err(TransportError::PayloadSize {
                expected: count,
                got: packed.len(),
            });
        }
        Ok((0..count).map(|i| (packed[i / 8] >> (i % 8)) & 1).collect())
    }

    /// Declares a round barrier.
    pub fn round(&mut self) {
        self.stats.record_round(&self.phase);
        if let Some(d) = self.inject_latency {
            std::thread::sleep(d);
        }
    }

    /// SHA-256 over everything this party has sent so far.
    pub fn transcript_digest(&self) -> [u8; 32] {
        self.transcript.clone().finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::local_mesh;

    fn nets() -> [Net; 3] {
        let ring = Ring::new(32).unwrap();
        local_mesh().map(|t| Net::new(Box::new(t), ring).with_timeout(Duration::from_millis(200)))
    }

    #[test]
    fn round_trip_preserves_bytes() {
        let [mut a, mut b, _c] = nets();
        let payload: Vec<u8> = (0..1024).map(|i| (i * 7 % 251) as u8).collect();
        a.send(PartyId::P1, tags::USER, payload.clone()).unwrap();
        assert_eq!(b.recv(PartyId::P0, tags::USER).unwrap(), payload);
        assert_eq!(a.stats().bytes(), 1024);
        assert_eq!(a.stats().messages(), 1);
        assert_eq!(b.stats().bytes(), 0);
    }

    #[test]
    fn mismatched_tag_is_desync() {
        let [mut a, mut b, _c] = nets();
        a.send(PartyId::P1, tags::RESHARE, vec![1]).unwrap();
        let err = b.recv(PartyId::P0, tags::OPEN).unwrap_err();
        assert!(matches!(err, TransportError::TagMismatch { expected: tags::OPEN, got: tags::RESHARE, .. }));
    }

    #[test]
    fn recv_times_out() {
        let [_a, mut b, _c] = nets();
        let err = b.recv(PartyId::P0, tags::USER).unwrap_err();
        assert_eq!(err, TransportError::Timeout { from: PartyId::P0, tag: tags::USER });
    }

    #[test]
    fn self_send_rejected() {
        let [mut a, _, _] = nets();
        assert!(a.send(PartyId::P0, tags::USER, vec![]).is_err());
    }

    #[test]
    fn words_and_bits_round_trip() {
        let [mut a, _b, mut c] = nets();
        a.send_words(PartyId::P2, tags::USER, &[1, 0xdead_beef, 7]).unwrap();
        assert_eq!(c.recv_words(PartyId::P0, tags::USER, 3).unwrap(), vec![1, 0xdead_beef, 7]);
        assert_eq!(a.stats().bytes(), 12);
        let bits = vec![1, 0, 1, 1, 0, 0, 0, 1, 1, 1];
        a.send_bits(PartyId::P2, tags::USER, &bits).unwrap();
        assert_eq!(c.recv_bits(PartyId::P0, tags::USER, bits.len()).unwrap(), bits);
        a.send_words(PartyId::P2, tags::USER, &[1]).unwrap();
        assert!(c.recv_words(PartyId::P0, tags::USER, 2).is_err());
    }

    #[test]
    fn phases_are_tracked() {
        let [mut a, _b, _c] = nets();
        a.set_phase("one");
        a.send(PartyId::P1, tags::USER, vec![0; 4]).unwrap();
        a.round();
        let prev = a.set_phase("two");
        assert_eq!(prev, "one");
        a.round();
        let s = a.stats();
        assert_eq!(s.rounds(), 2);
        assert_eq!(s.phases["one"].bytes, 4);
        assert_eq!(s.phases["two"].rounds, 1);
    }
}
