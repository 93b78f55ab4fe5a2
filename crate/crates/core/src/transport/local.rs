use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use super::{Frame, PartyId, Transport};
use crate::error::TransportError;

/// In-process endpoint backed by one channel per ordered party pair.
pub struct LocalTransport {
    id: PartyId,
    outgoing: [Option<Sender<Frame>>; 3],
    incoming: [Option<Receiver<Frame>>; 3],
}

/// Builds the three connected endpoints of a fully meshed in-process network.
pub fn local_mesh() -> [LocalTransport; 3] {
    let mut outgoing: [[Option<Sender<Frame>>; 3]; 3] = Default::default();
    let mut incoming: [[Option<Receiver<Frame>>; 3]; 3] = Default::default();
    for from in 0..3 {
        for to in 0..3 {
            if from != to {
                let (tx, rx) = channel();
                outgoing[from][to] = Some(tx);
                incoming[to][from] = Some(rx);
            }
        }
    }
    let [o0, o1, o2] = outgoing;
    let [i0, i1, i2] = incoming;
    [
        LocalTransport { id: PartyId::P0, outgoing: o0, incoming: i0 },
        LocalTransport { id: PartyId::P1, outgoing: o1, incoming: i1 },
        LocalTransport { id: PartyId::P2, outgoing: o2, incoming: i2 },
    ]
}

impl Transport for LocalTransport {
    fn id(&self) -> PartyId {
        self.id
    }

    fn send(&mut self, to: PartyId, frame: Frame) -> Result<(), TransportError> {
        let tx = self.outgoing[to.index()]
            .as_ref()
            .ok_or(TransportError::SelfSend(to))?;
        tx.send(frame).map_err(|_| TransportError::Disconnected(to))
    }

    fn recv(&mut self, from: PartyId, timeout: Duration) -> Result<Frame, TransportError> {
        let rx = self.incoming[from.index()]
            .as_ref()
            .ok_or(TransportError::SelfSend(from))?;
        rx.recv_timeout(timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => TransportError::Timeout { from, tag: 0 },
            RecvTimeoutError::Disconnected => TransportError::Disconnected(from),
        })
    }
}
