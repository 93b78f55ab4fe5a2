use std::net::{SocketAddr, TcpListener};
use std::time::Duration;

use super::{local_mesh, Net, PartyId, TcpTransport, TrafficStats, Transport};
use crate::error::{Error, Result, TransportError};
use crate::party::Party;
use crate::ring::Ring;
use crate::sharing::SetupSeeds;

/// How the three parties of a run are connected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mode {
    /// Threads connected by channels.
    InProcess,
    /// Threads connected over TCP on the given addresses; port 0 picks a
    /// free port.
    Tcp([SocketAddr; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub timeout: Duration,
    pub inject_latency: Option<Duration>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            timeout: Net::DEFAULT_TIMEOUT,
            inject_latency: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput<T> {
    pub outputs: [T; 3],
    pub stats: [TrafficStats; 3],
    /// Digest of everything each party sent.
    pub transcripts: [[u8; 32]; 3],
}

pub fn run_three_parties<T, F>(seeds: SetupSeeds, ring: Ring, mode: Mode, program: F) -> Result<RunOutput<T>>
where
    T: Send,
    F: Fn(&mut Party) -> Result<T> + Sync,
{
    run_three_parties_with(seeds, ring, mode, RunOptions::default(), program)
}

/// Runs `program` once per party, each on its own thread, and collects
/// the outputs. If any party fails the run fails; the reported error is
/// the first one that is not merely a consequence of another party going
/// away.
pub fn run_three_parties_with<T, F>(
    seeds: SetupSeeds,
    ring: Ring,
    mode: Mode,
    opts: RunOptions,
    program: F,
) -> Result<RunOutput<T>>
where
    T: Send,
    F: Fn(&mut Party) -> Result<T> + Sync,
{
    let transports: Vec<Box<dyn FnOnce() -> Result<Box<dyn Transport>, TransportError> + Send>> = match mode {
        Mode::InProcess => local_mesh()
            .into_iter()
            .map(|t| Box::new(move || Ok(Box::new(t) as Box<dyn Transport>)) as _)
            .collect(),
        Mode::Tcp(addrs) => {
            let listeners = addrs
                .iter()
                .map(TcpListener::bind)
                .collect::<Result<Vec<_>, _>>()
                .map_err(TransportError::from)?;
            let mut bound = addrs;
            for (a, l) in bound.iter_mut().zip(&listeners) {
                *a = l.local_addr().map_err(TransportError::from)?;
            }
            listeners
                .into_iter()
                .enumerate()
                .map(|(i, l)| {
                    let id = PartyId::new(i).expect("three listeners");
                    Box::new(move || {
                        TcpTransport::with_listener(id, l, &bound, opts.timeout).map(|t| Box::new(t) as Box<dyn Transport>)
                    }) as _
                })
                .collect()
        }
    };

    let program = &program;
    let results: Vec<Result<(T, TrafficStats, [u8; 32])>> = std::thread::scope(|s| {
        let handles: Vec<_> = transports
            .into_iter()
            .map(|make| {
                s.spawn(move || -> Result<(T, TrafficStats, [u8; 32])> {
                    let net = Net::new(make()?, ring)
                        .with_timeout(opts.timeout)
                        .with_injected_latency(opts.inject_latency);
                    let mut party = Party::new(net, &seeds);
                    let out = program(&mut party)?;
                    Ok((out, party.net.stats().clone(), party.net.transcript_digest()))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Config("party thread panicked".into()))))
            .collect()
    });

    if results.iter().any(|r| r.is_err()) {
        let mut errors: Vec<(PartyId, Error)> = results
            .into_iter()
            .enumerate()
            .filter_map(|(i, r)| r.err().map(|e| (PartyId::new(i).unwrap(), e)))
            .collect();
        let secondary = |e: &Error| matches!(e.transport_cause(), Some(TransportError::Disconnected(_)));
        let pick = errors.iter().position(|(_, e)| !secondary(e)).unwrap_or(0);
        let (party, source) = errors.swap_remove(pick);
        return Err(Error::Party {
            party,
            source: Box::new(source),
        });
    }

    let mut outputs = Vec::with_capacity(3);
    let mut stats = Vec::with_capacity(3);
    let mut transcripts = Vec::with_capacity(3);
    for r in results {
        let (o, s, t) = r.expect("checked above");
        outputs.push(o);
        stats.push(s);
        transcripts.push(t);
    }
    Ok(RunOutput {
        outputs: into_array(outputs),
        stats: into_array(stats),
        transcripts: into_array(transcripts),
    })
}

fn into_array<T>(v: Vec<T>) -> [T; 3] {
    v.try_into().unwrap_or_else(|_| unreachable!("exactly three parties"))
}

/// Runs a single party of a multi-process TCP deployment.
pub fn run_party<T>(
    id: PartyId,
    addrs: &[SocketAddr; 3],
    seeds: SetupSeeds,
    ring: Ring,
    opts: RunOptions,
    program: impl FnOnce(&mut Party) -> Result<T>,
) -> Result<(T, TrafficStats)> {
    let transport = TcpTransport::connect(id, addrs, opts.timeout)?;
    let net = Net::new(Box::new(transport), ring)
        .with_timeout(opts.timeout)
        .with_injected_latency(opts.inject_latency);
    let mut party = Party::new(net, &seeds);
    let out = program(&mut party).map_err(|e| Error::Party {
        party: id,
        source: Box::new(e),
    })?;
    Ok((out, party.net.stats().clone()))
}
