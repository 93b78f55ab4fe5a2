use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub messages: u64,
    pub bytes: u64,
    pub rounds: u64,
}

impl PhaseStats {
    pub fn accumulate(&mut self, other: &PhaseStats) {
        self.messages += other.messages;
        self.bytes += other.bytes;
        self.rounds += other.rounds;
    }

    pub fn minus(&self, earlier: &PhaseStats) -> PhaseStats {
        PhaseStats {
            messages: self.messages - earlier.messages,
            bytes: self.bytes - earlier.bytes,
            rounds: self.rounds - earlier.rounds,
        }
    }
}

/// Traffic sent by one party. Counters only grow.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficStats {
    pub total: PhaseStats,
    /// Breakdown by the phase label active when the traffic happened.
    pub phases: BTreeMap<String, PhaseStats>,
}

impl TrafficStats {
    pub fn messages(&self) -> u64 {
        self.total.messages
    }

    pub fn bytes(&self) -> u64 {
        self.total.bytes
    }

    pub fn rounds(&self) -> u64 {
        self.total.rounds
    }

    pub(crate) fn record_send(&mut self, phase: &str, bytes: usize) {
        self.total.messages += 1;
        self.total.bytes += bytes as u64;
        let p = self.phases.entry(phase.to_string()).or_default();
        p.messages += 1;
        p.bytes += bytes as u64;
    }

    pub(crate) fn record_round(&mut self, phase: &str) {
        self.total.rounds += 1;
        self.phases.entry(phase.to_string()).or_default().rounds += 1;
    }

    pub fn merge(&mut self, other: &TrafficStats) {
        self.total.accumulate(&other.total);
        for (k, v) in &other.phases {
            self.phases.entry(k.clone()).or_default().accumulate(v);
        }
    }

    /// Traffic accumulated since `earlier` was snapshotted.
    pub fn since(&self, earlier: &TrafficStats) -> TrafficStats {
        let mut phases = BTreeMap::new();
        for (k, v) in &self.phases {
            let before = earlier.phases.get(k).copied().unwrap_or_default();
            let d = v.minus(&before);
            if d != PhaseStats::default() {
                phases.insert(k.clone(), d);
            }
        }
        TrafficStats {
            total: self.total.minus(&earlier.total),
            phases,
        }
    }
}
