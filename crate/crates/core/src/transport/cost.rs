use serde::{Deserialize, Serialize};

use super::TrafficStats;

/// One-way latency and bandwidth of every link. Bandwidth is in 10^6 bytes/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetProfile {
    pub latency_ms: f64,
    pub bandwidth_mbps: f64,
}

impl NetProfile {
    pub const LAN: NetProfile = NetProfile {
        latency_ms: 0.2,
        bandwidth_mbps: 625.0,
    };
    pub const WAN: NetProfile = NetProfile {
        latency_ms: 80.0,
        bandwidth_mbps: 40.0,
    };

    pub fn new(latency_ms: f64, bandwidth_mbps: f64) -> Option<Self> {
        (latency_ms > 0.0 && bandwidth_mbps > 0.0).then_some(Self {
            latency_ms,
            bandwidth_mbps,
        })
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "lan" => Some(Self::LAN),
            "wan" => Some(Self::WAN),
            _ => None,
        }
    }

    /// `rounds * latency + bytes / bandwidth`, in seconds.
    pub fn seconds(&self, rounds: u64, bytes: u64) -> f64 {
        rounds as f64 * self.latency_ms / 1e3 + bytes as f64 / (self.bandwidth_mbps * 1e6)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeEstimate {
    pub per_party: [f64; 3],
    pub max: f64,
}

/// Analytic network time for one run. No compute time is included.
pub fn estimate_time(stats: &[TrafficStats; 3], profile: NetProfile) -> TimeEstimate {
    let per_party = [0, 1, 2].map(|i| profile.seconds(stats[i].rounds(), stats[i].bytes()));
    let max = per_party.iter().copied().fold(0.0, f64::max);
    TimeEstimate { per_party, max }
}
