//! Run reports: what a simulated or distributed inference cost and
//! produced, serialised with sorted keys via [`crate::io::to_stable_json`].
//!
//! Times are analytic network estimates only, so a report is a pure
//! function of model, input and seed.

use serde::Serialize;

use crate::cost;
use crate::engine::Simulation;
use crate::model::{CompiledPlan, NumericConfig, Reveal};
use crate::oracle::{argmax, decode_output};
use crate::tensor::Tensor;
use crate::transport::{estimate_time, NetProfile, PartyId, TimeEstimate, TrafficStats};

/// Megabytes are 10^6 bytes.
pub const MB: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputReport {
    /// Signed raw ring values.
    pub raw: Vec<i64>,
    pub decoded: Vec<f64>,
    pub argmax: usize,
    pub scale: u32,
}

impl OutputReport {
    pub fn new(plan: &CompiledPlan, y: &Tensor) -> Self {
        let ring = plan.config.ring().expect("validated at compile time");
        let decoded = decode_output(plan, y);
        Self {
            raw: y.data().iter().map(|&v| ring.to_signed(v)).collect(),
            argmax: argmax(&decoded),
            decoded,
            scale: plan.output_scale(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub model: String,
    pub input: String,
    pub seed: u64,
    pub net_profile: String,
    pub reveal: &'static str,
    pub numeric: NumericConfig,
    pub steps: usize,
    pub truncations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommReport {
    /// Sum over parties of bytes sent, in MB.
    pub total_mb: f64,
    /// Largest single party's bytes sent, in MB.
    pub max_party_mb: f64,
    pub rounds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeReport {
    pub lan: TimeEstimate,
    pub wan: TimeEstimate,
    /// The estimate under the requested profile, in seconds.
    pub selected_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config: ConfigEcho,
    pub output: OutputReport,
    /// Per party, including the per-phase breakdown.
    pub traffic: [TrafficStats; 3],
    pub comm: CommReport,
    /// Measured traffic equals the analytic cost model in every phase.
    pub analytic_match: bool,
    pub time: TimeReport,
}

pub fn reveal_name(r: Reveal) -> &'static str {
    match r {
        Reveal::DataOwner => "data_owner",
        Reveal::All => "all",
    }
}

pub fn comm(stats: &[TrafficStats; 3]) -> CommReport {
    let bytes = stats.iter().map(TrafficStats::bytes);
    CommReport {
        total_mb: bytes.clone().sum::<u64>() as f64 / MB,
        max_party_mb: bytes.max().unwrap_or(0) as f64 / MB,
        rounds: stats.iter().map(TrafficStats::rounds).max().unwrap_or(0),
    }
}

pub fn analytic_match(plan: &CompiledPlan, reveal: Reveal, stats: &[TrafficStats; 3]) -> bool {
    cost::measured(stats) == plan.cost(reveal)
        && plan
            .cost_breakdown(reveal)
            .iter()
            .all(|(label, c)| cost::measured_phase(stats, label) == *c)
}

/// Everything but the config's file names, which the caller fills in.
pub fn run_report(
    plan: &CompiledPlan,
    sim: &Simulation,
    seed: u64,
    reveal: Reveal,
    profile: (&str, NetProfile),
) -> RunReport {
    let selected = estimate_time(&sim.stats, profile.1);
    RunReport {
        config: ConfigEcho {
            model: String::new(),
            input: String::new(),
            seed,
            net_profile: profile.0.to_string(),
            reveal: reveal_name(reveal),
            numeric: plan.config,
            steps: plan.steps.len(),
            truncations: plan.truncations(),
        },
        output: OutputReport::new(plan, sim.output()),
        traffic: sim.stats.clone(),
        comm: comm(&sim.stats),
        analytic_match: analytic_match(plan, reveal, &sim.stats),
        time: TimeReport {
            lan: estimate_time(&sim.stats, NetProfile::LAN),
            wan: estimate_time(&sim.stats, NetProfile::WAN),
            selected_s: selected.max,
        },
    }
}

/// What one `run-party` process reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartyReport {
    pub party: PartyId,
    pub seed: u64,
    /// Present only where the output was revealed.
    pub output: Option<OutputReport>,
    pub traffic: TrafficStats,
}
