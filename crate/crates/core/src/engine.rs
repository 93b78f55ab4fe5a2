//! Runs a [`CompiledPlan`] at one party.
//!
//! The model owner `P1` deals every secret parameter in one round, the
//! data owner `P0` deals the input in another, the steps run in order
//! (each charged to its own phase label) and the output is revealed.

use crate::error::{ProtocolError, Result, ShapeError};
use crate::linear::{linear_infer, truncate, LinearParams};
use crate::model::{phases, CompiledPlan, PlanOp, Reveal};
use crate::nonlinear::{fused_sign_maxpool, msb_extract, secure_relu, secure_sign};
use crate::party::Party;
use crate::sharing::ops::{open, reveal_to, share_input};
use crate::sharing::{RssShare, SetupSeeds};
use crate::tensor::Tensor;
use crate::transport::{run_three_parties_with, Mode, PartyId, RunOptions, TrafficStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineOptions {
    pub reveal: Reveal,
    /// Keep every step's output share (tests and debugging).
    pub trace: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            reveal: Reveal::DataOwner,
            trace: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PartyResult {
    /// Raw output, for the parties it was revealed to.
    pub output: Option<Tensor>,
    /// The input share followed by each step's output share, if traced.
    pub trace: Vec<RssShare>,
}

fn slice(x: &RssShare, range: std::ops::Range<usize>, shape: &[usize]) -> Result<RssShare, ShapeError> {
    let part = |t: &Tensor| Tensor::new(shape.to_vec(), t.data()[range.clone()].to_vec());
    RssShare::new(x.party(), part(x.first())?, part(x.second())?)
}

/// Adds a shared per-channel constant to every element of its channel.
fn add_per_channel(p: &Party, x: &RssShare, t: &RssShare) -> Result<RssShare, ShapeError> {
    let ring = p.ring();
    let per = x.len() / t.len().max(1);
    let spread = |c: &Tensor| Tensor::new(x.shape().to_vec(), (0..x.len()).map(|k| c.data()[k / per]).collect());
    x.add(ring, &RssShare::new(x.party(), spread(t.first())?, spread(t.second())?)?)
}

/// One party's side of a secure inference. `input` must be `Some` at `P0`.
/// Parameter values are read from the plan only at `P1`.
pub fn infer(p: &mut Party, plan: &CompiledPlan, input: Option<&Tensor>, opts: EngineOptions) -> Result<PartyResult> {
    let me = p.id();
    if p.ring().bits() != plan.config.ring_bits {
        return Err(ProtocolError::Precondition(format!(
            "party ring has {} bits, plan expects {}",
            p.ring().bits(),
            plan.config.ring_bits
        ))
        .into());
    }
    let n_secret = plan.secret_len();
    let secrets = (me == PartyId::P1).then(|| Tensor::vector(plan.secrets()));
    let model = p.in_phase(phases::DEAL_MODEL, |p| share_input(p, PartyId::P1, secrets.as_ref(), &[n_secret]))?;
    let input = if me == PartyId::P0 { input } else { None };
    let mut x = p.in_phase(phases::DEAL_INPUT, |p| share_input(p, PartyId::P0, input, plan.input_shape()))?;

    let mut trace = Vec::new();
    if opts.trace {
        trace.push(x.clone());
    }
    let mask_bits = plan.config.mask_bits;
    let mut offset = 0;
    for (i, step) in plan.steps.iter().enumerate() {
        let label = plan.label(i);
        x = p.in_phase(&label, |p| -> Result<RssShare> {
            Ok(match &step.op {
                PlanOp::Linear { kind, weight, bias } => {
                    let (nw, nb) = (weight.len(), bias.len());
                    let params = LinearParams {
                        kind: *kind,
                        weight: slice(&model, offset..offset + nw, &[nw])?,
                        bias: slice(&model, offset + nw..offset + nw + nb, &[nb])?,
                    };
                    offset += nw + nb;
                    linear_infer(p, &params, &x)?
                }
                PlanOp::Truncate { bits } => truncate(p, &x, *bits)?,
                PlanOp::AddThreshold { t } => {
                    let ts = slice(&model, offset..offset + t.len(), &[t.len()])?;
                    offset += t.len();
                    add_per_channel(p, &x, &ts)?
                }
                PlanOp::Sign => {
                    let msb = msb_extract(p, &x, mask_bits)?;
                    secure_sign(p, &msb)?
                }
                PlanOp::Relu => {
                    let msb = msb_extract(p, &x, mask_bits)?;
                    secure_relu(p, &x, &msb)?
                }
                PlanOp::BinaryMaxPool { kernel, stride } => fused_sign_maxpool(p, &x, *kernel, *stride, mask_bits)?,
                PlanOp::Reshape => x.reshape(&step.out_shape)?,
            })
        })?;
        if opts.trace {
            trace.push(x.clone());
        }
    }
    debug_assert_eq!(offset, n_secret);

    let output = p.in_phase(phases::REVEAL, |p| match opts.reveal {
        Reveal::DataOwner => reveal_to(p, &x, PartyId::P0),
        Reveal::All => open(p, &x).map(Some),
    })?;
    Ok(PartyResult { output, trace })
}

/// Outcome of a three-party run.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub results: [PartyResult; 3],
    pub stats: [TrafficStats; 3],
    pub transcripts: [[u8; 32]; 3],
}

impl Simulation {
    /// The output as seen by the data owner.
    pub fn output(&self) -> &Tensor {
        self.results[0].output.as_ref().expect("P0 always learns the output")
    }
}

/// Runs all three parties of one inference.
pub fn simulate(plan: &CompiledPlan, input: &Tensor, seed: u64, mode: Mode, opts: EngineOptions) -> Result<Simulation> {
    simulate_with(plan, input, seed, mode, opts, RunOptions::default())
}

pub fn simulate_with(
    plan: &CompiledPlan,
    input: &Tensor,
    seed: u64,
    mode: Mode,
    opts: EngineOptions,
    run: RunOptions,
) -> Result<Simulation> {
    let ring = plan.config.ring()?;
    let out = run_three_parties_with(SetupSeeds::from_u64(seed), ring, mode, run, |p| {
        let x = (p.id() == PartyId::P0).then_some(input);
        infer(p, plan, x, opts)
    })?;
    Ok(Simulation {
        results: out.outputs,
        stats: out.stats,
        transcripts: out.transcripts,
    })
}
