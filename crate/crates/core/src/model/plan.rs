use crate::cost::{self, Cost};
use crate::linear::LinearKind;
use crate::ring::RingElem;
use crate::transport::PartyId;

use super::range::RangeReport;
use super::{ModelGraph, NumericConfig};

/// One secure operation. Parameters are raw ring values.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanOp {
    /// Weights at scale `f`; bias at the layer's output scale.
    Linear {
        kind: LinearKind,
        weight: Vec<RingElem>,
        bias: Vec<RingElem>,
    },
    Truncate { bits: u32 },
    /// Adds a shared per-channel constant dealt by the model owner.
    AddThreshold { t: Vec<RingElem> },
    Sign,
    Relu,
    /// Max-pool over 0/1 values as `Sign(window sum − 1)`.
    BinaryMaxPool { kernel: usize, stride: usize },
    Reshape,
}

impl PlanOp {
    pub fn name(&self) -> &'static str {
        match self {
            PlanOp::Linear { kind: LinearKind::Fc { .. }, .. } => "fc",
            PlanOp::Linear { kind: LinearKind::Conv(g), .. } => match super::conv_kind(g) {
                super::ConvKind::Standard => "conv",
                super::ConvKind::Depthwise => "dwconv",
                super::ConvKind::Pointwise => "pwconv",
            },
            PlanOp::Truncate { .. } => "truncate",
            PlanOp::AddThreshold { .. } => "threshold",
            PlanOp::Sign => "sign",
            PlanOp::Relu => "relu",
            PlanOp::BinaryMaxPool { .. } => "maxpool",
            PlanOp::Reshape => "reshape",
        }
    }

    /// Number of model-owner secrets this step consumes.
    pub fn secret_len(&self) -> usize {
        match self {
            PlanOp::Linear { weight, bias, .. } => weight.len() + bias.len(),
            PlanOp::AddThreshold { t } => t.len(),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanStep {
    /// Index of the originating layer in the compiled graph.
    pub layer: usize,
    pub op: PlanOp,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    /// Fractional bits of the output.
    pub scale: u32,
}

impl PlanStep {
    pub fn in_len(&self) -> usize {
        self.in_shape.iter().product()
    }

    pub fn out_len(&self) -> usize {
        self.out_shape.iter().product()
    }
}

/// Who learns the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reveal {
    /// Only the data owner `P0`.
    DataOwner,
    /// Everyone; for testing.
    All,
}

/// Phase labels used for setup and output traffic.
pub mod phases {
    pub const DEAL_MODEL: &str = "deal_model";
    pub const DEAL_INPUT: &str = "deal_input";
    pub const REVEAL: &str = "reveal";
}

/// A compiled graph lowered to secure operations, with scales fixed and
/// ranges proved.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledPlan {
    pub config: NumericConfig,
    /// The rewritten graph the plan was lowered from.
    pub graph: ModelGraph,
    pub steps: Vec<PlanStep>,
    pub ranges: RangeReport,
}

impl CompiledPlan {
    pub fn input_shape(&self) -> &[usize] {
        &self.graph.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.steps.last().map_or(self.input_shape(), |s| &s.out_shape)
    }

    pub fn output_scale(&self) -> u32 {
        self.steps.last().map_or(self.config.input_frac, |s| s.scale)
    }

    /// Phase label of step `i`.
    pub fn label(&self, i: usize) -> String {
        format!("{i:02}_{}", self.steps[i].op.name())
    }

    pub fn secret_len(&self) -> usize {
        self.steps.iter().map(|s| s.op.secret_len()).sum()
    }

    /// All model-owner secrets in step order: weights, bias, thresholds.
    pub fn secrets(&self) -> Vec<RingElem> {
        let mut out = Vec::with_capacity(self.secret_len());
        for s in &self.steps {
            match &s.op {
                PlanOp::Linear { weight, bias, .. } => {
                    out.extend_from_slice(weight);
                    out.extend_from_slice(bias);
                }
                PlanOp::AddThreshold { t } => out.extend_from_slice(t),
                _ => {}
            }
        }
        out
    }

    pub fn truncations(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s.op, PlanOp::Truncate { .. })).count()
    }

    /// Analytic traffic of step `i`.
    pub fn step_cost(&self, i: usize) -> Cost {
        let l = self.config.ring_bits;
        let s = &self.steps[i];
        match &s.op {
            PlanOp::Linear { .. } => cost::reshare(l, s.out_len()),
            PlanOp::Truncate { .. } => cost::truncate(l, s.out_len()),
            PlanOp::AddThreshold { .. } | PlanOp::Reshape => cost::zero(),
            PlanOp::Sign => cost::sign(l, s.out_len()),
            PlanOp::Relu => cost::relu(l, s.out_len()),
            PlanOp::BinaryMaxPool { .. } => cost::sign_maxpool(l, s.out_len()),
        }
    }

    /// Analytic traffic of a whole inference, per phase label, in order.
    pub fn cost_breakdown(&self, reveal: Reveal) -> Vec<(String, Cost)> {
        let l = self.config.ring_bits;
        let mut out = vec![
            (phases::DEAL_MODEL.to_string(), cost::share_input(l, PartyId::P1, self.secret_len())),
            (
                phases::DEAL_INPUT.to_string(),
                cost::share_input(l, PartyId::P0, self.input_shape().iter().product()),
            ),
        ];
        out.extend((0..self.steps.len()).map(|i| (self.label(i), self.step_cost(i))));
        let n = self.output_shape().iter().product();
        out.push((
            phases::REVEAL.to_string(),
            match reveal {
                Reveal::DataOwner => cost::reveal_to(l, PartyId::P0, n),
                Reveal::All => cost::open(l, n),
            },
        ));
        out
    }

    pub fn cost(&self, reveal: Reveal) -> Cost {
        self.cost_breakdown(reveal).iter().fold(cost::zero(), |acc, (_, c)| cost::sum(&acc, c))
    }

    /// Rounds of one inference, setup included.
    pub fn rounds(&self, reveal: Reveal) -> u64 {
        self.cost(reveal)[0].rounds
    }
}
