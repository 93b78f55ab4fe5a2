//! Worst-case magnitude analysis in the raw ring domain.
//!
//! Inputs are assumed to lie in `[-1, 1]`. Every bound is the largest raw
//! `|x|` a step can produce, by interval arithmetic over the encoded
//! weights. Three budgets are checked: no wrap anywhere (`2^(l-1)`),
//! truncation inputs below `2^(l-2)`, and MSB inputs below `2^(l-2-d)`.

use serde::Serialize;

use super::plan::{CompiledPlan, PlanOp};
use crate::error::ModelError;
use crate::linear::{truncation_budget, LinearKind};
use crate::nonlinear::msb_budget;
use crate::ring::{Ring, RingElem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeCheckKind {
    Overflow,
    Truncation,
    Msb,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeCheck {
    pub step: usize,
    pub kind: RangeCheckKind,
    pub bound: f64,
    pub budget: f64,
}

impl RangeCheck {
    /// `log2(budget / bound)`: spare bits.
    pub fn headroom_bits(&self) -> f64 {
        (self.budget / self.bound.max(1.0)).log2()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RangeReport {
    pub checks: Vec<RangeCheck>,
}

impl RangeReport {
    pub fn min_headroom_bits(&self) -> Option<f64> {
        self.checks.iter().map(RangeCheck::headroom_bits).reduce(f64::min)
    }

    pub fn msb_checks(&self) -> impl Iterator<Item = &RangeCheck> {
        self.checks.iter().filter(|c| c.kind == RangeCheckKind::Msb)
    }
}

pub(crate) fn input_bound(input_frac: u32) -> f64 {
    (input_frac as f64).exp2()
}

pub(crate) fn overflow_budget(ring: Ring) -> f64 {
    ((ring.bits() - 1) as f64).exp2()
}

/// `max_o Σ |w_o·| · in_bound + |b_o|` over output channels.
pub(crate) fn linear_bound(ring: Ring, kind: &LinearKind, weight: &[RingElem], bias: &[RingElem], in_bound: f64) -> f64 {
    let out = kind.bias_len().max(1);
    let per = weight.len() / out;
    (0..out)
        .map(|o| {
            let w: f64 = weight[o * per..(o + 1) * per]
                .iter()
                .map(|&v| ring.to_signed(v).unsigned_abs() as f64)
                .sum();
            w * in_bound + bias.get(o).map_or(0.0, |&b| ring.to_signed(b).unsigned_abs() as f64)
        })
        .fold(0.0, f64::max)
}

/// Bound after a probabilistic truncation by `bits`: floor, or one less.
pub(crate) fn truncated_bound(bound: f64, bits: u32) -> f64 {
    (bound / (bits as f64).exp2()).floor() + 1.0
}

pub(crate) fn max_abs_raw(ring: Ring, v: &[RingElem]) -> f64 {
    v.iter().map(|&x| ring.to_signed(x).unsigned_abs() as f64).fold(0.0, f64::max)
}

/// Re-derives every bound of a plan and checks it against its budget.
pub fn analyze_ranges(plan: &CompiledPlan) -> Result<RangeReport, ModelError> {
    let cfg = plan.config;
    let ring = cfg.ring()?;
    let msb = msb_budget(cfg.ring_bits, cfg.mask_bits) as f64;
    let trunc = truncation_budget(ring) as f64;
    let wrap = overflow_budget(ring);
    let mut report = RangeReport::default();
    let mut bound = input_bound(cfg.input_frac);
    for (i, step) in plan.steps.iter().enumerate() {
        let mut check = |kind: RangeCheckKind, bound: f64, budget: f64| -> Result<(), ModelError> {
            report.checks.push(RangeCheck { step: i, kind, bound, budget });
            if bound < budget {
                Ok(())
            } else {
                Err(ModelError::RangeBudget {
                    layer: step.layer,
                    kind: step.op.name(),
                    bound,
                    budget,
                })
            }
        };
        bound = match &step.op {
            PlanOp::Linear { kind, weight, bias } => {
                let b = linear_bound(ring, kind, weight, bias, bound);
                check(RangeCheckKind::Overflow, b, wrap)?;
                b
            }
            PlanOp::Truncate { bits } => {
                check(RangeCheckKind::Truncation, bound, trunc)?;
                truncated_bound(bound, *bits)
            }
            PlanOp::AddThreshold { t } => {
                let b = bound + max_abs_raw(ring, t);
                check(RangeCheckKind::Overflow, b, wrap)?;
                b
            }
            PlanOp::Sign => {
                check(RangeCheckKind::Msb, bound, msb)?;
                1.0
            }
            PlanOp::Relu => {
                check(RangeCheckKind::Msb, bound, msb)?;
                bound
            }
            PlanOp::BinaryMaxPool { kernel, .. } => {
                // The MSB input is a window sum of 0/1 values, minus one.
                check(RangeCheckKind::Msb, bound * (kernel * kernel) as f64, msb)?;
                1.0
            }
            PlanOp::Reshape => bound,
        };
    }
    Ok(report)
}
