//! Graph rewrites and lowering to a [`CompiledPlan`].
//!
//! Scale policy: inputs carry `input_frac` fractional bits, weights `f`, so
//! a linear layer adds `f`. Before a linear layer or ReLU anything above
//! `f` is truncated away. Before a Sign, truncation is skipped when the
//! value already fits the MSB budget (the sign does not depend on scale),
//! and otherwise brings the scale back to `f`. Sign outputs are integers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bn::{fuse_bn_relu, fuse_bn_sign};
use super::plan::{CompiledPlan, PlanOp, PlanStep};
use super::range::{self, analyze_ranges};
use super::{conv_kind, ConvKind, Layer, ModelGraph};
use crate::error::ModelError;
use crate::linear::{truncation_budget, LinearKind};
use crate::nonlinear::msb_budget;
use crate::ring::{FixedPointCodec, RingElem};
use crate::tensor::ConvGeom;

/// Smallest input channel count that gets a separable substitution.
pub const DEFAULT_SEPARABLE_THRESHOLD: usize = 16;

/// How a substituted depthwise/pointwise pair is initialised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeparableInit {
    /// Depthwise centre tap 1; pointwise weights are the original kernel
    /// sums, so spatially constant inputs map exactly as before.
    FromKernel,
    /// Uniform in `±1/√fan_in` from a seeded generator; for retraining.
    Random(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CompileOptions {
    /// Replace standard convolutions with at least this many input
    /// channels by depthwise + pointwise. Off unless requested: it changes
    /// what the network computes.
    pub separable: Option<(usize, SeparableInit)>,
}

/// Splits a standard convolution into depthwise + pointwise when it has at
/// least `threshold` input channels; any other layer is returned as is.
pub fn substitute_separable(layer: &Layer, threshold: usize, init: SeparableInit) -> Vec<Layer> {
    let Layer::Conv { geom, weight, bias } = layer else {
        return vec![layer.clone()];
    };
    let kk = geom.kernel_h * geom.kernel_w;
    if conv_kind(geom) != ConvKind::Standard || geom.groups != 1 || kk == 1 || geom.in_ch < threshold {
        return vec![layer.clone()];
    }
    let (cin, cout) = (geom.in_ch, geom.out_ch);
    let dw_geom = ConvGeom {
        groups: cin,
        out_ch: cin,
        ..*geom
    };
    let pw_geom = ConvGeom::pointwise(cin, cout);
    let (dw, pw) = match init {
        SeparableInit::FromKernel => {
            let mut dw = vec![0.0; cin * kk];
            let centre = (geom.kernel_h / 2) * geom.kernel_w + geom.kernel_w / 2;
            for c in 0..cin {
                dw[c * kk + centre] = 1.0;
            }
            let pw = (0..cout * cin)
                .map(|k| weight[k * kk..(k + 1) * kk].iter().sum())
                .collect();
            (dw, pw)
        }
        SeparableInit::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut draw = |n: usize, fan_in: usize| -> Vec<f64> {
                let a = 1.0 / (fan_in as f64).sqrt();
                (0..n).map(|_| rng.gen_range(-a..a)).collect()
            };
            (draw(cin * kk, kk), draw(cout * cin, cin))
        }
    };
    vec![
        Layer::Conv {
            geom: dw_geom,
            weight: dw,
            bias: vec![0.0; cin],
        },
        Layer::Conv {
            geom: pw_geom,
            weight: pw,
            bias: bias.clone(),
        },
    ]
}

/// The MPC-friendly rewrites: batch-norm fusion, Sign + MaxPool fusion,
/// and optional separable substitution. Idempotent.
pub fn compile_graph(graph: &ModelGraph, opts: &CompileOptions) -> Result<ModelGraph, ModelError> {
    graph.validate()?;
    let src = &graph.layers;
    let mut out: Vec<Layer> = Vec::with_capacity(src.len());
    let mut i = 0;
    while i < src.len() {
        let next = src.get(i + 1);
        match &src[i] {
            Layer::BatchNorm(bn) => {
                if matches!(next, Some(Layer::Sign) | Some(Layer::SignMaxPool { .. })) {
                    let t = fuse_bn_sign(bn).map_err(|(channel, gamma)| ModelError::NonPositiveGamma { layer: i, channel, gamma })?;
                    out.push(Layer::Threshold { t });
                } else {
                    match out.last_mut() {
                        Some(Layer::Fc { weight, bias, .. }) | Some(Layer::Conv { weight, bias, .. }) => {
                            let (w, b) = fuse_bn_relu(weight, bias, bn);
                            *weight = w;
                            *bias = b;
                        }
                        _ => {
                            return Err(ModelError::Invalid {
                                layer: i,
                                kind: "batchnorm",
                                msg: "must follow a linear layer or precede a Sign".into(),
                            })
                        }
                    }
                }
            }
            Layer::Sign => {
                if let Some(Layer::MaxPool { kernel, stride }) = next {
                    out.push(Layer::SignMaxPool {
                        kernel: *kernel,
                        stride: *stride,
                    });
                    i += 1;
                } else {
                    out.push(Layer::Sign);
                }
            }
            Layer::MaxPool { .. } => {
                return Err(ModelError::Invalid {
                    layer: i,
                    kind: "maxpool",
                    msg: "max-pooling is only supported directly after a Sign".into(),
                })
            }
            l @ Layer::Conv { .. } => match opts.separable {
                Some((threshold, init)) => out.extend(substitute_separable(l, threshold, init)),
                None => out.push(l.clone()),
            },
            l => out.push(l.clone()),
        }
        i += 1;
    }
    let g = ModelGraph {
        config: graph.config,
        input_shape: graph.input_shape.clone(),
        layers: out,
    };
    g.validate()?;
    Ok(g)
}

struct Lowering {
    codec: FixedPointCodec,
    msb_budget: f64,
    steps: Vec<PlanStep>,
    shape: Vec<usize>,
    scale: u32,
    bound: f64,
}

impl Lowering {
    fn f(&self) -> u32 {
        self.codec.frac_bits()
    }

    fn push(&mut self, layer: usize, op: PlanOp, out_shape: Vec<usize>) {
        let in_shape = std::mem::replace(&mut self.shape, out_shape.clone());
        self.steps.push(PlanStep {
            layer,
            op,
            in_shape,
            out_shape,
            scale: self.scale,
        });
    }

    fn truncate(&mut self, layer: usize, bits: u32) -> Result<(), ModelError> {
        let budget = truncation_budget(self.codec.ring()) as f64;
        if self.bound >= budget {
            return Err(ModelError::RangeBudget {
                layer,
                kind: "truncate",
                bound: self.bound,
                budget,
            });
        }
        self.scale -= bits;
        self.bound = range::truncated_bound(self.bound, bits);
        let shape = self.shape.clone();
        self.push(layer, PlanOp::Truncate { bits }, shape);
        Ok(())
    }

    fn reduce_to_f(&mut self, layer: usize) -> Result<(), ModelError> {
        if self.scale > self.f() {
            self.truncate(layer, self.scale - self.f())?;
        }
        Ok(())
    }

    /// Prepares a value for an MSB-based step, plus an optional threshold
    /// (real units) that will be added after any truncation.
    fn prepare_msb(&mut self, layer: usize, t: Option<&[f64]>) -> Result<(), ModelError> {
        let t_raw = |s: &Self| t.map_or(0.0, |t| t.iter().fold(0.0f64, |m, v| m.max(v.abs())) * (s.scale as f64).exp2());
        if self.bound + t_raw(self) + 1.0 >= self.msb_budget {
            self.reduce_to_f(layer)?;
        }
        Ok(())
    }

    fn encode(&self, layer: usize, kind: &'static str, v: &[f64], scale: u32) -> Result<Vec<RingElem>, ModelError> {
        v.iter()
            .map(|&x| {
                self.codec.encode_at(x, scale).map_err(|e| ModelError::Invalid {
                    layer,
                    kind,
                    msg: e.to_string(),
                })
            })
            .collect()
    }
}

/// Rewrites `graph` and lowers it to secure operations with proved ranges.
pub fn compile(graph: &ModelGraph, opts: &CompileOptions) -> Result<CompiledPlan, ModelError> {
    let g = compile_graph(graph, opts)?;
    let cfg = g.config;
    let codec = cfg.codec()?;
    let mut lo = Lowering {
        codec,
        msb_budget: msb_budget(cfg.ring_bits, cfg.mask_bits) as f64,
        steps: Vec::new(),
        shape: g.input_shape.clone(),
        scale: cfg.input_frac,
        bound: range::input_bound(cfg.input_frac),
    };
    let ring = codec.ring();
    for (i, layer) in g.layers.iter().enumerate() {
        let next = g.layers.get(i + 1);
        let out_shape = layer.output_shape(i, &lo.shape)?;
        match layer {
            Layer::Fc { weight, bias, .. } | Layer::Conv { weight, bias, .. } => {
                lo.reduce_to_f(i)?;
                let kind = match layer {
                    Layer::Fc {
                        in_features,
                        out_features,
                        ..
                    } => LinearKind::Fc {
                        in_features: *in_features,
                        out_features: *out_features,
                    },
                    Layer::Conv { geom, .. } => LinearKind::Conv(*geom),
                    _ => unreachable!(),
                };
                let out_scale = lo.scale + lo.f();
                let w = lo.encode(i, layer.name(), weight, lo.f())?;
                let b = lo.encode(i, layer.name(), bias, out_scale)?;
                lo.bound = range::linear_bound(ring, &kind, &w, &b, lo.bound);
                lo.scale = out_scale;
                lo.push(i, PlanOp::Linear { kind, weight: w, bias: b }, out_shape);
            }
            Layer::Threshold { t } => {
                if matches!(next, Some(Layer::Sign) | Some(Layer::SignMaxPool { .. })) {
                    lo.prepare_msb(i, Some(t))?;
                }
                let raw = lo.encode(i, "threshold", t, lo.scale)?;
                lo.bound += range::max_abs_raw(ring, &raw);
                lo.push(i, PlanOp::AddThreshold { t: raw }, out_shape);
            }
            Layer::Sign => {
                lo.prepare_msb(i, None)?;
                lo.scale = 0;
                lo.bound = 1.0;
                lo.push(i, PlanOp::Sign, out_shape);
            }
            Layer::SignMaxPool { kernel, stride } => {
                lo.prepare_msb(i, None)?;
                lo.scale = 0;
                lo.bound = 1.0;
                let shape = lo.shape.clone();
                lo.push(i, PlanOp::Sign, shape);
                lo.push(
                    i,
                    PlanOp::BinaryMaxPool {
                        kernel: *kernel,
                        stride: *stride,
                    },
                    out_shape,
                );
            }
            Layer::Relu => {
                lo.reduce_to_f(i)?;
                lo.push(i, PlanOp::Relu, out_shape);
            }
            Layer::Flatten => lo.push(i, PlanOp::Reshape, out_shape),
            Layer::BatchNorm(_) | Layer::MaxPool { .. } => unreachable!("removed by compile_graph"),
        }
    }
    let mut plan = CompiledPlan {
        config: cfg,
        graph: g,
        steps: lo.steps,
        ranges: Default::default(),
    };
    plan.ranges = analyze_ranges(&plan)?;
    Ok(plan)
}
