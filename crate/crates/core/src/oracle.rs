//! Plaintext reference implementations: real and fixed-point forward
//! passes, tempered softmax, cross-entropy and the distillation loss.
//!
//! The fixed-point pass mirrors the secure pipeline step by step with
//! deterministic floor truncation, using direct loops rather than the
//! im2col path the parties use.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, ShapeError, TrainError};
use crate::linear::LinearKind;
use crate::model::{CompileOptions, CompiledPlan, Layer, ModelGraph, PlanOp};
use crate::ring::{FixedPointCodec, Ring, RingElem};
use crate::tensor::{ConvGeom, Tensor};

/// Temperature and hard-label weight of the distillation loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub temperature: f64,
    pub lambda: f64,
}

impl DistillConfig {
    pub fn new(temperature: f64, lambda: f64) -> Result<Self, TrainError> {
        let c = Self { temperature, lambda };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(TrainError::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(TrainError::Config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        Ok(())
    }
}

/// `exp(z_i/T) / Σ_j exp(z_j/T)`, shifted by the maximum for stability.
pub fn softmax_t(z: &[f64], temperature: f64) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| ((v - m) / temperature).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `log softmax_T(z)`, computed without forming the probabilities.
pub fn log_softmax_t(z: &[f64], temperature: f64) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = z.iter().map(|v| ((v - m) / temperature).exp()).sum::<f64>().ln();
    z.iter().map(|v| (v - m) / temperature - lse).collect()
}

/// `H(p, q) = −Σ p_i log q_i`. Terms with `p_i = 0` contribute nothing.
pub fn cross_entropy(p: &[f64], q: &[f64]) -> Result<f64, TrainError> {
    if p.len() != q.len() {
        return Err(TrainError::Data(format!("distributions of length {} and {}", p.len(), q.len())));
    }
    let mut h = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(TrainError::Domain { index: i, p: pi });
        }
        h -= pi * qi.ln();
    }
    Ok(h)
}

/// `λ·H(y, softmax(s)) + (1−λ)·H(softmax_T(t), softmax_T(s))`, with the
/// teacher's tempered distribution as the target.
pub fn kd_loss(student: &[f64], teacher: &[f64], label: usize, cfg: &DistillConfig) -> Result<f64, TrainError> {
    cfg.validate()?;
    if student.len() != teacher.len() || label >= student.len() {
        return Err(TrainError::Data(format!(
            "{} student logits, {} teacher logits, label {label}",
            student.len(),
            teacher.len()
        )));
    }
    let hard = -log_softmax_t(student, 1.0)[label];
    if cfg.lambda == 1.0 {
        return Ok(hard);
    }
    let p = softmax_t(teacher, cfg.temperature);
    let log_q = log_softmax_t(student, cfg.temperature);
    let soft: f64 = -p.iter().zip(&log_q).map(|(a, b)| a * b).sum::<f64>();
    Ok(cfg.lambda * hard + (1.0 - cfg.lambda) * soft)
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

/// Gap between the two largest entries.
pub fn top2_margin(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    if s.len() < 2 {
        f64::INFINITY
    } else {
        s[0] - s[1]
    }
}

fn conv_direct<T: Copy>(
    geom: &ConvGeom,
    in_hw: (usize, usize),
    x: &[T],
    w: &[T],
    zero: T,
    mac: impl Fn(T, T, T) -> T,
) -> Result<(Vec<usize>, Vec<T>), ShapeError> {
    let (h, wd) = in_hw;
    let (oh, ow) = geom.output_hw(h, wd)?;
    let (cin, cout) = (geom.in_per_group(), geom.out_per_group());
    let mut out = vec![zero; geom.out_ch * oh * ow];
    for o in 0..geom.out_ch {
        let g = o / cout;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = zero;
                for ci in 0..cin {
                    for ky in 0..geom.kernel_h {
                        let iy = (oy * geom.stride + ky) as isize - geom.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..geom.kernel_w {
                            let ix = (ox * geom.stride + kx) as isize - geom.padding as isize;
                            if ix < 0 || ix >= wd as isize {
                                continue;
                            }
                            let xv = x[((g * cin + ci) * h + iy as usize) * wd + ix as usize];
                            let wv = w[((o * cin + ci) * geom.kernel_h + ky) * geom.kernel_w + kx];
                            acc = mac(acc, wv, xv);
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    Ok((vec![geom.out_ch, oh, ow], out))
}

fn fc_direct<T: Copy>(out: usize, inp: usize, x: &[T], w: &[T], zero: T, mac: impl Fn(T, T, T) -> T) -> Vec<T> {
    (0..out)
        .map(|o| (0..inp).fold(zero, |acc, j| mac(acc, w[o * inp + j], x[j])))
        .collect()
}

fn pool<T: Copy>(shape: &[usize], x: &[T], kernel: usize, stride: usize, max: impl Fn(T, T) -> T) -> (Vec<usize>, Vec<T>) {
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let (oh, ow) = ((h - kernel) / stride + 1, (w - kernel) / stride + 1);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = x[(ch * h + oy * stride) * w + ox * stride];
                for dy in 0..kernel {
                    for dx in 0..kernel {
                        m = max(m, x[(ch * h + oy * stride + dy) * w + ox * stride + dx]);
                    }
                }
                out.push(m);
            }
        }
    }
    (vec![c, oh, ow], out)
}

fn per_channel(len: usize, channels: usize) -> usize {
    len / channels.max(1)
}

/// Forward pass in `f64`, before or after compilation. Sign maps
/// non-negative values to 1 and the rest to 0.
pub fn forward_real(graph: &ModelGraph, x: &[f64]) -> Result<Vec<f64>, ModelError> {
    let shapes = graph.shapes()?;
    let n_in: usize = graph.input_shape.iter().product();
    if x.len() != n_in {
        return Err(ShapeError::Length {
            shape: graph.input_shape.clone(),
            expected: n_in,
            got: x.len(),
        }
        .into());
    }
    let mut shape = graph.input_shape.clone();
    let mut v = x.to_vec();
    let sign = |v: &mut Vec<f64>| v.iter_mut().for_each(|a| *a = if *a >= 0.0 { 1.0 } else { 0.0 });
    for (layer, out_shape) in graph.layers.iter().zip(shapes) {
        v = match layer {
            Layer::Fc {
                in_features,
                out_features,
                weight,
                bias,
            } => {
                let mut y = fc_direct(*out_features, *in_features, &v, weight, 0.0, |a, w, x| a + w * x);
                y.iter_mut().zip(bias).for_each(|(y, b)| *y += b);
                y
            }
            Layer::Conv { geom, weight, bias } => {
                let (_, mut y) = conv_direct(geom, (shape[1], shape[2]), &v, weight, 0.0, |a, w, x| a + w * x)?;
                let per = per_channel(y.len(), bias.len());
                y.iter_mut().enumerate().for_each(|(k, y)| *y += bias[k / per]);
                y
            }
            Layer::BatchNorm(bn) => bn.apply(&v, per_channel(v.len(), bn.channels())),
            Layer::Threshold { t } => {
                let per = per_channel(v.len(), t.len());
                v.iter().enumerate().map(|(k, a)| a + t[k / per]).collect()
            }
            Layer::Sign => {
                sign(&mut v);
                v
            }
            Layer::Relu => v.iter().map(|a| a.max(0.0)).collect(),
            Layer::MaxPool { kernel, stride } => pool(&shape, &v, *kernel, *stride, f64::max).1,
            Layer::SignMaxPool { kernel, stride } => {
                sign(&mut v);
                pool(&shape, &v, *kernel, *stride, f64::max).1
            }
            Layer::Flatten => v,
        };
        shape = out_shape;
    }
    Ok(v)
}

/// Encodes a real input at the plan's input scale.
pub fn encode_input(plan: &CompiledPlan, x: &[f64]) -> Result<Tensor, crate::Error> {
    let codec = plan.config.codec()?;
    let data = x
        .iter()
        .map(|&v| codec.encode_at(v, plan.config.input_frac))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Tensor::new(plan.input_shape().to_vec(), data)?)
}

/// Decodes a raw output at the plan's output scale.
pub fn decode_output(plan: &CompiledPlan, y: &Tensor) -> Vec<f64> {
    let codec = plan.config.codec().expect("validated at compile time");
    y.data().iter().map(|&v| codec.decode_at(v, plan.output_scale())).collect()
}

/// One fixed-point step on raw ring values.
pub fn fixed_step(ring: Ring, op: &PlanOp, in_shape: &[usize], x: &[RingElem]) -> Result<Vec<RingElem>, ShapeError> {
    let mac = |a: RingElem, w: RingElem, x: RingElem| a.wrapping_add(w.wrapping_mul(x));
    let mut y = match op {
        PlanOp::Linear { kind, weight, bias } => {
            let mut y = match kind {
                LinearKind::Fc {
                    in_features,
                    out_features,
                } => fc_direct(*out_features, *in_features, x, weight, 0, mac),
                LinearKind::Conv(g) => {
                    if in_shape.len() != 3 {
                        return Err(ShapeError::Geometry(format!("convolution input {in_shape:?}")));
                    }
                    conv_direct(g, (in_shape[1], in_shape[2]), x, weight, 0, mac)?.1
                }
            };
            let per = per_channel(y.len(), bias.len());
            y.iter_mut().enumerate().for_each(|(k, y)| *y = y.wrapping_add(bias[k / per]));
            y
        }
        PlanOp::Truncate { bits } => x.iter().map(|&v| ring.shr_signed(v, *bits)).collect(),
        PlanOp::AddThreshold { t } => {
            let per = per_channel(x.len(), t.len());
            x.iter().enumerate().map(|(k, &v)| v.wrapping_add(t[k / per])).collect()
        }
        PlanOp::Sign => x.iter().map(|&v| (ring.msb(v) ^ 1) as RingElem).collect(),
        PlanOp::Relu => x.iter().map(|&v| if ring.msb(v) == 0 { v } else { 0 }).collect(),
        PlanOp::BinaryMaxPool { kernel, stride } => {
            if in_shape.len() != 3 {
                return Err(ShapeError::Geometry(format!("pooling input {in_shape:?}")));
            }
            let signed: Vec<i64> = x.iter().map(|&v| ring.to_signed(v)).collect();
            pool(in_shape, &signed, *kernel, *stride, i64::max)
                .1
                .into_iter()
                .map(|v| ring.from_signed(v))
                .collect()
        }
        PlanOp::Reshape => x.to_vec(),
    };
    y.iter_mut().for_each(|v| *v = ring.reduce(*v));
    Ok(y)
}

/// Fixed-point forward pass; returns the raw output of every step.
pub fn forward_fixed_trace(plan: &CompiledPlan, x: &Tensor) -> Result<Vec<Tensor>, crate::Error> {
    let ring = plan.config.ring()?;
    if x.shape() != plan.input_shape() {
        return Err(ShapeError::Mismatch {
            left: x.shape().to_vec(),
            right: plan.input_shape().to_vec(),
        }
        .into());
    }
    let mut cur = x.clone();
    let mut out = Vec::with_capacity(plan.steps.len());
    for step in &plan.steps {
        let y = fixed_step(ring, &step.op, cur.shape(), cur.data())?;
        cur = Tensor::new(step.out_shape.clone(), y)?;
        out.push(cur.clone());
    }
    Ok(out)
}

/// Fixed-point forward pass on a raw input; returns the raw output.
pub fn forward_fixed(plan: &CompiledPlan, x: &Tensor) -> Result<Tensor, crate::Error> {
    Ok(forward_fixed_trace(plan, x)?.pop().unwrap_or_else(|| x.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Real,
    /// Compile with these options, then run in fixed point.
    FixedPoint(CompileOptions),
}

/// Forward pass of a graph on real inputs, returning decoded outputs.
pub fn plaintext_forward(graph: &ModelGraph, x: &[f64], mode: ForwardMode) -> Result<Vec<f64>, crate::Error> {
    match mode {
        ForwardMode::Real => Ok(forward_real(graph, x)?),
        ForwardMode::FixedPoint(opts) => {
            let plan = crate::model::compile(graph, &opts)?;
            let y = forward_fixed(&plan, &encode_input(&plan, x)?)?;
            Ok(decode_output(&plan, &y))
        }
    }
}

/// Codec of a plan, for decoding intermediate steps at their own scale.
pub fn decode_at(codec: &FixedPointCodec, t: &Tensor, scale: u32) -> Vec<f64> {
    t.data().iter().map(|&v| codec.decode_at(v, scale)).collect()
}
