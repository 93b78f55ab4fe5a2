//! Plaintext model graphs and the rewrites that make them MPC-friendly.

mod bn;
mod compile;
mod plan;
mod range;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, ShapeError};
use crate::ring::{FixedPointCodec, Ring};
use crate::tensor::ConvGeom;

pub use bn::{fuse_bn_relu, fuse_bn_sign, BnParams, DEFAULT_BN_EPS};
pub use compile::{compile, compile_graph, substitute_separable, CompileOptions, SeparableInit, DEFAULT_SEPARABLE_THRESHOLD};
pub use plan::{phases, CompiledPlan, PlanOp, PlanStep, Reveal};
pub use range::{analyze_ranges, RangeCheck, RangeCheckKind, RangeReport};

/// Numeric parameters a model is compiled for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumericConfig {
    /// Ring width `l`.
    pub ring_bits: u32,
    /// Fractional bits `f` of weights and activations.
    pub frac_bits: u32,
    /// Width `d` of the multiplicative mask in MSB extraction.
    pub mask_bits: u32,
    /// Fractional bits the input is encoded with. Integer-valued inputs
    /// (e.g. binary images) can use 0 and avoid truncating the first layer.
    pub input_frac: u32,
}

impl Default for NumericConfig {
    fn default() -> Self {
        Self {
            ring_bits: 32,
            frac_bits: FixedPointCodec::DEFAULT_FRAC_BITS,
            mask_bits: crate::nonlinear::DEFAULT_MSB_MASK_BITS,
            input_frac: FixedPointCodec::DEFAULT_FRAC_BITS,
        }
    }
}

impl NumericConfig {
    pub fn ring(&self) -> Result<Ring, ModelError> {
        Ok(Ring::new(self.ring_bits)?)
    }

    pub fn codec(&self) -> Result<FixedPointCodec, ModelError> {
        Ok(FixedPointCodec::new(self.ring()?, self.frac_bits)?)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| ModelError::Invalid {
            layer: 0,
            kind: "config",
            msg,
        };
        self.codec()?;
        if self.mask_bits == 0 || self.mask_bits + 3 > self.ring_bits {
            return Err(bad(format!("mask width {} unusable with l = {}", self.mask_bits, self.ring_bits)));
        }
        if self.input_frac > self.frac_bits {
            return Err(bad(format!("input scale {} exceeds f = {}", self.input_frac, self.frac_bits)));
        }
        if 2 * self.frac_bits + 2 > self.ring_bits {
            return Err(bad(format!("f = {} leaves no room for products in {} bits", self.frac_bits, self.ring_bits)));
        }
        Ok(())
    }
}

/// One layer with real-valued parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    /// `y = W x + b` with `W` laid out `[out, in]`.
    Fc {
        in_features: usize,
        out_features: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    /// Convolution; depthwise and pointwise are special geometries.
    Conv { geom: ConvGeom, weight: Vec<f64>, bias: Vec<f64> },
    BatchNorm(BnParams),
    /// `x + t` per channel; what a batch-norm before a Sign fuses into.
    Threshold { t: Vec<f64> },
    /// 1 for non-negative inputs, 0 otherwise.
    Sign,
    Relu,
    MaxPool { kernel: usize, stride: usize },
    /// Sign followed by max-pooling, computed without comparisons.
    SignMaxPool { kernel: usize, stride: usize },
    Flatten,
}

/// Coarse kind of a convolution, read off its geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKind {
    Standard,
    Depthwise,
    Pointwise,
}

pub fn conv_kind(g: &ConvGeom) -> ConvKind {
    if g.groups > 1 && g.groups == g.in_ch && g.groups == g.out_ch {
        ConvKind::Depthwise
    } else if g.kernel_h == 1 && g.kernel_w == 1 && g.groups == 1 {
        ConvKind::Pointwise
    } else {
        ConvKind::Standard
    }
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Fc { .. } => "fc",
            Layer::Conv { geom, .. } => match conv_kind(geom) {
                ConvKind::Standard => "conv",
                ConvKind::Depthwise => "dwconv",
                ConvKind::Pointwise => "pwconv",
            },
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Threshold { .. } => "threshold",
            Layer::Sign => "sign",
            Layer::Relu => "relu",
            Layer::MaxPool { .. } => "maxpool",
            Layer::SignMaxPool { .. } => "sign_maxpool",
            Layer::Flatten => "flatten",
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Layer::Fc { .. } | Layer::Conv { .. })
    }

    /// Number of trainable parameters.
    pub fn param_count(&self) -> usize {
        match self {
            Layer::Fc { weight, bias, .. } | Layer::Conv { weight, bias, .. } => weight.len() + bias.len(),
            Layer::BatchNorm(bn) => 2 * bn.gamma.len(),
            Layer::Threshold { t } => t.len(),
            _ => 0,
        }
    }

    /// Weight count only (the figure separable substitution shrinks).
    pub fn weight_count(&self) -> usize {
        match self {
            Layer::Fc { weight, .. } | Layer::Conv { weight, .. } => weight.len(),
            _ => 0,
        }
    }

    /// Output shape for a given input shape; checks parameter lengths.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>, ModelError> {
        let invalid = |msg: String| ModelError::Invalid {
            layer: index,
            kind: self.name(),
            msg,
        };
        let channels = |input: &[usize]| if input.len() == 3 { input[0] } else { input.iter().product() };
        match self {
            Layer::Fc {
                in_features,
                out_features,
                weight,
                bias,
            } => {
                let n: usize = input.iter().product();
                if n != *in_features {
                    return Err(invalid(format!("expects {in_features} inputs, got shape {input:?}")));
                }
                if weight.len() != in_features * out_features || bias.len() != *out_features {
                    return Err(invalid(format!(
                        "parameter lengths {}/{} do not match {out_features}x{in_features}",
                        weight.len(),
                        bias.len()
                    )));
                }
                Ok(vec![*out_features])
            }
            Layer::Conv { geom, weight, bias } => {
                if weight.len() != geom.weight_len() || bias.len() != geom.out_ch {
                    return Err(invalid(format!(
                        "parameter lengths {}/{} do not match geometry {geom:?}",
                        weight.len(),
                        bias.len()
                    )));
                }
                geom.output_shape(input).map_err(|e| invalid(e.to_string()))
            }
            Layer::BatchNorm(bn) => {
                bn.validate().map_err(invalid)?;
                if bn.gamma.len() != channels(input) {
                    return Err(invalid(format!("{} channels, input {input:?}", bn.gamma.len())));
                }
                Ok(input.to_vec())
            }
            Layer::Threshold { t } => {
                if t.len() != channels(input) {
                    return Err(invalid(format!("{} thresholds, input {input:?}", t.len())));
                }
                Ok(input.to_vec())
            }
            Layer::Sign | Layer::Relu => Ok(input.to_vec()),
            Layer::MaxPool { kernel, stride } | Layer::SignMaxPool { kernel, stride } => {
                if input.len() != 3 || *kernel == 0 || *stride == 0 || input[1] < *kernel || input[2] < *kernel {
                    return Err(invalid(format!("cannot pool {input:?} with kernel {kernel}, stride {stride}")));
                }
                Ok(vec![
                    input[0],
                    (input[1] - kernel) / stride + 1,
                    (input[2] - kernel) / stride + 1,
                ])
            }
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

/// An ordered list of layers applied to an input of fixed shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGraph {
    pub config: NumericConfig,
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
}

impl ModelGraph {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Self {
        Self {
            config: NumericConfig::default(),
            input_shape,
            layers,
        }
    }

    pub fn with_config(mut self, config: NumericConfig) -> Self {
        self.config = config;
        self
    }

    /// Output shape of every layer, checking that shapes chain.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>, ModelError> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(ShapeError::Geometry(format!("bad input shape {:?}", self.input_shape)).into());
        }
        let mut cur = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            cur = l.output_shape(i, &cur)?;
            out.push(cur.clone());
        }
        Ok(out)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>, ModelError> {
        Ok(self.shapes()?.pop().unwrap_or_else(|| self.input_shape.clone()))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.config.validate()?;
        self.shapes().map(|_| ())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(Layer::weight_count).sum()
    }
}
