//! Seeded example networks used by tests, benchmarks and the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{BnParams, Layer, ModelGraph, NumericConfig, DEFAULT_BN_EPS};
use crate::tensor::ConvGeom;

fn uniform(rng: &mut ChaCha8Rng, n: usize, a: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-a..a)).collect()
}

fn fc(rng: &mut ChaCha8Rng, inp: usize, out: usize, scale: f64) -> Layer {
    let a = scale / (inp as f64).sqrt();
    Layer::Fc {
        in_features: inp,
        out_features: out,
        weight: uniform(rng, inp * out, a),
        bias: uniform(rng, out, a),
    }
}

fn conv(rng: &mut ChaCha8Rng, geom: ConvGeom, scale: f64) -> Layer {
    let a = scale / ((geom.in_per_group() * geom.kernel_h * geom.kernel_w) as f64).sqrt();
    Layer::Conv {
        geom,
        weight: uniform(rng, geom.weight_len(), a),
        bias: uniform(rng, geom.out_ch, a),
    }
}

fn bn(rng: &mut ChaCha8Rng, c: usize) -> Layer {
    Layer::BatchNorm(BnParams {
        gamma: (0..c).map(|_| rng.gen_range(0.5..1.5)).collect(),
        beta: uniform(rng, c, 0.3),
        mean: uniform(rng, c, 0.3),
        var: (0..c).map(|_| rng.gen_range(0.5..1.5)).collect(),
        eps: DEFAULT_BN_EPS,
    })
}

/// Integer-input network of FC/Conv/Sign layers that needs no truncation,
/// so secure inference is exact. Inputs are drawn from `{-1, 0, 1}`.
pub fn exact_net(seed: u64) -> ModelGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = NumericConfig {
        input_frac: 0,
        ..NumericConfig::default()
    };
    let g = if rng.gen_bool(0.5) {
        let n0 = rng.gen_range(4..=12);
        let n1 = rng.gen_range(4..=12);
        let n2 = rng.gen_range(3..=8);
        ModelGraph::new(
            vec![n0],
            vec![
                fc(&mut rng, n0, n1, 1.0),
                Layer::Sign,
                fc(&mut rng, n1, n2, 1.0),
                Layer::Sign,
                fc(&mut rng, n2, 4, 1.0),
            ],
        )
    } else {
        let c1 = rng.gen_range(2..=4);
        let pool = rng.gen_bool(0.5);
        let mut layers = vec![conv(&mut rng, ConvGeom::standard(1, c1, 3, 1, 1), 1.0), Layer::Sign];
        let side = if pool {
            layers.push(Layer::MaxPool { kernel: 2, stride: 2 });
            3
        } else {
            6
        };
        layers.push(conv(&mut rng, ConvGeom::standard(c1, 2, 3, 1, 1), 1.0));
        layers.push(Layer::Sign);
        layers.push(Layer::Flatten);
        layers.push(fc(&mut rng, 2 * side * side, 4, 1.0));
        ModelGraph::new(vec![1, 6, 6], layers)
    };
    g.with_config(config)
}

/// Real-input MLP with ReLU activations; every linear layer but the last
/// is followed by a truncation.
pub fn relu_mlp(seed: u64, widths: &[usize]) -> ModelGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    for (k, w) in widths.windows(2).enumerate() {
        layers.push(fc(&mut rng, w[0], w[1], 1.0));
        if k + 2 < widths.len() {
            layers.push(Layer::Relu);
        }
    }
    ModelGraph::new(vec![widths[0]], layers)
}

/// "2 CONV, 2 MP, 2 FC" on a `1×side×side` image with batch-norm before
/// every Sign.
pub fn mnistnet3_like(seed: u64, side: usize) -> ModelGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flat = 8 * (side / 4) * (side / 4);
    ModelGraph::new(
        vec![1, side, side],
        vec![
            conv(&mut rng, ConvGeom::standard(1, 4, 3, 1, 1), 1.0),
            bn(&mut rng, 4),
            Layer::Sign,
            Layer::MaxPool { kernel: 2, stride: 2 },
            conv(&mut rng, ConvGeom::standard(4, 8, 3, 1, 1), 1.0),
            bn(&mut rng, 8),
            Layer::Sign,
            Layer::MaxPool { kernel: 2, stride: 2 },
            Layer::Flatten,
            fc(&mut rng, flat, 32, 1.0),
            bn(&mut rng, 32),
            Layer::Sign,
            fc(&mut rng, 32, 10, 1.0),
        ],
    )
}

/// A CifarNet-style convolutional block on `3×8×8` inputs with standard
/// convolutions of 64 and 128 channels.
pub fn cifar_block(seed: u64) -> ModelGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    for (cin, cout, pool) in [(3, 64, false), (64, 64, true), (64, 128, false), (128, 128, true)] {
        layers.push(conv(&mut rng, ConvGeom::standard(cin, cout, 3, 1, 1), 1.0));
        layers.push(bn(&mut rng, cout));
        layers.push(Layer::Sign);
        if pool {
            layers.push(Layer::MaxPool { kernel: 2, stride: 2 });
        }
    }
    layers.push(Layer::Flatten);
    layers.push(fc(&mut rng, 128 * 2 * 2, 10, 1.0));
    ModelGraph::new(vec![3, 8, 8], layers)
}

/// Uniform inputs in `[-1, 1]`.
pub fn real_inputs(seed: u64, n: usize, count: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()).collect()
}

/// Inputs from `{-1, 0, 1}`.
pub fn ternary_inputs(seed: u64, n: usize, count: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..n).map(|_| rng.gen_range(-1i32..=1) as f64).collect()).collect()
}
