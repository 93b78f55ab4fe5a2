use cbnn::error::ModelError;
use cbnn::model::{
    compile, compile_graph, substitute_separable, BnParams, CompileOptions, Layer, ModelGraph, PlanOp, SeparableInit,
    DEFAULT_SEPARABLE_THRESHOLD,
};
use cbnn::oracle::{forward_real, plaintext_forward, ForwardMode};
use cbnn::tensor::ConvGeom;
use cbnn::zoo;

fn opts() -> CompileOptions {
    CompileOptions::default()
}

#[test]
fn batchnorm_and_maxpool_are_fused_away() {
    let g = zoo::mnistnet3_like(4, 8);
    assert_eq!(g.layers.iter().filter(|l| matches!(l, Layer::BatchNorm(_))).count(), 3);
    let c = compile_graph(&g, &opts()).unwrap();
    assert!(!c.layers.iter().any(|l| matches!(l, Layer::BatchNorm(_) | Layer::MaxPool { .. })));
    assert_eq!(c.layers.iter().filter(|l| matches!(l, Layer::SignMaxPool { .. })).count(), 2);
    assert_eq!(c.layers.iter().filter(|l| matches!(l, Layer::Threshold { .. })).count(), 3);
}

#[test]
fn compilation_is_idempotent() {
    for g in [zoo::mnistnet3_like(1, 8), zoo::relu_mlp(3, &[5, 7, 2]), zoo::cifar_block(2)] {
        let o = CompileOptions {
            separable: Some((DEFAULT_SEPARABLE_THRESHOLD, SeparableInit::FromKernel)),
        };
        let once = compile_graph(&g, &o).unwrap();
        assert_eq!(compile_graph(&once, &o).unwrap(), once);
        assert_eq!(compile(&once, &o).unwrap(), compile(&g, &o).unwrap());
    }
}

#[test]
fn bare_maxpool_rejected() {
    let g = ModelGraph::new(
        vec![1, 4, 4],
        vec![
            Layer::Conv {
                geom: ConvGeom::standard(1, 1, 1, 1, 0),
                weight: vec![1.0],
                bias: vec![0.0],
            },
            Layer::Relu,
            Layer::MaxPool { kernel: 2, stride: 2 },
        ],
    );
    match compile_graph(&g, &opts()).unwrap_err() {
        ModelError::Invalid { layer, kind, .. } => assert_eq!((layer, kind), (2, "maxpool")),
        e => panic!("{e}"),
    }
}

#[test]
fn negative_gamma_before_sign_names_layer_and_channel() {
    let mut bn = BnParams::identity(3);
    bn.gamma[1] = -1.0;
    let g = ModelGraph::new(
        vec![2],
        vec![
            Layer::Fc {
                in_features: 2,
                out_features: 3,
                weight: vec![0.1; 6],
                bias: vec![0.0; 3],
            },
            Layer::BatchNorm(bn),
            Layer::Sign,
        ],
    );
    assert_eq!(
        compile_graph(&g, &opts()).unwrap_err(),
        ModelError::NonPositiveGamma {
            layer: 1,
            channel: 1,
            gamma: -1.0
        }
    );
}

#[test]
fn range_violation_names_layer() {
    // Weights of 100 on 64 inputs overflow the output scale 2f in 32 bits.
    let g = ModelGraph::new(
        vec![64],
        vec![Layer::Fc {
            in_features: 64,
            out_features: 1,
            weight: vec![100.0; 64],
            bias: vec![0.0],
        }],
    );
    match compile(&g, &opts()).unwrap_err() {
        ModelError::RangeBudget { layer, kind, bound, budget } => {
            assert_eq!((layer, kind), (0, "fc"));
            assert!(bound >= budget);
        }
        e => panic!("{e}"),
    }
}

#[test]
fn msb_inputs_within_budget_in_plans() {
    for g in [zoo::mnistnet3_like(5, 12), zoo::exact_net(7), zoo::relu_mlp(1, &[4, 4, 4])] {
        let plan = compile(&g, &opts()).unwrap();
        assert!(plan.ranges.msb_checks().count() > 0);
        assert!(plan.ranges.checks.iter().all(|c| c.bound < c.budget));
    }
}

#[test]
fn sign_after_small_linear_skips_truncation() {
    let plan = compile(&zoo::exact_net(0), &opts()).unwrap();
    assert!(!plan.steps.iter().any(|s| matches!(s.op, PlanOp::Truncate { .. })));
    // Real-valued first layer must come back to scale f before its Sign.
    let plan = compile(&zoo::mnistnet3_like(0, 8), &opts()).unwrap();
    assert!(matches!(plan.steps[1].op, PlanOp::Truncate { bits: 13 }));
    assert_eq!(plan.truncations(), 1);
}

#[test]
fn separable_substitution_rules() {
    let small = Layer::Conv {
        geom: ConvGeom::standard(3, 8, 3, 1, 1),
        weight: vec![0.1; 3 * 8 * 9],
        bias: vec![0.0; 8],
    };
    assert_eq!(substitute_separable(&small, 4, SeparableInit::FromKernel), vec![small.clone()]);

    let big = Layer::Conv {
        geom: ConvGeom::standard(32, 64, 3, 1, 1),
        weight: vec![0.01; 32 * 64 * 9],
        bias: vec![0.0; 64],
    };
    let pair = substitute_separable(&big, 16, SeparableInit::Random(1));
    assert_eq!(pair.len(), 2);
    assert_eq!(pair.iter().map(Layer::weight_count).sum::<usize>(), 2336);
    assert_eq!(big.weight_count(), 18432);
    let (a, b) = (
        ModelGraph::new(vec![32, 5, 5], vec![big]),
        ModelGraph::new(vec![32, 5, 5], pair),
    );
    assert_eq!(a.output_shape().unwrap(), b.output_shape().unwrap());
}

#[test]
fn kernel_initialised_substitution_exact_on_constant_planes() {
    let big = zoo::cifar_block(3).layers[3].clone();
    let Layer::Conv { geom, .. } = &big else { panic!() };
    let geom = ConvGeom { padding: 0, ..*geom };
    let big = match big {
        Layer::Conv { weight, bias, .. } => Layer::Conv { geom, weight, bias },
        _ => unreachable!(),
    };
    let a = ModelGraph::new(vec![64, 4, 4], vec![big.clone()]);
    let b = ModelGraph::new(vec![64, 4, 4], substitute_separable(&big, 16, SeparableInit::FromKernel));
    let x: Vec<f64> = (0..64).flat_map(|c| vec![(c as f64 * 0.37).sin(); 16]).collect();
    let (ya, yb) = (forward_real(&a, &x).unwrap(), forward_real(&b, &x).unwrap());
    for (p, q) in ya.iter().zip(&yb) {
        assert!((p - q).abs() < 1e-9);
    }
}

#[test]
fn fused_matches_unfused_forward() {
    let g = zoo::mnistnet3_like(11, 8);
    let c = compile_graph(&g, &opts()).unwrap();
    for x in zoo::real_inputs(1, 64, 50) {
        let a = forward_real(&g, &x).unwrap();
        let b = forward_real(&c, &x).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-9));
        let f = plaintext_forward(&g, &x, ForwardMode::FixedPoint(opts())).unwrap();
        let r = plaintext_forward(&c, &x, ForwardMode::FixedPoint(opts())).unwrap();
        assert_eq!(f, r);
    }
}
