//! Acceptance suite. Prints one line per criterion and exits non-zero if
//! any fatal criterion fails. Criterion 8 is statistical and reported only.

use std::net::TcpListener;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use cbnn::cost::{self, Cost};
use cbnn::engine::{simulate, EngineOptions};
use cbnn::io::save_model;
use cbnn::linear::truncate;
use cbnn::model::{
    compile, BnParams, CompileOptions, CompiledPlan, Layer, ModelGraph, PlanOp, Reveal, SeparableInit,
    DEFAULT_SEPARABLE_THRESHOLD,
};
use cbnn::nonlinear::{fused_sign_maxpool, msb_budget, msb_extract, msb_extract_view, secure_relu, secure_sign};
use cbnn::oracle::{argmax, decode_output, encode_input, fixed_step, forward_fixed, forward_real, plaintext_forward};
use cbnn::oracle::{top2_margin, DistillConfig, ForwardMode};
use cbnn::ot::{input_for, ot3_transfer, OtRoles};
use cbnn::sharing::ops::{mul, share_input};
use cbnn::sharing::{reconstruct_all, reconstruct_bits_all, share_secret, RssShare, SetupSeeds};
use cbnn::stats::{chi_square_critical, chi_square_uniform, low_byte_uniformity};
use cbnn::train::{run_toy, DataSpec, ToyConfig, TrainConfig};
use cbnn::transport::{estimate_time, run_three_parties, tags, Mode, NetProfile, PartyId, RunOutput, TrafficStats};
use cbnn::{zoo, Party, Result as CResult, Ring, Tensor};

const C1_NETS: u64 = 20;
const C1_INPUTS: usize = 100;
const C1_SECONDS: f64 = 60.0;
const C2_ULP_PER_TRUNCATION: i64 = 1;
const C2_ARGMAX_RATE: f64 = 0.99;
const C2_MARGIN: f64 = 1.0 / 256.0;
const C3_SAMPLES: usize = 100_000;
const C3_MASK_BITS: u32 = 8;
const C4_RELU_SAMPLES: usize = 10_000;
const C6_INPUTS: usize = 1_000;
const C6_REAL_TOL: f64 = 1e-9;
const C7_MIN_REDUCTION: f64 = 0.80;
const C8_SEEDS: u64 = 5;
const C8_SECONDS: f64 = 300.0;
const C9_ALPHA: f64 = 0.01;
const C9_MIN_SAMPLES: u64 = 10_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn ring32() -> Ring {
    Ring::new(32).unwrap()
}

fn run<T: Send>(ring: Ring, seed: u64, f: impl Fn(&mut Party) -> CResult<T> + Sync) -> RunOutput<T> {
    run_three_parties(SetupSeeds::from_u64(seed), ring, Mode::InProcess, f).unwrap()
}

fn shared(ring: Ring, vals: &[i64], seed: u64) -> [RssShare; 3] {
    let t = Tensor::vector(vals.iter().map(|&v| ring.from_signed(v)).collect());
    share_secret(ring, &t, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn plan_of(g: &ModelGraph) -> CompiledPlan {
    compile(g, &CompileOptions::default()).unwrap()
}

fn c1_exact_equivalence() -> Outcome {
    let t0 = Instant::now();
    let (mut ok, mut total, mut convs) = (0, 0, 0);
    for seed in 0..C1_NETS {
        let g = zoo::exact_net(seed);
        convs += usize::from(matches!(g.layers[0], Layer::Conv { .. }));
        let plan = plan_of(&g);
        assert_eq!(plan.truncations(), 0);
        let n: usize = plan.input_shape().iter().product();
        for (k, x) in zoo::ternary_inputs(1000 + seed, n, C1_INPUTS).iter().enumerate() {
            let input = encode_input(&plan, x).unwrap();
            let want = forward_fixed(&plan, &input).unwrap();
            let sim = simulate(&plan, &input, seed * 7919 + k as u64, Mode::InProcess, EngineOptions::default()).unwrap();
            total += 1;
            ok += usize::from(sim.output() == &want);
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        ok == total && secs < C1_SECONDS,
        format!("{ok}/{total} bit-exact over {C1_NETS} nets ({convs} conv, {} fc) in {secs:.1}s (limit {C1_SECONDS}s)", C1_NETS as usize - convs),
    )
}

fn c2_truncation() -> Outcome {
    let mut nets: Vec<ModelGraph> = (0..4).map(|s| zoo::relu_mlp(s, &[16, 32, 16, 10])).collect();
    nets.extend((0..3).map(|s| zoo::mnistnet3_like(s, 8)));
    let ring = ring32();
    let (mut worst, mut counted, mut agree, mut steps_checked) = (0i64, 0usize, 0usize, 0usize);
    let mut bad_step = None;
    for (ni, g) in nets.iter().enumerate() {
        let plan = plan_of(g);
        assert!(plan.truncations() > 0);
        let n: usize = plan.input_shape().iter().product();
        for (k, x) in zoo::real_inputs(200 + ni as u64, n, 100).iter().enumerate() {
            let input = encode_input(&plan, x).unwrap();
            let opts = EngineOptions {
                reveal: Reveal::All,
                trace: true,
            };
            let sim = simulate(&plan, &input, (ni * 1000 + k) as u64, Mode::InProcess, opts).unwrap();
            let [a, b, c] = &sim.results;
            let open = |i: usize| reconstruct_all(ring, &[a.trace[i].clone(), b.trace[i].clone(), c.trace[i].clone()]).unwrap();
            for (i, step) in plan.steps.iter().enumerate() {
                let (inp, got) = (open(i), open(i + 1));
                let local = fixed_step(ring, &step.op, inp.shape(), inp.data()).unwrap();
                let slack = if matches!(step.op, PlanOp::Truncate { .. }) { C2_ULP_PER_TRUNCATION } else { 0 };
                for (g, w) in got.data().iter().zip(&local) {
                    let d = (ring.to_signed(*w) - ring.to_signed(*g)).abs();
                    worst = worst.max(d);
                    if d > slack {
                        bad_step.get_or_insert((ni, i, d));
                    }
                }
                steps_checked += 1;
            }
            let real = forward_real(g, x).unwrap();
            if top2_margin(&real) > C2_MARGIN {
                counted += 1;
                agree += usize::from(argmax(&decode_output(&plan, sim.output())) == argmax(&real));
            }
        }
    }
    let rate = agree as f64 / counted.max(1) as f64;
    outcome(
        bad_step.is_none() && rate >= C2_ARGMAX_RATE,
        format!(
            "{steps_checked} steps, max per-step deviation {worst} ulp (bad: {bad_step:?}); argmax {agree}/{counted} = {:.2}% (≥ {:.0}%) on margin > 2^-8",
            100.0 * rate,
            100.0 * C2_ARGMAX_RATE
        ),
    )
}

fn msb_agreement(ring: Ring, vals: &[i64], d: u32, seed: u64) -> usize {
    let x = shared(ring, vals, seed);
    let out = run(ring, seed + 1, |p| msb_extract(p, &x[p.id().index()], d));
    let bits = reconstruct_bits_all(&out.outputs).unwrap();
    vals.iter().zip(bits.data()).filter(|(v, b)| **b == u8::from(**v < 0)).count()
}

fn c3_msb() -> Outcome {
    let ring = ring32();
    let b = msb_budget(32, C3_MASK_BITS) as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let vals: Vec<i64> = (0..C3_SAMPLES).map(|_| rng.gen_range(-b + 1..b)).collect();
    let ok32 = msb_agreement(ring, &vals, C3_MASK_BITS, 30);

    let r16 = Ring::new(16).unwrap();
    let b16 = msb_budget(16, 4) as i64;
    let all16: Vec<i64> = (-b16 + 1..b16).collect();
    let ok16 = msb_agreement(r16, &all16, 4, 31);
    outcome(
        ok32 == vals.len() && ok16 == all16.len(),
        format!(
            "l=32 d={C3_MASK_BITS}: {ok32}/{} random in (−2^{}, 2^{}); l=16 d=4 exhaustive: {ok16}/{}",
            vals.len(),
            b.ilog2(),
            b.ilog2(),
            all16.len()
        ),
    )
}

fn c4_sign_relu_maxpool() -> Outcome {
    let ring = ring32();
    // All 16 binary 2×2 windows side by side.
    let mut img = vec![0u64; 64];
    for w in 0..16 {
        for (k, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
            img[dy * 32 + w * 2 + dx] = ((w >> k) & 1) as u64;
        }
    }
    let t = Tensor::new(vec![1, 2, 32], img).unwrap();
    let x = share_secret(ring, &t, &mut ChaCha8Rng::seed_from_u64(40));
    let out = run(ring, 41, |p| fused_sign_maxpool(p, &x[p.id().index()], 2, 2, 8));
    let pooled = reconstruct_all(ring, &out.outputs).unwrap();
    let pool_ok = (0..16).filter(|&w| pooled.data()[w] == u64::from(w != 0)).count();

    // Sign truth table on the same 16 windows, element by element.
    let sgn_vals: Vec<i64> = vec![-3, -1, 0, 1, 2, -8192, 8192, i64::from(i16::MIN), 77, -77, 5, -5, 1 << 20, -(1 << 20), 9, -9];
    let xs = shared(ring, &sgn_vals, 42);
    let out = run(ring, 43, |p| {
        let m = msb_extract(p, &xs[p.id().index()], 8)?;
        secure_sign(p, &m)
    });
    let sg = reconstruct_all(ring, &out.outputs).unwrap();
    let sign_ok = sgn_vals.iter().zip(sg.data()).filter(|(v, s)| **s == u64::from(**v >= 0)).count();

    let b = msb_budget(32, 8) as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let vals: Vec<i64> = (0..C4_RELU_SAMPLES).map(|_| rng.gen_range(-b + 1..b)).collect();
    let xr = shared(ring, &vals, 45);
    let out = run(ring, 46, |p| {
        let i = p.id().index();
        let m = msb_extract(p, &xr[i], 8)?;
        secure_relu(p, &xr[i], &m)
    });
    let y = reconstruct_all(ring, &out.outputs).unwrap();
    let relu_ok = vals.iter().zip(y.data()).filter(|(v, y)| ring.to_signed(**y) == (**v).max(0)).count();
    outcome(
        pool_ok == 16 && sign_ok == sgn_vals.len() && relu_ok == vals.len(),
        format!("maxpool windows {pool_ok}/16, sign {sign_ok}/{}, relu {relu_ok}/{}", sgn_vals.len(), vals.len()),
    )
}

fn measured_delta(stats: &[TrafficStats; 3]) -> Cost {
    cost::measured(stats)
}

fn c5_accounting() -> Outcome {
    let ring = ring32();
    let n = 37;
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let vals: Vec<i64> = (0..n).map(|_| rng.gen_range(-(1 << 20)..1 << 20)).collect();
    let x = shared(ring, &vals, 51);
    let y = shared(ring, &vals, 52);
    let mut checks: Vec<(&str, Cost, Cost)> = Vec::new();

    let s = run(ring, 53, |p| {
        let t = (p.id() == PartyId::P0).then(|| Tensor::vector(vec![1; n]));
        share_input(p, PartyId::P0, t.as_ref(), &[n])
    });
    checks.push(("input deal (1 round)", measured_delta(&s.stats), cost::share_input(32, PartyId::P0, n)));
    let s = run(ring, 54, |p| mul(p, &x[p.id().index()], &y[p.id().index()]));
    checks.push(("reshare (1 round)", measured_delta(&s.stats), cost::reshare(32, n)));
    let s = run(ring, 55, |p| truncate(p, &x[p.id().index()], 13));
    checks.push(("truncation (2)", measured_delta(&s.stats), cost::truncate(32, n)));
    let (m0, m1): (Vec<u64>, Vec<u64>) = ((0..n as u64).collect(), (100..100 + n as u64).collect());
    let choice: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let roles = OtRoles::new(PartyId::P1, PartyId::P0, PartyId::P2);
    let s = run(ring, 56, |p| ot3_transfer(p, roles, input_for(p.id(), roles, (&m0, &m1), &choice)));
    let ot_ok = s.outputs[0].as_deref() == Some(&(0..n).map(|i| if i % 2 == 1 { m1[i] } else { m0[i] }).collect::<Vec<_>>()[..]);
    checks.push(("3-party OT (2 legs)", measured_delta(&s.stats), cost::ot3(32, PartyId::P1, PartyId::P2, n)));
    let s = run(ring, 57, |p| msb_extract(p, &x[p.id().index()], 8));
    checks.push(("msb_extract (4)", measured_delta(&s.stats), cost::msb(32, n)));
    let s = run(ring, 58, |p| {
        let m = msb_extract(p, &x[p.id().index()], 8)?;
        secure_sign(p, &m)
    });
    checks.push(("secure_sign (+2)", measured_delta(&s.stats), cost::sign(32, n)));
    let s = run(ring, 59, |p| {
        let i = p.id().index();
        let m = msb_extract(p, &x[i], 8)?;
        secure_relu(p, &x[i], &m)
    });
    checks.push(("secure_relu (+5)", measured_delta(&s.stats), cost::relu(32, n)));

    let mut failures: Vec<String> = checks
        .iter()
        .filter(|(_, got, want)| got != want)
        .map(|(name, got, want)| format!("{name}: measured {got:?} vs analytic {want:?}"))
        .collect();
    let rounds: Vec<String> = checks.iter().map(|(name, got, _)| format!("{name}={}", got[0].rounds)).collect();
    if !ot_ok {
        failures.push("OT receiver got wrong messages".into());
    }

    let mut nets: Vec<(String, ModelGraph)> = (0..5).map(|s| (format!("exact_net({s})"), zoo::exact_net(s))).collect();
    nets.push(("relu_mlp".into(), zoo::relu_mlp(1, &[12, 16, 8, 4])));
    nets.push(("mnistnet3_like".into(), zoo::mnistnet3_like(2, 8)));
    nets.push(("cifar_block".into(), zoo::cifar_block(3)));
    let mut wan_gt_lan = 0;
    for (name, g) in &nets {
        let plan = plan_of(g);
        let n: usize = plan.input_shape().iter().product();
        let input = encode_input(&plan, &zoo::real_inputs(5, n, 1)[0].iter().map(|v| v.round()).collect::<Vec<_>>()).unwrap();
        for reveal in [Reveal::DataOwner, Reveal::All] {
            let sim = simulate(&plan, &input, 60, Mode::InProcess, EngineOptions { reveal, trace: false }).unwrap();
            for (label, want) in plan.cost_breakdown(reveal) {
                let got = cost::measured_phase(&sim.stats, &label);
                if got != want {
                    failures.push(format!("{name} phase {label}: {got:?} vs {want:?}"));
                }
            }
            if cost::measured(&sim.stats) != plan.cost(reveal) {
                failures.push(format!("{name}: totals differ"));
            }
            if reveal == Reveal::DataOwner {
                let (lan, wan) = (estimate_time(&sim.stats, NetProfile::LAN), estimate_time(&sim.stats, NetProfile::WAN));
                if wan.max > lan.max {
                    wan_gt_lan += 1;
                } else {
                    failures.push(format!("{name}: WAN {} ≤ LAN {}", wan.max, lan.max));
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "rounds {}; {} nets match per phase; WAN > LAN on {wan_gt_lan}/{}{}",
            rounds.join(", "),
            nets.len(),
            nets.len(),
            if failures.is_empty() { String::new() } else { format!("; FAILURES: {}", failures.join("; ")) }
        ),
    )
}

fn relu_bn_net(seed: u64) -> ModelGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = |n: usize, a: f64| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-a..a)).collect() };
    let bn = BnParams {
        gamma: u(16, 1.0).iter().map(|g| g + 1.5).collect(),
        beta: u(16, 0.3),
        mean: u(16, 0.3),
        var: u(16, 0.5).iter().map(|v| v + 1.0).collect(),
        eps: 1e-5,
    };
    ModelGraph::new(
        vec![8],
        vec![
            Layer::Fc {
                in_features: 8,
                out_features: 16,
                weight: u(128, 0.35),
                bias: u(16, 0.35),
            },
            Layer::BatchNorm(bn),
            Layer::Relu,
            Layer::Fc {
                in_features: 16,
                out_features: 4,
                weight: u(64, 0.25),
                bias: u(4, 0.25),
            },
        ],
    )
}

/// Fixed-point pass over the graph as written, batch-norm and all:
/// parameters rounded to `2^-f`, every product floored back to `2^-f`.
/// Independent of the compiler's fusion and scale bookkeeping.
fn unfused_fixed(g: &ModelGraph, x: &[f64]) -> Vec<f64> {
    let f = g.config.frac_bits as i32;
    let grid = 2f64.powi(f);
    let q = |v: f64| (v * grid).round() / grid;
    let fl = |v: f64| (v * grid).floor() / grid;
    let shapes = g.shapes().unwrap();
    let mut shape = g.input_shape.clone();
    let mut v: Vec<f64> = x.iter().map(|&a| (a * 2f64.powi(g.config.input_frac as i32)).round() / 2f64.powi(g.config.input_frac as i32)).collect();
    for (layer, out) in g.layers.iter().zip(shapes) {
        let single = |l: Layer, v: &[f64]| forward_real(&ModelGraph::new(shape.clone(), vec![l]), v).unwrap();
        v = match layer {
            Layer::Fc { in_features, out_features, weight, bias } => single(
                Layer::Fc {
                    in_features: *in_features,
                    out_features: *out_features,
                    weight: weight.iter().map(|&w| q(w)).collect(),
                    bias: bias.iter().map(|&b| q(b)).collect(),
                },
                &v,
            )
            .into_iter()
            .map(fl)
            .collect(),
            Layer::Conv { geom, weight, bias } => single(
                Layer::Conv {
                    geom: *geom,
                    weight: weight.iter().map(|&w| q(w)).collect(),
                    bias: bias.iter().map(|&b| q(b)).collect(),
                },
                &v,
            )
            .into_iter()
            .map(fl)
            .collect(),
            Layer::BatchNorm(bn) => {
                let (sc, sh) = (bn.scale(), bn.shift());
                let per = v.len() / sc.len();
                v.iter().enumerate().map(|(k, &a)| fl(q(sc[k / per]) * a) + q(sh[k / per])).collect()
            }
            other => single(other.clone(), &v),
        };
        shape = out;
    }
    v
}

fn c6_bn_fusion() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    let fixed = ForwardMode::FixedPoint(CompileOptions::default());
    for (branch, g) in [("sign/threshold", zoo::mnistnet3_like(6, 8)), ("relu/fold", relu_bn_net(6))] {
        let fused = plan_of(&g).graph;
        assert!(!fused.layers.iter().any(|l| matches!(l, Layer::BatchNorm(_))));
        let n: usize = g.input_shape.iter().product();
        let (mut worst, mut agree, mut independent) = (0.0f64, 0, 0);
        for x in zoo::real_inputs(600, n, C6_INPUTS) {
            let a = forward_real(&g, &x).unwrap();
            let b = forward_real(&fused, &x).unwrap();
            worst = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(worst, f64::max);
            let fx = plaintext_forward(&fused, &x, fixed).unwrap();
            agree += usize::from(argmax(&fx) == argmax(&plaintext_forward(&g, &x, fixed).unwrap()));
            independent += usize::from(argmax(&fx) == argmax(&unfused_fixed(&g, &x)));
        }
        let ok = worst < C6_REAL_TOL && agree == C6_INPUTS;
        pass &= ok;
        lines.push(format!(
            "{branch}: real max |Δ| {worst:.1e} (< {C6_REAL_TOL:.0e}), fixed-point argmax {agree}/{C6_INPUTS} \
             [diagnostic: vs per-layer fixed-point BN pass {independent}/{C6_INPUTS}]"
        ));
    }
    outcome(pass, format!("fused vs unfused, {}", lines.join("; ")))
}

fn c7_separable() -> Outcome {
    let g = zoo::cifar_block(7);
    let standard = plan_of(&g);
    let opts = CompileOptions {
        separable: Some((DEFAULT_SEPARABLE_THRESHOLD, SeparableInit::FromKernel)),
    };
    let sep = compile(&g, &opts).unwrap();
    let conv_weights = |p: &CompiledPlan| -> usize {
        p.graph.layers.iter().filter(|l| matches!(l, Layer::Conv { .. })).map(Layer::weight_count).sum()
    };
    let (a, b) = (standard.graph.param_count(), sep.graph.param_count());
    let (ca, cb) = (conv_weights(&standard), conv_weights(&sep));
    let red = 1.0 - b as f64 / a as f64;
    let conv_red = 1.0 - cb as f64 / ca as f64;
    outcome(
        red >= C7_MIN_REDUCTION,
        format!(
            "all parameters {a} → {b} (−{:.1}%), conv weights {ca} → {cb} (−{:.1}%); need ≥ {:.0}%",
            100.0 * red,
            100.0 * conv_red,
            100.0 * C7_MIN_REDUCTION
        ),
    )
}

fn c8_distillation() -> Outcome {
    let t0 = Instant::now();
    let accuracy = |seed: u64, lambda: f64| {
        let cfg = ToyConfig {
            data: DataSpec::Blobs {
                seed,
                classes: 10,
                dim: 16,
                per_class: 100,
                spread: 1.2,
            },
            val_fraction: 0.25,
            train: TrainConfig {
                seed,
                hidden: 16,
                distill: DistillConfig::new(10.0, lambda).unwrap(),
                ..TrainConfig::default()
            },
        };
        run_toy(&cfg).unwrap().val_accuracy
    };
    let mean = |lambda: f64| (0..C8_SEEDS).map(|s| accuracy(s, lambda)).sum::<f64>() / C8_SEEDS as f64;
    let (kd, base) = (mean(0.1), mean(1.0));
    let sweep: Vec<String> = [0.3, 0.5, 0.7, 0.9].iter().map(|&l| format!("λ={l}: {:.4}", mean(l))).collect();
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        kd >= base && secs < C8_SECONDS,
        format!(
            "mean val accuracy over {C8_SEEDS} seeds: λ=0.1,T=10 {kd:.4} vs λ=1 {base:.4}; sweep {}; {secs:.1}s",
            sweep.join(", ")
        ),
    )
}

fn uniform_line(name: &str, values: &[u64]) -> (bool, String) {
    let t = low_byte_uniformity(values.iter().copied(), C9_ALPHA);
    let ok = t.passed() && t.samples >= C9_MIN_SAMPLES;
    (ok, format!("{name} χ²={:.1} < {:.1} (n={})", t.statistic, t.critical, t.samples))
}

fn c9_privacy() -> Outcome {
    let ring = ring32();
    let n = 2_000;
    let mut parts = Vec::new();

    // Fixed, highly structured inputs so any leak would show.
    let x = shared(ring, &vec![-3; n], 90);
    let y = shared(ring, &vec![7; n], 91);
    let words = |p: &[u8]| ring.decode_words(p).unwrap();
    let (mut reshare, mut ot_helper, mut ot_recv, mut u_low, mut u_msb) = (vec![], vec![], vec![], vec![], vec![0u64; 2]);
    let (m0, m1) = (vec![5u64; n], vec![6u64; n]);
    let choice: Vec<u8> = vec![1; n];
    let roles = OtRoles::new(PartyId::P1, PartyId::P0, PartyId::P2);
    for seed in 0..6 {
        let out = run(ring, 900 + seed, |p| {
            p.net.log_received();
            let i = p.id().index();
            mul(p, &x[i], &y[i])?;
            ot3_transfer(p, roles, input_for(p.id(), roles, (&m0, &m1), &choice))?;
            let (_, u) = msb_extract_view(p, &x[i], 8)?;
            Ok((p.net.received().to_vec(), u))
        });
        for (who, (log, u)) in out.outputs.iter().enumerate() {
            for r in log {
                match r.tag {
                    tags::RESHARE if who == 0 => reshare.extend(words(&r.payload)),
                    tags::OT_SENDER => ot_helper.extend(words(&r.payload)),
                    tags::OT_HELPER if who == 0 => ot_recv.extend(words(&r.payload)),
                    _ => {}
                }
            }
            if who == 0 {
                if let Some(u) = u {
                    u_low.extend_from_slice(u.data());
                    for &v in u.data() {
                        u_msb[ring.msb(v) as usize] += 1;
                    }
                }
            }
        }
    }
    let mut pass = true;
    for (name, v) in [
        ("mul reshare at P0", &reshare),
        ("OT masked pair at helper", &ot_helper),
        ("OT forwarded message at receiver", &ot_recv),
        ("opened u at P0", &u_low),
    ] {
        let (ok, line) = uniform_line(name, v);
        pass &= ok;
        parts.push(line);
    }
    let chi = chi_square_uniform(&u_msb);
    let crit = chi_square_critical(1, C9_ALPHA);
    pass &= chi < crit;
    parts.push(format!("sign of u {}/{} χ²={chi:.2} < {crit:.2}", u_msb[0], u_msb[1]));
    outcome(pass, parts.join("; "))
}

fn free_ports() -> [String; 3] {
    let ls: Vec<TcpListener> = (0..3).map(|_| TcpListener::bind("127.0.0.1:0").unwrap()).collect();
    let addrs: Vec<String> = ls.iter().map(|l| l.local_addr().unwrap().to_string()).collect();
    addrs.try_into().unwrap()
}

fn cross_mode_one(dir: &Path, name: &str, g: &ModelGraph, seed: u64) -> std::result::Result<(), String> {
    let bin = env!("CARGO_BIN_EXE_cbnn");
    let model = dir.join(format!("{name}.cbnn"));
    save_model(&model, g).unwrap();
    let plan = plan_of(g);
    let n: usize = plan.input_shape().iter().product();
    let x = &zoo::real_inputs(seed, n, 1)[0];
    let input = dir.join(format!("{name}.csv"));
    std::fs::write(&input, x.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")).unwrap();

    let report = dir.join(format!("{name}.sim.json"));
    let st = Command::new(bin)
        .args(["simulate", "--seed", &seed.to_string(), "--model"])
        .arg(&model)
        .arg("--input")
        .arg(&input)
        .arg("--report")
        .arg(&report)
        .status()
        .unwrap();
    if !st.success() {
        return Err(format!("{name}: simulate exited {st}"));
    }
    let sim: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();

    let peers = free_ports().join(",");
    let children: Vec<_> = (0..3)
        .map(|i| {
            let mut c = Command::new(bin);
            c.args(["run-party", "--party", &i.to_string(), "--peers", &peers, "--seed", &seed.to_string(), "--model"])
                .arg(&model)
                .arg("--report")
                .arg(dir.join(format!("{name}.p{i}.json")))
                .stdout(Stdio::null());
            if i == 0 {
                c.arg("--input").arg(&input);
            }
            c.spawn().unwrap()
        })
        .collect();
    for (i, mut c) in children.into_iter().enumerate() {
        let st = c.wait().unwrap();
        if !st.success() {
            return Err(format!("{name}: party {i} exited {st}"));
        }
    }
    for i in 0..3 {
        let p: Value = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{name}.p{i}.json"))).unwrap()).unwrap();
        if p["traffic"] != sim["traffic"][i] {
            return Err(format!("{name}: P{i} traffic differs"));
        }
        let out = &p["output"];
        if i == 0 && out != &sim["output"] {
            return Err(format!("{name}: output {} vs simulate {}", out, sim["output"]));
        }
        if i != 0 && !out.is_null() {
            return Err(format!("{name}: P{i} learned the output"));
        }
    }

    // And the library's in-process run agrees with the CLI's.
    let lib = simulate(&plan, &encode_input(&plan, x).unwrap(), seed, Mode::InProcess, EngineOptions::default()).unwrap();
    let raw: Vec<i64> = lib.output().data().iter().map(|&v| plan.config.ring().unwrap().to_signed(v)).collect();
    if sim["output"]["raw"] != serde_json::json!(raw) {
        return Err(format!("{name}: CLI simulate differs from library"));
    }
    Ok(())
}

fn c10_cross_mode() -> Outcome {
    let dir = std::env::temp_dir().join(format!("cbnn-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let nets = [
        ("exact", zoo::exact_net(4), 11),
        ("mnist", zoo::mnistnet3_like(8, 8), 12),
        ("relu", zoo::relu_mlp(9, &[6, 10, 3]), 13),
    ];
    let mut errs = Vec::new();
    for (name, g, seed) in &nets {
        if let Err(e) = cross_mode_one(&dir, name, g, *seed) {
            errs.push(e);
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    outcome(
        errs.is_empty(),
        if errs.is_empty() {
            format!("{} nets: 3 run-party processes over TCP = simulate (outputs and per-party traffic)", nets.len())
        } else {
            errs.join("; ")
        },
    )
}

fn main() {
    // Libtest-style flags (e.g. --nocapture) are accepted and ignored.
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(u32, &str, bool, fn() -> Outcome); 10] = [
        (1, "oracle equivalence (exact)", true, c1_exact_equivalence),
        (2, "truncation tolerance", true, c2_truncation),
        (3, "msb extraction", true, c3_msb),
        (4, "sign/relu/maxpool", true, c4_sign_relu_maxpool),
        (5, "round/byte accounting", true, c5_accounting),
        (6, "bn fusion equivalence", true, c6_bn_fusion),
        (7, "separable parameter reduction", true, c7_separable),
        (8, "distillation (statistical, non-fatal)", false, c8_distillation),
        (9, "share privacy smoke tests", true, c9_privacy),
        (10, "cross-mode determinism", true, c10_cross_mode),
    ];
    let mut fatal = 0;
    let started = Instant::now();
    for (id, name, is_fatal, f) in criteria {
        if filter.as_deref().is_some_and(|flt| !name.contains(flt) && flt != id.to_string()) {
            continue;
        }
        let t0 = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let tag = match (o.pass, is_fatal) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "WARN",
        };
        println!("[{tag}] criterion {id:>2} {name}: {} ({:.1}s)", o.detail, t0.elapsed().as_secs_f64());
        if !o.pass && is_fatal {
            fatal += 1;
        }
    }
    println!("acceptance: {fatal} fatal failure(s) in {:.1}s", started.elapsed().as_secs_f64());
    if fatal > 0 {
        std::process::exit(1);
    }
}
