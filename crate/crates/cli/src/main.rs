use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use cbnn::engine::{infer, simulate, EngineOptions};
use cbnn::error::{Error, TransportError};
use cbnn::io::{load_input, load_model, save_model, to_stable_json, InputData};
use cbnn::model::{compile, compile_graph, CompileOptions, CompiledPlan, ModelGraph, Reveal, SeparableInit};
use cbnn::oracle::encode_input;
use cbnn::report::{run_report, OutputReport, PartyReport};
use cbnn::sharing::SetupSeeds;
use cbnn::train::{run_toy, ToyConfig};
use cbnn::transport::{run_party, Mode, NetProfile, PartyId, RunOptions};
use cbnn::Tensor;

#[derive(Parser)]
#[command(name = "cbnn", version, about = "Three-party secure inference for binarized networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Lan,
    Wan,
}

impl Profile {
    fn get(self) -> (&'static str, NetProfile) {
        match self {
            Profile::Lan => ("lan", NetProfile::LAN),
            Profile::Wan => ("wan", NetProfile::WAN),
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Take part in a three-process TCP run as one party.
    RunParty {
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..3))]
        party: u8,
        /// Listen addresses of P0,P1,P2 in order.
        #[arg(long, value_delimiter = ',', required = true)]
        peers: Vec<String>,
        #[arg(long)]
        model: PathBuf,
        /// Required at P0, ignored elsewhere.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        reveal_all: bool,
        /// Seconds to wait for a peer before giving up.
        #[arg(long, default_value_t = 30)]
        timeout: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run all three parties in-process and report output and cost.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Profile::Lan)]
        net_profile: Profile,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        reveal_all: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fuse and rewrite a model, check its ranges and write the result.
    Compile {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replace standard convolutions with at least N input channels by
        /// depthwise + pointwise.
        #[arg(long)]
        separable_threshold: Option<usize>,
        /// Bits of the positive mask used by sign extraction.
        #[arg(long)]
        msb_budget: Option<u32>,
    },
    /// Train a teacher and a binarized student on a toy task and export the
    /// student.
    TrainToy {
        /// TOML, or JSON if the extension is `.json`. Missing keys take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat a simulation and aggregate cost and wall time.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 10)]
        trials: u32,
        /// CSV or raw input; zeros if omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_plan(path: &Path) -> anyhow::Result<CompiledPlan> {
    let g = load_model(path).with_context(|| format!("loading model {}", path.display()))?;
    Ok(compile(&g, &CompileOptions::default()).with_context(|| format!("compiling {}", path.display()))?)
}

fn load_tensor(plan: &CompiledPlan, path: &Path) -> anyhow::Result<Tensor> {
    let t = match load_input(path).with_context(|| format!("loading input {}", path.display()))? {
        InputData::Real(x) => encode_input(plan, &x).with_context(|| format!("encoding {}", path.display()))?,
        InputData::Raw(ring, t) => {
            if ring.bits() != plan.config.ring_bits {
                bail!("input has {}-bit words, model uses {}", ring.bits(), plan.config.ring_bits);
            }
            t.reshape(plan.input_shape()).map_err(Error::from)?
        }
    };
    Ok(t)
}

fn reveal(all: bool) -> Reveal {
    if all {
        Reveal::All
    } else {
        Reveal::DataOwner
    }
}

fn emit(text: &str, to: Option<&Path>) -> anyhow::Result<()> {
    match to {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn resolve(peers: &[String]) -> anyhow::Result<[SocketAddr; 3]> {
    let addrs = peers
        .iter()
        .map(|p| {
            p.to_socket_addrs()
                .map_err(|e| anyhow!("{p}: {e}"))?
                .next()
                .ok_or_else(|| anyhow!("{p} resolves to nothing"))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    addrs.try_into().map_err(|_| anyhow!("--peers needs exactly three addresses"))
}

fn config_error(e: impl std::fmt::Display) -> anyhow::Error {
    anyhow!(Error::Config(e.to_string()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::RunParty {
            party,
            peers,
            model,
            input,
            seed,
            reveal_all,
            timeout,
            report,
        } => {
            let id = PartyId::new(party as usize).expect("range-checked by clap");
            let addrs = resolve(&peers).map_err(config_error)?;
            let plan = load_plan(&model)?;
            let x = match (id, &input) {
                (PartyId::P0, Some(p)) => Some(load_tensor(&plan, p)?),
                (PartyId::P0, None) => return Err(config_error("P0 needs --input")),
                _ => None,
            };
            let opts = RunOptions {
                timeout: std::time::Duration::from_secs(timeout),
                ..RunOptions::default()
            };
            let ring = plan.config.ring()?;
            let engine = EngineOptions {
                reveal: reveal(reveal_all),
                trace: false,
            };
            let (res, traffic) = run_party(id, &addrs, SetupSeeds::from_u64(seed), ring, opts, |p| {
                infer(p, &plan, x.as_ref(), engine)
            })?;
            let rep = PartyReport {
                party: id,
                seed,
                output: res.output.as_ref().map(|y| OutputReport::new(&plan, y)),
                traffic,
            };
            emit(&to_stable_json(&rep), report.as_deref())
        }
        Cmd::Simulate {
            model,
            input,
            net_profile,
            report,
            reveal_all,
            seed,
        } => {
            let plan = load_plan(&model)?;
            let x = load_tensor(&plan, &input)?;
            let r = reveal(reveal_all);
            let sim = simulate(&plan, &x, seed, Mode::InProcess, EngineOptions { reveal: r, trace: false })?;
            let mut rep = run_report(&plan, &sim, seed, r, net_profile.get());
            rep.config.model = model.display().to_string();
            rep.config.input = input.display().to_string();
            emit(&to_stable_json(&rep), report.as_deref())
        }
        Cmd::Compile {
            model,
            out,
            separable_threshold,
            msb_budget,
        } => {
            let mut g = load_model(&model).with_context(|| format!("loading model {}", model.display()))?;
            if let Some(d) = msb_budget {
                g.config.mask_bits = d;
            }
            g.config.validate().map_err(config_error)?;
            let opts = CompileOptions {
                separable: separable_threshold.map(|n| (n, SeparableInit::FromKernel)),
            };
            let compiled = compile_graph(&g, &opts)?;
            let plan = compile(&compiled, &CompileOptions::default())?;
            save_model(&out, &compiled).with_context(|| format!("writing {}", out.display()))?;
            print!("{}", to_stable_json(&compile_summary(&g, &plan)));
            Ok(())
        }
        Cmd::TrainToy { config, out } => {
            let cfg: ToyConfig = match &config {
                None => ToyConfig::default(),
                Some(p) => {
                    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    if p.extension().is_some_and(|e| e == "json") {
                        serde_json::from_str(&text).map_err(config_error)?
                    } else {
                        toml::from_str(&text).map_err(config_error)?
                    }
                }
            };
            let o = run_toy(&cfg)?;
            let g = o.student.to_graph();
            // Refuse to export something the engine cannot run.
            compile(&g, &CompileOptions::default()).context("exported student does not compile")?;
            save_model(&out, &g).with_context(|| format!("writing {}", out.display()))?;
            print!(
                "{}",
                to_stable_json(&json!({
                    "config": cfg,
                    "loss": o.history.loss,
                    "student_train_accuracy": o.train_accuracy,
                    "student_val_accuracy": o.val_accuracy,
                    "teacher_val_accuracy": o.teacher_val_accuracy,
                    "out": out.display().to_string(),
                }))
            );
            Ok(())
        }
        Cmd::Bench {
            model,
            trials,
            input,
            seed,
        } => {
            if trials == 0 {
                return Err(config_error("--trials must be positive"));
            }
            let plan = load_plan(&model)?;
            let x = match &input {
                Some(p) => load_tensor(&plan, p)?,
                None => Tensor::zeros(plan.input_shape()),
            };
            let opts = EngineOptions::default();
            let mut wall = Vec::with_capacity(trials as usize);
            let mut first = None;
            let mut stable = true;
            for k in 0..trials as u64 {
                let t0 = Instant::now();
                let sim = simulate(&plan, &x, seed + k, Mode::InProcess, opts)?;
                wall.push(t0.elapsed().as_secs_f64());
                match &first {
                    None => first = Some(sim),
                    Some(f) => stable &= f.stats == sim.stats && f.output() == sim.output(),
                }
            }
            let first = first.expect("at least one trial");
            let mut rep = run_report(&plan, &first, seed, opts.reveal, Profile::Lan.get());
            rep.config.model = model.display().to_string();
            rep.config.input = input.map_or_else(|| "zeros".into(), |p| p.display().to_string());
            let mean = wall.iter().sum::<f64>() / wall.len() as f64;
            let min = wall.iter().copied().fold(f64::INFINITY, f64::min);
            let max = wall.iter().copied().fold(0.0, f64::max);
            print!(
                "{}",
                to_stable_json(&json!({
                    "trials": trials,
                    "wall_s": { "mean": mean, "min": min, "max": max },
                    "consistent_across_seeds": stable,
                    "report": rep,
                }))
            );
            Ok(())
        }
    }
}

fn compile_summary(src: &ModelGraph, plan: &CompiledPlan) -> serde_json::Value {
    let (before, after) = (src.param_count(), plan.graph.param_count());
    json!({
        "params_before": before,
        "params_after": after,
        "param_reduction": 1.0 - after as f64 / before.max(1) as f64,
        "steps": plan.steps.iter().map(|s| s.op.name()).collect::<Vec<_>>(),
        "truncations": plan.truncations(),
        "rounds": plan.rounds(Reveal::DataOwner),
        "min_headroom_bits": plan.ranges.min_headroom_bits(),
        "numeric": plan.config,
    })
}

fn exit_code(e: &anyhow::Error) -> u8 {
    e.chain().find_map(|c| c.downcast_ref::<Error>()).map_or(1, error_code)
}

fn error_code(err: &Error) -> u8 {
    match err.transport_cause() {
        Some(TransportError::TagMismatch { .. } | TransportError::PayloadSize { .. }) => 3,
        Some(_) => 4,
        None => match err {
            Error::Model(_) | Error::Format(_) | Error::Train(_) | Error::Config(_) => 2,
            Error::Party { source, .. } => error_code(source),
            _ => 1,
        },
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
