//! Desk-scale distillation: a real-valued teacher MLP and a binarized
//! student (FC → BN → Sign → FC) trained with straight-through gradients
//! and the combined hard/soft loss.
//!
//! Everything is manual backprop over two dense layers with Adam. The
//! student's Sign maps to `{0, 1}` exactly as the secure engine does, so
//! [`ToyMlp::to_graph`] exports a model that compiles unchanged.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::TrainError;
use crate::model::{BnParams, Layer, ModelGraph, DEFAULT_BN_EPS};
use crate::oracle::{argmax, cross_entropy, kd_loss, softmax_t, DistillConfig};

/// STE passes gradients through Sign only where `|a| ≤` this.
pub const STE_CLIP: f64 = 1.0;
/// Row-wise L1 cap on the student's first layer, keeping pre-activations
/// inside the compiled range budget.
pub const MAX_ROW_L1: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self, TrainError> {
        if features.len() != labels.len() {
            return Err(TrainError::Data(format!("{} rows but {} labels", features.len(), labels.len())));
        }
        let dim = features.first().map_or(0, Vec::len);
        if let Some(r) = features.iter().position(|f| f.len() != dim) {
            return Err(TrainError::Data(format!("row {r} has {} features, expected {dim}", features[r].len())));
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(TrainError::Data("non-finite feature".into()));
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Self { features, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Isotropic Gaussian clusters around standard-normal centres, then
    /// min–max scaled into `[-1, 1]`.
    pub fn gaussian_blobs(seed: u64, classes: usize, dim: usize, per_class: usize, spread: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let centres: Vec<Vec<f64>> = (0..classes).map(|_| (0..dim).map(|_| normal()).collect()).collect();
        let mut features = Vec::with_capacity(classes * per_class);
        let mut labels = Vec::with_capacity(classes * per_class);
        for _ in 0..per_class {
            for (c, centre) in centres.iter().enumerate() {
                features.push(centre.iter().map(|m| m + spread * normal()).collect());
                labels.push(c);
            }
        }
        let mut d = Self { features, labels, classes };
        d.normalize();
        d
    }

    /// Rows of `features..., label` with no header.
    pub fn from_csv(path: &Path) -> Result<Self, TrainError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| TrainError::Data(format!("{}: {e}", path.display())))?;
        let (mut features, mut labels) = (Vec::new(), Vec::new());
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| TrainError::Data(format!("row {r}: {e}")))?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| TrainError::Data(format!("row {r}: {e}")))?;
            let Some((&label, feats)) = vals.split_last() else {
                return Err(TrainError::Data(format!("row {r} is empty")));
            };
            if label < 0.0 || label.fract() != 0.0 {
                return Err(TrainError::Data(format!("row {r}: label {label} is not a class index")));
            }
            features.push(feats.to_vec());
            labels.push(label as usize);
        }
        let mut d = Self::new(features, labels)?;
        d.normalize();
        Ok(d)
    }

    /// Per-feature min–max scaling into `[-1, 1]`; constant features map to 0.
    pub fn normalize(&mut self) {
        for j in 0..self.dim() {
            let lo = self.features.iter().map(|f| f[j]).fold(f64::INFINITY, f64::min);
            let hi = self.features.iter().map(|f| f[j]).fold(f64::NEG_INFINITY, f64::max);
            for f in &mut self.features {
                f[j] = if hi > lo { 2.0 * (f[j] - lo) / (hi - lo) - 1.0 } else { 0.0 };
            }
        }
    }

    /// Shuffled split; the second part holds `val_fraction` of the rows.
    pub fn split(&self, val_fraction: f64, seed: u64) -> (Self, Self) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_val = ((self.len() as f64) * val_fraction.clamp(0.0, 1.0)).round() as usize;
        let take = |ix: &[usize]| Self {
            features: ix.iter().map(|&i| self.features[i].clone()).collect(),
            labels: ix.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        };
        (take(&idx[n_val..]), take(&idx[..n_val]))
    }
}

fn default_epochs() -> usize {
    30
}
fn default_batch() -> usize {
    32
}
fn default_lr() -> f64 {
    0.01
}
fn default_hidden() -> usize {
    32
}
fn default_teacher_hidden() -> usize {
    64
}
fn default_distill() -> DistillConfig {
    DistillConfig {
        temperature: 10.0,
        lambda: 0.1,
    }
}

/// Optimiser schedule shared by teacher and student. Adam throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_distill")]
    pub distill: DistillConfig,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_teacher_hidden")]
    pub teacher_hidden: usize,
    #[serde(default = "default_epochs")]
    pub teacher_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch(),
            lr: default_lr(),
            seed: 0,
            distill: default_distill(),
            hidden: default_hidden(),
            teacher_hidden: default_teacher_hidden(),
            teacher_epochs: default_epochs(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 || self.hidden == 0 || self.teacher_hidden == 0 {
            return Err(TrainError::Config("batch size and hidden widths must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        self.distill.validate()
    }
}

/// Dense layer, weights row-major `[out][in]` like [`Layer::Fc`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inp: usize,
    pub out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn init(rng: &mut ChaCha8Rng, inp: usize, out: usize) -> Self {
        let a = 1.0 / (inp as f64).sqrt();
        Self {
            inp,
            out,
            weight: (0..inp * out).map(|_| rng.gen_range(-a..a)).collect(),
            bias: vec![0.0; out],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out)
            .map(|o| self.bias[o] + self.weight[o * self.inp..(o + 1) * self.inp].iter().zip(x).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }

    fn to_layer(&self) -> Layer {
        Layer::Fc {
            in_features: self.inp,
            out_features: self.out,
            weight: self.weight.clone(),
            bias: self.bias.clone(),
        }
    }
}

/// Two-layer MLP. The teacher uses ReLU; a binarized student applies
/// batch-norm (γ fixed to 1) and Sign to the hidden pre-activations.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyMlp {
    pub l1: Dense,
    pub l2: Dense,
    pub binarized: bool,
    /// Learnable shift and population statistics of the hidden BN.
    pub beta: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl ToyMlp {
    pub fn new(seed: u64, inp: usize, hidden: usize, classes: usize, binarized: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            l1: Dense::init(&mut rng, inp, hidden),
            l2: Dense::init(&mut rng, hidden, classes),
            binarized,
            beta: vec![0.0; hidden],
            mean: vec![0.0; hidden],
            var: vec![1.0; hidden],
        }
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.l1.inp, self.l1.out, self.l2.out]
    }

    fn bn(&self) -> BnParams {
        BnParams {
            gamma: vec![1.0; self.l1.out],
            beta: self.beta.clone(),
            mean: self.mean.clone(),
            var: self.var.clone(),
            eps: DEFAULT_BN_EPS,
        }
    }

    /// Inference-mode logits (population BN statistics).
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let z = self.l1.forward(x);
        let h: Vec<f64> = if self.binarized {
            self.bn().apply(&z, 1).into_iter().map(|a| if a >= 0.0 { 1.0 } else { 0.0 }).collect()
        } else {
            z.into_iter().map(|a| a.max(0.0)).collect()
        };
        self.l2.forward(&h)
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    pub fn accuracy(&self, data: &Dataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = data.features.iter().zip(&data.labels).filter(|(x, &y)| self.predict(x) == y).count();
        hits as f64 / data.len() as f64
    }

    pub fn to_graph(&self) -> ModelGraph {
        let mid = if self.binarized {
            vec![Layer::BatchNorm(self.bn()), Layer::Sign]
        } else {
            vec![Layer::Relu]
        };
        let mut layers = vec![self.l1.to_layer()];
        layers.extend(mid);
        layers.push(self.l2.to_layer());
        ModelGraph::new(vec![self.l1.inp], layers)
    }

    /// Population statistics of the hidden pre-activations over `data`.
    fn freeze_stats(&mut self, data: &Dataset) {
        let h = self.l1.out;
        let n = data.len().max(1) as f64;
        let zs: Vec<Vec<f64>> = data.features.iter().map(|x| self.l1.forward(x)).collect();
        for j in 0..h {
            let m = zs.iter().map(|z| z[j]).sum::<f64>() / n;
            self.mean[j] = m;
            self.var[j] = zs.iter().map(|z| (z[j] - m).powi(2)).sum::<f64>() / n;
        }
    }
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct History {
    pub loss: Vec<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, lr: f64, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        self.t += 1;
        let (c1, c2) = (1.0 - Self::B1.powi(self.t), 1.0 - Self::B2.powi(self.t));
        let mut k = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            for (p, g) in p.iter_mut().zip(g.iter()) {
                self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * g;
                self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * g * g;
                *p -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
                k += 1;
            }
        }
    }
}

#[derive(Default)]
struct Grads {
    w1: Vec<f64>,
    b1: Vec<f64>,
    beta: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl Grads {
    fn zeros(m: &ToyMlp) -> Self {
        Self {
            w1: vec![0.0; m.l1.weight.len()],
            b1: vec![0.0; m.l1.out],
            beta: vec![0.0; m.l1.out],
            w2: vec![0.0; m.l2.weight.len()],
            b2: vec![0.0; m.l2.out],
        }
    }
}

/// Gradient of the loss with respect to the logits, and the loss itself.
type LossFn<'a> = dyn Fn(usize, &[f64]) -> Result<(f64, Vec<f64>), TrainError> + 'a;

/// One minibatch: forward in training mode, backprop, gradients averaged.
fn batch_grads(m: &ToyMlp, data: &Dataset, batch: &[usize], loss: &LossFn) -> Result<(f64, Grads), TrainError> {
    let (h, nb) = (m.l1.out, batch.len() as f64);
    let zs: Vec<Vec<f64>> = batch.iter().map(|&i| m.l1.forward(&data.features[i])).collect();

    // Batch-norm statistics (binarized only).
    let (mut mu, mut inv) = (vec![0.0; h], vec![1.0; h]);
    if m.binarized {
        for j in 0..h {
            mu[j] = zs.iter().map(|z| z[j]).sum::<f64>() / nb;
            let var = zs.iter().map(|z| (z[j] - mu[j]).powi(2)).sum::<f64>() / nb;
            inv[j] = 1.0 / (var + DEFAULT_BN_EPS).sqrt();
        }
    }
    let xhat: Vec<Vec<f64>> = zs.iter().map(|z| (0..h).map(|j| (z[j] - mu[j]) * inv[j]).collect()).collect();
    let acts: Vec<Vec<f64>> = xhat
        .iter()
        .zip(&zs)
        .map(|(xh, z)| {
            if m.binarized {
                (0..h).map(|j| xh[j] + m.beta[j]).collect()
            } else {
                z.clone()
            }
        })
        .collect();

    let mut g = Grads::zeros(m);
    let mut total = 0.0;
    let mut d_act = vec![vec![0.0; h]; batch.len()];
    for (b, &i) in batch.iter().enumerate() {
        let a = &acts[b];
        let hid: Vec<f64> = if m.binarized {
            a.iter().map(|&v| if v >= 0.0 { 1.0 } else { 0.0 }).collect()
        } else {
            a.iter().map(|&v| v.max(0.0)).collect()
        };
        let (l, ds) = loss(i, &m.l2.forward(&hid))?;
        total += l;
        for o in 0..m.l2.out {
            g.b2[o] += ds[o];
            for j in 0..h {
                g.w2[o * h + j] += ds[o] * hid[j];
                d_act[b][j] += ds[o] * m.l2.weight[o * h + j];
            }
        }
        for j in 0..h {
            let pass = if m.binarized { a[j].abs() <= STE_CLIP } else { a[j] > 0.0 };
            if !pass {
                d_act[b][j] = 0.0;
            }
        }
    }

    // Back through batch-norm: dz = inv·(da − mean(da) − x̂·mean(da·x̂)).
    let dz: Vec<Vec<f64>> = if m.binarized {
        let mut mean_da = vec![0.0; h];
        let mut mean_dax = vec![0.0; h];
        for (da, xh) in d_act.iter().zip(&xhat) {
            for j in 0..h {
                g.beta[j] += da[j];
                mean_da[j] += da[j] / nb;
                mean_dax[j] += da[j] * xh[j] / nb;
            }
        }
        d_act
            .iter()
            .zip(&xhat)
            .map(|(da, xh)| (0..h).map(|j| inv[j] * (da[j] - mean_da[j] - xh[j] * mean_dax[j])).collect())
            .collect()
    } else {
        d_act
    };
    let n_in = m.l1.inp;
    for (dz, &i) in dz.iter().zip(batch) {
        let x = &data.features[i];
        for j in 0..h {
            g.b1[j] += dz[j];
            for k in 0..n_in {
                g.w1[j * n_in + k] += dz[j] * x[k];
            }
        }
    }
    for v in [&mut g.w1, &mut g.b1, &mut g.beta, &mut g.w2, &mut g.b2] {
        v.iter_mut().for_each(|x| *x /= nb);
    }
    Ok((total / nb, g))
}

fn clip_rows(d: &mut Dense, max_l1: f64) {
    for row in d.weight.chunks_mut(d.inp) {
        let n: f64 = row.iter().map(|w| w.abs()).sum();
        if n > max_l1 {
            row.iter_mut().for_each(|w| *w *= max_l1 / n);
        }
    }
}

fn fit(m: &mut ToyMlp, data: &Dataset, epochs: usize, cfg: &TrainConfig, loss: &LossFn) -> Result<History, TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::Data("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_5e7);
    let n_params = m.l1.weight.len() + m.l1.out * 2 + m.l2.weight.len() + m.l2.out;
    let mut adam = Adam::new(n_params);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = History::default();
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut batches) = (0.0, 0);
        for batch in order.chunks(cfg.batch_size) {
            let (l, g) = batch_grads(m, data, batch, loss)?;
            if !l.is_finite() {
                return Err(TrainError::Divergence { epoch, loss: l });
            }
            sum += l;
            batches += 1;
            adam.step(
                cfg.lr,
                &mut [&mut m.l1.weight, &mut m.l1.bias, &mut m.beta, &mut m.l2.weight, &mut m.l2.bias],
                &[&g.w1, &g.b1, &g.beta, &g.w2, &g.b2],
            );
            if m.binarized {
                clip_rows(&mut m.l1, MAX_ROW_L1);
            }
        }
        history.loss.push(sum / batches as f64);
    }
    if m.binarized {
        m.freeze_stats(data);
    }
    Ok(history)
}

fn one_hot(classes: usize, y: usize) -> Vec<f64> {
    (0..classes).map(|c| if c == y { 1.0 } else { 0.0 }).collect()
}

/// Real-valued FC → ReLU → FC trained with plain cross-entropy.
pub fn train_teacher(data: &Dataset, cfg: &TrainConfig) -> Result<(ToyMlp, History), TrainError> {
    let mut m = ToyMlp::new(cfg.seed, data.dim(), cfg.teacher_hidden, data.classes, false);
    let loss = |i: usize, s: &[f64]| {
        let p = softmax_t(s, 1.0);
        let y = data.labels[i];
        let l = cross_entropy(&one_hot(data.classes, y), &p)?;
        let d = p.iter().enumerate().map(|(c, p)| p - if c == y { 1.0 } else { 0.0 }).collect();
        Ok((l, d))
    };
    let h = fit(&mut m, data, cfg.teacher_epochs, cfg, &loss)?;
    Ok((m, h))
}

/// Binarized student trained on the combined loss. With `λ = 1` the
/// teacher is never evaluated and may be `None`.
pub fn train_student_kd(data: &Dataset, teacher: Option<&ToyMlp>, cfg: &TrainConfig) -> Result<(ToyMlp, History), TrainError> {
    cfg.validate()?;
    let DistillConfig { temperature: t, lambda } = cfg.distill;
    let soft: Vec<Vec<f64>> = if lambda < 1.0 {
        let teacher = teacher.ok_or_else(|| TrainError::Config("λ < 1 needs a teacher".into()))?;
        data.features.iter().map(|x| teacher.logits(x)).collect()
    } else {
        Vec::new()
    };
    let mut m = ToyMlp::new(cfg.seed.wrapping_add(1), data.dim(), cfg.hidden, data.classes, true);
    let loss = |i: usize, s: &[f64]| {
        let y = data.labels[i];
        let p = softmax_t(s, 1.0);
        let mut d: Vec<f64> = p.iter().enumerate().map(|(c, p)| lambda * (p - if c == y { 1.0 } else { 0.0 })).collect();
        if lambda < 1.0 {
            let (ps, pt) = (softmax_t(s, t), softmax_t(&soft[i], t));
            d.iter_mut().zip(ps.iter().zip(&pt)).for_each(|(d, (a, b))| *d += (1.0 - lambda) / t * (a - b));
            Ok((kd_loss(s, &soft[i], y, &cfg.distill)?, d))
        } else {
            Ok((cross_entropy(&one_hot(data.classes, y), &p)?, d))
        }
    };
    let h = fit(&mut m, data, cfg.epochs, cfg, &loss)?;
    Ok((m, h))
}

/// Where a toy run's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Blobs {
        seed: u64,
        classes: usize,
        dim: usize,
        per_class: usize,
        spread: f64,
    },
    Csv {
        path: std::path::PathBuf,
    },
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec::Blobs {
            seed: 0,
            classes: 6,
            dim: 16,
            per_class: 100,
            spread: 0.8,
        }
    }
}

impl DataSpec {
    pub fn load(&self) -> Result<Dataset, TrainError> {
        match self {
            DataSpec::Blobs {
                seed,
                classes,
                dim,
                per_class,
                spread,
            } => {
                if *classes < 2 || *dim == 0 || *per_class == 0 || !(*spread >= 0.0) {
                    return Err(TrainError::Config("blobs need ≥ 2 classes, positive sizes and spread ≥ 0".into()));
                }
                Ok(Dataset::gaussian_blobs(*seed, *classes, *dim, *per_class, *spread))
            }
            DataSpec::Csv { path } => Dataset::from_csv(path),
        }
    }
}

fn default_val_fraction() -> f64 {
    0.25
}

/// Configuration file of `train-toy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub train: TrainConfig,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            data: DataSpec::default(),
            val_fraction: default_val_fraction(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyOutcome {
    pub teacher: Option<ToyMlp>,
    pub student: ToyMlp,
    pub teacher_val_accuracy: Option<f64>,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub history: History,
}

/// Loads the data, trains a teacher if distillation needs one, then the
/// student.
pub fn run_toy(cfg: &ToyConfig) -> Result<ToyOutcome, TrainError> {
    cfg.train.validate()?;
    if !(0.0..1.0).contains(&cfg.val_fraction) {
        return Err(TrainError::Config(format!("val_fraction must lie in [0, 1), got {}", cfg.val_fraction)));
    }
    let (train, val) = cfg.data.load()?.split(cfg.val_fraction, cfg.train.seed);
    let teacher = if cfg.train.distill.lambda < 1.0 {
        Some(train_teacher(&train, &cfg.train)?.0)
    } else {
        None
    };
    let (student, history) = train_student_kd(&train, teacher.as_ref(), &cfg.train)?;
    Ok(ToyOutcome {
        teacher_val_accuracy: teacher.as_ref().map(|t| t.accuracy(&val)),
        teacher,
        train_accuracy: student.accuracy(&train),
        val_accuracy: student.accuracy(&val),
        student,
        history,
    })
}
