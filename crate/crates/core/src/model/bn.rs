//! Batch-norm folding.
//!
//! With `γ' = γ/√(σ²+ε)` and `β' = β − γ'μ`, batch-norm is `γ'x + β'`.
//! Before a Sign, `Sign(γ'x + β') = Sign(x + β'/γ')` when `γ' > 0`, so the
//! layer becomes a per-channel threshold. Otherwise it folds into the
//! preceding linear layer's weights and bias.

use serde::{Deserialize, Serialize};

pub const DEFAULT_BN_EPS: f64 = 1e-5;

/// Frozen inference-time batch-norm statistics, one entry per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub eps: f64,
}

impl BnParams {
    /// Batch-norm that leaves its input unchanged: `σ² = 1 − ε`.
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            mean: vec![0.0; channels],
            var: vec![1.0 - DEFAULT_BN_EPS; channels],
            eps: DEFAULT_BN_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<(), String> {
        let n = self.gamma.len();
        if self.beta.len() != n || self.mean.len() != n || self.var.len() != n {
            return Err("batch-norm vectors differ in length".into());
        }
        if !(self.eps > 0.0) {
            return Err(format!("epsilon must be positive, got {}", self.eps));
        }
        if let Some(v) = self.var.iter().find(|v| !(**v >= 0.0)) {
            return Err(format!("negative variance {v}"));
        }
        Ok(())
    }

    /// `γ/√(σ²+ε)` per channel.
    pub fn scale(&self) -> Vec<f64> {
        self.gamma.iter().zip(&self.var).map(|(g, v)| g / (v + self.eps).sqrt()).collect()
    }

    /// `β − γ'μ` per channel.
    pub fn shift(&self) -> Vec<f64> {
        self.scale()
            .iter()
            .zip(self.beta.iter().zip(&self.mean))
            .map(|(s, (b, m))| b - s * m)
            .collect()
    }

    /// Plain batch-norm on channel-major data with `per_channel` elements
    /// per channel.
    pub fn apply(&self, x: &[f64], per_channel: usize) -> Vec<f64> {
        let (s, t) = (self.scale(), self.shift());
        x.iter().enumerate().map(|(k, v)| s[k / per_channel] * v + t[k / per_channel]).collect()
    }
}

/// Threshold `t = β'/γ'` per channel, or the first channel whose `γ'` is
/// not positive.
pub fn fuse_bn_sign(bn: &BnParams) -> Result<Vec<f64>, (usize, f64)> {
    let (s, t) = (bn.scale(), bn.shift());
    s.iter()
        .zip(&t)
        .enumerate()
        .map(|(c, (&s, &t))| if s > 0.0 { Ok(t / s) } else { Err((c, bn.gamma[c])) })
        .collect()
}

/// Folds batch-norm into a linear layer with `out` output channels, each
/// owning a contiguous block of `weight`: `W = W_FC·γ'`,
/// `b = β + (b_FC − μ)·γ'`.
pub fn fuse_bn_relu(weight: &[f64], bias: &[f64], bn: &BnParams) -> (Vec<f64>, Vec<f64>) {
    let s = bn.scale();
    let per = weight.len() / bias.len().max(1);
    let w = weight.iter().enumerate().map(|(k, w)| w * s[k / per]).collect();
    let b = bias
        .iter()
        .enumerate()
        .map(|(c, b)| bn.beta[c] + (b - bn.mean[c]) * s[c])
        .collect();
    (w, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bn1(gamma: f64, beta: f64, mean: f64, var_plus_eps: f64) -> BnParams {
        BnParams {
            gamma: vec![gamma],
            beta: vec![beta],
            mean: vec![mean],
            var: vec![var_plus_eps - DEFAULT_BN_EPS],
            eps: DEFAULT_BN_EPS,
        }
    }

    #[test]
    fn identity_threshold_is_zero() {
        let t = fuse_bn_sign(&BnParams::identity(3)).unwrap();
        assert!(t.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn worked_sign_example() {
        // γ' = 2/√4 = 1, β' = 3 − 1·1 = 2, t = 2.
        let bn = bn1(2.0, 3.0, 1.0, 4.0);
        assert!((bn.scale()[0] - 1.0).abs() < 1e-12);
        assert!((bn.shift()[0] - 2.0).abs() < 1e-12);
        assert!((fuse_bn_sign(&bn).unwrap()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn non_positive_gamma_rejected() {
        let mut bn = BnParams::identity(3);
        bn.gamma[2] = -0.5;
        assert_eq!(fuse_bn_sign(&bn).unwrap_err(), (2, -0.5));
    }

    #[test]
    fn sign_threshold_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let bn = bn1(rng.gen_range(0.1..3.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.1..4.0));
            let t = fuse_bn_sign(&bn).unwrap()[0];
            for _ in 0..100 {
                let x: f64 = rng.gen_range(-5.0..5.0);
                let y = bn.apply(&[x], 1)[0];
                assert_eq!(y >= 0.0, x + t >= 0.0, "x = {x}");
            }
        }
    }

    #[test]
    fn relu_fold_examples() {
        let (w, b) = fuse_bn_relu(&[0.3, -0.7], &[0.1], &BnParams::identity(1));
        assert!((w[0] - 0.3).abs() < 1e-5 && (w[1] + 0.7).abs() < 1e-5 && (b[0] - 0.1).abs() < 1e-5);
        // W = 1·3/3 = 1, b = 5 + (0 − 2)·1 = 3.
        let (w, b) = fuse_bn_relu(&[1.0], &[0.0], &bn1(3.0, 5.0, 2.0, 9.0));
        assert!((w[0] - 1.0).abs() < 1e-12 && (b[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn relu_fold_matches_bn_of_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (inp, out) = (5, 3);
        let w: Vec<f64> = (0..inp * out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bn = BnParams {
            gamma: (0..out).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            beta: (0..out).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            mean: (0..out).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            var: (0..out).map(|_| rng.gen_range(0.0..3.0)).collect(),
            eps: DEFAULT_BN_EPS,
        };
        let (fw, fb) = fuse_bn_relu(&w, &b, &bn);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..inp).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let lin: Vec<f64> = (0..out).map(|o| (0..inp).map(|j| w[o * inp + j] * x[j]).sum::<f64>() + b[o]).collect();
            let want = bn.apply(&lin, 1);
            for o in 0..out {
                let got: f64 = (0..inp).map(|j| fw[o * inp + j] * x[j]).sum::<f64>() + fb[o];
                assert!((got - want[o]).abs() < 1e-9);
            }
        }
    }
}
