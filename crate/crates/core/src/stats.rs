//! Chi-square uniformity checks used by the privacy smoke tests: anything a
//! party receives in masked form should look uniform on its low bits.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pearson statistic of `counts` against the uniform distribution.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}

/// Upper `alpha` quantile of the chi-square distribution with `df` degrees.
pub fn chi_square_critical(df: usize, alpha: f64) -> f64 {
    ChiSquared::new(df as f64)
        .expect("df > 0")
        .inverse_cdf(1.0 - alpha)
}

/// Histogram of the low `bits` bits of each value.
pub fn low_bits_histogram(values: impl IntoIterator<Item = u64>, bits: u32) -> Vec<u64> {
    let mut h = vec![0u64; 1 << bits];
    let mask = (1u64 << bits) - 1;
    for v in values {
        h[(v & mask) as usize] += 1;
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformityTest {
    pub samples: u64,
    pub statistic: f64,
    pub critical: f64,
}

impl UniformityTest {
    pub fn passed(&self) -> bool {
        self.statistic < self.critical
    }
}

/// Chi-square test of the low byte of `values` at significance `alpha`.
pub fn low_byte_uniformity(values: impl IntoIterator<Item = u64>, alpha: f64) -> UniformityTest {
    let h = low_bits_histogram(values, 8);
    UniformityTest {
        samples: h.iter().sum(),
        statistic: chi_square_uniform(&h),
        critical: chi_square_critical(255, alpha),
    }
}
