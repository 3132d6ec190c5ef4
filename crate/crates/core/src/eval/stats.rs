//! Normal-approximation confidence intervals for success rates.

use serde::{Deserialize, Serialize};

pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub p_hat: f64,
    pub n: u64,
    pub sem: f64,
    pub lo: f64,
    pub hi: f64,
}

impl ConfidenceInterval {
    pub fn half_width(&self) -> f64 {
        Z95 * self.sem
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("confidence interval needs at least one sample")]
    ZeroSamples,
    #[error("{successes} successes out of {n} samples")]
    TooManySuccesses { successes: u64, n: u64 },
}

/// p̂ ± 1.96·sqrt(p̂(1−p̂)/n), clamped to [0, 1].
pub fn ci95(successes: u64, n: u64) -> Result<ConfidenceInterval, StatsError> {
    if n == 0 {
        return Err(StatsError::ZeroSamples);
    }
    if successes > n {
        return Err(StatsError::TooManySuccesses { successes, n });
    }
    let p_hat = successes as f64 / n as f64;
    let sem = (p_hat * (1.0 - p_hat) / n as f64).sqrt();
    let half = Z95 * sem;
    Ok(ConfidenceInterval {
        p_hat,
        n,
        sem,
        lo: (p_hat - half).max(0.0),
        hi: (p_hat + half).min(1.0),
    })
}
