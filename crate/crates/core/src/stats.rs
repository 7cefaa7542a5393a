//! Small statistics toolkit: Wilson score intervals, sample means with
//! standard errors, and batch means for autocorrelated series.

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for a proportion `p_hat` estimated from `n` trials.
///
/// `p_hat` need not be `k/n`: time-averaged indicators are passed straight
/// through, with `n` the number of independent paths.
pub fn wilson(p_hat: f64, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p_hat + z2 / (2.0 * n)) / denom;
    let half = Z95
        * (p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n))
            .max(0.0)
            .sqrt()
        / denom;
    let mut lo = (centre - half).max(0.0);
    let mut hi = (centre + half).min(1.0);
    // Rounding must not push the point estimate outside its own interval.
    if p_hat <= 0.0 {
        lo = 0.0;
    }
    if p_hat >= 1.0 {
        hi = 1.0;
    }
    (lo.min(p_hat), hi.max(p_hat))
}

/// A Monte-Carlo probability with its Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub hits: usize,
    pub n: usize,
}

impl ProbabilityEstimate {
    pub fn from_hits(hits: usize, n: usize) -> Self {
        let estimate = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
        let (ci_low, ci_high) = wilson(estimate, n);
        ProbabilityEstimate {
            estimate,
            ci_low,
            ci_high,
            hits,
            n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

/// Sample mean and standard error (n − 1 denominator).
pub fn mean_se(xs: &[f64]) -> MeanEstimate {
    let n = xs.len();
    if n == 0 {
        return MeanEstimate {
            mean: f64::NAN,
            std_err: f64::NAN,
            n,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let std_err = if n > 1 {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        (var / n as f64).sqrt()
    } else {
        f64::INFINITY
    };
    MeanEstimate { mean, std_err, n }
}

/// Batch-means estimate: the series is cut into `n_batches` contiguous
/// batches of equal length (the remainder at the front is dropped) and the
/// standard error is computed from the batch averages.
pub fn batch_means(xs: &[f64], n_batches: usize) -> MeanEstimate {
    if n_batches == 0 || xs.len() < n_batches {
        return mean_se(xs);
    }
    let len = xs.len() / n_batches;
    let start = xs.len() - len * n_batches;
    let batches: Vec<f64> = xs[start..]
        .chunks_exact(len)
        .map(|c| c.iter().sum::<f64>() / len as f64)
        .collect();
    let est = mean_se(&batches);
    MeanEstimate {
        mean: xs[start..].iter().sum::<f64>() / (len * n_batches) as f64,
        std_err: est.std_err,
        n: n_batches,
    }
}
