//! Sample aggregation, the ±5% confidence level and the adaptive driver.

use std::time::Instant;

use thiserror::Error;

use crate::estimators::{Estimator, EstimatorError, MethodKind, SensitivityRequest};

/// Default cap on the adaptive sample size.
pub const DEFAULT_N_MAX: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("reference value 0 has an empty 5% interval")]
    DegenerateReference,
    #[error("invalid adaptive policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Sample size, mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: u64,
    pub mean: f64,
    pub std_dev: f64,
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// μ_N and σ_N = s/√N with the unbiased (N−1) sample variance.
pub fn aggregate(samples: &[f64]) -> Result<Summary, StatsError> {
    let n = samples.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples(n));
    }
    let mean = compensated_sum(samples.iter().copied()) / n as f64;
    let ss = compensated_sum(samples.iter().map(|v| (v - mean) * (v - mean)));
    let var = ss / (n - 1) as f64;
    Ok(Summary {
        n: n as u64,
        mean,
        std_dev: (var / n as f64).sqrt(),
    })
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Probability that N(mean, std_dev²) lands in [s0 − 5%|s0|, s0 + 5%|s0|].
pub fn confidence_level(mean: f64, std_dev: f64, s0: f64) -> Result<f64, StatsError> {
    if s0 == 0.0 {
        return Err(StatsError::DegenerateReference);
    }
    let a = s0 - 0.05 * s0.abs();
    let b = s0 + 0.05 * s0.abs();
    if std_dev == 0.0 {
        return Ok(if (a..=b).contains(&mean) { 1.0 } else { 0.0 });
    }
    let lo = (a - mean) / std_dev;
    let hi = (b - mean) / std_dev;
    // Subtract in whichever tail keeps both terms small.
    let p = if lo > 0.0 {
        normal_sf(lo) - normal_sf(hi)
    } else {
        normal_cdf(hi) - normal_cdf(lo)
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Distance from `mean` to the 5% interval around `s0` (0 inside).
fn distance_outside(mean: f64, s0: f64) -> f64 {
    let a = s0 - 0.05 * s0.abs();
    let b = s0 + 0.05 * s0.abs();
    (a - mean).max(mean - b).max(0.0)
}

/// Stopping rule for [`run_adaptive`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptivePolicy {
    pub target_p: f64,
    pub n_max: u64,
    pub initial_batch: u64,
    pub growth: u64,
    /// Give up early once the mean sits this many standard errors outside
    /// the 5% interval (see [`BIAS_STOP_MIN_N`]). Meant for finite-difference
    /// runs whose bias alone rules out the target.
    pub bias_stop_z: Option<f64>,
}

/// Samples (and nonzero samples) required before the bias stop may trigger.
/// Finite-difference samples are mostly zero for small h, so a short run can
/// report a spuriously tiny standard error.
pub const BIAS_STOP_MIN_N: u64 = 10_000;

impl AdaptivePolicy {
    pub fn new(target_p: f64) -> AdaptivePolicy {
        AdaptivePolicy {
            target_p,
            n_max: DEFAULT_N_MAX,
            initial_batch: 100,
            growth: 2,
            bias_stop_z: None,
        }
    }

    pub fn with_n_max(mut self, n_max: u64) -> AdaptivePolicy {
        self.n_max = n_max;
        self
    }

    pub fn with_bias_stop(mut self, z: f64) -> AdaptivePolicy {
        self.bias_stop_z = Some(z);
        self
    }

    fn validate(&self) -> Result<(), StatsError> {
        let bad = |m: &str| Err(StatsError::InvalidPolicy(m.into()));
        if !(self.target_p > 0.0 && self.target_p < 1.0) {
            return bad("target p must lie in (0, 1)");
        }
        if self.initial_batch < 2 || self.n_max < self.initial_batch {
            return bad("need n_max >= initial batch >= 2");
        }
        if self.growth < 2 {
            return bad("growth factor must be at least 2");
        }
        if self.bias_stop_z.is_some_and(|z| z.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)) {
            return bad("bias stop threshold must be positive");
        }
        Ok(())
    }
}

/// Result of one estimation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub n: u64,
    pub mean: f64,
    pub std_dev: f64,
    pub confidence: Option<f64>,
    pub reference: Option<f64>,
    /// Adaptive runs only: whether the target confidence was reached.
    pub target_met: Option<bool>,
    pub elapsed_s: f64,
    pub method: MethodKind,
    pub h: Option<f64>,
    pub seed: u64,
    /// Mean PPA auxiliary pairs per sample (0 for other methods).
    pub mean_aux_paths: f64,
}

struct Accumulator {
    values: Vec<f64>,
    aux: u64,
    nonzero: u64,
}

impl Accumulator {
    fn extend(&mut self, est: &Estimator, from: u64, to: u64) -> Result<(), StatsError> {
        for s in est.samples(from..to)? {
            self.values.push(s.value);
            self.aux += s.aux_paths_used;
            self.nonzero += (s.value != 0.0) as u64;
        }
        Ok(())
    }
}

fn report(
    request: &SensitivityRequest,
    acc: &Accumulator,
    reference: Option<f64>,
    target_met: Option<bool>,
    started: Instant,
) -> Result<EstimateReport, StatsError> {
    let summary = aggregate(&acc.values)?;
    let confidence = reference
        .map(|s0| confidence_level(summary.mean, summary.std_dev, s0))
        .transpose()?;
    Ok(EstimateReport {
        n: summary.n,
        mean: summary.mean,
        std_dev: summary.std_dev,
        confidence,
        reference,
        target_met,
        elapsed_s: started.elapsed().as_secs_f64(),
        method: request.method.kind(),
        h: request.method.h(),
        seed: request.seed,
        mean_aux_paths: acc.aux as f64 / summary.n as f64,
    })
}

/// Estimate with a fixed number of samples (indices 0..n).
pub fn run_fixed(
    request: SensitivityRequest,
    n: u64,
    reference: Option<f64>,
) -> Result<EstimateReport, StatsError> {
    if n < 2 {
        return Err(StatsError::TooFewSamples(n as usize));
    }
    if reference == Some(0.0) {
        return Err(StatsError::DegenerateReference);
    }
    let started = Instant::now();
    let est = Estimator::new(request)?;
    let mut acc = Accumulator {
        values: Vec::with_capacity(n as usize),
        aux: 0,
        nonzero: 0,
    };
    acc.extend(&est, 0, n)?;
    report(est.request(), &acc, reference, None, started)
}

/// Grow the sample geometrically until the confidence level against
/// `reference` reaches the target or the cap is hit. Statistics always use
/// every sample drawn so far. A missed target is reported, not an error.
pub fn run_adaptive(
    request: SensitivityRequest,
    policy: &AdaptivePolicy,
    reference: f64,
) -> Result<EstimateReport, StatsError> {
    policy.validate()?;
    if reference == 0.0 {
        return Err(StatsError::DegenerateReference);
    }
    let started = Instant::now();
    let est = Estimator::new(request)?;
    let mut acc = Accumulator {
        values: Vec::new(),
        aux: 0,
        nonzero: 0,
    };
    let mut n = 0;
    let mut next = policy.initial_batch.min(policy.n_max);
    loop {
        acc.extend(&est, n, next)?;
        n = next;
        let s = aggregate(&acc.values)?;
        let p = confidence_level(s.mean, s.std_dev, reference)?;
        if p >= policy.target_p {
            return report(est.request(), &acc, Some(reference), Some(true), started);
        }
        let hopeless = policy.bias_stop_z.is_some_and(|z| {
            n >= BIAS_STOP_MIN_N
                && acc.nonzero >= 100
                && s.std_dev > 0.0
                && distance_outside(s.mean, reference) > z * s.std_dev
        });
        if n >= policy.n_max || hopeless {
            return report(est.request(), &acc, Some(reference), Some(false), started);
        }
        next = n.saturating_mul(policy.growth).min(policy.n_max);
    }
}
