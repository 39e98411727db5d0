//! Independent replications and Student-t confidence intervals.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::model::ScaledNetwork;
use crate::policy::Policy;
use crate::sim::{
    energy_efficiency, run_replication, throughput_count_rate, Metrics, RunOptions, SimError,
};

/// Maximum CI half-width, relative to the mean, accepted for a reported
/// result.
pub const CI_TOLERANCE: f64 = 0.05;

/// Two-sided 95% Student-t quantile with `df` degrees of freedom.
pub fn t_quantile_975(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("degrees of freedom must be positive")
        .inverse_cdf(0.975)
}

/// Sample mean and 95% half-width `t * s / sqrt(n)`.
pub fn mean_half_width(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::INFINITY);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, t_quantile_975(n - 1) * (var / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    /// Energy-efficiency ratio of each replication.
    pub ratios: Vec<f64>,
    pub mean: f64,
    pub half_width: f64,
    /// Mean blocked fraction over replications.
    pub blocked_fraction: f64,
    /// Mean completions per unit time over replications.
    pub throughput_rate: f64,
    /// Whether `half_width <= CI_TOLERANCE * mean`.
    pub ci_ok: bool,
}

impl ReplicationSummary {
    pub fn from_metrics(runs: &[Metrics]) -> Result<Self, SimError> {
        if runs.len() < 2 {
            return Err(SimError::TooFewReplications(runs.len()));
        }
        let ratios = runs
            .iter()
            .map(energy_efficiency)
            .collect::<Result<Vec<_>, _>>()?;
        let (mean, half_width) = mean_half_width(&ratios);
        let n = runs.len() as f64;
        Ok(ReplicationSummary {
            blocked_fraction: runs.iter().map(Metrics::blocked_fraction).sum::<f64>() / n,
            throughput_rate: runs.iter().map(throughput_count_rate).sum::<f64>() / n,
            ci_ok: half_width <= CI_TOLERANCE * mean,
            ratios,
            mean,
            half_width,
        })
    }

    pub fn replications(&self) -> usize {
        self.ratios.len()
    }

    pub fn relative_half_width(&self) -> f64 {
        self.half_width / self.mean
    }
}

/// Runs replications `first..first + count` in parallel, returned in index
/// order.
pub fn run_batch(
    net: &ScaledNetwork,
    policy: &dyn Policy,
    opts: &RunOptions,
    seed: u64,
    first: u64,
    count: u64,
) -> Result<Vec<Metrics>, SimError> {
    (first..first + count)
        .into_par_iter()
        .map(|r| run_replication(net, policy, opts, seed, r))
        .collect()
}

/// `n` independent replications of the run identified by `seed`.
pub fn replicate(
    net: &ScaledNetwork,
    policy: &dyn Policy,
    n: usize,
    opts: &RunOptions,
    seed: u64,
) -> Result<ReplicationSummary, SimError> {
    if n < 2 {
        return Err(SimError::TooFewReplications(n));
    }
    ReplicationSummary::from_metrics(&run_batch(net, policy, opts, seed, 0, n as u64)?)
}

/// Starts with `initial` replications and doubles the count until the CI
/// criterion holds or `max` replications have run. The returned summary
/// carries `ci_ok = false` if the budget ran out.
pub fn replicate_until_ci(
    net: &ScaledNetwork,
    policy: &dyn Policy,
    initial: usize,
    max: usize,
    opts: &RunOptions,
    seed: u64,
) -> Result<ReplicationSummary, SimError> {
    if initial < 2 {
        return Err(SimError::TooFewReplications(initial));
    }
    let mut runs = run_batch(net, policy, opts, seed, 0, initial as u64)?;
    loop {
        let summary = ReplicationSummary::from_metrics(&runs)?;
        if summary.ci_ok || runs.len() >= max {
            return Ok(summary);
        }
        let extra = runs.len().min(max - runs.len()) as u64;
        runs.extend(run_batch(
            net,
            policy,
            opts,
            seed,
            runs.len() as u64,
            extra,
        )?);
    }
}
