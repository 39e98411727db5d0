//! Batch execution of scenario files.
//!
//! Every (network, h) pair is a unit of work. Within a unit, all policies and
//! duration families share one seed, so they see the same arrival sequence.

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::distribution::DurationFamily;
use crate::model::{apply_scaling, NetworkConfig};
use crate::oracle::{
    evaluate_policy_exact, normalized_deviation, solve_optimal, ExactModel, OracleError,
    SolverOptions,
};
use crate::policy::PolicyKind;
use crate::random::{derive_seed, generate_random_scenario};
use crate::replicate::replicate_until_ci;
use crate::scenario::{ScenarioError, ScenarioFile};

/// Column order of the results CSV.
pub const CSV_COLUMNS: [&str; 16] = [
    "scenario",
    "policy",
    "h",
    "distribution",
    "replications",
    "mean_ratio",
    "ci_half_width",
    "ci_ok",
    "blocked_fraction",
    "throughput_rate",
    "exact_ratio",
    "optimal_ratio",
    "normalized_deviation",
    "exact_deviation",
    "relative_difference",
    "error",
];

/// One (network, policy, h, distribution) cell.
///
/// `normalized_deviation` uses the simulated mean, `exact_deviation` the
/// exact ratio. `relative_difference` compares the mean with the
/// exponential row of the same network, policy and h.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub policy: PolicyKind,
    pub h: u32,
    pub distribution: String,
    pub replications: usize,
    pub mean_ratio: Option<f64>,
    pub ci_half_width: Option<f64>,
    pub ci_ok: Option<bool>,
    pub blocked_fraction: Option<f64>,
    pub throughput_rate: Option<f64>,
    pub exact_ratio: Option<f64>,
    pub optimal_ratio: Option<f64>,
    pub normalized_deviation: Option<f64>,
    pub exact_deviation: Option<f64>,
    pub relative_difference: Option<f64>,
    /// Empty on success. Oracle notes start with `oracle:`.
    pub error: String,
}

impl ResultRow {
    fn failed(&self) -> bool {
        !self.error.is_empty() && !self.error.starts_with("oracle skipped")
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub rows: Vec<ResultRow>,
}

impl ExperimentOutcome {
    /// Cells that ran but missed the CI criterion.
    pub fn ci_failures(&self) -> usize {
        self.rows.iter().filter(|r| r.ci_ok == Some(false)).count()
    }

    pub fn errors(&self) -> usize {
        self.rows.iter().filter(|r| r.failed()).count()
    }

    /// 0 on success, 1 if any cell failed, 2 if any cell missed the CI
    /// criterion.
    pub fn exit_code(&self) -> i32 {
        if self.errors() > 0 {
            1
        } else if self.ci_failures() > 0 {
            2
        } else {
            0
        }
    }

    /// Ratios `mean(pier) / mean(other)` for every network, h and
    /// distribution where both cells succeeded.
    pub fn ratio_pairs(&self, other: PolicyKind) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.policy == PolicyKind::Pier)
            .filter_map(|p| {
                let o = self.rows.iter().find(|r| {
                    r.policy == other
                        && r.scenario == p.scenario
                        && r.h == p.h
                        && r.distribution == p.distribution
                })?;
                Some(p.mean_ratio? / o.mean_ratio?)
            })
            .collect()
    }
}

/// Empirical distribution of ratio pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfSummary {
    /// Fraction of pairs below 1.
    pub win_fraction: f64,
    /// Sorted `(value, cumulative fraction)` steps.
    pub points: Vec<(f64, f64)>,
}

/// # Panics
///
/// If `ratios` is empty.
pub fn summarize_cdf(ratios: &[f64]) -> CdfSummary {
    assert!(!ratios.is_empty(), "no ratio pairs to summarize");
    let n = ratios.len() as f64;
    let mut sorted = ratios.to_vec();
    sorted.sort_by(f64::total_cmp);
    let points = sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, (i + 1) as f64 / n))
        .collect();
    CdfSummary {
        win_fraction: ratios.iter().filter(|&&r| r < 1.0).count() as f64 / n,
        points,
    }
}

/// The networks of `scenario` at scaling `h`, with their ids.
pub fn scenario_networks(scenario: &ScenarioFile, h: u32) -> Vec<(String, NetworkConfig)> {
    match (&scenario.network, &scenario.random) {
        (Some(net), _) => vec![(scenario.name.clone(), net.clone())],
        (None, Some(r)) => (0..r.count)
            .map(|i| {
                let seed = derive_seed(scenario.experiment.seed, &[u64::from(h), i as u64, 0]);
                (
                    format!("{}-{i:03}", scenario.name),
                    generate_random_scenario(seed, &r.ranges),
                )
            })
            .collect(),
        (None, None) => Vec::new(),
    }
}

struct OracleResult {
    exact: Vec<(PolicyKind, f64)>,
    optimal: f64,
}

fn run_oracle(
    config: &NetworkConfig,
    h: u32,
    policies: &[PolicyKind],
) -> Result<OracleResult, OracleError> {
    let mut cfg = config.clone();
    cfg.duration = DurationFamily::Exponential;
    let net = apply_scaling(&cfg, h)?;
    let model = ExactModel::new(&net)?;
    let exact = policies
        .iter()
        .map(|&p| Ok((p, evaluate_policy_exact(&model, &p)?.ratio)))
        .collect::<Result<Vec<_>, OracleError>>()?;
    let optimal = solve_optimal(&model, &SolverOptions::default())?.optimal_ratio;
    Ok(OracleResult { exact, optimal })
}

fn run_unit(
    scenario: &ScenarioFile,
    id: &str,
    config: &NetworkConfig,
    h: u32,
    index: usize,
) -> Vec<ResultRow> {
    let exp = &scenario.experiment;
    let seed = derive_seed(exp.seed, &[u64::from(h), index as u64, 1]);
    let oracle = exp.oracle.then(|| run_oracle(config, h, &exp.policies));
    let mut rows = Vec::new();
    for &dist in &exp.distributions {
        for &policy in &exp.policies {
            let mut row = ResultRow {
                scenario: id.to_string(),
                policy,
                h,
                distribution: dist.to_string(),
                replications: 0,
                mean_ratio: None,
                ci_half_width: None,
                ci_ok: None,
                blocked_fraction: None,
                throughput_rate: None,
                exact_ratio: None,
                optimal_ratio: None,
                normalized_deviation: None,
                exact_deviation: None,
                relative_difference: None,
                error: String::new(),
            };
            let mut cfg = config.clone();
            cfg.duration = dist;
            let sim = exp.run_options(&cfg).and_then(|opts| {
                let net = apply_scaling(&cfg, h)?;
                replicate_until_ci(
                    &net,
                    &policy,
                    exp.replications,
                    exp.max_replications,
                    &opts,
                    seed,
                )
            });
            match sim {
                Ok(s) => {
                    row.replications = s.replications();
                    row.mean_ratio = Some(s.mean);
                    row.ci_half_width = Some(s.half_width);
                    row.ci_ok = Some(s.ci_ok);
                    row.blocked_fraction = Some(s.blocked_fraction);
                    row.throughput_rate = Some(s.throughput_rate);
                }
                Err(e) => row.error = e.to_string(),
            }
            if dist.is_exponential() {
                match &oracle {
                    Some(Ok(o)) => {
                        let exact = o.exact.iter().find(|(p, _)| *p == policy).map(|x| x.1);
                        row.exact_ratio = exact;
                        row.optimal_ratio = Some(o.optimal);
                        row.exact_deviation = exact.map(|e| normalized_deviation(e, o.optimal));
                        row.normalized_deviation =
                            row.mean_ratio.map(|m| normalized_deviation(m, o.optimal));
                    }
                    Some(Err(e @ OracleError::StateSpaceTooLarge { .. }))
                        if row.error.is_empty() =>
                    {
                        row.error = format!("oracle skipped: {e}");
                    }
                    Some(Err(e)) if row.error.is_empty() => row.error = format!("oracle: {e}"),
                    _ => {}
                }
            }
            rows.push(row);
        }
    }
    // Relative difference to the exponential cell of the same policy.
    let baseline: Vec<(PolicyKind, f64)> = rows
        .iter()
        .filter(|r| r.distribution == DurationFamily::Exponential.to_string())
        .filter_map(|r| Some((r.policy, r.mean_ratio?)))
        .collect();
    for row in &mut rows {
        if let (Some(m), Some(&(_, b))) = (
            row.mean_ratio,
            baseline.iter().find(|(p, _)| *p == row.policy),
        ) {
            row.relative_difference = Some(m / b - 1.0);
        }
    }
    rows
}

/// Runs every cell of `scenario`, writing the CSV to `experiment.output`
/// when set.
pub fn run_experiment(scenario: &ScenarioFile) -> Result<ExperimentOutcome, ExperimentError> {
    scenario.validate()?;
    let exp = &scenario.experiment;
    let units: Vec<(u32, usize, String, NetworkConfig)> = exp
        .h
        .iter()
        .flat_map(|&h| {
            scenario_networks(scenario, h)
                .into_iter()
                .enumerate()
                .map(move |(i, (id, cfg))| (h, i, id, cfg))
        })
        .collect();
    let work = || -> Vec<ResultRow> {
        units
            .par_iter()
            .map(|(h, i, id, cfg)| run_unit(scenario, id, cfg, *h, *i))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    };
    let rows = match exp.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()?
            .install(work),
        None => work(),
    };
    let outcome = ExperimentOutcome { rows };
    if let Some(path) = &exp.output {
        let file = File::create(path).map_err(|source| ExperimentError::Io {
            path: path.clone(),
            source,
        })?;
        write_csv(&outcome.rows, file)?;
    }
    Ok(outcome)
}

/// Writes rows with one header line and LF line endings.
pub fn write_csv<W: Write>(rows: &[ResultRow], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    if rows.is_empty() {
        w.write_record(CSV_COLUMNS)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
