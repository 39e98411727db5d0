//! Scenario files: a network (or a recipe for random networks) plus the
//! experiment to run on it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::DurationFamily;
use crate::model::{ConfigError, NetworkConfig};
use crate::policy::PolicyKind;
use crate::random::RandomRanges;
use crate::sim::{RunOptions, SimError};

/// Default horizon in mean service times.
pub const DEFAULT_HORIZON_SERVICE_TIMES: f64 = 1e4;
/// Default warm-up as a fraction of the horizon.
pub const DEFAULT_WARMUP_FRACTION: f64 = 0.1;
pub const DEFAULT_REPLICATIONS: usize = 30;
pub const DEFAULT_MAX_REPLICATIONS: usize = 480;

const FIG1: &str = include_str!("../scenarios/fig1.json");
const FIG2: &str = include_str!("../scenarios/fig2.json");
const FIG3: &str = include_str!("../scenarios/fig3.json");

/// Names accepted in place of a scenario path.
pub const PRESETS: [&str; 3] = ["fig1", "fig2", "fig3"];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid value at `{path}`: {message}")]
    Validation { path: String, message: String },
    #[error("invalid network: {0}")]
    Config(#[from] ConfigError),
}

/// A batch of random networks drawn with derived seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSource {
    pub count: usize,
    #[serde(default)]
    pub ranges: RandomRanges,
}

fn default_policies() -> Vec<PolicyKind> {
    PolicyKind::ALL.to_vec()
}

fn default_h() -> Vec<u32> {
    vec![1]
}

fn default_distributions() -> Vec<DurationFamily> {
    vec![DurationFamily::Exponential]
}

fn default_replications() -> usize {
    DEFAULT_REPLICATIONS
}

fn default_max_replications() -> usize {
    DEFAULT_MAX_REPLICATIONS
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicyKind>,
    #[serde(default = "default_h")]
    pub h: Vec<u32>,
    #[serde(default = "default_distributions")]
    pub distributions: Vec<DurationFamily>,
    /// Simulated time per replication; defaults to 10^4 mean service times.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Defaults to 10% of the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<f64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Replication budget when enlarging to meet the CI criterion.
    #[serde(default = "default_max_replications")]
    pub max_replications: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Also compute exact and optimal ratios where tractable.
    #[serde(default)]
    pub oracle: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            policies: default_policies(),
            h: default_h(),
            distributions: default_distributions(),
            horizon: None,
            warmup: None,
            replications: DEFAULT_REPLICATIONS,
            max_replications: DEFAULT_MAX_REPLICATIONS,
            seed: default_seed(),
            oracle: false,
            output: None,
            workers: None,
        }
    }
}

impl ExperimentSpec {
    /// Horizon and warm-up for `config`, filling defaults.
    pub fn run_options(&self, config: &NetworkConfig) -> Result<RunOptions, SimError> {
        let horizon = self
            .horizon
            .unwrap_or(DEFAULT_HORIZON_SERVICE_TIMES * config.mean_service_time());
        let warmup = self.warmup.unwrap_or(DEFAULT_WARMUP_FRACTION * horizon);
        RunOptions::new(horizon, warmup)
    }

    fn check(&self) -> Result<(), ScenarioError> {
        let bad = |path: &str, message: &str| {
            Err(ScenarioError::Validation {
                path: format!("experiment.{path}"),
                message: message.into(),
            })
        };
        if self.policies.is_empty() {
            return bad("policies", "at least one policy is required");
        }
        if self.h.is_empty() || self.h.contains(&0) {
            return bad("h", "scaling values must be positive");
        }
        if self.distributions.is_empty() {
            return bad("distributions", "at least one distribution is required");
        }
        for d in &self.distributions {
            if let DurationFamily::Pareto { shape } = d {
                if shape.is_nan() || *shape <= 1.0 {
                    return bad("distributions", "Pareto shape must exceed 1");
                }
            }
        }
        if self.replications < 2 {
            return bad("replications", "at least two replications are required");
        }
        if self.max_replications < self.replications {
            return bad("max_replications", "must be at least `replications`");
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return bad("horizon", "must be positive and finite");
            }
        }
        if let Some(w) = self.warmup {
            if w.is_nan() || w < 0.0 || self.horizon.is_some_and(|h| w >= h) {
                return bad("warmup", "must be non-negative and below the horizon");
            }
        }
        if self.workers == Some(0) {
            return bad("workers", "must be positive");
        }
        Ok(())
    }
}

/// A scenario file. Exactly one of `network` and `random` is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomSource>,
    #[serde(default)]
    pub experiment: ExperimentSpec,
}

impl ScenarioFile {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        match (&self.network, &self.random) {
            (Some(net), None) => net.validate()?,
            (None, Some(r)) => {
                if r.count == 0 {
                    return Err(ScenarioError::Validation {
                        path: "random.count".into(),
                        message: "must be positive".into(),
                    });
                }
                let rr = &r.ranges;
                if rr.areas == 0 || rr.groups < rr.areas || rr.classes == 0 {
                    return Err(ScenarioError::Validation {
                        path: "random.ranges".into(),
                        message: "need at least one class and at least one group per area".into(),
                    });
                }
                if rr.units.is_empty() || rr.channels.is_empty() || rr.capacity.is_empty() {
                    return Err(ScenarioError::Validation {
                        path: "random.ranges".into(),
                        message: "value lists must be non-empty".into(),
                    });
                }
            }
            _ => {
                return Err(ScenarioError::Validation {
                    path: "network".into(),
                    message: "exactly one of `network` and `random` must be given".into(),
                })
            }
        }
        self.experiment.check()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Parses and validates scenario JSON.
pub fn parse_scenario(text: &str) -> Result<ScenarioFile, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_data() {
            ScenarioError::Validation {
                path,
                message: inner.to_string(),
            }
        } else {
            ScenarioError::Parse {
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        }
    })?;
    scenario.validate()?;
    Ok(scenario)
}

/// Built-in scenario by name.
pub fn preset(name: &str) -> Option<ScenarioFile> {
    let text = match name {
        "fig1" => FIG1,
        "fig2" => FIG2,
        "fig3" => FIG3,
        _ => return None,
    };
    Some(parse_scenario(text).expect("built-in scenarios are valid"))
}

/// Loads a scenario from a file, or a preset when `path` names one and no
/// such file exists.
pub fn load_scenario(path: &Path) -> Result<ScenarioFile, ScenarioError> {
    if !path.exists() {
        if let Some(s) = path.to_str().and_then(preset) {
            return Ok(s);
        }
    }
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_scenario(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::fig1_network;

    #[test]
    fn fig1_preset_matches_code() {
        let s = preset("fig1").unwrap();
        assert_eq!(s.network.as_ref().unwrap(), &fig1_network());
    }

    #[test]
    fn presets_round_trip() {
        for name in PRESETS {
            let s = preset(name).unwrap();
            assert_eq!(parse_scenario(&s.to_json()).unwrap(), s);
            assert_eq!(parse_scenario(&s.to_json()).unwrap().to_json(), s.to_json());
        }
    }

    #[test]
    fn empty_experiment_gets_defaults() {
        let mut s = preset("fig1").unwrap();
        s.experiment = ExperimentSpec::default();
        let text = format!(
            r#"{{"name": "x", "network": {}}}"#,
            serde_json::to_string(s.network.as_ref().unwrap()).unwrap()
        );
        let parsed = parse_scenario(&text).unwrap();
        assert_eq!(parsed.experiment, ExperimentSpec::default());
        assert_eq!(parsed.experiment.replications, 30);
        let opts = parsed.experiment.run_options(&fig1_network()).unwrap();
        let mean = fig1_network().mean_service_time();
        assert!((opts.horizon - 1e4 * mean).abs() < 1e-9);
        assert!((opts.warmup - 1e3 * mean).abs() < 1e-9);
    }

    #[test]
    fn negative_capacity_names_field() {
        let mut v: serde_json::Value = serde_json::from_str(FIG1).unwrap();
        v["network"]["groups"][2]["capacity"] = serde_json::json!(-1);
        match parse_scenario(&v.to_string()) {
            Err(ScenarioError::Validation { path, .. }) => {
                assert_eq!(path, "network.groups[2].capacity")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors_name_field() {
        let mut v: serde_json::Value = serde_json::from_str(FIG1).unwrap();
        v["network"]["groups"][1]["unit_power"] = serde_json::json!(-3.0);
        let err = parse_scenario(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("groups[1].unit_power"), "{err}");
    }

    #[test]
    fn syntax_error_has_location() {
        assert!(matches!(
            parse_scenario("{\n  \"name\": }"),
            Err(ScenarioError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn needs_exactly_one_source() {
        assert!(matches!(
            parse_scenario(r#"{"name": "x"}"#),
            Err(ScenarioError::Validation { .. })
        ));
    }
}
