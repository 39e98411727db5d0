//! Task duration distributions, parameterised by their mean.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Shape of the task duration law. The mean comes from the service rate of
/// the destination, so only the family (and Pareto tail index) is configured.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum DurationFamily {
    #[default]
    Exponential,
    Deterministic,
    Pareto {
        shape: f64,
    },
}

impl DurationFamily {
    pub fn is_exponential(self) -> bool {
        matches!(self, DurationFamily::Exponential)
    }
}

impl fmt::Display for DurationFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DurationFamily::Exponential => f.write_str("exp"),
            DurationFamily::Deterministic => f.write_str("det"),
            DurationFamily::Pareto { shape } => write!(f, "pareto:{shape}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("mean must be positive and finite, got {0}")]
    InvalidMean(f64),
    #[error("pareto shape must exceed 1, got {0}")]
    InvalidShape(f64),
    #[error("unknown distribution `{0}` (expected exp, det or pareto:SHAPE)")]
    Unknown(String),
}

impl FromStr for DurationFamily {
    type Err = DistributionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "exp" | "exponential" => Ok(DurationFamily::Exponential),
            "det" | "deterministic" => Ok(DurationFamily::Deterministic),
            other => {
                let shape = other
                    .strip_prefix("pareto:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| DistributionError::Unknown(other.to_string()))?;
                if shape > 1.0 && shape.is_finite() {
                    Ok(DurationFamily::Pareto { shape })
                } else {
                    Err(DistributionError::InvalidShape(shape))
                }
            }
        }
    }
}

/// How the duration of a cloud-bound task is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloudDurationMode {
    /// One draw from the configured family with mean `1/mu'`.
    #[default]
    Folded,
    /// An edge-duration draw (mean `1/mu`) plus the fixed cloud delay.
    EdgePlusDelay,
}

/// A duration law with a given mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DurationDistribution {
    family: DurationFamily,
    mean: f64,
}

impl DurationDistribution {
    pub fn new(family: DurationFamily, mean: f64) -> Result<Self, DistributionError> {
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(DistributionError::InvalidMean(mean));
        }
        if let DurationFamily::Pareto { shape } = family {
            if !(shape > 1.0 && shape.is_finite()) {
                return Err(DistributionError::InvalidShape(shape));
            }
        }
        Ok(DurationDistribution { family, mean })
    }

    pub fn family(&self) -> DurationFamily {
        self.family
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Pareto scale `x_m` that gives the configured mean; `None` for other
    /// families.
    pub fn pareto_scale(&self) -> Option<f64> {
        match self.family {
            DurationFamily::Pareto { shape } => Some(self.mean * (shape - 1.0) / shape),
            _ => None,
        }
    }

    /// Draws one duration by inversion. Always strictly positive.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            DurationFamily::Deterministic => self.mean,
            DurationFamily::Exponential => -self.mean * open_unit(rng).ln(),
            DurationFamily::Pareto { shape } => {
                let scale = self.mean * (shape - 1.0) / shape;
                scale * open_unit(rng).powf(-1.0 / shape)
            }
        }
    }
}

/// Uniform draw on (0, 1].
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

pub fn sample_duration<R: Rng + ?Sized>(dist: &DurationDistribution, rng: &mut R) -> f64 {
    dist.sample(rng)
}

/// Exponential inter-arrival time for a Poisson stream of rate `rate`.
pub(crate) fn exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    -open_unit(rng).ln() / rate
}
