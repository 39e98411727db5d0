//! Exact analysis of the exponential model.
//!
//! Under exponential durations the network is a finite continuous-time
//! Markov chain. [`evaluate_policy_exact`] solves the stationary law of the
//! chain induced by a fixed policy; [`solve_optimal`] finds the policy
//! minimising the long-run power per unit throughput.

mod evaluate;
mod solve;
mod space;

use std::sync::Arc;

use thiserror::Error;

use crate::distribution::{CloudDurationMode, DurationFamily};
use crate::model::{ConfigError, NetworkConfig, NetworkState, ScaledNetwork};
use crate::policy::Decision;

pub use evaluate::{evaluate_policy_exact, ExactEvaluation};
pub use solve::{solve_optimal, DecisionTable, SolverOptions, SolverResult};
pub use space::StateSpace;

use space::{Scratch, NONE};

/// Largest state space the oracle will enumerate.
pub const DEFAULT_STATE_CAP: usize = 5_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("state space has {states:.3e} states, above the limit of {cap}")]
    StateSpaceTooLarge { states: f64, cap: usize },
    #[error("exact analysis needs exponential durations with the folded cloud delay")]
    NonExponential,
    #[error("state {state} cannot return to the empty state")]
    ReducibleChain { state: usize },
    #[error("stationary equations are singular")]
    SingularSystem,
    #[error("policy has zero long-run throughput")]
    Degenerate,
    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
    },
    #[error("policy chose infeasible {decision} for class {class} in state {state}")]
    InvalidDecision {
        state: usize,
        class: usize,
        decision: Decision,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Erlang loss probability for `servers` servers at offered load `load`.
pub fn erlang_b(servers: u32, load: f64) -> f64 {
    (1..=servers).fold(1.0, |b, n| load * b / (f64::from(n) + load * b))
}

/// Relative excess of a policy's ratio over the optimum.
pub fn normalized_deviation(policy_ratio: f64, optimal_ratio: f64) -> f64 {
    (policy_ratio - optimal_ratio) / optimal_ratio
}

/// Lists every state satisfying the capacity and channel constraints, the
/// empty state first.
pub fn enumerate_states(config: &NetworkConfig) -> Result<Vec<NetworkState>, OracleError> {
    let net = ScaledNetwork::new(config)?;
    let space = StateSpace::build(&net, DEFAULT_STATE_CAP)?;
    let mut scratch = Scratch::default();
    Ok((0..space.len())
        .map(|s| {
            let mut state = NetworkState::empty(&net);
            space.decode_into(&net, s, &mut state, &mut scratch);
            state
        })
        .collect())
}

/// The controlled chain: state space, per-state rates and the uniformization
/// constant.
#[derive(Debug, Clone)]
pub struct ExactModel {
    net: ScaledNetwork,
    space: Arc<StateSpace>,
    /// Position of each group within its area.
    group_pos: Vec<usize>,
    uniform_rate: f64,
}

impl ExactModel {
    pub fn new(net: &ScaledNetwork) -> Result<Self, OracleError> {
        Self::with_cap(net, DEFAULT_STATE_CAP)
    }

    pub fn with_cap(net: &ScaledNetwork, cap: usize) -> Result<Self, OracleError> {
        if net.duration_family() != DurationFamily::Exponential
            || net.cloud_duration_mode() != CloudDurationMode::Folded
        {
            return Err(OracleError::NonExponential);
        }
        let space = StateSpace::build(net, cap)?;
        let group_pos = (0..net.num_groups())
            .map(|k| {
                net.groups_in(net.area_of(k))
                    .iter()
                    .position(|&g| g == k)
                    .unwrap_or(0)
            })
            .collect();
        // The largest total outflow is the sum of per-area maxima, since
        // completion rates add across areas.
        let uniform_rate = net.total_arrival_rate()
            + space
                .areas
                .iter()
                .map(|a| a.max_completion_rate())
                .sum::<f64>();
        Ok(ExactModel {
            net: net.clone(),
            space: Arc::new(space),
            group_pos,
            uniform_rate,
        })
    }

    pub fn network(&self) -> &ScaledNetwork {
        &self.net
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn uniform_rate(&self) -> f64 {
        self.uniform_rate
    }

    pub fn state(&self, s: usize) -> NetworkState {
        let mut state = NetworkState::empty(&self.net);
        self.space
            .decode_into(&self.net, s, &mut state, &mut Scratch::default());
        state
    }

    pub fn index_of(&self, state: &NetworkState) -> Option<usize> {
        self.space.index_of(state)
    }

    /// Completion rate (tasks per unit time) in state `s`.
    pub fn reward_rate(&self, s: usize) -> f64 {
        let mut d = vec![0; self.net.num_areas()];
        self.space.digits(s, &mut d);
        self.space.reward(&d)
    }

    /// Power drawn in state `s`.
    pub fn cost_rate(&self, s: usize) -> f64 {
        let mut d = vec![0; self.net.num_areas()];
        self.space.digits(s, &mut d);
        self.space.cost(&d)
    }

    fn new_digits(&self) -> Vec<usize> {
        vec![0; self.net.num_areas()]
    }

    /// State reached from `s` by admitting a class-`j` task as `decision`.
    pub(crate) fn admit_target(
        &self,
        s: usize,
        digits: &[usize],
        j: usize,
        decision: Decision,
    ) -> Option<usize> {
        let (l, to) = match decision {
            Decision::Block => return Some(s),
            Decision::Edge(k) => {
                if k >= self.net.num_groups() {
                    return None;
                }
                let l = self.net.area_of(k);
                (
                    l,
                    self.space.areas[l].edge_target(digits[l], j, self.group_pos[k]),
                )
            }
            Decision::Cloud(l) => {
                if l >= self.net.num_areas() {
                    return None;
                }
                (l, self.space.areas[l].cloud_target(digits[l], j))
            }
        };
        (to != NONE).then(|| self.space.shift(s, l, digits[l], to))
    }

    /// Fastest area with a free class-`j` channel; ties go to the lowest index.
    pub(crate) fn cloud_area(&self, digits: &[usize], j: usize) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (l, a) in self.space.areas.iter().enumerate() {
            if a.cloud_target(digits[l], j) != NONE
                && best.is_none_or(|b| self.net.service_rate(j, l) > self.net.service_rate(j, b))
            {
                best = Some(l);
            }
        }
        best
    }

    /// Calls `f(decision, target)` for every admission available to a class-`j`
    /// arrival in `s`: edge groups in index order, then the cloud.
    #[inline]
    pub(crate) fn for_each_admission(
        &self,
        s: usize,
        digits: &[usize],
        j: usize,
        mut f: impl FnMut(Decision, usize),
    ) {
        for k in 0..self.net.num_groups() {
            let l = self.net.area_of(k);
            let to = self.space.areas[l].edge_target(digits[l], j, self.group_pos[k]);
            if to != NONE {
                f(Decision::Edge(k), self.space.shift(s, l, digits[l], to));
            }
        }
        if let Some(l) = self.cloud_area(digits, j) {
            let to = self.space.areas[l].cloud_target(digits[l], j);
            f(Decision::Cloud(l), self.space.shift(s, l, digits[l], to));
        }
    }

    /// Calls `f(rate, target)` for each completion out of `s`.
    #[inline]
    pub(crate) fn for_each_completion(
        &self,
        s: usize,
        digits: &[usize],
        mut f: impl FnMut(f64, usize),
    ) {
        for (l, a) in self.space.areas.iter().enumerate() {
            for &(rate, to) in a.completions_of(digits[l]) {
                f(rate, self.space.shift(s, l, digits[l], to));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::fig1_network;

    #[test]
    fn erlang_small_cases() {
        assert_eq!(erlang_b(0, 3.0), 1.0);
        assert!((erlang_b(1, 1.0) - 0.5).abs() < 1e-15);
        assert!((erlang_b(2, 1.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn fig1_state_counts() {
        let mut cfg = fig1_network();
        for (h, n) in [(1, 243), (2, 7_776), (3, 100_000)] {
            cfg.scaling = h;
            let net = ScaledNetwork::new(&cfg).unwrap();
            assert_eq!(StateSpace::build(&net, DEFAULT_STATE_CAP).unwrap().len(), n);
        }
    }

    #[test]
    fn enumeration_starts_empty_and_is_feasible() {
        let cfg = fig1_network();
        let net = ScaledNetwork::new(&cfg).unwrap();
        let states = enumerate_states(&cfg).unwrap();
        assert!(states[0].is_empty());
        for s in &states {
            s.check(&net).unwrap();
        }
    }

    #[test]
    fn index_round_trip() {
        let mut cfg = fig1_network();
        cfg.scaling = 2;
        let net = ScaledNetwork::new(&cfg).unwrap();
        let model = ExactModel::new(&net).unwrap();
        for s in (0..model.len()).step_by(37) {
            assert_eq!(model.index_of(&model.state(s)), Some(s));
        }
    }

    #[test]
    fn cap_is_enforced() {
        let mut cfg = fig1_network();
        cfg.scaling = 3;
        let net = ScaledNetwork::new(&cfg).unwrap();
        assert!(matches!(
            ExactModel::with_cap(&net, 1000),
            Err(OracleError::StateSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn rejects_non_exponential() {
        let mut cfg = fig1_network();
        cfg.duration = DurationFamily::Deterministic;
        let net = ScaledNetwork::new(&cfg).unwrap();
        assert_eq!(
            ExactModel::new(&net).unwrap_err(),
            OracleError::NonExponential
        );
    }
}
