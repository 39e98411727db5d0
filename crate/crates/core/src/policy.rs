//! Admission rules: PIER and the PTR / PLPC benchmarks.
//!
//! Every rule scans the edge groups in index order and then the cloud, and
//! keeps the first candidate with the best score. Ties therefore go to the
//! smallest group index, with the cloud ranked after every edge group.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{NetworkState, Requirement, ScaledNetwork};

/// Where an arriving task goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    /// Serve in edge group `k`.
    Edge(usize),
    /// Offload to the cloud through a channel of area `l`.
    Cloud(usize),
    Block,
}

impl Decision {
    pub fn is_block(self) -> bool {
        matches!(self, Decision::Block)
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Edge(k) => write!(f, "edge({k})"),
            Decision::Cloud(l) => write!(f, "cloud(via {l})"),
            Decision::Block => f.write_str("block"),
        }
    }
}

/// A destination before the cloud channel is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    Edge(usize),
    Cloud,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("class {class} cannot be served by group {group}")]
    InaccessiblePair { class: usize, group: usize },
    #[error("unknown policy `{0}` (expected pier, ptr or plpc)")]
    UnknownPolicy(String),
}

/// A stationary admission rule.
pub trait Policy: Sync {
    fn decide(&self, state: &NetworkState, net: &ScaledNetwork, class: usize) -> Decision;

    fn label(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Pier,
    Ptr,
    Plpc,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Pier, PolicyKind::Ptr, PolicyKind::Plpc];
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Pier => "pier",
            PolicyKind::Ptr => "ptr",
            PolicyKind::Plpc => "plpc",
        })
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pier" => Ok(PolicyKind::Pier),
            "ptr" => Ok(PolicyKind::Ptr),
            "plpc" => Ok(PolicyKind::Plpc),
            other => Err(PolicyError::UnknownPolicy(other.to_string())),
        }
    }
}

impl Policy for PolicyKind {
    fn decide(&self, state: &NetworkState, net: &ScaledNetwork, class: usize) -> Decision {
        match self {
            PolicyKind::Pier => pier_decide(state, net, class),
            PolicyKind::Ptr => ptr_decide(state, net, class),
            PolicyKind::Plpc => plpc_decide(state, net, class),
        }
    }

    fn label(&self) -> String {
        self.to_string()
    }
}

/// Increase in total power draw if the task is placed at `destination`,
/// including the idle power of a group that is currently off.
pub fn incremental_power_rate(
    state: &NetworkState,
    net: &ScaledNetwork,
    j: usize,
    destination: Destination,
) -> Result<f64, PolicyError> {
    match destination {
        Destination::Cloud => Ok(net.cloud_power(j)),
        Destination::Edge(k) => match net.requirement(j, k) {
            Requirement::Inaccessible => Err(PolicyError::InaccessiblePair { class: j, group: k }),
            Requirement::Units(w) => {
                let operational = f64::from(w) * net.unit_power(k);
                Ok(if state.group_active(k) {
                    operational
                } else {
                    net.idle_power(k) + operational
                })
            }
        },
    }
}

/// Effective cloud rate for class `j` through the fastest free channel, or
/// through the fastest area overall when every channel is busy.
fn cloud_rate_for(state: &NetworkState, net: &ScaledNetwork, j: usize) -> f64 {
    let l = state.fastest_cloud_area(net, j).unwrap_or_else(|| {
        (0..net.num_areas())
            .reduce(|a, b| {
                if net.service_rate(j, b) > net.service_rate(j, a) {
                    b
                } else {
                    a
                }
            })
            .unwrap_or(0)
    });
    net.cloud_rate(j, l)
}

/// Service rate per unit of incremental power. Inaccessible groups score 0.
pub fn pier_index(
    state: &NetworkState,
    net: &ScaledNetwork,
    j: usize,
    destination: Destination,
) -> f64 {
    let Ok(cost) = incremental_power_rate(state, net, j, destination) else {
        return 0.0;
    };
    match destination {
        Destination::Edge(k) => net.group_rate(j, k) / cost,
        Destination::Cloud => cloud_rate_for(state, net, j) / cost,
    }
}

/// Picks the feasible destination with the highest score. Strict comparison
/// keeps the earliest candidate on ties.
fn select_max(
    state: &NetworkState,
    net: &ScaledNetwork,
    j: usize,
    score: impl Fn(Destination) -> f64,
) -> Decision {
    let mut best = Decision::Block;
    let mut best_score = f64::NEG_INFINITY;
    for k in 0..net.num_groups() {
        if state.edge_feasible(net, j, k) {
            let s = score(Destination::Edge(k));
            if s > best_score {
                best = Decision::Edge(k);
                best_score = s;
            }
        }
    }
    if let Some(l) = state.fastest_cloud_area(net, j) {
        if score(Destination::Cloud) > best_score {
            best = Decision::Cloud(l);
        }
    }
    best
}

pub fn pier_decide(state: &NetworkState, net: &ScaledNetwork, j: usize) -> Decision {
    select_max(state, net, j, |d| pier_index(state, net, j, d))
}

/// Fastest feasible destination, ignoring power.
pub fn ptr_decide(state: &NetworkState, net: &ScaledNetwork, j: usize) -> Decision {
    select_max(state, net, j, |d| match d {
        Destination::Edge(k) => net.group_rate(j, k),
        Destination::Cloud => cloud_rate_for(state, net, j),
    })
}

/// Feasible destination with the least incremental power.
pub fn plpc_decide(state: &NetworkState, net: &ScaledNetwork, j: usize) -> Decision {
    select_max(state, net, j, |d| {
        incremental_power_rate(state, net, j, d).map_or(f64::NEG_INFINITY, |c| -c)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        feasible_destinations, ArcGroup, DestinationArea, NetworkConfig, TaskClass,
    };
    use crate::presets::fig1_network;

    fn fig1() -> ScaledNetwork {
        ScaledNetwork::new(&fig1_network()).unwrap()
    }

    #[test]
    fn incremental_power_examples() {
        let net = fig1();
        let s = NetworkState::empty(&net);
        assert_eq!(
            incremental_power_rate(&s, &net, 0, Destination::Edge(0)).unwrap(),
            1.08316
        );
        assert_eq!(
            incremental_power_rate(&s, &net, 0, Destination::Cloud).unwrap(),
            51.4714
        );

        let cfg = NetworkConfig {
            classes: vec![TaskClass {
                arrival_rate: 1.0,
                cloud_power: 50.0,
                requirements: vec![Requirement::Units(2), Requirement::Inaccessible],
            }],
            groups: vec![
                ArcGroup {
                    capacity: 4,
                    unit_power: 3.0,
                    idle_power: 2.0,
                },
                ArcGroup {
                    capacity: 4,
                    unit_power: 3.0,
                    idle_power: 2.0,
                },
            ],
            areas: vec![DestinationArea {
                groups: vec![0, 1],
                channels: vec![4],
                service_rates: vec![1.0],
            }],
            cloud_delay: 1.0,
            ..fig1_network()
        };
        let net = ScaledNetwork::new(&cfg).unwrap();
        let mut s = NetworkState::empty(&net);
        assert_eq!(
            incremental_power_rate(&s, &net, 0, Destination::Edge(0)).unwrap(),
            8.0
        );
        s.admit(&net, 0, Decision::Edge(0)).unwrap();
        assert_eq!(
            incremental_power_rate(&s, &net, 0, Destination::Edge(0)).unwrap(),
            6.0
        );
        assert_eq!(
            incremental_power_rate(&s, &net, 0, Destination::Edge(1)),
            Err(PolicyError::InaccessiblePair { class: 0, group: 1 })
        );
    }

    #[test]
    fn fig1_indices() {
        let net = fig1();
        let s = NetworkState::empty(&net);
        let idx = |d| pier_index(&s, &net, 0, d);
        // The reference inputs are rounded, so agreement is to about four
        // significant figures.
        let close = |got: f64, want: f64| (got - want).abs() <= 2e-4 * want;
        assert!(close(idx(Destination::Edge(0)), 1.57268));
        assert!(close(idx(Destination::Edge(2)), 1.53965));
        assert!(close(idx(Destination::Edge(3)), 0.10358));
        assert!(close(idx(Destination::Edge(1)), 0.03738));
        assert!(close(idx(Destination::Edge(4)), 0.01304));
        assert!(close(idx(Destination::Cloud), 0.003502));
    }

    #[test]
    fn fig1_empty_state_decisions() {
        let net = fig1();
        let s = NetworkState::empty(&net);
        assert_eq!(pier_decide(&s, &net, 0), Decision::Edge(0));
        assert_eq!(ptr_decide(&s, &net, 0), Decision::Edge(2));
        assert_eq!(plpc_decide(&s, &net, 0), Decision::Edge(0));
    }

    #[test]
    fn blocked_when_all_channels_busy() {
        let net = fig1();
        let mut s = NetworkState::empty(&net);
        for l in 0..5 {
            s.admit(&net, 0, Decision::Cloud(l)).unwrap();
        }
        for p in PolicyKind::ALL {
            assert_eq!(p.decide(&s, &net, 0), Decision::Block);
        }
    }

    #[test]
    fn only_cloud_feasible() {
        let mut cfg = fig1_network();
        for a in &mut cfg.areas {
            a.channels[0] = 2;
        }
        let net = ScaledNetwork::new(&cfg).unwrap();
        let mut s = NetworkState::empty(&net);
        for k in 0..5 {
            s.admit(&net, 0, Decision::Edge(k)).unwrap();
        }
        // Area 2 has the fastest channel.
        for p in PolicyKind::ALL {
            assert_eq!(p.decide(&s, &net, 0), Decision::Cloud(2));
        }
    }

    #[test]
    fn pier_moves_on_when_best_group_is_full() {
        let net = fig1();
        let mut s = NetworkState::empty(&net);
        s.admit(&net, 0, Decision::Edge(0)).unwrap();
        assert_eq!(pier_decide(&s, &net, 0), Decision::Edge(2));
    }

    #[test]
    fn min_id_tie_break() {
        let mut cfg = fig1_network();
        cfg.groups[1] = cfg.groups[3].clone();
        cfg.areas[1].service_rates = cfg.areas[3].service_rates.clone();
        // Make groups 1 and 3 the best choice.
        cfg.groups[1].unit_power = 0.5;
        cfg.groups[3].unit_power = 0.5;
        cfg.areas[1].service_rates[0] = 10.0;
        cfg.areas[3].service_rates[0] = 10.0;
        let net = ScaledNetwork::new(&cfg).unwrap();
        let s = NetworkState::empty(&net);
        assert_eq!(pier_decide(&s, &net, 0), Decision::Edge(1));
    }

    #[test]
    fn plpc_prefers_cloud_over_idle_groups() {
        let mut cfg = fig1_network();
        for g in &mut cfg.groups {
            g.idle_power = 100.0;
        }
        let net = ScaledNetwork::new(&cfg).unwrap();
        let s = NetworkState::empty(&net);
        assert!(matches!(plpc_decide(&s, &net, 0), Decision::Cloud(_)));
        assert!(feasible_destinations(&s, &net, 0).contains(plpc_decide(&s, &net, 0)));
    }

    #[test]
    fn policy_names_round_trip() {
        for p in PolicyKind::ALL {
            assert_eq!(p.to_string().parse::<PolicyKind>().unwrap(), p);
        }
        assert!("fifo".parse::<PolicyKind>().is_err());
    }
}
