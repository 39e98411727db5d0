//! Built-in networks.

use crate::distribution::{CloudDurationMode, DurationFamily};
use crate::model::{ArcGroup, DestinationArea, NetworkConfig, Requirement, TaskClass};

/// Mean edge task durations of the five areas of the single-class scenario.
pub const FIG1_MEAN_DURATIONS: [f64; 5] = [0.587051, 2.65982, 0.547387, 1.1986949, 4.78274];
/// Operational power per unit of the five groups.
pub const FIG1_UNIT_POWER: [f64; 5] = [1.08316, 10.0584, 1.18651, 8.0544, 16.0324];
pub const FIG1_CLOUD_POWER: f64 = 51.4714;
pub const FIG1_ARRIVAL_RATE: f64 = 5.182638;
pub const FIG1_CLOUD_DELAY: f64 = 5.0;

/// One class, five areas with one unit-capacity group each, one channel per
/// area and no idle power.
pub fn fig1_network() -> NetworkConfig {
    NetworkConfig {
        classes: vec![TaskClass {
            arrival_rate: FIG1_ARRIVAL_RATE,
            cloud_power: FIG1_CLOUD_POWER,
            requirements: vec![Requirement::Units(1); 5],
        }],
        groups: FIG1_UNIT_POWER
            .iter()
            .map(|&unit_power| ArcGroup {
                capacity: 1,
                unit_power,
                idle_power: 0.0,
            })
            .collect(),
        areas: FIG1_MEAN_DURATIONS
            .iter()
            .enumerate()
            .map(|(l, &d)| DestinationArea {
                groups: vec![l],
                channels: vec![1],
                service_rates: vec![1.0 / d],
            })
            .collect(),
        cloud_delay: FIG1_CLOUD_DELAY,
        scaling: 1,
        duration: DurationFamily::Exponential,
        cloud_duration: CloudDurationMode::Folded,
    }
}
