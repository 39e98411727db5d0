//! Network description, scaling, and the occupancy state shared by the
//! policies, the simulator and the exact solver.
//!
//! Indices are zero-based everywhere: class `j`, group `k`, area `l`. The
//! cloud is not a group; it is reached through one channel of some area and
//! is represented by [`Decision::Cloud`].

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::distribution::{CloudDurationMode, DurationFamily};
use crate::policy::Decision;

/// Number of ARC units a task class needs in a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Requirement {
    Units(u32),
    /// The class may never be placed in the group.
    Inaccessible,
}

impl Requirement {
    pub fn units(self) -> Option<u32> {
        match self {
            Requirement::Units(w) => Some(w),
            Requirement::Inaccessible => None,
        }
    }

    pub fn is_accessible(self) -> bool {
        matches!(self, Requirement::Units(_))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum InaccessibleTag {
    Inaccessible,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RequirementRepr {
    Units(u32),
    Tag(InaccessibleTag),
}

impl Serialize for Requirement {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match *self {
            Requirement::Units(w) => RequirementRepr::Units(w),
            Requirement::Inaccessible => RequirementRepr::Tag(InaccessibleTag::Inaccessible),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Requirement {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(match RequirementRepr::deserialize(deserializer)? {
            RequirementRepr::Units(w) => Requirement::Units(w),
            RequirementRepr::Tag(InaccessibleTag::Inaccessible) => Requirement::Inaccessible,
        })
    }
}

/// A class of offloaded tasks. Rates and powers are base (unscaled) values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskClass {
    /// Base Poisson arrival rate; multiplied by the scaling parameter.
    pub arrival_rate: f64,
    /// Power drawn while a task of this class runs in the cloud.
    pub cloud_power: f64,
    /// Units needed in each group, indexed by group.
    pub requirements: Vec<Requirement>,
}

/// A pool of ARC units. `capacity` and `idle_power` are base values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcGroup {
    pub capacity: u32,
    /// Operational power per occupied unit.
    pub unit_power: f64,
    /// Power drawn while at least one unit is occupied.
    pub idle_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DestinationArea {
    /// Groups located in this area.
    pub groups: Vec<usize>,
    /// Base channel count per class.
    pub channels: Vec<u32>,
    /// Mean service rate per class (reciprocal of the mean task duration).
    pub service_rates: Vec<f64>,
}

fn default_scaling() -> u32 {
    1
}

/// Complete, serializable description of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub classes: Vec<TaskClass>,
    pub groups: Vec<ArcGroup>,
    pub areas: Vec<DestinationArea>,
    /// Fixed edge-to-cloud transmission time.
    pub cloud_delay: f64,
    #[serde(default = "default_scaling")]
    pub scaling: u32,
    #[serde(default)]
    pub duration: DurationFamily,
    #[serde(default)]
    pub cloud_duration: CloudDurationMode,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("classes[{class}]: w*eps = {edge_power} in group {group} is not below cloud power {cloud_power}")]
    PowerOrderingViolation {
        class: usize,
        group: usize,
        edge_power: f64,
        cloud_power: f64,
    },
    #[error("group {group} is listed in both area {first} and area {second}")]
    OverlappingAreas {
        group: usize,
        first: usize,
        second: usize,
    },
    #[error("areas[{area}] contains no groups")]
    EmptyArea { area: usize },
    #[error("group {group} is not assigned to any area")]
    UnassignedGroup { group: usize },
    #[error("areas[{area}] refers to unknown group {group}")]
    UnknownGroup { area: usize, group: usize },
    #[error("{field} must be positive, got {value}")]
    NonPositiveParameter { field: String, value: f64 },
    #[error("{field} must be non-negative and finite, got {value}")]
    NegativeParameter { field: String, value: f64 },
    #[error("{field}: expected {expected} entries, found {found}")]
    DimensionMismatch {
        field: String,
        expected: usize,
        found: usize,
    },
    #[error("pareto shape must exceed 1 for a finite mean, got {0}")]
    InvalidShape(f64),
    #[error("network needs at least one class, group and area")]
    Empty,
    #[error("scaling parameter must be at least 1")]
    ZeroScaling,
    #[error("scaling by {0} overflows a capacity or channel count")]
    ScalingOverflow(u32),
}

fn positive(field: impl FnOnce() -> String, value: f64) -> Result<(), ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::NonPositiveParameter {
            field: field(),
            value,
        })
    }
}

fn non_negative(field: impl FnOnce() -> String, value: f64) -> Result<(), ConfigError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::NegativeParameter {
            field: field(),
            value,
        })
    }
}

fn dims(field: impl FnOnce() -> String, expected: usize, found: usize) -> Result<(), ConfigError> {
    if expected == found {
        Ok(())
    } else {
        Err(ConfigError::DimensionMismatch {
            field: field(),
            expected,
            found,
        })
    }
}

impl NetworkConfig {
    /// Checks every structural and physical invariant, reporting the first
    /// violation found.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let (nj, nk, nl) = (self.classes.len(), self.groups.len(), self.areas.len());
        if nj == 0 || nk == 0 || nl == 0 {
            return Err(ConfigError::Empty);
        }
        if self.scaling == 0 {
            return Err(ConfigError::ZeroScaling);
        }
        non_negative(|| "cloud_delay".into(), self.cloud_delay)?;
        if let DurationFamily::Pareto { shape } = self.duration {
            if !(shape > 1.0 && shape.is_finite()) {
                return Err(ConfigError::InvalidShape(shape));
            }
        }

        for (j, class) in self.classes.iter().enumerate() {
            non_negative(|| format!("classes[{j}].arrival_rate"), class.arrival_rate)?;
            positive(|| format!("classes[{j}].cloud_power"), class.cloud_power)?;
            dims(
                || format!("classes[{j}].requirements"),
                nk,
                class.requirements.len(),
            )?;
            for (k, req) in class.requirements.iter().enumerate() {
                if *req == Requirement::Units(0) {
                    return Err(ConfigError::NonPositiveParameter {
                        field: format!("classes[{j}].requirements[{k}]"),
                        value: 0.0,
                    });
                }
            }
        }
        for (k, group) in self.groups.iter().enumerate() {
            if group.capacity == 0 {
                return Err(ConfigError::NonPositiveParameter {
                    field: format!("groups[{k}].capacity"),
                    value: 0.0,
                });
            }
            positive(|| format!("groups[{k}].unit_power"), group.unit_power)?;
            non_negative(|| format!("groups[{k}].idle_power"), group.idle_power)?;
        }

        let mut owner: Vec<Option<usize>> = vec![None; nk];
        for (l, area) in self.areas.iter().enumerate() {
            if area.groups.is_empty() {
                return Err(ConfigError::EmptyArea { area: l });
            }
            for &k in &area.groups {
                let slot = owner
                    .get_mut(k)
                    .ok_or(ConfigError::UnknownGroup { area: l, group: k })?;
                if let Some(first) = *slot {
                    return Err(ConfigError::OverlappingAreas {
                        group: k,
                        first,
                        second: l,
                    });
                }
                *slot = Some(l);
            }
            dims(|| format!("areas[{l}].channels"), nj, area.channels.len())?;
            dims(
                || format!("areas[{l}].service_rates"),
                nj,
                area.service_rates.len(),
            )?;
            for (j, &rate) in area.service_rates.iter().enumerate() {
                positive(|| format!("areas[{l}].service_rates[{j}]"), rate)?;
            }
        }
        if let Some(group) = owner.iter().position(Option::is_none) {
            return Err(ConfigError::UnassignedGroup { group });
        }

        for (j, class) in self.classes.iter().enumerate() {
            for (k, req) in class.requirements.iter().enumerate() {
                if let Requirement::Units(w) = *req {
                    let edge_power = f64::from(w) * self.groups[k].unit_power;
                    if edge_power >= class.cloud_power {
                        return Err(ConfigError::PowerOrderingViolation {
                            class: j,
                            group: k,
                            edge_power,
                            cloud_power: class.cloud_power,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Mean of the edge task durations over every (class, area) pair; the
    /// time unit used for default simulation horizons.
    pub fn mean_service_time(&self) -> f64 {
        let durations: Vec<f64> = self
            .areas
            .iter()
            .flat_map(|a| a.service_rates.iter().map(|r| 1.0 / r))
            .collect();
        durations.iter().sum::<f64>() / durations.len().max(1) as f64
    }
}

/// Returns the config unchanged when it satisfies every invariant.
pub fn validate_config(config: NetworkConfig) -> Result<NetworkConfig, ConfigError> {
    config.validate()?;
    Ok(config)
}

/// Mean service rate of a cloud task routed through an area with edge rate
/// `rate`, given the fixed edge-to-cloud delay.
pub fn cloud_effective_rate(rate: f64, delay: f64) -> f64 {
    1.0 / (1.0 / rate + delay)
}

/// A validated network with the scaling parameter applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledNetwork {
    config: NetworkConfig,
    scaling: u32,
    arrival_rates: Vec<f64>,
    capacities: Vec<u32>,
    channels: Vec<u32>,
    idle_powers: Vec<f64>,
    area_of: Vec<usize>,
    service_rates: Vec<f64>,
    cloud_rates: Vec<f64>,
}

/// Validates `config` and scales its base values by `h`, ignoring
/// `config.scaling`.
pub fn apply_scaling(config: &NetworkConfig, h: u32) -> Result<ScaledNetwork, ConfigError> {
    if h == 0 {
        return Err(ConfigError::ZeroScaling);
    }
    config.validate()?;
    let (nj, nl) = (config.classes.len(), config.areas.len());

    let capacities = config
        .groups
        .iter()
        .map(|g| g.capacity.checked_mul(h))
        .collect::<Option<Vec<_>>>()
        .ok_or(ConfigError::ScalingOverflow(h))?;
    let mut channels = vec![0u32; nj * nl];
    let mut service_rates = vec![0.0; nj * nl];
    let mut cloud_rates = vec![0.0; nj * nl];
    let mut area_of = vec![0; config.groups.len()];
    for (l, area) in config.areas.iter().enumerate() {
        for &k in &area.groups {
            area_of[k] = l;
        }
        for j in 0..nj {
            channels[j * nl + l] = area.channels[j]
                .checked_mul(h)
                .ok_or(ConfigError::ScalingOverflow(h))?;
            service_rates[j * nl + l] = area.service_rates[j];
            cloud_rates[j * nl + l] =
                cloud_effective_rate(area.service_rates[j], config.cloud_delay);
        }
    }
    let hf = f64::from(h);
    Ok(ScaledNetwork {
        arrival_rates: config.classes.iter().map(|c| hf * c.arrival_rate).collect(),
        idle_powers: config.groups.iter().map(|g| hf * g.idle_power).collect(),
        capacities,
        channels,
        area_of,
        service_rates,
        cloud_rates,
        scaling: h,
        config: config.clone(),
    })
}

impl ScaledNetwork {
    /// Validates and scales by the config's own `scaling` field.
    pub fn new(config: &NetworkConfig) -> Result<Self, ConfigError> {
        apply_scaling(config, config.scaling)
    }

    /// The base config this network was built from.
    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn scaling(&self) -> u32 {
        self.scaling
    }

    pub fn num_classes(&self) -> usize {
        self.config.classes.len()
    }

    pub fn num_groups(&self) -> usize {
        self.config.groups.len()
    }

    pub fn num_areas(&self) -> usize {
        self.config.areas.len()
    }

    pub fn arrival_rate(&self, j: usize) -> f64 {
        self.arrival_rates[j]
    }

    pub fn total_arrival_rate(&self) -> f64 {
        self.arrival_rates.iter().sum()
    }

    pub fn capacity(&self, k: usize) -> u32 {
        self.capacities[k]
    }

    pub fn channels(&self, j: usize, l: usize) -> u32 {
        self.channels[j * self.num_areas() + l]
    }

    pub fn idle_power(&self, k: usize) -> f64 {
        self.idle_powers[k]
    }

    pub fn unit_power(&self, k: usize) -> f64 {
        self.config.groups[k].unit_power
    }

    pub fn cloud_power(&self, j: usize) -> f64 {
        self.config.classes[j].cloud_power
    }

    pub fn requirement(&self, j: usize, k: usize) -> Requirement {
        self.config.classes[j].requirements[k]
    }

    pub fn area_of(&self, k: usize) -> usize {
        self.area_of[k]
    }

    pub fn groups_in(&self, l: usize) -> &[usize] {
        &self.config.areas[l].groups
    }

    /// Edge service rate for class `j` in area `l`.
    pub fn service_rate(&self, j: usize, l: usize) -> f64 {
        self.service_rates[j * self.num_areas() + l]
    }

    /// Edge service rate of class `j` in group `k`.
    pub fn group_rate(&self, j: usize, k: usize) -> f64 {
        self.service_rate(j, self.area_of[k])
    }

    /// Effective cloud service rate for class `j` routed via area `l`.
    pub fn cloud_rate(&self, j: usize, l: usize) -> f64 {
        self.cloud_rates[j * self.num_areas() + l]
    }

    pub fn cloud_delay(&self) -> f64 {
        self.config.cloud_delay
    }

    pub fn duration_family(&self) -> DurationFamily {
        self.config.duration
    }

    pub fn cloud_duration_mode(&self) -> CloudDurationMode {
        self.config.cloud_duration
    }

    /// A config whose base values are this network's scaled values, with
    /// scaling reset to 1.
    pub fn to_base_config(&self) -> NetworkConfig {
        let mut config = self.config.clone();
        config.scaling = 1;
        for (j, class) in config.classes.iter_mut().enumerate() {
            class.arrival_rate = self.arrival_rates[j];
        }
        for (k, group) in config.groups.iter_mut().enumerate() {
            group.capacity = self.capacities[k];
            group.idle_power = self.idle_powers[k];
        }
        let nl = self.num_areas();
        for (l, area) in config.areas.iter_mut().enumerate() {
            for (j, ch) in area.channels.iter_mut().enumerate() {
                *ch = self.channels[j * nl + l];
            }
        }
        config
    }
}

/// Raised when a state update would break a capacity or channel bound.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("group {group}: load {load} exceeds capacity {capacity}")]
    CapacityExceeded {
        group: usize,
        load: u32,
        capacity: u32,
    },
    #[error("class {class} holds {occupied} channels of area {area}, which has {channels}")]
    ChannelsExceeded {
        class: usize,
        area: usize,
        occupied: u32,
        channels: u32,
    },
    #[error("class {class} cannot be placed in group {group}")]
    Inaccessible { class: usize, group: usize },
    #[error("no class-{class} task at {decision} to release")]
    NothingToRelease { class: usize, decision: Decision },
    #[error("a blocked task holds no resources")]
    BlockedTask,
    #[error("state dimensions do not match the network")]
    Shape,
}

/// Occupancy of the network: tasks in service per (class, group) and
/// cloud-bound tasks per (class, area) channel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkState {
    num_groups: usize,
    num_areas: usize,
    edge: Vec<u32>,
    cloud: Vec<u32>,
    load: Vec<u32>,
    occupied: Vec<u32>,
}

impl NetworkState {
    pub fn empty(net: &ScaledNetwork) -> Self {
        let (nj, nk, nl) = (net.num_classes(), net.num_groups(), net.num_areas());
        NetworkState {
            num_groups: nk,
            num_areas: nl,
            edge: vec![0; nj * nk],
            cloud: vec![0; nj * nl],
            load: vec![0; nk],
            occupied: vec![0; nj * nl],
        }
    }

    /// Builds a state from explicit counts: `edge[j][k]` and `cloud[j][l]`.
    pub fn from_counts(
        net: &ScaledNetwork,
        edge: &[Vec<u32>],
        cloud: &[Vec<u32>],
    ) -> Result<Self, StateError> {
        let mut state = Self::empty(net);
        let (nk, nl) = (net.num_groups(), net.num_areas());
        if edge.len() != net.num_classes()
            || cloud.len() != net.num_classes()
            || edge.iter().any(|r| r.len() != nk)
            || cloud.iter().any(|r| r.len() != nl)
        {
            return Err(StateError::Shape);
        }
        for (j, (e, c)) in edge.iter().zip(cloud).enumerate() {
            state.edge[j * nk..(j + 1) * nk].copy_from_slice(e);
            state.cloud[j * nl..(j + 1) * nl].copy_from_slice(c);
        }
        state.refresh(net);
        state.check(net)?;
        Ok(state)
    }

    fn refresh(&mut self, net: &ScaledNetwork) {
        let (nk, nl) = (self.num_groups, self.num_areas);
        self.load.iter_mut().for_each(|x| *x = 0);
        self.occupied.copy_from_slice(&self.cloud);
        for j in 0..net.num_classes() {
            for k in 0..nk {
                let x = self.edge[j * nk + k];
                if x == 0 {
                    continue;
                }
                let w = net.requirement(j, k).units().unwrap_or(0);
                self.load[k] += w * x;
                self.occupied[j * nl + net.area_of(k)] += x;
            }
        }
    }

    /// Overwrites the counts in place; used by the exact solver to decode
    /// states without reallocating.
    pub(crate) fn set_counts(&mut self, net: &ScaledNetwork, edge: &[u32], cloud: &[u32]) {
        self.edge.copy_from_slice(edge);
        self.cloud.copy_from_slice(cloud);
        self.refresh(net);
    }

    pub(crate) fn edge_counts(&self) -> &[u32] {
        &self.edge
    }

    pub(crate) fn cloud_counts(&self) -> &[u32] {
        &self.cloud
    }

    /// Tasks of class `j` served in group `k`.
    pub fn edge_count(&self, j: usize, k: usize) -> u32 {
        self.edge[j * self.num_groups + k]
    }

    /// Cloud-bound tasks of class `j` holding a channel of area `l`.
    pub fn cloud_count(&self, j: usize, l: usize) -> u32 {
        self.cloud[j * self.num_areas + l]
    }

    /// Occupied (j, l)-channels: cloud-bound tasks plus edge tasks in `l`.
    pub fn channel_occupancy(&self, j: usize, l: usize) -> u32 {
        self.occupied[j * self.num_areas + l]
    }

    /// Units in use in group `k`, summed over classes.
    pub fn group_load(&self, k: usize) -> u32 {
        self.load[k]
    }

    pub fn group_active(&self, k: usize) -> bool {
        self.load[k] > 0
    }

    pub fn total_tasks(&self) -> u64 {
        self.edge
            .iter()
            .chain(&self.cloud)
            .map(|&x| u64::from(x))
            .sum()
    }

    pub fn class_tasks(&self, j: usize) -> u64 {
        let edge = &self.edge[j * self.num_groups..(j + 1) * self.num_groups];
        let cloud = &self.cloud[j * self.num_areas..(j + 1) * self.num_areas];
        edge.iter().chain(cloud).map(|&x| u64::from(x)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.edge.iter().chain(&self.cloud).all(|&x| x == 0)
    }

    /// Whether one more class-`j` task fits in group `k`.
    pub fn edge_feasible(&self, net: &ScaledNetwork, j: usize, k: usize) -> bool {
        match net.requirement(j, k) {
            Requirement::Inaccessible => false,
            Requirement::Units(w) => {
                let l = net.area_of(k);
                self.load[k] + w <= net.capacity(k)
                    && self.channel_occupancy(j, l) < net.channels(j, l)
            }
        }
    }

    /// Whether a class-`j` task can reach the cloud through area `l`.
    pub fn cloud_feasible(&self, net: &ScaledNetwork, j: usize, l: usize) -> bool {
        self.channel_occupancy(j, l) < net.channels(j, l)
    }

    /// Area with a free (j, l)-channel and the fastest service rate; ties go
    /// to the lowest area index.
    pub fn fastest_cloud_area(&self, net: &ScaledNetwork, j: usize) -> Option<usize> {
        let mut best: Option<usize> = None;
        for l in 0..net.num_areas() {
            if self.cloud_feasible(net, j, l)
                && best.is_none_or(|b| net.service_rate(j, l) > net.service_rate(j, b))
            {
                best = Some(l);
            }
        }
        best
    }

    /// Occupies the resources named by `decision`. `Block` is a no-op.
    pub fn admit(
        &mut self,
        net: &ScaledNetwork,
        j: usize,
        decision: Decision,
    ) -> Result<(), StateError> {
        match decision {
            Decision::Block => Ok(()),
            Decision::Edge(k) => {
                let w = net
                    .requirement(j, k)
                    .units()
                    .ok_or(StateError::Inaccessible { class: j, group: k })?;
                let l = net.area_of(k);
                let load = self.load[k] + w;
                if load > net.capacity(k) {
                    return Err(StateError::CapacityExceeded {
                        group: k,
                        load,
                        capacity: net.capacity(k),
                    });
                }
                self.take_channel(net, j, l)?;
                self.load[k] = load;
                self.edge[j * self.num_groups + k] += 1;
                Ok(())
            }
            Decision::Cloud(l) => {
                self.take_channel(net, j, l)?;
                self.cloud[j * self.num_areas + l] += 1;
                Ok(())
            }
        }
    }

    fn take_channel(&mut self, net: &ScaledNetwork, j: usize, l: usize) -> Result<(), StateError> {
        let slot = &mut self.occupied[j * self.num_areas + l];
        if *slot >= net.channels(j, l) {
            return Err(StateError::ChannelsExceeded {
                class: j,
                area: l,
                occupied: *slot + 1,
                channels: net.channels(j, l),
            });
        }
        *slot += 1;
        Ok(())
    }

    /// Frees the resources of one completed task.
    pub fn release(
        &mut self,
        net: &ScaledNetwork,
        j: usize,
        decision: Decision,
    ) -> Result<(), StateError> {
        let missing = StateError::NothingToRelease { class: j, decision };
        match decision {
            Decision::Block => Err(StateError::BlockedTask),
            Decision::Edge(k) => {
                let idx = j * self.num_groups + k;
                if self.edge[idx] == 0 {
                    return Err(missing);
                }
                let w = net.requirement(j, k).units().ok_or(missing)?;
                self.edge[idx] -= 1;
                self.load[k] -= w;
                self.occupied[j * self.num_areas + net.area_of(k)] -= 1;
                Ok(())
            }
            Decision::Cloud(l) => {
                let idx = j * self.num_areas + l;
                if self.cloud[idx] == 0 {
                    return Err(missing);
                }
                self.cloud[idx] -= 1;
                self.occupied[idx] -= 1;
                Ok(())
            }
        }
    }

    /// Recomputes loads and channel counts from scratch and checks every
    /// capacity, channel and accessibility bound.
    pub fn check(&self, net: &ScaledNetwork) -> Result<(), StateError> {
        let mut fresh = self.clone();
        fresh.refresh(net);
        if fresh != *self {
            return Err(StateError::Shape);
        }
        for j in 0..net.num_classes() {
            for k in 0..net.num_groups() {
                if self.edge_count(j, k) > 0 && !net.requirement(j, k).is_accessible() {
                    return Err(StateError::Inaccessible { class: j, group: k });
                }
            }
            for l in 0..net.num_areas() {
                let occupied = self.channel_occupancy(j, l);
                if occupied > net.channels(j, l) {
                    return Err(StateError::ChannelsExceeded {
                        class: j,
                        area: l,
                        occupied,
                        channels: net.channels(j, l),
                    });
                }
            }
        }
        for k in 0..net.num_groups() {
            if self.load[k] > net.capacity(k) {
                return Err(StateError::CapacityExceeded {
                    group: k,
                    load: self.load[k],
                    capacity: net.capacity(k),
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for NetworkState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "edge={:?} cloud={:?}", self.edge, self.cloud)
    }
}

/// Destinations open to an arriving task: edge groups with room and a free
/// channel, and areas through which the cloud is reachable.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeasibleSet {
    pub groups: Vec<usize>,
    pub cloud_areas: Vec<usize>,
}

impl FeasibleSet {
    /// No destination at all: the task is blocked.
    pub fn is_empty(&self) -> bool {
        self.groups.is_empty() && self.cloud_areas.is_empty()
    }

    pub fn contains(&self, decision: Decision) -> bool {
        match decision {
            Decision::Edge(k) => self.groups.contains(&k),
            Decision::Cloud(l) => self.cloud_areas.contains(&l),
            Decision::Block => false,
        }
    }
}

pub fn feasible_destinations(state: &NetworkState, net: &ScaledNetwork, j: usize) -> FeasibleSet {
    FeasibleSet {
        groups: (0..net.num_groups())
            .filter(|&k| state.edge_feasible(net, j, k))
            .collect(),
        cloud_areas: (0..net.num_areas())
            .filter(|&l| state.cloud_feasible(net, j, l))
            .collect(),
    }
}

pub fn channel_occupancy(state: &NetworkState, j: usize, l: usize) -> u32 {
    state.channel_occupancy(j, l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn single(capacity: u32, channels: u32) -> NetworkConfig {
        NetworkConfig {
            classes: vec![TaskClass {
                arrival_rate: 1.0,
                cloud_power: 10.0,
                requirements: vec![Requirement::Units(1)],
            }],
            groups: vec![ArcGroup {
                capacity,
                unit_power: 3.0,
                idle_power: 0.0,
            }],
            areas: vec![DestinationArea {
                groups: vec![0],
                channels: vec![channels],
                service_rates: vec![1.0],
            }],
            cloud_delay: 1.0,
            scaling: 1,
            duration: DurationFamily::Exponential,
            cloud_duration: CloudDurationMode::Folded,
        }
    }

    #[test]
    fn fig1_is_valid() {
        let cfg = presets::fig1_network();
        assert_eq!(validate_config(cfg.clone()), Ok(cfg));
    }

    #[test]
    fn power_ordering() {
        let mut cfg = presets::fig1_network();
        cfg.groups[0].unit_power = 60.0;
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::PowerOrderingViolation {
                class: 0,
                group: 0,
                ..
            })
        ));
    }

    #[test]
    fn overlapping_and_empty_areas() {
        let mut cfg = presets::fig1_network();
        cfg.areas[1].groups.push(2);
        assert_eq!(
            cfg.validate(),
            Err(ConfigError::OverlappingAreas {
                group: 2,
                first: 1,
                second: 2
            })
        );
        let mut cfg = presets::fig1_network();
        cfg.areas[4].groups.clear();
        assert_eq!(cfg.validate(), Err(ConfigError::EmptyArea { area: 4 }));
    }

    #[test]
    fn non_positive_parameters_name_the_field() {
        let mut cfg = single(1, 1);
        cfg.groups[0].capacity = 0;
        match cfg.validate() {
            Err(ConfigError::NonPositiveParameter { field, .. }) => {
                assert_eq!(field, "groups[0].capacity")
            }
            other => panic!("unexpected {other:?}"),
        }
        let mut cfg = single(1, 1);
        cfg.areas[0].service_rates[0] = -1.0;
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::NonPositiveParameter { .. })
        ));
    }

    #[test]
    fn scaling_values() {
        let cfg = presets::fig1_network();
        let one = apply_scaling(&cfg, 1).unwrap();
        assert_eq!(one.arrival_rate(0), 5.182638);
        assert_eq!(one.capacity(3), 1);
        let ten = apply_scaling(&cfg, 10).unwrap();
        assert!((ten.arrival_rate(0) - 51.82638).abs() < 1e-12);
        let twenty = apply_scaling(&cfg, 20).unwrap();
        assert_eq!(twenty.capacity(0), 20);
        assert_eq!(twenty.channels(0, 4), 20);
        assert_eq!(apply_scaling(&cfg, 0), Err(ConfigError::ZeroScaling));
    }

    #[test]
    fn occupancy_sums_edge_and_cloud() {
        let net = ScaledNetwork::new(&single(4, 6)).unwrap();
        let empty = NetworkState::empty(&net);
        assert_eq!(channel_occupancy(&empty, 0, 0), 0);
        let s = NetworkState::from_counts(&net, &[vec![2]], &[vec![1]]).unwrap();
        assert_eq!(s.channel_occupancy(0, 0), 3);
        let s = NetworkState::from_counts(&net, &[vec![0]], &[vec![6]]).unwrap();
        assert_eq!(s.channel_occupancy(0, 0), 6);
        assert!(NetworkState::from_counts(&net, &[vec![0]], &[vec![7]]).is_err());
    }

    #[test]
    fn cloud_rate_examples() {
        assert_eq!(cloud_effective_rate(2.5, 0.0), 2.5);
        assert!((cloud_effective_rate(1.0 / 0.547387, 5.0) - 0.180265).abs() < 1e-6);
        assert_eq!(cloud_effective_rate(1.0, 1.0), 0.5);
    }

    #[test]
    fn feasible_sets() {
        let cfg = presets::fig1_network();
        let net = ScaledNetwork::new(&cfg).unwrap();
        let empty = NetworkState::empty(&net);
        let all = feasible_destinations(&empty, &net, 0);
        assert_eq!(all.groups, vec![0, 1, 2, 3, 4]);
        assert_eq!(all.cloud_areas, vec![0, 1, 2, 3, 4]);

        // Group full, channel free: only the group's capacity binds.
        let mut cfg2 = cfg.clone();
        cfg2.areas[0].channels[0] = 2;
        let net2 = ScaledNetwork::new(&cfg2).unwrap();
        let mut s = NetworkState::empty(&net2);
        s.admit(&net2, 0, Decision::Edge(0)).unwrap();
        let f = feasible_destinations(&s, &net2, 0);
        assert!(!f.groups.contains(&0));
        assert!(f.cloud_areas.contains(&0));

        let mut s = NetworkState::empty(&net);
        for l in 0..5 {
            s.admit(&net, 0, Decision::Cloud(l)).unwrap();
        }
        assert!(feasible_destinations(&s, &net, 0).is_empty());
    }

    #[test]
    fn admit_rejects_overfull() {
        let net = ScaledNetwork::new(&single(1, 1)).unwrap();
        let mut s = NetworkState::empty(&net);
        s.admit(&net, 0, Decision::Edge(0)).unwrap();
        assert!(s.admit(&net, 0, Decision::Cloud(0)).is_err());
        s.release(&net, 0, Decision::Edge(0)).unwrap();
        assert!(s.release(&net, 0, Decision::Edge(0)).is_err());
        assert!(s.is_empty());
    }
}
