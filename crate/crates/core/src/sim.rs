//! Event-driven simulation of the offloading system under a policy.
//!
//! Arrivals are Poisson per class. Each admitted task holds its units and
//! channel for one sampled duration and releases both at completion. Between
//! events the throughput and power rates are constant, so their time
//! integrals are accumulated exactly.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::distribution::{exponential, CloudDurationMode, DurationDistribution};
use crate::model::{NetworkState, ScaledNetwork, StateError};
use crate::policy::{Decision, Policy};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("horizon {horizon} must exceed warm-up {warmup} >= 0")]
    InvalidHorizon { horizon: f64, warmup: f64 },
    #[error("no throughput was observed; the energy-efficiency ratio is undefined")]
    DegenerateRun,
    #[error("invariant violated: {0}")]
    InvariantViolation(#[from] StateError),
    #[error("invalid duration law: {0}")]
    Distribution(#[from] crate::distribution::DistributionError),
    #[error("at least two replications are needed, got {0}")]
    TooFewReplications(usize),
    #[error("invalid network: {0}")]
    Config(#[from] crate::model::ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    Arrival { class: usize },
    Completion { class: usize, decision: Decision },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    seq: u64,
}

impl Event {
    // Completions sort before arrivals at the same instant so that freed
    // resources are visible to the next admission decision.
    fn rank(&self) -> u8 {
        match self.kind {
            EventKind::Completion { .. } => 0,
            EventKind::Arrival { .. } => 1,
        }
    }
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap.
        other
            .time
            .total_cmp(&self.time)
            .then(other.rank().cmp(&self.rank()))
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Time-weighted integrals and event counts over the observation window
/// `[warmup, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Length of the observation window.
    pub horizon: f64,
    pub throughput_integral: f64,
    pub power_integral: f64,
    /// Integral of the number of tasks in service.
    pub task_integral: f64,
    pub arrivals: Vec<u64>,
    pub blocked: Vec<u64>,
    pub edge_completions: Vec<u64>,
    pub cloud_completions: Vec<u64>,
    /// Tasks in service when observation started.
    pub in_flight_start: Vec<u64>,
    /// Tasks in service at the horizon.
    pub in_flight_end: Vec<u64>,
}

impl Metrics {
    fn zero(classes: usize, horizon: f64) -> Self {
        Metrics {
            horizon,
            throughput_integral: 0.0,
            power_integral: 0.0,
            task_integral: 0.0,
            arrivals: vec![0; classes],
            blocked: vec![0; classes],
            edge_completions: vec![0; classes],
            cloud_completions: vec![0; classes],
            in_flight_start: vec![0; classes],
            in_flight_end: vec![0; classes],
        }
    }

    pub fn completions(&self, j: usize) -> u64 {
        self.edge_completions[j] + self.cloud_completions[j]
    }

    pub fn total_completions(&self) -> u64 {
        (0..self.arrivals.len()).map(|j| self.completions(j)).sum()
    }

    pub fn total_arrivals(&self) -> u64 {
        self.arrivals.iter().sum()
    }

    /// Blocked over arrived tasks; 0 when nothing arrived.
    pub fn blocked_fraction(&self) -> f64 {
        let arrivals = self.total_arrivals();
        if arrivals == 0 {
            0.0
        } else {
            self.blocked.iter().sum::<u64>() as f64 / arrivals as f64
        }
    }

    /// Time-average number of tasks in service.
    pub fn mean_tasks(&self) -> f64 {
        self.task_integral / self.horizon
    }

    /// `arrivals + in_flight_start == completions + blocked + in_flight_end`
    /// for every class.
    pub fn is_conserved(&self) -> bool {
        (0..self.arrivals.len()).all(|j| {
            self.arrivals[j] + self.in_flight_start[j]
                == self.completions(j) + self.blocked[j] + self.in_flight_end[j]
        })
    }

    fn accumulate(&mut self, rates: &Rates, from: f64, to: f64, opts: &RunOptions) {
        let lo = from.max(opts.warmup);
        let hi = to.min(opts.horizon);
        if hi > lo {
            let dt = hi - lo;
            self.throughput_integral += rates.throughput * dt;
            self.power_integral += rates.power * dt;
            self.task_integral += rates.tasks * dt;
        }
    }
}

/// Long-run power over long-run throughput.
pub fn energy_efficiency(metrics: &Metrics) -> Result<f64, SimError> {
    if metrics.throughput_integral > 0.0 {
        Ok(metrics.power_integral / metrics.throughput_integral)
    } else {
        Err(SimError::DegenerateRun)
    }
}

/// Completed tasks per unit of observed time.
pub fn throughput_count_rate(metrics: &Metrics) -> f64 {
    metrics.total_completions() as f64 / metrics.horizon
}

/// Instantaneous throughput, power and task count of a state.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Rates {
    pub throughput: f64,
    pub power: f64,
    pub tasks: f64,
}

impl Rates {
    pub(crate) fn of(state: &NetworkState, net: &ScaledNetwork) -> Self {
        let mut r = Rates::default();
        for j in 0..net.num_classes() {
            for k in 0..net.num_groups() {
                let x = state.edge_count(j, k);
                if x > 0 {
                    let x = f64::from(x);
                    let w = f64::from(net.requirement(j, k).units().unwrap_or(0));
                    r.throughput += net.group_rate(j, k) * x;
                    r.power += net.unit_power(k) * w * x;
                    r.tasks += x;
                }
            }
            for l in 0..net.num_areas() {
                let z = state.cloud_count(j, l);
                if z > 0 {
                    let z = f64::from(z);
                    r.throughput += net.cloud_rate(j, l) * z;
                    r.power += net.cloud_power(j) * z;
                    r.tasks += z;
                }
            }
        }
        for k in 0..net.num_groups() {
            if state.group_active(k) {
                r.power += net.idle_power(k);
            }
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub horizon: f64,
    pub warmup: f64,
}

impl RunOptions {
    pub fn new(horizon: f64, warmup: f64) -> Result<Self, SimError> {
        if horizon > warmup && warmup >= 0.0 && horizon.is_finite() {
            Ok(RunOptions { horizon, warmup })
        } else {
            Err(SimError::InvalidHorizon { horizon, warmup })
        }
    }
}

/// Supplies arrival times and task durations to the engine.
trait Source {
    /// Next arrival as (absolute time, class).
    fn next_arrival(&mut self) -> Option<(f64, usize)>;
    /// Duration of the task that just arrived and was admitted.
    fn duration(&mut self, class: usize, decision: Decision) -> f64;
}

struct RandomSource {
    rates: Vec<f64>,
    next: Vec<f64>,
    arrivals: ChaCha8Rng,
    durations: ChaCha8Rng,
    edge: Vec<DurationDistribution>,
    cloud: Vec<DurationDistribution>,
    cloud_mode: CloudDurationMode,
    cloud_delay: f64,
    areas: usize,
    area_of: Vec<usize>,
}

/// Independent substream for one replication and purpose.
fn substream(seed: u64, replication: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication.wrapping_mul(2).wrapping_add(purpose));
    rng
}

impl RandomSource {
    fn new(net: &ScaledNetwork, seed: u64, replication: u64) -> Result<Self, SimError> {
        let (nj, nl) = (net.num_classes(), net.num_areas());
        let family = net.duration_family();
        let mut edge = Vec::with_capacity(nj * nl);
        let mut cloud = Vec::with_capacity(nj * nl);
        for j in 0..nj {
            for l in 0..nl {
                edge.push(DurationDistribution::new(
                    family,
                    1.0 / net.service_rate(j, l),
                )?);
                cloud.push(DurationDistribution::new(
                    family,
                    1.0 / net.cloud_rate(j, l),
                )?);
            }
        }
        let mut arrivals = substream(seed, replication, 0);
        let rates: Vec<f64> = (0..nj).map(|j| net.arrival_rate(j)).collect();
        let next = rates
            .iter()
            .map(|&r| {
                if r > 0.0 {
                    exponential(r, &mut arrivals)
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        Ok(RandomSource {
            rates,
            next,
            arrivals,
            durations: substream(seed, replication, 1),
            edge,
            cloud,
            cloud_mode: net.cloud_duration_mode(),
            cloud_delay: net.cloud_delay(),
            areas: nl,
            area_of: (0..net.num_groups()).map(|k| net.area_of(k)).collect(),
        })
    }
}

impl Source for RandomSource {
    fn next_arrival(&mut self) -> Option<(f64, usize)> {
        let (j, &t) = self
            .next
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))?;
        if !t.is_finite() {
            return None;
        }
        self.next[j] = t + exponential(self.rates[j], &mut self.arrivals);
        Some((t, j))
    }

    fn duration(&mut self, class: usize, decision: Decision) -> f64 {
        match decision {
            Decision::Edge(k) => {
                self.edge[class * self.areas + self.area_of[k]].sample(&mut self.durations)
            }
            Decision::Cloud(l) => match self.cloud_mode {
                CloudDurationMode::Folded => {
                    self.cloud[class * self.areas + l].sample(&mut self.durations)
                }
                CloudDurationMode::EdgePlusDelay => {
                    self.edge[class * self.areas + l].sample(&mut self.durations) + self.cloud_delay
                }
            },
            Decision::Block => 0.0,
        }
    }
}

/// One scripted arrival for [`run_trace`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceArrival {
    pub time: f64,
    pub class: usize,
    /// Service duration if admitted.
    pub duration: f64,
}

struct TraceSource<'a> {
    arrivals: std::slice::Iter<'a, TraceArrival>,
    pending: f64,
}

impl Source for TraceSource<'_> {
    fn next_arrival(&mut self) -> Option<(f64, usize)> {
        let a = self.arrivals.next()?;
        self.pending = a.duration;
        Some((a.time, a.class))
    }

    fn duration(&mut self, _class: usize, _decision: Decision) -> f64 {
        self.pending
    }
}

fn simulate<S: Source>(
    net: &ScaledNetwork,
    policy: &dyn Policy,
    opts: &RunOptions,
    source: &mut S,
) -> Result<Metrics, SimError> {
    let nj = net.num_classes();
    let mut state = NetworkState::empty(net);
    let mut metrics = Metrics::zero(nj, opts.horizon - opts.warmup);
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut push = |heap: &mut BinaryHeap<Event>, time: f64, kind: EventKind| {
        heap.push(Event { time, kind, seq });
        seq += 1;
    };
    if let Some((t, class)) = source.next_arrival() {
        push(&mut heap, t, EventKind::Arrival { class });
    }

    let mut clock = 0.0;
    let mut rates = Rates::default();
    let mut observing = false;
    while let Some(event) = heap.pop() {
        if event.time > opts.horizon {
            break;
        }
        metrics.accumulate(&rates, clock, event.time, opts);
        clock = event.time;
        if !observing && clock >= opts.warmup {
            observing = true;
            for j in 0..nj {
                metrics.in_flight_start[j] = state.class_tasks(j);
            }
        }
        match event.kind {
            EventKind::Arrival { class } => {
                if observing {
                    metrics.arrivals[class] += 1;
                }
                let decision = policy.decide(&state, net, class);
                if decision.is_block() {
                    if observing {
                        metrics.blocked[class] += 1;
                    }
                } else {
                    state.admit(net, class, decision)?;
                    let duration = source.duration(class, decision);
                    push(
                        &mut heap,
                        clock + duration,
                        EventKind::Completion { class, decision },
                    );
                    rates = Rates::of(&state, net);
                }
                if let Some((t, class)) = source.next_arrival() {
                    push(&mut heap, t, EventKind::Arrival { class });
                }
            }
            EventKind::Completion { class, decision } => {
                state.release(net, class, decision)?;
                if observing {
                    match decision {
                        Decision::Edge(_) => metrics.edge_completions[class] += 1,
                        _ => metrics.cloud_completions[class] += 1,
                    }
                }
                rates = Rates::of(&state, net);
            }
        }
        #[cfg(debug_assertions)]
        state.check(net)?;
    }
    metrics.accumulate(&rates, clock, opts.horizon, opts);
    for j in 0..nj {
        if !observing {
            metrics.in_flight_start[j] = state.class_tasks(j);
        }
        metrics.in_flight_end[j] = state.class_tasks(j);
    }
    Ok(metrics)
}

/// Simulates replication `replication` of the run identified by `seed`.
/// Arrivals and durations use separate substreams, so two policies run
/// with the same seed see the same arrival sequence.
pub fn run_replication(
    net: &ScaledNetwork,
    policy: &dyn Policy,
    opts: &RunOptions,
    seed: u64,
    replication: u64,
) -> Result<Metrics, SimError> {
    let opts = RunOptions::new(opts.horizon, opts.warmup)?;
    let mut source = RandomSource::new(net, seed, replication)?;
    simulate(net, policy, &opts, &mut source)
}

pub fn run_simulation(
    net: &ScaledNetwork,
    policy: &dyn Policy,
    horizon: f64,
    warmup: f64,
    seed: u64,
) -> Result<Metrics, SimError> {
    run_replication(net, policy, &RunOptions::new(horizon, warmup)?, seed, 0)
}

/// Replays a fixed list of arrivals (sorted by time) with given durations.
pub fn run_trace(
    net: &ScaledNetwork,
    policy: &dyn Policy,
    trace: &[TraceArrival],
    horizon: f64,
    warmup: f64,
) -> Result<Metrics, SimError> {
    let opts = RunOptions::new(horizon, warmup)?;
    let mut source = TraceSource {
        arrivals: trace.iter(),
        pending: 0.0,
    };
    simulate(net, policy, &opts, &mut source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::DurationFamily;
    use crate::model::{ArcGroup, DestinationArea, NetworkConfig, Requirement, TaskClass};
    use crate::policy::PolicyKind;
    use crate::presets::fig1_network;

    fn single(lambda: f64, mu: f64, c: u32, eps: f64, idle: f64) -> ScaledNetwork {
        let cfg = NetworkConfig {
            classes: vec![TaskClass {
                arrival_rate: lambda,
                cloud_power: 100.0,
                requirements: vec![Requirement::Units(1)],
            }],
            groups: vec![ArcGroup {
                capacity: c,
                unit_power: eps,
                idle_power: idle,
            }],
            areas: vec![DestinationArea {
                groups: vec![0],
                channels: vec![c],
                service_rates: vec![mu],
            }],
            cloud_delay: 5.0,
            scaling: 1,
            duration: DurationFamily::Exponential,
            cloud_duration: CloudDurationMode::Folded,
        };
        ScaledNetwork::new(&cfg).unwrap()
    }

    #[test]
    fn event_order() {
        let mut heap = BinaryHeap::new();
        heap.push(Event {
            time: 2.0,
            kind: EventKind::Arrival { class: 0 },
            seq: 0,
        });
        heap.push(Event {
            time: 1.0,
            kind: EventKind::Arrival { class: 0 },
            seq: 1,
        });
        heap.push(Event {
            time: 2.0,
            kind: EventKind::Completion {
                class: 0,
                decision: Decision::Edge(0),
            },
            seq: 2,
        });
        assert_eq!(heap.pop().unwrap().time, 1.0);
        assert!(matches!(
            heap.pop().unwrap().kind,
            EventKind::Completion { .. }
        ));
        assert!(matches!(
            heap.pop().unwrap().kind,
            EventKind::Arrival { .. }
        ));
    }

    #[test]
    fn zero_arrivals_give_zero_metrics() {
        let net = single(0.0, 1.0, 2, 3.0, 0.0);
        let m = run_simulation(&net, &PolicyKind::Pier, 100.0, 10.0, 1).unwrap();
        assert_eq!(m.throughput_integral, 0.0);
        assert_eq!(m.power_integral, 0.0);
        assert_eq!(m.total_arrivals(), 0);
        assert_eq!(throughput_count_rate(&m), 0.0);
        assert_eq!(energy_efficiency(&m), Err(SimError::DegenerateRun));
    }

    #[test]
    fn ratio_division() {
        let mut m = Metrics::zero(1, 50.0);
        m.power_integral = 6.0;
        m.throughput_integral = 2.0;
        assert_eq!(energy_efficiency(&m).unwrap(), 3.0);
        m.edge_completions[0] = 100;
        assert_eq!(throughput_count_rate(&m), 2.0);
    }

    #[test]
    fn idle_power_on_scripted_trace() {
        // One group, idle power 2, unit power 3. Busy on [1, 3) and [4, 4.5),
        // and twice as loaded on [2, 3).
        let net = single(1.0, 1.0, 4, 3.0, 2.0);
        let trace = [
            TraceArrival {
                time: 1.0,
                class: 0,
                duration: 2.0,
            },
            TraceArrival {
                time: 2.0,
                class: 0,
                duration: 1.0,
            },
            TraceArrival {
                time: 4.0,
                class: 0,
                duration: 0.5,
            },
        ];
        let m = run_trace(&net, &PolicyKind::Pier, &trace, 10.0, 0.0).unwrap();
        // [1,2): 2 + 3; [2,3): 2 + 6; [4,4.5): (2 + 3) / 2.
        assert!((m.power_integral - (5.0 + 8.0 + 2.5)).abs() < 1e-12);
        assert!((m.throughput_integral - 3.5).abs() < 1e-12);
        assert_eq!(m.edge_completions[0], 3);
        assert!(m.is_conserved());
    }

    #[test]
    fn warmup_clips_integrals() {
        let net = single(1.0, 1.0, 4, 3.0, 0.0);
        let trace = [TraceArrival {
            time: 1.0,
            class: 0,
            duration: 4.0,
        }];
        let m = run_trace(&net, &PolicyKind::Pier, &trace, 10.0, 3.0).unwrap();
        assert!((m.power_integral - 6.0).abs() < 1e-12);
        assert_eq!(m.in_flight_start, vec![1]);
        assert_eq!(m.arrivals, vec![0]);
        assert!(m.is_conserved());
    }

    #[test]
    fn same_seed_same_metrics() {
        let net = ScaledNetwork::new(&fig1_network()).unwrap();
        let a = run_simulation(&net, &PolicyKind::Pier, 500.0, 50.0, 7).unwrap();
        let b = run_simulation(&net, &PolicyKind::Pier, 500.0, 50.0, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.is_conserved());
        let c = run_simulation(&net, &PolicyKind::Pier, 500.0, 50.0, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_horizon() {
        let net = single(1.0, 1.0, 1, 3.0, 0.0);
        assert!(matches!(
            run_simulation(&net, &PolicyKind::Pier, 10.0, 10.0, 1),
            Err(SimError::InvalidHorizon { .. })
        ));
    }

    #[test]
    fn loss_blocking_insensitive_to_duration_law() {
        use crate::oracle::erlang_b;
        use crate::replicate::mean_half_width;
        let want = erlang_b(3, 2.0);
        for family in [
            DurationFamily::Deterministic,
            DurationFamily::Pareto { shape: 2.5 },
        ] {
            let mut cfg = single(2.0, 1.0, 3, 1.0, 0.0).config().clone();
            cfg.duration = family;
            let net = ScaledNetwork::new(&cfg).unwrap();
            let opts = RunOptions::new(2000.0, 100.0).unwrap();
            let blocked: Vec<f64> = (0..20)
                .map(|r| {
                    run_replication(&net, &PolicyKind::Pier, &opts, 11, r)
                        .unwrap()
                        .blocked_fraction()
                })
                .collect();
            let (mean, hw) = mean_half_width(&blocked);
            assert!(
                (mean - want).abs() <= 2.0 * hw,
                "{family}: {mean} ± {hw} vs {want}"
            );
        }
    }
}
