//! Optimal admission for the ratio objective.
//!
//! Minimising `E / L` is reduced to a sequence of average-cost problems with
//! per-state cost `E(s) - theta * L(s)`. Each is solved by relative value
//! iteration on the uniformized chain; the greedy policy is evaluated
//! exactly and its ratio becomes the next `theta`.

use std::sync::Arc;

use crate::model::{NetworkState, ScaledNetwork};
use crate::oracle::evaluate::evaluate_with;
use crate::oracle::{evaluate_policy_exact, ExactEvaluation, ExactModel, OracleError, StateSpace};
use crate::policy::{Decision, Policy, PolicyKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once successive ratios differ by at most this much, relative.
    pub tolerance: f64,
    pub max_outer: usize,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-10,
            max_outer: 50,
            max_sweeps: 2_000_000,
        }
    }
}

/// A stationary deterministic policy stored per enumerated state.
#[derive(Debug, Clone)]
pub struct DecisionTable {
    space: Arc<StateSpace>,
    classes: usize,
    decisions: Vec<Decision>,
}

impl DecisionTable {
    pub fn decision(&self, s: usize, class: usize) -> Decision {
        self.decisions[s * self.classes + class]
    }

    pub fn len(&self) -> usize {
        self.decisions.len() / self.classes.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }
}

impl Policy for DecisionTable {
    fn decide(&self, state: &NetworkState, _net: &ScaledNetwork, class: usize) -> Decision {
        self.space
            .index_of(state)
            .map_or(Decision::Block, |s| self.decision(s, class))
    }

    fn label(&self) -> String {
        "optimal".into()
    }
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub optimal_ratio: f64,
    pub evaluation: ExactEvaluation,
    pub table: DecisionTable,
    /// Starting bound followed by the ratio of each greedy policy.
    pub theta_history: Vec<f64>,
    /// Value-iteration sweeps over all outer iterations.
    pub sweeps: usize,
    /// Size of the last improving step; 0 when the starting heuristic was
    /// already optimal.
    pub residual: f64,
}

impl SolverResult {
    pub fn outer_iterations(&self) -> usize {
        self.theta_history.len() - 1
    }
}

/// Transitions of every state, flattened for fast sweeps. Probabilities are
/// per uniformized step.
struct Tables {
    cost: Vec<f64>,
    reward: Vec<f64>,
    comp_off: Vec<usize>,
    comp_p: Vec<f64>,
    comp_t: Vec<u32>,
    /// Admissions of `(s, j)` live in `adm_off[s * J + j]..adm_off[s * J + j + 1]`.
    adm_off: Vec<usize>,
    adm_t: Vec<u32>,
    adm_d: Vec<Decision>,
    arrive: Vec<f64>,
    classes: usize,
}

impl Tables {
    fn build(model: &ExactModel) -> Self {
        let n = model.len();
        let net = model.network();
        let nj = net.num_classes();
        let inv = 1.0 / model.uniform_rate();
        let mut digits = model.new_digits();
        let mut t = Tables {
            cost: Vec::with_capacity(n),
            reward: Vec::with_capacity(n),
            comp_off: Vec::with_capacity(n + 1),
            comp_p: Vec::new(),
            comp_t: Vec::new(),
            adm_off: Vec::with_capacity(n * nj + 1),
            adm_t: Vec::new(),
            adm_d: Vec::new(),
            arrive: (0..nj).map(|j| net.arrival_rate(j) * inv).collect(),
            classes: nj,
        };
        t.comp_off.push(0);
        t.adm_off.push(0);
        for s in 0..n {
            model.space().digits(s, &mut digits);
            t.cost.push(model.space().cost(&digits));
            t.reward.push(model.space().reward(&digits));
            model.for_each_completion(s, &digits, |rate, to| {
                t.comp_p.push(rate * inv);
                t.comp_t.push(to as u32);
            });
            t.comp_off.push(t.comp_p.len());
            for j in 0..nj {
                model.for_each_admission(s, &digits, j, |d, to| {
                    t.adm_t.push(to as u32);
                    t.adm_d.push(d);
                });
                t.adm_off.push(t.adm_t.len());
            }
        }
        t
    }

    fn len(&self) -> usize {
        self.cost.len()
    }

    /// Bellman update at `s`.
    #[inline]
    fn bellman(&self, s: usize, theta: f64, inv: f64, values: &[f64]) -> f64 {
        let here = values[s];
        let mut acc = (self.cost[s] - theta * self.reward[s]) * inv;
        let mut stay = 1.0;
        let (a, b) = (self.comp_off[s], self.comp_off[s + 1]);
        for (&p, &t) in self.comp_p[a..b].iter().zip(&self.comp_t[a..b]) {
            acc += p * values[t as usize];
            stay -= p;
        }
        for (j, &p) in self.arrive.iter().enumerate() {
            let i = s * self.classes + j;
            let best = self.adm_t[self.adm_off[i]..self.adm_off[i + 1]]
                .iter()
                .fold(here, |m, &t| m.min(values[t as usize]));
            acc += p * best;
            stay -= p;
        }
        acc + stay * here
    }
}

/// Minimises the long-run power per unit throughput over all stationary
/// policies.
///
/// Starts from the best of the built-in heuristics. Value iteration for a
/// given `theta` is first run to a loose tolerance; if the greedy policy
/// fails to improve on `theta`, the tolerance is tightened until it reaches
/// `1e-9` of the cost scale, at which point `theta` is certified optimal.
pub fn solve_optimal(
    model: &ExactModel,
    options: &SolverOptions,
) -> Result<SolverResult, OracleError> {
    const LOOSE: f64 = 1e-4;
    const TIGHT: f64 = 1e-9;
    let nj = model.network().num_classes();
    let tables = Tables::build(model);

    let mut best: Option<(ExactEvaluation, Vec<Decision>)> = None;
    for kind in PolicyKind::ALL {
        let eval = evaluate_policy_exact(model, &kind)?;
        if best.as_ref().is_none_or(|(b, _)| eval.ratio < b.ratio) {
            let decisions = tabulate(model, &kind);
            best = Some((eval, decisions));
        }
    }
    let (mut eval, mut decisions) = best.ok_or(OracleError::Degenerate)?;
    let mut theta = eval.ratio;
    let mut history = vec![theta];
    let mut values = vec![0.0; tables.len()];
    let mut sweeps = 0;
    let mut rel_tol = LOOSE;
    let mut residual = f64::INFINITY;
    let mut outer = 0;
    loop {
        let scale = tables
            .cost
            .iter()
            .zip(&tables.reward)
            .fold(0.0f64, |m, (c, r)| m.max((c - theta * r).abs()));
        let (done, lo) = relative_value_iteration(
            model,
            &tables,
            theta,
            &mut values,
            rel_tol * scale.max(f64::MIN_POSITIVE),
            options.max_sweeps,
        )?;
        sweeps += done;
        let candidate = greedy(&tables, &values, &decisions);
        // Rough values can make blocking everything look best; such a
        // policy has no ratio and counts as no improvement.
        let next = match evaluate_with(model, |s, j| candidate[s * nj + j]) {
            Ok(e) => Some(e),
            Err(OracleError::Degenerate) => None,
            Err(e) => return Err(e),
        };
        if let Some(next) =
            next.filter(|n| n.ratio < theta - options.tolerance * theta.abs().max(1.0))
        {
            outer += 1;
            if outer > options.max_outer {
                return Err(OracleError::NonConvergence {
                    what: "ratio iteration",
                    iterations: options.max_outer,
                });
            }
            residual = theta - next.ratio;
            theta = next.ratio;
            history.push(theta);
            eval = next;
            decisions = candidate;
            continue;
        }
        // No improvement. With converged values and a non-negative gain
        // bound, no policy beats theta.
        if rel_tol <= TIGHT {
            if lo < -TIGHT * scale.max(f64::MIN_POSITIVE) {
                return Err(OracleError::NonConvergence {
                    what: "ratio iteration",
                    iterations: outer,
                });
            }
            break;
        }
        rel_tol = (rel_tol * 1e-2).max(TIGHT);
    }
    if !residual.is_finite() {
        residual = 0.0;
    }
    Ok(SolverResult {
        optimal_ratio: eval.ratio,
        evaluation: eval,
        table: DecisionTable {
            space: model.space.clone(),
            classes: nj,
            decisions,
        },
        theta_history: history,
        sweeps,
        residual,
    })
}

fn tabulate(model: &ExactModel, policy: &dyn Policy) -> Vec<Decision> {
    let net = model.network();
    let mut state = NetworkState::empty(net);
    (0..model.len())
        .flat_map(|s| {
            state = model.state(s);
            (0..net.num_classes())
                .map(|j| policy.decide(&state, net, j))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Relative value iteration for per-state cost `cost - theta * reward`.
///
/// Each sweep gives bounds `lo <= gain <= hi` on the optimal gain; iteration
/// stops once `hi - lo` is within `tol` (in rate units). Returns the number
/// of sweeps and the final lower bound.
fn relative_value_iteration(
    model: &ExactModel,
    tables: &Tables,
    theta: f64,
    values: &mut [f64],
    tol: f64,
    max_sweeps: usize,
) -> Result<(usize, f64), OracleError> {
    let rate = model.uniform_rate();
    let inv = 1.0 / rate;
    let mut next = vec![0.0; values.len()];
    for sweep in 1..=max_sweeps {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (s, out) in next.iter_mut().enumerate() {
            *out = tables.bellman(s, theta, inv, values);
            let d = *out - values[s];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let base = next[0];
        for (v, x) in values.iter_mut().zip(&next) {
            *v = x - base;
        }
        if (hi - lo) * rate <= tol {
            return Ok((sweep, lo * rate));
        }
    }
    Err(OracleError::NonConvergence {
        what: "value iteration",
        iterations: max_sweeps,
    })
}

/// One-step greedy policy for `values`. The current decision is kept unless
/// another action is better by more than rounding noise; otherwise the first
/// minimiser in scan order wins, with admission preferred over blocking.
fn greedy(tables: &Tables, values: &[f64], current: &[Decision]) -> Vec<Decision> {
    let nj = tables.classes;
    let eps = 1e-12 * values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut out = Vec::with_capacity(current.len());
    for s in 0..tables.len() {
        for j in 0..nj {
            let i = s * nj + j;
            let (a, b) = (tables.adm_off[i], tables.adm_off[i + 1]);
            let mut best = (Decision::Block, values[s]);
            let mut kept = None;
            for (&t, &d) in tables.adm_t[a..b].iter().zip(&tables.adm_d[a..b]) {
                let v = values[t as usize];
                if v < best.1 - eps || (best.0.is_block() && v <= best.1 + eps) {
                    best = (d, v);
                }
                if d == current[i] {
                    kept = Some(v);
                }
            }
            if current[i].is_block() {
                kept = Some(values[s]);
            }
            match kept {
                Some(v) if v <= best.1 + eps => out.push(current[i]),
                _ => out.push(best.0),
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::evaluate_policy_exact;
    use crate::policy::PolicyKind;
    use crate::presets::fig1_network;

    #[test]
    fn fig1_optimum_beats_heuristics() {
        let net = ScaledNetwork::new(&fig1_network()).unwrap();
        let model = ExactModel::new(&net).unwrap();
        let res = solve_optimal(&model, &SolverOptions::default()).unwrap();
        for kind in PolicyKind::ALL {
            let eval = evaluate_policy_exact(&model, &kind).unwrap();
            assert!(res.optimal_ratio <= eval.ratio * (1.0 + 1e-9), "{kind}");
        }
        // Ratios never increase across outer iterations.
        for w in res.theta_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn table_replays_through_policy_trait() {
        let net = ScaledNetwork::new(&fig1_network()).unwrap();
        let model = ExactModel::new(&net).unwrap();
        let res = solve_optimal(&model, &SolverOptions::default()).unwrap();
        let again = evaluate_policy_exact(&model, &res.table).unwrap();
        assert!((again.ratio - res.optimal_ratio).abs() < 1e-12);
    }

    fn one_group(capacity: u32, channels: u32, idle: f64, cloud_power: f64) -> ScaledNetwork {
        use crate::model::{ArcGroup, DestinationArea, NetworkConfig, Requirement, TaskClass};
        let cfg = NetworkConfig {
            classes: vec![TaskClass {
                arrival_rate: 2.0,
                cloud_power,
                requirements: vec![Requirement::Units(1)],
            }],
            groups: vec![ArcGroup {
                capacity,
                unit_power: 3.0,
                idle_power: idle,
            }],
            areas: vec![DestinationArea {
                groups: vec![0],
                channels: vec![channels],
                service_rates: vec![1.0],
            }],
            cloud_delay: 1.0,
            scaling: 1,
            duration: Default::default(),
            cloud_duration: Default::default(),
        };
        ScaledNetwork::new(&cfg).unwrap()
    }

    #[test]
    fn single_server_always_admits() {
        let net = one_group(1, 1, 0.0, 100.0);
        let model = ExactModel::new(&net).unwrap();
        let res = solve_optimal(&model, &SolverOptions::default()).unwrap();
        assert!((res.optimal_ratio - 3.0).abs() < 1e-12);
        assert_eq!(res.table.decision(0, 0), Decision::Edge(0));
    }

    /// Every deterministic stationary policy, evaluated exactly.
    fn brute_force(model: &ExactModel) -> f64 {
        let n = model.len();
        let mut options: Vec<Vec<Decision>> = Vec::with_capacity(n);
        let mut digits = model.new_digits();
        for s in 0..n {
            model.space().digits(s, &mut digits);
            let mut o = vec![Decision::Block];
            model.for_each_admission(s, &digits, 0, |d, _| o.push(d));
            options.push(o);
        }
        let mut choice = vec![0usize; n];
        let mut best = f64::INFINITY;
        loop {
            if let Ok(e) = evaluate_with(model, |s, _| options[s][choice[s]]) {
                best = best.min(e.ratio);
            }
            let mut i = 0;
            while i < n {
                choice[i] += 1;
                if choice[i] < options[i].len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
            if i == n {
                return best;
            }
        }
    }

    #[test]
    fn matches_exhaustive_search() {
        for (idle, cloud) in [(0.0, 100.0), (4.0, 5.0), (10.0, 4.5), (1.0, 3.5)] {
            let net = one_group(2, 3, idle, cloud);
            let model = ExactModel::new(&net).unwrap();
            let res = solve_optimal(&model, &SolverOptions::default()).unwrap();
            let brute = brute_force(&model);
            assert!(
                (res.optimal_ratio - brute).abs() < 1e-9 * brute,
                "{idle} {cloud}: {} vs {brute}",
                res.optimal_ratio
            );
        }
    }
}
