//! Stationary analysis of the chain induced by a fixed policy.

use crate::model::NetworkState;
use crate::oracle::space::{Scratch, NONE};
use crate::oracle::{ExactModel, OracleError};
use crate::policy::{Decision, Policy};

/// Chains up to this size are solved by dense elimination.
const DENSE_LIMIT: usize = 400;
const GS_TOLERANCE: f64 = 1e-13;
const GS_MAX_SWEEPS: usize = 200_000;

/// Long-run averages of a policy under its stationary law.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactEvaluation {
    /// Power per unit throughput.
    pub ratio: f64,
    /// Mean power.
    pub power: f64,
    /// Mean completion rate.
    pub throughput: f64,
    /// Per-class probability that an arrival is blocked.
    pub blocking: Vec<f64>,
    /// Number of states reachable from the empty state.
    pub states: usize,
}

/// Exact evaluation of `policy` on `model`.
pub fn evaluate_policy_exact(
    model: &ExactModel,
    policy: &dyn Policy,
) -> Result<ExactEvaluation, OracleError> {
    let net = model.network();
    let mut state = NetworkState::empty(net);
    let mut scratch = Scratch::default();
    evaluate_with(model, |s, j| {
        model.space().decode_into(net, s, &mut state, &mut scratch);
        policy.decide(&state, net, j)
    })
}

/// Reachable part of a policy's chain, in breadth-first order from empty.
struct Chain {
    global: Vec<usize>,
    offsets: Vec<usize>,
    edges: Vec<(u32, f64)>,
    out_rate: Vec<f64>,
    /// `blocked[i * J + j]`: class `j` is refused in local state `i`.
    blocked: Vec<bool>,
}

fn build_chain(
    model: &ExactModel,
    mut decide: impl FnMut(usize, usize) -> Decision,
) -> Result<Chain, OracleError> {
    let nj = model.network().num_classes();
    let mut local = vec![NONE; model.len()];
    let mut global = vec![0usize];
    local[0] = 0;
    let mut offsets = vec![0];
    let mut edges = Vec::new();
    let mut out_rate = Vec::new();
    let mut blocked = Vec::new();
    let mut digits = model.new_digits();
    let mut i = 0;
    while i < global.len() {
        let s = global[i];
        model.space().digits(s, &mut digits);
        let mut targets: Vec<(usize, f64)> = Vec::new();
        model.for_each_completion(s, &digits, |rate, t| targets.push((t, rate)));
        for j in 0..nj {
            let decision = decide(s, j);
            let t = model.admit_target(s, &digits, j, decision).ok_or(
                OracleError::InvalidDecision {
                    state: s,
                    class: j,
                    decision,
                },
            )?;
            let refused = decision.is_block();
            blocked.push(refused);
            if !refused {
                targets.push((t, model.network().arrival_rate(j)));
            }
        }
        let mut total = 0.0;
        for (t, rate) in targets {
            if rate <= 0.0 {
                continue;
            }
            if local[t] == NONE {
                local[t] = global.len() as u32;
                global.push(t);
            }
            edges.push((local[t], rate));
            total += rate;
        }
        out_rate.push(total);
        offsets.push(edges.len());
        i += 1;
    }
    Ok(Chain {
        global,
        offsets,
        edges,
        out_rate,
        blocked,
    })
}

pub(crate) fn evaluate_with(
    model: &ExactModel,
    decide: impl FnMut(usize, usize) -> Decision,
) -> Result<ExactEvaluation, OracleError> {
    let chain = build_chain(model, decide)?;
    let pi = stationary(&chain)?;
    let nj = model.network().num_classes();
    let mut digits = model.new_digits();
    let (mut power, mut throughput) = (0.0, 0.0);
    let mut blocking = vec![0.0; nj];
    for (i, &s) in chain.global.iter().enumerate() {
        model.space().digits(s, &mut digits);
        power += pi[i] * model.space().cost(&digits);
        throughput += pi[i] * model.space().reward(&digits);
        for (j, b) in blocking.iter_mut().enumerate() {
            if chain.blocked[i * nj + j] {
                *b += pi[i];
            }
        }
    }
    if throughput <= 0.0 {
        return Err(OracleError::Degenerate);
    }
    Ok(ExactEvaluation {
        ratio: power / throughput,
        power,
        throughput,
        blocking,
        states: chain.global.len(),
    })
}

/// Incoming transitions of each state.
fn transpose(chain: &Chain) -> (Vec<usize>, Vec<(u32, f64)>) {
    let n = chain.global.len();
    let mut count = vec![0usize; n + 1];
    for &(t, _) in &chain.edges {
        count[t as usize + 1] += 1;
    }
    for i in 0..n {
        count[i + 1] += count[i];
    }
    let mut fill = count.clone();
    let mut incoming = vec![(0u32, 0.0); chain.edges.len()];
    for src in 0..n {
        for &(t, rate) in &chain.edges[chain.offsets[src]..chain.offsets[src + 1]] {
            incoming[fill[t as usize]] = (src as u32, rate);
            fill[t as usize] += 1;
        }
    }
    (count, incoming)
}

fn stationary(chain: &Chain) -> Result<Vec<f64>, OracleError> {
    let n = chain.global.len();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let (in_off, incoming) = transpose(chain);

    // Every reachable state must lead back to empty.
    let mut seen = vec![false; n];
    seen[0] = true;
    let mut stack = vec![0usize];
    while let Some(t) = stack.pop() {
        for &(src, _) in &incoming[in_off[t]..in_off[t + 1]] {
            if !seen[src as usize] {
                seen[src as usize] = true;
                stack.push(src as usize);
            }
        }
    }
    if let Some(i) = seen.iter().position(|&v| !v) {
        return Err(OracleError::ReducibleChain {
            state: chain.global[i],
        });
    }

    if n <= DENSE_LIMIT {
        dense(chain, n)
    } else {
        gauss_seidel(chain, &in_off, &incoming)
    }
}

/// Solves `pi Q = 0, sum pi = 1` by Gaussian elimination with partial
/// pivoting, with the last balance equation replaced by normalization.
fn dense(chain: &Chain, n: usize) -> Result<Vec<f64>, OracleError> {
    // a[row][col] holds Q^T.
    let mut a = vec![0.0; n * n];
    for src in 0..n {
        a[src * n + src] -= chain.out_rate[src];
        for &(t, rate) in &chain.edges[chain.offsets[src]..chain.offsets[src + 1]] {
            a[t as usize * n + src] += rate;
        }
    }
    let mut b = vec![0.0; n];
    for col in 0..n {
        a[(n - 1) * n + col] = 1.0;
    }
    b[n - 1] = 1.0;
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r1, &r2| a[r1 * n + col].abs().total_cmp(&a[r2 * n + col].abs()))
            .unwrap_or(col);
        if a[pivot * n + col].abs() <= 1e-14 * scale {
            return Err(OracleError::SingularSystem);
        }
        if pivot != col {
            for c in 0..n {
                a.swap(pivot * n + c, col * n + c);
            }
            b.swap(pivot, col);
        }
        let p = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / p;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r * n + c] -= f * a[col * n + c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc -= a[r * n + c] * x[c];
        }
        x[r] = acc / a[r * n + r];
    }
    // Clean rounding noise.
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    let sum: f64 = x.iter().sum();
    Ok(x.into_iter().map(|v| v / sum).collect())
}

/// Gauss-Seidel sweeps on the balance equations
/// `pi_s * out_s = sum_t pi_t q_ts`.
fn gauss_seidel(
    chain: &Chain,
    in_off: &[usize],
    incoming: &[(u32, f64)],
) -> Result<Vec<f64>, OracleError> {
    let n = chain.global.len();
    let mut pi = vec![1.0 / n as f64; n];
    for sweep in 1..=GS_MAX_SWEEPS {
        for s in 0..n {
            let inflow: f64 = incoming[in_off[s]..in_off[s + 1]]
                .iter()
                .map(|&(src, rate)| pi[src as usize] * rate)
                .sum();
            pi[s] = inflow / chain.out_rate[s];
        }
        let sum: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|v| *v /= sum);
        if sweep % 10 == 0 {
            let mut residual = 0.0;
            let mut flow = 0.0;
            for s in 0..n {
                let inflow: f64 = incoming[in_off[s]..in_off[s + 1]]
                    .iter()
                    .map(|&(src, rate)| pi[src as usize] * rate)
                    .sum();
                let out = pi[s] * chain.out_rate[s];
                residual += (out - inflow).abs();
                flow += out;
            }
            if residual <= GS_TOLERANCE * flow {
                return Ok(pi);
            }
        }
    }
    Err(OracleError::NonConvergence {
        what: "stationary solve",
        iterations: GS_MAX_SWEEPS,
    })
}
