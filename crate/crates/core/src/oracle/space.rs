//! Enumeration of the constrained state space.
//!
//! Capacity and channel bounds only involve groups and channels of a single
//! area, so the feasible set is a product of per-area sets. Each area's local
//! states are enumerated once, and a global state is the mixed-radix number
//! whose digits are the local indices.

use std::collections::HashMap;

use crate::model::{NetworkState, Requirement, ScaledNetwork};
use crate::oracle::OracleError;

pub(crate) const NONE: u32 = u32::MAX;

/// Feasible occupancies of one area and their one-step transitions.
#[derive(Debug, Clone)]
pub(crate) struct AreaSpace {
    /// Global ids of the groups in this area.
    pub groups: Vec<usize>,
    classes: usize,
    /// Per local state: edge counts `[j * G + g]` followed by cloud counts `[j]`.
    counts: Vec<u32>,
    width: usize,
    pub len: usize,
    index: HashMap<Vec<u32>, u32>,
    /// `add_edge[u * J * G + j * G + g]`: local state after admitting a
    /// class-`j` task into the area's `g`-th group, or `NONE`.
    pub add_edge: Vec<u32>,
    /// `add_cloud[u * J + j]`: local state after routing a class-`j` cloud
    /// task through this area, or `NONE`.
    pub add_cloud: Vec<u32>,
    /// Completion transitions of local state `u` live in
    /// `completions[offsets[u]..offsets[u + 1]]` as (rate, target).
    pub offsets: Vec<u32>,
    pub completions: Vec<(f64, u32)>,
    pub reward: Vec<f64>,
    pub cost: Vec<f64>,
}

impl AreaSpace {
    fn build(net: &ScaledNetwork, area: usize, cap: usize) -> Result<Self, OracleError> {
        let groups = net.groups_in(area).to_vec();
        let nj = net.num_classes();
        let ng = groups.len();
        let width = nj * ng + nj;

        // Depth-first enumeration in lexicographic order; the all-zero
        // state comes first.
        let mut counts = Vec::new();
        let mut current = vec![0u32; width];
        let mut load = vec![0u32; ng];
        let mut chan = vec![0u32; nj];
        let mut len = 0usize;
        enumerate(
            net,
            &groups,
            area,
            0,
            &mut current,
            &mut load,
            &mut chan,
            &mut counts,
            &mut len,
            cap,
        )?;

        let index: HashMap<Vec<u32>, u32> = counts
            .chunks(width)
            .enumerate()
            .map(|(u, c)| (c.to_vec(), u as u32))
            .collect();
        let lookup = |c: &[u32]| index.get(c).copied().unwrap_or(NONE);

        let mut add_edge = vec![NONE; len * nj * ng];
        let mut add_cloud = vec![NONE; len * nj];
        let mut offsets = Vec::with_capacity(len + 1);
        let mut completions = Vec::new();
        let mut reward = vec![0.0; len];
        let mut cost = vec![0.0; len];
        let mut buf = vec![0u32; width];
        offsets.push(0);
        for u in 0..len {
            let c = &counts[u * width..(u + 1) * width];
            buf.copy_from_slice(c);
            for j in 0..nj {
                for g in 0..ng {
                    buf[j * ng + g] += 1;
                    add_edge[u * nj * ng + j * ng + g] = lookup(&buf);
                    buf[j * ng + g] -= 1;
                }
                buf[nj * ng + j] += 1;
                add_cloud[u * nj + j] = lookup(&buf);
                buf[nj * ng + j] -= 1;
            }

            let mut load = vec![0u32; ng];
            for j in 0..nj {
                for (g, &k) in groups.iter().enumerate() {
                    let x = c[j * ng + g];
                    if x == 0 {
                        continue;
                    }
                    let w = net.requirement(j, k).units().unwrap_or(0);
                    load[g] += w * x;
                    let rate = net.group_rate(j, k) * f64::from(x);
                    reward[u] += rate;
                    cost[u] += net.unit_power(k) * f64::from(w * x);
                    buf[j * ng + g] -= 1;
                    completions.push((rate, lookup(&buf)));
                    buf[j * ng + g] += 1;
                }
                let z = c[nj * ng + j];
                if z > 0 {
                    let rate = net.cloud_rate(j, area) * f64::from(z);
                    reward[u] += rate;
                    cost[u] += net.cloud_power(j) * f64::from(z);
                    buf[nj * ng + j] -= 1;
                    completions.push((rate, lookup(&buf)));
                    buf[nj * ng + j] += 1;
                }
            }
            for (g, &k) in groups.iter().enumerate() {
                if load[g] > 0 {
                    cost[u] += net.idle_power(k);
                }
            }
            offsets.push(completions.len() as u32);
        }

        Ok(AreaSpace {
            groups,
            classes: nj,
            counts,
            width,
            len,
            index,
            add_edge,
            add_cloud,
            offsets,
            completions,
            reward,
            cost,
        })
    }

    pub fn completions_of(&self, u: usize) -> &[(f64, u32)] {
        &self.completions[self.offsets[u] as usize..self.offsets[u + 1] as usize]
    }

    pub fn max_completion_rate(&self) -> f64 {
        (0..self.len)
            .map(|u| self.completions_of(u).iter().map(|c| c.0).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn counts_of(&self, u: usize) -> &[u32] {
        &self.counts[u * self.width..(u + 1) * self.width]
    }

    pub fn edge_target(&self, u: usize, j: usize, g: usize) -> u32 {
        let ng = self.groups.len();
        self.add_edge[u * self.classes * ng + j * ng + g]
    }

    pub fn cloud_target(&self, u: usize, j: usize) -> u32 {
        self.add_cloud[u * self.classes + j]
    }
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    net: &ScaledNetwork,
    groups: &[usize],
    area: usize,
    pos: usize,
    current: &mut [u32],
    load: &mut [u32],
    chan: &mut [u32],
    out: &mut Vec<u32>,
    len: &mut usize,
    cap: usize,
) -> Result<(), OracleError> {
    let nj = net.num_classes();
    let ng = groups.len();
    if pos == current.len() {
        *len += 1;
        if *len > cap {
            return Err(OracleError::StateSpaceTooLarge {
                states: *len as f64,
                cap,
            });
        }
        out.extend_from_slice(current);
        return Ok(());
    }
    let (j, unit, group) = if pos < nj * ng {
        let (j, g) = (pos / ng, pos % ng);
        match net.requirement(j, groups[g]) {
            Requirement::Inaccessible => (j, 0, Some(g)),
            Requirement::Units(w) => (j, w, Some(g)),
        }
    } else {
        (pos - nj * ng, 0, None)
    };
    let channels = net.channels(j, area);
    let mut n = 0u32;
    loop {
        current[pos] = n;
        enumerate(
            net,
            groups,
            area,
            pos + 1,
            current,
            load,
            chan,
            out,
            len,
            cap,
        )?;
        // Can one more task be added at this position?
        let fits_group = match group {
            Some(g) => unit > 0 && load[g] + unit <= net.capacity(groups[g]),
            None => true,
        };
        if !fits_group || chan[j] + 1 > channels {
            break;
        }
        if let Some(g) = group {
            load[g] += unit;
        }
        chan[j] += 1;
        n += 1;
    }
    if let Some(g) = group {
        load[g] -= unit * n;
    }
    chan[j] -= n;
    current[pos] = 0;
    Ok(())
}

/// Product of per-area spaces with a dense mixed-radix index.
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub(crate) areas: Vec<AreaSpace>,
    pub(crate) strides: Vec<usize>,
    len: usize,
    classes: usize,
    groups: usize,
}

impl StateSpace {
    pub fn build(net: &ScaledNetwork, cap: usize) -> Result<Self, OracleError> {
        let mut areas = Vec::with_capacity(net.num_areas());
        let mut strides = Vec::with_capacity(net.num_areas());
        let mut total = 1usize;
        for l in 0..net.num_areas() {
            let a = AreaSpace::build(net, l, cap)?;
            strides.push(total);
            let bound = total as f64 * a.len as f64;
            if bound > cap as f64 {
                // Report the full product for diagnostics.
                let mut states = bound;
                for l2 in l + 1..net.num_areas() {
                    states *=
                        AreaSpace::build(net, l2, cap).map_or(f64::INFINITY, |a| a.len as f64);
                }
                return Err(OracleError::StateSpaceTooLarge { states, cap });
            }
            total *= a.len;
            areas.push(a);
        }
        Ok(StateSpace {
            areas,
            strides,
            len: total,
            classes: net.num_classes(),
            groups: net.num_groups(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Local index of area `l` in global state `s`.
    #[inline]
    pub(crate) fn digit(&self, s: usize, l: usize) -> usize {
        (s / self.strides[l]) % self.areas[l].len
    }

    #[inline]
    pub(crate) fn digits(&self, s: usize, out: &mut [usize]) {
        let mut rem = s;
        for (d, a) in out.iter_mut().zip(&self.areas) {
            *d = rem % a.len;
            rem /= a.len;
        }
    }

    /// Global index after replacing area `l`'s local state `from` by `to`.
    #[inline]
    pub(crate) fn shift(&self, s: usize, l: usize, from: usize, to: u32) -> usize {
        s + to as usize * self.strides[l] - from * self.strides[l]
    }

    pub(crate) fn reward(&self, digits: &[usize]) -> f64 {
        self.areas
            .iter()
            .zip(digits)
            .map(|(a, &u)| a.reward[u])
            .sum()
    }

    pub(crate) fn cost(&self, digits: &[usize]) -> f64 {
        self.areas.iter().zip(digits).map(|(a, &u)| a.cost[u]).sum()
    }

    /// Writes global state `s` into `state`.
    pub(crate) fn decode_into(
        &self,
        net: &ScaledNetwork,
        s: usize,
        state: &mut NetworkState,
        scratch: &mut Scratch,
    ) {
        let (nj, nk, nl) = (self.classes, self.groups, self.areas.len());
        scratch.edge.clear();
        scratch.edge.resize(nj * nk, 0);
        scratch.cloud.clear();
        scratch.cloud.resize(nj * nl, 0);
        for (l, a) in self.areas.iter().enumerate() {
            let c = a.counts_of(self.digit(s, l));
            let ng = a.groups.len();
            for j in 0..nj {
                for (g, &k) in a.groups.iter().enumerate() {
                    scratch.edge[j * nk + k] = c[j * ng + g];
                }
                scratch.cloud[j * nl + l] = c[nj * ng + j];
            }
        }
        state.set_counts(net, &scratch.edge, &scratch.cloud);
    }

    pub fn index_of(&self, state: &NetworkState) -> Option<usize> {
        let edge = state.edge_counts();
        let cloud = state.cloud_counts();
        let (nj, nk, nl) = (self.classes, self.groups, self.areas.len());
        if edge.len() != nj * nk || cloud.len() != nj * nl {
            return None;
        }
        let mut s = 0;
        for (l, a) in self.areas.iter().enumerate() {
            let mut key = Vec::with_capacity(a.width);
            for j in 0..nj {
                key.extend(a.groups.iter().map(|&k| edge[j * nk + k]));
            }
            key.extend((0..nj).map(|j| cloud[j * nl + l]));
            // Tasks in groups outside this area were checked by their own
            // area; counts here are complete for the area.
            let u = *a.index.get(&key)?;
            s += u as usize * self.strides[l];
        }
        Some(s)
    }
}

#[derive(Debug, Default)]
pub(crate) struct Scratch {
    edge: Vec<u32>,
    cloud: Vec<u32>,
}
