//! Random multi-class scenarios.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{ArcGroup, DestinationArea, NetworkConfig, Requirement, TaskClass};

/// Sampling ranges for [`generate_random_scenario`]. Interval fields are
/// `[low, high]` for a uniform draw; list fields are drawn uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomRanges {
    pub classes: usize,
    pub groups: usize,
    pub areas: usize,
    /// Units needed per (class, group).
    pub units: Vec<u32>,
    /// Base channels per (class, area).
    pub channels: Vec<u32>,
    /// Base capacity per group.
    pub capacity: Vec<u32>,
    pub unit_power: [f64; 2],
    /// Base idle power is this factor times unit power times capacity.
    pub idle_factor: f64,
    /// Mean task duration per (class, area).
    pub mean_duration: [f64; 2],
    pub arrival_rate: [f64; 2],
    /// Cloud power is drawn from `[max edge power + margin, max]`.
    pub cloud_power_margin: f64,
    pub cloud_power_max: f64,
    pub cloud_delay: f64,
}

impl Default for RandomRanges {
    fn default() -> Self {
        RandomRanges {
            classes: 2,
            groups: 5,
            areas: 4,
            units: vec![1, 2],
            channels: vec![6, 7, 8],
            capacity: vec![3, 4, 5, 6],
            unit_power: [0.1, 20.0],
            idle_factor: 0.5,
            mean_duration: [0.5, 5.0],
            arrival_rate: [2.0, 8.0],
            cloud_power_margin: 1.0,
            cloud_power_max: 60.0,
            cloud_delay: 5.0,
        }
    }
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed of `master` for the given path of indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn pick(rng: &mut ChaCha8Rng, values: &[u32]) -> u32 {
    *values
        .choose(rng)
        .expect("empty value list in random ranges")
}

/// Draws a network from `ranges`. Every area receives at least one group;
/// the remaining groups go to uniformly chosen areas.
///
/// # Panics
///
/// If a list range is empty or there are fewer groups than areas.
pub fn generate_random_scenario(seed: u64, ranges: &RandomRanges) -> NetworkConfig {
    let (nj, nk, nl) = (ranges.classes, ranges.groups, ranges.areas);
    assert!(nk >= nl && nl > 0, "need at least one group per area");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut order: Vec<usize> = (0..nk).collect();
    order.shuffle(&mut rng);
    let mut members = vec![Vec::new(); nl];
    for (i, &k) in order.iter().enumerate() {
        let l = if i < nl { i } else { rng.random_range(0..nl) };
        members[l].push(k);
    }

    let groups: Vec<ArcGroup> = (0..nk)
        .map(|_| {
            let capacity = pick(&mut rng, &ranges.capacity);
            let unit_power = uniform(&mut rng, ranges.unit_power);
            ArcGroup {
                capacity,
                unit_power,
                idle_power: ranges.idle_factor * unit_power * f64::from(capacity),
            }
        })
        .collect();

    let areas = members
        .into_iter()
        .map(|mut g| {
            g.sort_unstable();
            DestinationArea {
                groups: g,
                channels: (0..nj).map(|_| pick(&mut rng, &ranges.channels)).collect(),
                service_rates: (0..nj)
                    .map(|_| 1.0 / uniform(&mut rng, ranges.mean_duration))
                    .collect(),
            }
        })
        .collect();

    let classes = (0..nj)
        .map(|_| {
            let requirements: Vec<Requirement> = (0..nk)
                .map(|_| Requirement::Units(pick(&mut rng, &ranges.units)))
                .collect();
            let edge_max = requirements
                .iter()
                .zip(&groups)
                .filter_map(|(r, g)| r.units().map(|w| f64::from(w) * g.unit_power))
                .fold(0.0, f64::max);
            let low = edge_max + ranges.cloud_power_margin;
            TaskClass {
                arrival_rate: uniform(&mut rng, ranges.arrival_rate),
                // The upper end moves up when the edge is already that costly.
                cloud_power: uniform(&mut rng, [low, ranges.cloud_power_max.max(low)]),
                requirements,
            }
        })
        .collect();

    NetworkConfig {
        classes,
        groups,
        areas,
        cloud_delay: ranges.cloud_delay,
        scaling: 1,
        duration: Default::default(),
        cloud_duration: Default::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let r = RandomRanges::default();
        assert_eq!(
            generate_random_scenario(7, &r),
            generate_random_scenario(7, &r)
        );
        assert_ne!(
            generate_random_scenario(7, &r),
            generate_random_scenario(8, &r)
        );
    }

    #[test]
    fn ranges_respected_and_valid() {
        let r = RandomRanges::default();
        let mut power_sum = 0.0;
        let mut power_count = 0;
        for seed in 0..10_000 {
            let cfg = generate_random_scenario(seed, &r);
            cfg.validate().unwrap();
            assert_eq!(
                (cfg.classes.len(), cfg.groups.len(), cfg.areas.len()),
                (2, 5, 4)
            );
            assert_eq!(cfg.cloud_delay, 5.0);
            assert!(cfg.areas.iter().all(|a| !a.groups.is_empty()));
            assert_eq!(cfg.areas.iter().filter(|a| a.groups.len() == 2).count(), 1);
            for g in &cfg.groups {
                assert!((3..=6).contains(&g.capacity));
                assert!((0.1..=20.0).contains(&g.unit_power));
                assert!((g.idle_power - 0.5 * g.unit_power * f64::from(g.capacity)).abs() < 1e-12);
                power_sum += g.unit_power;
                power_count += 1;
            }
            for a in &cfg.areas {
                assert!(a.channels.iter().all(|c| (6..=8).contains(c)));
                assert!(a
                    .service_rates
                    .iter()
                    .all(|m| (0.5..=5.0).contains(&(1.0 / m))));
            }
            for c in &cfg.classes {
                assert!((2.0..=8.0).contains(&c.arrival_rate));
                assert!(c.cloud_power <= 60.0);
                assert!(c
                    .requirements
                    .iter()
                    .all(|w| matches!(w, Requirement::Units(1 | 2))));
            }
        }
        let mean = power_sum / f64::from(power_count);
        assert!((mean - 10.05).abs() < 0.02 * 10.05, "{mean}");
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(derive_seed(1, &[3]), derive_seed(1, &[3]));
    }
}
