use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{crossbar_seed, merge_many, merged_size, CrossbarSolution, HardwareConfig, MappingSolution, SearchStats};
use crate::crossbar::EnduranceMap;
use crate::error::{Error, Result};
use crate::placement::{optimize_placement, PlacementResult, SolverOptions};
use crate::rng::stream_rng;
use crate::workload::{Cluster, ClusterId, Workload};

/// Stream key of the move proposals; cluster ids key the placement streams.
const MOVE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HillClimbOptions {
    /// Neighbor moves to propose in total.
    pub budget: usize,
    /// Stop after this many rejected moves in a row.
    pub patience: usize,
    /// Placement effort for the final solve of each crossbar.
    pub placement: SolverOptions,
    /// Placement budget during the search is `placement.budget / inner_divisor`.
    pub inner_divisor: usize,
}

impl Default for HillClimbOptions {
    fn default() -> Self {
        Self {
            budget: 5000,
            patience: 50,
            placement: SolverOptions::default(),
            inner_divisor: 10,
        }
    }
}

struct Evaluator<'a> {
    clusters: &'a [Cluster],
    maps: &'a EnduranceMap,
    opts: SolverOptions,
    seed: u64,
    cache: HashMap<BTreeSet<usize>, PlacementResult>,
    hits: usize,
}

impl Evaluator<'_> {
    fn ids(&self, members: &BTreeSet<usize>) -> Vec<ClusterId> {
        members.iter().map(|&i| self.clusters[i].id).collect()
    }

    fn solve(&self, members: &BTreeSet<usize>, opts: SolverOptions) -> Result<(Cluster, PlacementResult)> {
        let parts: Vec<&Cluster> = members.iter().map(|&i| &self.clusters[i]).collect();
        let merged = merge_many(&parts)?;
        let result = optimize_placement(&merged, self.maps, opts, crossbar_seed(self.seed, &self.ids(members)))?;
        Ok((merged, result))
    }

    /// Lifetimes of the given crossbar contents, solving the uncached ones in parallel.
    fn lifetimes(&mut self, sets: &[&BTreeSet<usize>]) -> Result<Vec<f64>> {
        let mut missing: Vec<&BTreeSet<usize>> = Vec::new();
        for s in sets {
            if s.is_empty() || self.cache.contains_key(*s) {
                self.hits += usize::from(!s.is_empty());
            } else if !missing.contains(s) {
                missing.push(s);
            }
        }
        let solved = missing
            .par_iter()
            .map(|s| self.solve(s, self.opts).map(|(_, r)| r))
            .collect::<Result<Vec<_>>>()?;
        for (s, r) in missing.into_iter().zip(solved) {
            self.cache.insert(s.clone(), r);
        }
        Ok(sets
            .iter()
            .map(|s| self.cache.get(*s).map_or(f64::INFINITY, |r| r.lifetime))
            .collect())
    }
}

/// First-fit decreasing by neuron count: each cluster, largest first, goes
/// to the lowest-numbered crossbar its union still fits.
fn first_fit_decreasing(clusters: &[Cluster], n: usize, m: usize) -> Result<Vec<BTreeSet<usize>>> {
    let mut order: Vec<usize> = (0..clusters.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(clusters[i].pre.len() + clusters[i].post.len()));
    let mut bins: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for i in order {
        let slot = bins.iter().position(|bin| {
            let parts: Vec<&Cluster> = bin.iter().chain([&i]).map(|&j| &clusters[j]).collect();
            let (p, q) = merged_size(&parts);
            p <= m && q <= m
        });
        match slot {
            Some(b) => {
                bins[b].insert(i);
            }
            None => {
                let c = &clusters[i];
                return Err(Error::Infeasible(format!(
                    "cluster {} ({}×{}) fits none of the {n} crossbars of size {m} after first-fit packing",
                    c.id,
                    c.pre.len(),
                    c.post.len()
                )));
            }
        }
    }
    Ok(bins)
}

fn fits(clusters: &[Cluster], members: &BTreeSet<usize>, m: usize) -> bool {
    let parts: Vec<&Cluster> = members.iter().map(|&i| &clusters[i]).collect();
    let (p, q) = merged_size(&parts);
    p <= m && q <= m
}

/// Hill-climbing search over cluster-to-crossbar assignments.
///
/// A move relocates one cluster to another crossbar. Half the moves take a
/// cluster from the crossbar that currently limits the lifetime; the rest
/// pick any cluster. Moves that would overfill a crossbar are skipped and
/// do not count against `patience`. A move is accepted only if it strictly
/// raises the overall lifetime. During the search placements run with a
/// reduced budget and are cached per set of clusters; the final assignment
/// is re-placed with the full budget, keeping whichever result is better.
pub fn hill_climb_map(
    w: &Workload,
    hw: &HardwareConfig,
    maps: &EnduranceMap,
    opts: &HillClimbOptions,
    seed: u64,
) -> Result<MappingSolution> {
    hw.validate()?;
    let m = maps.size();
    let n = hw.n_crossbars;
    if opts.inner_divisor == 0 {
        return Err(Error::Config("inner placement divisor must be at least 1".into()));
    }
    super::ensure_fits(w, m)?;
    let clusters = &w.clusters;
    let mut bins = first_fit_decreasing(clusters, n, m)?;
    let mut home = vec![0; clusters.len()];
    for (b, bin) in bins.iter().enumerate() {
        for &i in bin {
            home[i] = b;
        }
    }

    let inner = SolverOptions {
        budget: (opts.placement.budget / opts.inner_divisor).max(1),
        restarts: opts.placement.restarts,
    };
    let mut eval = Evaluator {
        clusters,
        maps,
        opts: inner,
        seed,
        cache: HashMap::new(),
        hits: 0,
    };
    let refs: Vec<&BTreeSet<usize>> = bins.iter().collect();
    let mut lives = eval.lifetimes(&refs)?;
    let mut current = lives.iter().copied().fold(f64::INFINITY, f64::min);
    let mut stats = SearchStats {
        initial_lifetime: current,
        accepted_trace: vec![current],
        ..Default::default()
    };

    let mut rng = stream_rng(seed, MOVE_STREAM);
    let mut rejects = 0;
    while n > 1 && !clusters.is_empty() && stats.evaluated < opts.budget && rejects < opts.patience {
        stats.evaluated += 1;
        let limiting = (0..n).filter(|&b| !bins[b].is_empty()).min_by(|&a, &b| lives[a].total_cmp(&lives[b]));
        let c = match limiting {
            Some(b) if rng.random_bool(0.5) => {
                let k = rng.random_range(0..bins[b].len());
                *bins[b].iter().nth(k).expect("index in range")
            }
            _ => rng.random_range(0..clusters.len()),
        };
        let from = home[c];
        let mut to = rng.random_range(0..n - 1);
        if to >= from {
            to += 1;
        }
        let mut to_set = bins[to].clone();
        to_set.insert(c);
        if !fits(clusters, &to_set, m) {
            continue;
        }
        let mut from_set = bins[from].clone();
        from_set.remove(&c);
        let new = eval.lifetimes(&[&from_set, &to_set])?;
        let candidate = (0..n)
            .map(|b| match b {
                _ if b == from => new[0],
                _ if b == to => new[1],
                _ => lives[b],
            })
            .fold(f64::INFINITY, f64::min);
        if candidate > current {
            bins[from] = from_set;
            bins[to] = to_set;
            lives[from] = new[0];
            lives[to] = new[1];
            home[c] = to;
            current = candidate;
            stats.accepted += 1;
            stats.accepted_trace.push(current);
            rejects = 0;
        } else {
            rejects += 1;
        }
    }
    stats.cache_hits = eval.hits;

    let occupied: Vec<(usize, &BTreeSet<usize>)> = bins.iter().enumerate().filter(|(_, s)| !s.is_empty()).collect();
    let crossbars = occupied
        .par_iter()
        .map(|&(b, set)| {
            let (merged, full) = eval.solve(set, opts.placement)?;
            let quick = &eval.cache[set];
            let result = if quick.lifetime > full.lifetime {
                quick.clone()
            } else {
                full
            };
            Ok(CrossbarSolution {
                crossbar: b,
                clusters: eval.ids(set),
                merged,
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MappingSolution::assemble(*hw, false, crossbars, stats))
}

#[cfg(test)]
mod tests {
    use super::super::merge_clusters;
    use super::*;
    use crate::crossbar::{CrossbarConfig, Grid};
    use crate::workload::{generate_synthetic, SyntheticParams};
    use proptest::prelude::*;

    fn hw(n: usize, m: usize) -> HardwareConfig {
        HardwareConfig {
            n_crossbars: n,
            crossbar: CrossbarConfig {
                size: m,
                ..Default::default()
            },
        }
    }

    fn skewed(m: usize) -> EnduranceMap {
        EnduranceMap {
            hrs: Grid::from_fn(m, |k, l| 500.0 + 40.0 * k as f64 + 13.0 * ((k * 7 + l * 3) % 11) as f64),
            lrs: Grid::from_fn(m, |k, l| 4000.0 + 90.0 * l as f64 + 5.0 * k as f64),
        }
    }

    fn small_workload(n: usize, side: usize, seed: u64) -> Workload {
        generate_synthetic(&SyntheticParams {
            n_clusters: n,
            pre_per_cluster: side,
            post_per_cluster: side,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_budget_keeps_first_fit() {
        let w = small_workload(4, 3, 1);
        let opts = HillClimbOptions {
            budget: 0,
            ..Default::default()
        };
        let s = hill_climb_map(&w, &hw(6, 8), &skewed(8), &opts, 3).unwrap();
        s.validate(&w).unwrap();
        // two 3×3 clusters fill 6 of 8 rows, a third would not fit
        assert_eq!(s.crossbars.len(), 2);
        assert_eq!(s.stats.evaluated, 0);
        assert_eq!(s.stats.accepted_trace.len(), 1);
        assert!(s.lifetime >= s.stats.initial_lifetime);
    }

    #[test]
    fn one_crossbar_forces_a_merge() {
        let w = small_workload(2, 3, 5);
        let s = hill_climb_map(&w, &hw(1, 8), &skewed(8), &HillClimbOptions::default(), 9).unwrap();
        let merged = merge_clusters(&w.clusters[0], &w.clusters[1]).unwrap();
        assert_eq!(s.crossbars.len(), 1);
        assert_eq!(s.crossbars[0].merged, merged);
        let direct = optimize_placement(
            &merged,
            &skewed(8),
            SolverOptions::default(),
            crossbar_seed(9, &[ClusterId(0), ClusterId(1)]),
        )
        .unwrap();
        assert!(s.lifetime >= direct.lifetime);
        assert_eq!(s.recompute_lifetime(&skewed(8)).unwrap(), s.lifetime);
    }

    #[test]
    fn infeasible_hardware_names_cluster() {
        let w = small_workload(5, 4, 2);
        let err = hill_climb_map(&w, &hw(2, 8), &skewed(8), &HillClimbOptions::default(), 0).unwrap_err();
        assert!(matches!(err, Error::Infeasible(ref msg) if msg.contains("cluster")), "{err}");
    }

    #[test]
    fn spare_crossbars_separate_clusters() {
        let w = small_workload(4, 3, 8);
        let s = hill_climb_map(&w, &hw(8, 8), &skewed(8), &HillClimbOptions::default(), 4).unwrap();
        s.validate(&w).unwrap();
        assert!(s.lifetime >= s.stats.initial_lifetime);
        assert!(s.stats.evaluated >= s.stats.accepted);
    }

    #[test]
    fn deterministic() {
        let w = small_workload(6, 3, 3);
        let a = hill_climb_map(&w, &hw(3, 8), &skewed(8), &HillClimbOptions::default(), 11).unwrap();
        let b = hill_climb_map(&w, &hw(3, 8), &skewed(8), &HillClimbOptions::default(), 11).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn solutions_are_valid_and_trace_increases(seed in any::<u64>(), n_clusters in 1usize..7, side in 1usize..4, n in 1usize..5) {
            let w = small_workload(n_clusters, side, seed);
            let m = 2 * side + 1;
            let opts = HillClimbOptions {
                budget: 60,
                patience: 20,
                placement: SolverOptions { budget: 100, restarts: 1 },
                inner_divisor: 5,
            };
            match hill_climb_map(&w, &hw(n, m), &skewed(m), &opts, seed) {
                Ok(s) => {
                    prop_assert!(s.validate(&w).is_ok());
                    for pair in s.stats.accepted_trace.windows(2) {
                        prop_assert!(pair[1] > pair[0]);
                    }
                    prop_assert!(s.lifetime >= s.stats.initial_lifetime);
                    prop_assert_eq!(s.recompute_lifetime(&skewed(m)).unwrap(), s.lifetime);
                }
                Err(e) => prop_assert!(matches!(e, Error::Infeasible(_))),
            }
        }
    }
}
