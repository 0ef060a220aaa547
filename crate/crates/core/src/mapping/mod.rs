//! Assignment of clusters to crossbars.
//!
//! With unlimited hardware every cluster gets its own crossbar. With fewer
//! crossbars than clusters, clusters sharing a crossbar are merged into one
//! larger cluster and placed together; [`hill_climb_map`] searches over
//! which clusters share.

mod file;
mod hill_climb;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossbar::{CrossbarConfig, EnduranceMap};
use crate::error::{Error, Result};
use crate::placement::{optimize_placement, PlacementResult, SolverOptions};
use crate::rng::{set_key, stream_seed};
use crate::workload::{Cluster, ClusterId, NeuronId, Synapse, Workload};

pub use file::{CrossbarRecord, HardwareRecord, SolutionFile};
pub use hill_climb::{hill_climb_map, HillClimbOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardwareConfig {
    pub n_crossbars: usize,
    pub crossbar: CrossbarConfig,
}

impl HardwareConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_crossbars == 0 {
            return Err(Error::Config("hardware needs at least one crossbar".into()));
        }
        self.crossbar.validate()
    }
}

/// Union of two clusters. The result takes the smaller id.
pub fn merge_clusters(a: &Cluster, b: &Cluster) -> Result<Cluster> {
    merge_many(&[a, b])
}

/// Union of any number of clusters; shared neurons and identical synapses
/// appear once.
pub fn merge_many(parts: &[&Cluster]) -> Result<Cluster> {
    let id = parts
        .iter()
        .map(|c| c.id)
        .min()
        .ok_or_else(|| Error::Contract("merge of zero clusters".into()))?;
    let mut pre: BTreeMap<NeuronId, f64> = BTreeMap::new();
    let mut post: BTreeSet<NeuronId> = BTreeSet::new();
    let mut synapses: BTreeMap<(NeuronId, NeuronId), Synapse> = BTreeMap::new();
    for c in parts {
        for n in &c.pre {
            let seen = *pre.entry(n.id).or_insert(n.spikes_per_frame);
            if seen != n.spikes_per_frame {
                return Err(Error::Validation(format!(
                    "neuron {} fires {seen} spikes per frame in one cluster and {} in cluster {}",
                    n.id, n.spikes_per_frame, c.id
                )));
            }
        }
        post.extend(c.post.iter().copied());
        for s in &c.synapses {
            let seen = synapses.entry((s.pre, s.post)).or_insert(*s);
            if seen.weight != s.weight || seen.state != s.state {
                return Err(Error::MergeConflict {
                    pre: s.pre,
                    post: s.post,
                    left: seen.weight,
                    right: s.weight,
                });
            }
        }
    }
    Cluster::new(
        id,
        pre.into_iter()
            .map(|(id, spikes_per_frame)| crate::workload::Neuron { id, spikes_per_frame })
            .collect(),
        post.into_iter().collect(),
        synapses.into_values().collect(),
    )
}

/// Rows and columns the union of `parts` would occupy.
pub fn merged_size(parts: &[&Cluster]) -> (usize, usize) {
    let pre: BTreeSet<_> = parts.iter().flat_map(|c| c.pre.iter().map(|n| n.id)).collect();
    let post: BTreeSet<_> = parts.iter().flat_map(|c| c.post.iter()).collect();
    (pre.len(), post.len())
}

/// Seed of the placement solve for the crossbar holding `ids`.
pub fn crossbar_seed(master: u64, ids: &[ClusterId]) -> u64 {
    let mut raw: Vec<u64> = ids.iter().map(|c| c.0).collect();
    raw.sort_unstable();
    stream_seed(master, set_key(&raw))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarSolution {
    pub crossbar: usize,
    /// Sorted.
    pub clusters: Vec<ClusterId>,
    pub merged: Cluster,
    pub result: PlacementResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    /// Placement problems posed, or neighbor moves proposed when hill climbing.
    pub evaluated: usize,
    pub accepted: usize,
    pub cache_hits: usize,
    #[serde(with = "crate::serde_util::finite_or_null")]
    pub initial_lifetime: f64,
    /// Overall lifetime after the start and after every accepted move.
    #[serde(with = "crate::serde_util::finite_or_null_vec")]
    pub accepted_trace: Vec<f64>,
    /// Seconds; only recorded on request so outputs stay reproducible.
    pub wall_time: Option<f64>,
}

impl Default for SearchStats {
    fn default() -> Self {
        Self {
            evaluated: 0,
            accepted: 0,
            cache_hits: 0,
            initial_lifetime: f64::INFINITY,
            accepted_trace: Vec::new(),
            wall_time: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingSolution {
    pub hardware: HardwareConfig,
    /// One crossbar per cluster was requested rather than a fixed count.
    pub unlimited: bool,
    pub assign: BTreeMap<ClusterId, usize>,
    /// Occupied crossbars in index order.
    pub crossbars: Vec<CrossbarSolution>,
    /// Frames: the least crossbar lifetime.
    pub lifetime: f64,
    pub stats: SearchStats,
}

/// Least of the given lifetimes; infinite when there are none.
pub fn overall_lifetime(lifetimes: impl IntoIterator<Item = f64>) -> f64 {
    lifetimes.into_iter().fold(f64::INFINITY, f64::min)
}

impl MappingSolution {
    /// Builds a solution from per-crossbar results, deriving the assignment
    /// and overall lifetime.
    pub fn assemble(
        hardware: HardwareConfig,
        unlimited: bool,
        mut crossbars: Vec<CrossbarSolution>,
        stats: SearchStats,
    ) -> Self {
        crossbars.sort_by_key(|x| x.crossbar);
        let assign = crossbars
            .iter()
            .flat_map(|x| x.clusters.iter().map(move |&c| (c, x.crossbar)))
            .collect();
        let lifetime = overall_lifetime(crossbars.iter().map(|x| x.result.lifetime));
        Self {
            hardware,
            unlimited,
            assign,
            crossbars,
            lifetime,
            stats,
        }
    }

    /// Checks the solution against `w`: each cluster on exactly one
    /// crossbar, every merged cluster within the crossbar and consistent
    /// with its constituents, every placement injective and in range.
    pub fn validate(&self, w: &Workload) -> Result<()> {
        let m = self.hardware.crossbar.size;
        let known: BTreeSet<ClusterId> = w.clusters.iter().map(|c| c.id).collect();
        let mut seen: BTreeMap<ClusterId, usize> = BTreeMap::new();
        let mut used = BTreeSet::new();
        for x in &self.crossbars {
            if x.crossbar >= self.hardware.n_crossbars {
                return Err(Error::Validation(format!(
                    "crossbar index {} is outside the {} available",
                    x.crossbar, self.hardware.n_crossbars
                )));
            }
            if !used.insert(x.crossbar) {
                return Err(Error::Validation(format!("crossbar {} listed twice", x.crossbar)));
            }
            if x.clusters.is_empty() {
                return Err(Error::Validation(format!("crossbar {} lists no clusters", x.crossbar)));
            }
            for c in &x.clusters {
                if !known.contains(c) {
                    return Err(Error::Validation(format!("crossbar {} holds unknown cluster {c}", x.crossbar)));
                }
                if let Some(other) = seen.insert(*c, x.crossbar) {
                    return Err(Error::Validation(format!(
                        "cluster {c} is assigned to crossbars {other} and {}",
                        x.crossbar
                    )));
                }
                if self.assign.get(c) != Some(&x.crossbar) {
                    return Err(Error::Validation(format!(
                        "cluster {c} sits on crossbar {} but the assignment says otherwise",
                        x.crossbar
                    )));
                }
            }
            let parts: Vec<&Cluster> = x
                .clusters
                .iter()
                .map(|id| w.cluster(*id).expect("checked above"))
                .collect();
            if merge_many(&parts)? != x.merged {
                return Err(Error::Validation(format!(
                    "crossbar {} does not hold the union of its clusters",
                    x.crossbar
                )));
            }
            if !x.merged.fits(m) {
                return Err(Error::Validation(format!(
                    "crossbar {} holds {}×{} neurons but has {m} rows and columns",
                    x.crossbar,
                    x.merged.pre.len(),
                    x.merged.post.len()
                )));
            }
            x.result.placement.validate(&x.merged, m)?;
        }
        if self.assign.len() != seen.len() {
            return Err(Error::Validation("assignment names clusters no crossbar holds".into()));
        }
        if let Some(missing) = known.iter().find(|c| !seen.contains_key(c)) {
            return Err(Error::Validation(format!("cluster {missing} is not assigned to any crossbar")));
        }
        Ok(())
    }

    /// Overall lifetime recomputed from the placements alone.
    pub fn recompute_lifetime(&self, maps: &EnduranceMap) -> Result<f64> {
        let mut lifetimes = Vec::with_capacity(self.crossbars.len());
        for x in &self.crossbars {
            lifetimes.push(crate::placement::lifetime_of_placement(&x.merged, &x.result.placement, maps)?.0);
        }
        Ok(overall_lifetime(lifetimes))
    }
}

fn ensure_fits(w: &Workload, m: usize) -> Result<()> {
    match w.clusters.iter().find(|c| !c.fits(m)) {
        Some(c) => Err(Error::Infeasible(format!(
            "cluster {} has {}×{} neurons and does not fit a {m}×{m} crossbar",
            c.id,
            c.pre.len(),
            c.post.len()
        ))),
        None => Ok(()),
    }
}

/// One cluster per crossbar, each placed independently.
pub fn map_unlimited(
    w: &Workload,
    crossbar: &CrossbarConfig,
    maps: &EnduranceMap,
    opts: SolverOptions,
    seed: u64,
) -> Result<MappingSolution> {
    ensure_fits(w, maps.size())?;
    let crossbars = w
        .clusters
        .par_iter()
        .enumerate()
        .map(|(k, c)| {
            let result = optimize_placement(c, maps, opts, crossbar_seed(seed, &[c.id]))?;
            Ok(CrossbarSolution {
                crossbar: k,
                clusters: vec![c.id],
                merged: c.clone(),
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let stats = SearchStats {
        evaluated: crossbars.len(),
        ..Default::default()
    };
    let hardware = HardwareConfig {
        n_crossbars: w.clusters.len(),
        crossbar: *crossbar,
    };
    let mut solution = MappingSolution::assemble(hardware, true, crossbars, stats);
    solution.stats.initial_lifetime = solution.lifetime;
    Ok(solution)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::device::ResistanceState;
    use crate::workload::{generate_synthetic, Neuron, SyntheticParams};

    pub(crate) fn toy(id: u64, pre: &[(u64, f64)], post: &[u64], syn: &[(u64, u64, f64)]) -> Cluster {
        Cluster::new(
            ClusterId(id),
            pre.iter()
                .map(|&(id, s)| Neuron {
                    id: NeuronId(id),
                    spikes_per_frame: s,
                })
                .collect(),
            post.iter().map(|&p| NeuronId(p)).collect(),
            syn.iter()
                .map(|&(a, b, w)| Synapse {
                    pre: NeuronId(a),
                    post: NeuronId(b),
                    weight: w,
                    state: if w.abs() < 0.5 {
                        ResistanceState::Hrs
                    } else {
                        ResistanceState::Lrs3
                    },
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn merge_is_idempotent() {
        let a = toy(3, &[(1, 2.0), (2, 1.0)], &[10, 11], &[(1, 10, 0.3), (2, 11, 0.9)]);
        assert_eq!(merge_clusters(&a, &a).unwrap(), a);
    }

    #[test]
    fn disjoint_merge_adds_sizes() {
        let a = toy(0, &[(1, 1.0), (2, 1.0)], &[10, 11, 12], &[(1, 10, 0.1), (2, 12, 0.1)]);
        let b = toy(1, &[(3, 1.0), (4, 1.0), (5, 1.0), (6, 1.0)], &[13], &[(3, 13, 0.1)]);
        let m = merge_clusters(&a, &b).unwrap();
        assert_eq!((m.pre.len(), m.post.len(), m.synapses.len()), (6, 4, 3));
        assert_eq!(merged_size(&[&a, &b]), (6, 4));
        assert_eq!(m.id, ClusterId(0));
    }

    #[test]
    fn merge_commutes_and_associates() {
        let a = toy(0, &[(1, 1.0), (2, 3.0)], &[10, 11], &[(1, 10, 0.1), (2, 11, 0.7)]);
        let b = toy(1, &[(2, 3.0), (3, 2.0)], &[11, 12], &[(2, 11, 0.7), (3, 12, 0.2)]);
        let c = toy(2, &[(1, 1.0), (4, 5.0)], &[12, 13], &[(1, 12, 0.4), (4, 13, 0.6)]);
        assert_eq!(merge_clusters(&a, &b).unwrap(), merge_clusters(&b, &a).unwrap());
        let left = merge_clusters(&merge_clusters(&a, &b).unwrap(), &c).unwrap();
        let right = merge_clusters(&a, &merge_clusters(&b, &c).unwrap()).unwrap();
        assert_eq!(left, right);
        assert_eq!(left, merge_many(&[&c, &a, &b]).unwrap());
    }

    #[test]
    fn conflicting_duplicate_synapse() {
        let a = toy(0, &[(1, 1.0)], &[10], &[(1, 10, 0.1)]);
        let b = toy(1, &[(1, 1.0)], &[10], &[(1, 10, 0.2)]);
        assert!(matches!(merge_clusters(&a, &b), Err(Error::MergeConflict { .. })));
    }

    #[test]
    fn unlimited_lifetime_is_min_of_clusters() {
        let w = generate_synthetic(&SyntheticParams {
            pre_per_cluster: 6,
            post_per_cluster: 6,
            ..Default::default()
        })
        .unwrap();
        let cfg = CrossbarConfig {
            size: 8,
            ..Default::default()
        };
        let maps = EnduranceMap {
            hrs: crate::crossbar::Grid::from_fn(8, |k, l| 1000.0 + 37.0 * k as f64 - 11.0 * l as f64),
            lrs: crate::crossbar::Grid::from_fn(8, |k, l| 5000.0 + (k * l) as f64),
        };
        let s = map_unlimited(&w, &cfg, &maps, SolverOptions::default(), 7).unwrap();
        s.validate(&w).unwrap();
        assert_eq!(s.crossbars.len(), 10);
        let mut expect = f64::INFINITY;
        for x in &s.crossbars {
            let (life, _) = crate::placement::lifetime_of_placement(&x.merged, &x.result.placement, &maps).unwrap();
            assert_eq!(life, x.result.lifetime);
            expect = expect.min(life);
        }
        assert_eq!(s.lifetime, expect);
        assert_eq!(s.recompute_lifetime(&maps).unwrap(), s.lifetime);
    }

    #[test]
    fn unlimited_rejects_oversized_cluster() {
        let w = generate_synthetic(&SyntheticParams::default()).unwrap();
        let maps = EnduranceMap::uniform(8, 1.0, 1.0);
        let err = map_unlimited(&w, &CrossbarConfig::default(), &maps, SolverOptions::default(), 0).unwrap_err();
        assert!(matches!(err, Error::Infeasible(ref msg) if msg.contains("cluster 0")));
    }

    #[test]
    fn validation_catches_double_assignment() {
        let w = generate_synthetic(&SyntheticParams {
            n_clusters: 2,
            pre_per_cluster: 3,
            post_per_cluster: 3,
            ..Default::default()
        })
        .unwrap();
        let maps = EnduranceMap::uniform(4, 100.0, 100.0);
        let s = map_unlimited(&w, &CrossbarConfig::default(), &maps, SolverOptions::default(), 1).unwrap();
        let mut bad = s.clone();
        bad.crossbars[1].clusters.push(ClusterId(0));
        assert!(matches!(bad.validate(&w), Err(Error::Validation(_))));
        let mut gone = s.clone();
        gone.crossbars.pop();
        assert!(gone.validate(&w).is_err());
    }
}
