//! Placement of one cluster's neurons onto the rows and columns of a
//! crossbar so that its worst synapse lasts as long as possible.
//!
//! A synapse on cell (k, l) lasts `E_{k,l}(state) / spikes` frames. The
//! cluster lasts as long as its shortest-lived synapse, and the placement
//! problem is to maximize that minimum over injective row and column
//! assignments.

mod brute;
mod search;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crossbar::EnduranceMap;
use crate::device::ResistanceState;
use crate::error::{Error, Result};
use crate::workload::{Cluster, ClusterId, NeuronId};

pub use brute::{brute_force_place, BRUTE_FORCE_LIMIT};
pub use search::{greedy_seed, optimize_placement, random_placement, SolverOptions};

/// Frames a synapse survives on a cell; infinite if it never fires.
pub fn synapse_lifetime(
    state: ResistanceState,
    spikes: f64,
    row: usize,
    col: usize,
    maps: &EnduranceMap,
) -> f64 {
    if spikes <= 0.0 {
        return f64::INFINITY;
    }
    maps.get(state, row, col) / spikes
}

/// HRS-equivalent spike count of a synapse on a cell.
///
/// An LRS synapse firing `spikes` times wears its cell as fast as an HRS
/// synapse firing `spikes · E(HRS) / E(LRS)` times would.
pub fn equivalent_spikes(state: ResistanceState, spikes: f64, row: usize, col: usize, maps: &EnduranceMap) -> f64 {
    if state.is_hrs() {
        spikes
    } else {
        spikes * maps.hrs.get(row, col) / maps.lrs.get(row, col)
    }
}

/// Row and column of every neuron of one cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub row_of: BTreeMap<NeuronId, usize>,
    pub col_of: BTreeMap<NeuronId, usize>,
}

impl Placement {
    /// Checks both assignment constraints against `cluster` on an `m × m` crossbar.
    pub fn validate(&self, cluster: &Cluster, m: usize) -> Result<()> {
        let side = |name: &str, map: &BTreeMap<NeuronId, usize>, ids: &mut dyn Iterator<Item = NeuronId>| {
            let mut used = vec![false; m];
            let mut count = 0;
            for id in ids {
                count += 1;
                let port = *map.get(&id).ok_or_else(|| {
                    Error::Contract(format!("cluster {}: {name}-neuron {id} is not placed", cluster.id))
                })?;
                if port >= m {
                    return Err(Error::Contract(format!(
                        "cluster {}: {name}-neuron {id} placed on port {port} of a {m}-port crossbar",
                        cluster.id
                    )));
                }
                if std::mem::replace(&mut used[port], true) {
                    return Err(Error::Contract(format!(
                        "cluster {}: two {name}-neurons share port {port}",
                        cluster.id
                    )));
                }
            }
            if map.len() != count {
                return Err(Error::Contract(format!(
                    "cluster {}: placement names {name}-neurons outside the cluster",
                    cluster.id
                )));
            }
            Ok(())
        };
        side("pre", &self.row_of, &mut cluster.pre.iter().map(|n| n.id))?;
        side("post", &self.col_of, &mut cluster.post.iter().copied())?;
        Ok(())
    }

    pub(crate) fn from_dense(cluster: &Cluster, a: &Assignment) -> Self {
        Self {
            row_of: cluster.pre.iter().map(|n| n.id).zip(a.rows.iter().copied()).collect(),
            col_of: cluster.post.iter().copied().zip(a.cols.iter().copied()).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverStats {
    pub iterations: usize,
    pub restarts: usize,
    pub accepted: usize,
    pub oracle_used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementResult {
    pub placement: Placement,
    /// Frames; infinite when no synapse ever fires.
    #[serde(with = "crate::serde_util::finite_or_null")]
    pub lifetime: f64,
    pub limiting_synapse: Option<(NeuronId, NeuronId)>,
    pub stats: SolverStats,
}

/// Lifetime of a cluster under a placement, with the synapse that limits it.
pub fn lifetime_of_placement(
    cluster: &Cluster,
    placement: &Placement,
    maps: &EnduranceMap,
) -> Result<(f64, Option<(NeuronId, NeuronId)>)> {
    placement.validate(cluster, maps.size())?;
    let mut best = f64::INFINITY;
    let mut limiting = None;
    for s in &cluster.synapses {
        let life = synapse_lifetime(
            s.state,
            cluster.synapse_spikes(s),
            placement.row_of[&s.pre],
            placement.col_of[&s.post],
            maps,
        );
        if life < best {
            best = life;
            limiting = Some((s.pre, s.post));
        }
    }
    Ok((best, limiting))
}

/// Placement JSON record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub cluster_id: ClusterId,
    pub rows: BTreeMap<NeuronId, usize>,
    pub cols: BTreeMap<NeuronId, usize>,
    #[serde(with = "crate::serde_util::finite_or_null")]
    pub lifetime: f64,
    pub limiting_synapse: Option<(NeuronId, NeuronId)>,
}

impl PlacementRecord {
    pub fn new(cluster_id: ClusterId, r: &PlacementResult) -> Self {
        Self {
            cluster_id,
            rows: r.placement.row_of.clone(),
            cols: r.placement.col_of.clone(),
            lifetime: r.lifetime,
            limiting_synapse: r.limiting_synapse,
        }
    }
}

/// Dense assignment: port of the i-th pre-neuron and j-th post-neuron in
/// cluster order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct Assignment {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

/// A cluster flattened against one set of endurance maps.
pub(crate) struct Problem<'a> {
    pub m: usize,
    pub n_pre: usize,
    pub n_post: usize,
    /// (pre index, post index, spikes, state) in cluster order.
    pub synapses: Vec<(usize, usize, f64, ResistanceState)>,
    pub maps: &'a EnduranceMap,
}

impl<'a> Problem<'a> {
    pub fn new(cluster: &Cluster, maps: &'a EnduranceMap) -> Result<Self> {
        let m = maps.size();
        if !cluster.fits(m) {
            return Err(Error::Infeasible(format!(
                "cluster {} has {}×{} neurons but the crossbar is {m}×{m}",
                cluster.id,
                cluster.pre.len(),
                cluster.post.len()
            )));
        }
        let synapses = cluster
            .synapses
            .iter()
            .map(|s| {
                let i = cluster.pre_index(s.pre).expect("validated cluster");
                let j = cluster.post_index(s.post).expect("validated cluster");
                (i, j, cluster.pre[i].spikes_per_frame, s.state)
            })
            .collect();
        Ok(Self {
            m,
            n_pre: cluster.pre.len(),
            n_post: cluster.post.len(),
            synapses,
            maps,
        })
    }

    #[inline]
    pub fn lifetime_of(&self, idx: usize, a: &Assignment) -> f64 {
        let (i, j, spk, state) = self.synapses[idx];
        synapse_lifetime(state, spk, a.rows[i], a.cols[j], self.maps)
    }

    /// Minimum lifetime and the index of the first synapse attaining it.
    pub fn min_lifetime(&self, a: &Assignment) -> (f64, Option<usize>) {
        let mut best = f64::INFINITY;
        let mut at = None;
        for idx in 0..self.synapses.len() {
            let life = self.lifetime_of(idx, a);
            if life < best {
                best = life;
                at = Some(idx);
            }
        }
        (best, at)
    }

    /// All synapse lifetimes, ascending: the leximin score of an assignment.
    pub fn sorted_lifetimes(&self, a: &Assignment, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.synapses.len()).map(|idx| self.lifetime_of(idx, a)));
        out.sort_unstable_by(f64::total_cmp);
    }
}

/// Lexicographic comparison of ascending lifetime vectors.
pub(crate) fn leximin_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

pub(crate) fn result_from(
    cluster: &Cluster,
    problem: &Problem<'_>,
    a: &Assignment,
    stats: SolverStats,
) -> PlacementResult {
    let (lifetime, at) = problem.min_lifetime(a);
    let limiting_synapse = at.map(|idx| {
        let s = &cluster.synapses[idx];
        (s.pre, s.post)
    });
    PlacementResult {
        placement: Placement::from_dense(cluster, a),
        lifetime,
        limiting_synapse,
        stats,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossbar::Grid;
    use crate::device::ResistanceState::*;
    use crate::workload::{Neuron, Synapse};

    pub(crate) fn cluster(pre_spikes: &[f64], n_post: usize, syn: &[(usize, usize, ResistanceState)]) -> Cluster {
        let pre = pre_spikes
            .iter()
            .enumerate()
            .map(|(i, &s)| Neuron {
                id: NeuronId(i as u64),
                spikes_per_frame: s,
            })
            .collect();
        let post = (0..n_post).map(|j| NeuronId(100 + j as u64)).collect();
        let synapses = syn
            .iter()
            .map(|&(i, j, state)| Synapse {
                pre: NeuronId(i as u64),
                post: NeuronId(100 + j as u64),
                weight: 1.0,
                state,
            })
            .collect();
        Cluster::new(ClusterId(0), pre, post, synapses).unwrap()
    }

    fn placement(rows: &[usize], cols: &[usize]) -> Placement {
        Placement {
            row_of: rows.iter().enumerate().map(|(i, &k)| (NeuronId(i as u64), k)).collect(),
            col_of: cols.iter().enumerate().map(|(j, &l)| (NeuronId(100 + j as u64), l)).collect(),
        }
    }

    #[test]
    fn synapse_lifetime_examples() {
        let maps = EnduranceMap::uniform(1, 5000.0, 1000.0);
        assert_eq!(synapse_lifetime(Hrs, 0.0, 0, 0, &maps), f64::INFINITY);
        let life = synapse_lifetime(Hrs, 6.42, 0, 0, &maps);
        assert!((life - 778.0).abs() < 1.0, "{life}");
        let lrs = synapse_lifetime(Lrs2, 10.0, 0, 0, &maps);
        assert_eq!(lrs, 100.0);
        let eq = equivalent_spikes(Lrs2, 10.0, 0, 0, &maps);
        assert!((maps.hrs.get(0, 0) / eq - 100.0).abs() < 1e-12);
    }

    #[test]
    fn single_synapse_cluster() {
        let c = cluster(&[2.0], 1, &[(0, 0, Hrs)]);
        let maps = EnduranceMap {
            hrs: Grid::from_rows(vec![vec![10.0, 20.0], vec![30.0, 40.0]]).unwrap(),
            lrs: Grid::filled(2, 100.0),
        };
        let (life, lim) = lifetime_of_placement(&c, &placement(&[1], &[0]), &maps).unwrap();
        assert_eq!(life, 15.0);
        assert_eq!(lim, Some((NeuronId(0), NeuronId(100))));
    }

    #[test]
    fn uniform_maps_make_placement_irrelevant() {
        let c = cluster(&[1.0, 4.0, 2.0], 2, &[(0, 0, Hrs), (1, 1, Hrs), (2, 0, Hrs), (1, 0, Hrs)]);
        let maps = EnduranceMap::uniform(4, 800.0, 2000.0);
        for (rows, cols) in [([0, 1, 2], [0, 1]), ([3, 0, 1], [2, 3]), ([2, 3, 0], [1, 0])] {
            let (life, _) = lifetime_of_placement(&c, &placement(&rows, &cols), &maps).unwrap();
            assert_eq!(life, 200.0);
        }
    }

    #[test]
    fn two_by_two_by_hand() {
        // HRS grid [[1,2],[3,4]] ×100, pre spikes 1 and 2, full 2×2 cluster.
        let c = cluster(&[1.0, 2.0], 2, &[(0, 0, Hrs), (0, 1, Hrs), (1, 0, Hrs), (1, 1, Hrs)]);
        let maps = EnduranceMap {
            hrs: Grid::from_rows(vec![vec![100.0, 200.0], vec![300.0, 400.0]]).unwrap(),
            lrs: Grid::filled(2, 1e9),
        };
        // rows (pre0→0, pre1→1): pre1 sits on {300, 400}/2 → 150, pre0 on {100, 200}/1 → 100
        // rows (pre0→1, pre1→0): pre1 on {100, 200}/2 → 50, pre0 on {300, 400} → 300
        // columns only permute within a row, leaving each row's minimum unchanged
        let cases = [([0, 1], [0, 1], 100.0), ([0, 1], [1, 0], 100.0), ([1, 0], [0, 1], 50.0), ([1, 0], [1, 0], 50.0)];
        for (rows, cols, expect) in cases {
            let (life, _) = lifetime_of_placement(&c, &placement(&rows, &cols), &maps).unwrap();
            assert_eq!(life, expect, "rows {rows:?} cols {cols:?}");
        }
    }

    #[test]
    fn invalid_placements_rejected() {
        let c = cluster(&[1.0, 1.0], 1, &[(0, 0, Hrs)]);
        let maps = EnduranceMap::uniform(3, 1.0, 1.0);
        let missing = Placement {
            row_of: [(NeuronId(0), 0)].into_iter().collect(),
            col_of: [(NeuronId(100), 0)].into_iter().collect(),
        };
        assert!(matches!(lifetime_of_placement(&c, &missing, &maps), Err(Error::Contract(_))));
        assert!(lifetime_of_placement(&c, &placement(&[1, 1], &[0]), &maps).is_err());
        assert!(lifetime_of_placement(&c, &placement(&[0, 3], &[0]), &maps).is_err());
    }

    #[test]
    fn leximin_ordering() {
        assert_eq!(leximin_cmp(&[1.0, 2.0], &[1.0, 3.0]), Ordering::Less);
        assert_eq!(leximin_cmp(&[2.0, 2.0], &[1.0, 9.0]), Ordering::Greater);
        assert_eq!(leximin_cmp(&[f64::INFINITY], &[f64::INFINITY]), Ordering::Equal);
    }
}
