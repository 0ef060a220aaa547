use std::collections::{BTreeMap, BTreeSet};

use super::{ClusterId, FrameSemantics, Neuron, NeuronId, Quantizer, RawCluster, RawSynapse, Workload};
use crate::error::{Error, Result};

/// An unclustered network: neurons with spike rates and directed synapses.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeuronGraph {
    pub neurons: Vec<Neuron>,
    pub synapses: Vec<RawSynapse>,
}

/// Greedy first-fit packing of post-synaptic neurons into crossbar-sized
/// clusters.
///
/// Post-neurons are visited in id order, each bringing its fan-in. A cluster
/// is closed when the next post-neuron would push it past `m` rows or
/// columns. A pre-neuron may appear in several clusters.
pub fn partition_flat(graph: &NeuronGraph, m: usize, frame: FrameSemantics) -> Result<Workload> {
    if m == 0 {
        return Err(Error::Config("crossbar size must be at least 1".into()));
    }
    let spikes: BTreeMap<NeuronId, f64> = graph.neurons.iter().map(|n| (n.id, n.spikes_per_frame)).collect();
    let mut fan_in: BTreeMap<NeuronId, Vec<RawSynapse>> = BTreeMap::new();
    for s in &graph.synapses {
        for end in [s.pre, s.post] {
            if !spikes.contains_key(&end) {
                return Err(Error::Validation(format!(
                    "synapse ({}, {}) references unknown neuron {end}",
                    s.pre, s.post
                )));
            }
        }
        fan_in.entry(s.post).or_default().push(*s);
    }
    for (post, inputs) in &fan_in {
        let distinct: BTreeSet<_> = inputs.iter().map(|s| s.pre).collect();
        if distinct.len() > m {
            return Err(Error::Infeasible(format!(
                "neuron {post} has fan-in {} which exceeds crossbar size {m}",
                distinct.len()
            )));
        }
    }

    let mut clusters = Vec::new();
    let mut pre: BTreeSet<NeuronId> = BTreeSet::new();
    let mut post: Vec<NeuronId> = Vec::new();
    let mut syn: Vec<RawSynapse> = Vec::new();

    let mut close = |pre: &mut BTreeSet<NeuronId>, post: &mut Vec<NeuronId>, syn: &mut Vec<RawSynapse>| {
        if post.is_empty() {
            return;
        }
        clusters.push(RawCluster {
            id: ClusterId(clusters.len() as u64),
            pre: pre
                .iter()
                .map(|&id| Neuron {
                    id,
                    spikes_per_frame: spikes[&id],
                })
                .collect(),
            post: std::mem::take(post),
            synapses: std::mem::take(syn),
        });
        pre.clear();
    };

    for (&target, inputs) in &fan_in {
        let added = inputs.iter().filter(|s| !pre.contains(&s.pre)).map(|s| s.pre).collect::<BTreeSet<_>>();
        if post.len() + 1 > m || pre.len() + added.len() > m {
            close(&mut pre, &mut post, &mut syn);
        }
        pre.extend(inputs.iter().map(|s| s.pre));
        post.push(target);
        syn.extend(inputs.iter().copied());
    }
    close(&mut pre, &mut post, &mut syn);

    Workload::assemble(frame, clusters, Vec::new(), Quantizer::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain(n: usize) -> NeuronGraph {
        NeuronGraph {
            neurons: (0..n)
                .map(|i| Neuron {
                    id: NeuronId(i as u64),
                    spikes_per_frame: 1.0 + i as f64,
                })
                .collect(),
            synapses: (1..n)
                .map(|i| RawSynapse {
                    pre: NeuronId(i as u64 - 1),
                    post: NeuronId(i as u64),
                    weight: 0.5,
                })
                .collect(),
        }
    }

    #[test]
    fn small_graph_is_one_cluster() {
        let w = partition_flat(&chain(5), 8, FrameSemantics::Image).unwrap();
        assert_eq!(w.clusters.len(), 1);
        assert_eq!(w.synapse_count(), 4);
    }

    #[test]
    fn long_chain_needs_several_clusters() {
        let m = 6;
        let w = partition_flat(&chain(2 * m), m, FrameSemantics::Image).unwrap();
        assert!(w.clusters.len() >= 2);
    }

    #[test]
    fn oversized_fan_in_is_infeasible() {
        let mut g = chain(2);
        for i in 2..10 {
            g.neurons.push(Neuron {
                id: NeuronId(i),
                spikes_per_frame: 0.0,
            });
            g.synapses.push(RawSynapse {
                pre: NeuronId(i),
                post: NeuronId(1),
                weight: 1.0,
            });
        }
        let err = partition_flat(&g, 4, FrameSemantics::Image).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn random_graphs_respect_size_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.random_range(2..60);
            let m = rng.random_range(3..10);
            let neurons: Vec<Neuron> = (0..n)
                .map(|i| Neuron {
                    id: NeuronId(i),
                    spikes_per_frame: rng.random_range(0.0..5.0),
                })
                .collect();
            let mut synapses = Vec::new();
            for post in 0..n {
                let mut pres = BTreeSet::new();
                for _ in 0..rng.random_range(0..m) {
                    pres.insert(rng.random_range(0..n));
                }
                for pre in pres {
                    synapses.push(RawSynapse {
                        pre: NeuronId(pre),
                        post: NeuronId(post),
                        weight: rng.random_range(-1.0..1.0),
                    });
                }
            }
            let total = synapses.len();
            let w = partition_flat(&NeuronGraph { neurons, synapses }, m as usize, FrameSemantics::Image).unwrap();
            assert_eq!(w.synapse_count(), total);
            for c in &w.clusters {
                assert!(c.fits(m as usize));
            }
        }
    }
}
