use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use super::{ClusterId, Edge, FrameSemantics, Neuron, NeuronId, Quantizer, RawCluster, RawSynapse, Workload};
use crate::error::{Error, Result};

/// Parameters of the synthetic workload generator.
///
/// Pre-neuron spike rates are log-normal, then rescaled so the busiest
/// synapse carries exactly `spike_max` spikes per frame; the long tail gives
/// a handful of critical synapses per workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub n_clusters: usize,
    pub pre_per_cluster: usize,
    pub post_per_cluster: usize,
    /// Probability that a (pre, post) pair carries a synapse.
    pub density: f64,
    pub spike_median: f64,
    pub spike_sigma: f64,
    pub spike_max: f64,
    pub weight_sigma: f64,
    pub seed: u64,
    pub frame_semantics: FrameSemantics,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            n_clusters: 10,
            pre_per_cluster: 16,
            post_per_cluster: 16,
            density: 0.5,
            spike_median: 1.0,
            spike_sigma: 0.8,
            spike_max: 6.42,
            weight_sigma: 1.0,
            seed: 7,
            frame_semantics: FrameSemantics::Image,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.pre_per_cluster == 0 || self.post_per_cluster == 0 {
            return Err(Error::Config("synthetic sizes must be at least 1".into()));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::Config(format!("density must be in (0, 1], got {}", self.density)));
        }
        if !(self.spike_median > 0.0 && self.spike_sigma >= 0.0 && self.spike_max > 0.0) {
            return Err(Error::Config("spike distribution parameters must be positive".into()));
        }
        if !(self.weight_sigma > 0.0) {
            return Err(Error::Config("weight sigma must be positive".into()));
        }
        Ok(())
    }
}

pub fn generate_synthetic(p: &SyntheticParams) -> Result<Workload> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let spikes_dist = LogNormal::new(p.spike_median.ln(), p.spike_sigma)
        .map_err(|e| Error::Config(format!("spike distribution: {e}")))?;
    let weight_dist =
        Normal::new(0.0, p.weight_sigma).map_err(|e| Error::Config(format!("weight distribution: {e}")))?;

    let stride = (p.pre_per_cluster + p.post_per_cluster) as u64;
    let mut clusters = Vec::with_capacity(p.n_clusters);
    for c in 0..p.n_clusters {
        let base = c as u64 * stride;
        let pre: Vec<Neuron> = (0..p.pre_per_cluster)
            .map(|i| Neuron {
                id: NeuronId(base + i as u64),
                spikes_per_frame: spikes_dist.sample(&mut rng),
            })
            .collect();
        let post: Vec<NeuronId> = (0..p.post_per_cluster)
            .map(|j| NeuronId(base + (p.pre_per_cluster + j) as u64))
            .collect();
        let mut synapses = Vec::new();
        for n in &pre {
            for &q in &post {
                if p.density >= 1.0 || rng.random_bool(p.density) {
                    synapses.push(RawSynapse {
                        pre: n.id,
                        post: q,
                        weight: weight_dist.sample(&mut rng),
                    });
                }
            }
        }
        clusters.push(RawCluster {
            id: ClusterId(c as u64),
            pre,
            post,
            synapses,
        });
    }

    // scale against the busiest neuron that actually drives a synapse
    let driving_max = clusters
        .iter()
        .flat_map(|c| {
            c.pre
                .iter()
                .filter(|n| c.synapses.iter().any(|s| s.pre == n.id))
                .map(|n| n.spikes_per_frame)
        })
        .fold(0.0, f64::max);
    let scale = if driving_max > 0.0 {
        p.spike_max / driving_max
    } else {
        1.0
    };
    for c in &mut clusters {
        for n in &mut c.pre {
            n.spikes_per_frame = if n.spikes_per_frame >= driving_max {
                p.spike_max
            } else {
                n.spikes_per_frame * scale
            };
        }
    }

    let edges = (1..clusters.len())
        .map(|c| {
            let src = &clusters[c - 1];
            let mean = src.pre.iter().map(|n| n.spikes_per_frame).sum::<f64>() / src.pre.len() as f64;
            Edge {
                src: src.id,
                dst: clusters[c].id,
                spikes: mean * p.post_per_cluster as f64,
            }
        })
        .collect();

    Workload::assemble(p.frame_semantics, clusters, edges, Quantizer::default())
}
