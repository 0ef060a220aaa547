//! Clustered spiking workloads: the model, file format, and statistics.

mod partition;
mod synthetic;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::device::ResistanceState;
use crate::error::{Error, Result};

pub use partition::{partition_flat, NeuronGraph};
pub use synthetic::{generate_synthetic, SyntheticParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NeuronId(pub u64);

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub u64);

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neuron {
    pub id: NeuronId,
    /// Average spikes emitted per inference frame.
    #[serde(rename = "spikes")]
    pub spikes_per_frame: f64,
}

/// A synapse as it appears in files, before quantization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawSynapse {
    pub pre: NeuronId,
    pub post: NeuronId,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Synapse {
    pub pre: NeuronId,
    pub post: NeuronId,
    pub weight: f64,
    pub state: ResistanceState,
}

/// Min-max quantization of |weight| into the four resistance states.
///
/// Normalized magnitudes below `thresholds[0]` map to HRS, and each further
/// threshold crossed moves one LRS level up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantizer {
    pub thresholds: [f64; 3],
}

impl Default for Quantizer {
    fn default() -> Self {
        Self {
            thresholds: [0.25, 0.5, 0.75],
        }
    }
}

/// Magnitude range the quantizer normalizes against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightRange {
    pub min: f64,
    pub max: f64,
}

impl WeightRange {
    pub fn of<'a>(weights: impl IntoIterator<Item = &'a f64>) -> Option<Self> {
        let mut it = weights.into_iter().map(|w| w.abs());
        let first = it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), w| (lo.min(w), hi.max(w)));
        Some(Self { min, max })
    }
}

impl Quantizer {
    pub fn validate(&self) -> Result<()> {
        let t = self.thresholds;
        if !(0.0 <= t[0] && t[0] <= t[1] && t[1] <= t[2] && t[2] <= 1.0) {
            return Err(Error::Config(format!(
                "quantization thresholds must be ordered within [0, 1], got {t:?}"
            )));
        }
        Ok(())
    }

    pub fn state(&self, weight: f64, range: WeightRange) -> ResistanceState {
        let span = range.max - range.min;
        let x = if span > 0.0 {
            (weight.abs() - range.min) / span
        } else if range.max > 0.0 {
            1.0
        } else {
            0.0
        };
        let level = self.thresholds.iter().filter(|&&t| x >= t).count();
        ResistanceState::from_level(level as u8)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: ClusterId,
    /// Sorted by id.
    pub pre: Vec<Neuron>,
    /// Sorted.
    pub post: Vec<NeuronId>,
    /// Sorted by (pre, post).
    pub synapses: Vec<Synapse>,
}

impl Cluster {
    /// Builds a cluster in canonical (sorted) order and checks its invariants.
    pub fn new(
        id: ClusterId,
        mut pre: Vec<Neuron>,
        mut post: Vec<NeuronId>,
        mut synapses: Vec<Synapse>,
    ) -> Result<Self> {
        pre.sort_by_key(|n| n.id);
        post.sort();
        synapses.sort_by_key(|s| (s.pre, s.post));
        let c = Self {
            id,
            pre,
            post,
            synapses,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let id = self.id;
        if self.pre.is_empty() || self.post.is_empty() {
            return Err(Error::Validation(format!(
                "cluster {id}: needs at least one pre- and one post-synaptic neuron"
            )));
        }
        for w in self.pre.windows(2) {
            if w[0].id >= w[1].id {
                return Err(Error::Validation(format!(
                    "cluster {id}: duplicate or unsorted pre-neuron {}",
                    w[1].id
                )));
            }
        }
        for w in self.post.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Validation(format!(
                    "cluster {id}: duplicate or unsorted post-neuron {}",
                    w[1]
                )));
            }
        }
        for n in &self.pre {
            if !(n.spikes_per_frame.is_finite() && n.spikes_per_frame >= 0.0) {
                return Err(Error::Validation(format!(
                    "cluster {id}: neuron {} has invalid spike rate {}",
                    n.id, n.spikes_per_frame
                )));
            }
        }
        for w in self.synapses.windows(2) {
            if (w[0].pre, w[0].post) >= (w[1].pre, w[1].post) {
                return Err(Error::Validation(format!(
                    "cluster {id}: duplicate synapse ({}, {})",
                    w[1].pre, w[1].post
                )));
            }
        }
        for s in &self.synapses {
            if self.pre_index(s.pre).is_none() {
                return Err(Error::Validation(format!(
                    "cluster {id}: synapse ({}, {}) references missing pre-neuron {}",
                    s.pre, s.post, s.pre
                )));
            }
            if self.post_index(s.post).is_none() {
                return Err(Error::Validation(format!(
                    "cluster {id}: synapse ({}, {}) references missing post-neuron {}",
                    s.pre, s.post, s.post
                )));
            }
            if !s.weight.is_finite() {
                return Err(Error::Validation(format!(
                    "cluster {id}: synapse ({}, {}) has non-finite weight",
                    s.pre, s.post
                )));
            }
        }
        Ok(())
    }

    pub fn pre_index(&self, id: NeuronId) -> Option<usize> {
        self.pre.binary_search_by_key(&id, |n| n.id).ok()
    }

    pub fn post_index(&self, id: NeuronId) -> Option<usize> {
        self.post.binary_search(&id).ok()
    }

    /// Spikes carried by a synapse: those of its pre-neuron.
    pub fn synapse_spikes(&self, s: &Synapse) -> f64 {
        self.pre_index(s.pre)
            .map(|i| self.pre[i].spikes_per_frame)
            .unwrap_or(0.0)
    }

    pub fn total_spikes(&self) -> f64 {
        self.synapses.iter().map(|s| self.synapse_spikes(s)).sum()
    }

    pub fn max_synapse_spikes(&self) -> f64 {
        self.synapses
            .iter()
            .map(|s| self.synapse_spikes(s))
            .fold(0.0, f64::max)
    }

    /// Fits an `m × m` crossbar.
    pub fn fits(&self, m: usize) -> bool {
        self.pre.len() <= m && self.post.len() <= m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameSemantics {
    #[serde(rename = "image")]
    Image,
    #[serde(rename = "500ms-window")]
    Window500ms,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: ClusterId,
    pub dst: ClusterId,
    pub spikes: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub frame_semantics: FrameSemantics,
    pub clusters: Vec<Cluster>,
    pub edges: Vec<Edge>,
    pub quantizer: Quantizer,
}

// File schema.

#[derive(Debug, Serialize, Deserialize)]
struct WorkloadFile {
    frame_semantics: FrameSemantics,
    clusters: Vec<ClusterFile>,
    #[serde(default)]
    edges: Vec<Edge>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClusterFile {
    id: ClusterId,
    pre: Vec<Neuron>,
    post: Vec<PostFile>,
    synapses: Vec<RawSynapse>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PostFile {
    id: NeuronId,
}

/// A cluster as read from a file, before weight quantization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCluster {
    pub id: ClusterId,
    pub pre: Vec<Neuron>,
    pub post: Vec<NeuronId>,
    pub synapses: Vec<RawSynapse>,
}

impl Workload {
    /// Quantizes every synapse against the workload-wide weight range and
    /// validates the result.
    pub fn assemble(
        frame_semantics: FrameSemantics,
        clusters: Vec<RawCluster>,
        edges: Vec<Edge>,
        quantizer: Quantizer,
    ) -> Result<Self> {
        quantizer.validate()?;
        let range = WeightRange::of(clusters.iter().flat_map(|c| c.synapses.iter().map(|s| &s.weight)))
            .unwrap_or(WeightRange { min: 0.0, max: 0.0 });
        let clusters = clusters
            .into_iter()
            .map(|c| {
                let synapses = c
                    .synapses
                    .iter()
                    .map(|s| Synapse {
                        pre: s.pre,
                        post: s.post,
                        weight: s.weight,
                        state: quantizer.state(s.weight, range),
                    })
                    .collect();
                Cluster::new(c.id, c.pre, c.post, synapses)
            })
            .collect::<Result<Vec<_>>>()?;
        let w = Self {
            frame_semantics,
            clusters,
            edges,
            quantizer,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        self.quantizer.validate()?;
        let mut ids = BTreeSet::new();
        for c in &self.clusters {
            c.validate()?;
            if !ids.insert(c.id) {
                return Err(Error::Validation(format!("duplicate cluster id {}", c.id)));
            }
        }
        for e in &self.edges {
            for end in [e.src, e.dst] {
                if !ids.contains(&end) {
                    return Err(Error::Validation(format!(
                        "edge {} -> {} references missing cluster {end}",
                        e.src, e.dst
                    )));
                }
            }
            if !(e.spikes.is_finite() && e.spikes >= 0.0) {
                return Err(Error::Validation(format!(
                    "edge {} -> {} has invalid spike count",
                    e.src, e.dst
                )));
            }
        }
        let range = self.weight_range();
        for c in &self.clusters {
            for s in &c.synapses {
                let expect = self.quantizer.state(s.weight, range);
                if s.state != expect {
                    return Err(Error::Validation(format!(
                        "cluster {}: synapse ({}, {}) is {:?} but its weight quantizes to {expect:?}",
                        c.id, s.pre, s.post, s.state
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn weight_range(&self) -> WeightRange {
        WeightRange::of(self.synapses().map(|(_, s)| &s.weight)).unwrap_or(WeightRange { min: 0.0, max: 0.0 })
    }

    pub fn cluster(&self, id: ClusterId) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.id == id)
    }

    pub fn synapses(&self) -> impl Iterator<Item = (&Cluster, &Synapse)> {
        self.clusters.iter().flat_map(|c| c.synapses.iter().map(move |s| (c, s)))
    }

    pub fn synapse_count(&self) -> usize {
        self.clusters.iter().map(|c| c.synapses.len()).sum()
    }

    pub fn from_json_str(text: &str, path: &Path, quantizer: Quantizer) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let file: WorkloadFile = serde_ignored::deserialize(&mut de, |field| {
            log::warn!("{}: ignoring unknown field `{field}`", path.display());
        })
        .and_then(|f| de.end().map(|_| f))
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        let clusters = file
            .clusters
            .into_iter()
            .map(|c| RawCluster {
                id: c.id,
                pre: c.pre,
                post: c.post.into_iter().map(|p| p.id).collect(),
                synapses: c.synapses,
            })
            .collect();
        Self::assemble(file.frame_semantics, clusters, file.edges, quantizer)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with(path, Quantizer::default())
    }

    pub fn load_with(path: &Path, quantizer: Quantizer) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, path, quantizer)
    }

    pub fn to_json_string(&self) -> String {
        let file = WorkloadFile {
            frame_semantics: self.frame_semantics,
            clusters: self
                .clusters
                .iter()
                .map(|c| ClusterFile {
                    id: c.id,
                    pre: c.pre.clone(),
                    post: c.post.iter().map(|&id| PostFile { id }).collect(),
                    synapses: c
                        .synapses
                        .iter()
                        .map(|s| RawSynapse {
                            pre: s.pre,
                            post: s.post,
                            weight: s.weight,
                        })
                        .collect(),
                })
                .collect(),
            edges: self.edges.clone(),
        };
        serde_json::to_string_pretty(&file).expect("workload serializes") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpikeHistogram {
    pub bins: Vec<HistogramBin>,
    /// Largest per-synapse spike rate observed.
    pub max: f64,
    pub total: usize,
}

impl SpikeHistogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low,bin_high,count\n");
        for b in &self.bins {
            out.push_str(&format!("{:?},{:?},{}\n", b.low, b.high, b.count));
        }
        out
    }
}

/// Equal-width histogram of per-synapse spike rates over `[0, max]`.
pub fn spike_histogram(w: &Workload, bins: usize) -> Result<SpikeHistogram> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let spikes: Vec<f64> = w.synapses().map(|(c, s)| c.synapse_spikes(s)).collect();
    if spikes.is_empty() {
        return Ok(SpikeHistogram {
            bins: Vec::new(),
            max: 0.0,
            total: 0,
        });
    }
    let max = spikes.iter().copied().fold(0.0, f64::max);
    let width = max / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in &spikes {
        let i = if width > 0.0 {
            ((x / width) as usize).min(bins - 1)
        } else {
            bins - 1
        };
        counts[i] += 1;
    }
    let bins = counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            low: width * i as f64,
            high: width * (i + 1) as f64,
            count,
        })
        .collect();
    Ok(SpikeHistogram {
        bins,
        max,
        total: spikes.len(),
    })
}
