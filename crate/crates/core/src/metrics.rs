//! Figures of merit for a mapping: lifetime, spike propagation delay and
//! average cell voltage, plus a random-placement baseline to compare against.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossbar::{CrossbarMaps, DelayMap, EnduranceMap};
use crate::error::{Error, Result};
use crate::mapping::{merge_many, CrossbarSolution, HardwareConfig, MappingSolution, SearchStats};
use crate::placement::{lifetime_of_placement, random_placement, synapse_lifetime, Placement, PlacementResult, SolverStats};
use crate::rng::{stream_rng, stream_seed};
use crate::workload::{Cluster, ClusterId, Synapse, Workload};

const BASELINE_STREAM: u64 = u64::MAX - 1;

fn cell_of(p: &Placement, s: &Synapse) -> Result<(usize, usize)> {
    match (p.row_of.get(&s.pre), p.col_of.get(&s.post)) {
        (Some(&k), Some(&l)) => Ok((k, l)),
        _ => Err(Error::Contract(format!("synapse ({}, {}) is not placed", s.pre, s.post))),
    }
}

/// Milliseconds for a spike to cross the synapse's cell.
pub fn synapse_delay(p: &Placement, s: &Synapse, d: &DelayMap) -> Result<f64> {
    let (k, l) = cell_of(p, s)?;
    Ok(d.grid.get(k, l))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterDelay {
    /// Milliseconds.
    pub delay: f64,
    /// No synapse carries spikes, so the mean is unweighted.
    pub unweighted: bool,
}

/// Spike-weighted mean synapse delay of a cluster.
///
/// A cluster whose synapses carry no spikes falls back to the plain mean,
/// and one without synapses has zero delay; both set `unweighted`.
pub fn cluster_delay(c: &Cluster, p: &Placement, d: &DelayMap) -> Result<ClusterDelay> {
    let mut weighted = 0.0;
    let mut plain = 0.0;
    let mut spikes = 0.0;
    for s in &c.synapses {
        let delay = synapse_delay(p, s, d)?;
        let spk = c.synapse_spikes(s);
        weighted += spk * delay;
        plain += delay;
        spikes += spk;
    }
    Ok(if spikes > 0.0 {
        ClusterDelay {
            delay: weighted / spikes,
            unweighted: false,
        }
    } else {
        ClusterDelay {
            delay: if c.synapses.is_empty() { 0.0 } else { plain / c.synapses.len() as f64 },
            unweighted: true,
        }
    })
}

/// The placement that holds cluster `id` within `sol`.
fn placement_of(sol: &MappingSolution, id: ClusterId) -> Result<&CrossbarSolution> {
    let x = sol
        .assign
        .get(&id)
        .ok_or_else(|| Error::Contract(format!("cluster {id} is not assigned")))?;
    sol.crossbars
        .iter()
        .find(|c| c.crossbar == *x)
        .ok_or_else(|| Error::Contract(format!("crossbar {x} of cluster {id} has no placement")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareDelay {
    /// Milliseconds.
    pub delay: f64,
    pub per_cluster: Vec<(ClusterId, ClusterDelay)>,
    /// No cluster carries spikes, so clusters were averaged without weights.
    pub unweighted: bool,
}

/// Mean of the cluster delays weighted by each cluster's total synapse spikes.
pub fn hardware_delay(w: &Workload, sol: &MappingSolution, d: &DelayMap) -> Result<HardwareDelay> {
    let mut per_cluster = Vec::with_capacity(w.clusters.len());
    let (mut num, mut den, mut plain) = (0.0, 0.0, 0.0);
    for c in &w.clusters {
        let x = placement_of(sol, c.id)?;
        let cd = cluster_delay(c, &x.result.placement, d)?;
        let weight = c.total_spikes();
        num += weight * cd.delay;
        den += weight;
        plain += cd.delay;
        per_cluster.push((c.id, cd));
    }
    let (delay, unweighted) = if den > 0.0 {
        (num / den, false)
    } else if per_cluster.is_empty() {
        (0.0, true)
    } else {
        (plain / per_cluster.len() as f64, true)
    };
    Ok(HardwareDelay {
        delay,
        per_cluster,
        unweighted,
    })
}

/// Spike-weighted mean delay over every synapse of every cluster.
pub fn flat_delay(w: &Workload, sol: &MappingSolution, d: &DelayMap) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for c in &w.clusters {
        let x = placement_of(sol, c.id)?;
        for s in &c.synapses {
            let spk = c.synapse_spikes(s);
            num += spk * synapse_delay(&x.result.placement, s, d)?;
            den += spk;
        }
    }
    Ok(num / den)
}

/// Mean uniform-programming voltage over the occupied cells of every
/// crossbar, without spike weighting. `None` when no cell is occupied.
pub fn average_rram_voltage(sol: &MappingSolution, maps: &CrossbarMaps) -> Result<Option<f64>> {
    let (mut sum, mut count) = (0.0, 0usize);
    for x in &sol.crossbars {
        for s in &x.merged.synapses {
            let (k, l) = cell_of(&x.result.placement, s)?;
            sum += maps.voltage(s.state, k, l);
            count += 1;
        }
    }
    Ok((count > 0).then(|| sum / count as f64))
}

/// Lifetime of one original cluster inside its crossbar's placement.
pub fn cluster_lifetime(c: &Cluster, p: &Placement, maps: &EnduranceMap) -> Result<f64> {
    let mut best = f64::INFINITY;
    for s in &c.synapses {
        let (k, l) = cell_of(p, s)?;
        best = best.min(synapse_lifetime(s.state, c.synapse_spikes(s), k, l, maps));
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    #[serde(with = "crate::serde_util::finite_or_null")]
    pub q1: f64,
    #[serde(with = "crate::serde_util::finite_or_null")]
    pub median: f64,
    #[serde(with = "crate::serde_util::finite_or_null")]
    pub q3: f64,
}

/// Linearly interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let (a, b) = (sorted[lo], sorted[hi]);
    let frac = pos - lo as f64;
    if lo == hi || a == b || frac == 0.0 {
        a
    } else if a.is_finite() && b.is_finite() {
        a + (b - a) * frac
    } else {
        b
    }
}

impl Quartiles {
    /// Quartiles of a non-empty sample.
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
        }
    }
}

/// A mapping with round-robin cluster assignment and uniformly random
/// placements.
pub fn random_solution(
    w: &Workload,
    hw: &HardwareConfig,
    unlimited: bool,
    maps: &EnduranceMap,
    rng: &mut impl Rng,
) -> Result<MappingSolution> {
    let n = if unlimited { w.clusters.len().max(1) } else { hw.n_crossbars };
    let mut bins: Vec<Vec<&Cluster>> = vec![Vec::new(); n];
    for (i, c) in w.clusters.iter().enumerate() {
        bins[i % n].push(c);
    }
    let mut crossbars = Vec::new();
    for (b, parts) in bins.iter().enumerate().filter(|(_, p)| !p.is_empty()) {
        let merged = merge_many(parts)?;
        if !merged.fits(maps.size()) {
            return Err(Error::Infeasible(format!(
                "round-robin puts {}×{} neurons on crossbar {b} of size {}",
                merged.pre.len(),
                merged.post.len(),
                maps.size()
            )));
        }
        let placement = random_placement(&merged, maps, rng)?;
        let (lifetime, limiting_synapse) = lifetime_of_placement(&merged, &placement, maps)?;
        let mut clusters: Vec<ClusterId> = parts.iter().map(|c| c.id).collect();
        clusters.sort();
        crossbars.push(CrossbarSolution {
            crossbar: b,
            clusters,
            merged,
            result: PlacementResult {
                placement,
                lifetime,
                limiting_synapse,
                stats: SolverStats::default(),
            },
        });
    }
    let hardware = HardwareConfig {
        n_crossbars: n,
        crossbar: hw.crossbar,
    };
    Ok(MappingSolution::assemble(hardware, unlimited, crossbars, SearchStats::default()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSample {
    #[serde(with = "crate::serde_util::finite_or_null")]
    pub lifetime: f64,
    pub hardware_delay: f64,
    pub avg_rram_voltage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub n_seeds: usize,
    pub lifetime: Quartiles,
    pub hardware_delay: Quartiles,
    pub avg_rram_voltage: Option<Quartiles>,
}

/// Metrics of `n_seeds` random mappings; sample `s` draws from its own
/// stream so the result does not depend on thread scheduling.
pub fn random_baseline(
    w: &Workload,
    hw: &HardwareConfig,
    unlimited: bool,
    maps: &CrossbarMaps,
    n_seeds: usize,
    seed: u64,
) -> Result<(BaselineSummary, Vec<BaselineSample>)> {
    if n_seeds == 0 {
        return Err(Error::Config("baseline needs at least one seed".into()));
    }
    let base = stream_seed(seed, BASELINE_STREAM);
    let samples = (0..n_seeds)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream_rng(base, s as u64);
            let sol = random_solution(w, hw, unlimited, &maps.endurance, &mut rng)?;
            Ok(BaselineSample {
                lifetime: sol.lifetime,
                hardware_delay: hardware_delay(w, &sol, &maps.delay)?.delay,
                avg_rram_voltage: average_rram_voltage(&sol, maps)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pick = |f: fn(&BaselineSample) -> f64| Quartiles::of(&samples.iter().map(f).collect::<Vec<_>>());
    let voltages: Option<Vec<f64>> = samples.iter().map(|s| s.avg_rram_voltage).collect();
    let summary = BaselineSummary {
        n_seeds,
        lifetime: pick(|s| s.lifetime),
        hardware_delay: pick(|s| s.hardware_delay),
        avg_rram_voltage: voltages.map(|v| Quartiles::of(&v)),
    };
    Ok((summary, samples))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub cluster: ClusterId,
    pub crossbar: usize,
    #[serde(with = "crate::serde_util::finite_or_null")]
    pub lifetime: f64,
    pub delay: f64,
    pub total_spikes: f64,
    pub unweighted_delay: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub lifetime: Option<f64>,
    pub hardware_delay: Option<f64>,
    pub avg_rram_voltage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(with = "crate::serde_util::finite_or_null")]
    pub overall_lifetime: f64,
    pub hardware_delay: f64,
    pub unweighted_delay: bool,
    pub avg_rram_voltage: Option<f64>,
    pub crossbars_used: usize,
    pub per_cluster: Vec<ClusterReport>,
    pub baseline: Option<BaselineSummary>,
    pub ratios: Option<Ratios>,
}

fn ratio(value: f64, median: f64) -> Option<f64> {
    let r = value / median;
    r.is_finite().then_some(r)
}

/// Metrics of a solution. The solution is validated against `w` first.
pub fn evaluate(w: &Workload, sol: &MappingSolution, maps: &CrossbarMaps) -> Result<EvaluationReport> {
    sol.validate(w)?;
    let hd = hardware_delay(w, sol, &maps.delay)?;
    let mut per_cluster = Vec::with_capacity(w.clusters.len());
    for (c, (_, cd)) in w.clusters.iter().zip(&hd.per_cluster) {
        let x = placement_of(sol, c.id)?;
        per_cluster.push(ClusterReport {
            cluster: c.id,
            crossbar: x.crossbar,
            lifetime: cluster_lifetime(c, &x.result.placement, &maps.endurance)?,
            delay: cd.delay,
            total_spikes: c.total_spikes(),
            unweighted_delay: cd.unweighted,
        });
    }
    Ok(EvaluationReport {
        overall_lifetime: sol.recompute_lifetime(&maps.endurance)?,
        hardware_delay: hd.delay,
        unweighted_delay: hd.unweighted,
        avg_rram_voltage: average_rram_voltage(sol, maps)?,
        crossbars_used: sol.crossbars.len(),
        per_cluster,
        baseline: None,
        ratios: None,
    })
}

impl EvaluationReport {
    /// Attaches a baseline and the this-over-median ratios.
    pub fn with_baseline(mut self, b: BaselineSummary) -> Self {
        self.ratios = Some(Ratios {
            lifetime: ratio(self.overall_lifetime, b.lifetime.median),
            hardware_delay: ratio(self.hardware_delay, b.hardware_delay.median),
            avg_rram_voltage: match (self.avg_rram_voltage, b.avg_rram_voltage) {
                (Some(v), Some(q)) => ratio(v, q.median),
                _ => None,
            },
        });
        self.baseline = Some(b);
        self
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// One row per headline metric: `name,value,baseline_median,ratio`.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        let b = self.baseline.as_ref();
        let r = self.ratios.as_ref();
        let rows = [
            (
                "overall_lifetime",
                Some(self.overall_lifetime),
                b.map(|b| b.lifetime.median),
                r.and_then(|r| r.lifetime),
            ),
            (
                "hardware_delay",
                Some(self.hardware_delay),
                b.map(|b| b.hardware_delay.median),
                r.and_then(|r| r.hardware_delay),
            ),
            (
                "avg_rram_voltage",
                self.avg_rram_voltage,
                b.and_then(|b| b.avg_rram_voltage.map(|q| q.median)),
                r.and_then(|r| r.avg_rram_voltage),
            ),
        ];
        let mut out = String::from("name,value,baseline_median,ratio\n");
        for (name, v, m, q) in rows {
            let _ = writeln!(out, "{name},{},{},{}", cell(v), cell(m), cell(q));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossbar::{build_delay_map, CrossbarConfig, Grid, VoltageMap};
    use crate::mapping::map_unlimited;
    use crate::placement::SolverOptions;
    use crate::workload::{generate_synthetic, NeuronId, SyntheticParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn maps_for(m: usize) -> CrossbarMaps {
        let cfg = CrossbarConfig {
            size: m,
            ..Default::default()
        };
        CrossbarMaps {
            voltage_hrs: VoltageMap {
                grid: Grid::from_fn(m, |k, l| 0.5 + 0.01 * k as f64 - 0.005 * l as f64),
                drive: 1.0,
            },
            voltage_lrs: VoltageMap {
                grid: Grid::from_fn(m, |k, l| 0.4 + 0.01 * k as f64 - 0.004 * l as f64),
                drive: 1.0,
            },
            endurance: EnduranceMap {
                hrs: Grid::from_fn(m, |k, l| 300.0 + 17.0 * ((k * 5 + l) % 7) as f64 - 3.0 * k as f64),
                lrs: Grid::from_fn(m, |k, l| 2000.0 + 11.0 * ((k + 3 * l) % 5) as f64),
            },
            delay: build_delay_map(&cfg),
        }
    }

    fn placement(pairs_rows: &[(u64, usize)], pairs_cols: &[(u64, usize)]) -> Placement {
        Placement {
            row_of: pairs_rows.iter().map(|&(n, k)| (NeuronId(n), k)).collect(),
            col_of: pairs_cols.iter().map(|&(n, l)| (NeuronId(n), l)).collect(),
        }
    }

    #[test]
    fn weighted_cluster_delay() {
        let c = crate::mapping::tests::toy(0, &[(1, 1.0), (2, 3.0)], &[10], &[(1, 10, 0.1), (2, 10, 0.1)]);
        let d = DelayMap {
            grid: Grid::from_rows(vec![vec![0.1, 0.3], vec![0.2, 0.4]]).unwrap(),
            base_delay: 0.1,
            per_segment_delay: 0.1,
        };
        let p = placement(&[(1, 0), (2, 1)], &[(10, 0)]);
        let cd = cluster_delay(&c, &p, &d).unwrap();
        assert!((cd.delay - 0.175).abs() < 1e-15);
        assert!(!cd.unweighted);

        let silent = crate::mapping::tests::toy(0, &[(1, 0.0), (2, 0.0)], &[10], &[(1, 10, 0.1), (2, 10, 0.1)]);
        let cd = cluster_delay(&silent, &p, &d).unwrap();
        assert!((cd.delay - 0.15).abs() < 1e-15);
        assert!(cd.unweighted);
    }

    #[test]
    fn corner_delays() {
        let cfg = CrossbarConfig {
            size: 4,
            ..Default::default()
        };
        let d = build_delay_map(&cfg);
        let c = crate::mapping::tests::toy(0, &[(1, 1.0)], &[10], &[(1, 10, 0.1)]);
        let s = &c.synapses[0];
        assert_eq!(synapse_delay(&placement(&[(1, 3)], &[(10, 0)]), s, &d).unwrap(), d.base_delay);
        assert_eq!(synapse_delay(&placement(&[(1, 0)], &[(10, 3)]), s, &d).unwrap(), d.grid.max());
        assert!(synapse_delay(&placement(&[], &[(10, 3)]), s, &d).is_err());
    }

    #[test]
    fn hierarchical_matches_flat_delay() {
        let w = generate_synthetic(&SyntheticParams {
            pre_per_cluster: 5,
            post_per_cluster: 5,
            ..Default::default()
        })
        .unwrap();
        let maps = maps_for(8);
        let sol = map_unlimited(&w, &CrossbarConfig { size: 8, ..Default::default() }, &maps.endurance, SolverOptions::default(), 7).unwrap();
        let h = hardware_delay(&w, &sol, &maps.delay).unwrap().delay;
        let f = flat_delay(&w, &sol, &maps.delay).unwrap();
        assert!(((h - f) / f).abs() < 1e-12, "{h} vs {f}");
    }

    #[test]
    fn voltage_over_occupied_cells() {
        let w = generate_synthetic(&SyntheticParams {
            n_clusters: 1,
            pre_per_cluster: 4,
            post_per_cluster: 4,
            density: 1.0,
            ..Default::default()
        })
        .unwrap();
        let mut maps = maps_for(4);
        maps.voltage_hrs.grid = Grid::filled(4, 0.3);
        maps.voltage_lrs.grid = Grid::filled(4, 0.5);
        let sol = map_unlimited(&w, &CrossbarConfig { size: 4, ..Default::default() }, &maps.endurance, SolverOptions::default(), 1).unwrap();
        let hrs = w.clusters[0].synapses.iter().filter(|s| s.state.is_hrs()).count() as f64;
        let expect = (0.3 * hrs + 0.5 * (16.0 - hrs)) / 16.0;
        assert!((average_rram_voltage(&sol, &maps).unwrap().unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn quartiles_interpolate() {
        let q = Quartiles::of(&[4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!((q.q1, q.median, q.q3), (2.0, 3.0, 4.0));
        let q = Quartiles::of(&[1.0, 2.0]);
        assert_eq!(q.median, 1.5);
        let q = Quartiles::of(&[1.0, f64::INFINITY]);
        assert_eq!(q.median, f64::INFINITY);
    }

    #[test]
    fn uniform_maps_make_baseline_equal_optimum() {
        let w = generate_synthetic(&SyntheticParams {
            n_clusters: 3,
            pre_per_cluster: 4,
            post_per_cluster: 4,
            ..Default::default()
        })
        .unwrap();
        let mut maps = maps_for(6);
        maps.endurance = EnduranceMap::uniform(6, 800.0, 4000.0);
        let cfg = CrossbarConfig { size: 6, ..Default::default() };
        let sol = map_unlimited(&w, &cfg, &maps.endurance, SolverOptions::default(), 3).unwrap();
        let hw = HardwareConfig { n_crossbars: 3, crossbar: cfg };
        let (b, _) = random_baseline(&w, &hw, true, &maps, 9, 3).unwrap();
        assert_eq!(b.lifetime.median, sol.lifetime);
        let report = evaluate(&w, &sol, &maps).unwrap().with_baseline(b);
        assert_eq!(report.ratios.unwrap().lifetime, Some(1.0));
        assert!(report.to_csv().starts_with("name,value,baseline_median,ratio\noverall_lifetime,"));
    }

    #[test]
    fn baseline_is_reproducible_and_valid() {
        let w = generate_synthetic(&SyntheticParams {
            n_clusters: 4,
            pre_per_cluster: 3,
            post_per_cluster: 3,
            ..Default::default()
        })
        .unwrap();
        let maps = maps_for(6);
        let hw = HardwareConfig { n_crossbars: 2, crossbar: CrossbarConfig { size: 6, ..Default::default() } };
        let a = random_baseline(&w, &hw, false, &maps, 5, 10).unwrap();
        let b = random_baseline(&w, &hw, false, &maps, 5, 10).unwrap();
        assert_eq!(a, b);
        let one = random_baseline(&w, &hw, false, &maps, 1, 10).unwrap();
        assert_eq!(one.1[0], a.1[0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        random_solution(&w, &hw, false, &maps.endurance, &mut rng).unwrap().validate(&w).unwrap();
    }
}
