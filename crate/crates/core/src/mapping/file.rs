use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{merge_many, CrossbarSolution, HardwareConfig, MappingSolution, SearchStats};
use crate::crossbar::{CrossbarConfig, EnduranceMap};
use crate::error::{Error, Result};
use crate::placement::{lifetime_of_placement, Placement, PlacementResult, SolverStats};
use crate::workload::{Cluster, ClusterId, NeuronId, Workload};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareRecord {
    pub n_crossbars: usize,
    pub unlimited: bool,
    pub crossbar: CrossbarConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossbarRecord {
    pub crossbar: usize,
    pub clusters: Vec<ClusterId>,
    pub rows: BTreeMap<NeuronId, usize>,
    pub cols: BTreeMap<NeuronId, usize>,
    #[serde(with = "crate::serde_util::finite_or_null")]
    pub lifetime: f64,
    pub limiting_synapse: Option<(NeuronId, NeuronId)>,
}

/// On-disk form of a [`MappingSolution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub hardware: HardwareRecord,
    /// Cluster → crossbar. Kept as entries so a repeated key is detectable.
    #[serde(with = "crate::serde_util::entries_as_map")]
    pub assign: Vec<(ClusterId, usize)>,
    pub per_crossbar: Vec<CrossbarRecord>,
    #[serde(with = "crate::serde_util::finite_or_null")]
    pub overall_lifetime: f64,
    pub search_stats: SearchStats,
}

impl MappingSolution {
    pub fn to_file(&self) -> SolutionFile {
        SolutionFile {
            hardware: HardwareRecord {
                n_crossbars: self.hardware.n_crossbars,
                unlimited: self.unlimited,
                crossbar: self.hardware.crossbar,
            },
            assign: self.assign.iter().map(|(&c, &x)| (c, x)).collect(),
            per_crossbar: self
                .crossbars
                .iter()
                .map(|x| CrossbarRecord {
                    crossbar: x.crossbar,
                    clusters: x.clusters.clone(),
                    rows: x.result.placement.row_of.clone(),
                    cols: x.result.placement.col_of.clone(),
                    lifetime: x.result.lifetime,
                    limiting_synapse: x.result.limiting_synapse,
                })
                .collect(),
            overall_lifetime: self.lifetime,
            search_stats: self.stats.clone(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("solution serializes") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    /// Rebuilds a solution from its file form against `w`.
    ///
    /// Lifetimes are recomputed from the placements on `maps`; a recorded
    /// value that disagrees is logged. Structural problems are errors.
    pub fn from_file(file: SolutionFile, w: &Workload, maps: &EnduranceMap) -> Result<Self> {
        let mut assign = BTreeMap::new();
        for (c, x) in &file.assign {
            if assign.insert(*c, *x).is_some() {
                return Err(Error::Validation(format!("cluster {c} is assigned more than once")));
            }
        }
        let hardware = HardwareConfig {
            n_crossbars: file.hardware.n_crossbars,
            crossbar: file.hardware.crossbar,
        };
        hardware.validate()?;
        if maps.size() != hardware.crossbar.size {
            return Err(Error::Validation(format!(
                "solution is for {0}×{0} crossbars but the maps are {1}×{1}",
                hardware.crossbar.size,
                maps.size()
            )));
        }
        let mut crossbars = Vec::with_capacity(file.per_crossbar.len());
        for rec in file.per_crossbar {
            let mut ids = rec.clusters.clone();
            ids.sort();
            if ids.windows(2).any(|p| p[0] == p[1]) {
                return Err(Error::Validation(format!("crossbar {} lists a cluster twice", rec.crossbar)));
            }
            let parts = ids
                .iter()
                .map(|id| {
                    w.cluster(*id).ok_or_else(|| {
                        Error::Validation(format!("crossbar {} holds unknown cluster {id}", rec.crossbar))
                    })
                })
                .collect::<Result<Vec<&Cluster>>>()?;
            if parts.is_empty() {
                return Err(Error::Validation(format!("crossbar {} lists no clusters", rec.crossbar)));
            }
            let merged = merge_many(&parts)?;
            let placement = Placement {
                row_of: rec.rows,
                col_of: rec.cols,
            };
            let (lifetime, limiting_synapse) = lifetime_of_placement(&merged, &placement, maps)?;
            if lifetime != rec.lifetime {
                log::warn!(
                    "crossbar {}: recorded lifetime {} but the placement gives {lifetime}",
                    rec.crossbar,
                    rec.lifetime
                );
            }
            crossbars.push(CrossbarSolution {
                crossbar: rec.crossbar,
                clusters: ids,
                merged,
                result: PlacementResult {
                    placement,
                    lifetime,
                    limiting_synapse,
                    stats: SolverStats::default(),
                },
            });
        }
        let listed: BTreeSet<usize> = crossbars.iter().map(|x| x.crossbar).collect();
        if listed.len() != crossbars.len() {
            return Err(Error::Validation("a crossbar appears twice in per_crossbar".into()));
        }
        let mut solution = MappingSolution::assemble(hardware, file.hardware.unlimited, crossbars, file.search_stats);
        if solution.assign != assign {
            return Err(Error::Validation(
                "assignment disagrees with the clusters listed per crossbar".into(),
            ));
        }
        solution.validate(w)?;
        if solution.lifetime != file.overall_lifetime {
            log::warn!(
                "recorded overall lifetime {} but the placements give {}",
                file.overall_lifetime,
                solution.lifetime
            );
        }
        solution.assign = assign;
        Ok(solution)
    }

    pub fn load(path: &Path, w: &Workload, maps: &EnduranceMap) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: SolutionFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        Self::from_file(file, w, maps)
    }
}
