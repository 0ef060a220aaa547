use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{temperature_adjusted_drive, CrossbarConfig, Grid};
use crate::error::{Error, Result};

/// JSON sidecar written next to every exported map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    pub kind: String,
    pub size: usize,
    pub node_nm: u32,
    pub unit_parasitic_resistance: f64,
    pub temperature: f64,
    pub drive_voltage: f64,
    pub effective_drive: f64,
    pub min: f64,
    pub max: f64,
    /// (row, col) of the minimum and maximum entries.
    pub argmin: (usize, usize),
    pub argmax: (usize, usize),
}

impl MapMetadata {
    pub fn describe(kind: &str, cfg: &CrossbarConfig, grid: &Grid) -> Self {
        let m = grid.size();
        let (mut lo, mut hi) = (0, 0);
        for (i, &v) in grid.values().iter().enumerate() {
            if v < grid.values()[lo] {
                lo = i;
            }
            if v > grid.values()[hi] {
                hi = i;
            }
        }
        Self {
            kind: kind.to_string(),
            size: m,
            node_nm: cfg.tech.node_nm,
            unit_parasitic_resistance: cfg.tech.unit_parasitic_resistance,
            temperature: cfg.temperature,
            drive_voltage: cfg.drive_voltage,
            effective_drive: temperature_adjusted_drive(cfg),
            min: grid.min(),
            max: grid.max(),
            argmin: (lo / m, lo % m),
            argmax: (hi / m, hi % m),
        }
    }
}

/// One line per crossbar row, top row first.
pub fn grid_to_csv(grid: &Grid) -> String {
    let mut out = String::new();
    for k in 0..grid.size() {
        for (l, v) in grid.row(k).iter().enumerate() {
            if l > 0 {
                out.push(',');
            }
            write!(out, "{v:?}").expect("write to string");
        }
        out.push('\n');
    }
    out
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn write_grid_csv(
    dir: &Path,
    stem: &str,
    kind: &str,
    cfg: &CrossbarConfig,
    grid: &Grid,
) -> Result<()> {
    let csv = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv, grid_to_csv(grid)).map_err(|e| Error::io(&csv, e))?;
    let meta = MapMetadata::describe(kind, cfg, grid);
    let json = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&meta)? + "\n";
    std::fs::write(&json, text).map_err(|e| Error::io(&json, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows_top_first() {
        let g = Grid::from_rows(vec![vec![1.0, 0.5], vec![0.25, 2.0]]).unwrap();
        assert_eq!(grid_to_csv(&g), "1.0,0.5\n0.25,2.0\n");
        let meta = MapMetadata::describe("x", &CrossbarConfig::default(), &g);
        assert_eq!(meta.argmin, (1, 0));
        assert_eq!(meta.argmax, (1, 1));
    }
}
