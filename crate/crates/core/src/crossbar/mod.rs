//! Crossbar parasitics, per-cell voltages and the endurance/delay maps built
//! from them.
//!
//! Geometry: wordline `k` is driven from the left, so column 0 is nearest the
//! driver; bitline `l` is read out at the bottom, so row `M - 1` is nearest
//! the sense amplifier. Cell `(M - 1, 0)` is the electrically shortest path
//! and cell `(0, M - 1)` the longest.

mod banded;
mod export;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::{read_endurance, DeviceParams, ResistanceState};
use crate::error::{Error, Result};

pub use banded::{BandedCholesky, BandedSpd, NotPositiveDefinite};
pub use export::{write_grid_csv, MapMetadata};

pub const KELVIN_OFFSET: f64 = 273.15;
pub const REFERENCE_TEMPERATURE_C: f64 = 25.0;
pub const SUPPORTED_NODES: [u32; 4] = [65, 45, 32, 16];

/// Row-major `size × size` grid of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    size: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn filled(size: usize, value: f64) -> Self {
        Self {
            size,
            data: vec![value; size * size],
        }
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(size * size);
        for k in 0..size {
            for l in 0..size {
                data.push(f(k, l));
            }
        }
        Self { size, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let size = rows.len();
        if rows.iter().any(|r| r.len() != size) {
            return Err(Error::Validation("grid rows must form a square".into()));
        }
        Ok(Self {
            size,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.size + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.size..(row + 1) * self.size]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            size: self.size,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TechnologyNode {
    pub node_nm: u32,
    /// Ohms per electrode segment between adjacent cells.
    pub unit_parasitic_resistance: f64,
}

impl TechnologyNode {
    /// A supported node with its default electrode resistance.
    ///
    /// 65 nm is 1 Ω and 16 nm is 3.8 Ω; nodes in between are interpolated
    /// with `ln R` linear in the feature size.
    pub fn new(node_nm: u32) -> Result<Self> {
        if !SUPPORTED_NODES.contains(&node_nm) {
            return Err(Error::Config(format!(
                "unsupported technology node {node_nm} nm (expected one of 65, 45, 32, 16)"
            )));
        }
        let t = (65.0 - node_nm as f64) / (65.0 - 16.0);
        Ok(Self {
            node_nm,
            unit_parasitic_resistance: 3.8f64.powf(t),
        })
    }

    pub fn with_resistance(node_nm: u32, unit_parasitic_resistance: f64) -> Self {
        Self {
            node_nm,
            unit_parasitic_resistance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayParams {
    /// Milliseconds through the shortest-path cell.
    pub base_delay: f64,
    /// Extra milliseconds per electrode segment on the path.
    pub per_segment_delay: f64,
}

impl Default for DelayParams {
    /// Longest over shortest path is ≈ 1.25 at M = 128.
    fn default() -> Self {
        Self {
            base_delay: 0.1,
            per_segment_delay: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossbarConfig {
    /// Rows and columns, M.
    pub size: usize,
    pub tech: TechnologyNode,
    /// °C.
    pub temperature: f64,
    /// Volts at the wordline inputs at the reference temperature.
    pub drive_voltage: f64,
    pub cell_on_resistance: f64,
    pub cell_off_resistance: f64,
    /// Bitline termination to ground at the readout, ohms.
    pub sense_resistance: f64,
    /// Fractional drive increase per °C above the reference temperature.
    pub temp_coefficient: f64,
    pub delay: DelayParams,
}

impl Default for CrossbarConfig {
    fn default() -> Self {
        Self {
            size: 128,
            tech: TechnologyNode::new(45).expect("supported node"),
            temperature: REFERENCE_TEMPERATURE_C,
            drive_voltage: 1.0,
            cell_on_resistance: 31e3,
            cell_off_resistance: 310e3,
            sense_resistance: 100.0,
            temp_coefficient: 0.002,
            delay: DelayParams::default(),
        }
    }
}

/// Volts the default drive calibration puts on the longest-path cell of an
/// all-LRS crossbar. Gives ≈ 0.57 V peak at 65 nm and ≈ 1.1 V at 16 nm for M = 128.
pub const DEFAULT_READ_MARGIN: f64 = 0.39;

impl CrossbarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::Config("crossbar size must be at least 1".into()));
        }
        if !(self.drive_voltage.is_finite() && self.drive_voltage > 0.0) {
            return Err(Error::Config(format!(
                "drive voltage must be positive, got {}",
                self.drive_voltage
            )));
        }
        if !(self.cell_on_resistance > 0.0 && self.cell_off_resistance > self.cell_on_resistance)
            || !self.cell_off_resistance.is_finite()
        {
            return Err(Error::Config(
                "cell resistances must satisfy 0 < on < off".into(),
            ));
        }
        let rp = self.tech.unit_parasitic_resistance;
        if !(rp.is_finite() && rp >= 0.0) {
            return Err(Error::Config(format!("unit parasitic resistance must be ≥ 0, got {rp}")));
        }
        if !(self.sense_resistance.is_finite() && self.sense_resistance >= 0.0) {
            return Err(Error::Config("sense resistance must be ≥ 0".into()));
        }
        if !self.temperature.is_finite() || !self.temp_coefficient.is_finite() {
            return Err(Error::Config("temperature settings must be finite".into()));
        }
        if self.delay.base_delay < 0.0 || self.delay.per_segment_delay <= 0.0 {
            return Err(Error::Config("delay constants must be positive".into()));
        }
        Ok(())
    }

    pub fn temperature_kelvin(&self) -> f64 {
        self.temperature + KELVIN_OFFSET
    }

    fn cell_resistance(&self, state: ResistanceState) -> f64 {
        if state.is_hrs() {
            self.cell_off_resistance
        } else {
            self.cell_on_resistance
        }
    }
}

/// Wordline drive after compensating access-device leakage at temperature.
///
/// The temperature is clamped to 0 °C..100 °C.
pub fn temperature_adjusted_drive(cfg: &CrossbarConfig) -> f64 {
    let t = cfg.temperature.clamp(0.0, 100.0);
    cfg.drive_voltage * (1.0 + cfg.temp_coefficient * (t - REFERENCE_TEMPERATURE_C)).max(0.0)
}

/// Per-cell programming for a voltage solve.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrid {
    size: usize,
    states: Vec<ResistanceState>,
}

impl StateGrid {
    pub fn uniform(size: usize, state: ResistanceState) -> Self {
        Self {
            size,
            states: vec![state; size * size],
        }
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> ResistanceState) -> Self {
        let mut states = Vec::with_capacity(size * size);
        for k in 0..size {
            for l in 0..size {
                states.push(f(k, l));
            }
        }
        Self { size, states }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, col: usize) -> ResistanceState {
        self.states[row * self.size + col]
    }
}

/// Per-cell voltage difference (wordline minus bitline), volts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageMap {
    pub grid: Grid,
    /// The temperature-adjusted drive the map was solved at.
    pub drive: f64,
}

/// Per-state read endurance of every cell, in reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnduranceMap {
    pub hrs: Grid,
    pub lrs: Grid,
}

impl EnduranceMap {
    pub fn size(&self) -> usize {
        self.hrs.size()
    }

    #[inline]
    pub fn get(&self, state: ResistanceState, row: usize, col: usize) -> f64 {
        if state.is_hrs() {
            self.hrs.get(row, col)
        } else {
            self.lrs.get(row, col)
        }
    }

    pub fn grid(&self, state: ResistanceState) -> &Grid {
        if state.is_hrs() {
            &self.hrs
        } else {
            &self.lrs
        }
    }

    /// Same endurance on every cell for both states.
    pub fn uniform(size: usize, hrs: f64, lrs: f64) -> Self {
        Self {
            hrs: Grid::filled(size, hrs),
            lrs: Grid::filled(size, lrs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayMap {
    /// Milliseconds.
    pub grid: Grid,
    pub base_delay: f64,
    pub per_segment_delay: f64,
}

/// Electrode segments between cell (k, l) and the shortest-path corner.
pub fn path_segments(size: usize, row: usize, col: usize) -> usize {
    (size - 1 - row) + col
}

pub fn build_delay_map(cfg: &CrossbarConfig) -> DelayMap {
    let d = cfg.delay;
    let grid = Grid::from_fn(cfg.size, |k, l| {
        d.base_delay + d.per_segment_delay * path_segments(cfg.size, k, l) as f64
    });
    DelayMap {
        grid,
        base_delay: d.base_delay,
        per_segment_delay: d.per_segment_delay,
    }
}

/// Solved node potentials of the crossbar network.
#[derive(Debug, Clone)]
pub struct NetworkSolution {
    size: usize,
    drive: f64,
    parasitic: f64,
    sense: f64,
    resistance: Vec<f64>,
    wordline: Vec<f64>,
    bitline: Vec<f64>,
}

impl NetworkSolution {
    pub fn cell_voltages(&self) -> Grid {
        let m = self.size;
        Grid::from_fn(m, |k, l| {
            let i = k * m + l;
            self.wordline[i] - self.bitline[i]
        })
    }

    pub fn wordline_potential(&self, row: usize, col: usize) -> f64 {
        self.wordline[row * self.size + col]
    }

    pub fn bitline_potential(&self, row: usize, col: usize) -> f64 {
        self.bitline[row * self.size + col]
    }

    /// Current delivered by the wordline drivers, amperes.
    pub fn drive_current(&self) -> f64 {
        let m = self.size;
        if self.parasitic > 0.0 {
            (0..m)
                .map(|k| (self.drive - self.wordline[k * m]) / self.parasitic)
                .sum()
        } else {
            (0..m * m)
                .map(|i| (self.wordline[i] - self.bitline[i]) / self.resistance[i])
                .sum()
        }
    }

    /// Largest net current into any internal node, relative to the drive current.
    ///
    /// Evaluated element by element from the potentials, independent of the
    /// matrix used to solve for them.
    pub fn kirchhoff_residual(&self) -> f64 {
        let m = self.size;
        let rp = self.parasitic;
        let total = self.drive_current().abs().max(f64::MIN_POSITIVE);
        let cell = |i: usize| (self.wordline[i] - self.bitline[i]) / self.resistance[i];
        let mut worst: f64 = 0.0;
        if rp == 0.0 {
            // wordlines are ideal; each bitline collapses to one node per column
            for l in 0..m {
                let into: f64 = (0..m).map(|k| cell(k * m + l)).sum();
                let out = if self.sense > 0.0 {
                    self.bitline[l] / self.sense
                } else {
                    into
                };
                worst = worst.max((into - out).abs());
            }
            return worst / total;
        }
        for k in 0..m {
            for l in 0..m {
                let i = k * m + l;
                // wordline node: in from the left neighbour (or driver), out right and down
                let left = if l == 0 { self.drive } else { self.wordline[i - 1] };
                let mut net = (left - self.wordline[i]) / rp - cell(i);
                if l + 1 < m {
                    net -= (self.wordline[i] - self.wordline[i + 1]) / rp;
                }
                worst = worst.max(net.abs());
                // bitline node: in from the cell and from above, out below (or to the sense)
                let mut net = cell(i);
                if k > 0 {
                    net += (self.bitline[i - m] - self.bitline[i]) / rp;
                }
                net -= if k + 1 < m {
                    (self.bitline[i] - self.bitline[i + m]) / rp
                } else {
                    self.bitline[i] / (rp + self.sense)
                };
                worst = worst.max(net.abs());
            }
        }
        worst / total
    }
}

/// Nodal analysis of the full 2·M² node network at the given programming.
pub fn solve_network(cfg: &CrossbarConfig, states: &StateGrid) -> Result<NetworkSolution> {
    cfg.validate()?;
    let m = cfg.size;
    if states.size() != m {
        return Err(Error::Validation(format!(
            "state grid is {0}×{0} but the crossbar is {m}×{m}",
            states.size()
        )));
    }
    let drive = temperature_adjusted_drive(cfg);
    let rp = cfg.tech.unit_parasitic_resistance;
    let rs = cfg.sense_resistance;
    let resistance: Vec<f64> = states.states.iter().map(|&s| cfg.cell_resistance(s)).collect();

    let (wordline, bitline) = if rp == 0.0 {
        solve_ideal_electrodes(m, drive, rs, &resistance)
    } else {
        solve_banded(m, drive, rp, rs, &resistance)?
    };
    if wordline.iter().chain(&bitline).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite node potential".into()));
    }
    Ok(NetworkSolution {
        size: m,
        drive,
        parasitic: rp,
        sense: rs,
        resistance,
        wordline,
        bitline,
    })
}

/// Zero electrode resistance: every wordline sits at the drive, every bitline
/// is a single node per column.
fn solve_ideal_electrodes(m: usize, drive: f64, rs: f64, r: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let wordline = vec![drive; m * m];
    let mut bitline = vec![0.0; m * m];
    for l in 0..m {
        let g_cells: f64 = (0..m).map(|k| 1.0 / r[k * m + l]).sum();
        let v = if rs > 0.0 {
            drive * g_cells / (g_cells + 1.0 / rs)
        } else {
            0.0
        };
        for k in 0..m {
            bitline[k * m + l] = v;
        }
    }
    (wordline, bitline)
}

fn solve_banded(
    m: usize,
    drive: f64,
    rp: f64,
    rs: f64,
    r: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    // unknowns interleave wordline and bitline node of each cell, row-major
    let wl = |k: usize, l: usize| 2 * (k * m + l);
    let bl = |k: usize, l: usize| 2 * (k * m + l) + 1;
    let n = 2 * m * m;
    let gp = 1.0 / rp;
    let mut a = BandedSpd::zeros(n, 2 * m);
    let mut rhs = vec![0.0; n];
    for k in 0..m {
        for l in 0..m {
            a.stamp(wl(k, l), bl(k, l), 1.0 / r[k * m + l]);
            if l + 1 < m {
                a.stamp(wl(k, l), wl(k, l + 1), gp);
            }
            if k + 1 < m {
                a.stamp(bl(k, l), bl(k + 1, l), gp);
            }
        }
        a.add(wl(k, 0), wl(k, 0), gp);
        rhs[wl(k, 0)] += drive * gp;
    }
    let g_out = 1.0 / (rp + rs);
    for l in 0..m {
        a.add(bl(m - 1, l), bl(m - 1, l), g_out);
    }
    let chol = a.factor().map_err(|NotPositiveDefinite(i)| {
        let cell = i / 2;
        Error::SingularNetwork {
            row: cell / m,
            col: cell % m,
        }
    })?;
    let x = chol.solve(&rhs);
    let wordline = x.iter().step_by(2).copied().collect();
    let bitline = x.iter().skip(1).step_by(2).copied().collect();
    Ok((wordline, bitline))
}

pub fn solve_voltage_map(cfg: &CrossbarConfig, states: &StateGrid) -> Result<VoltageMap> {
    let solution = solve_network(cfg, states)?;
    Ok(VoltageMap {
        grid: solution.cell_voltages(),
        drive: solution.drive,
    })
}

/// Reference-temperature drive that puts `target` volts on the weakest cell
/// of an all-LRS crossbar.
///
/// The network is linear, so one unit-drive solve fixes the scale.
pub fn calibrate_drive(cfg: &CrossbarConfig, target: f64) -> Result<f64> {
    if !(target.is_finite() && target > 0.0) {
        return Err(Error::Config(format!("read margin must be positive, got {target}")));
    }
    let unit = CrossbarConfig {
        drive_voltage: 1.0,
        temperature: REFERENCE_TEMPERATURE_C,
        ..*cfg
    };
    let map = solve_voltage_map(&unit, &StateGrid::uniform(cfg.size, ResistanceState::Lrs1))?;
    Ok(target / map.grid.min())
}

/// Uniform-programming voltage maps and the endurance and delay maps built on them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossbarMaps {
    pub voltage_hrs: VoltageMap,
    pub voltage_lrs: VoltageMap,
    pub endurance: EnduranceMap,
    pub delay: DelayMap,
}

impl CrossbarMaps {
    pub fn build(cfg: &CrossbarConfig, device: &DeviceParams) -> Result<Self> {
        let m = cfg.size;
        let voltage_hrs = solve_voltage_map(cfg, &StateGrid::uniform(m, ResistanceState::Hrs))?;
        let voltage_lrs = solve_voltage_map(cfg, &StateGrid::uniform(m, ResistanceState::Lrs1))?;
        let endurance = EnduranceMap {
            hrs: endurance_grid(&voltage_hrs.grid, ResistanceState::Hrs, cfg, device)?,
            lrs: endurance_grid(&voltage_lrs.grid, ResistanceState::Lrs1, cfg, device)?,
        };
        Ok(Self {
            voltage_hrs,
            voltage_lrs,
            endurance,
            delay: build_delay_map(cfg),
        })
    }

    pub fn size(&self) -> usize {
        self.endurance.size()
    }

    /// The uniform-programming voltage seen by a cell holding `state`.
    pub fn voltage(&self, state: ResistanceState, row: usize, col: usize) -> f64 {
        if state.is_hrs() {
            self.voltage_hrs.grid.get(row, col)
        } else {
            self.voltage_lrs.grid.get(row, col)
        }
    }
}

fn endurance_grid(
    voltage: &Grid,
    state: ResistanceState,
    cfg: &CrossbarConfig,
    device: &DeviceParams,
) -> Result<Grid> {
    let temp_k = cfg.temperature_kelvin();
    let data = voltage
        .values()
        .par_iter()
        .map(|&v| read_endurance(state, v, temp_k, device))
        .collect::<Result<Vec<_>>>()?;
    Ok(Grid {
        size: voltage.size(),
        data,
    })
}

pub fn build_endurance_maps(cfg: &CrossbarConfig, device: &DeviceParams) -> Result<EnduranceMap> {
    Ok(CrossbarMaps::build(cfg, device)?.endurance)
}
