//! Command-line front end.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::crossbar::write_grid_csv;
use crate::crossbar::{calibrate_drive, CrossbarConfig, CrossbarMaps, TechnologyNode, DEFAULT_READ_MARGIN};
use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::mapping::{crossbar_seed, hill_climb_map, map_unlimited, HardwareConfig, HillClimbOptions, MappingSolution};
use crate::metrics::{evaluate, random_baseline, EvaluationReport};
use crate::placement::{brute_force_place, optimize_placement, PlacementRecord, SolverOptions, SolverStats};
use crate::workload::{generate_synthetic, spike_histogram, ClusterId, FrameSemantics, SyntheticParams, Workload};

/// Number of crossbars: a fixed count, or one per cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossbars {
    Unlimited,
    Count(usize),
}

impl FromStr for Crossbars {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("unlimited") {
            return Ok(Self::Unlimited);
        }
        match s.parse::<usize>() {
            Ok(0) => Err("need at least one crossbar".into()),
            Ok(n) => Ok(Self::Count(n)),
            Err(_) => Err(format!("expected a positive integer or `unlimited`, got `{s}`")),
        }
    }
}

impl fmt::Display for Crossbars {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Unlimited => f.write_str("unlimited"),
            Self::Count(n) => write!(f, "{n}"),
        }
    }
}

impl Serialize for Crossbars {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Crossbars {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Settings shared by every command.
#[derive(Debug, Clone, Args, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    /// Technology node in nm: 65, 45, 32 or 16.
    #[arg(long, global = true, default_value_t = 45)]
    pub tech: u32,
    /// Operating temperature, °C.
    #[arg(long = "temp", global = true, default_value_t = 25.0)]
    pub temperature: f64,
    /// Crossbar rows and columns.
    #[arg(long = "size", global = true, default_value_t = 128)]
    pub crossbar_size: usize,
    /// Crossbar count, or `unlimited` for one per cluster.
    #[arg(long, global = true, default_value = "unlimited")]
    pub crossbars: Crossbars,
    /// Wordline drive in volts at 25 °C. When absent the drive is calibrated
    /// so the weakest all-LRS cell sees the default read margin.
    #[arg(long = "drive", global = true)]
    pub drive_voltage: Option<f64>,
    /// Device parameter file (TOML) overriding the built-in defaults.
    #[arg(long, global = true)]
    pub device_params: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,
    /// Local-search moves per placement start.
    #[arg(long, global = true, default_value_t = 2000)]
    pub budget: usize,
    /// Random placement starts after the greedy one.
    #[arg(long, global = true, default_value_t = 5)]
    pub restarts: usize,
    /// Hill-climbing moves to propose when crossbars are limited.
    #[arg(long, global = true, default_value_t = 5000)]
    pub hc_budget: usize,
    /// Consecutive rejected hill-climbing moves before stopping.
    #[arg(long, global = true, default_value_t = 50)]
    pub patience: usize,
    /// Random-placement samples to compare against; 0 disables.
    #[arg(long, global = true, default_value_t = 0)]
    pub baseline: usize,
    /// Solve placements exactly by enumeration (small clusters only).
    #[arg(long, global = true)]
    pub exact: bool,
    /// Record wall-clock time in the solution, which makes it non-reproducible.
    #[arg(long, global = true)]
    pub timing: bool,
    #[arg(long, global = true, default_value = "out")]
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Cli::try_parse_from(["enduromap", "endurance-map"]).expect("defaults parse").config
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.crossbar_size == 0 {
            return Err(Error::Config("--size must be at least 1".into()));
        }
        if self.budget == 0 {
            return Err(Error::Config("--budget must be at least 1".into()));
        }
        if let Some(v) = self.drive_voltage {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("--drive must be positive, got {v}")));
            }
        }
        if !self.temperature.is_finite() {
            return Err(Error::Config("--temp must be finite".into()));
        }
        TechnologyNode::new(self.tech).map(|_| ())
    }

    pub fn device(&self) -> Result<DeviceParams> {
        match &self.device_params {
            Some(p) => DeviceParams::load(p),
            None => Ok(DeviceParams::default()),
        }
    }

    /// Crossbar configuration with the drive resolved.
    pub fn crossbar(&self) -> Result<CrossbarConfig> {
        self.validate()?;
        let mut cfg = CrossbarConfig {
            size: self.crossbar_size,
            tech: TechnologyNode::new(self.tech)?,
            temperature: self.temperature,
            ..Default::default()
        };
        cfg.drive_voltage = match self.drive_voltage {
            Some(v) => v,
            None => calibrate_drive(&cfg, DEFAULT_READ_MARGIN)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            budget: self.budget,
            restarts: self.restarts,
        }
    }

    pub fn hill_climb(&self) -> HillClimbOptions {
        HillClimbOptions {
            budget: self.hc_budget,
            patience: self.patience,
            placement: self.solver(),
            ..Default::default()
        }
    }

    /// Applies one `--sweep` assignment.
    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("--sweep {key}: cannot parse `{value}`")))
        }
        match key {
            "tech" => self.tech = parse(key, value)?,
            "temp" => self.temperature = parse(key, value)?,
            "size" => self.crossbar_size = parse(key, value)?,
            "crossbars" => self.crossbars = value.parse().map_err(Error::Config)?,
            "drive" => self.drive_voltage = Some(parse(key, value)?),
            "seed" => self.seed = parse(key, value)?,
            "budget" => self.budget = parse(key, value)?,
            "restarts" => self.restarts = parse(key, value)?,
            "hc-budget" => self.hc_budget = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "baseline" => self.baseline = parse(key, value)?,
            _ => return Err(Error::Config(format!("--sweep: unknown key `{key}`"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "enduromap", version, about = "Read-endurance-aware mapping of spiking networks onto RRAM crossbars")]
pub struct Cli {
    #[command(flatten)]
    pub config: RunConfig,
    /// Repeat the command for each value, e.g. `tech=65,45,32,16`.
    #[arg(long, global = true, value_name = "KEY=V1,V2,...")]
    pub sweep: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Write voltage, endurance and delay maps for all-HRS and all-LRS crossbars.
    EnduranceMap,
    /// Place one cluster on one crossbar.
    Place {
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        cluster: u64,
    },
    /// Map a whole workload and report its metrics.
    Map {
        #[arg(long)]
        workload: PathBuf,
    },
    /// Write a synthetic clustered workload.
    GenWorkload {
        /// Destination file; defaults to `<output>/workload.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        clusters: usize,
        #[arg(long, default_value_t = 16)]
        pre: usize,
        #[arg(long, default_value_t = 16)]
        post: usize,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        /// Spike rate of the busiest neuron, per frame.
        #[arg(long, default_value_t = 6.42)]
        spike_max: f64,
        /// Frames are 500 ms windows instead of images.
        #[arg(long)]
        windows: bool,
    },
    /// Recompute metrics of a saved solution.
    Evaluate {
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        solution: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::EnduranceMap => "endurance-map",
            Command::Place { .. } => "place",
            Command::Map { .. } => "map",
            Command::GenWorkload { .. } => "gen-workload",
            Command::Evaluate { .. } => "evaluate",
        }
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a RunConfig,
    crossbar: Option<CrossbarConfig>,
    device: Option<DeviceParams>,
    files: Vec<String>,
}

/// Files written by one command, relative to the output directory.
struct Outputs {
    root: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn dir(&self, sub: &str) -> Result<PathBuf> {
        let d = self.root.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(d)
    }

    fn write(&mut self, sub: &str, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.dir(sub)?.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.files.push(format!("{sub}/{name}"));
        Ok(path)
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes") + "\n"
}

/// Runs a parsed command line, including sweeps.
pub fn run(cli: &Cli) -> Result<()> {
    let Some(sweep) = &cli.sweep else {
        return run_one(&cli.config, &cli.command).map(|_| ());
    };
    let (key, values) = sweep
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--sweep expects KEY=V1,V2,..., got `{sweep}`")))?;
    let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(Error::Config("--sweep lists no values".into()));
    }
    let mut table = String::from("sweep_key,sweep_value,name,value,baseline_median,ratio\n");
    for v in &values {
        let mut cfg = cli.config.clone();
        cfg.set(key, v)?;
        cfg.output = cli.config.output.join(format!("{key}={v}"));
        log::info!("sweep {key}={v}");
        if let Some(report) = run_one(&cfg, &cli.command)? {
            for line in report.to_csv().lines().skip(1) {
                table.push_str(&format!("{key},{v},{line}\n"));
            }
        }
    }
    std::fs::create_dir_all(&cli.config.output).map_err(|e| Error::io(&cli.config.output, e))?;
    let path = cli.config.output.join("sweep.csv");
    std::fs::write(&path, table).map_err(|e| Error::io(&path, e))
}

/// Runs one command; returns the evaluation report for commands that make one.
pub fn run_one(cfg: &RunConfig, command: &Command) -> Result<Option<EvaluationReport>> {
    cfg.validate()?;
    let mut out = Outputs::new(&cfg.output);
    let mut crossbar = None;
    let mut device = None;
    let report = match command {
        Command::EnduranceMap => {
            let c = cfg.crossbar()?;
            let d = cfg.device()?;
            cmd_endurance_map(&c, &d, &mut out)?;
            crossbar = Some(c);
            device = Some(d);
            None
        }
        Command::Place { workload, cluster } => {
            let c = cfg.crossbar()?;
            let d = cfg.device()?;
            let w = Workload::load(workload)?;
            cmd_place(cfg, &c, &d, &w, ClusterId(*cluster), &mut out)?;
            crossbar = Some(c);
            device = Some(d);
            None
        }
        Command::Map { workload } => {
            let c = cfg.crossbar()?;
            let d = cfg.device()?;
            let w = Workload::load(workload)?;
            let report = cmd_map(cfg, &c, &d, &w, &mut out)?;
            crossbar = Some(c);
            device = Some(d);
            Some(report)
        }
        Command::GenWorkload {
            out: dest,
            clusters,
            pre,
            post,
            density,
            spike_max,
            windows,
        } => {
            let params = SyntheticParams {
                n_clusters: *clusters,
                pre_per_cluster: *pre,
                post_per_cluster: *post,
                density: *density,
                spike_max: *spike_max,
                seed: cfg.seed,
                frame_semantics: if *windows {
                    FrameSemantics::Window500ms
                } else {
                    FrameSemantics::Image
                },
                ..Default::default()
            };
            let w = generate_synthetic(&params)?;
            match dest {
                Some(path) => {
                    w.save(path)?;
                    return Ok(None);
                }
                None => {
                    out.write("", "workload.json", &w.to_json_string())?;
                }
            }
            None
        }
        Command::Evaluate { workload, solution } => {
            let c = cfg.crossbar()?;
            let d = cfg.device()?;
            let w = Workload::load(workload)?;
            let maps = CrossbarMaps::build(&c, &d)?;
            let sol = MappingSolution::load(solution, &w, &maps.endurance)?;
            let report = report_for(cfg, &w, &sol, &maps)?;
            out.write("reports", "evaluation.json", &report.to_json_string())?;
            out.write("reports", "evaluation.csv", &report.to_csv())?;
            crossbar = Some(c);
            device = Some(d);
            Some(report)
        }
    };
    let manifest = Manifest {
        command: command.name(),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        crossbar,
        device,
        files: out.files.clone(),
    };
    std::fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    let path = cfg.output.join("manifest.json");
    std::fs::write(&path, to_json(&manifest)).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

fn cmd_endurance_map(c: &CrossbarConfig, d: &DeviceParams, out: &mut Outputs) -> Result<()> {
    let maps = CrossbarMaps::build(c, d)?;
    let dir = out.dir("maps")?;
    let grids = [
        ("voltage_hrs", "voltage", &maps.voltage_hrs.grid),
        ("voltage_lrs", "voltage", &maps.voltage_lrs.grid),
        ("endurance_hrs", "endurance", &maps.endurance.hrs),
        ("endurance_lrs", "endurance", &maps.endurance.lrs),
        ("delay", "delay", &maps.delay.grid),
    ];
    for (stem, kind, grid) in grids {
        write_grid_csv(&dir, stem, kind, c, grid)?;
        out.files.push(format!("maps/{stem}.csv"));
        out.files.push(format!("maps/{stem}.json"));
    }
    Ok(())
}

#[derive(Serialize)]
struct PlacementOutput {
    #[serde(flatten)]
    record: PlacementRecord,
    exact: bool,
    stats: SolverStats,
}

fn cmd_place(
    cfg: &RunConfig,
    c: &CrossbarConfig,
    d: &DeviceParams,
    w: &Workload,
    id: ClusterId,
    out: &mut Outputs,
) -> Result<()> {
    let cluster = w
        .cluster(id)
        .ok_or_else(|| Error::Validation(format!("workload has no cluster {id}")))?;
    let maps = CrossbarMaps::build(c, d)?;
    let result = if cfg.exact {
        brute_force_place(cluster, &maps.endurance)?
    } else {
        optimize_placement(cluster, &maps.endurance, cfg.solver(), crossbar_seed(cfg.seed, &[id]))?
    };
    let output = PlacementOutput {
        record: PlacementRecord::new(id, &result),
        exact: cfg.exact,
        stats: result.stats.clone(),
    };
    out.write("placements", &format!("cluster_{id}.json"), &to_json(&output))?;
    Ok(())
}

fn report_for(cfg: &RunConfig, w: &Workload, sol: &MappingSolution, maps: &CrossbarMaps) -> Result<EvaluationReport> {
    let report = evaluate(w, sol, maps)?;
    if cfg.baseline == 0 {
        return Ok(report);
    }
    let (summary, _) = random_baseline(w, &sol.hardware, sol.unlimited, maps, cfg.baseline, cfg.seed)?;
    Ok(report.with_baseline(summary))
}

/// Full pipeline: maps, mapping, evaluation and optional baseline.
fn cmd_map(
    cfg: &RunConfig,
    c: &CrossbarConfig,
    d: &DeviceParams,
    w: &Workload,
    out: &mut Outputs,
) -> Result<EvaluationReport> {
    if cfg.exact {
        return Err(Error::Config("--exact applies to `place` only".into()));
    }
    let maps = CrossbarMaps::build(c, d)?;
    let start = Instant::now();
    let mut sol = match cfg.crossbars {
        Crossbars::Unlimited => map_unlimited(w, c, &maps.endurance, cfg.solver(), cfg.seed)?,
        Crossbars::Count(n) => {
            let hw = HardwareConfig {
                n_crossbars: n,
                crossbar: *c,
            };
            hill_climb_map(w, &hw, &maps.endurance, &cfg.hill_climb(), cfg.seed)?
        }
    };
    if cfg.timing {
        sol.stats.wall_time = Some(start.elapsed().as_secs_f64());
    }
    let report = report_for(cfg, w, &sol, &maps)?;
    out.write("solutions", "solution.json", &sol.to_json_string())?;
    out.write("reports", "report.json", &report.to_json_string())?;
    out.write("reports", "report.csv", &report.to_csv())?;
    out.write("reports", "spike_histogram.csv", &spike_histogram(w, 20)?.to_csv())?;
    Ok(report)
}
