//! Presets, flat `key = value` configuration, output writers and the
//! commands behind the `polywell` binary.
//!
//! A configuration is resolved in layers: the figure preset (Figure 1
//! parameters when no figure is named), then a config file, then flags.
//! Grid keys left unset follow the propagator's default grid rule, so a
//! sweep over, say, `q` re-derives the grid for every value.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{analyze, track_sample, DiagnosticsReport, RegionSplit, Thresholds, TrackSample};
use crate::error::{Error, Result};
use crate::grid::{Grid, PhysicalParams, WaveFunction};
use crate::oracle::{ContourConfig, SquareOracle};
use crate::packets::{make_packet, PacketShape, PacketSpec};
use crate::potentials::{PotentialSpec, WellShape};
use crate::propagator::{default_resolution, grid_for, run_observed, staggered_grid, RunOptions, RunOutput};
use crate::spectral::{bound_states, diagonalize_well, resonance_detuning, BoundStateSet, ResonanceDetuning};

/// Diagnostics samples per run: the track cadence is t_max / 100.
pub const TRACK_SAMPLES: f64 = 100.0;
/// Environment variable capping the number of concurrent sweep runs.
pub const THREADS_ENV: &str = "POLYWELL_THREADS";
/// Oracle-mode sampling: points per packet half-width.
const ORACLE_POINTS_PER_WIDTH: f64 = 5.0;
/// Oracle-mode window: momenta up to |q| + this/d are followed.
const ORACLE_TAIL_MOMENTUM: f64 = 2.0;
const DEFAULT_OUT_DIR: &str = "out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Crank–Nicolson propagation on the grid.
    Grid,
    /// Semi-analytic square packet / square well evaluation on the grid nodes.
    Oracle,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Grid => "grid",
            Mode::Oracle => "oracle",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "grid" => Ok(Mode::Grid),
            "oracle" => Ok(Mode::Oracle),
            other => Err(Error::InvalidConfig(format!("unknown mode '{other}'"))),
        }
    }
}

/// Canonical configuration keys, in echo order.
pub const KEYS: &[&str] = &[
    "figure",
    "mode",
    "packet",
    "q",
    "delta",
    "x0",
    "mass",
    "well",
    "depth",
    "width",
    "center",
    "xmin",
    "xmax",
    "dx",
    "dt",
    "tmax",
    "snapshots",
    "prominence",
    "max_spacing_cov",
    "max_envelope_residual",
    "formation_fraction",
    "stop_on_contamination",
    "out_dir",
];

fn canonical_key(key: &str) -> Result<&'static str> {
    let k = key.trim().to_ascii_lowercase().replace('-', "_");
    let k = match k.as_str() {
        "half_width" => "width",
        "t_max" => "tmax",
        "x_min" => "xmin",
        "x_max" => "xmax",
        "outdir" => "out_dir",
        other => other,
    };
    KEYS.iter()
        .find(|&&c| c == k)
        .copied()
        .ok_or_else(|| Error::InvalidConfig(format!("unknown key '{key}'")))
}

/// Raw key/value layer of a configuration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settings {
    values: BTreeMap<&'static str, String>,
}

impl Settings {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected 'key = value', got '{raw}'", n + 1)))?;
            s.set(key, value.trim())?;
        }
        Ok(s)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        self.values.insert(canonical_key(key)?, value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Layers `other` on top of `self`.
    pub fn merge(&mut self, other: &Settings) {
        for (k, v) in &other.values {
            self.values.insert(k, v.clone());
        }
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse '{v}'"))))
            .transpose()
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        match self.parsed::<f64>(key)? {
            Some(v) if !v.is_finite() => Err(Error::InvalidConfig(format!("{key} must be finite"))),
            v => Ok(v),
        }
    }

    fn required(&self, key: &str) -> Result<f64> {
        self.number(key)?.ok_or_else(|| Error::InvalidConfig(format!("missing {key}")))
    }
}

/// Parameters of Figures 1–8. All share m = 20, A = 1, w = 1, x0 = −10;
/// Figures 1–7 use a Gaussian packet on a Gaussian well, Figure 8 a square
/// packet on a square well evaluated by the oracle.
pub fn preset_settings(figure: u8) -> Result<Settings> {
    let (q, delta, mass, t_max) = match figure {
        1 => (0.2, 0.5, 20.0, 5000.0),
        2 => (0.6, 0.5, 20.0, 5000.0),
        3 => (1.4, 0.5, 20.0, 5000.0),
        4 => (2.2, 0.5, 20.0, 5000.0),
        5 => (1.0, 0.5, 20.0, 200.0),
        6 => (1.0, 0.5, 11.0, 200.0),
        7 => (1.0, 2.0, 20.0, 5000.0),
        8 => (1.0, 0.5, 20.0, 1000.0),
        other => return Err(Error::InvalidConfig(format!("figure must be 1..=8, got {other}"))),
    };
    let (mode, packet, well) = if figure == 8 { ("oracle", "square", "square") } else { ("grid", "gaussian", "gaussian") };
    let mut s = Settings::default();
    for (k, v) in [
        ("figure", figure.to_string()),
        ("mode", mode.into()),
        ("packet", packet.into()),
        ("q", q.to_string()),
        ("delta", delta.to_string()),
        ("x0", "-10".into()),
        ("mass", mass.to_string()),
        ("well", well.into()),
        ("depth", "1".into()),
        ("width", "1".into()),
        ("center", "0".into()),
        ("tmax", t_max.to_string()),
    ] {
        s.set(k, v)?;
    }
    Ok(s)
}

/// A fully resolved, validated run description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub figure: Option<u8>,
    pub mode: Mode,
    pub packet: PacketSpec,
    pub well: PotentialSpec,
    pub mass: f64,
    /// Propagation grid, or the sampling nodes in oracle mode.
    pub grid: Grid,
    pub t_max: f64,
    pub snapshot_times: Vec<f64>,
    pub thresholds: Thresholds,
    pub stop_on_contamination: bool,
    pub out_dir: PathBuf,
}

/// The preset for `figure`, with the default grid rule applied.
pub fn preset(figure: u8) -> Result<RunConfig> {
    RunConfig::resolve(&preset_settings(figure)?)
}

/// Sampling window for oracle mode: everything moving no faster than
/// (|q| + 2/d)/m, at d/5 spacing.
fn oracle_grid(packet: &PacketSpec, well: &PotentialSpec, mass: f64, t_max: f64, dx: Option<f64>, dt: f64) -> Result<Grid> {
    let dx = dx.unwrap_or(packet.width / ORACLE_POINTS_PER_WIDTH);
    let travel = (packet.q.abs() + ORACLE_TAIL_MOMENTUM / packet.width) / mass * t_max;
    let margin = 10.0;
    staggered_grid(packet.x0 - travel - margin, well.center + well.width + travel + margin, dx, dt)
}

impl RunConfig {
    /// Resolves `settings` on top of the named figure preset (Figure 1
    /// parameters when none is named) and validates the result.
    pub fn resolve(settings: &Settings) -> Result<Self> {
        let figure = settings.parsed::<u8>("figure")?;
        let mut s = preset_settings(figure.unwrap_or(1))?;
        if figure.is_none() {
            s.values.remove("figure");
        }
        s.merge(settings);

        let mode: Mode = s.parsed("mode")?.unwrap_or(Mode::Grid);
        let packet = PacketSpec {
            shape: s.parsed::<PacketShape>("packet")?.unwrap_or(PacketShape::Gaussian),
            q: s.required("q")?,
            x0: s.required("x0")?,
            width: s.required("delta")?,
        };
        let well = match s.get("well").map(str::to_ascii_lowercase).as_deref() {
            Some("free") | Some("none") => PotentialSpec::free(),
            _ => PotentialSpec {
                shape: s.parsed::<WellShape>("well")?.unwrap_or(WellShape::Gaussian),
                depth: s.required("depth")?,
                width: s.required("width")?,
                center: s.number("center")?.unwrap_or(0.0),
            },
        };
        let mass = s.required("mass")?;
        if !(mass > 0.0) {
            return Err(Error::InvalidConfig(format!("mass must be > 0, got {mass}")));
        }
        let t_max = s.required("tmax")?;
        if !(t_max >= 0.0) {
            return Err(Error::InvalidConfig(format!("tmax must be >= 0, got {t_max}")));
        }
        packet.validate()?;
        if well.depth != 0.0 {
            well.validate()?;
        }

        let (rule_dx, rule_dt) = default_resolution(&packet, &well, mass);
        let dt = s.number("dt")?.unwrap_or(rule_dt);
        let dx = s.number("dx")?;
        let rule_grid = match mode {
            Mode::Grid => grid_for(&packet, &well, mass, t_max, dx.unwrap_or(rule_dx), dt)?,
            Mode::Oracle => oracle_grid(&packet, &well, mass, t_max, dx, dt)?,
        };
        let grid = match (s.number("xmin")?, s.number("xmax")?) {
            (None, None) => rule_grid,
            (lo, hi) => Grid::with_spacing(
                lo.unwrap_or(rule_grid.x_min()),
                hi.unwrap_or(rule_grid.x_max()),
                dx.unwrap_or(rule_grid.dx()),
                dt,
            )?,
        };

        let snapshot_times = match s.get("snapshots") {
            None => vec![t_max],
            Some(list) if list.trim().is_empty() => Vec::new(),
            Some(list) => {
                let mut times = list
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|_| Error::InvalidConfig(format!("snapshots: cannot parse '{v}'"))))
                    .collect::<Result<Vec<f64>>>()?;
                times.sort_by(f64::total_cmp);
                times.dedup();
                times
            }
        };
        if let Some(t) = snapshot_times.iter().find(|&&t| !(0.0..=t_max).contains(&t)) {
            return Err(Error::InvalidConfig(format!("snapshot time {t} outside [0, {t_max}]")));
        }

        let defaults = Thresholds::default();
        let thresholds = Thresholds {
            prominence: s.number("prominence")?.unwrap_or(defaults.prominence),
            max_spacing_cov: s.number("max_spacing_cov")?.unwrap_or(defaults.max_spacing_cov),
            max_envelope_residual: s.number("max_envelope_residual")?.unwrap_or(defaults.max_envelope_residual),
            formation_fraction: s.number("formation_fraction")?.unwrap_or(defaults.formation_fraction),
        };
        if !(thresholds.prominence > 0.0 && thresholds.prominence < 1.0) {
            return Err(Error::InvalidConfig(format!("prominence must lie in (0, 1), got {}", thresholds.prominence)));
        }
        if !(thresholds.formation_fraction > 0.0 && thresholds.formation_fraction <= 1.0) {
            return Err(Error::InvalidConfig("formation_fraction must lie in (0, 1]".into()));
        }

        let config = Self {
            figure,
            mode,
            packet,
            well,
            mass,
            grid,
            t_max,
            snapshot_times,
            thresholds,
            stop_on_contamination: s.parsed("stop_on_contamination")?.unwrap_or(true),
            out_dir: PathBuf::from(s.get("out_dir").unwrap_or(DEFAULT_OUT_DIR)),
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks that the packet is resolved and inside the grid and the well
    /// is not clipped (grid mode), or that the oracle accepts the problem.
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            Mode::Grid => {
                make_packet(&self.packet, &self.grid)?;
                if self.well.depth != 0.0 {
                    self.well.evaluate(&self.grid)?;
                }
            }
            Mode::Oracle => {
                SquareOracle::new(&self.packet, &self.well, self.mass, ContourConfig::default())?;
            }
        }
        Ok(())
    }

    /// The region split used by the diagnostics: the well's centre ± width.
    pub fn split(&self) -> Result<RegionSplit> {
        RegionSplit::from_well(&self.well)
    }

    /// Every key with its resolved value; [`Settings::parse`] followed by
    /// [`RunConfig::resolve`] reproduces `self`.
    pub fn to_settings_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        if let Some(f) = self.figure {
            line("figure", f.to_string());
        }
        line("mode", self.mode.to_string());
        line("packet", self.packet.shape.to_string());
        line("q", self.packet.q.to_string());
        line("delta", self.packet.width.to_string());
        line("x0", self.packet.x0.to_string());
        line("mass", self.mass.to_string());
        if self.well == PotentialSpec::free() {
            line("well", "free".into());
        } else {
            line("well", self.well.shape.to_string());
            line("depth", self.well.depth.to_string());
            line("width", self.well.width.to_string());
            line("center", self.well.center.to_string());
        }
        line("xmin", self.grid.x_min().to_string());
        line("xmax", self.grid.x_max().to_string());
        line("dx", self.grid.dx().to_string());
        line("dt", self.grid.dt().to_string());
        line("tmax", self.t_max.to_string());
        line("snapshots", self.snapshot_times.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        line("prominence", self.thresholds.prominence.to_string());
        line("max_spacing_cov", self.thresholds.max_spacing_cov.to_string());
        line("max_envelope_residual", self.thresholds.max_envelope_residual.to_string());
        line("formation_fraction", self.thresholds.formation_fraction.to_string());
        line("stop_on_contamination", self.stop_on_contamination.to_string());
        line("out_dir", self.out_dir.display().to_string());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSummary {
    pub steps: u64,
    pub max_norm_drift: f64,
    pub norm_valid: bool,
    pub contamination_time: Option<f64>,
    pub aborted: bool,
}

impl From<&RunOutput> for RunSummary {
    fn from(out: &RunOutput) -> Self {
        Self {
            steps: out.steps,
            max_norm_drift: out.max_norm_drift,
            norm_valid: out.norm_valid(),
            contamination_time: out.contamination_time,
            aborted: out.aborted,
        }
    }
}

/// Result of one run in either mode.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: RunConfig,
    /// States at the configured snapshot times.
    pub snapshots: Vec<WaveFunction>,
    pub final_state: WaveFunction,
    /// Propagation statistics; `None` in oracle mode.
    pub summary: Option<RunSummary>,
    pub report: DiagnosticsReport,
}

/// Propagates on the grid, sampling diagnostics every t_max/100.
pub fn run_grid(config: &RunConfig) -> Result<RunResult> {
    let split = config.split()?;
    let psi = make_packet(&config.packet, &config.grid)?;
    let potential = if config.well.depth != 0.0 {
        config.well.evaluate(&config.grid)?
    } else {
        vec![0.0; config.grid.n_points()]
    };
    let options = RunOptions {
        snapshot_times: config.snapshot_times.clone(),
        sample_interval: (config.t_max > 0.0).then_some(config.t_max / TRACK_SAMPLES),
        stop_on_contamination: config.stop_on_contamination,
        ..Default::default()
    };
    let mut track: Vec<TrackSample> = Vec::new();
    let out = run_observed(psi, potential, PhysicalParams::new(config.mass)?, config.t_max, &options, |s| {
        if track.last().map(|l| l.t) != Some(s.time()) {
            track.push(track_sample(s, &split));
        }
    })?;
    let report = analyze(&track, &out.final_state, &config.well, &split, &config.thresholds);
    Ok(RunResult {
        config: config.clone(),
        snapshots: out.snapshots.clone(),
        final_state: out.final_state.clone(),
        summary: Some(RunSummary::from(&out)),
        report,
    })
}

/// Unit-norm oracle state on the nodes of `grid` at time `t`.
pub fn oracle_state(oracle: &SquareOracle, grid: &Grid, t: f64) -> Result<WaveFunction> {
    let xs: Vec<f64> = grid.nodes().collect();
    let scale = oracle.normalization();
    let values: Vec<Complex64> = oracle.profile(&xs, t, 16)?.into_iter().map(|z| z * scale).collect();
    WaveFunction::new(*grid, values, t)
}

/// Evaluates the oracle at every snapshot time (and t_max).
pub fn run_oracle(config: &RunConfig) -> Result<RunResult> {
    let split = config.split()?;
    let oracle = SquareOracle::new(&config.packet, &config.well, config.mass, ContourConfig::default())?;
    let mut snapshots = Vec::with_capacity(config.snapshot_times.len());
    for &t in &config.snapshot_times {
        snapshots.push(oracle_state(&oracle, &config.grid, t)?);
    }
    let final_state = match snapshots.last() {
        Some(s) if s.time() == config.t_max => s.clone(),
        _ => oracle_state(&oracle, &config.grid, config.t_max)?,
    };
    let mut track: Vec<TrackSample> = snapshots.iter().map(|s| track_sample(s, &split)).collect();
    if track.last().map(|s| s.t) != Some(config.t_max) {
        track.push(track_sample(&final_state, &split));
    }
    let report = analyze(&track, &final_state, &config.well, &split, &config.thresholds);
    Ok(RunResult { config: config.clone(), snapshots, final_state, summary: None, report })
}

/// Runs `config` in its own mode.
pub fn run_config(config: &RunConfig) -> Result<RunResult> {
    match config.mode {
        Mode::Grid => run_grid(config),
        Mode::Oracle => run_oracle(config),
    }
}

/// Writes `x,re,im,abs2` rows with round-trip float formatting.
pub fn write_snapshot_csv(path: &Path, psi: &WaveFunction) -> Result<()> {
    let mut text = String::with_capacity(psi.values().len() * 80);
    text.push_str("x,re,im,abs2\n");
    for (x, z) in psi.grid().nodes().zip(psi.values()) {
        text.push_str(&format!("{x},{},{},{}\n", z.re, z.im, z.norm_sqr()));
    }
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Reads a snapshot written by [`write_snapshot_csv`]; the x column must be uniform.
pub fn read_snapshot_csv(path: &Path, time: f64) -> Result<WaveFunction> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header.trim() != "x,re,im,abs2" {
        return Err(Error::InvalidConfig(format!("{}: expected header 'x,re,im,abs2'", path.display())));
    }
    let mut xs = Vec::new();
    let mut values = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidConfig(format!("{}: bad row {}", path.display(), n + 2)))?;
        if cols.len() != 4 {
            return Err(Error::InvalidConfig(format!("{}: row {} needs 4 columns", path.display(), n + 2)));
        }
        xs.push(cols[0]);
        values.push(Complex64::new(cols[1], cols[2]));
    }
    if xs.len() < 3 {
        return Err(Error::InvalidConfig(format!("{}: need at least 3 rows", path.display())));
    }
    let grid = Grid::new(xs[0], xs[xs.len() - 1], xs.len(), 1.0)?;
    if xs.iter().enumerate().any(|(i, &x)| (x - grid.x(i)).abs() > 1e-6 * grid.dx()) {
        return Err(Error::InvalidConfig(format!("{}: x column is not uniform", path.display())));
    }
    WaveFunction::new(grid, values, time)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

/// Snapshot file name for time `t`.
pub fn snapshot_name(t: f64) -> String {
    format!("psi_t{t}.csv")
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport<'a> {
    pub config: &'a RunConfig,
    pub run: Option<RunSummary>,
    pub snapshots: Vec<String>,
    pub diagnostics: &'a DiagnosticsReport,
}

/// Writes the snapshots, `report.json` and `config.txt` of a run into its out_dir.
pub fn write_run(result: &RunResult) -> Result<Vec<PathBuf>> {
    let dir = &result.config.out_dir;
    create_dir(dir)?;
    let mut files = Vec::new();
    let mut names = Vec::new();
    for s in &result.snapshots {
        let name = snapshot_name(s.time());
        let path = dir.join(&name);
        write_snapshot_csv(&path, s)?;
        files.push(path);
        names.push(name);
    }
    let report = RunReport { config: &result.config, run: result.summary, snapshots: names, diagnostics: &result.report };
    let path = dir.join("report.json");
    write_json(&path, &report)?;
    files.push(path);
    let path = dir.join("config.txt");
    fs::write(&path, result.config.to_settings_text()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    files.push(path);
    Ok(files)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub states: BoundStateSet,
    pub resonance: ResonanceDetuning,
    /// Discrete-diagonalization energies, when requested.
    pub discrete: Option<Vec<f64>>,
}

/// Bound states of the square well, optionally checked against the
/// discretized Hamiltonian on [−100, 100] at dx = 0.001.
pub fn spectrum(mass: f64, depth: f64, half_width: f64, check: bool) -> Result<SpectrumReport> {
    let states = bound_states(mass, depth, half_width)?;
    let resonance = resonance_detuning(mass, depth, half_width)?;
    let discrete = if check {
        let reach = 100.0f64.max(half_width + 40.0 / (2.0 * mass * depth).sqrt().min(1.0));
        let grid = Grid::with_spacing(-reach, reach, 0.001 * half_width.min(1.0), 1.0)?;
        let found = diagonalize_well(&PotentialSpec::square(depth, half_width), mass, &grid)?;
        Some(found.into_iter().map(|s| s.energy).collect())
    } else {
        None
    };
    Ok(SpectrumReport { states, resonance, discrete })
}

/// Human-readable table of a [`SpectrumReport`].
pub fn spectrum_table(report: &SpectrumReport) -> String {
    let w = report.states.well.width;
    let mut out = format!("{:>3} {:>6} {:>22} {:>20} {:>20} {:>12}", "n", "parity", "energy", "k", "k_prime", "k_prime*w");
    if report.discrete.is_some() {
        out.push_str(&format!(" {:>22}", "discrete"));
    }
    out.push('\n');
    for s in &report.states.states {
        let parity = format!("{:?}", s.parity).to_ascii_lowercase();
        out.push_str(&format!(
            "{:>3} {:>6} {:>22.15e} {:>20.15} {:>20.15} {:>12.6}",
            s.n,
            parity,
            s.energy,
            s.k,
            s.k_prime,
            s.k_prime * w
        ));
        if let Some(e) = report.discrete.as_ref().and_then(|d| d.get(s.n)) {
            out.push_str(&format!(" {e:>22.15e}"));
        }
        out.push('\n');
    }
    let r = &report.resonance;
    out.push_str(&format!(
        "nearest threshold {}·π/2 ({:?}), detuning k'_max·w − threshold = {:.6}\n",
        r.multiple, r.parity, r.detuning
    ));
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub param: String,
    pub value: String,
    pub config: RunConfig,
    pub run: Option<RunSummary>,
    pub diagnostics: DiagnosticsReport,
}

/// Concurrent runs over `values` of `param`, in parameter order. The number
/// of worker threads is read from `POLYWELL_THREADS` when set.
pub fn sweep(base: &Settings, param: &str, values: &[String]) -> Result<Vec<SweepEntry>> {
    let key = canonical_key(param)?;
    let configs = values
        .iter()
        .map(|v| {
            let mut s = base.clone();
            s.set(key, v.clone())?;
            RunConfig::resolve(&s)
        })
        .collect::<Result<Vec<_>>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_cap()?)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let results: Vec<Result<RunResult>> = pool.install(|| configs.par_iter().map(run_config).collect());
    values
        .iter()
        .zip(results)
        .map(|(v, r)| {
            let r = r?;
            Ok(SweepEntry { param: key.to_string(), value: v.clone(), config: r.config, run: r.summary, diagnostics: r.report })
        })
        .collect()
}

/// Worker count from `POLYWELL_THREADS`, or 0 (rayon's default) when unset.
pub fn thread_cap() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(0),
    }
}

#[derive(Debug, Parser)]
#[command(name = "polywell", version, about = "Wave-packet scattering off attractive 1-D wells")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a configuration in its mode (grid propagation unless mode = oracle).
    Simulate(RunArgs),
    /// Evaluate the square packet / square well analytically.
    Oracle(RunArgs),
    /// Square-well bound states and resonance detuning.
    Spectrum(SpectrumArgs),
    /// Diagnostics of a snapshot CSV.
    Diagnose(DiagnoseArgs),
    /// Concurrent runs over values of one configuration key.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Flat key = value file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Figure preset 1..8.
    #[arg(long)]
    pub figure: Option<String>,
    #[arg(long)]
    pub mode: Option<String>,
    /// gaussian, square, lorentzian or linear-exponential.
    #[arg(long)]
    pub packet: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub q: Option<String>,
    /// Packet width (δ, or half-width d for a square packet).
    #[arg(long)]
    pub delta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    #[arg(long)]
    pub mass: Option<String>,
    /// gaussian, square, lorentzian or free.
    #[arg(long)]
    pub well: Option<String>,
    #[arg(long)]
    pub depth: Option<String>,
    /// Well width (half-width a for a square well).
    #[arg(long, alias = "half-width")]
    pub width: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub center: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub xmin: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub xmax: Option<String>,
    #[arg(long)]
    pub dx: Option<String>,
    #[arg(long)]
    pub dt: Option<String>,
    #[arg(long)]
    pub tmax: Option<String>,
    /// Comma-separated snapshot times.
    #[arg(long)]
    pub snapshots: Option<String>,
    #[arg(long)]
    pub out_dir: Option<String>,
    #[arg(long)]
    pub prominence: Option<String>,
    #[arg(long)]
    pub stop_on_contamination: Option<String>,
    /// Print the resolved configuration and exit without computing.
    #[arg(long)]
    pub dry_run: bool,
}

impl RunArgs {
    /// Config-file values overlaid with the flags.
    pub fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(path) => Settings::read(path)?,
            None => Settings::default(),
        };
        let flags = [
            ("figure", &self.figure),
            ("mode", &self.mode),
            ("packet", &self.packet),
            ("q", &self.q),
            ("delta", &self.delta),
            ("x0", &self.x0),
            ("mass", &self.mass),
            ("well", &self.well),
            ("depth", &self.depth),
            ("width", &self.width),
            ("center", &self.center),
            ("xmin", &self.xmin),
            ("xmax", &self.xmax),
            ("dx", &self.dx),
            ("dt", &self.dt),
            ("tmax", &self.tmax),
            ("snapshots", &self.snapshots),
            ("out_dir", &self.out_dir),
            ("prominence", &self.prominence),
            ("stop_on_contamination", &self.stop_on_contamination),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                s.set(k, v.clone())?;
            }
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SpectrumArgs {
    #[arg(long, default_value_t = 20.0)]
    pub mass: f64,
    #[arg(long, default_value_t = 1.0)]
    pub depth: f64,
    #[arg(long, alias = "width", default_value_t = 1.0)]
    pub half_width: f64,
    /// Cross-check against discrete diagonalization.
    #[arg(long)]
    pub check: bool,
    /// Also write spectrum.json here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    /// Snapshot CSV with columns x,re,im,abs2.
    #[arg(long)]
    pub input: PathBuf,
    /// Time of the snapshot.
    #[arg(long, default_value_t = 0.0)]
    pub time: f64,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Configuration key to vary.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub values: Vec<String>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: String,
}

fn print_summary(result: &RunResult) {
    let r = &result.report;
    println!(
        "t = {}  P_refl = {:.6e}  P_well = {:.6e}  P_trans = {:.6e}  peaks = {}  polychotomous = {}",
        r.time,
        r.p_refl,
        r.p_well,
        r.p_trans,
        r.peaks.len(),
        r.polychotomous
    );
    if let Some(s) = &result.summary {
        println!(
            "steps = {}  max norm drift = {:.3e}  contamination = {}",
            s.steps,
            s.max_norm_drift,
            s.contamination_time.map_or("none".to_string(), |t| format!("t = {t}"))
        );
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Simulate(args) | Command::Oracle(args) if args.dry_run => {
            let config = RunConfig::resolve(&args.settings()?)?;
            print!("{}", config.to_settings_text());
            Ok(())
        }
        Command::Simulate(args) => {
            let config = RunConfig::resolve(&args.settings()?)?;
            let result = run_config(&config)?;
            write_run(&result)?;
            print_summary(&result);
            Ok(())
        }
        Command::Oracle(args) => {
            let mut settings = args.settings()?;
            settings.set("mode", "oracle")?;
            let config = RunConfig::resolve(&settings)?;
            let result = run_oracle(&config)?;
            write_run(&result)?;
            print_summary(&result);
            Ok(())
        }
        Command::Spectrum(args) => {
            let report = spectrum(args.mass, args.depth, args.half_width, args.check)?;
            print!("{}", spectrum_table(&report));
            if let Some(dir) = &args.out_dir {
                create_dir(dir)?;
                write_json(&dir.join("spectrum.json"), &report)?;
            }
            Ok(())
        }
        Command::Diagnose(args) => {
            // the snapshot defines its own grid; only the well and thresholds matter
            let config = RunConfig::resolve(&args.run.settings()?)?;
            let psi = read_snapshot_csv(&args.input, args.time)?;
            let split = config.split()?;
            let report = analyze(&[track_sample(&psi, &split)], &psi, &config.well, &split, &config.thresholds);
            if args.run.dry_run {
                print!("{}", config.to_settings_text());
                return Ok(());
            }
            create_dir(&config.out_dir)?;
            write_json(&config.out_dir.join("diagnostics.json"), &report)?;
            println!(
                "peaks = {}  polychotomous = {}  P_refl = {:.6e}  interior k = {}",
                report.peaks.len(),
                report.polychotomous,
                report.p_refl,
                report.interior_k.map_or("n/a".to_string(), |k| k.to_string())
            );
            Ok(())
        }
        Command::Sweep(args) => {
            let base = args.run.settings()?;
            if args.run.dry_run {
                let key = canonical_key(&args.param)?;
                for v in &args.values {
                    let mut s = base.clone();
                    s.set(key, v.clone())?;
                    println!("# {key} = {v}");
                    print!("{}", RunConfig::resolve(&s)?.to_settings_text());
                }
                return Ok(());
            }
            let entries = sweep(&base, &args.param, &args.values)?;
            let dir = PathBuf::from(base.get("out_dir").unwrap_or(DEFAULT_OUT_DIR));
            create_dir(&dir)?;
            write_json(&dir.join("sweep.json"), &entries)?;
            for e in &entries {
                let v = e.diagnostics.v_refl.map_or("n/a".to_string(), |f| format!("{:.6}", f.v));
                println!(
                    "{} = {}  P_refl = {:.6e}  v_refl = {}  polychotomous = {}",
                    e.param, e.value, e.diagnostics.p_refl, v, e.diagnostics.polychotomous
                );
            }
            Ok(())
        }
    }
}

/// Entry point of the binary; returns the process exit code. Errors go to
/// stderr as one JSON object `{"error": code, "message": text}`.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let line = ErrorLine { error: e.code(), message: e.to_string() };
            let text = serde_json::to_string(&line).unwrap_or_else(|_| format!("{{\"error\":\"{}\"}}", e.code()));
            let _ = writeln!(std::io::stderr(), "{text}");
            1
        }
    }
}
