//! Unitary time evolution on the grid.
//!
//! One step solves
//!
//! ```text
//! (1 + i H dt/2) ψⁿ⁺¹ = (1 − i H dt/2) ψⁿ,
//! H ψᵢ = −(ψᵢ₊₁ − 2ψᵢ + ψᵢ₋₁) / (2 m dx²) + Vᵢ ψᵢ,
//! ```
//!
//! with ψ = 0 held at both edge nodes. H is real symmetric, so the Cayley
//! map is exactly unitary; the tridiagonal left-hand side is factored once
//! and each step costs one forward sweep and one back substitution.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use std::f64::consts::PI;

use crate::grid::{Grid, PhysicalParams, WaveFunction};
use crate::packets::{PacketShape, PacketSpec, EDGE_CLEARANCE_WIDTHS};
use crate::potentials::{PotentialSpec, WellShape};

/// Tolerated |norm − 1| drift over a run.
pub const NORM_DRIFT_LIMIT: f64 = 1e-4;
/// |ψ|² above this within [`EDGE_NODES`] of a wall marks boundary contamination.
pub const CONTAMINATION_THRESHOLD: f64 = 1e-6;
pub const EDGE_NODES: usize = 5;

/// Twisted LU factors of `1 + i H dt/2` restricted to the interior nodes.
///
/// Elimination runs downward from the first interior node and upward from
/// the last one, meeting at a middle row. The two recurrences are
/// independent, so the sweeps interleave them and the latency-bound
/// chains overlap.
#[derive(Debug, Clone)]
struct CayleyFactor {
    dt: f64,
    /// γ = dt / (4 m dx²); the LHS off-diagonal is `−iγ`
    coupling: f64,
    /// hᵢ = dt/2 · (1/(m dx²) + Vᵢ); the explicit diagonal is `1 − i hᵢ`
    half_diag: Vec<f64>,
    /// eliminated off-diagonal toward the middle row: c'ᵢ above it, e'ᵢ below
    reduced: Vec<Complex64>,
    /// reciprocal pivots; the middle row holds the twisted pivot
    inv_pivot: Vec<Complex64>,
    /// index of the meeting row (global node index)
    middle: usize,
}

impl CayleyFactor {
    fn new(potential: &[f64], mass: f64, dx: f64, dt: f64) -> Self {
        let n = potential.len();
        let kinetic = 1.0 / (mass * dx * dx);
        let coupling = 0.25 * dt * kinetic;
        let half_diag: Vec<f64> = potential.iter().map(|&v| 0.5 * dt * (kinetic + v)).collect();
        let lhs_diag: Vec<Complex64> = half_diag.iter().map(|&h| Complex64::new(1.0, h)).collect();
        let off = Complex64::new(0.0, -coupling);
        let zero = Complex64::new(0.0, 0.0);
        let mut reduced = vec![zero; n];
        let mut inv_pivot = vec![zero; n];
        // interior nodes are 1..=n-2; edge nodes stay zero
        let middle = (n - 1) / 2;
        let mut above = zero;
        for i in 1..middle {
            let inv = (lhs_diag[i] - off * above).inv();
            inv_pivot[i] = inv;
            reduced[i] = off * inv;
            above = reduced[i];
        }
        let mut below = zero;
        for i in (middle + 1..n - 1).rev() {
            let inv = (lhs_diag[i] - off * below).inv();
            inv_pivot[i] = inv;
            reduced[i] = off * inv;
            below = reduced[i];
        }
        inv_pivot[middle] = (lhs_diag[middle] - off * (above + below)).inv();
        Self { dt, coupling, half_diag, reduced, inv_pivot, middle }
    }

    /// Advances `psi` in place; `scratch` has the same length.
    fn apply(&self, psi: &mut [Complex64], scratch: &mut [Complex64]) {
        let n = psi.len();
        let gamma = self.coupling;
        let m = self.middle;
        // (1 − i hᵢ) ψᵢ + iγ (ψᵢ₋₁ + ψᵢ₊₁) = ψᵢ + i wᵢ with wᵢ real-scaled
        let rhs = |psi: &[Complex64], i: usize| {
            let w = (psi[i - 1] + psi[i + 1]) * gamma - psi[i] * self.half_diag[i];
            Complex64::new(psi[i].re - w.im, psi[i].im + w.re)
        };

        // Eliminate toward the middle: d'ᵢ = rhsᵢ/pivotᵢ − c'ᵢ d'ᵢ₋₁ (and the
        // mirror image from below), one multiply on each recurrence chain.
        let zero = Complex64::new(0.0, 0.0);
        let (mut top, mut bottom) = (zero, zero);
        let upper_rows = m - 1;
        let lower_rows = n - 2 - m;
        for s in 0..upper_rows.max(lower_rows) {
            if s < upper_rows {
                let i = 1 + s;
                top = rhs(psi, i) * self.inv_pivot[i] - self.reduced[i] * top;
                scratch[i] = top;
            }
            if s < lower_rows {
                let i = n - 2 - s;
                bottom = rhs(psi, i) * self.inv_pivot[i] - self.reduced[i] * bottom;
                scratch[i] = bottom;
            }
        }
        let off = Complex64::new(0.0, -gamma);
        let centre = (rhs(psi, m) - off * (top + bottom)) * self.inv_pivot[m];

        // Substitute outward from the middle.
        psi[0] = zero;
        psi[n - 1] = zero;
        psi[m] = centre;
        let (mut up, mut down) = (centre, centre);
        for s in 0..upper_rows.max(lower_rows) {
            if s < upper_rows {
                let i = m - 1 - s;
                up = scratch[i] - self.reduced[i] * up;
                psi[i] = up;
            }
            if s < lower_rows {
                let i = m + 1 + s;
                down = scratch[i] - self.reduced[i] * down;
                psi[i] = down;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormSample {
    pub time: f64,
    pub norm: f64,
}

/// Evolving state plus the unitarity monitor.
#[derive(Debug, Clone)]
pub struct Propagator {
    psi: WaveFunction,
    potential: Vec<f64>,
    params: PhysicalParams,
    step_count: u64,
    norm_log: Vec<NormSample>,
    log_every: u64,
    initial_norm: f64,
    max_drift: f64,
    factor: CayleyFactor,
    scratch: Vec<Complex64>,
    /// time at the last change of time step; times are epoch + k·dt
    dt_epoch: f64,
    steps_since_dt_change: u64,
}

impl Propagator {
    pub fn new(initial: WaveFunction, potential: Vec<f64>, params: PhysicalParams) -> Result<Self> {
        let grid = *initial.grid();
        if potential.len() != grid.n_points() {
            return Err(Error::InvalidRun(format!(
                "potential has {} samples, grid has {}",
                potential.len(),
                grid.n_points()
            )));
        }
        if potential.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRun("non-finite potential".into()));
        }
        let factor = CayleyFactor::new(&potential, params.mass(), grid.dx(), grid.dt());
        let initial_norm = initial.norm();
        let time = initial.time();
        Ok(Self {
            scratch: vec![Complex64::new(0.0, 0.0); grid.n_points()],
            psi: initial,
            potential,
            params,
            step_count: 0,
            norm_log: vec![NormSample { time, norm: initial_norm }],
            log_every: 100,
            initial_norm,
            max_drift: 0.0,
            factor,
            dt_epoch: time,
            steps_since_dt_change: 0,
        })
    }

    /// Steps between norm-log entries (default 100).
    pub fn set_log_interval(&mut self, steps: u64) {
        self.log_every = steps.max(1);
    }

    /// Replaces the time step; a negative value runs the map backwards.
    pub fn set_time_step(&mut self, dt: f64) -> Result<()> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::InvalidRun(format!("time step must be non-zero, got {dt}")));
        }
        let grid = *self.psi.grid();
        self.factor = CayleyFactor::new(&self.potential, self.params.mass(), grid.dx(), dt);
        self.dt_epoch = self.psi.time();
        self.steps_since_dt_change = 0;
        Ok(())
    }

    pub fn time_step(&self) -> f64 {
        self.factor.dt
    }

    pub fn state(&self) -> &WaveFunction {
        &self.psi
    }

    pub fn into_state(self) -> WaveFunction {
        self.psi
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn params(&self) -> PhysicalParams {
        self.params
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn norm_log(&self) -> &[NormSample] {
        &self.norm_log
    }

    /// Largest |norm − norm₀| seen at a logged step.
    pub fn max_norm_drift(&self) -> f64 {
        self.max_drift
    }

    /// False once the logged norm has drifted by more than [`NORM_DRIFT_LIMIT`].
    pub fn is_valid(&self) -> bool {
        self.max_drift < NORM_DRIFT_LIMIT
    }

    pub fn step(&mut self) -> Result<()> {
        self.factor.apply(self.psi.values_mut(), &mut self.scratch);
        self.step_count += 1;
        self.steps_since_dt_change += 1;
        let t = self.dt_epoch + self.steps_since_dt_change as f64 * self.factor.dt;
        self.psi.set_time(t);
        if self.step_count % self.log_every == 0 {
            self.log_norm()?;
        }
        Ok(())
    }

    fn log_norm(&mut self) -> Result<()> {
        let norm = self.psi.norm();
        if !norm.is_finite() {
            return Err(Error::Diverged { step: self.step_count });
        }
        self.max_drift = self.max_drift.max((norm - self.initial_norm).abs());
        let time = self.psi.time();
        if self.norm_log.last().map(|s| s.time) != Some(time) {
            self.norm_log.push(NormSample { time, norm });
        }
        Ok(())
    }

    /// Peak |ψ|² on the outermost `nodes` nodes at either wall.
    pub fn edge_density(&self, nodes: usize) -> f64 {
        let v = self.psi.values();
        let k = nodes.min(v.len() / 2);
        v[..k].iter().chain(&v[v.len() - k..]).map(|z| z.norm_sqr()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Times at which full snapshots are returned (nearest step).
    pub snapshot_times: Vec<f64>,
    /// Cadence of observer callbacks; `None` only calls at snapshots.
    pub sample_interval: Option<f64>,
    /// Stop at the first step with boundary contamination.
    pub stop_on_contamination: bool,
    pub contamination_threshold: f64,
    pub norm_log_interval: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            snapshot_times: Vec::new(),
            sample_interval: None,
            stop_on_contamination: true,
            contamination_threshold: CONTAMINATION_THRESHOLD,
            norm_log_interval: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub final_state: WaveFunction,
    pub snapshots: Vec<WaveFunction>,
    pub norm_log: Vec<NormSample>,
    pub steps: u64,
    pub max_norm_drift: f64,
    /// First time |ψ|² near a wall exceeded the contamination threshold.
    pub contamination_time: Option<f64>,
    /// True when the run stopped before `t_max` because of contamination.
    pub aborted: bool,
}

impl RunOutput {
    pub fn norm_valid(&self) -> bool {
        self.max_norm_drift < NORM_DRIFT_LIMIT
    }
}

/// Propagates `initial` to `t_max`, collecting snapshots.
pub fn run(
    initial: WaveFunction,
    potential: Vec<f64>,
    params: PhysicalParams,
    t_max: f64,
    options: &RunOptions,
) -> Result<RunOutput> {
    run_observed(initial, potential, params, t_max, options, |_| {})
}

/// Like [`run`], calling `observer` at t = 0, at every sample time, at
/// every snapshot time and at the final state.
pub fn run_observed(
    initial: WaveFunction,
    potential: Vec<f64>,
    params: PhysicalParams,
    t_max: f64,
    options: &RunOptions,
    mut observer: impl FnMut(&WaveFunction),
) -> Result<RunOutput> {
    if !(t_max.is_finite() && t_max >= 0.0) {
        return Err(Error::InvalidRun(format!("t_max must be >= 0, got {t_max}")));
    }
    if options.snapshot_times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidRun("snapshot times must be sorted".into()));
    }
    if let Some(&t) = options.snapshot_times.iter().find(|&&t| t < 0.0 || t > t_max) {
        return Err(Error::InvalidRun(format!("snapshot time {t} outside [0, {t_max}]")));
    }
    let dt = initial.grid().dt();
    let t0 = initial.time();
    let total_steps = (t_max / dt).round() as u64;
    let to_step = |t: f64| (t / dt).round() as u64;
    let snapshot_steps: Vec<u64> = options.snapshot_times.iter().map(|&t| to_step(t)).collect();
    let sample_every = options.sample_interval.map(|s| to_step(s).max(1));

    let mut prop = Propagator::new(initial, potential, params)?;
    prop.set_log_interval(options.norm_log_interval);
    let mut snapshots = Vec::with_capacity(snapshot_steps.len());
    let mut next_snapshot = 0;
    let mut contamination_time = None;
    let mut aborted = false;

    let mut emit = |prop: &Propagator, step: u64, snapshots: &mut Vec<WaveFunction>, next: &mut usize| {
        let mut observed = false;
        while *next < snapshot_steps.len() && snapshot_steps[*next] == step {
            snapshots.push(prop.state().clone());
            *next += 1;
            observed = true;
        }
        if observed || step == 0 || sample_every.is_some_and(|k| step % k == 0) {
            observer(prop.state());
        }
    };

    emit(&prop, 0, &mut snapshots, &mut next_snapshot);
    for step in 1..=total_steps {
        prop.step()?;
        if contamination_time.is_none() && prop.edge_density(EDGE_NODES) > options.contamination_threshold {
            contamination_time = Some(prop.state().time() - t0);
            if options.stop_on_contamination {
                aborted = true;
                break;
            }
        }
        emit(&prop, step, &mut snapshots, &mut next_snapshot);
    }
    prop.log_norm()?;
    let final_state = prop.state().clone();
    Ok(RunOutput {
        final_state,
        snapshots,
        norm_log: prop.norm_log.clone(),
        steps: prop.step_count(),
        max_norm_drift: prop.max_norm_drift(),
        contamination_time,
        aborted,
    })
}

/// Resolution of the default grid rule: dx = min(packet width, well width)/25.
pub const POINTS_PER_WIDTH: f64 = 25.0;
/// Far-field density the domain edges are sized against; ten times below
/// the contamination threshold.
pub const FRONT_DENSITY: f64 = 0.1 * CONTAMINATION_THRESHOLD;
/// Relative well magnitude allowed at an edge when sizing the domain.
const WELL_EDGE_LEVEL: f64 = 1e-10;

/// Default (dx, dt) for a packet/well pair: dx = min(δ, w)/25, dt = 2m·dx².
pub fn default_resolution(packet: &PacketSpec, well: &PotentialSpec, mass: f64) -> (f64, f64) {
    let scale = if well.depth > 0.0 { packet.width.min(well.width) } else { packet.width };
    let dx = scale / POINTS_PER_WIDTH;
    (dx, 2.0 * mass * dx * dx)
}

/// Wavenumber above which the packet's momentum density, spread freely
/// over time `t`, stays below [`FRONT_DENSITY`].
///
/// A free packet at late times has |ψ(x)|² ≈ (m/t)·|φ(p)|² at p = m x/t,
/// where |φ|² is the unit-normalized momentum density of the envelope.
pub fn momentum_tail(packet: &PacketSpec, mass: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let level = FRONT_DENSITY * t / mass;
    let s = packet.width;
    let p = match packet.shape {
        // |φ|² = √(2/π) δ exp(−2δ²p²)
        PacketShape::Gaussian => {
            let peak = (2.0 / PI).sqrt() * s;
            ((peak / level).ln() / (2.0 * s * s)).max(0.0).sqrt()
        }
        // |φ|² = sin²(pd)/(π d p²) ≤ 1/(π d p²)
        PacketShape::Square => 1.0 / (PI * s * level).sqrt(),
        // |φ|² = s exp(−2s|p|)
        PacketShape::Lorentzian => ((s / level).ln() / (2.0 * s)).max(0.0),
        // |φ|² = (2s/π)/(1 + s²p²)²
        PacketShape::LinearExponential => ((2.0 * s / PI / level).sqrt() - 1.0).max(0.0).sqrt() / s,
    };
    p
}

/// Fastest speed at which appreciable density leaves the packet: the
/// momentum tail, capped by the lattice's largest group speed 1/(m dx).
pub fn front_speed(packet: &PacketSpec, mass: f64, dx: f64, t: f64) -> f64 {
    ((packet.q.abs() + momentum_tail(packet, mass, t)) / mass).min(1.0 / (mass * dx))
}

/// Distance from the well centre beyond which |V| < 1e-10·depth.
fn well_reach(well: &PotentialSpec) -> f64 {
    if well.depth <= 0.0 {
        return 0.0;
    }
    match well.shape {
        WellShape::Square => well.width,
        WellShape::Gaussian => well.width * (1.0 / WELL_EDGE_LEVEL).ln().sqrt(),
        WellShape::Lorentzian => well.width * (1.0 / WELL_EDGE_LEVEL - 1.0).sqrt(),
    }
}

/// Grid whose nodes sit at half-integer multiples of `dx` and which covers
/// `[lo, hi]`. Edges at integer multiples of `dx` (well walls, square
/// packet edges) then fall midway between nodes.
pub fn staggered_grid(lo: f64, hi: f64, dx: f64, dt: f64) -> Result<Grid> {
    if !(dx.is_finite() && dx > 0.0) || !(lo < hi) {
        return Err(Error::InvalidGrid(format!("need dx > 0 and lo < hi, got dx = {dx}, [{lo}, {hi}]")));
    }
    let first = (lo / dx - 0.5).floor();
    let last = (hi / dx - 0.5).ceil();
    let n = (last - first) as usize + 1;
    Grid::new((first + 0.5) * dx, (last + 0.5) * dx, n, dt)
}

/// Staggered grid at the given resolution, wide enough that neither the
/// spreading packet nor anything the well emits reaches an edge before
/// `t_max` at density above [`FRONT_DENSITY`].
pub fn grid_for(packet: &PacketSpec, well: &PotentialSpec, mass: f64, t_max: f64, dx: f64, dt: f64) -> Result<Grid> {
    let travel = front_speed(packet, mass, dx, t_max) * t_max;
    let margin = 2.0 * EDGE_CLEARANCE_WIDTHS * packet.width + 10.0;
    let reach = well_reach(well);
    let lo = (packet.x0 - travel - margin).min(well.center - reach - margin);
    let hi = (packet.x0.max(well.center) + travel + margin).max(well.center + reach + margin);
    staggered_grid(lo, hi, dx, dt)
}

/// The default grid rule: [`default_resolution`] on a [`grid_for`] domain.
pub fn default_grid(packet: &PacketSpec, well: &PotentialSpec, mass: f64, t_max: f64) -> Result<Grid> {
    let (dx, dt) = default_resolution(packet, well, mass);
    grid_for(packet, well, mass, t_max, dx, dt)
}
