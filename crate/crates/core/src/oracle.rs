//! Semi-analytic evolution of a square packet scattering off a square well.
//!
//! The packet `e^{iq(x−x0)} Θ(d − |x−x0|)` is expanded in stationary
//! scattering states φ(x, p) with amplitude
//! `a(p,q) = e^{−i(p−q)x0} sin((p−q)d) / (π(p−q))`, each carrying the phase
//! `e^{−ip²t/(2m)}`. Writing φ = e^{ipx} + s(x, p), the plane-wave part is the
//! free evolution of the box and has a closed form in complex error
//! functions. The scattered part s is integrated numerically along a contour
//! that leaves the real axis near p = 0 and passes above the bound-state
//! poles at p = iκₙ. Reflected terms fall off like p⁻³, interior and
//! transmitted ones only like p⁻² (T − 1 ≈ 2iamV₀/p), so P_max is grown
//! until the truncated tail is below tolerance.
//!
//! Amplitudes are in the units of the unnormalized box (height 1); multiply
//! by [`SquareOracle::normalization`] to compare with a normalized grid state.

use std::f64::consts::{FRAC_PI_4, PI};

use errorfunctions::ComplexErrorFunctions;
use gauss_quad::GaussLegendre;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::packets::{PacketShape, PacketSpec};
use crate::potentials::{PotentialSpec, WellShape};
use crate::spectral::bound_states;

type C = Complex64;

const I: C = C::new(0.0, 1.0);

/// Relative pivot size below which the matching system counts as singular.
const POLE_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryState {
    pub p: C,
    /// √(p² + 2mV₀) on the principal branch. The wavefunction is even in p′,
    /// so the branch choice does not matter.
    pub p_prime: C,
    pub mass: f64,
    pub depth: f64,
    pub half_width: f64,
    pub r: C,
    pub a_in: C,
    pub b_in: C,
    pub t: C,
    /// Relative residual of the matching system.
    pub residual: f64,
}

impl StationaryState {
    /// Full φ(x, p): incident + reflected, interior, transmitted.
    pub fn value(&self, x: f64) -> C {
        self.scattered(x) + (I * self.p * x).exp()
    }

    /// φ(x, p) − e^{ipx}.
    pub fn scattered(&self, x: f64) -> C {
        let a = self.half_width;
        if x < -a {
            self.r * (-I * self.p * x).exp()
        } else if x > a {
            (self.t - 1.0) * (I * self.p * x).exp()
        } else {
            self.a_in * (I * self.p_prime * x).exp() + self.b_in * (-I * self.p_prime * x).exp()
                - (I * self.p * x).exp()
        }
    }

    /// |R|² + |T|² − 1, meaningful for real p.
    pub fn flux_violation(&self) -> f64 {
        self.r.norm_sqr() + self.t.norm_sqr() - 1.0
    }
}

fn well_parameters(well: &PotentialSpec) -> Result<(f64, f64)> {
    if well.depth == 0.0 {
        return Ok((0.0, well.width.max(0.0)));
    }
    well.validate()?;
    if well.shape != WellShape::Square {
        return Err(Error::InvalidPotential(format!(
            "the analytic oracle needs a square well, got {}",
            well.shape
        )));
    }
    if well.center != 0.0 {
        return Err(Error::InvalidPotential("the analytic oracle needs a well centred at 0".into()));
    }
    Ok((well.depth, well.width))
}

/// Solves the continuity conditions at x = ±a for incidence from the left.
pub fn stationary_state(p: C, well: &PotentialSpec, mass: f64) -> Result<StationaryState> {
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::InvalidConfig(format!("mass must be > 0, got {mass}")));
    }
    if p == C::new(0.0, 0.0) || !p.is_finite() {
        return Err(Error::Pole { re: p.re, im: p.im });
    }
    let (depth, a) = well_parameters(well)?;
    let p_prime = (p * p + 2.0 * mass * depth).sqrt();
    if depth == 0.0 {
        return Ok(StationaryState {
            p,
            p_prime,
            mass,
            depth,
            half_width: a,
            r: C::new(0.0, 0.0),
            a_in: C::new(1.0, 0.0),
            b_in: C::new(0.0, 0.0),
            t: C::new(1.0, 0.0),
            residual: 0.0,
        });
    }
    let ep = (I * p * a).exp();
    let em = (-I * p * a).exp();
    let eqp = (I * p_prime * a).exp();
    let eqm = (-I * p_prime * a).exp();
    let zero = C::new(0.0, 0.0);
    // unknowns [R, A, B, T]; derivative rows divided by i
    let matrix = [
        [ep, -eqm, -eqp, zero],
        [-p * ep, -p_prime * eqm, p_prime * eqp, zero],
        [zero, eqp, eqm, -ep],
        [zero, p_prime * eqp, -p_prime * eqm, -p * ep],
    ];
    let rhs = [-em, -p * em, zero, zero];
    let x = solve4(matrix, rhs).ok_or(Error::Pole { re: p.re, im: p.im })?;
    let residual = relative_residual(&matrix, &x, &rhs);
    Ok(StationaryState {
        p,
        p_prime,
        mass,
        depth,
        half_width: a,
        r: x[0],
        a_in: x[1],
        b_in: x[2],
        t: x[3],
        residual,
    })
}

/// Gaussian elimination with partial pivoting on a 4×4 complex system.
fn solve4(mut m: [[C; 4]; 4], mut b: [C; 4]) -> Option<[C; 4]> {
    let scale = m.iter().flatten().fold(0.0f64, |s, v| s.max(v.norm()));
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| m[i][col].norm().total_cmp(&m[j][col].norm()))?;
        if m[pivot][col].norm() <= POLE_TOLERANCE * scale {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                let sub = f * m[col][k];
                m[row][k] -= sub;
            }
            let sub = f * b[col];
            b[row] -= sub;
        }
    }
    let mut x = [C::new(0.0, 0.0); 4];
    for row in (0..4).rev() {
        let mut acc = b[row];
        for k in row + 1..4 {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

fn relative_residual(m: &[[C; 4]; 4], x: &[C; 4], b: &[C; 4]) -> f64 {
    let mut worst = 0.0f64;
    for row in 0..4 {
        let mut acc = -b[row];
        let mut size = b[row].norm();
        for k in 0..4 {
            acc += m[row][k] * x[k];
            size += (m[row][k] * x[k]).norm();
        }
        if size > 0.0 {
            worst = worst.max(acc.norm() / size);
        }
    }
    worst
}

fn square_packet(spec: &PacketSpec) -> Result<(f64, f64, f64)> {
    if spec.shape != PacketShape::Square {
        return Err(Error::InvalidPacket(format!(
            "the analytic oracle needs a square packet, got {}",
            spec.shape
        )));
    }
    spec.validate()?;
    Ok((spec.q, spec.x0, spec.width))
}

fn amplitude(p: C, q: f64, x0: f64, d: f64) -> C {
    let k = p - q;
    let z = k * d;
    let sinc = if z.norm() < 1e-4 { 1.0 - z * z / 6.0 } else { z.sin() / z };
    (-I * k * x0).exp() * sinc * (d / PI)
}

/// Fourier amplitude a(p, q) of the unnormalized square packet, with the
/// inverse transform ψ(x) = ∫ a(p) e^{ipx} dp.
pub fn packet_amplitude(p: C, spec: &PacketSpec) -> Result<C> {
    let (q, x0, d) = square_packet(spec)?;
    Ok(amplitude(p, q, x0, d))
}

/// Closed-form free evolution of the unnormalized square packet.
pub fn free_square_packet(x: f64, t: f64, q: f64, x0: f64, d: f64, mass: f64) -> C {
    let carrier = (I * q * (x - x0)).exp();
    if t == 0.0 {
        let s = (x - x0).abs();
        return if s < d {
            carrier
        } else if s == d {
            carrier * 0.5
        } else {
            C::new(0.0, 0.0)
        };
    }
    let alpha = mass / (2.0 * t);
    let c = x - q * t / mass;
    let rot = C::from_polar(alpha.sqrt(), -FRAC_PI_4);
    let z1 = rot * (x0 - d - c);
    let z2 = rot * (x0 + d - c);
    let phase = (-I * (q * q * t / (2.0 * mass))).exp();
    carrier * phase * (z2.erf() - z1.erf()) * 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContourConfig {
    /// Real part of the two vertical legs of the detour.
    pub eta: f64,
    /// Detour height; defaults to 1.25·√(2mV₀).
    pub height: Option<f64>,
    /// Truncation of the real axis; defaults to q + 40/d.
    pub p_max: Option<f64>,
    /// Gauss–Legendre nodes per panel.
    pub panel_order: usize,
    /// Phase advance of the integrand allowed per node.
    pub radians_per_node: f64,
    pub max_panel_length: f64,
    /// Absolute tolerance ε_quad on the box-normalized amplitude.
    pub tolerance: f64,
    /// Node doublings tried before giving up.
    pub max_refinements: u32,
    /// Factor applied to P_max in the truncation check.
    pub p_max_growth: f64,
    /// P_max enlargements tried before giving up.
    pub max_p_max_growths: u32,
}

impl Default for ContourConfig {
    fn default() -> Self {
        Self {
            eta: 0.05,
            height: None,
            p_max: None,
            panel_order: 24,
            radians_per_node: 0.75,
            max_panel_length: 0.5,
            tolerance: 1e-6,
            max_refinements: 2,
            p_max_growth: 1.5,
            max_p_max_growths: 10,
        }
    }
}

/// Piecewise-linear path in the complex p plane from −P_max to +P_max.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContourPath {
    pub vertices: Vec<C>,
}

impl ContourPath {
    /// Real axis with a rectangular detour of half-width `eta` and height `height`.
    pub fn detour(p_max: f64, eta: f64, height: f64) -> Result<Self> {
        if !(eta > 0.0 && height > 0.0 && p_max > eta && p_max.is_finite() && height.is_finite()) {
            return Err(Error::InvalidContour(format!(
                "need 0 < eta < p_max and height > 0, got eta={eta}, height={height}, p_max={p_max}"
            )));
        }
        Ok(Self {
            vertices: vec![
                C::new(-p_max, 0.0),
                C::new(-eta, 0.0),
                C::new(-eta, height),
                C::new(eta, height),
                C::new(eta, 0.0),
                C::new(p_max, 0.0),
            ],
        })
    }

    /// Default path for a packet and well under `config`.
    pub fn for_problem(config: &ContourConfig, packet: &PacketSpec, well: &PotentialSpec, mass: f64) -> Result<Self> {
        let (q, _, d) = square_packet(packet)?;
        let (depth, _) = well_parameters(well)?;
        let top = (2.0 * mass * depth).sqrt();
        let height = config.height.unwrap_or(if depth > 0.0 { 1.25 * top } else { 1.0 });
        let p_max = config.p_max.unwrap_or(q.abs() + 40.0 / d);
        Self::detour(p_max, config.eta, height)
    }

    /// Largest |Re p| on the path.
    pub fn p_max(&self) -> f64 {
        self.vertices.iter().fold(0.0f64, |m, v| m.max(v.re.abs()))
    }

    /// Checks endpoints and that every pole iκ lies strictly below the path.
    pub fn validate(&self, kappas: &[f64]) -> Result<()> {
        let (first, last) = match (self.vertices.first(), self.vertices.last()) {
            (Some(f), Some(l)) if self.vertices.len() >= 2 => (*f, *l),
            _ => return Err(Error::InvalidContour("a contour needs at least two vertices".into())),
        };
        if first.im != 0.0 || last.im != 0.0 || !(first.re < 0.0 && last.re > 0.0) {
            return Err(Error::InvalidContour("endpoints must be real, from −P_max to +P_max".into()));
        }
        if self.vertices.iter().any(|v| !v.is_finite() || v.im < 0.0) {
            return Err(Error::InvalidContour("the path must stay in the closed upper half plane".into()));
        }
        let mut crossings = Vec::new();
        for seg in self.vertices.windows(2) {
            let (u, v) = (seg[0], seg[1]);
            if (u.re < 0.0 && v.re >= 0.0) || (u.re >= 0.0 && v.re < 0.0) || (u.re == 0.0 && v.re == 0.0) {
                if u.re == v.re {
                    return Err(Error::InvalidContour("the path runs along the imaginary axis".into()));
                }
                let s = -u.re / (v.re - u.re);
                crossings.push(u.im + s * (v.im - u.im));
            }
        }
        let top = kappas.iter().cloned().fold(0.0f64, f64::max);
        match crossings.as_slice() {
            [h] if *h > top => Ok(()),
            [h] => {
                let pole = kappas.iter().cloned().filter(|&k| k >= *h).fold(f64::INFINITY, f64::min);
                Err(Error::InvalidContour(format!(
                    "pole at {}i lies on or above the path, which crosses the imaginary axis at {h}i",
                    pole
                )))
            }
            _ => Err(Error::InvalidContour(format!(
                "the path must cross the imaginary axis exactly once, found {} crossings",
                crossings.len()
            ))),
        }
    }

    /// Gauss–Legendre nodes and complex weights (including dp/ds) for an
    /// integrand whose phase changes at most at rate `t/m·|p| + reach`,
    /// refined `2^refine` times, with panels kept shorter than twice the
    /// distance to the nearest pole.
    fn nodes(&self, config: &ContourConfig, rate: f64, reach: f64, refine: u32, poles: &[C]) -> Vec<(C, C)> {
        let gl = GaussLegendre::new(std::num::NonZeroUsize::new(config.panel_order.max(2)).unwrap());
        let reference: &[(f64, f64)] = gl.as_node_weight_pairs();
        let per_panel = config.panel_order as f64 * config.radians_per_node / f64::from(1u32 << refine);
        let mut out = Vec::new();
        for seg in self.vertices.windows(2) {
            let (u, v) = (seg[0], seg[1]);
            let length = (v - u).norm();
            if length == 0.0 {
                continue;
            }
            let dir = (v - u) / length;
            let mut s = 0.0;
            while s < length {
                let p = u + dir * s;
                let guess = per_panel / (rate * p.norm() + reach).max(1e-12);
                let mut step = per_panel / (rate * (p.norm() + guess) + reach).max(1e-12);
                step = step.min(config.max_panel_length / f64::from(1u32 << refine));
                let near = poles.iter().map(|z| (p - z).norm()).fold(f64::INFINITY, f64::min);
                step = step.min((2.0 * near).max(1e-3));
                let end = (s + step).min(length);
                if length - end < 1e-3 * step {
                    // absorb a sliver at the segment end
                    let end = length;
                    push_panel(&mut out, reference, u, dir, s, end);
                    break;
                }
                push_panel(&mut out, reference, u, dir, s, end);
                s = end;
            }
        }
        out
    }
}

fn push_panel(out: &mut Vec<(C, C)>, reference: &[(f64, f64)], origin: C, dir: C, s0: f64, s1: f64) {
    let half = 0.5 * (s1 - s0);
    let mid = 0.5 * (s1 + s0);
    for &(xi, w) in reference {
        out.push((origin + dir * (mid + half * xi), dir * (w * half)));
    }
}

/// One quadrature node with everything that does not depend on x.
#[derive(Debug, Clone, Copy)]
struct Node {
    p: C,
    p_prime: C,
    /// weight · a(p,q) · e^{−ip²t/(2m)}
    w: C,
    r: C,
    a_in: C,
    b_in: C,
    t_minus_one: C,
}

struct Table {
    nodes: Vec<Node>,
}

impl Table {
    fn scattered(&self, x: f64, half_width: f64) -> C {
        let mut acc = C::new(0.0, 0.0);
        if x < -half_width {
            for n in &self.nodes {
                acc += n.w * n.r * (-I * n.p * x).exp();
            }
        } else if x > half_width {
            for n in &self.nodes {
                acc += n.w * n.t_minus_one * (I * n.p * x).exp();
            }
        } else {
            for n in &self.nodes {
                let inner = n.a_in * (I * n.p_prime * x).exp() + n.b_in * (-I * n.p_prime * x).exp()
                    - (I * n.p * x).exp();
                acc += n.w * inner;
            }
        }
        acc
    }

    /// Scattered part at `count` points `start + j·step`, all inside one
    /// region, advancing each node's phases by multiplication.
    fn scattered_run(&self, start: f64, step: f64, count: usize, half_width: f64) -> Vec<C> {
        let mut out = vec![C::new(0.0, 0.0); count];
        let end = start + step * (count.saturating_sub(1)) as f64;
        let region = |x: f64| if x < -half_width { 0 } else if x > half_width { 2 } else { 1 };
        debug_assert_eq!(region(start), region(end));
        match region(start) {
            0 | 2 => {
                let sign = if region(start) == 0 { -1.0 } else { 1.0 };
                for n in &self.nodes {
                    let coef = if sign < 0.0 { n.r } else { n.t_minus_one };
                    let mut term = n.w * coef * (I * sign * n.p * start).exp();
                    let ratio = (I * sign * n.p * step).exp();
                    for acc in out.iter_mut() {
                        *acc += term;
                        term *= ratio;
                    }
                }
            }
            _ => {
                for n in &self.nodes {
                    let mut up = n.w * n.a_in * (I * n.p_prime * start).exp();
                    let mut down = n.w * n.b_in * (-I * n.p_prime * start).exp();
                    let mut free = n.w * (I * n.p * start).exp();
                    let r_up = (I * n.p_prime * step).exp();
                    let r_down = (-I * n.p_prime * step).exp();
                    let r_free = (I * n.p * step).exp();
                    for acc in out.iter_mut() {
                        *acc += up + down - free;
                        up *= r_up;
                        down *= r_down;
                        free *= r_free;
                    }
                }
            }
        }
        out
    }
}

/// Points per phase-recurrence run; each run restarts from a direct exponential.
const RUN_LENGTH: usize = 256;

/// Splits `xs` into runs that are uniformly spaced and stay inside one
/// region, as (first index, length).
fn uniform_runs(xs: &[f64], half_width: f64) -> Vec<(usize, usize)> {
    let region = |x: f64| if x < -half_width { 0 } else if x > half_width { 2 } else { 1 };
    let mut runs = Vec::new();
    let mut start = 0;
    while start < xs.len() {
        let mut end = start + 1;
        if end < xs.len() {
            let step = xs[end] - xs[start];
            while end < xs.len()
                && end - start < RUN_LENGTH
                && region(xs[end]) == region(xs[start])
                && (xs[end] - xs[end - 1] - step).abs() <= 1e-9 * step.abs().max(1e-300)
                && step != 0.0
            {
                end += 1;
            }
        }
        runs.push((start, end - start));
        start = end;
    }
    runs
}

/// Square packet, square well and contour, ready for evaluation.
#[derive(Debug, Clone)]
pub struct SquareOracle {
    q: f64,
    x0: f64,
    d: f64,
    mass: f64,
    half_width: f64,
    well: PotentialSpec,
    kappas: Vec<f64>,
    config: ContourConfig,
    path: ContourPath,
}

impl SquareOracle {
    pub fn new(packet: &PacketSpec, well: &PotentialSpec, mass: f64, config: ContourConfig) -> Result<Self> {
        let path = ContourPath::for_problem(&config, packet, well, mass)?;
        Self::with_path(packet, well, mass, config, path)
    }

    pub fn with_path(
        packet: &PacketSpec,
        well: &PotentialSpec,
        mass: f64,
        config: ContourConfig,
        path: ContourPath,
    ) -> Result<Self> {
        let (q, x0, d) = square_packet(packet)?;
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidConfig(format!("mass must be > 0, got {mass}")));
        }
        let (depth, half_width) = well_parameters(well)?;
        if depth > 0.0 && x0 + d >= -half_width {
            return Err(Error::InvalidPacket(format!(
                "the packet must start entirely left of the well: x0 + d = {} ≥ −a = {}",
                x0 + d,
                -half_width
            )));
        }
        if !(config.tolerance > 0.0 && config.panel_order >= 2 && config.radians_per_node > 0.0) {
            return Err(Error::InvalidConfig("invalid contour quadrature settings".into()));
        }
        let kappas = if depth > 0.0 { bound_states(mass, depth, half_width)?.kappas() } else { Vec::new() };
        path.validate(&kappas)?;
        Ok(Self { q, x0, d, mass, half_width, well: *well, kappas, config, path })
    }

    pub fn path(&self) -> &ContourPath {
        &self.path
    }

    pub fn config(&self) -> &ContourConfig {
        &self.config
    }

    /// Factor turning box amplitudes into a unit-norm wavefunction.
    pub fn normalization(&self) -> f64 {
        1.0 / (2.0 * self.d).sqrt()
    }

    /// Free evolution of the box (no well).
    pub fn free_amplitude(&self, x: f64, t: f64) -> C {
        free_square_packet(x, t, self.q, self.x0, self.d, self.mass)
    }

    fn table(&self, path: &ContourPath, t: f64, reach: f64, refine: u32) -> Result<Table> {
        let poles: Vec<C> = self.kappas.iter().map(|&k| C::new(0.0, k)).collect();
        let raw = path.nodes(&self.config, t / self.mass, reach, refine, &poles);
        let nodes = raw
            .into_par_iter()
            .map(|(p, w)| {
                let state = stationary_state(p, &self.well, self.mass)?;
                let factor = amplitude(p, self.q, self.x0, self.d)
                    * (-I * (p * p * (t / (2.0 * self.mass)) + self.q * self.x0)).exp();
                Ok(Node {
                    p,
                    p_prime: state.p_prime,
                    w: w * factor,
                    r: state.r,
                    a_in: state.a_in,
                    b_in: state.b_in,
                    t_minus_one: state.t - 1.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Table { nodes })
    }

    /// Table for a path piece; tail pieces are stored as
    /// [−grown, −p_max, p_max, grown] and skip the middle.
    fn tabulate(&self, piece: &ContourPath, t: f64, reach: f64, refine: u32) -> Result<Table> {
        let v = &piece.vertices;
        if v.len() == 4 && v.iter().all(|z| z.im == 0.0) && v[1].re < 0.0 && v[2].re > 0.0 {
            self.tail_table(v[2].re, v[3].re, t, reach, refine)
        } else {
            self.table(piece, t, reach, refine)
        }
    }

    /// Tail segments between ±`p_max` and ±`grown`, as a separate table.
    fn tail_table(&self, p_max: f64, grown: f64, t: f64, reach: f64, refine: u32) -> Result<Table> {
        let left = ContourPath { vertices: vec![C::new(-grown, 0.0), C::new(-p_max, 0.0)] };
        let right = ContourPath { vertices: vec![C::new(p_max, 0.0), C::new(grown, 0.0)] };
        let mut a = self.table(&left, t, reach, refine)?;
        a.nodes.extend(self.table(&right, t, reach, refine)?.nodes);
        Ok(a)
    }

    fn reach(&self, xs: &[f64]) -> f64 {
        let x_max = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        x_max + self.x0.abs() + self.d + self.half_width
    }

    /// ψ(x, t) in box units, with the node-doubling and P_max checks.
    pub fn evaluate(&self, x: f64, t: f64) -> Result<C> {
        Ok(self.profile(&[x], t, 1)?[0])
    }

    /// ψ at every x in `xs`, sharing one quadrature table. The convergence
    /// checks run on every `check_stride`-th point (and the last one).
    pub fn profile(&self, xs: &[f64], t: f64, check_stride: usize) -> Result<Vec<C>> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidConfig(format!("time must be ≥ 0, got {t}")));
        }
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("positions must be finite".into()));
        }
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let reach = self.reach(xs);
        let stride = check_stride.max(1);
        let checked: Vec<usize> = (0..xs.len()).filter(|i| i % stride == 0 || *i == xs.len() - 1).collect();
        let a = self.half_width;
        let tol = self.config.tolerance;
        let mut refine = 0;
        let mut growths = 0;
        let mut p_max = self.path.p_max();
        // The path as a list of pieces, each tabulated at levels refine and refine + 1.
        let mut pieces: Vec<(ContourPath, Table, Table)> = Vec::new();
        let mut base_sum: Vec<C> = Vec::new();
        let mut fine_sum: Vec<C> = Vec::new();
        let sum_at = |table: &Table| -> Vec<C> { checked.par_iter().map(|&i| table.scattered(xs[i], a)).collect() };
        loop {
            if pieces.is_empty() {
                let base = self.table(&self.path, t, reach, refine)?;
                let fine = self.table(&self.path, t, reach, refine + 1)?;
                base_sum = sum_at(&base);
                fine_sum = sum_at(&fine);
                pieces.push((self.path.clone(), base, fine));
            }
            let grown = p_max * self.config.p_max_growth;
            let tail_path = ContourPath {
                vertices: vec![C::new(-grown, 0.0), C::new(-p_max, 0.0), C::new(p_max, 0.0), C::new(grown, 0.0)],
            };
            let tail = self.tail_table(p_max, grown, t, reach, refine)?;
            let tail_sum = sum_at(&tail);
            let doubling = base_sum.iter().zip(&fine_sum).fold(0.0f64, |w, (b, f)| w.max((f - b).norm()));
            let truncation = tail_sum.iter().fold(0.0f64, |w, v| w.max(v.norm()));
            if doubling < tol && truncation < tol {
                let runs = uniform_runs(xs, a);
                let parts: Vec<Vec<C>> = runs
                    .par_iter()
                    .map(|&(first, len)| {
                        let step = if len > 1 { xs[first + 1] - xs[first] } else { 0.0 };
                        let mut acc = vec![C::new(0.0, 0.0); len];
                        for piece in &pieces {
                            let run = piece.2.scattered_run(xs[first], step, len, a);
                            acc.iter_mut().zip(run).for_each(|(s, v)| *s += v);
                        }
                        acc.iter_mut()
                            .zip(&xs[first..first + len])
                            .for_each(|(s, &x)| *s += self.free_amplitude(x, t));
                        acc
                    })
                    .collect();
                return Ok(parts.into_iter().flatten().collect());
            }
            let stuck_nodes = doubling >= tol && refine >= self.config.max_refinements;
            let stuck_tail = truncation >= tol && growths >= self.config.max_p_max_growths;
            if stuck_nodes || stuck_tail {
                return Err(Error::NotConverged { change: doubling.max(truncation), tolerance: tol });
            }
            if truncation >= tol {
                let fine_tail = self.tail_table(p_max, grown, t, reach, refine + 1)?;
                for (acc, v) in base_sum.iter_mut().zip(&tail_sum) {
                    *acc += v;
                }
                for (acc, v) in fine_sum.iter_mut().zip(sum_at(&fine_tail)) {
                    *acc += v;
                }
                pieces.push((tail_path, tail, fine_tail));
                p_max = grown;
                growths += 1;
            }
            if doubling >= tol {
                refine += 1;
                // the fine tables become the base; tabulate the next level
                base_sum = std::mem::take(&mut fine_sum);
                fine_sum = vec![C::new(0.0, 0.0); checked.len()];
                for piece in pieces.iter_mut() {
                    let finer = self.tabulate(&piece.0, t, reach, refine + 1)?;
                    for (acc, v) in fine_sum.iter_mut().zip(sum_at(&finer)) {
                        *acc += v;
                    }
                    piece.1 = std::mem::replace(&mut piece.2, finer);
                }
            }
        }
    }
}

/// ψ(x, t) of the square packet in box units along an explicit contour.
pub fn evolve_analytic(
    x: f64,
    t: f64,
    spec: &PacketSpec,
    well: &PotentialSpec,
    mass: f64,
    contour: &ContourPath,
) -> Result<C> {
    SquareOracle::with_path(spec, well, mass, ContourConfig::default(), contour.clone())?.evaluate(x, t)
}
