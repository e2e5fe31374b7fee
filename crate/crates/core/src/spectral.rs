//! Square-well bound states and the resonance bookkeeping built on them.
//!
//! Throughout, `half_width` is the half-width w of the well, so the zero-energy
//! thresholds sit at k′w = nπ (even) and k′w = (2n+1)π/2 (odd) with
//! k′ = √(2m(A+E)) and k = √(2m|E|).
//!
//! The bound-state roots are found in the angle θ with k′w = z₀ sin θ and
//! kw = z₀ cos θ, z₀ = √(2mA)·w. The conditions become smooth in θ (no
//! square-root singularity at threshold, no tan/cot poles), and each branch
//! between consecutive multiples of π/2 in k′w brackets exactly one root.

use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::potentials::PotentialSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundState {
    /// 0 for the ground state, increasing with energy.
    pub n: usize,
    pub parity: Parity,
    pub energy: f64,
    /// Exterior decay constant √(2m|E|).
    pub k: f64,
    /// Interior wavenumber √(2m(A+E)).
    pub k_prime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundStateSet {
    /// The square well the states belong to.
    pub well: PotentialSpec,
    pub mass: f64,
    pub states: Vec<BoundState>,
}

impl BoundStateSet {
    /// Residual of the matching condition for `state`, written without
    /// poles: k′ sin(k′w) − k cos(k′w) (even) or k′ cos(k′w) + k sin(k′w) (odd).
    pub fn residual(&self, state: &BoundState) -> f64 {
        let phase = state.k_prime * self.well.width;
        match state.parity {
            Parity::Even => state.k_prime * phase.sin() - state.k * phase.cos(),
            Parity::Odd => state.k_prime * phase.cos() + state.k * phase.sin(),
        }
    }

    /// Pole positions iκₙ of the scattering amplitudes, as κₙ values.
    pub fn kappas(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.k).collect()
    }

    /// Highest (least bound) state.
    pub fn shallowest(&self) -> &BoundState {
        self.states.last().expect("a 1-D attractive well always binds")
    }
}

/// Dimensionless well strength z₀ = √(2mA)·w.
pub fn well_strength(mass: f64, depth: f64, half_width: f64) -> f64 {
    (2.0 * mass * depth).sqrt() * half_width
}

fn check_positive(mass: f64, depth: f64, half_width: f64) -> Result<()> {
    for (name, v) in [("mass", mass), ("depth", depth), ("half_width", half_width)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidPotential(format!("{name} must be > 0, got {v}")));
        }
    }
    Ok(())
}

/// All bound states of the square well `−A Θ(w − |x|)`.
pub fn bound_states(mass: f64, depth: f64, half_width: f64) -> Result<BoundStateSet> {
    check_positive(mass, depth, half_width)?;
    let z0 = well_strength(mass, depth, half_width);
    let mut states = Vec::new();
    let mut j = 0usize;
    while (j as f64) * FRAC_PI_2 < z0 {
        let parity = if j % 2 == 0 { Parity::Even } else { Parity::Odd };
        // k′w ∈ (jπ/2, min((j+1)π/2, z₀)), mapped to θ = asin(k′w / z₀)
        let lo = ((j as f64) * FRAC_PI_2 / z0).min(1.0).asin();
        let hi = (((j + 1) as f64) * FRAC_PI_2 / z0).min(1.0).asin();
        let theta = bisect(lo, hi, |t| matching(z0, t, parity));
        let z = z0 * theta.sin();
        let kappa = z0 * theta.cos();
        let k = kappa / half_width;
        states.push(BoundState {
            n: j,
            parity,
            energy: -k * k / (2.0 * mass),
            k,
            k_prime: z / half_width,
        });
        j += 1;
    }
    Ok(BoundStateSet { well: PotentialSpec::square(depth, half_width), mass, states })
}

/// Matching function in θ; zero at a bound state of the given parity.
fn matching(z0: f64, theta: f64, parity: Parity) -> f64 {
    let z = z0 * theta.sin();
    let kappa = z0 * theta.cos();
    match parity {
        Parity::Even => z * z.sin() - kappa * z.cos(),
        Parity::Odd => z * z.cos() + kappa * z.sin(),
    }
}

/// Bisection to the resolution of f64 on a bracket with a sign change.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut f_lo = f(lo);
    if f_lo == 0.0 {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResonanceDetuning {
    /// Nearest zero-energy threshold, a multiple of π/2 in k′w.
    pub nearest_threshold: f64,
    /// Which multiple of π/2.
    pub multiple: usize,
    /// Even thresholds are nπ, odd ones (2n+1)π/2.
    pub parity: Parity,
    /// √(2mA)·w minus the threshold; positive means the state is just bound.
    pub detuning: f64,
}

/// How close the well sits to binding a new zero-energy state.
pub fn resonance_detuning(mass: f64, depth: f64, half_width: f64) -> Result<ResonanceDetuning> {
    check_positive(mass, depth, half_width)?;
    let z0 = well_strength(mass, depth, half_width);
    let multiple = (z0 / FRAC_PI_2).round() as usize;
    let nearest_threshold = multiple as f64 * FRAC_PI_2;
    Ok(ResonanceDetuning {
        nearest_threshold,
        multiple,
        parity: if multiple % 2 == 0 { Parity::Even } else { Parity::Odd },
        detuning: z0 - nearest_threshold,
    })
}

/// Wavenumber of the reflected train at formation, from `4 k w = π`.
pub fn predicted_reflected_k(width: f64) -> f64 {
    std::f64::consts::PI / (4.0 * width)
}

/// Well width implied by an observed train wavenumber (`4 k w = π` solved for w).
pub fn width_from_reflected_k(k: f64) -> f64 {
    std::f64::consts::PI / (4.0 * k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteState {
    pub energy: f64,
    /// Values on every grid node (zero at the walls), ∑ v² dx = 1.
    pub vector: Vec<f64>,
}

/// Negative eigenvalues of the three-point Hamiltonian with Dirichlet walls.
///
/// Eigenvalues come from Sturm-sequence bisection, eigenvectors from
/// inverse iteration, both on the symmetric tridiagonal matrix. Fails with
/// [`Error::GridTooSmall`] when a bound vector has not decayed to 1e-8 of
/// its peak within the outer band of the grid (1% of the nodes, at least 5).
pub fn diagonalize_well(spec: &PotentialSpec, mass: f64, grid: &Grid) -> Result<Vec<DiscreteState>> {
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::InvalidConfig(format!("mass must be > 0, got {mass}")));
    }
    let potential = if spec.depth == 0.0 { vec![0.0; grid.n_points()] } else { spec.evaluate(grid)? };
    let dx = grid.dx();
    let kinetic = 1.0 / (mass * dx * dx);
    let diag: Vec<f64> = potential[1..potential.len() - 1].iter().map(|v| kinetic + v).collect();
    let off = -0.5 * kinetic;
    let tri = SymTridiagonal { diag, off };

    let count = tri.count_below(0.0);
    let lower = tri.diag.iter().cloned().fold(f64::INFINITY, f64::min) - 2.0 * off.abs();
    let mut states = Vec::with_capacity(count);
    for index in 0..count {
        let energy = tri.eigenvalue(index, lower, 0.0);
        let interior = tri.eigenvector(energy);
        let mut vector = Vec::with_capacity(grid.n_points());
        vector.push(0.0);
        vector.extend(interior);
        vector.push(0.0);
        let scale = (vector.iter().map(|v| v * v).sum::<f64>() * dx).sqrt();
        let peak = vector.iter().cloned().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        let sign = peak.signum() / scale;
        vector.iter_mut().for_each(|v| *v *= sign);

        let band = (grid.n_points() / 100).max(5);
        let n = vector.len();
        let max = vector.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let edge = vector[..band].iter().chain(&vector[n - band..]).fold(0.0f64, |a, v| a.max(v.abs()));
        if edge > 1e-8 * max {
            return Err(Error::GridTooSmall { index, amplitude: edge / max });
        }
        states.push(DiscreteState { energy, vector });
    }
    Ok(states)
}

/// Real symmetric tridiagonal matrix with a constant off-diagonal.
struct SymTridiagonal {
    diag: Vec<f64>,
    off: f64,
}

impl SymTridiagonal {
    /// Number of eigenvalues strictly below `lambda` (Sturm sequence).
    fn count_below(&self, lambda: f64) -> usize {
        let off2 = self.off * self.off;
        let mut count = 0;
        let mut q = 1.0;
        for (i, &d) in self.diag.iter().enumerate() {
            q = if i == 0 { d - lambda } else { d - lambda - off2 / q };
            if q == 0.0 {
                q = -f64::EPSILON * (d.abs() + lambda.abs()).max(f64::MIN_POSITIVE);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// `index`-th smallest eigenvalue in `[lo, hi)`.
    fn eigenvalue(&self, index: usize, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > index {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Eigenvector for a converged eigenvalue by inverse iteration.
    fn eigenvector(&self, lambda: f64) -> Vec<f64> {
        let n = self.diag.len();
        let mut x = vec![1.0; n];
        for _ in 0..3 {
            x = self.solve_shifted(lambda, &x);
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= norm);
        }
        x
    }

    /// Solves (T − λ) y = b by Gaussian elimination, nudging zero pivots.
    fn solve_shifted(&self, lambda: f64, b: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let tiny = f64::EPSILON * (self.off.abs() + lambda.abs());
        let mut upper = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut prev_upper = 0.0;
        let mut prev_y = 0.0;
        for i in 0..n {
            let mut pivot = self.diag[i] - lambda - self.off * prev_upper;
            if pivot.abs() < tiny {
                pivot = tiny;
            }
            upper[i] = self.off / pivot;
            y[i] = (b[i] - self.off * prev_y) / pivot;
            prev_upper = upper[i];
            prev_y = y[i];
        }
        for i in (0..n - 1).rev() {
            y[i] -= upper[i] * y[i + 1];
        }
        y
    }
}
