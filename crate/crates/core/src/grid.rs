//! Discretization frame and the observables evaluated on it.
//!
//! Natural units (ħ = 1) throughout. All spatial integrals use the
//! trapezoidal rule, i.e. the exact integral of the piecewise-linear
//! interpolant of the sampled integrand. That makes interval integrals
//! additive and makes the full-domain interval coincide with [`WaveFunction::norm`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default probability below which a region counts as empty.
pub const EMPTY_REGION_THRESHOLD: f64 = 1e-8;

/// Uniform 1-D lattice plus time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
    dt: f64,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize, dt: f64) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(Error::InvalidGrid(format!(
                "need finite x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if n_points < 3 {
            return Err(Error::InvalidGrid(format!("need n_points >= 3, got {n_points}")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidGrid(format!("need dt > 0, got {dt}")));
        }
        Ok(Self { x_min, x_max, n_points, dt })
    }

    /// Grid on `[x_min, x_max]` whose spacing is the nearest value to `dx`
    /// that divides the interval evenly.
    pub fn with_spacing(x_min: f64, x_max: f64, dx: f64, dt: f64) -> Result<Self> {
        if !(dx.is_finite() && dx > 0.0) {
            return Err(Error::InvalidGrid(format!("need dx > 0, got {dx}")));
        }
        let cells = ((x_max - x_min) / dx).round();
        if !(cells.is_finite() && cells >= 2.0) {
            return Err(Error::InvalidGrid(format!(
                "spacing {dx} does not fit [{x_min}, {x_max}]"
            )));
        }
        Self::new(x_min, x_max, cells as usize + 1, dt)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    /// Same lattice, different time step.
    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        Self::new(self.x_min, self.x_max, self.n_points, dt)
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        let dx = self.dx();
        (0..self.n_points).map(move |i| self.x_min + i as f64 * dx)
    }

    /// Index of the node closest to `x`, clamped to the grid.
    pub fn nearest_index(&self, x: f64) -> usize {
        let s = ((x - self.x_min) / self.dx()).round();
        if s <= 0.0 {
            0
        } else {
            (s as usize).min(self.n_points - 1)
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// Trapezoidal integral of a sampled field over `[a, b]`, with `a` and
    /// `b` clamped to the grid extent. Partial cells use the linear
    /// interpolant, so the result is additive over adjacent intervals.
    pub fn integrate(&self, samples: &[f64], a: f64, b: f64) -> Result<f64> {
        if !(a < b) {
            return Err(Error::InvalidInterval { a, b });
        }
        debug_assert_eq!(samples.len(), self.n_points);
        let lo = a.max(self.x_min);
        let hi = b.min(self.x_max);
        if lo >= hi {
            return Ok(0.0);
        }
        let dx = self.dx();
        let last_cell = self.n_points - 2;
        let cell_of = |x: f64| (((x - self.x_min) / dx).floor().max(0.0) as usize).min(last_cell);
        let (first, last) = (cell_of(lo), cell_of(hi));
        let mut total = 0.0;
        for j in first..=last {
            let xj = self.x(j);
            let l = if j == first { lo } else { xj };
            let r = if j == last { hi } else { xj + dx };
            if r <= l {
                continue;
            }
            if j != first && j != last {
                total += 0.5 * dx * (samples[j] + samples[j + 1]);
            } else {
                let s = (0.5 * (l + r) - xj) / dx;
                total += (r - l) * (samples[j] + s * (samples[j + 1] - samples[j]));
            }
        }
        Ok(total)
    }
}

/// Physical constants of the scattered particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    mass: f64,
}

impl PhysicalParams {
    pub fn new(mass: f64) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidConfig(format!("mass must be > 0, got {mass}")));
        }
        Ok(Self { mass })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }
}

/// Complex field sampled on a [`Grid`] at a given elapsed time.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: Grid,
    values: Vec<Complex64>,
    time: f64,
}

impl WaveFunction {
    pub fn new(grid: Grid, values: Vec<Complex64>, time: f64) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::InvalidGrid(format!(
                "expected {} amplitudes, got {}",
                grid.n_points(),
                values.len()
            )));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidGrid("non-finite amplitude".into()));
        }
        Ok(Self { grid, values, time })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.n_points()], time: 0.0 }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let values = grid.nodes().map(f).collect();
        Self::new(grid, values, 0.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub(crate) fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn density(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn abs(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm()).collect()
    }

    /// Scales the amplitudes so that [`Self::norm`] is one.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidPacket(format!("cannot normalize, norm = {n}")));
        }
        let s = 1.0 / n.sqrt();
        self.values.iter_mut().for_each(|z| *z *= s);
        Ok(())
    }

    /// ∫|ψ|² dx over the whole grid.
    pub fn norm(&self) -> f64 {
        self.grid
            .integrate(&self.density(), self.grid.x_min(), self.grid.x_max())
            .unwrap_or(0.0)
    }

    /// ∫ₐᵇ |ψ|² dx.
    pub fn probability_in(&self, a: f64, b: f64) -> Result<f64> {
        self.grid.integrate(&self.density(), a, b)
    }

    /// ∫ₐᵇ x|ψ|² dx, not divided by the region's probability.
    pub fn center_of_mass(&self, a: f64, b: f64) -> Result<f64> {
        self.center_of_mass_with_threshold(a, b, EMPTY_REGION_THRESHOLD)
    }

    pub fn center_of_mass_with_threshold(&self, a: f64, b: f64, threshold: f64) -> Result<f64> {
        let p = self.probability_in(a, b)?;
        if p < threshold {
            return Err(Error::EmptyRegion { probability: p, threshold });
        }
        self.first_moment(a, b)
    }

    /// Conditional mean position ∫ₐᵇ x|ψ|² dx / ∫ₐᵇ |ψ|² dx.
    pub fn mean_position(&self, a: f64, b: f64) -> Result<f64> {
        self.mean_position_with_threshold(a, b, EMPTY_REGION_THRESHOLD)
    }

    pub fn mean_position_with_threshold(&self, a: f64, b: f64, threshold: f64) -> Result<f64> {
        let p = self.probability_in(a, b)?;
        if p < threshold {
            return Err(Error::EmptyRegion { probability: p, threshold });
        }
        Ok(self.first_moment(a, b)? / p)
    }

    fn first_moment(&self, a: f64, b: f64) -> Result<f64> {
        let weighted: Vec<f64> =
            self.grid.nodes().zip(&self.values).map(|(x, z)| x * z.norm_sqr()).collect();
        self.grid.integrate(&weighted, a, b)
    }

    /// Spatial variance of |ψ|² over the whole grid.
    pub fn variance(&self) -> Result<f64> {
        let (a, b) = (self.grid.x_min(), self.grid.x_max());
        let mean = self.mean_position(a, b)?;
        let p = self.probability_in(a, b)?;
        let second: Vec<f64> = self
            .grid
            .nodes()
            .zip(&self.values)
            .map(|(x, z)| (x - mean).powi(2) * z.norm_sqr())
            .collect();
        Ok(self.grid.integrate(&second, a, b)? / p)
    }

    /// ⟨p⟩ = Im ∫ψ* ∂ₓψ dx with centered differences (Dirichlet zero outside).
    pub fn momentum_expectation(&self) -> f64 {
        let v = &self.values;
        let n = v.len();
        let at = |i: isize| -> Complex64 {
            if i < 0 || i as usize >= n {
                Complex64::new(0.0, 0.0)
            } else {
                v[i as usize]
            }
        };
        let sum: f64 = (0..n as isize)
            .map(|i| (at(i).conj() * (at(i + 1) - at(i - 1))).im)
            .sum();
        0.5 * sum
    }
}
