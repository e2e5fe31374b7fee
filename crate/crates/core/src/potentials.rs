//! Attractive wells.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Largest tolerated |V| at a grid edge, relative to the depth.
pub const EDGE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WellShape {
    /// `−A exp(−(x−c)²/w²)`.
    Gaussian,
    /// `−V₀ Θ(a − |x−c|)` with `Θ(0) = 1`; width is the half-width a.
    Square,
    /// `−A / (1 + ((x−c)/w)²)`.
    Lorentzian,
}

impl fmt::Display for WellShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WellShape::Gaussian => "gaussian",
            WellShape::Square => "square",
            WellShape::Lorentzian => "lorentzian",
        })
    }
}

impl FromStr for WellShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "exponential" => Ok(WellShape::Gaussian),
            "square" => Ok(WellShape::Square),
            "lorentzian" => Ok(WellShape::Lorentzian),
            other => Err(Error::InvalidConfig(format!("unknown well shape '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub shape: WellShape,
    /// Positive depth; the well bottom sits at −depth.
    pub depth: f64,
    /// Gaussian/Lorentzian scale, or square half-width.
    pub width: f64,
    pub center: f64,
}

impl PotentialSpec {
    pub fn gaussian(depth: f64, width: f64) -> Self {
        Self { shape: WellShape::Gaussian, depth, width, center: 0.0 }
    }

    pub fn square(depth: f64, half_width: f64) -> Self {
        Self { shape: WellShape::Square, depth, width: half_width, center: 0.0 }
    }

    /// Flat zero potential. Shares the representation of a square well of
    /// depth zero; [`Self::validate`] rejects it for wells, but the
    /// propagator and oracle accept it.
    pub fn free() -> Self {
        Self { shape: WellShape::Square, depth: 0.0, width: 1.0, center: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.depth.is_finite() && self.depth > 0.0) {
            return Err(Error::InvalidPotential(format!(
                "depth must be > 0 (attractive wells only), got {}",
                self.depth
            )));
        }
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::InvalidPotential(format!("width must be > 0, got {}", self.width)));
        }
        if !self.center.is_finite() {
            return Err(Error::InvalidPotential("center must be finite".into()));
        }
        Ok(())
    }

    pub fn value_at(&self, x: f64) -> f64 {
        let s = (x - self.center).abs();
        match self.shape {
            WellShape::Gaussian => {
                let u = s / self.width;
                -self.depth * (-u * u).exp()
            }
            WellShape::Square => {
                if s <= self.width {
                    -self.depth
                } else {
                    0.0
                }
            }
            WellShape::Lorentzian => {
                let u = s / self.width;
                -self.depth / (1.0 + u * u)
            }
        }
    }

    /// Samples the well on every grid node.
    pub fn evaluate(&self, grid: &Grid) -> Result<Vec<f64>> {
        self.validate()?;
        let limit = EDGE_TOLERANCE * self.depth;
        let edge = self.value_at(grid.x_min()).abs().max(self.value_at(grid.x_max()).abs());
        if edge > limit {
            return Err(Error::WellClipped { value: edge, limit });
        }
        Ok(grid.nodes().map(|x| self.value_at(x)).collect())
    }

    /// Samples the well without validating, so a zero-depth spec yields V = 0.
    pub fn sample_unchecked(&self, grid: &Grid) -> Vec<f64> {
        if self.depth == 0.0 {
            return vec![0.0; grid.n_points()];
        }
        grid.nodes().map(|x| self.value_at(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_values() {
        let w = PotentialSpec::gaussian(1.0, 1.0);
        assert_eq!(w.value_at(0.0), -1.0);
        assert!((w.value_at(1.0) + (-1.0f64).exp()).abs() < 1e-15);
        assert!((w.value_at(1.0) + 0.367879).abs() < 1e-6);
    }

    #[test]
    fn square_edges_take_inside_value() {
        let w = PotentialSpec::square(1.0, 1.0);
        assert_eq!(w.value_at(0.999), -1.0);
        assert_eq!(w.value_at(1.0), -1.0);
        assert_eq!(w.value_at(-1.0), -1.0);
        assert_eq!(w.value_at(1.001), 0.0);
    }

    #[test]
    fn clipped_well_is_rejected() {
        let g = Grid::with_spacing(-4.0, 4.0, 0.01, 0.1).unwrap();
        let err = PotentialSpec::gaussian(1.0, 1.0).evaluate(&g).unwrap_err();
        assert!(matches!(err, Error::WellClipped { .. }));
        let g = Grid::with_spacing(-6.0, 6.0, 0.01, 0.1).unwrap();
        let v = PotentialSpec::gaussian(1.0, 1.0).evaluate(&g).unwrap();
        assert!(v.iter().all(|&x| x <= 0.0));
        assert!(v[0].abs() < 1e-10 && v[v.len() - 1].abs() < 1e-10);
    }

    #[test]
    fn invalid_specs() {
        let g = Grid::with_spacing(-6.0, 6.0, 0.01, 0.1).unwrap();
        assert!(PotentialSpec::gaussian(-1.0, 1.0).evaluate(&g).is_err());
        assert!(PotentialSpec::gaussian(1.0, 0.0).evaluate(&g).is_err());
        assert!(PotentialSpec::free().evaluate(&g).is_err());
        assert!(PotentialSpec::free().sample_unchecked(&g).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn even_about_center_and_linear_in_depth() {
        for shape in [WellShape::Gaussian, WellShape::Square, WellShape::Lorentzian] {
            let w = PotentialSpec { shape, depth: 1.3, width: 0.7, center: 0.0 };
            let shifted = PotentialSpec { center: 2.5, ..w };
            let w3 = PotentialSpec { depth: 3.0 * 1.3, ..w };
            for i in 0..200 {
                let s = 0.037 * i as f64;
                assert_eq!(w.value_at(s), w.value_at(-s));
                assert!((shifted.value_at(2.5 + s) - shifted.value_at(2.5 - s)).abs() < 1e-14);
                assert!((w3.value_at(s) - 3.0 * w.value_at(s)).abs() <= 1e-15);
            }
        }
    }
}
