//! Initial wave packets.
//!
//! Every factory multiplies a real envelope centred at `x0` by the carrier
//! `e^{iq(x−x0)}` and then normalizes numerically on the grid, so the
//! returned state has unit trapezoidal norm to rounding.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, WaveFunction};

/// Allowed tail mass outside the grid for exponentially decaying shapes.
pub const TAIL_MASS_LIMIT: f64 = 1e-10;
/// Looser limit for the Lorentzian, whose density only decays as x⁻⁴.
pub const LORENTZIAN_TAIL_MASS_LIMIT: f64 = 1e-6;
/// Minimum distance from x0 to either grid edge, in packet widths.
pub const EDGE_CLEARANCE_WIDTHS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PacketShape {
    /// `exp(−(x−x0)²/4δ²)`, width = δ.
    Gaussian,
    /// `Θ(d − |x−x0|)`, width = d (half-width).
    Square,
    /// `1/(1 + ((x−x0)/s)²)`, width = s.
    Lorentzian,
    /// `exp(−|x−x0|/s)`, width = s.
    LinearExponential,
}

impl fmt::Display for PacketShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PacketShape::Gaussian => "gaussian",
            PacketShape::Square => "square",
            PacketShape::Lorentzian => "lorentzian",
            PacketShape::LinearExponential => "linear-exponential",
        })
    }
}

impl FromStr for PacketShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(PacketShape::Gaussian),
            "square" => Ok(PacketShape::Square),
            "lorentzian" => Ok(PacketShape::Lorentzian),
            "linear-exponential" | "linexp" | "exponential" => Ok(PacketShape::LinearExponential),
            other => Err(Error::InvalidConfig(format!("unknown packet shape '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketSpec {
    pub shape: PacketShape,
    /// Mean wavenumber.
    pub q: f64,
    /// Initial centre.
    pub x0: f64,
    /// δ for Gaussian, half-width d for square, scale otherwise.
    pub width: f64,
}

impl PacketSpec {
    pub fn gaussian(q: f64, x0: f64, delta: f64) -> Self {
        Self { shape: PacketShape::Gaussian, q, x0, width: delta }
    }

    pub fn square(q: f64, x0: f64, half_width: f64) -> Self {
        Self { shape: PacketShape::Square, q, x0, width: half_width }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::InvalidPacket(format!("width must be > 0, got {}", self.width)));
        }
        if !self.q.is_finite() || !self.x0.is_finite() {
            return Err(Error::InvalidPacket("q and x0 must be finite".into()));
        }
        Ok(())
    }

    /// Real envelope before the carrier and normalization.
    fn envelope(&self, x: f64) -> f64 {
        let u = (x - self.x0) / self.width;
        match self.shape {
            PacketShape::Gaussian => (-0.25 * u * u).exp(),
            PacketShape::Square => unreachable!("square packets are sampled by index"),
            PacketShape::Lorentzian => 1.0 / (1.0 + u * u),
            PacketShape::LinearExponential => (-u.abs()).exp(),
        }
    }

    /// Fraction of the envelope's |·|² mass lying beyond distance `dist`
    /// on one side of the centre.
    fn one_sided_tail(&self, dist: f64) -> f64 {
        let u = dist / self.width;
        match self.shape {
            // |env|² = exp(−u²/2), a unit-variance normal in u.
            PacketShape::Gaussian => 0.5 * erfc_real(u / 2f64.sqrt()),
            PacketShape::Square => {
                if u > 1.0 {
                    0.0
                } else {
                    0.5
                }
            }
            // ∫_u^∞ du/(1+u²)² over the full-line value π/2.
            PacketShape::Lorentzian => {
                let tail = PI / 4.0 - 0.5 * u.atan() - 0.5 * u / (1.0 + u * u);
                tail / (PI / 2.0)
            }
            PacketShape::LinearExponential => 0.5 * (-2.0 * u).exp(),
        }
    }
}

fn erfc_real(x: f64) -> f64 {
    errorfunctions::RealErrorFunctions::erfc(x)
}

/// Builds the normalized initial state described by `spec` on `grid`.
pub fn make_packet(spec: &PacketSpec, grid: &Grid) -> Result<WaveFunction> {
    spec.validate()?;
    let dx = grid.dx();
    let limit = spec.width / 10.0;
    if dx > limit * (1.0 + 1e-12) {
        return Err(Error::UnderResolved { dx, limit });
    }
    let left = spec.x0 - grid.x_min();
    let right = grid.x_max() - spec.x0;
    let clearance = EDGE_CLEARANCE_WIDTHS * spec.width;
    if left < clearance || right < clearance {
        return Err(Error::EdgeClipping(format!(
            "x0 = {} needs {clearance} clearance from edges [{}, {}]",
            spec.x0,
            grid.x_min(),
            grid.x_max()
        )));
    }
    let tail = spec.one_sided_tail(left) + spec.one_sided_tail(right);
    let tail_limit = match spec.shape {
        PacketShape::Lorentzian => LORENTZIAN_TAIL_MASS_LIMIT,
        _ => TAIL_MASS_LIMIT,
    };
    if tail > tail_limit {
        return Err(Error::EdgeClipping(format!(
            "tail mass {tail:e} outside the grid exceeds {tail_limit:e}"
        )));
    }

    let carrier = |x: f64| Complex64::from_polar(1.0, spec.q * (x - spec.x0));
    let values: Vec<Complex64> = match spec.shape {
        PacketShape::Square => {
            let (lo, hi) = square_support(spec, grid);
            grid.nodes()
                .enumerate()
                .map(|(i, x)| {
                    if (lo..=hi).contains(&i) {
                        carrier(x)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect()
        }
        _ => grid.nodes().map(|x| carrier(x) * spec.envelope(x)).collect(),
    };
    let mut psi = WaveFunction::new(*grid, values, 0.0)?;
    psi.normalize()?;
    Ok(psi)
}

/// Inclusive node range of a sampled square packet: each edge maps to its
/// nearest node, which takes the interior value. Ties go inward, so an edge
/// midway between nodes contributes exactly its share of the box width, and
/// the support stays mirror-symmetric on a symmetric grid.
pub fn square_support(spec: &PacketSpec, grid: &Grid) -> (usize, usize) {
    let dx = grid.dx();
    let s_lo = (spec.x0 - spec.width - grid.x_min()) / dx;
    let s_hi = (spec.x0 + spec.width - grid.x_min()) / dx;
    // An edge exactly midway between two nodes is a tie; it goes to the
    // inside node so the support spans 2·width/dx cells' worth of nodes.
    let lo = nearest_node(s_lo, true).max(0.0) as usize;
    let hi = (nearest_node(s_hi, false) as usize).min(grid.n_points() - 1);
    (lo, hi)
}

/// Nearest node to fractional index `s`; ties break up when `up` is set.
fn nearest_node(s: f64, up: bool) -> f64 {
    let frac = s - s.floor();
    if (frac - 0.5).abs() < 1e-9 {
        if up {
            s.ceil()
        } else {
            s.floor()
        }
    } else {
        s.round()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(x_min: f64, x_max: f64, dx: f64) -> Grid {
        Grid::with_spacing(x_min, x_max, dx, 0.01).unwrap()
    }

    #[test]
    fn fig1_gaussian_is_normalized_and_centred() {
        let g = grid(-40.0, 20.0, 0.01);
        let psi = make_packet(&PacketSpec::gaussian(0.2, -10.0, 0.5), &g).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        let mean = psi.mean_position(g.x_min(), g.x_max()).unwrap();
        assert!((mean + 10.0).abs() < 1e-6);
        let var = psi.variance().unwrap();
        assert!((var / 0.25 - 1.0).abs() < 5e-3);
    }

    #[test]
    fn square_packet_is_flat_box() {
        let g = grid(-20.0, 20.0, 0.01);
        let spec = PacketSpec::square(1.0, -10.0, 0.5);
        let psi = make_packet(&spec, &g).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        let expected = 1.0 / (2.0 * 0.5f64).sqrt();
        for (x, z) in g.nodes().zip(psi.values()) {
            let inside = (x + 10.0).abs() < 0.5 - 0.011;
            let outside = (x + 10.0).abs() > 0.5 + 0.011;
            if inside {
                assert!((z.norm() - expected).abs() < 0.011, "x = {x}");
            } else if outside {
                assert_eq!(z.norm(), 0.0);
            }
        }
    }

    #[test]
    fn square_edge_nodes_take_interior_value() {
        let g = grid(-20.0, 20.0, 0.1);
        // edges at -10.55 and -9.45 sit exactly halfway between nodes
        let spec = PacketSpec::square(0.0, -10.0, 0.55);
        let (lo, hi) = square_support(&spec, &g);
        assert!((g.x(lo) + 10.5).abs() < 1e-9);
        assert!((g.x(hi) + 9.5).abs() < 1e-9);
        assert_eq!(hi - lo + 1, 11);
        let spec = PacketSpec::square(0.0, -10.0, 0.52);
        let (lo, hi) = square_support(&spec, &g);
        assert!((g.x(lo) + 10.5).abs() < 1e-9);
        assert!((g.x(hi) + 9.5).abs() < 1e-9);
    }

    #[test]
    fn momentum_matches_carrier() {
        let g = grid(-30.0, 10.0, 0.01);
        let psi = make_packet(&PacketSpec::gaussian(0.2, -10.0, 0.5), &g).unwrap();
        assert!((psi.momentum_expectation() - 0.2).abs() < 1e-3);
        let g = grid(-30.0, 10.0, 0.02);
        let psi = make_packet(&PacketSpec::gaussian(1.4, -10.0, 0.5), &g).unwrap();
        assert!((psi.momentum_expectation() - 1.4).abs() < 2e-3);
    }

    #[test]
    fn resolution_and_clipping_errors() {
        let g = grid(-20.0, 20.0, 0.1);
        let err = make_packet(&PacketSpec::gaussian(0.0, 0.0, 0.5), &g).unwrap_err();
        assert!(matches!(err, Error::UnderResolved { .. }));
        let g = grid(-12.0, 20.0, 0.01);
        let err = make_packet(&PacketSpec::gaussian(0.0, -10.0, 0.5), &g).unwrap_err();
        assert!(matches!(err, Error::EdgeClipping(_)));
        // clearance ok but the Gaussian tail mass is not
        let g = grid(-10.0, 10.0, 0.01);
        let err = make_packet(&PacketSpec::gaussian(0.0, 0.0, 1.8), &g).unwrap_err();
        assert!(matches!(err, Error::EdgeClipping(_)));
        assert!(make_packet(&PacketSpec::gaussian(0.0, 0.0, -1.0), &g).is_err());
    }

    #[test]
    fn every_shape_is_real_and_even_at_rest() {
        let g = grid(-50.0, 50.0, 0.01);
        for shape in [
            PacketShape::Gaussian,
            PacketShape::Square,
            PacketShape::Lorentzian,
            PacketShape::LinearExponential,
        ] {
            let spec = PacketSpec { shape, q: 0.0, x0: 0.0, width: 0.5 };
            let psi = make_packet(&spec, &g).unwrap();
            let v = psi.values();
            let n = v.len();
            for i in 0..n {
                assert_eq!(v[i].im, 0.0);
                assert!((v[i] - v[n - 1 - i]).norm() < 1e-12, "{shape} at {i}");
            }
        }
    }

    #[test]
    fn shape_names_round_trip() {
        for shape in [
            PacketShape::Gaussian,
            PacketShape::Square,
            PacketShape::Lorentzian,
            PacketShape::LinearExponential,
        ] {
            assert_eq!(shape.to_string().parse::<PacketShape>().unwrap(), shape);
        }
        assert!("triangle".parse::<PacketShape>().is_err());
    }
}
