//! Wave-packet scattering off one-dimensional attractive wells.
//!
//! A packet narrower than the well excites a near-zero-energy quasi-bound
//! state, and the well then emits a coherent multi-peak ("polychotomous")
//! train backwards. This crate provides the pieces needed to produce and
//! measure that effect:
//!
//! - [`grid`]: lattice, wavefunction and trapezoidal observables
//! - [`packets`], [`potentials`]: initial states and wells
//! - [`propagator`]: unitary Cayley (Crank–Nicolson) time stepping
//! - [`spectral`]: square-well bound states, resonance detuning, a
//!   discrete-diagonalization cross-check
//! - [`oracle`]: semi-analytic square packet / square well evolution
//! - [`diagnostics`]: region probabilities, peak trains, envelope fits
//! - [`cli`]: presets, config files and output writers behind the binary
//!
//! Units are natural, ħ = 1.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod oracle;
pub mod packets;
pub mod potentials;
pub mod propagator;
pub mod spectral;

pub use diagnostics::{
    analyze, classify, detect_peaks, fit_envelope, formation_time, interior_wavenumber, reflected_speed, split_probabilities,
    transmitted_speed, DiagnosticsReport, EnvelopeFit, Peak, RegionSplit, Thresholds,
};
pub use error::{Error, Result};
pub use grid::{Grid, PhysicalParams, WaveFunction};
pub use oracle::{evolve_analytic, packet_amplitude, stationary_state, ContourConfig, ContourPath, SquareOracle, StationaryState};
pub use packets::{make_packet, PacketShape, PacketSpec};
pub use potentials::{PotentialSpec, WellShape};
pub use propagator::{default_grid, grid_for, run, run_observed, staggered_grid, Propagator, RunOptions, RunOutput};
pub use spectral::{bound_states, diagonalize_well, predicted_reflected_k, resonance_detuning, BoundStateSet, Parity};
