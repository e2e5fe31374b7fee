use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid interval: a = {a} must be < b = {b}")]
    InvalidInterval { a: f64, b: f64 },

    #[error("empty region: probability {probability:e} below threshold {threshold:e}")]
    EmptyRegion { probability: f64, threshold: f64 },

    #[error("invalid packet: {0}")]
    InvalidPacket(String),

    #[error("under-resolved packet: dx = {dx} exceeds width/10 = {limit}")]
    UnderResolved { dx: f64, limit: f64 },

    #[error("edge clipping: {0}")]
    EdgeClipping(String),

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("well clipped: |V| = {value:e} at the grid edge exceeds {limit:e}")]
    WellClipped { value: f64, limit: f64 },

    #[error("diverged: non-finite amplitude after step {step}")]
    Diverged { step: u64 },

    #[error("invalid run request: {0}")]
    InvalidRun(String),

    #[error("grid too small: eigenvector {index} has relative edge amplitude {amplitude:e}")]
    GridTooSmall { index: usize, amplitude: f64 },

    #[error("pole: matching system singular at p = {re} + {im}i")]
    Pole { re: f64, im: f64 },

    #[error("invalid contour: {0}")]
    InvalidContour(String),

    #[error("not converged: quadrature change {change:e} exceeds {tolerance:e}")]
    NotConverged { change: f64, tolerance: f64 },

    #[error("insufficient peaks: found {found}, need at least 3")]
    InsufficientPeaks { found: usize },

    #[error("never formed: final reflected probability {final_value:e} below 1e-3")]
    NeverFormed { final_value: f64 },

    #[error("nonlinear track: residual {residual:e} exceeds 10% of range {range:e}")]
    NonlinearTrack { residual: f64, range: f64 },

    #[error("too few samples: {found} in window, need at least {needed}")]
    TooFewSamples { found: usize, needed: usize },

    #[error("no standing pattern: {0}")]
    NoStandingPattern(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable identifier, used by the CLI error output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::InvalidInterval { .. } => "invalid_interval",
            Error::EmptyRegion { .. } => "empty_region",
            Error::InvalidPacket(_) => "invalid_packet",
            Error::UnderResolved { .. } => "under_resolved",
            Error::EdgeClipping(_) => "edge_clipping",
            Error::InvalidPotential(_) => "invalid_potential",
            Error::WellClipped { .. } => "well_clipped",
            Error::Diverged { .. } => "diverged",
            Error::InvalidRun(_) => "invalid_run",
            Error::GridTooSmall { .. } => "grid_too_small",
            Error::Pole { .. } => "pole",
            Error::InvalidContour(_) => "invalid_contour",
            Error::NotConverged { .. } => "not_converged",
            Error::InsufficientPeaks { .. } => "insufficient_peaks",
            Error::NeverFormed { .. } => "never_formed",
            Error::NonlinearTrack { .. } => "nonlinear_track",
            Error::TooFewSamples { .. } => "too_few_samples",
            Error::NoStandingPattern(_) => "no_standing_pattern",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
