//! Region probabilities, reflected-train peaks, envelope fits, formation
//! time and the polychotomy verdict.
//!
//! The reflected region is x < left_edge, the transmitted region
//! x > right_edge, and the well region lies between them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::WaveFunction;
use crate::potentials::{PotentialSpec, WellShape};

pub const DEFAULT_PROMINENCE: f64 = 0.1;
pub const DEFAULT_MAX_SPACING_COV: f64 = 0.15;
/// RMS of the log-height line fit tolerated by [`classify`].
pub const DEFAULT_MAX_ENVELOPE_RESIDUAL: f64 = 0.35;
pub const DEFAULT_FORMATION_FRACTION: f64 = 0.9;
/// Final reflected probability below which no reflected wave formed.
pub const MIN_FORMED_REFLECTION: f64 = 1e-3;
pub const MIN_SPEED_SAMPLES: usize = 10;
/// Linear-fit RMS tolerated by [`reflected_speed`], relative to the track range.
pub const MAX_TRACK_RESIDUAL: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionSplit {
    pub left_edge: f64,
    pub right_edge: f64,
}

impl RegionSplit {
    pub fn new(left_edge: f64, right_edge: f64) -> Result<Self> {
        if !(left_edge < right_edge) {
            return Err(Error::InvalidInterval { a: left_edge, b: right_edge });
        }
        Ok(Self { left_edge, right_edge })
    }

    /// `center ± width` of the well.
    pub fn from_well(well: &PotentialSpec) -> Result<Self> {
        Self::new(well.center - well.width, well.center + well.width)
    }
}

/// Part of the well where V ≤ −depth/2, where the in-well standing pattern
/// is read off. A square well is its own core.
pub fn well_core(well: &PotentialSpec) -> (f64, f64) {
    let half = match well.shape {
        WellShape::Gaussian => well.width * std::f64::consts::LN_2.sqrt(),
        WellShape::Lorentzian | WellShape::Square => well.width,
    };
    (well.center - half, well.center + half)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Probabilities {
    pub p_refl: f64,
    pub p_well: f64,
    pub p_trans: f64,
}

impl Probabilities {
    pub fn total(&self) -> f64 {
        self.p_refl + self.p_well + self.p_trans
    }
}

/// Probabilities left of, inside and right of the split.
pub fn split_probabilities(psi: &WaveFunction, split: &RegionSplit) -> Probabilities {
    let g = psi.grid();
    let density = psi.density();
    let part = |a: f64, b: f64| {
        let (a, b) = (a.max(g.x_min()), b.min(g.x_max()));
        if a < b {
            g.integrate(&density, a, b).unwrap_or(0.0)
        } else {
            0.0
        }
    };
    Probabilities {
        p_refl: part(g.x_min(), split.left_edge),
        p_well: part(split.left_edge, split.right_edge),
        p_trans: part(split.right_edge, g.x_max()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    pub x: f64,
    /// |ψ| at the refined maximum.
    pub height: f64,
    /// Topographic prominence of |ψ|² as a fraction of the regional maximum.
    pub prominence: f64,
}

/// Maxima of |ψ|² in `region` whose topographic prominence within the region
/// exceeds `prominence` × the regional maximum, refined by a parabola through
/// three samples and sorted by x.
pub fn detect_peaks(psi: &WaveFunction, region: (f64, f64), prominence: f64) -> Result<Vec<Peak>> {
    let g = psi.grid();
    let density = psi.density();
    let xs: Vec<f64> = g.nodes().collect();
    detect_peaks_in(&xs, &density, region, prominence)
}

/// [`detect_peaks`] on sampled density values at uniformly spaced `xs`.
pub fn detect_peaks_in(xs: &[f64], density: &[f64], region: (f64, f64), prominence: f64) -> Result<Vec<Peak>> {
    if !(prominence > 0.0 && prominence < 1.0) {
        return Err(Error::InvalidConfig(format!("prominence must lie in (0, 1), got {prominence}")));
    }
    if !(region.0 < region.1) {
        return Err(Error::InvalidInterval { a: region.0, b: region.1 });
    }
    let inside: Vec<usize> = (0..xs.len()).filter(|&i| xs[i] >= region.0 && xs[i] <= region.1).collect();
    if inside.len() < 3 {
        return Ok(Vec::new());
    }
    let (lo, hi) = (inside[0], inside[inside.len() - 1]);
    let rho = &density[lo..=hi];
    let top = rho.iter().cloned().fold(0.0f64, f64::max);
    if top <= 0.0 {
        return Ok(Vec::new());
    }
    let needed = prominence * top;
    let mut peaks = Vec::new();
    for i in 1..rho.len() - 1 {
        let h = rho[i];
        if !(h > rho[i - 1] && h >= rho[i + 1]) || h < needed {
            continue;
        }
        // plateau of equal values: refine from its centre
        let mut j = i;
        while j + 1 < rho.len() && rho[j + 1] == h {
            j += 1;
        }
        if j + 1 == rho.len() {
            continue;
        }
        let base = |range: &mut dyn Iterator<Item = usize>| {
            let mut low = h;
            for k in range {
                if rho[k] > h {
                    return low;
                }
                low = low.min(rho[k]);
            }
            low
        };
        let left = base(&mut (0..i).rev());
        let right = base(&mut (j + 1..rho.len()));
        if h - left.max(right) < needed {
            continue;
        }
        let relative = (h - left.max(right)) / top;
        let (x, value) = if j == i {
            parabola_vertex(xs[lo + i - 1], xs[lo + i], xs[lo + i + 1], rho[i - 1], h, rho[i + 1])
        } else {
            (0.5 * (xs[lo + i] + xs[lo + j]), h)
        };
        peaks.push(Peak { x, height: value.max(0.0).sqrt(), prominence: relative });
    }
    peaks.sort_by(|a, b| a.x.total_cmp(&b.x));
    Ok(peaks)
}

/// Vertex of the parabola through three equally spaced samples.
fn parabola_vertex(x0: f64, x1: f64, x2: f64, y0: f64, y1: f64, y2: f64) -> (f64, f64) {
    let curvature = y0 - 2.0 * y1 + y2;
    if curvature >= 0.0 {
        return (x1, y1);
    }
    let offset = 0.5 * (y0 - y2) / curvature;
    let h = 0.5 * (x2 - x0);
    (x1 + offset * h, y1 - 0.25 * (y0 - y2) * offset)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeFit {
    /// Decay rate of the peak heights with |x|, clamped at 0.
    pub lambda: f64,
    /// Modulation wavenumber π / (median peak spacing).
    pub k: f64,
    /// RMS of the ln(height) line fit.
    pub residual: f64,
    pub n_peaks: usize,
    pub median_spacing: f64,
    /// Standard deviation of the spacings over their mean.
    pub spacing_cov: f64,
}

/// Fits `e^{−λ|x|} sin²(kx)` to a peak train.
pub fn fit_envelope(peaks: &[Peak]) -> Result<EnvelopeFit> {
    if peaks.len() < 3 {
        return Err(Error::InsufficientPeaks { found: peaks.len() });
    }
    let spacings: Vec<f64> = peaks.windows(2).map(|w| w[1].x - w[0].x).collect();
    let median_spacing = median(&spacings);
    let mean = spacings.iter().sum::<f64>() / spacings.len() as f64;
    let var = spacings.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / spacings.len() as f64;
    let xs: Vec<f64> = peaks.iter().map(|p| p.x.abs()).collect();
    let ys: Vec<f64> = peaks.iter().map(|p| p.height.max(f64::MIN_POSITIVE).ln()).collect();
    let line = least_squares(&xs, &ys);
    Ok(EnvelopeFit {
        lambda: (-line.slope).max(0.0),
        k: std::f64::consts::PI / median_spacing,
        residual: line.rms,
        n_peaks: peaks.len(),
        median_spacing,
        spacing_cov: var.sqrt() / mean,
    })
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub rms: f64,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rms = (xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / n).sqrt();
    LineFit { slope, intercept, rms }
}

/// One sample of a run's history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackSample {
    pub t: f64,
    pub norm: f64,
    pub p_refl: f64,
    pub p_well: f64,
    pub p_trans: f64,
    /// Conditional mean position in the reflected region.
    pub x_refl: Option<f64>,
    /// ∫ x|ψ|² over the reflected region, not normalized.
    pub x_refl_literal: f64,
    /// Conditional mean position in the transmitted region.
    pub x_trans: Option<f64>,
}

/// Samples `psi` into a [`TrackSample`].
pub fn track_sample(psi: &WaveFunction, split: &RegionSplit) -> TrackSample {
    let g = psi.grid();
    let p = split_probabilities(psi, split);
    let refl = (g.x_min(), split.left_edge);
    let trans = (split.right_edge, g.x_max());
    let valid = |r: (f64, f64)| r.0 < r.1;
    TrackSample {
        t: psi.time(),
        norm: psi.norm(),
        p_refl: p.p_refl,
        p_well: p.p_well,
        p_trans: p.p_trans,
        x_refl: if valid(refl) { psi.mean_position(refl.0, refl.1).ok() } else { None },
        x_refl_literal: if valid(refl) {
            psi.center_of_mass_with_threshold(refl.0, refl.1, 0.0).unwrap_or(0.0)
        } else {
            0.0
        },
        x_trans: if valid(trans) { psi.mean_position(trans.0, trans.1).ok() } else { None },
    }
}

/// Rule used for the formation time, recorded in reports.
pub fn formation_definition(fraction: f64) -> String {
    format!(
        "first sampled time after which P_refl stays within {:.0}% of its final value",
        (1.0 - fraction) * 100.0
    )
}

/// First sampled time after which P_refl stays within `(1 − fraction)` of its
/// final value. For a rising track this is the first time P_refl reaches
/// `fraction` of the final value.
pub fn formation_time(track: &[TrackSample], fraction: f64) -> Result<f64> {
    let last = track.last().ok_or(Error::TooFewSamples { found: 0, needed: 1 })?;
    let final_value = last.p_refl;
    if final_value < MIN_FORMED_REFLECTION {
        return Err(Error::NeverFormed { final_value });
    }
    let band = (1.0 - fraction) * final_value;
    let mut settled = last.t;
    for s in track.iter().rev() {
        if (s.p_refl - final_value).abs() > band {
            break;
        }
        settled = s.t;
    }
    Ok(settled)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedFit {
    pub v: f64,
    pub intercept: f64,
    pub residual: f64,
    /// max − min of the fitted positions.
    pub range: f64,
    pub samples: usize,
    pub window: (f64, f64),
}

/// Slope of a position track inside `window`.
pub fn fit_speed(track: &[(f64, f64)], window: (f64, f64)) -> Result<SpeedFit> {
    let pts: Vec<(f64, f64)> = track.iter().cloned().filter(|(t, _)| *t >= window.0 && *t <= window.1).collect();
    if pts.len() < MIN_SPEED_SAMPLES {
        return Err(Error::TooFewSamples { found: pts.len(), needed: MIN_SPEED_SAMPLES });
    }
    let ts: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let line = least_squares(&ts, &xs);
    let range = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
    if line.rms > MAX_TRACK_RESIDUAL * range {
        return Err(Error::NonlinearTrack { residual: line.rms, range });
    }
    Ok(SpeedFit { v: line.slope, intercept: line.intercept, residual: line.rms, range, samples: pts.len(), window })
}

/// Conditional centre-of-mass speed of the reflected region.
pub fn reflected_speed(track: &[TrackSample], window: (f64, f64)) -> Result<SpeedFit> {
    let pts: Vec<(f64, f64)> = track.iter().filter_map(|s| s.x_refl.map(|x| (s.t, x))).collect();
    fit_speed(&pts, window)
}

/// Conditional centre-of-mass speed of the transmitted region.
pub fn transmitted_speed(track: &[TrackSample], window: (f64, f64)) -> Result<SpeedFit> {
    let pts: Vec<(f64, f64)> = track.iter().filter_map(|s| s.x_trans.map(|x| (s.t, x))).collect();
    fit_speed(&pts, window)
}

/// π over the median spacing of the maxima of |ψ| in `region`.
pub fn interior_wavenumber(psi: &WaveFunction, region: (f64, f64)) -> Result<f64> {
    let g = psi.grid();
    let xs: Vec<f64> = g.nodes().collect();
    interior_wavenumber_in(&xs, &psi.abs(), region)
}

/// [`interior_wavenumber`] on sampled |ψ| values.
pub fn interior_wavenumber_in(xs: &[f64], amplitude: &[f64], region: (f64, f64)) -> Result<f64> {
    let peaks = detect_peaks_in(xs, amplitude, region, 0.05)?;
    if peaks.len() < 2 {
        return Err(Error::NoStandingPattern(format!(
            "found {} maxima of |ψ| in [{}, {}]",
            peaks.len(),
            region.0,
            region.1
        )));
    }
    let spacings: Vec<f64> = peaks.windows(2).map(|w| w[1].x - w[0].x).collect();
    Ok(std::f64::consts::PI / median(&spacings))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub prominence: f64,
    pub max_spacing_cov: f64,
    pub max_envelope_residual: f64,
    pub formation_fraction: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            prominence: DEFAULT_PROMINENCE,
            max_spacing_cov: DEFAULT_MAX_SPACING_COV,
            max_envelope_residual: DEFAULT_MAX_ENVELOPE_RESIDUAL,
            formation_fraction: DEFAULT_FORMATION_FRACTION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classification {
    pub polychotomous: bool,
    pub enough_peaks: bool,
    pub regular_spacing: bool,
    pub envelope_fits: bool,
    pub n_peaks: usize,
    pub spacing_cov: Option<f64>,
    pub envelope_residual: Option<f64>,
    /// Prominence cutoff of the peak train the verdict rests on.
    pub cutoff: f64,
}

fn judge(peaks: &[Peak], thresholds: &Thresholds, cutoff: f64) -> Classification {
    let fit = fit_envelope(peaks).ok();
    let enough_peaks = peaks.len() >= 3;
    let regular_spacing = fit.is_some_and(|f| f.spacing_cov < thresholds.max_spacing_cov);
    let envelope_fits = fit.is_some_and(|f| f.residual < thresholds.max_envelope_residual);
    Classification {
        polychotomous: enough_peaks && regular_spacing && envelope_fits,
        enough_peaks,
        regular_spacing,
        envelope_fits,
        n_peaks: peaks.len(),
        spacing_cov: fit.map(|f| f.spacing_cov),
        envelope_residual: fit.map(|f| f.residual),
        cutoff,
    }
}

/// Polychotomy verdict for a detected peak train.
///
/// The train is judged at the threshold prominence and at every stricter
/// cutoff that removes peaks; the verdict is true if any of these trains
/// has at least 3 peaks, regular spacing and a fitting envelope. A
/// stricter threshold only removes candidate trains, so raising it never
/// turns false into true. The sub-verdicts reported are those of the
/// accepted train, or of the train at the threshold when none passes.
pub fn classify(peaks: &[Peak], thresholds: &Thresholds) -> Classification {
    let kept: Vec<Peak> = peaks.iter().copied().filter(|p| p.prominence >= thresholds.prominence).collect();
    let base = judge(&kept, thresholds, thresholds.prominence);
    if base.polychotomous {
        return base;
    }
    let mut cutoffs: Vec<f64> = kept.iter().map(|p| p.prominence).collect();
    cutoffs.sort_by(f64::total_cmp);
    cutoffs.dedup();
    for &c in &cutoffs {
        let train: Vec<Peak> = kept.iter().copied().filter(|p| p.prominence >= c).collect();
        if train.len() < 3 {
            break;
        }
        let verdict = judge(&train, thresholds, c);
        if verdict.polychotomous {
            return verdict;
        }
    }
    base
}

/// Why an optional report field is missing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Note {
    pub field: &'static str,
    pub code: &'static str,
    pub message: String,
}

impl Note {
    fn new(field: &'static str, err: &Error) -> Self {
        Self { field, code: err.code(), message: err.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub time: f64,
    pub split: RegionSplit,
    pub p_refl: f64,
    pub p_well: f64,
    pub p_trans: f64,
    pub norm: f64,
    pub track: Vec<TrackSample>,
    pub v_refl: Option<SpeedFit>,
    pub v_trans: Option<SpeedFit>,
    pub peaks: Vec<Peak>,
    pub envelope: Option<EnvelopeFit>,
    pub formation_time: Option<f64>,
    pub formation_definition: String,
    pub classification: Classification,
    pub polychotomous: bool,
    pub interior_k: Option<f64>,
    pub thresholds: Thresholds,
    pub notes: Vec<Note>,
}

/// Builds a report from a sampled history and the state at its end.
///
/// The speed fits use the part of the track after the formation time (or
/// the whole track when no reflected wave formed).
pub fn analyze(
    track: &[TrackSample],
    state: &WaveFunction,
    well: &PotentialSpec,
    split: &RegionSplit,
    thresholds: &Thresholds,
) -> DiagnosticsReport {
    let mut notes = Vec::new();
    let probabilities = split_probabilities(state, split);
    let formation = formation_time(track, thresholds.formation_fraction);
    let formation_time = match formation {
        Ok(t) => Some(t),
        Err(e) => {
            notes.push(Note::new("formation_time", &e));
            None
        }
    };
    let t_end = track.last().map_or(state.time(), |s| s.t);
    let window = (formation_time.unwrap_or(f64::NEG_INFINITY), t_end);
    let v_refl = reflected_speed(track, window).map_err(|e| notes.push(Note::new("v_refl", &e))).ok();
    let v_trans = transmitted_speed(track, window).map_err(|e| notes.push(Note::new("v_trans", &e))).ok();
    let g = state.grid();
    let peaks = if split.left_edge > g.x_min() {
        detect_peaks(state, (g.x_min(), split.left_edge), thresholds.prominence).unwrap_or_else(|e| {
            notes.push(Note::new("peaks", &e));
            Vec::new()
        })
    } else {
        Vec::new()
    };
    let envelope = fit_envelope(&peaks).map_err(|e| notes.push(Note::new("envelope", &e))).ok();
    let classification = classify(&peaks, thresholds);
    let interior_k = interior_wavenumber(state, well_core(well))
        .map_err(|e| notes.push(Note::new("interior_k", &e)))
        .ok();
    DiagnosticsReport {
        time: state.time(),
        split: *split,
        p_refl: probabilities.p_refl,
        p_well: probabilities.p_well,
        p_trans: probabilities.p_trans,
        norm: state.norm(),
        track: track.to_vec(),
        v_refl,
        v_trans,
        peaks,
        envelope,
        formation_time,
        formation_definition: formation_definition(thresholds.formation_fraction),
        classification,
        polychotomous: classification.polychotomous,
        interior_k,
        thresholds: *thresholds,
        notes,
    }
}
