//! Clock simulation, per-satellite corrected time differences, all-in-view
//! medians, PTF-to-PTF offsets and daily drift fits.
//!
//! A precise timing facility (PTF) compares its clock against every visible
//! GNSS satellite.  The raw measured difference includes the signal flight
//! time τ,
//!
//! ```text
//!   Δt_raw  = t_PTF − (t_sat − τ)
//!   Δt_corr = t_PTF − (t_sat − τ + τ̃) = Δt_raw − τ̃
//! ```
//!
//! where the correction τ̃ = τ̃_dynamic + τ̃_static is estimated from the
//! receiver's delay budget:
//!
//! ```text
//!   τ̃_dynamic = χ/c + Δt_rel − Δt_tropo − GD,   χ = P_IF − ‖x_sat − x_rec‖ − S
//!   τ̃_static  = x_s + x_c + x_R − x_O − x_p
//! ```
//!
//! with the ionosphere-free pseudorange `P_IF`, the Sagnac term `S`, and the
//! antenna/cable/receiver/reference static delays (held in seconds here).
//! The facility's offset to the GNSS timescale is taken against the median
//! over all visible satellites — robust to a glitching satellite — and two
//! facilities are compared by differencing their medians at common epochs,
//! which cancels the GNSS timescale exactly.
//!
//! Residual correction errors (ephemeris, troposphere, multipath) are
//! modeled as a single zero-mean Gaussian per satellite with an
//! elevation-dependent width `σ(el) = σ0 / sin(el)`, reflecting how low
//! passes degrade: the model injects them as `τ̃ − τ`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::constants::C_M_S;
use crate::orbit::{KeplerianElements, LookAngles};

// --- types -----------------------------------------------------------------

/// Linear-drift clock with white phase noise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClockModel {
    pub initial_offset_s: f64,
    /// Fractional rate offset (s of phase per s of elapsed time).
    pub drift_s_per_s: f64,
    /// Standard deviation of the white phase noise per sample, s.
    pub white_noise_sigma_s: f64,
    pub seed: u64,
}

impl ClockModel {
    pub fn validated(self) -> Result<Self, TimeTransferError> {
        if self.white_noise_sigma_s < 0.0 {
            return Err(TimeTransferError::BadClock(self.white_noise_sigma_s));
        }
        Ok(self)
    }
}

/// Sampled clock offsets at a fixed cadence.
#[derive(Debug, Clone, PartialEq)]
pub struct ClockTrace {
    pub start_unix_s: f64,
    pub step_s: f64,
    pub offsets_s: Vec<f64>,
}

impl ClockTrace {
    pub fn offset_at(&self, k: usize) -> f64 {
        self.offsets_s[k]
    }
    pub fn epoch_at(&self, k: usize) -> f64 {
        self.start_unix_s + k as f64 * self.step_s
    }
}

/// Per-observation correction terms, dynamic and static (seconds; ranges in
/// meters).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayBudget {
    /// Ionosphere-free pseudorange, m.
    pub pseudorange_if_m: f64,
    /// Satellite antenna position, ECEF m.
    pub sat_pos_m: [f64; 3],
    /// Receiver phase-center position, ECEF m.
    pub rec_pos_m: [f64; 3],
    /// Sagnac correction, m.
    pub sagnac_m: f64,
    /// Relativistic correction, s.
    pub relativistic_s: f64,
    /// Tropospheric delay, s.
    pub tropospheric_s: f64,
    /// Broadcast group delay, s.
    pub group_delay_s: f64,
    /// Antenna delay x_s, s.
    pub antenna_s: f64,
    /// RF cable delay x_c, s.
    pub cable_s: f64,
    /// Receiver RF delay x_R, s.
    pub receiver_s: f64,
    /// PPS-to-internal-reference offset x_O, s (signed).
    pub pps_ref_s: f64,
    /// PPS cable delay x_p, s (signed).
    pub pps_cable_s: f64,
}

impl DelayBudget {
    /// A budget whose pseudorange is synthesized so that the estimated
    /// correction comes out to `true_range_m / c + residual_s` exactly —
    /// the residual stands in for ephemeris/troposphere/multipath errors.
    #[allow(clippy::too_many_arguments)]
    pub fn with_residual(
        sat_pos_m: [f64; 3],
        rec_pos_m: [f64; 3],
        sagnac_m: f64,
        relativistic_s: f64,
        tropospheric_s: f64,
        group_delay_s: f64,
        statics_s: [f64; 5],
        true_range_m: f64,
        residual_s: f64,
    ) -> Self {
        let [antenna_s, cable_s, receiver_s, pps_ref_s, pps_cable_s] = statics_s;
        let static_s = antenna_s + cable_s + receiver_s - pps_ref_s - pps_cable_s;
        // invert τ̃ = χ/c + rel − tropo − GD + static for χ, then for P_IF
        let chi_m = true_range_m
            + C_M_S
                * (residual_s - relativistic_s + tropospheric_s + group_delay_s - static_s);
        let geometric = norm3(sub3(sat_pos_m, rec_pos_m));
        Self {
            pseudorange_if_m: chi_m + geometric + sagnac_m,
            sat_pos_m,
            rec_pos_m,
            sagnac_m,
            relativistic_s,
            tropospheric_s,
            group_delay_s,
            antenna_s,
            cable_s,
            receiver_s,
            pps_ref_s,
            pps_cable_s,
        }
    }
}

/// One PTF-versus-satellite comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClockObservation {
    pub ptf: String,
    pub sat: String,
    pub t_unix_s: f64,
    pub elevation_deg: f64,
    pub delta_t_raw_s: f64,
    pub delta_t_corr_s: f64,
    /// Injected estimation error τ̃ − τ.
    pub correction_residual_s: f64,
}

/// Epoch-ordered offsets of one quantity (PTF vs GNSS, or PTF vs PTF).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OffsetSeries {
    pub label: String,
    pub samples: Vec<OffsetSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OffsetSample {
    pub t_unix_s: f64,
    pub offset_s: f64,
    /// Satellites contributing to this epoch (1 for derived series).
    pub n_sats: usize,
}

impl OffsetSeries {
    pub fn new(label: &str) -> Self {
        Self { label: label.to_string(), samples: Vec::new() }
    }

    /// Append a sample; timestamps must increase strictly.
    pub fn push(&mut self, sample: OffsetSample) -> Result<(), TimeTransferError> {
        if let Some(last) = self.samples.last() {
            if sample.t_unix_s <= last.t_unix_s {
                return Err(TimeTransferError::NonMonotonic {
                    t: sample.t_unix_s,
                    after: last.t_unix_s,
                });
            }
        }
        self.samples.push(sample);
        Ok(())
    }
}

/// Least-squares drift estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftFit {
    pub slope_ns_per_day: f64,
    pub sigma_ns_per_day: f64,
    pub intercept_ns: f64,
    pub n_samples: usize,
}

/// Elevation-dependent residual model σ(el) = σ0 / sin(el).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualModel {
    pub sigma0_s: f64,
}

impl ResidualModel {
    pub fn sigma_at(&self, elevation_deg: f64) -> f64 {
        self.sigma0_s / elevation_deg.to_radians().sin()
    }

    /// One Gaussian draw at the given elevation.
    pub fn sample<R: Rng>(&self, elevation_deg: f64, rng: &mut R) -> f64 {
        if self.sigma0_s == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, self.sigma_at(elevation_deg))
            .expect("sigma is finite and positive")
            .sample(rng)
    }
}

#[derive(Debug, Error)]
pub enum TimeTransferError {
    #[error("white noise sigma must be non-negative, got {0}")]
    BadClock(f64),
    #[error("satellite below the horizon (elevation {0}°)")]
    NotVisible(f64),
    #[error("no observations at this epoch")]
    NoObservations,
    #[error("offset series share no aligned epochs")]
    NoOverlap,
    #[error("timestamp {t} does not advance past {after}")]
    NonMonotonic { t: f64, after: f64 },
    #[error("drift fit needs ≥ 2 samples spanning time, got {0}")]
    DegenerateFit(usize),
}

// --- vector helpers -------------------------------------------------------

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

// --- clock simulation ----------------------------------------------------------

/// Sample `offset(k) = initial + drift·k·step + noise(k)` on a fixed grid;
/// the noise stream is seeded by the model, so traces reproduce exactly.
pub fn simulate_clock(
    model: &ClockModel,
    start_unix_s: f64,
    duration_s: f64,
    step_s: f64,
) -> ClockTrace {
    use rand::SeedableRng;
    let n = (duration_s / step_s).floor() as usize + 1;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(model.seed);
    let noise = Normal::new(0.0, model.white_noise_sigma_s.max(f64::MIN_POSITIVE))
        .expect("positive sigma");
    let offsets_s = (0..n)
        .map(|k| {
            let det = model.initial_offset_s + model.drift_s_per_s * k as f64 * step_s;
            if model.white_noise_sigma_s > 0.0 {
                det + noise.sample(&mut rng)
            } else {
                det
            }
        })
        .collect();
    ClockTrace { start_unix_s, step_s, offsets_s }
}

// --- delay budget -----------------------------------------------------------

/// Static correction: x_s + x_c + x_R − x_O − x_p (seconds).
pub fn static_delay(budget: &DelayBudget) -> f64 {
    budget.antenna_s + budget.cable_s + budget.receiver_s
        - budget.pps_ref_s
        - budget.pps_cable_s
}

/// Dynamic correction χ/c + Δt_rel − Δt_tropo − GD with
/// χ = P_IF − ‖x_sat − x_rec‖ − S.
pub fn dynamic_delay(budget: &DelayBudget) -> f64 {
    let geometric = norm3(sub3(budget.sat_pos_m, budget.rec_pos_m));
    let chi_m = budget.pseudorange_if_m - geometric - budget.sagnac_m;
    chi_m / C_M_S + budget.relativistic_s - budget.tropospheric_s - budget.group_delay_s
}

/// Full estimated correction τ̃.
pub fn estimated_delay(budget: &DelayBudget) -> f64 {
    dynamic_delay(budget) + static_delay(budget)
}

// --- observations ------------------------------------------------------------

/// Compare a PTF clock against one visible satellite.
pub fn observe_satellite(
    ptf: &str,
    sat: &str,
    t_unix_s: f64,
    ptf_offset_s: f64,
    sat_offset_s: f64,
    geometry: &LookAngles,
    budget: &DelayBudget,
) -> Result<ClockObservation, TimeTransferError> {
    if geometry.elevation_deg <= 0.0 {
        return Err(TimeTransferError::NotVisible(geometry.elevation_deg));
    }
    let tau = geometry.slant_range_km * 1e3 / C_M_S;
    let tau_est = estimated_delay(budget);
    let delta_t_raw = ptf_offset_s - (sat_offset_s - tau);
    let delta_t_corr = delta_t_raw - tau_est;
    Ok(ClockObservation {
        ptf: ptf.to_string(),
        sat: sat.to_string(),
        t_unix_s,
        elevation_deg: geometry.elevation_deg,
        delta_t_raw_s: delta_t_raw,
        delta_t_corr_s: delta_t_corr,
        correction_residual_s: tau_est - tau,
    })
}

/// Median with the midpoint convention on even counts.
fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// The facility's offset to the GNSS timescale at one epoch: the median of
/// the corrected per-satellite differences over all satellites in view.
pub fn all_in_view_median(
    observations: &[ClockObservation],
) -> Result<f64, TimeTransferError> {
    if observations.is_empty() {
        return Err(TimeTransferError::NoObservations);
    }
    let mut values: Vec<f64> = observations.iter().map(|o| o.delta_t_corr_s).collect();
    Ok(median(&mut values))
}

/// Difference two facilities' GNSS offset series at aligned epochs; the
/// common GNSS timescale cancels.  Epochs missing on either side are
/// skipped; an empty intersection is an error.
pub fn ptf_offset(
    series_a: &OffsetSeries,
    series_b: &OffsetSeries,
    alignment_window_s: f64,
) -> Result<OffsetSeries, TimeTransferError> {
    let mut out = OffsetSeries::new(&format!("{}-{}", series_a.label, series_b.label));
    let (mut i, mut j) = (0, 0);
    while i < series_a.samples.len() && j < series_b.samples.len() {
        let (a, b) = (series_a.samples[i], series_b.samples[j]);
        if (a.t_unix_s - b.t_unix_s).abs() <= alignment_window_s {
            out.push(OffsetSample {
                t_unix_s: 0.5 * (a.t_unix_s + b.t_unix_s),
                offset_s: a.offset_s - b.offset_s,
                n_sats: a.n_sats.min(b.n_sats),
            })?;
            i += 1;
            j += 1;
        } else if a.t_unix_s < b.t_unix_s {
            i += 1;
        } else {
            j += 1;
        }
    }
    if out.samples.is_empty() {
        return Err(TimeTransferError::NoOverlap);
    }
    Ok(out)
}

// --- drift fitting -----------------------------------------------------------

/// Least-squares slope of an offset series in ns/day, with the standard
/// 1σ slope uncertainty from the fit residuals.
pub fn fit_daily_drift(series: &OffsetSeries) -> Result<DriftFit, TimeTransferError> {
    let n = series.samples.len();
    if n < 2 {
        return Err(TimeTransferError::DegenerateFit(n));
    }
    let t0 = series.samples[0].t_unix_s;
    let xs: Vec<f64> =
        series.samples.iter().map(|s| (s.t_unix_s - t0) / 86_400.0).collect();
    let ys: Vec<f64> = series.samples.iter().map(|s| s.offset_s * 1e9).collect();
    let span = xs[n - 1] - xs[0];
    if span <= 0.0 {
        return Err(TimeTransferError::DegenerateFit(n));
    }
    let x_mean = xs.iter().sum::<f64>() / n as f64;
    let y_mean = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    let sxy: f64 =
        xs.iter().zip(&ys).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let sigma = if n > 2 { (ss_res / (n - 2) as f64 / sxx).sqrt() } else { 0.0 };
    Ok(DriftFit {
        slope_ns_per_day: slope,
        sigma_ns_per_day: sigma,
        intercept_ns: intercept,
        n_samples: n,
    })
}

// --- nominal MEO constellation ------------------------------------------------

/// A deterministic Walker-style MEO layout: three planes at 120° RAAN
/// spacing, 56° inclination, 29 599.8 km semi-major axis, satellites evenly
/// phased within each plane.
pub fn nominal_constellation(n_sats: usize, epoch_unix_s: f64) -> Vec<(String, KeplerianElements)> {
    let per_plane = n_sats.div_ceil(3);
    (0..n_sats)
        .map(|s| {
            let plane = s / per_plane;
            let slot = s % per_plane;
            let elements = KeplerianElements {
                semi_major_axis_km: 29_599.8,
                eccentricity: 0.0,
                inclination_deg: 56.0,
                raan_deg: 120.0 * plane as f64,
                arg_perigee_deg: 0.0,
                mean_anomaly_deg: (360.0 * slot as f64 / per_plane as f64
                    + 40.0 * plane as f64)
                    .rem_euclid(360.0),
                epoch_unix_s,
            };
            (format!("E{:02}", s + 1), elements)
        })
        .collect()
}

// --- tests ---------------------------------------------------------------
