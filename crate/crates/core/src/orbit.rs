//! Two-body LEO propagation, ground-station look angles and visibility-pass
//! extraction.
//!
//! The propagator is deliberately Keplerian (no J2, no drag): the pass
//! statistics it feeds are geometric averages over many orbits, and the
//! acceptance tolerances absorb the secular drift a full perturbation model
//! would add.  Kepler's equation `M = E − e·sin E` is solved by Newton
//! iteration at every step; for the circular orbits used in practice the
//! iteration converges immediately.
//!
//! Ground stations are WGS-84 geodetic positions; the Earth rotation angle is
//! the uniform-rate GMST from [`crate::timebase::gmst_rad`].  Look angles are
//! topocentric ENU elevation/azimuth plus slant range.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{MU_EARTH_M3_S2, WGS84_A_M, WGS84_F};
use crate::timebase::gmst_rad;

// --- types -----------------------------------------------------------------

/// Classical orbital elements with a UTC epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeplerianElements {
    /// Semi-major axis, kilometres.
    pub semi_major_axis_km: f64,
    /// Eccentricity, `0 ≤ e < 1`.
    pub eccentricity: f64,
    /// Inclination, degrees.
    pub inclination_deg: f64,
    /// Right ascension of the ascending node, degrees.
    pub raan_deg: f64,
    /// Argument of perigee, degrees.
    pub arg_perigee_deg: f64,
    /// Mean anomaly at epoch, degrees.
    pub mean_anomaly_deg: f64,
    /// Epoch, Unix seconds.
    pub epoch_unix_s: f64,
}

impl KeplerianElements {
    /// Validate ranges and normalize all angles into `[0°, 360°)`.
    pub fn validated(mut self) -> Result<Self, OrbitError> {
        if !(0.0..1.0).contains(&self.eccentricity) {
            return Err(OrbitError::BadElements(format!(
                "eccentricity {} outside [0, 1)",
                self.eccentricity
            )));
        }
        if self.semi_major_axis_km * 1e3 <= WGS84_A_M {
            return Err(OrbitError::BadElements(format!(
                "semi-major axis {} km is below the Earth radius",
                self.semi_major_axis_km
            )));
        }
        for a in [
            &mut self.inclination_deg,
            &mut self.raan_deg,
            &mut self.arg_perigee_deg,
            &mut self.mean_anomaly_deg,
        ] {
            *a = a.rem_euclid(360.0);
        }
        Ok(self)
    }

    /// Orbital period `2π·√(a³/μ)`, seconds.
    pub fn period_s(&self) -> f64 {
        let a = self.semi_major_axis_km * 1e3;
        std::f64::consts::TAU * (a.powi(3) / MU_EARTH_M3_S2).sqrt()
    }

    /// Mean motion, rad/s.
    pub fn mean_motion_rad_s(&self) -> f64 {
        std::f64::consts::TAU / self.period_s()
    }
}

/// A ground station in WGS-84 geodetic coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationLocation {
    pub name: String,
    /// Geodetic latitude, degrees.
    pub lat_deg: f64,
    /// East-positive longitude, degrees.
    pub lon_deg: f64,
    /// Height above the ellipsoid, metres.
    pub alt_m: f64,
}

impl StationLocation {
    pub fn new(name: &str, lat_deg: f64, lon_deg: f64, alt_m: f64) -> Result<Self, OrbitError> {
        if !(-90.0..=90.0).contains(&lat_deg) || !(-180.0..=180.0).contains(&lon_deg) {
            return Err(OrbitError::BadStation(format!(
                "{name}: lat {lat_deg} / lon {lon_deg} out of range"
            )));
        }
        Ok(Self { name: name.to_string(), lat_deg, lon_deg, alt_m })
    }

    /// WGS-84 geodetic → Earth-fixed Cartesian, metres.
    pub fn ecef_m(&self) -> Vector3<f64> {
        let lat = self.lat_deg.to_radians();
        let lon = self.lon_deg.to_radians();
        let e2 = WGS84_F * (2.0 - WGS84_F);
        let n = WGS84_A_M / (1.0 - e2 * lat.sin().powi(2)).sqrt();
        Vector3::new(
            (n + self.alt_m) * lat.cos() * lon.cos(),
            (n + self.alt_m) * lat.cos() * lon.sin(),
            (n * (1.0 - e2) + self.alt_m) * lat.sin(),
        )
    }
}

/// Topocentric direction and distance to the satellite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LookAngles {
    pub elevation_deg: f64,
    /// Azimuth clockwise from north, `[0°, 360°)`.
    pub azimuth_deg: f64,
    pub slant_range_km: f64,
}

/// One propagated inertial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitState {
    pub t_unix_s: f64,
    pub pos_eci_m: Vector3<f64>,
}

/// A time-ordered sequence of propagated states at a fixed step.
#[derive(Debug, Clone)]
pub struct OrbitTrack {
    pub step_s: f64,
    pub states: Vec<OrbitState>,
}

/// One timestamped in-pass sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassSample {
    pub t_unix_s: f64,
    pub look: LookAngles,
}

/// A maximal run of consecutive samples at or above the elevation mask.
#[derive(Debug, Clone)]
pub struct Pass {
    pub station: String,
    pub start_unix_s: f64,
    pub end_unix_s: f64,
    pub samples: Vec<PassSample>,
}

impl Pass {
    /// Pass duration covered by the samples, seconds (inclusive of the step
    /// trailing the last sample is *not* counted; a single-sample pass has
    /// duration equal to one step).
    pub fn duration_s(&self, step_s: f64) -> f64 {
        self.samples.len() as f64 * step_s
    }

    pub fn max_elevation_deg(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.look.elevation_deg)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Aggregate visibility statistics over a simulated span.
#[derive(Debug, Clone, Serialize)]
pub struct PassStats {
    pub pass_count: usize,
    pub passes_per_day: f64,
    pub mean_minutes_per_day: f64,
    pub mean_pass_minutes: f64,
    /// Max-elevation histogram: `(bucket lower edge in deg, count)`, 10° buckets.
    pub max_elevation_histogram: Vec<(f64, usize)>,
}

#[derive(Debug, Error)]
pub enum OrbitError {
    #[error("invalid orbital elements: {0}")]
    BadElements(String),
    #[error("invalid station: {0}")]
    BadStation(String),
    #[error("Kepler solver failed to converge for M={mean_anomaly_rad} rad, e={eccentricity}")]
    KeplerNonConvergence { mean_anomaly_rad: f64, eccentricity: f64 },
    #[error("step must be > 0 and duration ≥ step (step {step_s} s, duration {duration_s} s)")]
    BadSpan { step_s: f64, duration_s: f64 },
    #[error("empty track")]
    EmptyTrack,
    #[error("degenerate geometry: satellite coincides with the station")]
    DegenerateGeometry,
}

// --- propagation -------------------------------------------------------------

/// Solve Kepler's equation `M = E − e·sin E` for E by Newton iteration.
pub fn solve_kepler(mean_anomaly_rad: f64, eccentricity: f64) -> Result<f64, OrbitError> {
    let m = mean_anomaly_rad.rem_euclid(std::f64::consts::TAU);
    let mut e_anom = if eccentricity < 0.8 { m } else { std::f64::consts::PI };
    for _ in 0..60 {
        let f = e_anom - eccentricity * e_anom.sin() - m;
        if f.abs() < 1e-13 {
            return Ok(e_anom);
        }
        e_anom -= f / (1.0 - eccentricity * e_anom.cos());
    }
    Err(OrbitError::KeplerNonConvergence { mean_anomaly_rad: m, eccentricity })
}

/// Inertial position at time `t`, two-body motion from the epoch elements.
pub fn satellite_position_eci(el: &KeplerianElements, t_unix_s: f64) -> Result<Vector3<f64>, OrbitError> {
    let a = el.semi_major_axis_km * 1e3;
    let e = el.eccentricity;
    let m = el.mean_anomaly_deg.to_radians() + el.mean_motion_rad_s() * (t_unix_s - el.epoch_unix_s);
    let big_e = solve_kepler(m, e)?;
    // true anomaly and radius from the eccentric anomaly
    let nu = 2.0 * f64::atan2(
        (1.0 + e).sqrt() * (big_e / 2.0).sin(),
        (1.0 - e).sqrt() * (big_e / 2.0).cos(),
    );
    let r = a * (1.0 - e * big_e.cos());
    let theta = el.arg_perigee_deg.to_radians() + nu; // argument of latitude
    let (sin_t, cos_t) = theta.sin_cos();
    let (sin_o, cos_o) = el.raan_deg.to_radians().sin_cos();
    let (sin_i, cos_i) = el.inclination_deg.to_radians().sin_cos();
    Ok(Vector3::new(
        r * (cos_o * cos_t - sin_o * sin_t * cos_i),
        r * (sin_o * cos_t + cos_o * sin_t * cos_i),
        r * (sin_t * sin_i),
    ))
}

/// Propagate `⌊duration/step⌋ + 1` states starting at the element epoch.
pub fn propagate_orbit(
    el: &KeplerianElements,
    duration_s: f64,
    step_s: f64,
) -> Result<OrbitTrack, OrbitError> {
    if step_s <= 0.0 || duration_s < step_s {
        return Err(OrbitError::BadSpan { step_s, duration_s });
    }
    let n = (duration_s / step_s).floor() as usize + 1;
    let states = (0..n)
        .into_par_iter()
        .map(|k| {
            let t = el.epoch_unix_s + k as f64 * step_s;
            satellite_position_eci(el, t).map(|pos_eci_m| OrbitState { t_unix_s: t, pos_eci_m })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OrbitTrack { step_s, states })
}

// --- geometry ----------------------------------------------------------------

/// Station position in the inertial frame at time `t`.
pub fn station_position_eci(loc: &StationLocation, t_unix_s: f64) -> Vector3<f64> {
    let ecef = loc.ecef_m();
    let (sin_g, cos_g) = gmst_rad(t_unix_s).sin_cos();
    Vector3::new(
        cos_g * ecef.x - sin_g * ecef.y,
        sin_g * ecef.x + cos_g * ecef.y,
        ecef.z,
    )
}

/// Topocentric look angles from a station to an inertial satellite position.
pub fn look_angles(
    sat_pos_eci_m: &Vector3<f64>,
    loc: &StationLocation,
    t_unix_s: f64,
) -> Result<LookAngles, OrbitError> {
    // rotate the satellite into the Earth-fixed frame, then difference in ENU
    let (sin_g, cos_g) = gmst_rad(t_unix_s).sin_cos();
    let sat_ecef = Vector3::new(
        cos_g * sat_pos_eci_m.x + sin_g * sat_pos_eci_m.y,
        -sin_g * sat_pos_eci_m.x + cos_g * sat_pos_eci_m.y,
        sat_pos_eci_m.z,
    );
    let d = sat_ecef - loc.ecef_m();
    let range = d.norm();
    if range == 0.0 {
        return Err(OrbitError::DegenerateGeometry);
    }
    let lat = loc.lat_deg.to_radians();
    let lon = loc.lon_deg.to_radians();
    let east = Vector3::new(-lon.sin(), lon.cos(), 0.0);
    let north = Vector3::new(-lat.sin() * lon.cos(), -lat.sin() * lon.sin(), lat.cos());
    let up = Vector3::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin());
    let (e, n, u) = (d.dot(&east), d.dot(&north), d.dot(&up));
    Ok(LookAngles {
        elevation_deg: (u / range).asin().to_degrees(),
        azimuth_deg: f64::atan2(e, n).to_degrees().rem_euclid(360.0),
        slant_range_km: range / 1e3,
    })
}

// --- pass extraction -----------------------------------------------------------

/// Split `(t, LookAngles)` samples into maximal runs with
/// `elevation ≥ min_elevation_deg`.  `carry` holds an open run continuing from
/// the previous chunk; a run still open at the end is returned in the carry
/// slot instead of being emitted, so chunked callers stitch passes that span
/// chunk boundaries.
fn extract_runs(
    station: &str,
    samples: &[(f64, LookAngles)],
    min_elevation_deg: f64,
    mut carry: Option<Pass>,
    out: &mut Vec<Pass>,
) -> Option<Pass> {
    for &(t, look) in samples {
        if look.elevation_deg >= min_elevation_deg {
            let run = carry.get_or_insert_with(|| Pass {
                station: station.to_string(),
                start_unix_s: t,
                end_unix_s: t,
                samples: Vec::new(),
            });
            run.samples.push(PassSample { t_unix_s: t, look });
            run.end_unix_s = t;
        } else if let Some(run) = carry.take() {
            out.push(run);
        }
    }
    carry
}

/// Extract visibility passes from a materialized track.
pub fn extract_passes(
    track: &OrbitTrack,
    loc: &StationLocation,
    min_elevation_deg: f64,
) -> Result<Vec<Pass>, OrbitError> {
    if track.states.is_empty() {
        return Err(OrbitError::EmptyTrack);
    }
    let samples = track
        .states
        .par_iter()
        .map(|s| look_angles(&s.pos_eci_m, loc, s.t_unix_s).map(|la| (s.t_unix_s, la)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut passes = Vec::new();
    if let Some(open) = extract_runs(&loc.name, &samples, min_elevation_deg, None, &mut passes) {
        passes.push(open); // track ended mid-pass
    }
    Ok(passes)
}

/// Year-scale pass extraction without materializing the full track.
///
/// Propagation is chunked (one day of steps at a time), look angles inside a
/// chunk are computed in parallel and order-merged, and runs crossing chunk
/// boundaries are stitched, so results are identical to a single
/// [`extract_passes`] call over the whole span.
pub fn track_station_passes(
    el: &KeplerianElements,
    loc: &StationLocation,
    duration_s: f64,
    step_s: f64,
    min_elevation_deg: f64,
) -> Result<Vec<Pass>, OrbitError> {
    if step_s <= 0.0 || duration_s < step_s {
        return Err(OrbitError::BadSpan { step_s, duration_s });
    }
    let total_steps = (duration_s / step_s).floor() as usize + 1;
    let chunk_steps = (86_400.0 / step_s).ceil() as usize;
    let mut passes = Vec::new();
    let mut carry: Option<Pass> = None;
    let mut done = 0usize;
    while done < total_steps {
        let n = chunk_steps.min(total_steps - done);
        let samples = (done..done + n)
            .into_par_iter()
            .map(|k| {
                let t = el.epoch_unix_s + k as f64 * step_s;
                let pos = satellite_position_eci(el, t)?;
                look_angles(&pos, loc, t).map(|la| (t, la))
            })
            .collect::<Result<Vec<_>, _>>()?;
        carry = extract_runs(&loc.name, &samples, min_elevation_deg, carry, &mut passes);
        done += n;
    }
    if let Some(open) = carry {
        passes.push(open);
    }
    Ok(passes)
}

/// Summarize pass geometry over `duration_days`.
pub fn pass_statistics(passes: &[Pass], step_s: f64, duration_days: f64) -> PassStats {
    let total_min: f64 = passes.iter().map(|p| p.duration_s(step_s) / 60.0).sum();
    let mut hist: Vec<(f64, usize)> = (0..9).map(|i| (i as f64 * 10.0, 0)).collect();
    for p in passes {
        let b = ((p.max_elevation_deg() / 10.0).floor() as usize).min(8);
        hist[b].1 += 1;
    }
    PassStats {
        pass_count: passes.len(),
        passes_per_day: passes.len() as f64 / duration_days,
        mean_minutes_per_day: total_min / duration_days,
        mean_pass_minutes: if passes.is_empty() { 0.0 } else { total_min / passes.len() as f64 },
        max_elevation_histogram: hist,
    }
}

// --- tests ---------------------------------------------------------------
