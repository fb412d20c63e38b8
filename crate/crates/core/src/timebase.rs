//! Simulated-time helpers: Unix seconds ↔ MJD, Earth rotation angle, and
//! fixed-format UTC strings.
//!
//! All simulation timestamps are `f64` seconds since the Unix epoch.  The
//! Earth rotation angle uses the uniform-rate GMST polynomial truncated to
//! its linear term,
//!
//! ```text
//!   θ(t) = 280.46061837° + 360.98564736629° · d
//! ```
//!
//! with `d` the days elapsed since J2000.0.  That is accurate to well under
//! a millidegree over the simulated campaigns, far below the pass-geometry
//! tolerances that consume it.

use chrono::{DateTime, TimeZone, Utc};

use crate::constants::{
    DAY_S, GMST_DEG_PER_DAY, GMST_J2000_DEG, MJD_AT_UNIX_EPOCH, UNIX_AT_J2000_S,
};

/// Convert Unix seconds to Modified Julian Date (fractional days).
pub fn unix_to_mjd(unix_s: f64) -> f64 {
    unix_s / DAY_S + MJD_AT_UNIX_EPOCH
}

/// Integer MJD day number containing the given instant.
pub fn mjd_day(unix_s: f64) -> i64 {
    unix_to_mjd(unix_s).floor() as i64
}

/// Greenwich mean sidereal time at `unix_s`, radians in `[0, 2π)`.
pub fn gmst_rad(unix_s: f64) -> f64 {
    let d = (unix_s - UNIX_AT_J2000_S) / DAY_S;
    let deg = (GMST_J2000_DEG + GMST_DEG_PER_DAY * d).rem_euclid(360.0);
    deg.to_radians()
}

/// Format an instant as `YYYY-MM-DDTHH:MM:SSZ` (whole seconds, UTC).
///
/// Sub-second parts are truncated so that identical simulated instants always
/// render identically, which the byte-reproducibility of report files relies
/// on.
pub fn format_utc(unix_s: f64) -> String {
    let secs = unix_s.floor() as i64;
    let dt: DateTime<Utc> = Utc
        .timestamp_opt(secs, 0)
        .single()
        .expect("simulated timestamps stay within chrono's range");
    dt.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Parse a `YYYY-MM-DDTHH:MM:SSZ` (RFC 3339) instant into Unix seconds.
pub fn parse_utc(s: &str) -> Result<f64, String> {
    DateTime::parse_from_rfc3339(s)
        .map(|dt| dt.timestamp() as f64)
        .map_err(|e| format!("invalid UTC timestamp {s:?}: {e}"))
}

// --- tests ---------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn approx_eq(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn mjd_of_campaign_epoch() {
        // 2022-11-09T00:00:00Z is MJD 59892.
        let unix = parse_utc("2022-11-09T00:00:00Z").unwrap();
        assert!(
            approx_eq(unix_to_mjd(unix), 59_892.0, 1e-9),
            "campaign epoch must land on MJD 59892, got {}",
            unix_to_mjd(unix)
        );
        assert_eq!(mjd_day(unix), 59_892);
        assert_eq!(mjd_day(unix + 86_399.0), 59_892, "same UTC day");
        assert_eq!(mjd_day(unix + 86_400.0), 59_893, "next UTC day");
    }

    #[test]
    fn gmst_at_j2000_matches_reference_angle() {
        let theta = gmst_rad(UNIX_AT_J2000_S);
        assert!(
            approx_eq(theta.to_degrees(), GMST_J2000_DEG, 1e-12),
            "GMST at J2000 must equal the reference angle"
        );
    }

    #[test]
    fn gmst_advances_one_full_turn_per_sidereal_day() {
        let t0 = UNIX_AT_J2000_S + 1.0e6;
        let a = gmst_rad(t0);
        let b = gmst_rad(t0 + crate::constants::SIDEREAL_DAY_S);
        let diff = (b - a).rem_euclid(std::f64::consts::TAU);
        let wrapped = diff.min(std::f64::consts::TAU - diff);
        assert!(
            wrapped < 2e-5,
            "one sidereal day must return the rotation angle to itself, residual {wrapped:e} rad"
        );
    }

    #[test]
    fn utc_round_trip_is_identity_on_whole_seconds() {
        let s = "2022-11-09T12:34:56Z";
        let t = parse_utc(s).unwrap();
        assert_eq!(format_utc(t), s);
    }
}
