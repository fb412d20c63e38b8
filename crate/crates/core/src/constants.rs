//! Physical and geodetic constants shared across the simulator.
//!
//! WGS-84 ellipsoid values and the uniform-rate Earth rotation angle are the
//! only Earth-model inputs the toolkit uses; there is no polar motion or UT1
//! handling at this fidelity.

/// WGS-84 equatorial radius, metres.
pub const WGS84_A_M: f64 = 6_378_137.0;

/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;

/// Geocentric gravitational constant, m^3/s^2.
pub const MU_EARTH_M3_S2: f64 = 3.986_004_418e14;

/// Speed of light in vacuum, m/s.
pub const C_M_S: f64 = 299_792_458.0;

/// Mean sidereal day, seconds.
pub const SIDEREAL_DAY_S: f64 = 86_164.090_5;

/// Greenwich mean sidereal time at J2000.0, degrees.
pub const GMST_J2000_DEG: f64 = 280.460_618_37;

/// GMST advance rate, degrees per UT1 day (uniform-rate model).
pub const GMST_DEG_PER_DAY: f64 = 360.985_647_366_29;

/// Unix timestamp of the J2000.0 epoch (2000-01-01T12:00:00Z, UTC≈UT1 here).
pub const UNIX_AT_J2000_S: f64 = 946_728_000.0;

/// MJD of the Unix epoch (1970-01-01T00:00:00Z).
pub const MJD_AT_UNIX_EPOCH: f64 = 40_587.0;

/// Seconds per day.
pub const DAY_S: f64 = 86_400.0;
