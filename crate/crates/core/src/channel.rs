//! Free-space optical downlink efficiency with turbulence-broadened beam
//! geometry.
//!
//! The per-sample channel efficiency is the product of four factors,
//!
//! ```text
//!   η = ((ηa · ηg) · ηf) · η0
//! ```
//!
//! evaluated in exactly that associativity order (fixed so that reports are
//! bit-reproducible):
//!
//! * `ηa` — atmospheric transmittance, either a parametric airmass law
//!   `T(el) = T_zenith^(1/sin el)` or a per-site lookup table;
//! * `ηg` — geometric capture of a Gaussian beam of ground radius
//!   `w_g = √(w0² + (θR)²)` by an annular aperture,
//!   `ηg = exp(−D_occ²/2w_g²) − exp(−D_Rx²/2w_g²)`;
//! * `ηf` — field-of-view/pointing factor `ηf = 1 − exp(−θ_Rx²/2α_Rx²)`;
//! * `η0` — fixed optics/detection losses, configured in dB.
//!
//! The total beam divergence combines diffraction and turbulence,
//! `θ = √(θd² + θt²)` with `θd = λ/(π w0)` and `θt = λ/(π ρ0)`, where the
//! spherical-wave coherence length is
//!
//! ```text
//!   ρ0 = [ 1.46 k² R ∫₀¹ (1−ξ)^(5/3) Cn²(h(ξ)) dξ ]^(−3/5),   k = 2π/λ
//! ```
//!
//! with the Hufnagel–Valley profile for `Cn²(h)`.  The path-altitude mapping
//! is `h(ξ) = ground_alt + ξ·R·sin(el)` with `ξ = 0 at the ground station`;
//! the opposite orientation (`ξ = 0` at the satellite) is selectable because
//! the weighting convention is a genuine modeling ambiguity.  The integral
//! uses composite Simpson quadrature with 2048 intervals by default
//! (overridable); a brute-force Riemann cross-check in the test suite pins
//! the quadrature error below 0.1%.

use serde::{Deserialize, Serialize};
use thiserror::Error;

// --- types -----------------------------------------------------------------

/// Functional form of the turbulence-strength height profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ProfileForm {
    #[default]
    HufnagelValley,
    /// Turbulence-free atmosphere: `Cn² ≡ 0`, so ρ0 = ∞ and θt = 0.
    Zero,
}

/// Atmospheric turbulence description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurbulenceProfile {
    /// Ground-level structure constant `A`, m^(−2/3).
    pub cn2_ground: f64,
    /// Average wind speed `v`, m/s.
    pub wind_speed_ms: f64,
    pub profile_form: ProfileForm,
    /// Path-coordinate orientation in the ρ0 integral: `true` puts ξ = 0 at
    /// the ground station (default), `false` at the satellite.
    pub xi_from_ground: bool,
    /// Composite-Simpson interval count for the ρ0 integral (even, ≥ 2).
    pub quadrature_intervals: usize,
}

impl Default for TurbulenceProfile {
    fn default() -> Self {
        Self {
            cn2_ground: 1e-14,
            wind_speed_ms: 21.0,
            profile_form: ProfileForm::HufnagelValley,
            xi_from_ground: true,
            quadrature_intervals: 2048,
        }
    }
}

/// Transmitter/receiver optical parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticalTerminal {
    /// Wavelength, metres.
    pub wavelength_m: f64,
    /// Transmitter beam waist radius, metres.
    pub w0_m: f64,
    /// Receiver aperture diameter, metres.
    pub drx_m: f64,
    /// Receiver central obscuration diameter, metres.
    pub docc_m: f64,
    /// Intrinsic receiver half field of view, radians.
    pub theta_rx_rad: f64,
    /// Receiver pointing error, radians.
    pub alpha_rx_rad: f64,
    /// Fixed losses, dB (≥ 0).
    pub eta0_db: f64,
    /// Evaluate ηf with the roles of θ_Rx and α_Rx exchanged (the published
    /// parameter semantics admit both readings; see the module notes).
    pub swap_fov_pointing: bool,
}

impl OpticalTerminal {
    pub fn validated(self) -> Result<Self, ChannelError> {
        if self.wavelength_m <= 0.0 || self.w0_m <= 0.0 {
            return Err(ChannelError::BadTerminal("wavelength and w0 must be positive".into()));
        }
        if self.docc_m < 0.0 || self.docc_m >= self.drx_m {
            return Err(ChannelError::BadAperture { drx_m: self.drx_m, docc_m: self.docc_m });
        }
        if self.theta_rx_rad < 0.0 || self.alpha_rx_rad < 0.0 || self.eta0_db < 0.0 {
            return Err(ChannelError::BadTerminal(
                "θ_Rx, α_Rx and η0 must be non-negative".into(),
            ));
        }
        Ok(self)
    }

    /// Fixed-loss transmittance `10^(−η0dB/10)`.
    pub fn eta0(&self) -> f64 {
        10f64.powf(-self.eta0_db / 10.0)
    }
}

/// Elevation-dependent transmittance lookup with linear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmittanceTable {
    /// `(elevation_deg, transmittance)` with strictly increasing elevations.
    pub points: Vec<(f64, f64)>,
    /// Permit queries outside the tabulated range (clamped to the end values).
    pub allow_extrapolation: bool,
}

impl TransmittanceTable {
    pub fn new(points: Vec<(f64, f64)>, allow_extrapolation: bool) -> Result<Self, ChannelError> {
        if points.len() < 2 {
            return Err(ChannelError::BadTable("need at least two table points".into()));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(ChannelError::BadTable(format!(
                    "elevations must be strictly increasing, got {} after {}",
                    w[1].0, w[0].0
                )));
            }
        }
        for &(el, t) in &points {
            if !(0.0..=1.0).contains(&t) {
                return Err(ChannelError::BadTable(format!(
                    "transmittance {t} at {el}° outside [0, 1]"
                )));
            }
        }
        Ok(Self { points, allow_extrapolation })
    }

    /// Parse the CSV form: header `elevation_deg,transmittance`, one pair per
    /// line.
    pub fn from_csv_str(text: &str, allow_extrapolation: bool) -> Result<Self, ChannelError> {
        let mut lines = text.lines().enumerate();
        let header = lines
            .next()
            .ok_or_else(|| ChannelError::BadTable("empty table file".into()))?;
        if header.1.trim() != "elevation_deg,transmittance" {
            return Err(ChannelError::BadTable(format!(
                "expected header 'elevation_deg,transmittance', got {:?}",
                header.1
            )));
        }
        let mut points = Vec::new();
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let parse = |v: Option<&str>, what: &str| -> Result<f64, ChannelError> {
                v.ok_or_else(|| {
                    ChannelError::BadTable(format!("line {}: missing {what}", idx + 1))
                })?
                .trim()
                .parse::<f64>()
                .map_err(|e| ChannelError::BadTable(format!("line {}: {what}: {e}", idx + 1)))
            };
            let el = parse(cols.next(), "elevation")?;
            let t = parse(cols.next(), "transmittance")?;
            points.push((el, t));
        }
        Self::new(points, allow_extrapolation)
    }

    fn lookup(&self, elevation_deg: f64) -> Result<f64, ChannelError> {
        let (lo, hi) = (self.points[0], self.points[self.points.len() - 1]);
        if elevation_deg < lo.0 || elevation_deg > hi.0 {
            if self.allow_extrapolation {
                return Ok(if elevation_deg < lo.0 { lo.1 } else { hi.1 });
            }
            return Err(ChannelError::ElevationOutsideTable {
                elevation_deg,
                lo: lo.0,
                hi: hi.0,
            });
        }
        let i = self
            .points
            .partition_point(|p| p.0 <= elevation_deg)
            .clamp(1, self.points.len() - 1);
        let (e0, t0) = self.points[i - 1];
        let (e1, t1) = self.points[i];
        Ok(t0 + (t1 - t0) * (elevation_deg - e0) / (e1 - e0))
    }
}

/// Elevation-dependent atmospheric transmittance model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AtmosphereModel {
    /// Airmass law `T(el) = T_zenith^(1/sin el)`.
    Parametric { t_zenith: f64 },
    Table(TransmittanceTable),
}

impl AtmosphereModel {
    /// Human-readable description for run reports.
    pub fn describe(&self) -> String {
        match self {
            AtmosphereModel::Parametric { t_zenith } => {
                format!("parametric airmass law, T_zenith = {t_zenith}")
            }
            AtmosphereModel::Table(t) => format!(
                "tabulated transmittance, {} points over [{}°, {}°]",
                t.points.len(),
                t.points[0].0,
                t.points[t.points.len() - 1].0
            ),
        }
    }
}

/// All transmittance factors and geometry for one orbit sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelSample {
    pub t_unix_s: f64,
    pub elevation_deg: f64,
    pub slant_range_km: f64,
    /// Spherical-wave coherence length, metres (`+∞` without turbulence).
    pub rho0_m: f64,
    pub theta_d_rad: f64,
    pub theta_t_rad: f64,
    pub theta_rad: f64,
    pub w_g_m: f64,
    pub eta_a: f64,
    pub eta_g: f64,
    pub eta_f: f64,
    pub eta_0: f64,
    /// `((ηa·ηg)·ηf)·η0`, exact product in this order.
    pub eta: f64,
}

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("height below ground: {0} m")]
    NegativeHeight(f64),
    #[error("invalid aperture: D_Rx {drx_m} m must exceed D_occ {docc_m} m")]
    BadAperture { drx_m: f64, docc_m: f64 },
    #[error("invalid terminal: {0}")]
    BadTerminal(String),
    #[error("invalid transmittance table: {0}")]
    BadTable(String),
    #[error("elevation {elevation_deg}° outside table range [{lo}°, {hi}°] and extrapolation is disabled")]
    ElevationOutsideTable { elevation_deg: f64, lo: f64, hi: f64 },
    #[error("elevation must be positive for a slant path, got {0}°")]
    BadElevation(f64),
}

// --- operations --------------------------------------------------------------

/// Hufnagel–Valley turbulence strength at height `h_m` above sea level.
///
/// `Cn²(h) = 0.00594·(v/27)²·(10⁻⁵h)¹⁰·e^(−h/1000) + 2.7×10⁻¹⁶·e^(−h/1500) + A·e^(−h/100)`
pub fn cn2_at_height(profile: &TurbulenceProfile, h_m: f64) -> Result<f64, ChannelError> {
    if h_m < 0.0 {
        return Err(ChannelError::NegativeHeight(h_m));
    }
    Ok(hv_cn2(profile, h_m))
}

#[inline]
fn hv_cn2(profile: &TurbulenceProfile, h_m: f64) -> f64 {
    match profile.profile_form {
        ProfileForm::Zero => 0.0,
        ProfileForm::HufnagelValley => {
            let v = profile.wind_speed_ms;
            0.00594 * (v / 27.0).powi(2) * (1e-5 * h_m).powi(10) * (-h_m / 1000.0).exp()
                + 2.7e-16 * (-h_m / 1500.0).exp()
                + profile.cn2_ground * (-h_m / 100.0).exp()
        }
    }
}

/// Spherical-wave coherence length ρ0 along the slant path, metres.
///
/// Returns `+∞` for a turbulence-free profile (the downstream divergence then
/// reduces to pure diffraction).
pub fn coherence_length_rho0(
    profile: &TurbulenceProfile,
    elevation_deg: f64,
    slant_range_m: f64,
    ground_alt_m: f64,
    wavelength_m: f64,
) -> Result<f64, ChannelError> {
    if elevation_deg <= 0.0 {
        return Err(ChannelError::BadElevation(elevation_deg));
    }
    let n = profile.quadrature_intervals.max(2) & !1usize; // force even
    let sin_el = elevation_deg.to_radians().sin();
    let h_of_xi = |xi: f64| {
        let along = if profile.xi_from_ground { xi } else { 1.0 - xi };
        ground_alt_m + along * slant_range_m * sin_el
    };
    // composite Simpson over ξ ∈ [0, 1]
    let step = 1.0 / n as f64;
    let f = |i: usize| {
        let xi = i as f64 * step;
        (1.0 - xi).powf(5.0 / 3.0) * hv_cn2(profile, h_of_xi(xi))
    };
    let mut acc = f(0) + f(n);
    for i in 1..n {
        acc += f(i) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let integral = acc * step / 3.0;
    let k = std::f64::consts::TAU / wavelength_m;
    let arg = 1.46 * k * k * slant_range_m * integral;
    if arg <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(arg.powf(-3.0 / 5.0))
}

/// Total beam divergence half-angle `θ = √(θd² + θt²)`, radians.
pub fn total_divergence(w0_m: f64, wavelength_m: f64, rho0_m: f64) -> f64 {
    let theta_d = wavelength_m / (std::f64::consts::PI * w0_m);
    let theta_t = if rho0_m.is_infinite() {
        0.0
    } else {
        wavelength_m / (std::f64::consts::PI * rho0_m)
    };
    (theta_d * theta_d + theta_t * theta_t).sqrt()
}

/// Beam radius at the ground after propagating the slant range,
/// `w_g = √(w0² + (θR)²)` (paraxial far-field growth).
pub fn beam_radius_at_ground(w0_m: f64, theta_rad: f64, slant_range_m: f64) -> f64 {
    let spread = theta_rad * slant_range_m;
    (w0_m * w0_m + spread * spread).sqrt()
}

/// Fraction of a Gaussian beam of 1/e² radius `w_g` captured by an annular
/// aperture: `ηg = exp(−D_occ²/2w_g²) − exp(−D_Rx²/2w_g²)`.
pub fn geometric_transmittance(w_g_m: f64, drx_m: f64, docc_m: f64) -> Result<f64, ChannelError> {
    if docc_m < 0.0 || docc_m >= drx_m {
        return Err(ChannelError::BadAperture { drx_m, docc_m });
    }
    let two_wg2 = 2.0 * w_g_m * w_g_m;
    Ok((-docc_m * docc_m / two_wg2).exp() - (-drx_m * drx_m / two_wg2).exp())
}

/// Field-of-view/pointing transmittance `ηf = 1 − exp(−θ_Rx²/2α_Rx²)`.
///
/// A vanishing pointing error accepts everything (`ηf = 1`).
pub fn angular_transmittance(theta_rx_rad: f64, alpha_rx_rad: f64) -> f64 {
    if alpha_rx_rad == 0.0 {
        return 1.0;
    }
    1.0 - (-(theta_rx_rad * theta_rx_rad) / (2.0 * alpha_rx_rad * alpha_rx_rad)).exp()
}

/// Elevation-dependent atmospheric transmittance.
pub fn atmospheric_transmittance(
    elevation_deg: f64,
    model: &AtmosphereModel,
) -> Result<f64, ChannelError> {
    if elevation_deg <= 0.0 {
        return Err(ChannelError::BadElevation(elevation_deg));
    }
    match model {
        AtmosphereModel::Parametric { t_zenith } => {
            Ok(t_zenith.powf(1.0 / elevation_deg.to_radians().sin()))
        }
        AtmosphereModel::Table(table) => table.lookup(elevation_deg),
    }
}

/// Evaluate the full factor chain for one orbit sample.
pub fn channel_efficiency(
    terminal: &OpticalTerminal,
    profile: &TurbulenceProfile,
    atmosphere: &AtmosphereModel,
    ground_alt_m: f64,
    t_unix_s: f64,
    elevation_deg: f64,
    slant_range_km: f64,
) -> Result<ChannelSample, ChannelError> {
    let slant_range_m = slant_range_km * 1e3;
    let rho0_m = coherence_length_rho0(
        profile,
        elevation_deg,
        slant_range_m,
        ground_alt_m,
        terminal.wavelength_m,
    )?;
    let theta_d_rad = terminal.wavelength_m / (std::f64::consts::PI * terminal.w0_m);
    let theta_rad = total_divergence(terminal.w0_m, terminal.wavelength_m, rho0_m);
    let theta_t_rad = if rho0_m.is_infinite() {
        0.0
    } else {
        terminal.wavelength_m / (std::f64::consts::PI * rho0_m)
    };
    let w_g_m = beam_radius_at_ground(terminal.w0_m, theta_rad, slant_range_m);
    let eta_a = atmospheric_transmittance(elevation_deg, atmosphere)?;
    let eta_g = geometric_transmittance(w_g_m, terminal.drx_m, terminal.docc_m)?;
    let eta_f = if terminal.swap_fov_pointing {
        angular_transmittance(terminal.alpha_rx_rad, terminal.theta_rx_rad)
    } else {
        angular_transmittance(terminal.theta_rx_rad, terminal.alpha_rx_rad)
    };
    let eta_0 = terminal.eta0();
    // fixed associativity: ((ηa·ηg)·ηf)·η0
    let eta = ((eta_a * eta_g) * eta_f) * eta_0;
    Ok(ChannelSample {
        t_unix_s,
        elevation_deg,
        slant_range_km,
        rho0_m,
        theta_d_rad,
        theta_t_rad,
        theta_rad,
        w_g_m,
        eta_a,
        eta_g,
        eta_f,
        eta_0,
        eta,
    })
}

// --- tests ---------------------------------------------------------------
