//! Scenario files: the single configuration surface of the simulator.
//!
//! A scenario is a sectioned key–value file (TOML or JSON, sniffed by file
//! extension) describing one end-to-end run: the orbit, the two optical
//! ground stations with their co-located timing facilities, the downlink
//! channel and receiver terminals, the QKD protocol constants, last-mile key
//! supply, encryptor demand, the GNSS constellation and clock models, and
//! the transfer-loop cadence.  Every key has a default, so the empty file is
//! a complete, runnable baseline; unknown keys are rejected with a message
//! naming the key rather than silently ignored.
//!
//! Values that differ between the two sites (receiver aperture, zenith
//! transmittance, overcast probability, …) accept either a single scalar,
//! applied to both, or a `{ ma = …, op = … }` pair.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qstt_core::channel::{
    AtmosphereModel, OpticalTerminal, ProfileForm, TransmittanceTable, TurbulenceProfile,
};
use qstt_core::orbit::{KeplerianElements, StationLocation};
use qstt_core::pipeline::SessionKeyPolicy;
use qstt_core::qkdlink::{DetectorParams, ProtocolParams};
use qstt_core::timebase::parse_utc;
use qstt_core::timetransfer::ClockModel;

// --- errors --------------------------------------------------------------------

/// A scenario that could not be loaded or does not validate.  Distinguished
/// from runtime failures so the command line can exit with a dedicated code.
#[derive(Debug)]
pub struct ScenarioError(pub String);

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ScenarioError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError(msg.into()))
}

// --- the two sites ---------------------------------------------------------------

/// The two modeled sites.  Station maps may carry extra entries for pass
/// prediction, but the QKD/time-transfer chain is wired for exactly these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    Ma,
    Op,
}

pub const SITES: [Site; 2] = [Site::Ma, Site::Op];

impl Site {
    /// Lower-case key used in scenario sections.
    pub fn key(self) -> &'static str {
        match self {
            Site::Ma => "ma",
            Site::Op => "op",
        }
    }

    /// Upper-case label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Site::Ma => "MA",
            Site::Op => "OP",
        }
    }
}

/// A value configured either once for both sites or per site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerSite<T> {
    Same(T),
    Split { ma: T, op: T },
}

impl<T: Clone> PerSite<T> {
    pub fn site(&self, site: Site) -> T {
        match self {
            PerSite::Same(v) => v.clone(),
            PerSite::Split { ma, op } => match site {
                Site::Ma => ma.clone(),
                Site::Op => op.clone(),
            },
        }
    }
}

// --- sections --------------------------------------------------------------------

fn d_name() -> String {
    "baseline".to_string()
}
fn d_duration_days() -> f64 {
    365.0
}
fn d_step_s() -> f64 {
    1.0
}
fn d_mask_deg() -> f64 {
    20.0
}
fn d_seed() -> u64 {
    59_892
}

/// Run metadata and sampling controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    /// Run name; also the default output directory stem.
    pub name: String,
    /// Key-generation horizon, days.
    pub duration_days: f64,
    /// Orbit/channel sampling step, seconds.
    pub step_s: f64,
    /// Elevation mask for both the optical link and GNSS tracking, degrees.
    pub min_elevation_deg: f64,
    /// Master seed; every random stream in the run is derived from it.
    pub seed: u64,
    /// Output directory (default `out/<name>`).
    pub output: Option<PathBuf>,
    /// Use exact detection expectations instead of Poisson sampling.
    pub deterministic: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            name: d_name(),
            duration_days: d_duration_days(),
            step_s: d_step_s(),
            min_elevation_deg: d_mask_deg(),
            seed: d_seed(),
            output: None,
            deterministic: true,
        }
    }
}

fn d_altitude_km() -> f64 {
    500.0
}
fn d_inclination() -> f64 {
    75.6
}
fn d_raan() -> f64 {
    300.6
}
fn d_arg_perigee() -> f64 {
    84.38
}
fn d_mean_anomaly() -> f64 {
    38.29
}
fn d_epoch() -> String {
    "2022-11-09T00:00:00Z".to_string()
}

/// Circular LEO orbit of the QKD satellite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrbitSection {
    pub altitude_km: f64,
    pub inclination_deg: f64,
    pub raan_deg: f64,
    pub arg_perigee_deg: f64,
    pub mean_anomaly_deg: f64,
    /// Epoch of the elements, ISO-8601 UTC.
    pub epoch: String,
}

impl Default for OrbitSection {
    fn default() -> Self {
        Self {
            altitude_km: d_altitude_km(),
            inclination_deg: d_inclination(),
            raan_deg: d_raan(),
            arg_perigee_deg: d_arg_perigee(),
            mean_anomaly_deg: d_mean_anomaly(),
            epoch: d_epoch(),
        }
    }
}

/// One ground station; the map key is the station name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationSection {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub alt_m: f64,
}

fn default_stations() -> BTreeMap<String, StationSection> {
    BTreeMap::from([
        (
            "ma".to_string(),
            StationSection { lat_deg: 40.6486, lon_deg: 16.7046, alt_m: 536.0 },
        ),
        (
            "op".to_string(),
            StationSection { lat_deg: 48.0857, lon_deg: 11.2795, alt_m: 600.0 },
        ),
    ])
}

fn d_eta0_db() -> f64 {
    13.0
}
fn d_atmo_mode() -> String {
    "parametric".to_string()
}
fn d_t_zenith() -> PerSite<f64> {
    PerSite::Split { ma: 0.70, op: 0.65 }
}
fn d_cn2() -> f64 {
    1e-14
}
fn d_wind() -> f64 {
    21.0
}
fn d_quadrature() -> usize {
    2048
}

/// Elevation-dependent clear-sky transmittance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtmosphereSection {
    /// `parametric` (airmass law) or `table` (CSV lookup).
    pub mode: String,
    /// Zenith transmittance for the parametric law.
    pub t_zenith: PerSite<f64>,
    /// CSV path(s) with header `elevation_deg,transmittance`; required in
    /// `table` mode.
    pub table_path: Option<PerSite<String>>,
}

impl Default for AtmosphereSection {
    fn default() -> Self {
        Self { mode: d_atmo_mode(), t_zenith: d_t_zenith(), table_path: None }
    }
}

/// Turbulence-strength profile (ground value and wind speed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TurbulenceSection {
    /// Ground structure constant, m^(−2/3).
    pub cn2_ground: f64,
    /// Upper-atmosphere wind speed, m/s.
    pub wind_speed_ms: f64,
    /// Path-coordinate orientation of the coherence-length integral.
    pub xi_from_ground: bool,
    /// Composite-Simpson interval count for that integral.
    pub quadrature_intervals: usize,
}

impl Default for TurbulenceSection {
    fn default() -> Self {
        Self {
            cn2_ground: d_cn2(),
            wind_speed_ms: d_wind(),
            xi_from_ground: true,
            quadrature_intervals: d_quadrature(),
        }
    }
}

/// Downlink channel: fixed losses, atmosphere, turbulence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    /// Fixed system losses, dB.
    pub eta0_db: f64,
    pub atmosphere: AtmosphereSection,
    pub turbulence: TurbulenceSection,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            eta0_db: d_eta0_db(),
            atmosphere: AtmosphereSection::default(),
            turbulence: TurbulenceSection::default(),
        }
    }
}

fn d_wavelength_nm() -> f64 {
    1550.0
}
fn d_w0_m() -> f64 {
    0.15
}
fn d_theta_rx_urad() -> f64 {
    6.25
}
fn d_alpha_rx_urad() -> f64 {
    100.0
}

/// One site's receiver terminal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerminalSection {
    pub wavelength_nm: f64,
    /// Transmitter beam waist radius, m.
    pub w0_m: f64,
    /// Receiver aperture diameter, m.
    pub drx_m: f64,
    /// Receiver central obscuration diameter, m.
    pub docc_m: f64,
    /// Receiver half field of view, µrad.
    pub theta_rx_urad: f64,
    /// Receiver pointing error, µrad.
    pub alpha_rx_urad: f64,
}

impl TerminalSection {
    fn site_default(site: Site) -> Self {
        let (drx_m, docc_m) = match site {
            Site::Ma => (1.5, 0.1),
            Site::Op => (0.8, 0.3),
        };
        Self {
            wavelength_nm: d_wavelength_nm(),
            w0_m: d_w0_m(),
            drx_m,
            docc_m,
            theta_rx_urad: d_theta_rx_urad(),
            alpha_rx_urad: d_alpha_rx_urad(),
        }
    }
}

impl Default for TerminalSection {
    fn default() -> Self {
        Self::site_default(Site::Ma)
    }
}

fn d_terminal_ma() -> TerminalSection {
    TerminalSection::site_default(Site::Ma)
}
fn d_terminal_op() -> TerminalSection {
    TerminalSection::site_default(Site::Op)
}

/// Per-site terminals plus the field-of-view/pointing reading switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerminalBlock {
    /// Evaluate the angular factor with the roles of `theta_rx` and
    /// `alpha_rx` exchanged (both readings of the published parameters are
    /// supported; reports state which one produced the numbers).
    pub swap_fov_pointing: bool,
    #[serde(default = "d_terminal_ma")]
    pub ma: TerminalSection,
    #[serde(default = "d_terminal_op")]
    pub op: TerminalSection,
}

impl Default for TerminalBlock {
    fn default() -> Self {
        Self { swap_fov_pointing: false, ma: d_terminal_ma(), op: d_terminal_op() }
    }
}

/// Protocol constants and receiver detection parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QkdSection {
    pub mu1: f64,
    pub mu2: f64,
    pub p_mu1: f64,
    /// Z-basis probability, used by both transmitter and receiver.
    pub p_z: f64,
    pub f_ec: f64,
    pub eps_sec: f64,
    pub eps_corr: f64,
    /// Z-basis sifted bits per finite-key block.
    pub block_bits: f64,
    pub source_rate_hz: f64,
    pub coding_error: f64,
    pub det_eff: f64,
    pub dark_hz: f64,
    pub background_hz: f64,
    pub dead_time_ns: f64,
}

impl Default for QkdSection {
    fn default() -> Self {
        let p = ProtocolParams::default();
        let d = DetectorParams::default();
        Self {
            mu1: p.mu1,
            mu2: p.mu2,
            p_mu1: p.p_mu1,
            p_z: p.p_z_alice,
            f_ec: p.f_ec,
            eps_sec: p.eps_sec,
            eps_corr: p.eps_corr,
            block_bits: p.block_bits,
            source_rate_hz: d.source_rate_hz,
            coding_error: p.coding_error,
            det_eff: d.det_eff,
            dark_hz: d.dark_hz,
            background_hz: d.background_hz,
            dead_time_ns: d.dead_time_ns,
        }
    }
}

fn d_p_overcast() -> PerSite<f64> {
    PerSite::Split { ma: 0.342, op: 0.553 }
}

/// Average weather availability used to derate the key rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeatherSection {
    /// Probability that overcast skies preclude the optical link.
    pub p_overcast: PerSite<f64>,
}

impl Default for WeatherSection {
    fn default() -> Self {
        Self { p_overcast: d_p_overcast() }
    }
}

/// Average secret key rate of each site's short fiber link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LastmileSection {
    pub ma_skr_bps: f64,
    pub op_skr_bps: f64,
}

impl Default for LastmileSection {
    fn default() -> Self {
        Self { ma_skr_bps: 1900.0, op_skr_bps: 3600.0 }
    }
}

/// Encryptor key demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemandSection {
    /// Session key size, bits.
    pub key_bits: u64,
    /// Session key refresh interval, seconds.
    pub refresh_s: f64,
    /// Demand rate used in the feasibility check, bits per minute.
    pub rate_bpm: f64,
}

impl Default for DemandSection {
    fn default() -> Self {
        Self { key_bits: 256, refresh_s: 120.0, rate_bpm: 256.0 }
    }
}

/// Simulated GNSS constellation and its common timescale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GnssSection {
    pub n_sats: usize,
    /// Fractional rate of the system timescale, s/s (cancels between sites).
    pub gst_drift: f64,
    /// Standard deviation of the fixed per-satellite clock bias, ns.
    pub per_sat_noise_ns: f64,
}

impl Default for GnssSection {
    fn default() -> Self {
        Self { n_sats: 16, gst_drift: 0.0, per_sat_noise_ns: 3.0 }
    }
}

/// One timing facility's clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClockSection {
    pub offset_ns: f64,
    pub drift_ns_per_day: f64,
    /// White phase noise per epoch, ns.
    pub noise_ns: f64,
}

impl Default for ClockSection {
    fn default() -> Self {
        Self { offset_ns: 0.0, drift_ns_per_day: 0.0, noise_ns: 1.0 }
    }
}

fn d_clock_ma() -> ClockSection {
    ClockSection { offset_ns: 0.0, drift_ns_per_day: -3.1, noise_ns: 1.0 }
}
fn d_clock_op() -> ClockSection {
    ClockSection { offset_ns: 4917.0, drift_ns_per_day: -2.6, noise_ns: 1.0 }
}

/// The two facility clocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClocksSection {
    #[serde(default = "d_clock_ma")]
    pub ma: ClockSection,
    #[serde(default = "d_clock_op")]
    pub op: ClockSection,
}

impl Default for ClocksSection {
    fn default() -> Self {
        Self { ma: d_clock_ma(), op: d_clock_op() }
    }
}

/// Residual correction errors after the delay budget is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrectionsSection {
    /// Zenith residual sigma, ns; scales with 1/sin(elevation).
    pub sigma0_ns: f64,
}

impl Default for CorrectionsSection {
    fn default() -> Self {
        Self { sigma0_ns: 2.0 }
    }
}

/// Clock-data file constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CggttsSection {
    /// Shortest satellite track that produces a record, minutes.
    pub min_track_min: f64,
}

impl Default for CggttsSection {
    fn default() -> Self {
        Self { min_track_min: 13.0 }
    }
}

/// GNSS comparison campaign (runs alongside the key-generation horizon).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeTransferSection {
    pub campaign_days: f64,
    /// Observation epoch spacing, seconds.
    pub epoch_step_s: f64,
}

impl Default for TimeTransferSection {
    fn default() -> Self {
        Self { campaign_days: 2.0, epoch_step_s: 300.0 }
    }
}

/// Encrypted clock-data transfer loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    /// Seconds between file transfers.
    pub cadence_s: f64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self { cadence_s: 1800.0 }
    }
}

// --- the scenario ------------------------------------------------------------------

/// A complete, validated run description.  All fields have defaults; the
/// empty file is the baseline configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub sim: SimSection,
    pub orbit: OrbitSection,
    #[serde(default = "default_stations")]
    pub stations: BTreeMap<String, StationSection>,
    pub channel: ChannelSection,
    pub terminal: TerminalBlock,
    pub qkd: QkdSection,
    pub weather: WeatherSection,
    pub lastmile: LastmileSection,
    pub demand: DemandSection,
    pub gnss: GnssSection,
    pub clocks: ClocksSection,
    pub corrections: CorrectionsSection,
    pub cggtts: CggttsSection,
    pub timetransfer: TimeTransferSection,
    pub pipeline: PipelineSection,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            sim: SimSection::default(),
            orbit: OrbitSection::default(),
            stations: default_stations(),
            channel: ChannelSection::default(),
            terminal: TerminalBlock::default(),
            qkd: QkdSection::default(),
            weather: WeatherSection::default(),
            lastmile: LastmileSection::default(),
            demand: DemandSection::default(),
            gnss: GnssSection::default(),
            clocks: ClocksSection::default(),
            corrections: CorrectionsSection::default(),
            cggtts: CggttsSection::default(),
            timetransfer: TimeTransferSection::default(),
            pipeline: PipelineSection::default(),
        }
    }
}

impl Scenario {
    /// The all-defaults configuration (what the empty file loads to).
    pub fn baseline() -> Self {
        Scenario::default()
    }
}

// --- loading ------------------------------------------------------------------------

/// Names resolvable without a file on disk; the shipped scenario files under
/// `scenarios/` hold the same content.
pub const BUILTIN_SCENARIOS: [(&str, &str); 3] = [
    ("paper-baseline", include_str!("../../../scenarios/paper-baseline.toml")),
    (
        "paper-baseline-swapped-fov",
        include_str!("../../../scenarios/paper-baseline-swapped-fov.toml"),
    ),
    ("smoke-1day", include_str!("../../../scenarios/smoke-1day.toml")),
];

/// Load a scenario from a `.toml`/`.json` path or a built-in name, fill
/// defaults, and validate.
pub fn load_scenario(arg: &str) -> Result<Scenario, ScenarioError> {
    let path = Path::new(arg);
    let scenario = if let Some((_, text)) =
        BUILTIN_SCENARIOS.iter().find(|(name, _)| *name == arg && !path.exists())
    {
        parse_scenario(text, "toml")
            .map_err(|e| ScenarioError(format!("built-in scenario {arg}: {e}")))?
    } else {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        if ext != "toml" && ext != "json" {
            return err(format!(
                "{arg}: unrecognized scenario format (expected a .toml or .json file \
                 or one of the built-in names: paper-baseline, \
                 paper-baseline-swapped-fov, smoke-1day)"
            ));
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError(format!("{arg}: {e}")))?;
        parse_scenario(&text, &ext).map_err(|e| ScenarioError(format!("{arg}: {e}")))?
    };
    scenario.validated(path.parent())
}

/// Parse one document without validation; the empty document is the
/// all-defaults scenario in either format.
pub fn parse_scenario(text: &str, format: &str) -> Result<Scenario, ScenarioError> {
    if text.trim().is_empty() {
        return Ok(Scenario::baseline());
    }
    match format {
        "toml" => toml::from_str(text).map_err(|e| ScenarioError(e.to_string())),
        "json" => serde_json::from_str(text).map_err(|e| ScenarioError(e.to_string())),
        other => err(format!("unsupported scenario format {other:?}")),
    }
}

impl Scenario {
    /// Check cross-field constraints and resolve referenced paths; `base`
    /// anchors relative table paths to the scenario file's directory.
    pub fn validated(mut self, base: Option<&Path>) -> Result<Self, ScenarioError> {
        if !(self.sim.step_s > 0.0) {
            return err(format!("sim.step_s must be positive, got {}", self.sim.step_s));
        }
        if !(self.sim.duration_days > 0.0) {
            return err(format!(
                "sim.duration_days must be positive, got {}",
                self.sim.duration_days
            ));
        }
        if !(0.0..90.0).contains(&self.sim.min_elevation_deg) {
            return err(format!(
                "sim.min_elevation_deg must lie in [0, 90), got {}",
                self.sim.min_elevation_deg
            ));
        }
        parse_utc(&self.orbit.epoch)
            .map_err(|e| ScenarioError(format!("orbit.epoch: {e}")))?;
        if self.stations.is_empty() {
            return err("stations: at least one station is required");
        }
        match self.channel.atmosphere.mode.as_str() {
            "parametric" => {}
            "table" => {
                let Some(paths) = self.channel.atmosphere.table_path.clone() else {
                    return err(
                        "channel.atmosphere.table_path is required when \
                         channel.atmosphere.mode = \"table\"",
                    );
                };
                let resolve = |p: String| -> Result<String, ScenarioError> {
                    let path = PathBuf::from(&p);
                    let path = if path.is_relative() {
                        base.unwrap_or(Path::new(".")).join(path)
                    } else {
                        path
                    };
                    if !path.is_file() {
                        return err(format!(
                            "channel.atmosphere.table_path: {} does not exist",
                            path.display()
                        ));
                    }
                    Ok(path.to_string_lossy().into_owned())
                };
                self.channel.atmosphere.table_path = Some(match paths {
                    PerSite::Same(p) => PerSite::Same(resolve(p)?),
                    PerSite::Split { ma, op } => {
                        PerSite::Split { ma: resolve(ma)?, op: resolve(op)? }
                    }
                });
            }
            other => {
                return err(format!(
                    "channel.atmosphere.mode must be \"parametric\" or \"table\", \
                     got {other:?}"
                ));
            }
        }
        if self.demand.key_bits != 256 {
            return err(format!(
                "demand.key_bits must be 256 (the session cipher is AES-256), got {}",
                self.demand.key_bits
            ));
        }
        if !(self.demand.refresh_s > 0.0) {
            return err(format!(
                "demand.refresh_s must be positive, got {}",
                self.demand.refresh_s
            ));
        }
        if self.cggtts.min_track_min < 13.0 {
            return err(format!(
                "cggtts.min_track_min must be at least 13 (shorter tracks do not \
                 form valid records), got {}",
                self.cggtts.min_track_min
            ));
        }
        if !(self.timetransfer.epoch_step_s > 0.0)
            || !(self.timetransfer.campaign_days > 0.0)
        {
            return err("timetransfer.campaign_days and epoch_step_s must be positive");
        }
        if !(self.pipeline.cadence_s > 0.0) {
            return err(format!(
                "pipeline.cadence_s must be positive, got {}",
                self.pipeline.cadence_s
            ));
        }
        if self.gnss.n_sats == 0 {
            return err("gnss.n_sats must be at least 1");
        }
        Ok(self)
    }

    /// Require both modeled sites among the configured stations (needed by
    /// every stage past bare pass prediction).
    pub fn require_both_sites(&self) -> Result<(), ScenarioError> {
        for site in SITES {
            if !self.stations.contains_key(site.key()) {
                return err(format!(
                    "stations.{}: required for this command (the QKD and \
                     time-transfer chain is wired for stations \"ma\" and \"op\")",
                    site.key()
                ));
            }
        }
        Ok(())
    }

    // --- views onto core types ---------------------------------------------

    pub fn epoch_unix_s(&self) -> f64 {
        parse_utc(&self.orbit.epoch).expect("validated at load")
    }

    pub fn elements(&self) -> Result<KeplerianElements, ScenarioError> {
        KeplerianElements {
            semi_major_axis_km: qstt_core::constants::WGS84_A_M / 1e3
                + self.orbit.altitude_km,
            eccentricity: 0.0,
            inclination_deg: self.orbit.inclination_deg,
            raan_deg: self.orbit.raan_deg,
            arg_perigee_deg: self.orbit.arg_perigee_deg,
            mean_anomaly_deg: self.orbit.mean_anomaly_deg,
            epoch_unix_s: self.epoch_unix_s(),
        }
        .validated()
        .map_err(|e| ScenarioError(format!("orbit: {e}")))
    }

    pub fn station(&self, name: &str) -> Result<StationLocation, ScenarioError> {
        let Some(st) = self.stations.get(name) else {
            return err(format!("stations.{name}: not configured"));
        };
        StationLocation::new(&name.to_uppercase(), st.lat_deg, st.lon_deg, st.alt_m)
            .map_err(|e| ScenarioError(format!("stations.{name}: {e}")))
    }

    pub fn terminal_for(&self, site: Site) -> Result<OpticalTerminal, ScenarioError> {
        let t = match site {
            Site::Ma => &self.terminal.ma,
            Site::Op => &self.terminal.op,
        };
        OpticalTerminal {
            wavelength_m: t.wavelength_nm * 1e-9,
            w0_m: t.w0_m,
            drx_m: t.drx_m,
            docc_m: t.docc_m,
            theta_rx_rad: t.theta_rx_urad * 1e-6,
            alpha_rx_rad: t.alpha_rx_urad * 1e-6,
            eta0_db: self.channel.eta0_db,
            swap_fov_pointing: self.terminal.swap_fov_pointing,
        }
        .validated()
        .map_err(|e| ScenarioError(format!("terminal.{}: {e}", site.key())))
    }

    pub fn turbulence(&self) -> TurbulenceProfile {
        TurbulenceProfile {
            cn2_ground: self.channel.turbulence.cn2_ground,
            wind_speed_ms: self.channel.turbulence.wind_speed_ms,
            profile_form: ProfileForm::HufnagelValley,
            xi_from_ground: self.channel.turbulence.xi_from_ground,
            quadrature_intervals: self.channel.turbulence.quadrature_intervals,
        }
    }

    pub fn atmosphere_for(&self, site: Site) -> Result<AtmosphereModel, ScenarioError> {
        match self.channel.atmosphere.mode.as_str() {
            "parametric" => Ok(AtmosphereModel::Parametric {
                t_zenith: self.channel.atmosphere.t_zenith.site(site),
            }),
            "table" => {
                let path = self
                    .channel
                    .atmosphere
                    .table_path
                    .as_ref()
                    .expect("validated at load")
                    .site(site);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| ScenarioError(format!("{path}: {e}")))?;
                let table = TransmittanceTable::from_csv_str(&text, true)
                    .map_err(|e| ScenarioError(format!("{path}: {e}")))?;
                Ok(AtmosphereModel::Table(table))
            }
            other => err(format!("channel.atmosphere.mode {other:?}")),
        }
    }

    pub fn protocol(&self) -> Result<ProtocolParams, ScenarioError> {
        ProtocolParams {
            mu1: self.qkd.mu1,
            mu2: self.qkd.mu2,
            p_mu1: self.qkd.p_mu1,
            p_z_alice: self.qkd.p_z,
            p_z_bob: self.qkd.p_z,
            coding_error: self.qkd.coding_error,
            jitter_error: 0.0,
            f_ec: self.qkd.f_ec,
            eps_sec: self.qkd.eps_sec,
            eps_corr: self.qkd.eps_corr,
            block_bits: self.qkd.block_bits,
        }
        .validated()
        .map_err(|e| ScenarioError(format!("qkd: {e}")))
    }

    pub fn detector(&self) -> DetectorParams {
        DetectorParams {
            source_rate_hz: self.qkd.source_rate_hz,
            det_eff: self.qkd.det_eff,
            dark_hz: self.qkd.dark_hz,
            background_hz: self.qkd.background_hz,
            dead_time_ns: self.qkd.dead_time_ns,
        }
    }

    pub fn lastmile_bps(&self, site: Site) -> f64 {
        match site {
            Site::Ma => self.lastmile.ma_skr_bps,
            Site::Op => self.lastmile.op_skr_bps,
        }
    }

    pub fn clock_model(&self, site: Site) -> ClockModel {
        let c = match site {
            Site::Ma => &self.clocks.ma,
            Site::Op => &self.clocks.op,
        };
        ClockModel {
            initial_offset_s: c.offset_ns * 1e-9,
            drift_s_per_s: c.drift_ns_per_day * 1e-9 / 86_400.0,
            white_noise_sigma_s: c.noise_ns * 1e-9,
            seed: qstt_core::subseed(self.sim.seed, &format!("clock-{}", site.key())),
        }
    }

    pub fn session_policy(&self) -> SessionKeyPolicy {
        SessionKeyPolicy {
            key_bits: self.demand.key_bits,
            refresh_interval_s: self.demand.refresh_s,
        }
    }

    /// Output directory: explicit config or `out/<name>`.
    pub fn output_dir(&self) -> PathBuf {
        self.sim
            .output
            .clone()
            .unwrap_or_else(|| PathBuf::from("out").join(&self.sim.name))
    }
}

// --- tests ---------------------------------------------------------------
