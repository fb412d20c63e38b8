//! The end-to-end use case: satellite passes feed a downlink QKD model whose
//! blocks become relayed key material; in parallel, both timing facilities
//! compare their clocks against a common GNSS constellation, and the
//! resulting clock-data files travel over an authenticated encrypted link
//! keyed from the relayed material.
//!
//! Every random quantity is drawn from a stream derived from the master seed
//! and a fixed tag, so a scenario runs to byte-identical artifacts every
//! time.  Detection statistics default to exact expectations; Poisson
//! sampling is a scenario switch.

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use qstt_core::channel::{channel_efficiency, ChannelSample};
use qstt_core::constants::{DAY_S, MJD_AT_UNIX_EPOCH, WGS84_A_M};
use qstt_core::keymgmt::{
    consumption_feasibility, ledger_csv, FeasibilityReport, KeyMaterial, KeyOrigin,
    KeyRelay, KeyStore,
};
use qstt_core::orbit::{
    look_angles, pass_statistics, satellite_position_eci, track_station_passes, Pass,
    PassStats, StationLocation,
};
use qstt_core::pipeline::{run_transfer_loop, CggttsFile, CggttsRecord, TransferRun};
use qstt_core::qkdlink::{
    annual_skr, apply_weather, detection_statistics, finite_key_length, BlockAccumulator,
    DetectionMode, KeyBlock, SkrReport,
};
use qstt_core::subseed;
use qstt_core::timebase::mjd_day;
use qstt_core::timetransfer::{
    all_in_view_median, fit_daily_drift, nominal_constellation, observe_satellite,
    ptf_offset, simulate_clock, ClockModel, ClockTrace, DelayBudget, DriftFit,
    OffsetSample, OffsetSeries, ResidualModel,
};

use crate::scenario::{Scenario, Site, SITES};

// --- channel lookup -------------------------------------------------------------

/// Grid spacing of the precomputed channel-efficiency table, degrees.  The
/// efficiency varies smoothly with elevation, so linear interpolation at
/// this spacing is far tighter than any model uncertainty, and it removes a
/// 2048-node quadrature from the per-second sampling loop.
const ETA_GRID_STEP_DEG: f64 = 0.02;

/// Slant range to a circular orbit at the given elevation over a spherical
/// Earth: `sqrt(r_o² − r_g²·cos²(el)) − r_g·sin(el)`.
pub fn slant_range_km(elevation_deg: f64, orbit_altitude_km: f64, ground_alt_m: f64) -> f64 {
    let r_g = WGS84_A_M / 1e3 + ground_alt_m / 1e3;
    let r_o = WGS84_A_M / 1e3 + orbit_altitude_km;
    let el = elevation_deg.to_radians();
    (r_o * r_o - r_g * r_g * el.cos() * el.cos()).sqrt() - r_g * el.sin()
}

/// Channel efficiency tabulated over elevation for one site.
pub struct EtaGrid {
    mask_deg: f64,
    /// One sample every [`ETA_GRID_STEP_DEG`] from the mask to zenith.
    pub samples: Vec<ChannelSample>,
}

impl EtaGrid {
    pub fn build(scenario: &Scenario, site: Site) -> Result<Self> {
        let terminal = scenario.terminal_for(site)?;
        let profile = scenario.turbulence();
        let atmosphere = scenario.atmosphere_for(site)?;
        let ground_alt_m = scenario
            .stations
            .get(site.key())
            .map(|s| s.alt_m)
            .unwrap_or(0.0);
        let mask = scenario.sim.min_elevation_deg;
        let n = ((90.0 - mask) / ETA_GRID_STEP_DEG).ceil() as usize + 1;
        let mut samples = Vec::with_capacity(n);
        for i in 0..n {
            let el = (mask + i as f64 * ETA_GRID_STEP_DEG).min(90.0);
            let slant = slant_range_km(el, scenario.orbit.altitude_km, ground_alt_m);
            let sample =
                channel_efficiency(&terminal, &profile, &atmosphere, ground_alt_m, 0.0, el, slant)
                    .with_context(|| {
                        format!("channel efficiency for {} at {el:.2}°", site.label())
                    })?;
            samples.push(sample);
        }
        Ok(Self { mask_deg: mask, samples })
    }

    /// Linear interpolation in elevation, clamped to the tabulated range.
    pub fn eta_at(&self, elevation_deg: f64) -> f64 {
        let last = self.samples.len() - 1;
        let x = ((elevation_deg - self.mask_deg) / ETA_GRID_STEP_DEG).clamp(0.0, last as f64);
        let i = (x.floor() as usize).min(last - 1);
        let frac = x - i as f64;
        self.samples[i].eta * (1.0 - frac) + self.samples[i + 1].eta * frac
    }
}

// --- stage reports ---------------------------------------------------------------

/// Pass prediction for one configured station.
pub struct OrbitReport {
    pub passes: Vec<Pass>,
    pub stats: PassStats,
}

/// Keyed by scenario station name (lower case), which sorts deterministically.
pub type OrbitStage = BTreeMap<String, OrbitReport>;

/// Full per-site key-generation outcome.
pub struct StationReport {
    pub site: Site,
    pub passes: Vec<Pass>,
    pub stats: PassStats,
    pub channel_grid: Vec<ChannelSample>,
    pub blocks: Vec<KeyBlock>,
    pub skr: SkrReport,
    pub p_overcast: f64,
    pub derated_skr_bps: f64,
    pub feasibility: FeasibilityReport,
}

/// One satellite track distilled into a clock-data record, tagged with the
/// epoch at which it completed (drives the transfer-loop windows).
pub struct TimedRecord {
    pub end_unix_s: f64,
    pub record: CggttsRecord,
}

/// GNSS comparison campaign outcome.
pub struct TimeTransferReport {
    pub ma_vs_gnss: OffsetSeries,
    pub op_vs_gnss: OffsetSeries,
    pub op_vs_ma: OffsetSeries,
    /// Per-series daily drift fits, keyed by series label, then MJD.
    pub drift: Vec<(String, Vec<(i64, DriftFit)>)>,
    /// Clock-data records per site label.
    pub records: BTreeMap<String, Vec<TimedRecord>>,
}

/// Encrypted transfer-loop outcome with its key-consumption audit.
pub struct PipelineReport {
    pub run: TransferRun,
    pub ledger_csv: String,
    /// Bits moved OGS → PTF per site by the key relay.
    pub relayed_bits: u64,
    /// Session-key bits the sending/receiving ends withdrew during the loop.
    pub sender_session_bits: u64,
    pub receiver_session_bits: u64,
    /// All four stores satisfied their conservation invariant afterwards.
    pub stores_conserved: bool,
}

/// Everything one run produces, ready for rendering.
pub struct UsecaseReport {
    pub scenario_name: String,
    pub seed: u64,
    pub deterministic: bool,
    pub horizon_days: f64,
    pub step_s: f64,
    pub start_unix_s: f64,
    pub stations: Vec<StationReport>,
    /// Pass prediction for stations beyond the two modeled sites.
    pub extra_passes: BTreeMap<String, OrbitReport>,
    pub timetransfer: TimeTransferReport,
    pub pipeline: PipelineReport,
}

// --- orbit stage ----------------------------------------------------------------

/// Propagate the orbit and extract mask-filtered passes for every station.
pub fn run_orbit_stage(scenario: &Scenario) -> Result<OrbitStage> {
    let elements = scenario.elements()?;
    let duration_s = scenario.sim.duration_days * DAY_S;
    let mut out = BTreeMap::new();
    for name in scenario.stations.keys() {
        let loc = scenario.station(name)?;
        let passes = track_station_passes(
            &elements,
            &loc,
            duration_s,
            scenario.sim.step_s,
            scenario.sim.min_elevation_deg,
        )
        .with_context(|| format!("orbit propagation for station {name}"))?;
        let stats = pass_statistics(&passes, scenario.sim.step_s, scenario.sim.duration_days);
        out.insert(name.clone(), OrbitReport { passes, stats });
    }
    Ok(out)
}

// --- qkd stage ------------------------------------------------------------------

/// Fold one site's passes through the channel and detection models into
/// finite-key blocks and headline rates.
pub fn run_station_qkd(
    scenario: &Scenario,
    site: Site,
    passes: Vec<Pass>,
    stats: PassStats,
) -> Result<StationReport> {
    let protocol = scenario.protocol()?;
    let detector = scenario.detector();
    let grid = EtaGrid::build(scenario, site)?;
    let atmosphere = scenario.atmosphere_for(site)?;
    let step_s = scenario.sim.step_s;

    let mut rng = (!scenario.sim.deterministic).then(|| {
        ChaCha12Rng::seed_from_u64(subseed(scenario.sim.seed, &format!("qkd-{}", site.key())))
    });
    let mut acc = BlockAccumulator::new(protocol.block_bits);
    for (pass_id, pass) in passes.iter().enumerate() {
        for s in &pass.samples {
            let eta = grid.eta_at(s.look.elevation_deg);
            let mode = match rng.as_mut() {
                None => DetectionMode::Expectation,
                Some(r) => DetectionMode::Poisson(r),
            };
            let batch =
                detection_statistics(eta, s.t_unix_s, step_s, &protocol, &detector, mode);
            acc.push(&batch.counts, pass_id as u64);
        }
    }
    let mut blocks = std::mem::take(&mut acc.blocks);
    for block in &mut blocks {
        block.secret_bits = Some(finite_key_length(&block.counts, &protocol));
    }

    let eta_f_reading = if scenario.terminal.swap_fov_pointing {
        "theta_rx read as pointing error, alpha_rx as field of view (swapped)"
    } else {
        "theta_rx read as field of view, alpha_rx as pointing error (literal)"
    };
    let horizon_s = scenario.sim.duration_days * DAY_S;
    let skr = annual_skr(site.label(), &blocks, horizon_s, eta_f_reading, &atmosphere.describe());
    let p_overcast = scenario.weather.p_overcast.site(site);
    let derated = apply_weather(skr.mean_skr_bps, p_overcast)
        .with_context(|| format!("weather derating for {}", site.label()))?;
    let feasibility = consumption_feasibility(
        derated,
        scenario.demand.rate_bpm,
        scenario.sim.duration_days,
        0.0,
    );

    Ok(StationReport {
        site,
        passes,
        stats,
        channel_grid: grid.samples,
        blocks,
        skr,
        p_overcast,
        derated_skr_bps: derated,
        feasibility,
    })
}

// --- time-transfer stage ----------------------------------------------------------

/// Per-site working state while sweeping campaign epochs.
struct SiteSweep {
    label: &'static str,
    loc: StationLocation,
    trace: ClockTrace,
    rng: ChaCha12Rng,
    series: OffsetSeries,
    /// Open per-satellite track accumulators.
    open: BTreeMap<String, TrackAcc>,
    records: Vec<TimedRecord>,
}

/// Accumulates one satellite's consecutive in-view epochs until a full
/// track's worth is collected.
struct TrackAcc {
    start_t: f64,
    last_t: f64,
    n: usize,
    sum_refsv_s: f64,
    sum_refsys_s: f64,
    sum_elev_deg: f64,
}

impl TrackAcc {
    fn new(t: f64) -> Self {
        Self { start_t: t, last_t: t, n: 0, sum_refsv_s: 0.0, sum_refsys_s: 0.0, sum_elev_deg: 0.0 }
    }
}

/// Convert a completed accumulator into a fixed-length clock-data record.
fn finish_track(sat: &str, acc: &TrackAcc, step_s: f64) -> Result<CggttsRecord> {
    let n = acc.n as f64;
    let day_start_unix = (mjd_day(acc.start_t) as f64 - MJD_AT_UNIX_EPOCH) * DAY_S;
    let record = CggttsRecord {
        sat_id: sat.to_string(),
        mjd: mjd_day(acc.start_t) as u32,
        start_time_s: (acc.start_t - day_start_unix).round() as u32,
        track_length_s: (acc.n as f64 * step_s).round() as u32,
        refsv_0p1ns: (acc.sum_refsv_s / n * 1e10).round() as i64,
        refsys_0p1ns: (acc.sum_refsys_s / n * 1e10).round() as i64,
        elevation_0p1deg: ((acc.sum_elev_deg / n * 10.0).round() as i32).clamp(0, 900),
    };
    record.validate().with_context(|| format!("clock-data record for {sat}"))?;
    Ok(record)
}

/// Run the all-in-view clock comparison campaign for both sites and difference
/// the results.  The GNSS timescale and per-satellite clock biases are common
/// to the two sites; facility clocks, measurement residuals, and satellite
/// visibility are per-site.
pub fn run_timetransfer_stage(scenario: &Scenario) -> Result<TimeTransferReport> {
    let seed = scenario.sim.seed;
    let start = scenario.epoch_unix_s();
    let step = scenario.timetransfer.epoch_step_s;
    let campaign_s = scenario.timetransfer.campaign_days * DAY_S;
    let n_epochs = (campaign_s / step).floor() as usize + 1;
    let mask = scenario.sim.min_elevation_deg;

    let sats = nominal_constellation(scenario.gnss.n_sats, start);
    let gst = simulate_clock(
        &ClockModel {
            initial_offset_s: 0.0,
            drift_s_per_s: scenario.gnss.gst_drift,
            white_noise_sigma_s: 0.0,
            seed: subseed(seed, "gst"),
        },
        start,
        campaign_s,
        step,
    );
    let bias_sigma = scenario.gnss.per_sat_noise_ns * 1e-9;
    let biases: Vec<f64> = sats
        .iter()
        .map(|(name, _)| {
            let mut rng = ChaCha12Rng::seed_from_u64(subseed(seed, &format!("sat-bias-{name}")));
            Normal::new(0.0, bias_sigma).expect("sigma ≥ 0").sample(&mut rng)
        })
        .collect();
    let residuals = ResidualModel { sigma0_s: scenario.corrections.sigma0_ns * 1e-9 };

    // samples per completed track: shortest multiple of the epoch step that
    // covers the configured minimum collection time
    let track_samples = (scenario.cggtts.min_track_min * 60.0 / step).ceil().max(1.0) as usize;

    let mut sweeps = Vec::new();
    for site in SITES {
        sweeps.push(SiteSweep {
            label: site.label(),
            loc: scenario.station(site.key())?,
            trace: simulate_clock(&scenario.clock_model(site), start, campaign_s, step),
            rng: ChaCha12Rng::seed_from_u64(subseed(seed, &format!("residual-{}", site.key()))),
            series: OffsetSeries::new(site.label()),
            open: BTreeMap::new(),
            records: Vec::new(),
        });
    }

    for k in 0..n_epochs {
        let t = start + k as f64 * step;
        for sweep in &mut sweeps {
            let rec_v = sweep.loc.ecef_m();
            let rec = [rec_v.x, rec_v.y, rec_v.z];
            let rec_norm = rec_v.norm();
            let mut observations = Vec::new();
            for (idx, (name, elements)) in sats.iter().enumerate() {
                let pos = satellite_position_eci(elements, t)
                    .with_context(|| format!("constellation propagation for {name}"))?;
                let look = look_angles(&pos, &sweep.loc, t)
                    .with_context(|| format!("{name} seen from {}", sweep.label))?;
                if look.elevation_deg < mask {
                    // a track interrupted before reaching full length is discarded
                    sweep.open.remove(name);
                    continue;
                }
                let residual = residuals.sample(look.elevation_deg, &mut sweep.rng);
                let sat_offset = gst.offset_at(k) + biases[idx];
                let range_m = look.slant_range_km * 1e3;
                // place the modeled antenna along the local vertical at the
                // measured range; the budget then inverts to a pseudorange
                // consistent with the geometry, leaving only the residual
                let sat_pos = [
                    rec[0] + rec[0] / rec_norm * range_m,
                    rec[1] + rec[1] / rec_norm * range_m,
                    rec[2] + rec[2] / rec_norm * range_m,
                ];
                let budget = DelayBudget::with_residual(
                    sat_pos,
                    rec,
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                    [0.0; 5],
                    range_m,
                    residual,
                );
                let obs = observe_satellite(
                    sweep.label,
                    name,
                    t,
                    sweep.trace.offset_at(k),
                    sat_offset,
                    &look,
                    &budget,
                )
                .with_context(|| format!("observation of {name} at {}", sweep.label))?;

                let acc = sweep.open.entry(name.clone()).or_insert_with(|| TrackAcc::new(t));
                if t - acc.last_t > step * 1.5 && acc.n > 0 {
                    *acc = TrackAcc::new(t); // gap: restart the collection
                }
                acc.last_t = t;
                acc.n += 1;
                acc.sum_refsv_s += obs.delta_t_corr_s;
                acc.sum_refsys_s += obs.delta_t_corr_s + biases[idx];
                acc.sum_elev_deg += look.elevation_deg;
                if acc.n == track_samples {
                    let record = finish_track(name, acc, step)?;
                    sweep.records.push(TimedRecord { end_unix_s: t, record });
                    sweep.open.remove(name);
                }
                observations.push(obs);
            }
            if !observations.is_empty() {
                let median = all_in_view_median(&observations)?;
                sweep
                    .series
                    .push(OffsetSample { t_unix_s: t, offset_s: median, n_sats: observations.len() })
                    .context("offset series epoch ordering")?;
            }
        }
    }

    let mut it = sweeps.into_iter();
    let ma = it.next().expect("two sweeps");
    let op = it.next().expect("two sweeps");
    let op_vs_ma = ptf_offset(&op.series, &ma.series, step * 0.5)
        .context("differencing the two facility series")?;

    let mut drift = Vec::new();
    for series in [&ma.series, &op.series, &op_vs_ma] {
        drift.push((series.label.clone(), fit_drift_per_day(series)?));
    }

    let mut records = BTreeMap::new();
    records.insert(ma.label.to_string(), ma.records);
    records.insert(op.label.to_string(), op.records);

    Ok(TimeTransferReport {
        ma_vs_gnss: ma.series,
        op_vs_gnss: op.series,
        op_vs_ma,
        drift,
        records,
    })
}

/// Fit one drift line per MJD day with at least two samples.
fn fit_daily_subseries(
    series: &OffsetSeries,
    day: i64,
) -> Result<Option<DriftFit>> {
    let mut sub = OffsetSeries::new(&series.label);
    for s in series.samples.iter().filter(|s| mjd_day(s.t_unix_s) == day) {
        sub.push(*s).context("per-day sub-series ordering")?;
    }
    if sub.samples.len() < 2 {
        return Ok(None);
    }
    Ok(Some(fit_daily_drift(&sub).context("daily drift fit")?))
}

fn fit_drift_per_day(series: &OffsetSeries) -> Result<Vec<(i64, DriftFit)>> {
    let mut days: Vec<i64> = series.samples.iter().map(|s| mjd_day(s.t_unix_s)).collect();
    days.dedup();
    let mut out = Vec::new();
    for day in days {
        if let Some(fit) = fit_daily_subseries(series, day)? {
            out.push((day, fit));
        }
    }
    Ok(out)
}

// --- pipeline stage ----------------------------------------------------------------

/// Seeded random key bytes standing in for distilled key material.
fn seeded_key_bytes(seed: u64, tag: &str, n_bytes: usize) -> Vec<u8> {
    use rand::RngCore;
    let mut rng = ChaCha12Rng::seed_from_u64(subseed(seed, tag));
    let mut bytes = vec![0u8; n_bytes];
    rng.fill_bytes(&mut bytes);
    bytes
}

/// Provision the four stores, relay satellite key to both facilities, and
/// run the periodic encrypted clock-data transfer.
pub fn run_pipeline_stage(
    scenario: &Scenario,
    timetransfer: &TimeTransferReport,
) -> Result<PipelineReport> {
    let policy = scenario.session_policy();
    let cadence = scenario.pipeline.cadence_s;
    let start = scenario.epoch_unix_s();
    let campaign_s = scenario.timetransfer.campaign_days * DAY_S;
    let ticks = (campaign_s / cadence).floor() as u64;
    // a few spare epochs so a refresh just past the final tick cannot starve
    let session_bits = policy.key_bits * (ticks + 4);
    let session_bytes = session_bits.div_ceil(8) as usize;
    let session_bits = session_bytes as u64 * 8;

    let seed = scenario.sim.seed;
    let satellite_stream = seeded_key_bytes(seed, "satellite-key", session_bytes);

    let mut relayed = 0;
    let mut ptf_stores = Vec::new();
    let mut ogs_stores = Vec::new();
    for site in SITES {
        let mut ogs = KeyStore::new(&format!("OGS-{}", site.label()));
        let mut ptf = KeyStore::new(&format!("PTF-{}", site.label()));
        let pad = seeded_key_bytes(seed, &format!("lastmile-{}", site.key()), session_bytes);
        let material = |id, origin, bytes| KeyMaterial::from_bytes(id, origin, bytes, session_bits, start);
        // the short fiber link gives both ends of a site the same pad ...
        ogs.deposit(material(1, KeyOrigin::Lastmile, pad.clone())?)
            .context("OGS last-mile deposit")?;
        ptf.deposit(material(1, KeyOrigin::Lastmile, pad)?)
            .context("PTF last-mile deposit")?;
        // ... and the satellite leaves the same downlink secret at each OGS
        ogs.deposit(material(2, KeyOrigin::Satellite, satellite_stream.clone())?)
            .context("OGS satellite deposit")?;
        let mut relay = KeyRelay::new();
        let record = relay
            .relay_satellite_key(&mut ogs, &mut ptf, session_bits, start)
            .with_context(|| format!("key relay to PTF-{}", site.label()))?;
        relayed = record.bits;
        ogs_stores.push(ogs);
        ptf_stores.push(ptf);
    }
    let mut it = ptf_stores.into_iter();
    let mut ptf_ma = it.next().expect("two facilities");
    let mut ptf_op = it.next().expect("two facilities");

    let ma_records = timetransfer
        .records
        .get("MA")
        .map(|r| r.as_slice())
        .unwrap_or(&[]);
    let header_lines = vec![
        "CLOCK DATA SUBSET REV 1".to_string(),
        "LAB = MA".to_string(),
        format!("CAMPAIGN START MJD = {}", mjd_day(start)),
    ];
    let mut source = |_tick: u64, now: f64| -> CggttsFile {
        let records = ma_records
            .iter()
            .filter(|r| r.end_unix_s > now - cadence && r.end_unix_s <= now)
            .map(|r| r.record.clone())
            .collect();
        CggttsFile { header_lines: header_lines.clone(), records }
    };

    let sender_before = ptf_ma.withdrawn_bits();
    let receiver_before = ptf_op.withdrawn_bits();
    let run = run_transfer_loop(
        &mut source,
        &mut ptf_ma,
        &mut ptf_op,
        policy,
        cadence,
        campaign_s,
        start,
        "MA2OP_",
    )
    .context("encrypted transfer loop")?;
    let sender_session_bits = ptf_ma.withdrawn_bits() - sender_before;
    let receiver_session_bits = ptf_op.withdrawn_bits() - receiver_before;

    let stores_conserved = ogs_stores.iter().all(|s| s.conservation_holds())
        && ptf_ma.conservation_holds()
        && ptf_op.conservation_holds();
    let ledger = ledger_csv(&[&ogs_stores[0], &ptf_ma, &ogs_stores[1], &ptf_op]);

    Ok(PipelineReport {
        run,
        ledger_csv: ledger,
        relayed_bits: relayed,
        sender_session_bits,
        receiver_session_bits,
        stores_conserved,
    })
}

// --- the whole use case --------------------------------------------------------------

/// Run every stage in order and collect the artifacts.
pub fn run_usecase(scenario: &Scenario) -> Result<UsecaseReport> {
    if scenario.require_both_sites().is_err() {
        bail!("the use case needs stations \"ma\" and \"op\" configured");
    }
    let mut orbit = run_orbit_stage(scenario)?;
    let mut stations = Vec::new();
    for site in SITES {
        let OrbitReport { passes, stats } =
            orbit.remove(site.key()).expect("checked above");
        stations.push(run_station_qkd(scenario, site, passes, stats)?);
    }
    let timetransfer = run_timetransfer_stage(scenario)?;
    let pipeline = run_pipeline_stage(scenario, &timetransfer)?;
    Ok(UsecaseReport {
        scenario_name: scenario.sim.name.clone(),
        seed: scenario.sim.seed,
        deterministic: scenario.sim.deterministic,
        horizon_days: scenario.sim.duration_days,
        step_s: scenario.sim.step_s,
        start_unix_s: scenario.epoch_unix_s(),
        stations,
        extra_passes: orbit,
        timetransfer,
        pipeline,
    })
}

// --- tests ---------------------------------------------------------------
