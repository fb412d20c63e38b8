//! Efficient-BB84 one-decoy detection statistics and finite-key secret
//! length.
//!
//! Alice sends pulses of intensity μ1 (probability `p_mu1`) or μ2, choosing
//! the Z basis with probability `p_z_alice`; Bob measures in Z with
//! `p_z_bob`.  For a channel efficiency η and detector efficiency ηdet the
//! per-intensity click rate is
//!
//! ```text
//!   r_k = source_rate · p_k · (1 − e^(−μk·η·ηdet))
//! ```
//!
//! to which dark and background counts add.  The detector dead time τd
//! rescales every rate by `1/(1 + R·τd)` where `R` is the total click rate,
//! so the delivered rate never exceeds `1/τd`.  Sifting keeps the Z/Z and
//! X/X coincidences (`p_z²` and `(1−p_z)²` for matched bases); noise clicks
//! land on a random bit and err with probability ½, signal clicks err with
//! the configured coding error (receiver jitter is absorbed into that single
//! number).
//!
//! Sifted detections accumulate chronologically into fixed-size blocks: a
//! block closes at the first batch that pushes the Z-basis count to the
//! configured size (the overshoot stays in the closing block), mirroring how
//! the post-processing chain consumes whole passes.
//!
//! [`finite_key_length`] evaluates a one-decoy finite-key bound with
//! Hoeffding concentration: with `δ(n) = √(n/2 · ln(19/εsec))`, the
//! intensity-k counts are bracketed by `n±_k = (e^(μk)/p_k)(n_k ± δ(n_Z))`,
//! vacuum and single-photon yields are bounded by
//!
//! ```text
//!   s_Z,0 ≥ τ0 (μ1 n⁻_μ2 − μ2 n⁺_μ1) / (μ1 − μ2)
//!   s_Z,1 ≥ τ1 μ1 (n⁻_μ2 − (μ2²/μ1²) n⁺_μ1 − ((μ1²−μ2²)/μ1²)(s^u_Z,0/τ0)) / (μ2(μ1−μ2))
//! ```
//!
//! with `τn = Σ_k p_k e^(−μk) μk^n / n!` and the vacuum upper bound
//! `s^u_Z,0 = 2 τ0 m⁺_μ2`.  The single-photon phase-error rate is
//! `φ = v^u_X,1 / s^l_X,1`, lifted to the Z basis through the
//! random-sampling correction `γ(εsec, φ, s_Z,1, s_X,1)`, and the secret
//! length is
//!
//! ```text
//!   ℓ = ⌊ s_Z,0 + s_Z,1(1 − h(φ^u)) − λEC − 6·log2(19/εsec) − log2(2/εcorr) ⌋
//! ```
//!
//! with `λEC = n_Z · f_EC · h(QBER_Z)`, clamped to `[0, n_Z]`.

use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

// --- types -----------------------------------------------------------------

/// Protocol-side parameters: intensities, basis bias, post-processing
/// failure budgets and the error-correction inefficiency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Signal intensity μ1 (mean photon number).
    pub mu1: f64,
    /// Decoy intensity μ2 < μ1.
    pub mu2: f64,
    /// Probability of sending μ1.
    pub p_mu1: f64,
    /// Alice's Z-basis probability.
    pub p_z_alice: f64,
    /// Bob's Z-basis probability.
    pub p_z_bob: f64,
    /// Intrinsic signal error probability (optical contrast).
    pub coding_error: f64,
    /// Additional timing-jitter error probability; kept separate so that a
    /// calibrated split can be configured, 0 by default because the coding
    /// error budget already absorbs it.
    pub jitter_error: f64,
    /// Error-correction inefficiency f_EC ≥ 1.
    pub f_ec: f64,
    /// Secrecy failure budget εsec.
    pub eps_sec: f64,
    /// Correctness failure budget εcorr.
    pub eps_corr: f64,
    /// Z-basis sifted bits per finite-key block.
    pub block_bits: f64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            mu1: 0.5,
            mu2: 0.25,
            p_mu1: 0.7,
            p_z_alice: 0.9,
            p_z_bob: 0.9,
            coding_error: 0.005,
            jitter_error: 0.0,
            f_ec: 1.16,
            eps_sec: 1e-10,
            eps_corr: 1e-15,
            block_bits: 1e8,
        }
    }
}

impl ProtocolParams {
    pub fn validated(self) -> Result<Self, QkdError> {
        let ok = self.mu2 > 0.0
            && self.mu1 > self.mu2
            && (0.0..1.0).contains(&self.p_mu1)
            && self.p_mu1 > 0.0
            && (0.0..1.0).contains(&self.p_z_alice)
            && (0.0..1.0).contains(&self.p_z_bob)
            && self.p_z_alice > 0.0
            && self.p_z_bob > 0.0
            && (0.0..0.5).contains(&(self.coding_error + self.jitter_error))
            && self.f_ec >= 1.0
            && (0.0..1.0).contains(&self.eps_sec)
            && self.eps_sec > 0.0
            && (0.0..1.0).contains(&self.eps_corr)
            && self.eps_corr > 0.0
            && self.block_bits > 0.0;
        if ok {
            Ok(self)
        } else {
            Err(QkdError::BadParams(format!("{self:?}")))
        }
    }

    /// Total signal error probability (coding + jitter).
    pub fn signal_error(&self) -> f64 {
        self.coding_error + self.jitter_error
    }
}

/// Receiver-side physical parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Pulse rate of the source, Hz.
    pub source_rate_hz: f64,
    /// Detector efficiency ηdet.
    pub det_eff: f64,
    /// Dark count rate, Hz.
    pub dark_hz: f64,
    /// Sky/background count rate, Hz (0 for night operation).
    pub background_hz: f64,
    /// Detector dead time, ns.
    pub dead_time_ns: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            source_rate_hz: 5e8,
            det_eff: 0.9,
            dark_hz: 100.0,
            background_hz: 0.0,
            dead_time_ns: 10.0,
        }
    }
}

/// Per-intensity sifted detection and error counts (expectations or sampled
/// integers, both carried as `f64`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SiftedCounts {
    pub n_z_mu1: f64,
    pub n_z_mu2: f64,
    pub m_z_mu1: f64,
    pub m_z_mu2: f64,
    pub n_x_mu1: f64,
    pub n_x_mu2: f64,
    pub m_x_mu1: f64,
    pub m_x_mu2: f64,
}

impl SiftedCounts {
    pub fn n_z(&self) -> f64 {
        self.n_z_mu1 + self.n_z_mu2
    }
    pub fn m_z(&self) -> f64 {
        self.m_z_mu1 + self.m_z_mu2
    }
    pub fn n_x(&self) -> f64 {
        self.n_x_mu1 + self.n_x_mu2
    }
    pub fn m_x(&self) -> f64 {
        self.m_x_mu1 + self.m_x_mu2
    }

    pub fn add(&mut self, other: &SiftedCounts) {
        self.n_z_mu1 += other.n_z_mu1;
        self.n_z_mu2 += other.n_z_mu2;
        self.m_z_mu1 += other.m_z_mu1;
        self.m_z_mu2 += other.m_z_mu2;
        self.n_x_mu1 += other.n_x_mu1;
        self.n_x_mu2 += other.n_x_mu2;
        self.m_x_mu1 += other.m_x_mu1;
        self.m_x_mu2 += other.m_x_mu2;
    }
}

/// Detection statistics for one channel sample interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionBatch {
    pub t_unix_s: f64,
    pub duration_s: f64,
    /// Channel efficiency (before detector efficiency) this batch saw.
    pub mean_eta: f64,
    /// Post-dead-time click total across bases and intensities, before
    /// sifting.
    pub detections: f64,
    pub counts: SiftedCounts,
}

/// How detection counts are produced.
pub enum DetectionMode<'a> {
    /// Exact expectations — the deterministic default.
    Expectation,
    /// Poisson-sampled click totals with binomially sampled errors.
    Poisson(&'a mut rand_chacha::ChaCha12Rng),
}

/// QBER of one batch or block per basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BasisQber {
    pub qber_z: f64,
    pub qber_x: f64,
}

/// A closed accumulation block ready for finite-key analysis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyBlock {
    pub id: u64,
    pub counts: SiftedCounts,
    /// Identifier of the first pass contributing detections.
    pub first_pass: u64,
    /// Identifier of the last pass contributing detections.
    pub last_pass: u64,
    /// Secret length, filled by [`finite_key_length`].
    pub secret_bits: Option<u64>,
}

/// Headline rates for one station over a simulated horizon.
#[derive(Debug, Clone, Serialize)]
pub struct SkrReport {
    pub station: String,
    pub horizon_s: f64,
    pub blocks_closed: usize,
    pub total_secret_bits: u64,
    pub total_sifted_z_bits: f64,
    pub mean_skr_bps: f64,
    /// Which reading of the θ_Rx/α_Rx parameters produced the rates.
    pub eta_f_interpretation: String,
    /// Which atmospheric transmittance model produced the rates.
    pub atmosphere_model: String,
}

#[derive(Debug, Error)]
pub enum QkdError {
    #[error("invalid protocol parameters: {0}")]
    BadParams(String),
    #[error("no sifted detections in the {basis} basis")]
    NoData { basis: &'static str },
    #[error("overcast probability {0} outside [0, 1]")]
    BadWeather(f64),
}

// --- detection statistics ------------------------------------------------------

/// Detection statistics over `duration_s` at channel efficiency `eta`.
pub fn detection_statistics(
    eta: f64,
    t_unix_s: f64,
    duration_s: f64,
    protocol: &ProtocolParams,
    detector: &DetectorParams,
    mode: DetectionMode<'_>,
) -> DetectionBatch {
    let eta_tot = eta * detector.det_eff;
    let p1 = protocol.p_mu1;
    let r1 = detector.source_rate_hz * p1 * (1.0 - (-protocol.mu1 * eta_tot).exp());
    let r2 = detector.source_rate_hz * (1.0 - p1) * (1.0 - (-protocol.mu2 * eta_tot).exp());
    let noise = detector.dark_hz + detector.background_hz;
    let total = r1 + r2 + noise;
    let dead = 1.0 / (1.0 + total * detector.dead_time_ns * 1e-9);
    let q_z = protocol.p_z_alice * protocol.p_z_bob;
    let q_x = (1.0 - protocol.p_z_alice) * (1.0 - protocol.p_z_bob);
    let err = protocol.signal_error();

    // per-basis, per-intensity sifted expectations: noise clicks follow the
    // intensity mix (they occur regardless of what Alice sent) and err half
    // the time
    let cell = |signal: f64, p_int: f64, q: f64| -> (f64, f64) {
        let n = (signal + noise * p_int) * dead * q * duration_s;
        let m = (signal * err + noise * p_int * 0.5) * dead * q * duration_s;
        (n, m)
    };
    let (nz1, mz1) = cell(r1, p1, q_z);
    let (nz2, mz2) = cell(r2, 1.0 - p1, q_z);
    let (nx1, mx1) = cell(r1, p1, q_x);
    let (nx2, mx2) = cell(r2, 1.0 - p1, q_x);

    let mut counts = SiftedCounts {
        n_z_mu1: nz1,
        n_z_mu2: nz2,
        m_z_mu1: mz1,
        m_z_mu2: mz2,
        n_x_mu1: nx1,
        n_x_mu2: nx2,
        m_x_mu1: mx1,
        m_x_mu2: mx2,
    };

    if let DetectionMode::Poisson(rng) = mode {
        // draw the click totals, then the errors among them, so that m ≤ n
        // holds sample by sample
        let mut draw = |n_mean: f64, m_mean: f64| -> (f64, f64) {
            if n_mean <= 0.0 {
                return (0.0, 0.0);
            }
            let n = Poisson::new(n_mean).map(|d| d.sample(rng)).unwrap_or(0.0);
            let n_int = n.round().max(0.0);
            if n_int == 0.0 {
                return (0.0, 0.0);
            }
            let p_err = (m_mean / n_mean).clamp(0.0, 1.0);
            let m = Binomial::new(n_int as u64, p_err)
                .map(|d| d.sample(rng) as f64)
                .unwrap_or(0.0);
            (n_int, m)
        };
        let (nz1, mz1) = draw(counts.n_z_mu1, counts.m_z_mu1);
        let (nz2, mz2) = draw(counts.n_z_mu2, counts.m_z_mu2);
        let (nx1, mx1) = draw(counts.n_x_mu1, counts.m_x_mu1);
        let (nx2, mx2) = draw(counts.n_x_mu2, counts.m_x_mu2);
        counts = SiftedCounts {
            n_z_mu1: nz1,
            n_z_mu2: nz2,
            m_z_mu1: mz1,
            m_z_mu2: mz2,
            n_x_mu1: nx1,
            n_x_mu2: nx2,
            m_x_mu1: mx1,
            m_x_mu2: mx2,
        };
    }

    DetectionBatch {
        t_unix_s,
        duration_s,
        mean_eta: eta,
        detections: total * dead * duration_s,
        counts,
    }
}

/// Per-basis QBER of a batch or block; zero sifted counts in a basis are
/// reported as a distinguished "no data" error rather than a silent zero.
pub fn qber_of_batch(counts: &SiftedCounts) -> Result<BasisQber, QkdError> {
    if counts.n_z() <= 0.0 {
        return Err(QkdError::NoData { basis: "Z" });
    }
    if counts.n_x() <= 0.0 {
        return Err(QkdError::NoData { basis: "X" });
    }
    Ok(BasisQber {
        qber_z: counts.m_z() / counts.n_z(),
        qber_x: counts.m_x() / counts.n_x(),
    })
}

// --- block accumulation ----------------------------------------------------------

/// Chronological accumulation of sifted counts into fixed-size blocks.
///
/// A block closes at the first pushed batch that lifts the Z-basis sifted
/// count to `block_bits`; the overshoot stays in the closing block, so block
/// sizes are `≥ block_bits` at batch granularity.  A trailing partial block
/// is never finalized.
#[derive(Debug, Clone)]
pub struct BlockAccumulator {
    block_bits: f64,
    next_id: u64,
    acc: SiftedCounts,
    first_pass: Option<u64>,
    last_pass: u64,
    pub blocks: Vec<KeyBlock>,
}

impl BlockAccumulator {
    pub fn new(block_bits: f64) -> Self {
        Self {
            block_bits,
            next_id: 0,
            acc: SiftedCounts::default(),
            first_pass: None,
            last_pass: 0,
            blocks: Vec::new(),
        }
    }

    pub fn push(&mut self, counts: &SiftedCounts, pass_id: u64) {
        self.acc.add(counts);
        self.first_pass.get_or_insert(pass_id);
        self.last_pass = pass_id;
        if self.acc.n_z() >= self.block_bits {
            let block = KeyBlock {
                id: self.next_id,
                counts: self.acc,
                first_pass: self.first_pass.take().unwrap(),
                last_pass: self.last_pass,
                secret_bits: None,
            };
            self.next_id += 1;
            self.blocks.push(block);
            self.acc = SiftedCounts::default();
        }
    }

    /// Counts accumulated since the last closed block.
    pub fn partial(&self) -> &SiftedCounts {
        &self.acc
    }
}

/// Accumulate `(counts, pass_id)` batches into blocks; returns the closed
/// blocks and the unfinalized trailing counts.
pub fn accumulate_blocks(
    batches: impl IntoIterator<Item = (SiftedCounts, u64)>,
    block_bits: f64,
) -> (Vec<KeyBlock>, SiftedCounts) {
    let mut acc = BlockAccumulator::new(block_bits);
    for (counts, pass_id) in batches {
        acc.push(&counts, pass_id);
    }
    let partial = *acc.partial();
    (acc.blocks, partial)
}

// --- finite-key bound -----------------------------------------------------------

/// Binary entropy, 0 at the endpoints.
pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// One-decoy finite-key secret length for a closed block (see module docs
/// for the bound).  Returns 0 whenever any intermediate bound collapses.
pub fn finite_key_length(counts: &SiftedCounts, p: &ProtocolParams) -> u64 {
    let (mu1, mu2, pmu1) = (p.mu1, p.mu2, p.p_mu1);
    let (nz, mz, nx, mx) = (counts.n_z(), counts.m_z(), counts.n_x(), counts.m_x());
    if nz <= 0.0 || nx <= 0.0 {
        return 0;
    }
    let log19 = (19.0 / p.eps_sec).ln();
    let delta = |n: f64| (n / 2.0 * log19).sqrt();
    let (dn_z, dm_z) = (delta(nz), delta(mz));
    let (dn_x, dm_x) = (delta(nx), delta(mx));
    let e1 = mu1.exp() / pmu1;
    let e2 = mu2.exp() / (1.0 - pmu1);
    let tau0 = pmu1 * (-mu1).exp() + (1.0 - pmu1) * (-mu2).exp();
    let tau1 = pmu1 * (-mu1).exp() * mu1 + (1.0 - pmu1) * (-mu2).exp() * mu2;

    // Hoeffding-bracketed per-intensity counts (lower brackets clamped ≥ 0)
    let nz1_hi = e1 * (counts.n_z_mu1 + dn_z);
    let nz2_lo = e2 * (counts.n_z_mu2 - dn_z).max(0.0);
    let nx1_hi = e1 * (counts.n_x_mu1 + dn_x);
    let nx2_lo = e2 * (counts.n_x_mu2 - dn_x).max(0.0);
    let mz2_hi = e2 * (counts.m_z_mu2 + dm_z);
    let mx1_hi = e1 * (counts.m_x_mu1 + dm_x);
    let mx2_lo = e2 * (counts.m_x_mu2 - dm_x).max(0.0);
    let mx2_hi = e2 * (counts.m_x_mu2 + dm_x);

    // vacuum bounds
    let sz0 = (tau0 * (mu1 * nz2_lo - mu2 * nz1_hi) / (mu1 - mu2)).max(0.0);
    let sz0_hi = 2.0 * tau0 * mz2_hi;
    let sx0_hi = 2.0 * tau0 * mx2_hi;

    // single-photon lower bounds
    let single = |n2_lo: f64, n1_hi: f64, s0_hi: f64| -> f64 {
        (tau1 * mu1 / (mu2 * (mu1 - mu2))
            * (n2_lo - mu2 * mu2 / (mu1 * mu1) * n1_hi
                - (mu1 * mu1 - mu2 * mu2) / (mu1 * mu1) * s0_hi / tau0))
            .max(0.0)
    };
    let sz1 = single(nz2_lo, nz1_hi, sz0_hi);
    let sx1 = single(nx2_lo, nx1_hi, sx0_hi);
    if sz1 <= 0.0 || sx1 <= 0.0 {
        return 0;
    }

    // single-photon phase errors, lifted from X to Z by random sampling
    let vx1 = tau1 * (mx1_hi - mx2_lo) / (mu1 - mu2);
    let phi = (vx1 / sx1).max(0.0);
    if phi >= 0.5 {
        return 0;
    }
    let gamma = if phi == 0.0 {
        0.0 // b·log(1/b) → 0: no observed X errors leave no sampling penalty
    } else {
        let (a, b, c, d) = (p.eps_sec, phi, sz1, sx1);
        ((c + d) * (1.0 - b) * b / (c * d * std::f64::consts::LN_2)
            * ((c + d) / (c * d * (1.0 - b) * b * a * a)).log2())
        .sqrt()
    };
    let phi_u = (phi + gamma).min(0.5);

    let lambda_ec = nz * p.f_ec * binary_entropy(mz / nz);
    let l = sz0 + sz1 * (1.0 - binary_entropy(phi_u))
        - lambda_ec
        - 6.0 * (19.0 / p.eps_sec).log2()
        - (2.0 / p.eps_corr).log2();
    l.floor().clamp(0.0, nz.floor()) as u64
}

// --- headline rates ------------------------------------------------------------

/// Aggregate closed blocks into the station's headline key rates.
pub fn annual_skr(
    station: &str,
    blocks: &[KeyBlock],
    horizon_s: f64,
    eta_f_interpretation: &str,
    atmosphere_model: &str,
) -> SkrReport {
    let total_secret: u64 = blocks.iter().filter_map(|b| b.secret_bits).sum();
    let sifted: f64 = blocks.iter().map(|b| b.counts.n_z()).sum();
    SkrReport {
        station: station.to_string(),
        horizon_s,
        blocks_closed: blocks.len(),
        total_secret_bits: total_secret,
        total_sifted_z_bits: sifted,
        mean_skr_bps: if horizon_s > 0.0 { total_secret as f64 / horizon_s } else { 0.0 },
        eta_f_interpretation: eta_f_interpretation.to_string(),
        atmosphere_model: atmosphere_model.to_string(),
    }
}

/// Derate an average key rate by the probability that overcast weather
/// precludes the optical link.
pub fn apply_weather(skr_bps: f64, p_overcast: f64) -> Result<f64, QkdError> {
    if !(0.0..=1.0).contains(&p_overcast) {
        return Err(QkdError::BadWeather(p_overcast));
    }
    Ok(skr_bps * (1.0 - p_overcast))
}

// --- tests ---------------------------------------------------------------
