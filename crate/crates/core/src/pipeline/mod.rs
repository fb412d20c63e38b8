//! The secured data pipeline: CGGTTS-subset encoding, tail checksum,
//! authenticated encryption, and the periodic transfer loop.
//!
//! Every `cadence` seconds (30 minutes by default) the sending site encodes
//! its latest clock-comparison records, attaches the tail message, seals the
//! result with the current session key and ships it; the receiving site
//! opens the envelope, re-checks the additive checksum and persists the
//! file.  A failed tick — key starvation, a tampered envelope — is logged
//! and skipped; the loop keeps going, tolerating gaps in the record just as
//! a live logging chain must.

pub mod cggtts;
pub mod envelope;

use serde::Serialize;
use thiserror::Error;

pub use cggtts::{
    attach_tail, build_transfer_message, checksum_of, encode_cggtts_subset, parse_cggtts_subset,
    split_tail, verify_message, CggttsFile, CggttsRecord, MessageTail, TransferMessage,
    VerifyReport, MIN_TRACK_S,
};
pub use envelope::{
    decode_envelope, encode_envelope, CipherSession, DecipherSession, Envelope, SessionKeyPolicy,
    ENVELOPE_MAGIC, ENVELOPE_VERSION,
};

use crate::keymgmt::{KeyError, KeyStore};
use crate::timebase::format_utc;

// --- errors ------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("line {line}, column {column}: {what}")]
    Malformed { line: usize, column: usize, what: String },
    #[error("invalid record: {0}")]
    BadRecord(String),
    #[error("payload carries no tail block")]
    MissingTail,
    #[error("invalid tail block: {0}")]
    BadTail(String),
    #[error("invalid envelope: {0}")]
    BadEnvelope(String),
    #[error("session key unavailable: {0}")]
    KeyStarved(#[from] KeyError),
    #[error("authentication failed — envelope rejected")]
    AuthenticationFailed,
    #[error("key epoch {got} does not follow {expected}")]
    EpochMismatch { expected: u32, got: u32 },
    #[error("invalid session policy: {0}")]
    BadPolicy(String),
    #[error("payload is not UTF-8 text")]
    NotUtf8,
}

impl PipelineError {
    /// Short CSV-safe label for the transfer log.
    fn log_label(&self) -> &'static str {
        match self {
            PipelineError::KeyStarved(_) => "error:key_starved",
            PipelineError::AuthenticationFailed => "error:auth_failed",
            PipelineError::EpochMismatch { .. } => "error:epoch_mismatch",
            PipelineError::BadEnvelope(_) => "error:bad_envelope",
            _ => "error:failed",
        }
    }
}

// --- transfer loop ------------------------------------------------------------

/// One row of the transfer log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TickLog {
    pub tick: u64,
    pub sent_at_utc: String,
    /// Envelope size on the wire; 0 when the tick failed before sealing.
    pub bytes: usize,
    /// Sender key epoch after the tick (0 until the first key is drawn).
    pub key_epoch: u32,
    /// `ok`, `mismatch`, or `error:<kind>`.
    pub verify_result: String,
}

/// A file as it arrived at the receiving site.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeliveredFile {
    pub filename: String,
    /// Full payload text, tail included.
    pub text: String,
    pub verify: VerifyReport,
}

/// Sender and receiver session state for one MA→OP style link.
#[derive(Debug)]
pub struct TransferLoop {
    pub encryptor: CipherSession,
    pub decryptor: DecipherSession,
    filename_prefix: String,
    next_seq: u64,
}

impl TransferLoop {
    pub fn new(policy: SessionKeyPolicy, filename_prefix: &str) -> Result<Self, PipelineError> {
        Ok(Self {
            encryptor: CipherSession::new(policy)?,
            decryptor: DecipherSession::new(policy)?,
            filename_prefix: filename_prefix.to_string(),
            next_seq: 0,
        })
    }

    /// Encode → tail → encrypt → deliver → decrypt → verify, with every
    /// failure contained to this tick.
    pub fn tick(
        &mut self,
        tick: u64,
        now_unix_s: f64,
        file: &CggttsFile,
        sender_store: &mut KeyStore,
        receiver_store: &mut KeyStore,
    ) -> (TickLog, Option<DeliveredFile>) {
        let sequence = self.next_seq;
        self.next_seq += 1;
        let filename = format!("{}{:05}.cgt", self.filename_prefix, tick);
        let mut wire_bytes = 0usize;
        let outcome: Result<DeliveredFile, PipelineError> = (|| {
            let text = encode_cggtts_subset(file)?;
            let msg = build_transfer_message(&text, &filename, now_unix_s, sequence)?;
            let wire = self.encryptor.encrypt_message(&msg, sender_store, now_unix_s)?;
            wire_bytes = wire.len();
            let received =
                self.decryptor.decrypt_message(&wire, receiver_store, now_unix_s)?;
            let verify = verify_message(&received.payload)?;
            Ok(DeliveredFile {
                filename: received.filename,
                text: String::from_utf8(received.payload).expect("checked utf-8"),
                verify,
            })
        })();
        let (verify_result, delivered) = match outcome {
            Ok(file) => {
                let label = if file.verify.matches { "ok" } else { "mismatch" };
                (label.to_string(), Some(file))
            }
            Err(e) => (e.log_label().to_string(), None),
        };
        let log = TickLog {
            tick,
            sent_at_utc: format_utc(now_unix_s),
            bytes: wire_bytes,
            key_epoch: self.encryptor.key_epoch().unwrap_or(0),
            verify_result,
        };
        (log, delivered)
    }
}

/// Outcome of a whole simulated session.
#[derive(Debug, Default)]
pub struct TransferRun {
    pub ticks: Vec<TickLog>,
    pub delivered: Vec<DeliveredFile>,
}

impl TransferRun {
    pub fn successes(&self) -> usize {
        self.ticks.iter().filter(|t| t.verify_result == "ok").count()
    }
}

/// Run the periodic loop: ticks fire at `start + k·cadence` for
/// `k = 1 ..= ⌊duration/cadence⌋`, pulling the latest records from
/// `source` each time.
pub fn run_transfer_loop(
    source: &mut dyn FnMut(u64, f64) -> CggttsFile,
    sender_store: &mut KeyStore,
    receiver_store: &mut KeyStore,
    policy: SessionKeyPolicy,
    cadence_s: f64,
    duration_s: f64,
    start_unix_s: f64,
    filename_prefix: &str,
) -> Result<TransferRun, PipelineError> {
    let mut link = TransferLoop::new(policy, filename_prefix)?;
    let mut run = TransferRun::default();
    let n_ticks = (duration_s / cadence_s).floor() as u64;
    for k in 1..=n_ticks {
        let now = start_unix_s + k as f64 * cadence_s;
        let file = source(k, now);
        let (log, delivered) = link.tick(k, now, &file, sender_store, receiver_store);
        run.ticks.push(log);
        run.delivered.extend(delivered);
    }
    Ok(run)
}

/// Render the transfer log as CSV.
pub fn transfer_log_csv(ticks: &[TickLog]) -> String {
    let mut out = String::from("tick,sent_at,bytes,key_epoch,verify_result\n");
    for t in ticks {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            t.tick, t.sent_at_utc, t.bytes, t.key_epoch, t.verify_result
        ));
    }
    out
}

// --- tests ---------------------------------------------------------------
