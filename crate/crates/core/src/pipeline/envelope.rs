//! Authenticated encryption of transfer messages with store-supplied keys.
//!
//! Wire format (all integers big-endian), length-prefixed:
//!
//! ```text
//!   length(4) | magic(4) | version(1) | key_epoch(4) | sequence(8)
//!            | nonce(12) | ciphertext | tag(16)
//! ```
//!
//! where `length` counts everything after itself and the nonce is the
//! key-epoch and sequence concatenated — unique under the single-writer
//! loop, so a (key, nonce) pair never repeats.  The header through the
//! nonce is bound as associated data, so changing the epoch or sequence in
//! flight fails authentication just like flipping a ciphertext bit.
//!
//! Sessions hold a 256-bit AES-GCM key withdrawn from the local key store
//! and refresh it whenever `now − last_refresh ≥ refresh_interval`
//! (2 minutes by default), incrementing the key epoch.  The decrypting
//! side follows the epoch carried by each envelope: one step forward
//! triggers its own 256-bit withdrawal — both stores hold the same key
//! stream, so the keys agree — while a skip or a rewind is refused.

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Key, Nonce};
use serde::Serialize;

use super::cggtts::{split_tail, TransferMessage};
use super::PipelineError;
use crate::keymgmt::{KeyOrigin, KeyStore};

// --- policy ------------------------------------------------------------------

/// Session-key discipline: AES-256-GCM keys, refreshed on a fixed schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SessionKeyPolicy {
    /// Key size in bits; the cipher is AES-256, so this must be 256.
    pub key_bits: u64,
    /// Seconds between key refreshes.
    pub refresh_interval_s: f64,
}

impl Default for SessionKeyPolicy {
    fn default() -> Self {
        Self { key_bits: 256, refresh_interval_s: 120.0 }
    }
}

impl SessionKeyPolicy {
    pub fn validated(self) -> Result<Self, PipelineError> {
        if self.key_bits != 256 {
            return Err(PipelineError::BadPolicy(format!(
                "AES-256 needs 256-bit keys, got {}",
                self.key_bits
            )));
        }
        if !(self.refresh_interval_s > 0.0) {
            return Err(PipelineError::BadPolicy(format!(
                "refresh interval must be positive, got {}",
                self.refresh_interval_s
            )));
        }
        Ok(self)
    }
}

// --- wire format ---------------------------------------------------------------

pub const ENVELOPE_MAGIC: [u8; 4] = *b"QETT";
pub const ENVELOPE_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 8 + 12;
const TAG_LEN: usize = 16;

/// A decoded envelope: identifiers in the clear, payload sealed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub key_epoch: u32,
    pub sequence: u64,
    /// Ciphertext with the 16-byte authentication tag appended.
    pub ciphertext: Vec<u8>,
}

fn header_bytes(key_epoch: u32, sequence: u64) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[0..4].copy_from_slice(&ENVELOPE_MAGIC);
    h[4] = ENVELOPE_VERSION;
    h[5..9].copy_from_slice(&key_epoch.to_be_bytes());
    h[9..17].copy_from_slice(&sequence.to_be_bytes());
    h[17..29].copy_from_slice(&nonce_bytes(key_epoch, sequence));
    h
}

fn nonce_bytes(key_epoch: u32, sequence: u64) -> [u8; 12] {
    let mut n = [0u8; 12];
    n[0..4].copy_from_slice(&key_epoch.to_be_bytes());
    n[4..12].copy_from_slice(&sequence.to_be_bytes());
    n
}

pub fn encode_envelope(env: &Envelope) -> Vec<u8> {
    let header = header_bytes(env.key_epoch, env.sequence);
    let length = (HEADER_LEN + env.ciphertext.len()) as u32;
    let mut out = Vec::with_capacity(4 + length as usize);
    out.extend_from_slice(&length.to_be_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&env.ciphertext);
    out
}

pub fn decode_envelope(bytes: &[u8]) -> Result<Envelope, PipelineError> {
    let bad = |what: &str| Err(PipelineError::BadEnvelope(what.to_string()));
    if bytes.len() < 4 + HEADER_LEN + TAG_LEN {
        return bad("envelope shorter than header plus tag");
    }
    let length = u32::from_be_bytes(bytes[0..4].try_into().unwrap()) as usize;
    if bytes.len() != 4 + length {
        return bad("length prefix disagrees with the byte count");
    }
    if bytes[4..8] != ENVELOPE_MAGIC {
        return bad("unrecognized magic");
    }
    if bytes[8] != ENVELOPE_VERSION {
        return bad("unsupported version");
    }
    let key_epoch = u32::from_be_bytes(bytes[9..13].try_into().unwrap());
    let sequence = u64::from_be_bytes(bytes[13..21].try_into().unwrap());
    if bytes[21..33] != nonce_bytes(key_epoch, sequence) {
        return bad("nonce disagrees with epoch and sequence");
    }
    Ok(Envelope { key_epoch, sequence, ciphertext: bytes[33..].to_vec() })
}

// --- sessions ------------------------------------------------------------------

fn withdraw_key(store: &mut KeyStore, now: f64) -> Result<[u8; 32], PipelineError> {
    let material = store.withdraw(KeyOrigin::Satellite, 256, now)?;
    let mut key = [0u8; 32];
    key.copy_from_slice(&material.bytes);
    Ok(key)
}

/// Sending-side state: current key, its epoch, and the refresh clock.
#[derive(Debug)]
pub struct CipherSession {
    policy: SessionKeyPolicy,
    key: Option<[u8; 32]>,
    key_epoch: u32,
    last_refresh_s: f64,
}

impl CipherSession {
    pub fn new(policy: SessionKeyPolicy) -> Result<Self, PipelineError> {
        Ok(Self { policy: policy.validated()?, key: None, key_epoch: 0, last_refresh_s: 0.0 })
    }

    /// Epoch of the key in use, once one has been withdrawn.
    pub fn key_epoch(&self) -> Option<u32> {
        self.key.map(|_| self.key_epoch)
    }

    fn refresh_due(&self, now: f64) -> bool {
        self.key.is_none() || now - self.last_refresh_s >= self.policy.refresh_interval_s
    }

    fn maybe_refresh(&mut self, store: &mut KeyStore, now: f64) -> Result<(), PipelineError> {
        if !self.refresh_due(now) {
            return Ok(());
        }
        let key = withdraw_key(store, now)?;
        self.key_epoch = if self.key.is_none() { 0 } else { self.key_epoch + 1 };
        self.key = Some(key);
        self.last_refresh_s = now;
        Ok(())
    }

    /// Seal a message, refreshing the session key first if it is due.
    pub fn encrypt_message(
        &mut self,
        msg: &TransferMessage,
        store: &mut KeyStore,
        now: f64,
    ) -> Result<Vec<u8>, PipelineError> {
        self.maybe_refresh(store, now)?;
        let key = self.key.expect("refreshed above");
        let header = header_bytes(self.key_epoch, msg.sequence);
        let cipher = Aes256Gcm::new(Key::<Aes256Gcm>::from_slice(&key));
        let nonce = nonce_bytes(self.key_epoch, msg.sequence);
        let ciphertext = cipher
            .encrypt(
                Nonce::from_slice(&nonce),
                Payload { msg: &msg.payload, aad: &header },
            )
            .map_err(|_| PipelineError::AuthenticationFailed)?;
        Ok(encode_envelope(&Envelope {
            key_epoch: self.key_epoch,
            sequence: msg.sequence,
            ciphertext,
        }))
    }
}

/// Receiving-side state: follows the sender's epoch one step at a time.
/// The policy is validated at construction; only the epoch discipline
/// matters on this side, since refreshes are sender-driven.
#[derive(Debug)]
pub struct DecipherSession {
    key: Option<[u8; 32]>,
    key_epoch: u32,
}

impl DecipherSession {
    pub fn new(policy: SessionKeyPolicy) -> Result<Self, PipelineError> {
        policy.validated()?;
        Ok(Self { key: None, key_epoch: 0 })
    }

    pub fn key_epoch(&self) -> Option<u32> {
        self.key.map(|_| self.key_epoch)
    }

    /// Open an envelope, withdrawing the next key when the sender has
    /// rolled the epoch forward by one.
    pub fn decrypt_message(
        &mut self,
        envelope_bytes: &[u8],
        store: &mut KeyStore,
        now: f64,
    ) -> Result<TransferMessage, PipelineError> {
        let env = decode_envelope(envelope_bytes)?;
        let expected_next = match self.key {
            None => 0,
            Some(_) => self.key_epoch + 1,
        };
        if self.key.is_none() || env.key_epoch == expected_next {
            if env.key_epoch != expected_next {
                return Err(PipelineError::EpochMismatch {
                    expected: expected_next,
                    got: env.key_epoch,
                });
            }
            self.key = Some(withdraw_key(store, now)?);
            self.key_epoch = env.key_epoch;
        } else if env.key_epoch != self.key_epoch {
            return Err(PipelineError::EpochMismatch {
                expected: self.key_epoch,
                got: env.key_epoch,
            });
        }
        let key = self.key.expect("set above");
        let header = header_bytes(env.key_epoch, env.sequence);
        let cipher = Aes256Gcm::new(Key::<Aes256Gcm>::from_slice(&key));
        let nonce = nonce_bytes(env.key_epoch, env.sequence);
        let payload = cipher
            .decrypt(
                Nonce::from_slice(&nonce),
                Payload { msg: &env.ciphertext, aad: &header },
            )
            .map_err(|_| PipelineError::AuthenticationFailed)?;
        let text = std::str::from_utf8(&payload).map_err(|_| PipelineError::NotUtf8)?;
        let (_, tail) = split_tail(text)?;
        let tail = tail.ok_or(PipelineError::MissingTail)?;
        Ok(TransferMessage {
            payload: payload.clone(),
            sent_at_utc: tail.sent_at_utc,
            checksum: tail.checksum,
            filename: tail.filename,
            sequence: env.sequence,
        })
    }
}

// --- tests ---------------------------------------------------------------
