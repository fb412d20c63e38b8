//! Desk-scale models for a satellite-QKD-secured time-transfer architecture.
//!
//! The crate covers the full chain from orbital geometry to an encrypted
//! clock-data pipeline:
//!
//! * [`orbit`] — two-body LEO propagation, ground-station look angles and
//!   visibility-pass extraction.
//! * [`channel`] — free-space optical channel efficiency
//!   `η = ηa · ηg · ηf · η0` with Hufnagel–Valley turbulence.
//! * [`qkdlink`] — efficient-BB84 one-decoy detection statistics and the
//!   finite-key secret-length bound.
//! * [`keymgmt`] — key-material ledgers, trusted-node relay over one-time-pad
//!   protected last-mile links, and consumption feasibility.
//! * [`timetransfer`] — simulated PTF/GNSS clocks, per-satellite corrected
//!   time differences, all-in-view medians and daily drift fits.
//! * [`pipeline`] — CGGTTS-subset encoding, tail-message checksums and the
//!   AES-256-GCM rekeying transfer loop.
//!
//! Everything is deterministic under a fixed seed: random draws go through
//! seeded ChaCha12 generators and all parallel folds are order-merged.

pub mod channel;
pub mod constants;
pub mod keymgmt;
pub mod orbit;
pub mod pipeline;
pub mod qkdlink;
pub mod timebase;
pub mod timetransfer;

/// Derive a stream-specific seed from the master seed and a purpose tag.
///
/// FNV-1a over the tag bytes folded into the master seed, then finalized with
/// a splitmix64 round so that close seeds map to unrelated streams.  Keeping
/// this in one place guarantees that independently parallelized stages draw
/// from disjoint, reproducible streams.
pub fn subseed(master: u64, tag: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ master;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer
    h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
