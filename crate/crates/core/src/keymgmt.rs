//! Key stores, the trusted-node one-time-pad relay, and consumption
//! feasibility.
//!
//! Each site runs two stores — one at the optical ground station (OGS) and
//! one at the precise timing facility (PTF).  The satellite deposits
//! identical key streams at the ground stations it serves; a short fiber
//! QKD link supplies each OGS–PTF pair with identical "last-mile" key.  The
//! relay forwards a satellite key from the OGS to the PTF by one-time-pad:
//!
//! ```text
//!   ct = k_sat ⊕ k_pad        (at the OGS)
//!   k_sat = ct ⊕ k_pad        (at the PTF, same pad bits)
//! ```
//!
//! after which the pad bits are destroyed at both ends and the OGS copy of
//! the satellite key is destroyed as well; the PTF store gains satellite-
//! origin key equal to the original.  Deletion is a ledger-state transition
//! (auditable), not secure erasure.
//!
//! Every store enforces conservation — deposited bits always equal
//! available + withdrawn + destroyed — and single use: a key id never
//! leaves a store twice.  Withdrawals are FIFO at bit granularity; a
//! partially consumed deposit is split and the remainder re-queued under a
//! fresh id.  Key material is stored byte-aligned with an explicit bit
//! length (trailing pad bits are zero).

use std::collections::HashSet;
use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

// --- bit-exact material helpers ------------------------------------------------

/// Zero any bits of the last byte beyond `bit_len` (MSB-first convention).
fn mask_tail(bytes: &mut [u8], bit_len: u64) {
    let rem = (bit_len % 8) as u32;
    if rem != 0 {
        if let Some(last) = bytes.last_mut() {
            *last &= 0xffu8 << (8 - rem);
        }
    }
}

/// Append `src_bits` bits of `src` to a bit-aligned buffer.
fn append_bits(dst: &mut Vec<u8>, dst_bits: &mut u64, src: &[u8], src_bits: u64) {
    let shift = (*dst_bits % 8) as u32;
    let src_len = src_bits.div_ceil(8) as usize;
    if shift == 0 {
        dst.extend_from_slice(&src[..src_len]);
    } else {
        for &b in &src[..src_len] {
            *dst.last_mut().unwrap() |= b >> shift;
            dst.push(b << (8 - shift));
        }
    }
    *dst_bits += src_bits;
    dst.truncate((*dst_bits).div_ceil(8) as usize);
    mask_tail(dst, *dst_bits);
}

/// Split a bitstream after its first `k` bits, re-packing the remainder so
/// both halves start on a byte boundary.
fn split_bits(bytes: &[u8], total_bits: u64, k: u64) -> (Vec<u8>, Vec<u8>) {
    debug_assert!(k <= total_bits);
    let mut left = bytes[..k.div_ceil(8) as usize].to_vec();
    mask_tail(&mut left, k);
    let rem_bits = total_bits - k;
    let shift = (k % 8) as u32;
    let start = (k / 8) as usize;
    let mut right = if shift == 0 {
        bytes[start..total_bits.div_ceil(8) as usize].to_vec()
    } else {
        let mut out = Vec::with_capacity(rem_bits.div_ceil(8) as usize);
        for i in 0..rem_bits.div_ceil(8) as usize {
            let hi = bytes[start + i] << shift;
            let lo = bytes.get(start + i + 1).map_or(0, |b| b >> (8 - shift));
            out.push(hi | lo);
        }
        out
    };
    right.truncate(rem_bits.div_ceil(8) as usize);
    mask_tail(&mut right, rem_bits);
    (left, right)
}

// --- types -----------------------------------------------------------------

/// Where key material came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyOrigin {
    /// Distilled on a satellite downlink pass.
    Satellite,
    /// Generated by the short fiber link between an OGS and its PTF.
    Lastmile,
    /// Produced by local post-processing (e.g. an OTP recovery).
    Derived,
}

impl KeyOrigin {
    pub fn as_str(&self) -> &'static str {
        match self {
            KeyOrigin::Satellite => "satellite",
            KeyOrigin::Lastmile => "lastmile",
            KeyOrigin::Derived => "derived",
        }
    }
    fn idx(&self) -> usize {
        match self {
            KeyOrigin::Satellite => 0,
            KeyOrigin::Lastmile => 1,
            KeyOrigin::Derived => 2,
        }
    }
}

/// A contiguous run of secret bits held by one store.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyMaterial {
    pub id: u64,
    pub origin: KeyOrigin,
    /// Exact length; `bytes` holds `ceil(bit_len/8)` bytes, tail zeroed.
    pub bit_len: u64,
    pub bytes: Vec<u8>,
    pub created_at: f64,
}

impl KeyMaterial {
    pub fn from_bytes(
        id: u64,
        origin: KeyOrigin,
        mut bytes: Vec<u8>,
        bit_len: u64,
        created_at: f64,
    ) -> Result<Self, KeyError> {
        if bit_len == 0 || bytes.len() as u64 != bit_len.div_ceil(8) {
            return Err(KeyError::BadMaterial { bit_len, byte_len: bytes.len() });
        }
        mask_tail(&mut bytes, bit_len);
        Ok(Self { id, origin, bit_len, bytes, created_at })
    }

    /// Fresh random material from a seeded generator.
    pub fn random<R: rand::Rng>(
        id: u64,
        origin: KeyOrigin,
        bit_len: u64,
        created_at: f64,
        rng: &mut R,
    ) -> Result<Self, KeyError> {
        let mut bytes = vec![0u8; bit_len.div_ceil(8) as usize];
        rng.fill_bytes(&mut bytes);
        Self::from_bytes(id, origin, bytes, bit_len, created_at)
    }
}

/// What happened to a key id, in store order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LedgerEvent {
    Deposit,
    Withdraw,
    Destroy,
    /// Remainder of a partially consumed deposit re-queued under a new id.
    Split,
}

impl LedgerEvent {
    pub fn as_str(&self) -> &'static str {
        match self {
            LedgerEvent::Deposit => "deposit",
            LedgerEvent::Withdraw => "withdraw",
            LedgerEvent::Destroy => "destroy",
            LedgerEvent::Split => "split",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub node: String,
    pub key_id: u64,
    pub origin: KeyOrigin,
    pub bits: u64,
    pub event: LedgerEvent,
    pub timestamp: f64,
}

/// One node's buffered key material plus its audit trail.
#[derive(Debug, Clone)]
pub struct KeyStore {
    node: String,
    queues: [VecDeque<KeyMaterial>; 3],
    ids_seen: HashSet<u64>,
    next_auto_id: u64,
    deposited_bits: u64,
    withdrawn_bits: u64,
    destroyed_bits: u64,
    ledger: Vec<LedgerEntry>,
}

/// Audit record of one completed OGS → PTF relay.
#[derive(Debug, Clone, Serialize)]
pub struct TransferRecord {
    pub seq: u64,
    pub from_node: String,
    pub to_node: String,
    pub bits: u64,
    /// Id of the recovered satellite key in the destination store.
    pub deposited_id: u64,
    pub timestamp: f64,
}

/// Buffer trajectory under constant supply and demand.
#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub supply_bps: f64,
    pub demand_bpm: f64,
    pub horizon_days: f64,
    pub initial_buffer_bits: f64,
    pub min_buffer_bits: f64,
    pub final_buffer_bits: f64,
    /// Supply rate at which the buffer neither grows nor drains.
    pub breakeven_supply_bps: f64,
    pub feasible: bool,
}

#[derive(Debug, Error)]
pub enum KeyError {
    #[error("store {node}: key id {id} already seen")]
    DuplicateId { node: String, id: u64 },
    #[error(
        "store {node}: {requested} {origin:?} bits requested, {available} available \
         (short {shortfall})"
    )]
    Insufficient {
        node: String,
        origin: KeyOrigin,
        requested: u64,
        available: u64,
        shortfall: u64,
    },
    #[error("one-time-pad operands differ in length: {a_bits} vs {b_bits} bits")]
    LengthMismatch { a_bits: u64, b_bits: u64 },
    #[error("key material of {bit_len} bits cannot occupy {byte_len} bytes")]
    BadMaterial { bit_len: u64, byte_len: usize },
    #[error("zero-length key operation")]
    ZeroLength,
}

// --- store operations ---------------------------------------------------------

impl KeyStore {
    pub fn new(node: &str) -> Self {
        Self {
            node: node.to_string(),
            queues: Default::default(),
            ids_seen: HashSet::new(),
            next_auto_id: 0,
            deposited_bits: 0,
            withdrawn_bits: 0,
            destroyed_bits: 0,
            ledger: Vec::new(),
        }
    }

    pub fn node(&self) -> &str {
        &self.node
    }

    /// Bits currently available with the given origin.
    pub fn available_bits(&self, origin: KeyOrigin) -> u64 {
        self.queues[origin.idx()].iter().map(|k| k.bit_len).sum()
    }

    /// Bits currently available regardless of origin.
    pub fn total_available_bits(&self) -> u64 {
        self.queues.iter().flatten().map(|k| k.bit_len).sum()
    }

    pub fn deposited_bits(&self) -> u64 {
        self.deposited_bits
    }
    pub fn withdrawn_bits(&self) -> u64 {
        self.withdrawn_bits
    }
    pub fn destroyed_bits(&self) -> u64 {
        self.destroyed_bits
    }

    pub fn ledger(&self) -> &[LedgerEntry] {
        &self.ledger
    }

    /// Conservation audit: every deposited bit is still available or was
    /// withdrawn or destroyed.
    pub fn conservation_holds(&self) -> bool {
        self.deposited_bits
            == self.total_available_bits() + self.withdrawn_bits + self.destroyed_bits
    }

    fn log(&mut self, key_id: u64, origin: KeyOrigin, bits: u64, event: LedgerEvent, t: f64) {
        self.ledger.push(LedgerEntry {
            node: self.node.clone(),
            key_id,
            origin,
            bits,
            event,
            timestamp: t,
        });
    }

    pub fn deposit(&mut self, key: KeyMaterial) -> Result<u64, KeyError> {
        if key.bit_len == 0 {
            return Err(KeyError::ZeroLength);
        }
        if !self.ids_seen.insert(key.id) {
            return Err(KeyError::DuplicateId { node: self.node.clone(), id: key.id });
        }
        self.next_auto_id = self.next_auto_id.max(key.id + 1);
        self.deposited_bits += key.bit_len;
        self.log(key.id, key.origin, key.bit_len, LedgerEvent::Deposit, key.created_at);
        let id = key.id;
        self.queues[key.origin.idx()].push_back(key);
        Ok(id)
    }

    /// FIFO removal of exactly `n_bits`, splitting the last deposit if it is
    /// only partially consumed.  The removed pieces leave the store for good
    /// (single use); the split remainder re-enters under a fresh id.
    fn take(
        &mut self,
        origin: KeyOrigin,
        n_bits: u64,
        event: LedgerEvent,
        timestamp: f64,
    ) -> Result<KeyMaterial, KeyError> {
        if n_bits == 0 {
            return Err(KeyError::ZeroLength);
        }
        let available = self.available_bits(origin);
        if available < n_bits {
            return Err(KeyError::Insufficient {
                node: self.node.clone(),
                origin,
                requested: n_bits,
                available,
                shortfall: n_bits - available,
            });
        }
        let mut out = Vec::with_capacity(n_bits.div_ceil(8) as usize);
        let mut out_bits = 0u64;
        let queue = origin.idx();
        while out_bits < n_bits {
            let mut piece = self.queues[queue].pop_front().expect("availability checked");
            let need = n_bits - out_bits;
            if piece.bit_len > need {
                let (taken, rest) = split_bits(&piece.bytes, piece.bit_len, need);
                let rest_id = self.next_auto_id;
                self.next_auto_id += 1;
                self.ids_seen.insert(rest_id);
                let rest_len = piece.bit_len - need;
                self.log(piece.id, origin, need, event, timestamp);
                self.log(rest_id, origin, rest_len, LedgerEvent::Split, timestamp);
                self.queues[queue].push_front(KeyMaterial {
                    id: rest_id,
                    origin,
                    bit_len: rest_len,
                    bytes: rest,
                    created_at: piece.created_at,
                });
                piece.bytes = taken;
                piece.bit_len = need;
            } else {
                self.log(piece.id, origin, piece.bit_len, event, timestamp);
            }
            append_bits(&mut out, &mut out_bits, &piece.bytes, piece.bit_len);
        }
        match event {
            LedgerEvent::Destroy => self.destroyed_bits += n_bits,
            _ => self.withdrawn_bits += n_bits,
        }
        let id = self.next_auto_id;
        self.next_auto_id += 1;
        KeyMaterial::from_bytes(id, origin, out, n_bits, timestamp)
    }

    /// Hand `n_bits` of key to a consumer (an encryptor, a pad).
    pub fn withdraw(
        &mut self,
        origin: KeyOrigin,
        n_bits: u64,
        timestamp: f64,
    ) -> Result<KeyMaterial, KeyError> {
        self.take(origin, n_bits, LedgerEvent::Withdraw, timestamp)
    }

    /// Delete `n_bits` without handing them out (relay cleanup).
    pub fn destroy(
        &mut self,
        origin: KeyOrigin,
        n_bits: u64,
        timestamp: f64,
    ) -> Result<(), KeyError> {
        self.take(origin, n_bits, LedgerEvent::Destroy, timestamp).map(|_| ())
    }
}

// --- one-time pad -------------------------------------------------------------

/// Bitwise exclusive-or of two equal-length keys.
pub fn otp_combine(a: &KeyMaterial, b: &KeyMaterial) -> Result<Vec<u8>, KeyError> {
    if a.bit_len != b.bit_len {
        return Err(KeyError::LengthMismatch { a_bits: a.bit_len, b_bits: b.bit_len });
    }
    Ok(a.bytes.iter().zip(&b.bytes).map(|(x, y)| x ^ y).collect())
}

// --- trusted-node relay ---------------------------------------------------------

/// Issues relays with monotonically increasing sequence numbers.
#[derive(Debug, Default)]
pub struct KeyRelay {
    next_seq: u64,
}

impl KeyRelay {
    pub fn new() -> Self {
        Self::default()
    }

    /// One-time-pad a satellite key from the OGS store to the PTF store.
    ///
    /// All three balances (satellite key at the OGS, pad at both ends) are
    /// checked before anything moves, so an error leaves both stores
    /// untouched.  On success the OGS satellite bits and both pads are
    /// destroyed and the PTF gains satellite-origin key equal to the
    /// original.
    pub fn relay_satellite_key(
        &mut self,
        ogs: &mut KeyStore,
        ptf: &mut KeyStore,
        n_bits: u64,
        timestamp: f64,
    ) -> Result<TransferRecord, KeyError> {
        if n_bits == 0 {
            return Err(KeyError::ZeroLength);
        }
        for (store, origin) in [
            (&*ogs, KeyOrigin::Satellite),
            (&*ogs, KeyOrigin::Lastmile),
            (&*ptf, KeyOrigin::Lastmile),
        ] {
            let available = store.available_bits(origin);
            if available < n_bits {
                return Err(KeyError::Insufficient {
                    node: store.node.clone(),
                    origin,
                    requested: n_bits,
                    available,
                    shortfall: n_bits - available,
                });
            }
        }
        let k_sat = ogs.take(KeyOrigin::Satellite, n_bits, LedgerEvent::Destroy, timestamp)?;
        let pad_ogs = ogs.take(KeyOrigin::Lastmile, n_bits, LedgerEvent::Destroy, timestamp)?;
        let pad_ptf = ptf.take(KeyOrigin::Lastmile, n_bits, LedgerEvent::Destroy, timestamp)?;
        let ciphertext = otp_combine(&k_sat, &pad_ogs)?;
        let ct = KeyMaterial::from_bytes(0, KeyOrigin::Derived, ciphertext, n_bits, timestamp)?;
        let recovered = otp_combine(&ct, &pad_ptf)?;
        let id = ptf.next_auto_id;
        ptf.next_auto_id += 1;
        let key =
            KeyMaterial::from_bytes(id, KeyOrigin::Satellite, recovered, n_bits, timestamp)?;
        let deposited_id = ptf.deposit(key)?;
        let seq = self.next_seq;
        self.next_seq += 1;
        Ok(TransferRecord {
            seq,
            from_node: ogs.node.clone(),
            to_node: ptf.node.clone(),
            bits: n_bits,
            deposited_id,
            timestamp,
        })
    }
}

// --- consumption feasibility ---------------------------------------------------

/// Buffer trajectory under constant key supply (bits/s) and encryptor
/// demand (bits/min) over a horizon.
pub fn consumption_feasibility(
    supply_bps: f64,
    demand_bpm: f64,
    horizon_days: f64,
    initial_buffer_bits: f64,
) -> FeasibilityReport {
    let demand_bps = demand_bpm / 60.0;
    let net_bps = supply_bps - demand_bps;
    let horizon_s = horizon_days * 86_400.0;
    let final_buffer = initial_buffer_bits + net_bps * horizon_s;
    let min_buffer = initial_buffer_bits + net_bps.min(0.0) * horizon_s;
    FeasibilityReport {
        supply_bps,
        demand_bpm,
        horizon_days,
        initial_buffer_bits,
        min_buffer_bits: min_buffer,
        final_buffer_bits: final_buffer,
        breakeven_supply_bps: demand_bps,
        feasible: min_buffer >= 0.0,
    }
}

// --- ledger export ---------------------------------------------------------

/// Merge store ledgers into one CSV, ordered by timestamp (ties keep store
/// order).
pub fn ledger_csv(stores: &[&KeyStore]) -> String {
    let mut rows: Vec<&LedgerEntry> = stores.iter().flat_map(|s| s.ledger.iter()).collect();
    rows.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let mut out = String::from("node,key_id,origin,bits,event,timestamp\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.3}\n",
            r.node,
            r.key_id,
            r.origin.as_str(),
            r.bits,
            r.event.as_str(),
            r.timestamp
        ));
    }
    out
}

// --- tests ---------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn key(id: u64, origin: KeyOrigin, bits: u64, seed: u64) -> KeyMaterial {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        KeyMaterial::random(id, origin, bits, 0.0, &mut rng).unwrap()
    }

    #[test]
    fn deposits_accumulate_and_reject_duplicates() {
        let mut store = KeyStore::new("OGS-MA");
        store.deposit(key(1, KeyOrigin::Satellite, 256, 7)).unwrap();
        assert_eq!(store.available_bits(KeyOrigin::Satellite), 256);
        store.deposit(key(2, KeyOrigin::Satellite, 128, 8)).unwrap();
        store.deposit(key(3, KeyOrigin::Satellite, 128, 9)).unwrap();
        assert_eq!(store.available_bits(KeyOrigin::Satellite), 512);
        let err = store.deposit(key(2, KeyOrigin::Satellite, 64, 10));
        assert!(matches!(err, Err(KeyError::DuplicateId { id: 2, .. })));
        assert_eq!(store.available_bits(KeyOrigin::Satellite), 512, "balance unchanged");
    }

    #[test]
    fn withdraw_is_exact_single_use_and_reports_shortfall() {
        let mut store = KeyStore::new("PTF-MA");
        store.deposit(key(1, KeyOrigin::Satellite, 256, 11)).unwrap();
        let k = store.withdraw(KeyOrigin::Satellite, 256, 1.0).unwrap();
        assert_eq!(k.bit_len, 256);
        assert_eq!(store.available_bits(KeyOrigin::Satellite), 0);
        // the logical key is gone: a second withdrawal starves
        let again = store.withdraw(KeyOrigin::Satellite, 256, 2.0);
        assert!(matches!(
            again,
            Err(KeyError::Insufficient { shortfall: 256, available: 0, .. })
        ));

        store.deposit(key(2, KeyOrigin::Satellite, 100, 12)).unwrap();
        let short = store.withdraw(KeyOrigin::Satellite, 256, 3.0);
        match short {
            Err(KeyError::Insufficient { requested: 256, available: 100, shortfall, .. }) => {
                assert_eq!(shortfall, 156, "error carries the missing bit count")
            }
            other => panic!("expected starvation, got {other:?}"),
        }
        assert!(store.conservation_holds());
    }

    #[test]
    fn fifo_withdraw_splits_deposits_and_preserves_bits() {
        let mut store = KeyStore::new("OGS-OP");
        let a = key(1, KeyOrigin::Lastmile, 40, 20);
        let b = key(2, KeyOrigin::Lastmile, 40, 21);
        store.deposit(a.clone()).unwrap();
        store.deposit(b.clone()).unwrap();
        // 56 bits = all of a + first 16 of b
        let w = store.withdraw(KeyOrigin::Lastmile, 56, 1.0).unwrap();
        assert_eq!(w.bit_len, 56);
        assert_eq!(&w.bytes[..5], &a.bytes[..], "first deposit leads");
        assert_eq!(&w.bytes[5..7], &b.bytes[..2], "second deposit continues in order");
        assert_eq!(store.available_bits(KeyOrigin::Lastmile), 24);
        // the remainder of b comes out next, shifted to a byte boundary
        let rest = store.withdraw(KeyOrigin::Lastmile, 24, 2.0).unwrap();
        assert_eq!(&rest.bytes[..], &b.bytes[2..], "split remainder keeps its bits");
        assert!(store.conservation_holds());
    }

    #[test]
    fn bitstream_split_and_append_are_inverse() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..200 {
            let bits = 1 + (rng.next_u64() % 200);
            let mut bytes = vec![0u8; bits.div_ceil(8) as usize];
            rng.fill_bytes(&mut bytes);
            mask_tail(&mut bytes, bits);
            let k = rng.next_u64() % (bits + 1);
            let (left, right) = split_bits(&bytes, bits, k);
            let mut joined = Vec::new();
            let mut joined_bits = 0;
            if k > 0 {
                append_bits(&mut joined, &mut joined_bits, &left, k);
            }
            if bits - k > 0 {
                append_bits(&mut joined, &mut joined_bits, &right, bits - k);
            }
            assert_eq!(joined_bits, bits);
            assert_eq!(joined, bytes, "split at {k} of {bits} bits must rejoin");
        }
    }

    #[test]
    fn otp_combine_is_xor() {
        let k = key(1, KeyOrigin::Satellite, 256, 30);
        let zero = otp_combine(&k, &k).unwrap();
        assert!(zero.iter().all(|&b| b == 0), "k ⊕ k vanishes");

        // 0b1010 ⊕ 0b0110 = 0b1100 on a 4-bit key
        let a = KeyMaterial::from_bytes(1, KeyOrigin::Lastmile, vec![0b1010_0000], 4, 0.0).unwrap();
        let b = KeyMaterial::from_bytes(2, KeyOrigin::Lastmile, vec![0b0110_0000], 4, 0.0).unwrap();
        assert_eq!(otp_combine(&a, &b).unwrap(), vec![0b1100_0000]);

        let long = key(3, KeyOrigin::Satellite, 512, 31);
        assert!(matches!(
            otp_combine(&k, &long),
            Err(KeyError::LengthMismatch { a_bits: 256, b_bits: 512 })
        ));
    }

    #[test]
    fn otp_recovery_is_an_involution() {
        let mut rng = ChaCha12Rng::seed_from_u64(40);
        for i in 0..500 {
            let bits = 1 + (rng.next_u64() % 512);
            let k_sat = KeyMaterial::random(2 * i, KeyOrigin::Satellite, bits, 0.0, &mut rng)
                .unwrap();
            let pad = KeyMaterial::random(2 * i + 1, KeyOrigin::Lastmile, bits, 0.0, &mut rng)
                .unwrap();
            let ct = otp_combine(&k_sat, &pad).unwrap();
            let ct_key = KeyMaterial::from_bytes(0, KeyOrigin::Derived, ct, bits, 0.0).unwrap();
            let back = otp_combine(&ct_key, &pad).unwrap();
            assert_eq!(back, k_sat.bytes, "(k ⊕ p) ⊕ p must return k for {bits} bits");
        }
    }

    // --- relay ----------------------------------------------------------

    fn relay_fixture(sat_bits: u64, pad_ogs: u64, pad_ptf: u64) -> (KeyStore, KeyStore) {
        let mut ogs = KeyStore::new("OGS-MA");
        let mut ptf = KeyStore::new("PTF-MA");
        if sat_bits > 0 {
            ogs.deposit(key(1, KeyOrigin::Satellite, sat_bits, 50)).unwrap();
        }
        // the fiber link shares identical pad bits with both ends
        if pad_ogs > 0 {
            ogs.deposit(key(2, KeyOrigin::Lastmile, pad_ogs, 51)).unwrap();
        }
        if pad_ptf > 0 {
            ptf.deposit(key(2, KeyOrigin::Lastmile, pad_ptf, 51)).unwrap();
        }
        (ogs, ptf)
    }

    #[test]
    fn relay_forwards_the_satellite_key_intact() {
        let (mut ogs, mut ptf) = relay_fixture(256, 256, 256);
        let original = key(1, KeyOrigin::Satellite, 256, 50);
        let mut relay = KeyRelay::new();
        let rec = relay.relay_satellite_key(&mut ogs, &mut ptf, 256, 10.0).unwrap();
        assert_eq!(rec.bits, 256);
        assert_eq!(rec.seq, 0);
        assert_eq!(ptf.available_bits(KeyOrigin::Satellite), 256);
        assert_eq!(ogs.available_bits(KeyOrigin::Satellite), 0, "OGS copy destroyed");
        assert_eq!(ogs.available_bits(KeyOrigin::Lastmile), 0, "OGS pad destroyed");
        assert_eq!(ptf.available_bits(KeyOrigin::Lastmile), 0, "PTF pad destroyed");
        let recovered = ptf.withdraw(KeyOrigin::Satellite, 256, 11.0).unwrap();
        assert_eq!(recovered.bytes, original.bytes, "OTP round trip is exact");
        assert!(ogs.conservation_holds() && ptf.conservation_holds());
    }

    #[test]
    fn relay_is_atomic_under_starvation() {
        // PTF pad store empty: nothing may move anywhere
        let (mut ogs, mut ptf) = relay_fixture(256, 256, 0);
        let mut relay = KeyRelay::new();
        let err = relay.relay_satellite_key(&mut ogs, &mut ptf, 256, 10.0);
        assert!(matches!(err, Err(KeyError::Insufficient { .. })));
        assert_eq!(ogs.available_bits(KeyOrigin::Satellite), 256, "no partial transfer");
        assert_eq!(ogs.available_bits(KeyOrigin::Lastmile), 256);
        assert_eq!(ptf.total_available_bits(), 0);
        assert!(ogs.ledger().len() == 2 && ptf.ledger().is_empty(), "only the deposits logged");
    }

    #[test]
    fn sequential_relays_consume_pad_on_both_sides() {
        let (mut ogs, mut ptf) = relay_fixture(512, 512, 512);
        let mut relay = KeyRelay::new();
        relay.relay_satellite_key(&mut ogs, &mut ptf, 256, 10.0).unwrap();
        let rec = relay.relay_satellite_key(&mut ogs, &mut ptf, 256, 20.0).unwrap();
        assert_eq!(rec.seq, 1, "sequence numbers increase");
        assert_eq!(ogs.destroyed_bits(), 1024, "512 sat + 512 pad destroyed at the OGS");
        assert_eq!(ptf.destroyed_bits(), 512, "512 pad bits destroyed at the PTF");
        assert_eq!(ptf.available_bits(KeyOrigin::Satellite), 512);
    }

    #[test]
    fn relay_round_trips_all_lengths() {
        for bits in [1u64, 7, 8, 9, 255, 256, 257, 1000, 4096] {
            let mut ogs = KeyStore::new("OGS-OP");
            let mut ptf = KeyStore::new("PTF-OP");
            let original = key(1, KeyOrigin::Satellite, bits, 60 + bits);
            ogs.deposit(original.clone()).unwrap();
            ogs.deposit(key(2, KeyOrigin::Lastmile, bits, 61)).unwrap();
            ptf.deposit(key(2, KeyOrigin::Lastmile, bits, 61)).unwrap();
            KeyRelay::new().relay_satellite_key(&mut ogs, &mut ptf, bits, 0.0).unwrap();
            let got = ptf.withdraw(KeyOrigin::Satellite, bits, 1.0).unwrap();
            assert_eq!(got.bytes, original.bytes, "relay must be exact at {bits} bits");
        }
    }

    // --- feasibility -------------------------------------------------------

    #[test]
    fn feasibility_matches_the_breakeven_arithmetic() {
        let r = consumption_feasibility(54.1, 256.0, 2.0, 0.0);
        assert!(r.feasible, "54.1 bps sustains a 256 bpm consumer");
        assert!((r.breakeven_supply_bps - 256.0 / 60.0).abs() < 1e-12);
        assert!((r.breakeven_supply_bps - 4.2667).abs() < 1e-3);

        assert!(consumption_feasibility(24.17, 256.0, 2.0, 0.0).feasible);

        let starve = consumption_feasibility(2.0, 256.0, 2.0, 0.0);
        assert!(!starve.feasible, "2 bps cannot sustain 4.27 bps demand");
        assert!(starve.min_buffer_bits < 0.0);
        // a large enough initial buffer rides out the same horizon
        let buffered = consumption_feasibility(2.0, 256.0, 2.0, 1e6);
        assert!(buffered.feasible);
    }

    #[test]
    fn ledger_export_has_the_run_history() {
        let mut store = KeyStore::new("PTF-OP");
        store.deposit(key(1, KeyOrigin::Lastmile, 64, 70)).unwrap();
        store.withdraw(KeyOrigin::Lastmile, 40, 5.0).unwrap();
        let csv = ledger_csv(&[&store]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "node,key_id,origin,bits,event,timestamp");
        assert_eq!(lines[1], "PTF-OP,1,lastmile,64,deposit,0.000");
        assert_eq!(lines[2], "PTF-OP,1,lastmile,40,withdraw,5.000");
        assert!(lines[3].contains("split"), "remainder re-queued under a fresh id: {}", lines[3]);
        assert!(store.conservation_holds());
    }
}
