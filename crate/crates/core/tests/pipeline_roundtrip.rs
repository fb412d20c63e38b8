//! Round-trip and corruption sweeps for the file codec and the envelope.
//!
//! The codec promises `parse(encode(f)) == f` for every valid file and
//! `split_tail(attach_tail(b, t)) == (b, t)` for every body/tail pair; the
//! envelope promises that not a single flipped bit anywhere — length, header,
//! ciphertext or tag — survives decryption.  Random structure generation and
//! an exhaustive bit-flip sweep check all three.

use proptest::prelude::*;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use qstt_core::keymgmt::{KeyMaterial, KeyOrigin, KeyStore};
use qstt_core::pipeline::{
    attach_tail, build_transfer_message, encode_cggtts_subset, parse_cggtts_subset, split_tail,
    CggttsFile, CggttsRecord, CipherSession, DecipherSession, MessageTail, SessionKeyPolicy,
};

// --- strategies ----------------------------------------------------------------

fn record_strategy() -> impl Strategy<Value = CggttsRecord> {
    (
        proptest::string::string_regex("[A-Z][A-Z0-9]{0,2}").unwrap(),
        0u32..=99_999,
        0u32..86_400,
        780u32..=99_999,
        -99_999_999_999i64..=999_999_999_999,
        -99_999_999_999i64..=999_999_999_999,
        0i32..=900,
    )
        .prop_map(|(sat_id, mjd, start_time_s, track_length_s, refsv, refsys, elv)| {
            CggttsRecord {
                sat_id,
                mjd,
                start_time_s,
                track_length_s,
                refsv_0p1ns: refsv,
                refsys_0p1ns: refsys,
                elevation_0p1deg: elv,
            }
        })
}

/// Free-form header lines: anything that cannot be mistaken for the column
/// caption or a tail field.
fn header_strategy() -> impl Strategy<Value = Vec<String>> {
    proptest::collection::vec(
        proptest::string::string_regex("[A-Z0-9][A-Z0-9 .:+-]{0,40}")
            .unwrap()
            .prop_filter("not the caption", |s| !s.starts_with("SAT")),
        0..6,
    )
}

fn file_strategy() -> impl Strategy<Value = CggttsFile> {
    (header_strategy(), proptest::collection::vec(record_strategy(), 0..40))
        .prop_map(|(header_lines, records)| CggttsFile { header_lines, records })
}

// --- codec round trips -----------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn encode_then_parse_is_the_identity(file in file_strategy()) {
        let text = encode_cggtts_subset(&file).expect("strategy emits valid records");
        let back = parse_cggtts_subset(&text).expect("own output must parse");
        prop_assert_eq!(&back, &file);

        // fixed-width contract: every record line is exactly 53 columns
        let record_lines = text.lines().skip(file.header_lines.len() + 1);
        for line in record_lines {
            prop_assert_eq!(line.len(), 53, "line {:?} breaks the fixed layout", line);
        }
    }

    #[test]
    fn tail_attachment_splits_back_apart(
        file in file_strategy(),
        sent in proptest::string::string_regex("[0-9]{4}-[0-9]{2}-[0-9]{2}T[0-9:]{8}Z").unwrap(),
        checksum in proptest::num::i64::ANY,
        filename in proptest::string::string_regex("[A-Za-z0-9_.-]{1,24}").unwrap(),
    ) {
        let body = encode_cggtts_subset(&file).unwrap();
        prop_assert_eq!(split_tail(&body).unwrap(), (body.as_str(), None));

        let tail = MessageTail { sent_at_utc: sent, checksum, filename };
        let message = attach_tail(&body, &tail);
        let (split_body, split_tail_parsed) = split_tail(&message).unwrap();
        prop_assert_eq!(split_body, body.as_str());
        prop_assert_eq!(split_tail_parsed, Some(tail.clone()));

        // and attaching again reproduces the message byte-for-byte
        prop_assert_eq!(attach_tail(split_body, &tail), message);
    }
}

// --- envelope corruption sweep ----------------------------------------------------

fn sample_file() -> CggttsFile {
    CggttsFile {
        header_lines: vec!["GGTTS-STYLE CLOCK COMPARISON".into(), "LAB: PTF OP".into()],
        records: (0..5)
            .map(|i| CggttsRecord {
                sat_id: format!("E{:02}", i + 1),
                mjd: 59_892,
                start_time_s: 600 * i,
                track_length_s: 780,
                refsv_0p1ns: 1_234_567 + i as i64 * 1_000,
                refsys_0p1ns: -7_654 + i as i64,
                elevation_0p1deg: 450,
            })
            .collect(),
    }
}

fn fresh_store(key_bytes: &[u8]) -> KeyStore {
    let mut store = KeyStore::new("sweep");
    store
        .deposit(
            KeyMaterial::from_bytes(
                1,
                KeyOrigin::Satellite,
                key_bytes.to_vec(),
                8 * key_bytes.len() as u64,
                0.0,
            )
            .unwrap(),
        )
        .unwrap();
    store
}

/// Flip every single bit of a real envelope, one at a time: every flip must
/// be rejected, and the pristine envelope must still open afterwards.
#[test]
fn every_single_bit_flip_is_rejected() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xfeed);
    let mut key_bytes = vec![0u8; 32];
    rng.fill_bytes(&mut key_bytes);

    let policy = SessionKeyPolicy::default();
    let text = encode_cggtts_subset(&sample_file()).unwrap();
    let message = build_transfer_message(&text, "OPMA59892.cgt", 1_667_952_000.0, 1).unwrap();

    let mut sender_store = fresh_store(&key_bytes);
    let mut sender = CipherSession::new(policy.clone()).unwrap();
    let envelope = sender.encrypt_message(&message, &mut sender_store, 0.0).unwrap();

    let total_bits = envelope.len() * 8;
    assert!(total_bits >= 1_000, "sweep too small to mean anything: {total_bits} bits");

    let mut rejected = 0usize;
    for byte in 0..envelope.len() {
        for bit in 0..8 {
            let mut mangled = envelope.clone();
            mangled[byte] ^= 1 << bit;
            let mut store = fresh_store(&key_bytes);
            let mut receiver = DecipherSession::new(policy.clone()).unwrap();
            match receiver.decrypt_message(&mangled, &mut store, 0.0) {
                Err(_) => rejected += 1,
                Ok(m) => panic!(
                    "flip of bit {bit} in byte {byte} was accepted (payload {} bytes)",
                    m.payload.len()
                ),
            }
        }
    }
    assert_eq!(rejected, total_bits, "every flip must be rejected");

    // the pristine envelope still opens and carries the exact payload
    let mut store = fresh_store(&key_bytes);
    let mut receiver = DecipherSession::new(policy).unwrap();
    let opened = receiver.decrypt_message(&envelope, &mut store, 0.0).unwrap();
    assert_eq!(opened.payload, message.payload);
    assert_eq!(opened.sequence, 1);
}

/// Every strict prefix of the envelope is malformed.
#[test]
fn truncated_envelopes_never_open() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xfeed + 1);
    let mut key_bytes = vec![0u8; 32];
    rng.fill_bytes(&mut key_bytes);

    let policy = SessionKeyPolicy::default();
    let text = encode_cggtts_subset(&sample_file()).unwrap();
    let message = build_transfer_message(&text, "OPMA59892.cgt", 1_667_952_000.0, 7).unwrap();
    let mut sender_store = fresh_store(&key_bytes);
    let mut sender = CipherSession::new(policy.clone()).unwrap();
    let envelope = sender.encrypt_message(&message, &mut sender_store, 0.0).unwrap();

    for cut in 0..envelope.len() {
        let mut store = fresh_store(&key_bytes);
        let mut receiver = DecipherSession::new(policy.clone()).unwrap();
        assert!(
            receiver.decrypt_message(&envelope[..cut], &mut store, 0.0).is_err(),
            "prefix of {cut} bytes must not decode"
        );
    }
}
