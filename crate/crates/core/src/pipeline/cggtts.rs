//! CGGTTS-subset file codec, tail message and additive checksum.
//!
//! Clock comparisons travel as a line-oriented ASCII file: a free-form
//! header block (preserved verbatim by the parser), one column-caption
//! line, then fixed-width records.  The column layout, also documented in
//! the project README:
//!
//! ```text
//!   columns  width  field
//!   0..3       3    SAT     satellite id, left-aligned
//!   4..9       5    MJD     modified Julian day number
//!   10..16     6    STTIME  track start, seconds of day
//!   17..22     5    TRKL    track length, s (≥ 780: a full 13-min track)
//!   23..35    12    REFSV   clock minus satellite clock, 0.1 ns units
//!   36..48    12    REFSYS  clock minus system time, 0.1 ns units
//!   49..53     4    ELV     elevation, 0.1 degree units
//! ```
//!
//! Integer units are part of the contract: encode→parse is bit-exact.
//!
//! A transfer attaches a three-line tail after one blank line —
//! `SENT=<ISO8601>`, `CHECKSUM=<decimal>`, `FILE=<name>` — where the
//! checksum is the wrapping 64-bit sum of the REFSV fields of all records.
//! The filename is a separate tail field, not checksum input.  The additive
//! checksum is kept as the quick transmission-consistency check it is;
//! compensating edits cancel in it, and real integrity comes from the
//! authenticated envelope.

use serde::Serialize;

use super::PipelineError;

// --- record ------------------------------------------------------------------

/// One satellite track in integer units (0.1 ns, 0.1 deg).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CggttsRecord {
    /// Satellite id, 1–3 visible characters.
    pub sat_id: String,
    pub mjd: u32,
    /// Track start, seconds of day.
    pub start_time_s: u32,
    /// Track length, seconds.
    pub track_length_s: u32,
    /// Clock vs satellite clock, 0.1 ns units.
    pub refsv_0p1ns: i64,
    /// Clock vs GNSS system time, 0.1 ns units.
    pub refsys_0p1ns: i64,
    /// Elevation, 0.1 degree units.
    pub elevation_0p1deg: i32,
}

/// Shortest track the standard accepts: 13 minutes.
pub const MIN_TRACK_S: u32 = 780;

const CAPTION: &str = "SAT   MJD STTIME  TRKL        REFSV       REFSYS  ELV";
const LINE_LEN: usize = 53;

impl CggttsRecord {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |what: String| Err(PipelineError::BadRecord(what));
        if self.sat_id.is_empty() || self.sat_id.len() > 3 || self.sat_id.contains(' ') {
            return bad(format!("sat_id {:?} must be 1-3 characters without spaces", self.sat_id));
        }
        if self.mjd > 99_999 {
            return bad(format!("mjd {} exceeds 5 digits", self.mjd));
        }
        if self.start_time_s >= 86_400 {
            return bad(format!("start_time {} outside a day", self.start_time_s));
        }
        if self.track_length_s < MIN_TRACK_S {
            return bad(format!(
                "track length {} s below the {MIN_TRACK_S} s minimum",
                self.track_length_s
            ));
        }
        if self.track_length_s > 99_999 {
            return bad(format!("track length {} exceeds 5 digits", self.track_length_s));
        }
        for (name, v) in [("refsv", self.refsv_0p1ns), ("refsys", self.refsys_0p1ns)] {
            if !(-99_999_999_999..=999_999_999_999).contains(&v) {
                return bad(format!("{name} {v} does not fit a 12-character field"));
            }
        }
        if !(0..=900).contains(&self.elevation_0p1deg) {
            return bad(format!("elevation {} outside [0°, 90°]", self.elevation_0p1deg));
        }
        Ok(())
    }

    fn encode_line(&self) -> String {
        format!(
            "{:<3} {:>5} {:>6} {:>5} {:>12} {:>12} {:>4}",
            self.sat_id,
            self.mjd,
            self.start_time_s,
            self.track_length_s,
            self.refsv_0p1ns,
            self.refsys_0p1ns,
            self.elevation_0p1deg
        )
    }
}

/// A header block plus records; the header lines are carried verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct CggttsFile {
    pub header_lines: Vec<String>,
    pub records: Vec<CggttsRecord>,
}

// --- encode / parse ----------------------------------------------------------

/// Render a file: header lines, the column caption, then one fixed-width
/// line per record.
pub fn encode_cggtts_subset(file: &CggttsFile) -> Result<String, PipelineError> {
    let mut out = String::new();
    for line in &file.header_lines {
        out.push_str(line);
        out.push('\n');
    }
    out.push_str(CAPTION);
    out.push('\n');
    for record in &file.records {
        record.validate()?;
        out.push_str(&record.encode_line());
        out.push('\n');
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(
    line: &str,
    lineno: usize,
    range: std::ops::Range<usize>,
    what: &str,
) -> Result<T, PipelineError> {
    let column = range.start + 1;
    line.get(range)
        .map(str::trim)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| PipelineError::Malformed {
            line: lineno,
            column,
            what: format!("unreadable {what} field"),
        })
}

fn parse_record(line: &str, lineno: usize) -> Result<CggttsRecord, PipelineError> {
    if line.len() != LINE_LEN {
        return Err(PipelineError::Malformed {
            line: lineno,
            column: line.len().min(LINE_LEN) + 1,
            what: format!("record line is {} characters, expected {LINE_LEN}", line.len()),
        });
    }
    let record = CggttsRecord {
        sat_id: line[0..3].trim().to_string(),
        mjd: field(line, lineno, 4..9, "MJD")?,
        start_time_s: field(line, lineno, 10..16, "STTIME")?,
        track_length_s: field(line, lineno, 17..22, "TRKL")?,
        refsv_0p1ns: field(line, lineno, 23..35, "REFSV")?,
        refsys_0p1ns: field(line, lineno, 36..48, "REFSYS")?,
        elevation_0p1deg: field(line, lineno, 49..53, "ELV")?,
    };
    record.validate().map_err(|e| PipelineError::Malformed {
        line: lineno,
        column: 1,
        what: e.to_string(),
    })?;
    Ok(record)
}

/// Parse a file back into header lines and records.  A trailing tail block
/// (blank line + `SENT=`/`CHECKSUM=`/`FILE=`) is tolerated and ignored;
/// use [`split_tail`] to read it.
pub fn parse_cggtts_subset(text: &str) -> Result<CggttsFile, PipelineError> {
    let (body, _tail) = split_tail(text)?;
    let mut header_lines = Vec::new();
    let mut records = Vec::new();
    let mut seen_caption = false;
    for (i, line) in body.lines().enumerate() {
        let lineno = i + 1;
        if !seen_caption {
            if line == CAPTION {
                seen_caption = true;
            } else {
                header_lines.push(line.to_string());
            }
            continue;
        }
        if line.is_empty() {
            return Err(PipelineError::Malformed {
                line: lineno,
                column: 1,
                what: "blank line inside the record block".into(),
            });
        }
        records.push(parse_record(line, lineno)?);
    }
    if !seen_caption {
        return Err(PipelineError::Malformed {
            line: body.lines().count(),
            column: 1,
            what: "column caption line missing — truncated file?".into(),
        });
    }
    Ok(CggttsFile { header_lines, records })
}

// --- checksum and tail ---------------------------------------------------------

/// Wrapping 64-bit sum of the REFSV clock values.
pub fn checksum_of(records: &[CggttsRecord]) -> i64 {
    records.iter().fold(0i64, |acc, r| acc.wrapping_add(r.refsv_0p1ns))
}

/// The three tail fields appended to a transferred file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MessageTail {
    pub sent_at_utc: String,
    pub checksum: i64,
    pub filename: String,
}

/// Append the tail block: one blank line, then the three `KEY=value` lines.
pub fn attach_tail(file_text: &str, tail: &MessageTail) -> String {
    let mut out = String::with_capacity(file_text.len() + 96);
    out.push_str(file_text);
    if !out.ends_with('\n') {
        out.push('\n');
    }
    out.push('\n');
    out.push_str(&format!(
        "SENT={}\nCHECKSUM={}\nFILE={}\n",
        tail.sent_at_utc, tail.checksum, tail.filename
    ));
    out
}

/// Separate a file from its optional tail block; `attach_tail(body, tail)`
/// reproduces the input byte-for-byte.
pub fn split_tail(text: &str) -> Result<(&str, Option<MessageTail>), PipelineError> {
    let Some(idx) = text.find("\n\nSENT=") else {
        return Ok((text, None));
    };
    let body = &text[..idx + 1];
    let mut sent_at = None;
    let mut checksum = None;
    let mut filename = None;
    for line in text[idx + 2..].lines() {
        if let Some(v) = line.strip_prefix("SENT=") {
            sent_at = Some(v.to_string());
        } else if let Some(v) = line.strip_prefix("CHECKSUM=") {
            checksum = Some(v.parse::<i64>().map_err(|_| {
                PipelineError::BadTail(format!("unreadable checksum {v:?}"))
            })?);
        } else if let Some(v) = line.strip_prefix("FILE=") {
            filename = Some(v.to_string());
        } else {
            return Err(PipelineError::BadTail(format!("unexpected tail line {line:?}")));
        }
    }
    match (sent_at, checksum, filename) {
        (Some(sent_at_utc), Some(checksum), Some(filename)) => {
            Ok((body, Some(MessageTail { sent_at_utc, checksum, filename })))
        }
        _ => Err(PipelineError::BadTail("tail block is missing a field".into())),
    }
}

// --- transfer message -----------------------------------------------------------

/// An encoded file with its tail attached, ready for encryption.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransferMessage {
    /// File text including the tail block.
    pub payload: Vec<u8>,
    pub sent_at_utc: String,
    pub checksum: i64,
    pub filename: String,
    pub sequence: u64,
}

/// Parse the payload, compute its checksum and attach the tail.
pub fn build_transfer_message(
    file_text: &str,
    filename: &str,
    now_unix_s: f64,
    sequence: u64,
) -> Result<TransferMessage, PipelineError> {
    let parsed = parse_cggtts_subset(file_text)?;
    let checksum = checksum_of(&parsed.records);
    let sent_at_utc = crate::timebase::format_utc(now_unix_s);
    let tail = MessageTail {
        sent_at_utc: sent_at_utc.clone(),
        checksum,
        filename: filename.to_string(),
    };
    Ok(TransferMessage {
        payload: attach_tail(file_text, &tail).into_bytes(),
        sent_at_utc,
        checksum,
        filename: filename.to_string(),
        sequence,
    })
}

/// Outcome of recomputing a payload's checksum against its tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub matches: bool,
    /// Value claimed by the tail.
    pub expected: i64,
    /// Value recomputed from the records.
    pub computed: i64,
}

/// Recompute the checksum of a received payload and compare it with the
/// tail's claim.  A mismatch is a result, not an error.
pub fn verify_message(payload: &[u8]) -> Result<VerifyReport, PipelineError> {
    let text = std::str::from_utf8(payload).map_err(|_| PipelineError::NotUtf8)?;
    let (body, tail) = split_tail(text)?;
    let tail = tail.ok_or(PipelineError::MissingTail)?;
    let computed = checksum_of(&parse_cggtts_subset(body)?.records);
    Ok(VerifyReport { matches: computed == tail.checksum, expected: tail.checksum, computed })
}

// --- tests ---------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn record(sat: &str, refsv: i64) -> CggttsRecord {
        CggttsRecord {
            sat_id: sat.to_string(),
            mjd: 59_892,
            start_time_s: 43_200,
            track_length_s: 780,
            refsv_0p1ns: refsv,
            refsys_0p1ns: -98_765,
            elevation_0p1deg: 453,
        }
    }

    fn header() -> Vec<String> {
        vec![
            "CLOCK COMPARISON DATA SUBSET".to_string(),
            "LAB = OP".to_string(),
            "REV DATE = 2022-11-09".to_string(),
        ]
    }

    #[test]
    fn empty_file_round_trips_header_only() {
        let file = CggttsFile { header_lines: header(), records: vec![] };
        let text = encode_cggtts_subset(&file).unwrap();
        assert!(text.ends_with("ELV\n"), "caption closes the header block");
        let back = parse_cggtts_subset(&text).unwrap();
        assert_eq!(back, file, "header-only file survives the round trip");
    }

    #[test]
    fn single_record_round_trips_bit_exact() {
        let file = CggttsFile { header_lines: header(), records: vec![record("E03", 123_456)] };
        let text = encode_cggtts_subset(&file).unwrap();
        let back = parse_cggtts_subset(&text).unwrap();
        assert_eq!(back.records[0].refsv_0p1ns, 123_456);
        assert_eq!(back, file);
        // and again: encode(parse(encode(x))) is stable
        assert_eq!(encode_cggtts_subset(&back).unwrap(), text);
    }

    #[test]
    fn five_satellite_fixture_sums_to_its_documented_checksum() {
        // refsv values chosen by hand; their sum is 1 025 245
        let refsvs = [123_456, -98_765, 555, 1_000_000, -1];
        let records: Vec<CggttsRecord> =
            refsvs.iter().enumerate().map(|(i, &v)| record(&format!("E{:02}", i + 1), v)).collect();
        assert_eq!(checksum_of(&records), 1_025_245);
        let text =
            encode_cggtts_subset(&CggttsFile { header_lines: header(), records: records.clone() })
                .unwrap();
        let parsed = parse_cggtts_subset(&text).unwrap();
        let sum: i64 = parsed.records.iter().map(|r| r.refsv_0p1ns).sum();
        assert_eq!(sum, 1_025_245, "parsed refsv values sum to the fixture checksum");
    }

    #[test]
    fn checksum_wraps_in_fixed_width_arithmetic() {
        // checksum_of never validates widths, so the wrap is reachable
        let a = record("E01", i64::MAX);
        let b = record("E02", 1);
        assert_eq!(checksum_of(&[a, b]), i64::MIN, "additive checksum wraps, documented");
    }

    #[test]
    fn malformed_lines_report_line_and_column() {
        let file = CggttsFile { header_lines: header(), records: vec![record("E01", 5)] };
        let mut text = encode_cggtts_subset(&file).unwrap();
        // corrupt the MJD field of the record (line 5: 3 header + caption + 1)
        text = text.replace("59892", "5x892");
        match parse_cggtts_subset(&text) {
            Err(PipelineError::Malformed { line: 5, column: 5, what }) => {
                assert!(what.contains("MJD"), "column 5 is the MJD field: {what}")
            }
            other => panic!("expected a located parse error, got {other:?}"),
        }

        let truncated = "LAB = OP\n";
        assert!(matches!(
            parse_cggtts_subset(truncated),
            Err(PipelineError::Malformed { .. })
        ));
    }

    #[test]
    fn short_tracks_are_rejected() {
        let mut r = record("E01", 5);
        r.track_length_s = 779;
        assert!(matches!(r.validate(), Err(PipelineError::BadRecord(_))));
        let err =
            encode_cggtts_subset(&CggttsFile { header_lines: vec![], records: vec![r] });
        assert!(err.is_err(), "a 779 s track never reaches the wire");
    }

    #[test]
    fn tail_attach_split_round_trip() {
        let file = CggttsFile { header_lines: header(), records: vec![record("E01", 10)] };
        let body = encode_cggtts_subset(&file).unwrap();
        let tail = MessageTail {
            sent_at_utc: "2022-11-09T12:30:00Z".into(),
            checksum: 10,
            filename: "ma00001.cgt".into(),
        };
        let full = attach_tail(&body, &tail);
        let (body2, tail2) = split_tail(&full).unwrap();
        assert_eq!(body2, body);
        assert_eq!(tail2, Some(tail.clone()));
        assert_eq!(attach_tail(body2, &tail), full, "split is the inverse of attach");
        // the parser ignores a valid tail
        assert_eq!(parse_cggtts_subset(&full).unwrap(), file);
    }

    #[test]
    fn transfer_message_checksums_the_clock_values() {
        let records = vec![record("E01", 10), record("E02", 20), record("E03", 30)];
        let text =
            encode_cggtts_subset(&CggttsFile { header_lines: header(), records }).unwrap();
        let msg = build_transfer_message(&text, "ma00001.cgt", 1_667_995_200.0, 7).unwrap();
        assert_eq!(msg.checksum, 60, "10 + 20 + 30");
        assert_eq!(msg.sequence, 7);
        assert!(msg.sent_at_utc.starts_with("2022-11-09T"));

        let empty = encode_cggtts_subset(&CggttsFile { header_lines: header(), records: vec![] })
            .unwrap();
        let msg0 = build_transfer_message(&empty, "ma00002.cgt", 0.0, 8).unwrap();
        assert_eq!(msg0.checksum, 0, "no records, zero checksum");
    }

    #[test]
    fn verification_sees_single_edits_but_not_compensating_ones() {
        let records = vec![record("E01", 10), record("E02", 20), record("E03", 30)];
        let text =
            encode_cggtts_subset(&CggttsFile { header_lines: header(), records }).unwrap();
        let msg = build_transfer_message(&text, "f.cgt", 0.0, 0).unwrap();
        let clean = verify_message(&msg.payload).unwrap();
        assert!(clean.matches, "untampered message verifies");

        // +1 on one refsv: mismatch with delta exactly 1
        let tampered = String::from_utf8(msg.payload.clone())
            .unwrap()
            .replace("          10 ", "          11 ");
        let report = verify_message(tampered.as_bytes()).unwrap();
        assert!(!report.matches);
        assert_eq!(report.computed - report.expected, 1, "additive checksum sees the +1");

        // compensating +5/−5 edits cancel: the known weakness of an
        // additive check — the envelope's authentication covers this
        let compensated = String::from_utf8(msg.payload)
            .unwrap()
            .replace("          10 ", "          15 ")
            .replace("          20 ", "          15 ");
        let report = verify_message(compensated.as_bytes()).unwrap();
        assert!(report.matches, "additive checksum cannot see compensating edits");
    }
}
