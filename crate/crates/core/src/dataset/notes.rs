//! Note events and the seconds-based CSV annotation format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Lowest MIDI pitch on an 88-key piano (A0).
pub const PITCH_MIN: u8 = 21;
/// Highest MIDI pitch on an 88-key piano (C8).
pub const PITCH_MAX: u8 = 108;
pub const N_PITCHES: usize = 88;

/// One note: MIDI pitch plus onset/offset in seconds, onset < offset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoteEvent {
    pub pitch: u8,
    pub onset: f64,
    pub offset: f64,
}

/// Parse result: surviving notes plus counts of rows that were dropped
/// rather than rejected outright.
#[derive(Clone, Debug, Default)]
pub struct ParsedNotes {
    /// Sorted by (onset, pitch).
    pub notes: Vec<NoteEvent>,
    /// Rows whose pitch fell outside 21..=108.
    pub dropped_out_of_range: usize,
    /// Rows with onset ≥ offset.
    pub dropped_bad_interval: usize,
}

pub fn sort_notes(notes: &mut [NoteEvent]) {
    notes.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.pitch.cmp(&b.pitch)));
}

/// Parses the canonical note CSV: header `onset,offset,pitch`, one note per
/// row in seconds/seconds/MIDI-integer. Extra columns are ignored. Rows with
/// out-of-range pitch or an empty time interval are dropped and counted;
/// anything unparseable is an error naming the 1-based line.
pub fn parse_note_csv(path: &Path) -> Result<ParsedNotes> {
    let text = fs::read_to_string(path)?;
    parse_note_csv_str(&text)
}

pub fn parse_note_csv_str(text: &str) -> Result<ParsedNotes> {
    let mut lines = text.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line.trim_end_matches('\r'),
        None => {
            return Err(Error::CsvParse { line: 1, msg: "missing header `onset,offset,pitch`".into() })
        }
    };
    let head: Vec<&str> = header.split(',').map(str::trim).collect();
    if head.len() < 3 || head[..3] != ["onset", "offset", "pitch"] {
        return Err(Error::CsvParse {
            line: 1,
            msg: format!("expected header `onset,offset,pitch`, got `{header}`"),
        });
    }

    let mut parsed = ParsedNotes::default();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let row = raw.trim_end_matches('\r');
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(Error::CsvParse {
                line: line_no,
                msg: format!("expected 3 columns, got {}", fields.len()),
            });
        }
        let onset: f64 = fields[0]
            .parse()
            .map_err(|e| Error::CsvParse { line: line_no, msg: format!("bad onset: {e}") })?;
        let offset: f64 = fields[1]
            .parse()
            .map_err(|e| Error::CsvParse { line: line_no, msg: format!("bad offset: {e}") })?;
        if !(onset.is_finite() && offset.is_finite()) {
            return Err(Error::CsvParse { line: line_no, msg: "non-finite time".into() });
        }
        let pitch: i64 = fields[2]
            .parse()
            .map_err(|e| Error::CsvParse { line: line_no, msg: format!("bad pitch: {e}") })?;

        if !(i64::from(PITCH_MIN)..=i64::from(PITCH_MAX)).contains(&pitch) {
            parsed.dropped_out_of_range += 1;
            continue;
        }
        if onset >= offset {
            parsed.dropped_bad_interval += 1;
            continue;
        }
        parsed.notes.push(NoteEvent { pitch: pitch as u8, onset, offset });
    }
    sort_notes(&mut parsed.notes);
    Ok(parsed)
}

/// Writes the canonical CSV. Floats use Rust's shortest round-trip
/// formatting, so a write→parse cycle reproduces the values bit-exactly.
pub fn write_note_csv(path: &Path, notes: &[NoteEvent]) -> Result<()> {
    let mut out = String::from("onset,offset,pitch\n");
    for n in notes {
        writeln!(out, "{},{},{}", n.onset, n.offset, n.pitch).expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}
