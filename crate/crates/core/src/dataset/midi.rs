//! Standard MIDI File (format 0 and 1) note extraction.
//!
//! Only what note pairing needs is interpreted: note-on/-off, tempo meta
//! events, and end-of-track. Everything else — including the sustain pedal —
//! is skipped at the byte level.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::notes::{sort_notes, NoteEvent, PITCH_MAX, PITCH_MIN};
use crate::error::{Error, Result};

const DEFAULT_US_PER_QUARTER: u32 = 500_000;

#[derive(Clone, Debug, Default)]
pub struct ParsedMidi {
    /// Sorted by (onset, pitch).
    pub notes: Vec<NoteEvent>,
    /// Notes still sounding at end of file, closed there.
    pub unterminated: usize,
    /// Closed notes whose pitch falls outside 21..=108.
    pub dropped_out_of_range: usize,
    /// Closed notes with zero duration (off at the onset tick).
    pub dropped_degenerate: usize,
}

pub fn parse_midi(path: &Path) -> Result<ParsedMidi> {
    parse_midi_bytes(&fs::read(path)?)
}

#[derive(Clone, Copy, Debug)]
enum NoteKind {
    On,
    Off,
}

/// One note-on/off, tagged with merge keys that keep multi-track files
/// deterministic: ties in tick break by (track, in-track order).
#[derive(Clone, Copy, Debug)]
struct RawEvent {
    tick: u64,
    track: usize,
    seq: usize,
    kind: NoteKind,
    channel: u8,
    pitch: u8,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8]) -> Self {
        Cursor { data, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::MidiParse(format!("truncated file while reading {what}")));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Variable-length quantity, at most 4 bytes.
    fn varlen(&mut self) -> Result<u32> {
        let mut value: u32 = 0;
        for i in 0.. {
            if i == 4 {
                return Err(Error::MidiParse("variable-length quantity over 4 bytes".into()));
            }
            let byte = self.u8("variable-length quantity")?;
            value = (value << 7) | u32::from(byte & 0x7F);
            if byte & 0x80 == 0 {
                break;
            }
        }
        Ok(value)
    }
}

/// Piecewise tick→seconds conversion from the merged tempo events.
struct TempoMap {
    /// (tick, cumulative seconds at that tick, µs per quarter from there).
    segments: Vec<(u64, f64, u32)>,
    ticks_per_quarter: f64,
}

impl TempoMap {
    fn new(mut changes: Vec<(u64, u32)>, ticks_per_quarter: u16) -> Self {
        changes.sort_by_key(|&(tick, _)| tick);
        let mut segments = vec![(0u64, 0.0f64, DEFAULT_US_PER_QUARTER)];
        for (tick, us) in changes {
            let &(last_tick, last_sec, last_us) = segments.last().unwrap();
            if tick == last_tick {
                // A change right at the previous boundary replaces it.
                *segments.last_mut().unwrap() = (tick, last_sec, us);
            } else {
                let sec = last_sec
                    + (tick - last_tick) as f64 * f64::from(last_us)
                        / (f64::from(ticks_per_quarter) * 1e6);
                segments.push((tick, sec, us));
            }
        }
        TempoMap { segments, ticks_per_quarter: f64::from(ticks_per_quarter) }
    }

    fn seconds(&self, tick: u64) -> f64 {
        let idx = self
            .segments
            .partition_point(|&(t, _, _)| t <= tick)
            .saturating_sub(1);
        let (seg_tick, seg_sec, us) = self.segments[idx];
        seg_sec + (tick - seg_tick) as f64 * f64::from(us) / (self.ticks_per_quarter * 1e6)
    }
}

pub fn parse_midi_bytes(bytes: &[u8]) -> Result<ParsedMidi> {
    let mut cur = Cursor::new(bytes);
    if cur.take(4, "header magic")? != b"MThd" {
        return Err(Error::MidiParse("missing MThd header".into()));
    }
    let header_len = cur.u32("header length")? as usize;
    if header_len < 6 {
        return Err(Error::MidiParse(format!("header length {header_len} < 6")));
    }
    let header = Cursor::new(cur.take(header_len, "header body")?).into_header()?;
    let (format, n_tracks, ticks_per_quarter) = header;
    if format > 1 {
        return Err(Error::MidiParse(format!("format {format} unsupported; need 0 or 1")));
    }

    let mut events: Vec<RawEvent> = Vec::new();
    let mut tempos: Vec<(u64, u32)> = Vec::new();
    let mut end_tick: u64 = 0;
    for track in 0..usize::from(n_tracks) {
        if cur.take(4, "track magic")? != b"MTrk" {
            return Err(Error::MidiParse(format!("track {track}: missing MTrk magic")));
        }
        let len = cur.u32("track length")? as usize;
        let body = cur.take(len, "track body")?;
        let track_end =
            parse_track(body, track, &mut events, &mut tempos)?;
        end_tick = end_tick.max(track_end);
    }

    let tempo_map = TempoMap::new(tempos, ticks_per_quarter);
    events.sort_by_key(|e| (e.tick, e.track, e.seq));

    let mut parsed = ParsedMidi::default();
    let mut active: BTreeMap<(u8, u8), f64> = BTreeMap::new();
    let close = |parsed: &mut ParsedMidi, pitch: u8, onset: f64, offset: f64| {
        if !(PITCH_MIN..=PITCH_MAX).contains(&pitch) {
            parsed.dropped_out_of_range += 1;
        } else if onset >= offset {
            parsed.dropped_degenerate += 1;
        } else {
            parsed.notes.push(NoteEvent { pitch, onset, offset });
        }
    };
    for event in &events {
        let time = tempo_map.seconds(event.tick);
        let key = (event.channel, event.pitch);
        match event.kind {
            NoteKind::On => {
                // A re-strike of a sounding pitch closes the first note here.
                if let Some(onset) = active.insert(key, time) {
                    close(&mut parsed, event.pitch, onset, time);
                }
            }
            NoteKind::Off => {
                if let Some(onset) = active.remove(&key) {
                    close(&mut parsed, event.pitch, onset, time);
                }
            }
        }
    }
    let end_time = tempo_map.seconds(end_tick);
    for (&(_, pitch), &onset) in &active {
        parsed.unterminated += 1;
        close(&mut parsed, pitch, onset, end_time);
    }

    sort_notes(&mut parsed.notes);
    Ok(parsed)
}

impl Cursor<'_> {
    fn into_header(mut self) -> Result<(u16, u16, u16)> {
        let format = self.u16("format")?;
        let n_tracks = self.u16("track count")?;
        let division = self.u16("division")?;
        if division & 0x8000 != 0 {
            return Err(Error::MidiParse("SMPTE time division unsupported".into()));
        }
        if division == 0 {
            return Err(Error::MidiParse("zero ticks per quarter".into()));
        }
        Ok((format, n_tracks, division))
    }
}

/// Walks one track's event stream; returns the end-of-track tick.
fn parse_track(
    body: &[u8],
    track: usize,
    events: &mut Vec<RawEvent>,
    tempos: &mut Vec<(u64, u32)>,
) -> Result<u64> {
    let mut cur = Cursor::new(body);
    let mut tick: u64 = 0;
    let mut running: Option<u8> = None;
    let mut seq = 0usize;
    while cur.remaining() > 0 {
        tick += u64::from(cur.varlen()?);
        let first = cur.u8("status")?;
        let status = if first & 0x80 != 0 {
            if first < 0xF0 {
                running = Some(first);
            }
            first
        } else {
            cur.pos -= 1;
            running.ok_or_else(|| {
                Error::MidiParse(format!("track {track}: data byte {first:#04x} without status"))
            })?
        };

        match status & 0xF0 {
            0x80 | 0x90 => {
                let pitch = cur.u8("pitch")?;
                let velocity = cur.u8("velocity")?;
                let on = status & 0xF0 == 0x90 && velocity > 0;
                events.push(RawEvent {
                    tick,
                    track,
                    seq,
                    kind: if on { NoteKind::On } else { NoteKind::Off },
                    channel: status & 0x0F,
                    pitch: pitch & 0x7F,
                });
                seq += 1;
            }
            0xA0 | 0xB0 | 0xE0 => {
                cur.take(2, "channel message data")?;
            }
            0xC0 | 0xD0 => {
                cur.take(1, "channel message data")?;
            }
            0xF0 => match status {
                0xF0 | 0xF7 => {
                    running = None;
                    let len = cur.varlen()? as usize;
                    cur.take(len, "sysex body")?;
                }
                0xFF => {
                    running = None;
                    let meta = cur.u8("meta type")?;
                    let len = cur.varlen()? as usize;
                    let data = cur.take(len, "meta body")?;
                    match meta {
                        0x51 => {
                            if len != 3 {
                                return Err(Error::MidiParse(format!(
                                    "track {track}: tempo event of length {len}"
                                )));
                            }
                            let us = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                            tempos.push((tick, us));
                        }
                        0x2F => return Ok(tick),
                        _ => {}
                    }
                }
                other => {
                    return Err(Error::MidiParse(format!(
                        "track {track}: unexpected status {other:#04x}"
                    )))
                }
            },
            _ => unreachable!("status bytes are ≥ 0x80"),
        }
    }
    // Tolerate a missing end-of-track meta; the last event marks the end.
    Ok(tick)
}
