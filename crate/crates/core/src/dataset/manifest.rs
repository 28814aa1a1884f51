//! Dataset manifest: a JSON list of recordings with audio and annotation
//! paths, resolved relative to the manifest file.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::midi::parse_midi;
use super::notes::{parse_note_csv, NoteEvent};
use super::resample::resample;
use crate::dsp::{AudioClip, HOP, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::io::read_wav;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub wav_path: PathBuf,
    pub notes_path: PathBuf,
    pub split: Split,
}

/// Loads and validates the manifest; entry ids must be unique.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let entries: Vec<ManifestEntry> = serde_json::from_reader(File::open(path)?)?;
    let mut seen = HashSet::new();
    for entry in &entries {
        if !seen.insert(entry.id.as_str()) {
            return Err(Error::config("manifest", format!("duplicate id `{}`", entry.id)));
        }
    }
    Ok(entries)
}

pub fn save_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, entries)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// A recording ready for segmentation: 16 kHz mono audio plus its notes.
#[derive(Clone, Debug)]
pub struct Recording {
    pub id: String,
    pub audio: AudioClip,
    pub notes: Vec<NoteEvent>,
}

/// Reads the WAV (resampling to 16 kHz) and the annotations; `.mid`/`.midi`
/// extensions parse as MIDI, everything else as the note CSV. Notes running
/// more than one frame past the end of the audio fail validation.
pub fn load_recording(manifest_dir: &Path, entry: &ManifestEntry) -> Result<Recording> {
    let audio = resample(&read_wav(&resolve(manifest_dir, &entry.wav_path))?, SAMPLE_RATE)?;
    let notes = load_notes(&resolve(manifest_dir, &entry.notes_path))?;

    let limit = audio.duration_seconds() + HOP as f64 / f64::from(SAMPLE_RATE);
    if let Some(bad) = notes.iter().find(|n| n.offset > limit) {
        return Err(Error::CheckFailed(format!(
            "recording `{}`: note (pitch {}, offset {:.3}s) runs past the audio end ({:.3}s)",
            entry.id,
            bad.pitch,
            bad.offset,
            audio.duration_seconds(),
        )));
    }
    Ok(Recording { id: entry.id.clone(), audio, notes })
}

/// Loads every entry of one split, in manifest order.
pub fn load_split(
    manifest_dir: &Path,
    entries: &[ManifestEntry],
    split: Split,
) -> Result<Vec<Recording>> {
    entries
        .iter()
        .filter(|e| e.split == split)
        .map(|e| load_recording(manifest_dir, e))
        .collect()
}

fn load_notes(path: &Path) -> Result<Vec<NoteEvent>> {
    let is_midi = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("mid") || e.eq_ignore_ascii_case("midi"));
    if is_midi {
        Ok(parse_midi(path)?.notes)
    } else {
        Ok(parse_note_csv(path)?.notes)
    }
}

fn resolve(manifest_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        manifest_dir.join(path)
    }
}
