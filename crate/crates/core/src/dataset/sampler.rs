//! Fixed-length training segments drawn at seeded-random offsets.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::Recording;
use super::notes::NoteEvent;
use super::rasterize::{notes_to_pianoroll, PianoRoll, FPS};
use crate::dsp::{AudioClip, HOP, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Training segment length: 327,680 samples ≈ 20.5 s.
pub const SEGMENT_SAMPLES: usize = 327_680;
/// Frames per segment under the floor(len/hop) framing rule.
pub const SEGMENT_FRAMES: usize = SEGMENT_SAMPLES / HOP;

/// One training example: ~20 s of audio and its aligned roll.
#[derive(Clone, Debug)]
pub struct Segment {
    /// Exactly [`SEGMENT_SAMPLES`] samples at 16 kHz.
    pub audio: AudioClip,
    /// 88×[`SEGMENT_FRAMES`] target roll.
    pub roll: PianoRoll,
    pub source_id: String,
    pub start_sample: usize,
}

/// RNG for one (run seed, epoch, recording) triple; each coordinate gets its
/// own bytes of the ChaCha key, so distinct triples never collide.
pub fn segment_rng(base_seed: u64, epoch: u64, rec_index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&base_seed.to_le_bytes());
    key[8..16].copy_from_slice(&epoch.to_le_bytes());
    key[16..24].copy_from_slice(&rec_index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Draws the segment start uniformly over every feasible offset; recordings
/// shorter than a segment are zero-padded at the end and always start at 0.
pub fn sample_segment(
    rec: &Recording,
    base_seed: u64,
    epoch: u64,
    rec_index: u64,
) -> Result<Segment> {
    let n = rec.audio.len();
    let start = if n <= SEGMENT_SAMPLES {
        0
    } else {
        segment_rng(base_seed, epoch, rec_index).gen_range(0..=n - SEGMENT_SAMPLES)
    };
    segment_at(rec, start)
}

/// Cuts the segment starting at a given sample; note times shift by
/// −start/sr so the roll stays aligned to the cut audio.
pub fn segment_at(rec: &Recording, start: usize) -> Result<Segment> {
    if rec.audio.sample_rate() != SAMPLE_RATE {
        return Err(Error::config(
            "sample_rate",
            format!("segments need {SAMPLE_RATE} Hz audio, got {}", rec.audio.sample_rate()),
        ));
    }
    let n = rec.audio.len();
    if start > n {
        return Err(Error::config("start", format!("start {start} beyond {n} samples")));
    }

    let mut samples = vec![0.0f32; SEGMENT_SAMPLES];
    let take = (n - start).min(SEGMENT_SAMPLES);
    samples[..take].copy_from_slice(&rec.audio.samples()[start..start + take]);

    let shift = start as f64 / f64::from(SAMPLE_RATE);
    let shifted: Vec<NoteEvent> = rec
        .notes
        .iter()
        .map(|m| NoteEvent { pitch: m.pitch, onset: m.onset - shift, offset: m.offset - shift })
        .collect();
    let roll = notes_to_pianoroll(&shifted, SEGMENT_FRAMES, FPS);

    Ok(Segment {
        audio: AudioClip::new(samples, SAMPLE_RATE)?,
        roll,
        source_id: rec.id.clone(),
        start_sample: start,
    })
}
