//! Synthetic clips: note lists rendered as additive sines, a deterministic
//! random-score generator, and a dataset writer (WAV + note CSV + manifest),
//! so training and evaluation need no external corpus.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{
    manifest::{save_manifest, ManifestEntry, Split},
    notes::{sort_notes, write_note_csv, NoteEvent},
    sampler::SEGMENT_SAMPLES,
};
use crate::dsp::{AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::io::write_wav;

/// Relative strength of the first three harmonics.
pub const HARMONIC_AMPS: [f64; 3] = [1.0, 0.35, 0.15];
/// Linear fade applied at both ends of every note.
pub const ATTACK_SECONDS: f64 = 0.01;
/// Generated scores stay inside this pitch range.
pub const MIN_PITCH: u8 = 48;
pub const MAX_PITCH: u8 = 84;

const NOTE_GAIN: f64 = 0.2;

/// Equal-tempered frequency of a MIDI pitch, A4 = 440 Hz.
pub fn pitch_hz(pitch: u8) -> f64 {
    440.0 * ((f64::from(pitch) - 69.0) / 12.0).exp2()
}

fn envelope(t: f64, duration: f64) -> f64 {
    let rise = (t / ATTACK_SECONDS).min(1.0);
    let fall = ((duration - t) / ATTACK_SECONDS).clamp(0.0, 1.0);
    rise.min(fall)
}

/// Sums one fading sine stack per note into a clip of exactly `n_samples`
/// samples at 16 kHz. Harmonics above Nyquist are dropped; if the mix would
/// clip, the whole signal is scaled back under full scale.
pub fn render_notes(notes: &[NoteEvent], n_samples: usize) -> Result<AudioClip> {
    let sr = f64::from(SAMPLE_RATE);
    let nyquist = sr / 2.0;
    let mut mix = vec![0.0f64; n_samples];
    for note in notes {
        if !(note.onset >= 0.0 && note.offset > note.onset) {
            return Err(Error::config(
                "notes",
                format!("unrenderable span {}..{}", note.onset, note.offset),
            ));
        }
        let start = ((note.onset * sr).round() as usize).min(n_samples);
        let end = ((note.offset * sr).round() as usize).min(n_samples);
        let duration = (end - start) as f64 / sr;
        let f0 = pitch_hz(note.pitch);
        for (i, out) in mix[start..end].iter_mut().enumerate() {
            let t = i as f64 / sr;
            let mut s = 0.0;
            for (k, amp) in HARMONIC_AMPS.iter().enumerate() {
                let f = f0 * (k + 1) as f64;
                if f < nyquist {
                    s += amp * (std::f64::consts::TAU * f * t).sin();
                }
            }
            *out += NOTE_GAIN * envelope(t, duration) * s;
        }
    }
    let peak = mix.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak > 0.99 {
        for v in &mut mix {
            *v *= 0.99 / peak;
        }
    }
    AudioClip::new(mix.iter().map(|&v| v as f32).collect(), SAMPLE_RATE)
}

/// Draws a light-polyphony score over `duration` seconds: pitches in
/// [`MIN_PITCH`]..=[`MAX_PITCH`], and consecutive notes of one pitch are kept
/// at least 80 ms apart so their rasterized runs never merge.
pub fn random_score(rng: &mut ChaCha8Rng, duration: f64) -> Result<Vec<NoteEvent>> {
    if duration < 1.0 {
        return Err(Error::config("duration", "scores need at least 1 second"));
    }
    let candidates = (duration * 1.8) as usize;
    let mut notes: Vec<NoteEvent> = Vec::new();
    for _ in 0..candidates {
        let pitch = rng.gen_range(MIN_PITCH..=MAX_PITCH);
        let onset = rng.gen_range(0.0..duration - 0.35);
        let length = rng.gen_range(0.3..1.0);
        let offset = (onset + length).min(duration - 0.05);
        let clash = notes
            .iter()
            .any(|n| n.pitch == pitch && onset < n.offset + 0.08 && n.onset < offset + 0.08);
        if clash || offset - onset < 0.1 {
            continue;
        }
        notes.push(NoteEvent { pitch, onset, offset });
    }
    sort_notes(&mut notes);
    Ok(notes)
}

fn clip_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    key[24] = 1;
    ChaCha8Rng::from_seed(key)
}

/// Writes `n_train + n_test` clips (`clip_NN.wav` + `clip_NN.csv`, each
/// exactly one training segment long) and a `manifest.json` into `dir`.
/// Every clip depends only on `seed` and its index.
pub fn generate_dataset(
    dir: &Path,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<Vec<ManifestEntry>> {
    let total = n_train + n_test;
    if total == 0 {
        return Err(Error::EmptyInput("dataset with zero clips".into()));
    }
    std::fs::create_dir_all(dir)?;
    let duration = SEGMENT_SAMPLES as f64 / f64::from(SAMPLE_RATE);
    let mut entries = Vec::with_capacity(total);
    for i in 0..total {
        let id = format!("clip_{i:02}");
        let notes = random_score(&mut clip_rng(seed, i as u64), duration)?;
        let audio = render_notes(&notes, SEGMENT_SAMPLES)?;
        let wav = format!("{id}.wav");
        let csv = format!("{id}.csv");
        write_wav(&dir.join(&wav), audio.samples(), SAMPLE_RATE)?;
        write_note_csv(&dir.join(&csv), &notes)?;
        entries.push(ManifestEntry {
            id,
            wav_path: wav.into(),
            notes_path: csv.into(),
            split: if i < n_train { Split::Train } else { Split::Test },
        });
    }
    save_manifest(&dir.join("manifest.json"), &entries)?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_manifest, load_split};
    use crate::dsp::mel_spectrogram;
    use approx::assert_abs_diff_eq;
    use tempfile::tempdir;

    #[test]
    fn pitch_frequencies_follow_equal_temperament() {
        assert_abs_diff_eq!(pitch_hz(69), 440.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pitch_hz(81), 880.0, epsilon = 1e-9);
        assert_abs_diff_eq!(pitch_hz(60), 261.6255653005986, epsilon = 1e-9);
    }

    #[test]
    fn rendered_note_is_silent_outside_its_span_and_peaks_at_its_pitch() {
        let notes = [NoteEvent { pitch: 69, onset: 0.25, offset: 1.75 }];
        let clip = render_notes(&notes, 32_000).unwrap();
        assert_eq!(clip.len(), 32_000);

        let s = clip.samples();
        assert!(s[..3_990].iter().all(|&v| v == 0.0), "sound before the onset");
        assert!(s[28_010..].iter().all(|&v| v == 0.0), "sound after the offset");
        let peak = s.iter().fold(0.0f32, |m, &v| m.max(v.abs()));
        assert!(peak > 0.05 && peak <= 1.0, "peak {peak}");

        let spec = mel_spectrogram(&clip).unwrap();
        let (f_bins, t) = (spec.values.shape()[0], spec.values.shape()[1]);
        let row_energy = |r: usize| -> f64 { (0..t).map(|c| spec.values.data()[r * t + c]).sum() };
        let loudest = (0..f_bins).max_by(|&a, &b| row_energy(a).total_cmp(&row_energy(b))).unwrap();
        let hz = spec.bin_frequencies[loudest];
        assert!((395.0..485.0).contains(&hz), "strongest bin at {hz} Hz");
    }

    #[test]
    fn attack_and_release_taper_the_note() {
        let notes = [NoteEvent { pitch: 60, onset: 0.0, offset: 1.0 }];
        let clip = render_notes(&notes, 16_000).unwrap();
        let rms = |r: std::ops::Range<usize>| -> f32 {
            let s = &clip.samples()[r.clone()];
            (s.iter().map(|v| v * v).sum::<f32>() / r.len() as f32).sqrt()
        };
        let edge_in = rms(0..80);
        let middle = rms(7_960..8_360);
        let edge_out = rms(15_920..16_000);
        assert!(edge_in < 0.5 * middle, "attack {edge_in} vs sustain {middle}");
        assert!(edge_out < 0.5 * middle, "release {edge_out} vs sustain {middle}");
    }

    #[test]
    fn empty_score_renders_silence() {
        let clip = render_notes(&[], 1_000).unwrap();
        assert_eq!(clip.len(), 1_000);
        assert!(clip.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degenerate_note_spans_are_rejected() {
        let err = render_notes(&[NoteEvent { pitch: 60, onset: 0.5, offset: 0.5 }], 16_000)
            .err()
            .expect("zero-length note");
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn random_scores_stay_in_range_and_never_overlap_per_pitch() {
        for seed in 0..20u64 {
            let notes = random_score(&mut clip_rng(9, seed), 20.48).unwrap();
            assert!(notes.len() >= 10, "seed {seed}: only {} notes", notes.len());
            for n in &notes {
                assert!((MIN_PITCH..=MAX_PITCH).contains(&n.pitch));
                assert!(n.onset >= 0.0 && n.offset <= 20.48);
                assert!(n.offset - n.onset >= 0.1);
            }
            for a in 0..notes.len() {
                for b in a + 1..notes.len() {
                    let (x, y) = (&notes[a], &notes[b]);
                    if x.pitch == y.pitch {
                        let gap = (y.onset - x.offset).max(x.onset - y.offset);
                        assert!(gap >= 0.08, "seed {seed}: pitch {} overlap", x.pitch);
                    }
                }
            }
        }
    }

    #[test]
    fn generated_dataset_loads_back_with_the_requested_split() {
        let dir = tempdir().unwrap();
        let data = dir.path().join("data");
        let entries = generate_dataset(&data, 2, 1, 5).unwrap();
        assert_eq!(entries.len(), 3);

        let loaded = load_manifest(&data.join("manifest.json")).unwrap();
        let train = load_split(&data, &loaded, Split::Train).unwrap();
        let test = load_split(&data, &loaded, Split::Test).unwrap();
        assert_eq!(train.len(), 2);
        assert_eq!(test.len(), 1);
        assert_eq!(train[0].audio.len(), SEGMENT_SAMPLES);
        assert!(!train[0].notes.is_empty());
    }

    #[test]
    fn generation_is_reproducible_byte_for_byte() {
        let dir = tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        generate_dataset(&a, 1, 1, 3).unwrap();
        generate_dataset(&b, 1, 1, 3).unwrap();
        for file in ["clip_00.wav", "clip_01.csv", "manifest.json"] {
            assert_eq!(
                std::fs::read(a.join(file)).unwrap(),
                std::fs::read(b.join(file)).unwrap(),
                "{file} differs between identical runs"
            );
        }
    }
}
