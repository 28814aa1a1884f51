//! Piano-roll rasterization.

use super::notes::{NoteEvent, N_PITCHES, PITCH_MIN};
use crate::nn::Tensor;

/// Frames per second of the roll: 16 kHz / 512-sample hop.
pub const FPS: f64 = 31.25;

/// Binary 88×T activity matrix; row p is MIDI pitch p + 21.
#[derive(Clone, Debug, PartialEq)]
pub struct PianoRoll {
    /// `[88, T]` with entries exactly 0.0 or 1.0.
    pub values: Tensor<f32>,
    pub fps: f64,
}

impl PianoRoll {
    pub fn zeros(n_frames: usize, fps: f64) -> Self {
        PianoRoll { values: Tensor::zeros(&[N_PITCHES, n_frames]), fps }
    }

    pub fn n_frames(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn is_active(&self, row: usize, frame: usize) -> bool {
        self.values.data()[row * self.n_frames() + frame] > 0.5
    }

    /// Number of active cells.
    pub fn active_cells(&self) -> usize {
        self.values.data().iter().filter(|&&v| v > 0.5).count()
    }
}

/// Marks cell (p, t) active iff some note with pitch p+21 satisfies
/// `onset ≤ t/fps < offset` — the note interval contains the frame center.
/// The comparison uses `t as f64 / fps` directly, the same expression the
/// decoder uses to emit note times, so decoding a rasterized roll reproduces
/// frame-aligned notes exactly. Frames outside `0..n_frames` are clipped;
/// pitches outside the 88-key range are ignored.
pub fn notes_to_pianoroll(notes: &[NoteEvent], n_frames: usize, fps: f64) -> PianoRoll {
    let mut roll = PianoRoll::zeros(n_frames, fps);
    for note in notes {
        if !(PITCH_MIN..PITCH_MIN + N_PITCHES as u8).contains(&note.pitch) {
            continue;
        }
        let row = usize::from(note.pitch - PITCH_MIN);
        // Candidate frame window from float arithmetic, then the exact
        // per-frame test; the slack of one frame on each side absorbs any
        // rounding in the window itself.
        let lo = (note.onset * fps).floor().max(0.0) as usize;
        let hi = (((note.offset * fps).ceil().max(0.0) as usize) + 1).min(n_frames);
        for t in lo.saturating_sub(1)..hi {
            let center = t as f64 / fps;
            if note.onset <= center && center < note.offset {
                roll.values.data_mut()[row * n_frames + t] = 1.0;
            }
        }
    }
    roll
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_list_gives_all_zero_roll() {
        let roll = notes_to_pianoroll(&[], 16, FPS);
        assert_eq!(roll.values.shape(), &[88, 16]);
        assert_eq!(roll.active_cells(), 0);
    }

    #[test]
    fn note_covering_first_tenth_of_a_second_marks_frames_0_to_3() {
        let notes = [NoteEvent { pitch: 60, onset: 0.0, offset: 0.1 }];
        let roll = notes_to_pianoroll(&notes, 10, FPS);
        let row = 60 - 21;
        for t in 0..10 {
            assert_eq!(roll.is_active(row, t), t <= 3, "frame {t}");
        }
        assert_eq!(roll.active_cells(), 4);
    }

    #[test]
    fn frame_aligned_note_uses_half_open_interval() {
        // Onset at frame 1's center, offset at frame 3's center: the offset
        // frame itself is excluded.
        let notes = [NoteEvent { pitch: 21, onset: 0.032, offset: 0.096 }];
        let roll = notes_to_pianoroll(&notes, 10, FPS);
        for t in 0..10 {
            assert_eq!(roll.is_active(0, t), t == 1 || t == 2, "frame {t}");
        }
    }

    #[test]
    fn frames_beyond_the_roll_are_clipped() {
        let notes = [NoteEvent { pitch: 21, onset: 0.0, offset: 100.0 }];
        let roll = notes_to_pianoroll(&notes, 5, FPS);
        assert_eq!(roll.active_cells(), 5);
    }

    #[test]
    fn note_ending_before_time_zero_marks_nothing() {
        let notes = [NoteEvent { pitch: 21, onset: -1.0, offset: -0.5 }];
        let roll = notes_to_pianoroll(&notes, 5, FPS);
        assert_eq!(roll.active_cells(), 0);
    }

    #[test]
    fn out_of_range_pitch_is_ignored() {
        let notes = [NoteEvent { pitch: 109, onset: 0.0, offset: 1.0 }];
        let roll = notes_to_pianoroll(&notes, 5, FPS);
        assert_eq!(roll.active_cells(), 0);
    }

    proptest! {
        /// Cell-level agreement with the definition evaluated directly.
        #[test]
        fn every_cell_matches_the_center_rule(
            pitch in 21u8..=108,
            onset_frame in 0u32..40,
            len_frames in 1u32..20,
        ) {
            let onset = f64::from(onset_frame) / FPS;
            let offset = f64::from(onset_frame + len_frames) / FPS;
            let note = NoteEvent { pitch, onset, offset };
            let roll = notes_to_pianoroll(&[note], 64, FPS);
            let row = usize::from(pitch - 21);
            for t in 0..64 {
                let center = t as f64 / FPS;
                let want = onset <= center && center < offset;
                prop_assert_eq!(roll.is_active(row, t), want, "frame {}", t);
            }
        }
    }
}
