//! Posteriorgram decoding and the transcription evaluation suite: frame
//! scores, micro average precision, and note-level matching, per recording
//! and aggregated over a dataset.

pub mod matching;
pub mod report;

pub use matching::{match_notes, NoteMatching, OffsetRule, ONSET_TOLERANCE};
pub use report::{evaluate_dataset, evaluate_recording, EvalReport, MeanStd, RecordingScores};

use serde::{Deserialize, Serialize};

use crate::dataset::{sort_notes, NoteEvent, PianoRoll, FPS, PITCH_MIN};
use crate::error::{Error, Result};
use crate::model::Posteriorgram;

/// Decision threshold for binarizing posteriorgrams.
pub const THRESHOLD: f32 = 0.5;

/// Precision, recall, and their harmonic mean, each in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PRF {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PRF {
    /// Builds the triple from a hit count and the two collection sizes;
    /// every 0/0 is defined as 0.
    pub fn new(hits: usize, n_est: usize, n_ref: usize) -> PRF {
        let precision = ratio(hits, n_est);
        let recall = ratio(hits, n_ref);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        PRF { precision, recall, f1 }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Cell-wise activity scores between two rolls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// TP / (TP + FP + FN), the intersection-over-union of active cells.
    pub accuracy: f64,
}

/// Binarizes a posteriorgram: a cell is active iff its value is strictly
/// above the threshold (an exact tie maps to off). The roll runs at the
/// global frame rate, of which the posteriorgram hop is the reciprocal.
pub fn threshold_roll(post: &Posteriorgram, threshold: f32) -> PianoRoll {
    let mut roll = PianoRoll::zeros(post.n_frames(), FPS);
    for (out, &v) in roll.values.data_mut().iter_mut().zip(post.values.data()) {
        if v > threshold {
            *out = 1.0;
        }
    }
    roll
}

/// Decodes a binary roll into notes: each maximal run of active frames
/// `[t0..t1]` in pitch row p becomes a note with pitch p + 21, onset t0/fps,
/// offset (t1+1)/fps. Gaps are never bridged and there is no minimum
/// duration. The result is sorted by (onset, pitch).
pub fn roll_to_notes(roll: &PianoRoll) -> Vec<NoteEvent> {
    let n_frames = roll.n_frames();
    let mut notes = Vec::new();
    for row in 0..roll.values.shape()[0] {
        let pitch = PITCH_MIN + row as u8;
        let mut run_start: Option<usize> = None;
        for t in 0..=n_frames {
            let active = t < n_frames && roll.is_active(row, t);
            match (run_start, active) {
                (None, true) => run_start = Some(t),
                (Some(t0), false) => {
                    notes.push(NoteEvent {
                        pitch,
                        onset: t0 as f64 / roll.fps,
                        offset: t as f64 / roll.fps,
                    });
                    run_start = None;
                }
                _ => {}
            }
        }
    }
    sort_notes(&mut notes);
    notes
}

/// Counts cell-wise true/false positives and negatives between two rolls,
/// padding the shorter one with zeros.
pub fn frame_scores(reference: &PianoRoll, estimate: &PianoRoll) -> FrameScores {
    let n_rows = reference.values.shape()[0].max(estimate.values.shape()[0]);
    let n_frames = reference.n_frames().max(estimate.n_frames());
    let cell = |roll: &PianoRoll, row: usize, t: usize| {
        row < roll.values.shape()[0] && t < roll.n_frames() && roll.is_active(row, t)
    };
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for row in 0..n_rows {
        for t in 0..n_frames {
            match (cell(reference, row, t), cell(estimate, row, t)) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fneg += 1,
                (false, false) => {}
            }
        }
    }
    let prf = PRF::new(tp, tp + fp, tp + fneg);
    FrameScores {
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        accuracy: ratio(tp, tp + fp + fneg),
    }
}

/// Micro average precision: every (pitch, frame) cell is one scored example
/// with a binary label from the reference roll. Cells are ranked by score
/// descending (ties keep their original flat order) and the non-interpolated
/// AP is the mean of precision-at-k over the positive ranks. No positive
/// labels yields 0.
pub fn micro_ap(post: &Posteriorgram, reference: &PianoRoll) -> Result<f64> {
    if post.values.shape() != reference.values.shape() {
        return Err(Error::shape_mismatch(
            "micro_ap",
            format!("{:?}", reference.values.shape()),
            format!("{:?}", post.values.shape()),
        ));
    }
    let scores = post.values.data();
    let labels = reference.values.data();
    let n_pos = labels.iter().filter(|&&v| v > 0.5).count();
    if n_pos == 0 {
        return Ok(0.0);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] > 0.5 {
            hits += 1;
            ap += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(ap / n_pos as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;
    use approx::assert_abs_diff_eq;

    fn post_from(values: Vec<f32>, n_frames: usize) -> Posteriorgram {
        let mut full = vec![0.0f32; 88 * n_frames];
        full[..values.len()].copy_from_slice(&values);
        Posteriorgram::new(Tensor::from_vec(&[88, n_frames], full).unwrap()).unwrap()
    }

    fn roll_from(values: Vec<f32>, n_frames: usize) -> PianoRoll {
        let mut roll = PianoRoll::zeros(n_frames, FPS);
        roll.values.data_mut()[..values.len()].copy_from_slice(&values);
        roll
    }

    #[test]
    fn threshold_is_strictly_above() {
        let post = post_from(vec![0.49, 0.5, 0.51], 3);
        let roll = threshold_roll(&post, THRESHOLD);
        assert!(!roll.is_active(0, 0));
        assert!(!roll.is_active(0, 1), "an exact 0.5 maps to off");
        assert!(roll.is_active(0, 2));
        assert_eq!(roll.active_cells(), 1);
    }

    #[test]
    fn all_below_and_all_above_threshold() {
        let lo = Posteriorgram::new(Tensor::filled(&[88, 4], 0.49f32)).unwrap();
        assert_eq!(threshold_roll(&lo, THRESHOLD).active_cells(), 0);
        let hi = Posteriorgram::new(Tensor::filled(&[88, 4], 0.51f32)).unwrap();
        assert_eq!(threshold_roll(&hi, THRESHOLD).active_cells(), 88 * 4);
    }

    #[test]
    fn empty_roll_decodes_to_no_notes() {
        assert!(roll_to_notes(&PianoRoll::zeros(16, FPS)).is_empty());
    }

    #[test]
    fn single_run_decodes_to_one_note() {
        let mut roll = PianoRoll::zeros(10, FPS);
        let row = 60 - 21;
        roll.values.data_mut()[row * 10 + 1] = 1.0;
        roll.values.data_mut()[row * 10 + 2] = 1.0;
        let notes = roll_to_notes(&roll);
        assert_eq!(notes, vec![NoteEvent { pitch: 60, onset: 0.032, offset: 0.096 }]);
    }

    #[test]
    fn gaps_are_never_bridged() {
        let mut roll = PianoRoll::zeros(8, FPS);
        for t in [0, 1, 3, 4] {
            roll.values.data_mut()[t] = 1.0;
        }
        let notes = roll_to_notes(&roll);
        assert_eq!(notes.len(), 2);
        assert_eq!(notes[0].pitch, 21);
        assert_abs_diff_eq!(notes[0].offset, 2.0 / FPS, epsilon = 0.0);
        assert_abs_diff_eq!(notes[1].onset, 3.0 / FPS, epsilon = 0.0);
    }

    #[test]
    fn run_reaching_the_last_frame_is_closed() {
        let mut roll = PianoRoll::zeros(4, FPS);
        roll.values.data_mut()[3] = 1.0;
        let notes = roll_to_notes(&roll);
        assert_eq!(notes.len(), 1);
        assert_abs_diff_eq!(notes[0].offset, 4.0 / FPS, epsilon = 0.0);
    }

    #[test]
    fn identical_nonempty_rolls_score_ones() {
        let roll = roll_from(vec![0.0, 1.0, 1.0, 0.0], 4);
        let s = frame_scores(&roll, &roll);
        assert_eq!(
            s,
            FrameScores { precision: 1.0, recall: 1.0, f1: 1.0, accuracy: 1.0 }
        );
    }

    #[test]
    fn hand_counted_overlap_example() {
        // ref has 4 active cells, est 3, overlapping in 2.
        let reference = roll_from(vec![1.0, 1.0, 1.0, 1.0, 0.0], 5);
        let estimate = roll_from(vec![1.0, 1.0, 0.0, 0.0, 1.0], 5);
        let s = frame_scores(&reference, &estimate);
        assert_abs_diff_eq!(s.precision, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.recall, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.f1, 4.0 / 7.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.accuracy, 0.4, epsilon = 1e-15);
    }

    #[test]
    fn empty_estimate_scores_zero_by_convention() {
        let reference = roll_from(vec![1.0, 1.0], 2);
        let s = frame_scores(&reference, &PianoRoll::zeros(2, FPS));
        assert_eq!(s, FrameScores { precision: 0.0, recall: 0.0, f1: 0.0, accuracy: 0.0 });
    }

    #[test]
    fn shorter_roll_is_padded_with_zeros() {
        let reference = roll_from(vec![1.0, 1.0, 1.0, 1.0], 4);
        let estimate = roll_from(vec![1.0, 1.0], 2);
        let s = frame_scores(&reference, &estimate);
        assert_abs_diff_eq!(s.precision, 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(s.recall, 0.5, epsilon = 0.0);
        // Swapping the arguments swaps precision and recall.
        let t = frame_scores(&estimate, &reference);
        assert_abs_diff_eq!(t.precision, s.recall, epsilon = 0.0);
        assert_abs_diff_eq!(t.recall, s.precision, epsilon = 0.0);
    }

    #[test]
    fn perfectly_separated_scores_give_unit_ap() {
        let post = post_from(vec![0.9, 0.8, 0.2, 0.1], 4);
        let reference = roll_from(vec![1.0, 1.0, 0.0, 0.0], 4);
        assert_abs_diff_eq!(micro_ap(&post, &reference).unwrap(), 1.0, epsilon = 0.0);
    }

    #[test]
    fn hand_enumerated_ap_example() {
        let post = post_from(vec![0.9, 0.8, 0.3], 3);
        let reference = roll_from(vec![1.0, 0.0, 1.0], 3);
        assert_abs_diff_eq!(micro_ap(&post, &reference).unwrap(), 5.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn all_positive_labels_give_unit_ap() {
        let post = post_from(vec![0.1, 0.9, 0.4], 3);
        let mut reference = PianoRoll::zeros(3, FPS);
        reference.values.fill(1.0);
        assert_abs_diff_eq!(micro_ap(&post, &reference).unwrap(), 1.0, epsilon = 0.0);
    }

    #[test]
    fn no_positive_labels_defines_ap_as_zero() {
        let post = post_from(vec![0.9, 0.8], 2);
        assert_abs_diff_eq!(
            micro_ap(&post, &PianoRoll::zeros(2, FPS)).unwrap(),
            0.0,
            epsilon = 0.0
        );
    }

    #[test]
    fn ap_shape_mismatch_is_rejected() {
        let post = post_from(vec![0.9], 2);
        assert!(micro_ap(&post, &PianoRoll::zeros(3, FPS)).is_err());
    }

    #[test]
    fn ap_is_invariant_under_monotone_score_transforms() {
        let raw = [0.91f32, 0.13, 0.55, 0.42, 0.88, 0.07, 0.66, 0.30];
        let labels = [1.0f32, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        let reference = roll_from(labels.to_vec(), 8);
        let original = micro_ap(&post_from(raw.to_vec(), 8), &reference).unwrap();
        let squashed: Vec<f32> = raw.iter().map(|v| (v * 0.5).powi(3) + 0.01).collect();
        let transformed = micro_ap(&post_from(squashed, 8), &reference).unwrap();
        assert_abs_diff_eq!(original, transformed, epsilon = 0.0);
    }

    proptest::proptest! {
        /// Frame-aligned notes with at least one empty frame between
        /// same-pitch neighbors survive rasterize→decode exactly.
        #[test]
        fn rasterize_then_decode_is_identity_on_frame_aligned_notes(
            raw in proptest::collection::vec((21u8..=108, 0u32..80, 1u32..16), 0..12)
        ) {
            use crate::dataset::notes_to_pianoroll;
            use std::collections::BTreeMap;

            let mut candidates = raw;
            candidates.sort_unstable();
            let mut notes: Vec<NoteEvent> = Vec::new();
            let mut last_end: BTreeMap<u8, u32> = BTreeMap::new();
            for (pitch, start, len) in candidates {
                if last_end.get(&pitch).is_some_and(|&e| start <= e) {
                    continue;
                }
                notes.push(NoteEvent {
                    pitch,
                    onset: f64::from(start) / FPS,
                    offset: f64::from(start + len) / FPS,
                });
                last_end.insert(pitch, start + len);
            }
            sort_notes(&mut notes);

            let roll = notes_to_pianoroll(&notes, 100, FPS);
            proptest::prop_assert_eq!(roll_to_notes(&roll), notes);
        }
    }
}
