//! Per-recording evaluation and dataset-level aggregation.

use serde::Serialize;

use super::{
    frame_scores, match_notes, micro_ap, roll_to_notes, threshold_roll, FrameScores, OffsetRule,
    PRF, THRESHOLD,
};
use crate::dataset::{notes_to_pianoroll, NoteEvent, FPS};
use crate::error::{Error, Result};
use crate::model::Posteriorgram;

/// All scores for one recording.
#[derive(Clone, Debug, Serialize)]
pub struct RecordingScores {
    pub name: String,
    pub frame: FrameScores,
    pub micro_ap: f64,
    pub note_onset: PRF,
    pub note_with_offset: PRF,
}

/// Mean and population standard deviation over recordings.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PrfSummary {
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct FrameSummary {
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
    pub accuracy: MeanStd,
}

/// Dataset-level report: each metric averaged without weighting across
/// recordings, plus the per-recording rows it was computed from.
#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub frame: FrameSummary,
    pub micro_ap: MeanStd,
    pub note_onset: PrfSummary,
    pub note_with_offset: PrfSummary,
    pub per_recording: Vec<RecordingScores>,
}

/// Scores one recording: the reference notes are rasterized to the
/// posteriorgram's frame count, the posteriorgram is thresholded and decoded,
/// and all metric families are computed against the reference.
pub fn evaluate_recording(
    name: &str,
    reference: &[NoteEvent],
    post: &Posteriorgram,
) -> Result<RecordingScores> {
    let ref_roll = notes_to_pianoroll(reference, post.n_frames(), FPS);
    let est_roll = threshold_roll(post, THRESHOLD);
    let est_notes = roll_to_notes(&est_roll);
    Ok(RecordingScores {
        name: name.to_string(),
        frame: frame_scores(&ref_roll, &est_roll),
        micro_ap: micro_ap(post, &ref_roll)?,
        note_onset: match_notes(reference, &est_notes, OffsetRule::None).prf,
        note_with_offset: match_notes(reference, &est_notes, OffsetRule::Standard).prf,
    })
}

/// Aggregates per-recording scores into unweighted mean ± population std.
pub fn evaluate_dataset(rows: Vec<RecordingScores>) -> Result<EvalReport> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("no recordings to evaluate".into()));
    }
    let stat = |get: fn(&RecordingScores) -> f64| mean_std(rows.iter().map(get));
    Ok(EvalReport {
        frame: FrameSummary {
            precision: stat(|r| r.frame.precision),
            recall: stat(|r| r.frame.recall),
            f1: stat(|r| r.frame.f1),
            accuracy: stat(|r| r.frame.accuracy),
        },
        micro_ap: stat(|r| r.micro_ap),
        note_onset: PrfSummary {
            precision: stat(|r| r.note_onset.precision),
            recall: stat(|r| r.note_onset.recall),
            f1: stat(|r| r.note_onset.f1),
        },
        note_with_offset: PrfSummary {
            precision: stat(|r| r.note_with_offset.precision),
            recall: stat(|r| r.note_with_offset.recall),
            f1: stat(|r| r.note_with_offset.f1),
        },
        per_recording: rows,
    })
}

fn mean_std(values: impl Iterator<Item = f64>) -> MeanStd {
    let values: Vec<f64> = values.collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    MeanStd { mean, std: variance.sqrt() }
}
