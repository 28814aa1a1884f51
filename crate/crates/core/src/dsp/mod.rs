//! Spectrogram frontends: STFT, log-mel and constant-Q, all log-compressed
//! and min-max normalized to [0,1].
//!
//! Everything here computes in f64 and is a pure function of its inputs;
//! the model casts to f32 at its boundary.

pub mod cqt;
pub mod mel;
pub mod stft;

pub use cqt::cqt_default;
pub use mel::mel_spectrogram;
pub use stft::stft_magnitude;

use crate::config::Frontend;
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const SAMPLE_RATE: u32 = 16_000;
pub const WINDOW_LEN: usize = 2048;
pub const HOP: usize = 512;
/// Additive floor inside the log compression.
pub const LOG_EPS: f64 = 1e-8;

pub fn hop_seconds() -> f64 {
    HOP as f64 / SAMPLE_RATE as f64
}

/// Mono audio at a known sample rate.
#[derive(Clone, Debug)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::config("sample_rate", "must be > 0"));
        }
        if let Some(bad) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: format!("audio sample {bad}") });
        }
        Ok(AudioClip { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrogramKind {
    Mel,
    Cqt,
    StftMagnitude,
}

impl SpectrogramKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SpectrogramKind::Mel => "mel",
            SpectrogramKind::Cqt => "cqt",
            SpectrogramKind::StftMagnitude => "stft-magnitude",
        }
    }
}

/// Frequency×time matrix with its axis metadata.
#[derive(Clone, Debug)]
pub struct Spectrogram {
    /// `[F, T]`.
    pub values: Tensor<f64>,
    /// Center frequency of each of the F rows, in Hz.
    pub bin_frequencies: Vec<f64>,
    pub hop_seconds: f64,
    pub kind: SpectrogramKind,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn n_frames(&self) -> usize {
        self.values.shape()[1]
    }
}

/// Computes the configured frontend representation with canonical
/// parameters, conditioned to [0,1].
pub fn compute_frontend(clip: &AudioClip, frontend: Frontend) -> Result<Spectrogram> {
    match frontend {
        Frontend::Mel => mel_spectrogram(clip),
        Frontend::Cqt => cqt_default(clip),
    }
}

/// Log compression followed by min-max normalization over the whole matrix:
/// `L = ln(v + ε)`, output `(L − min L) / (max L − min L)`; a constant input
/// maps to all zeros. Fails on negative input values.
pub fn log_normalize(mut s: Spectrogram) -> Result<Spectrogram> {
    if let Some(index) = s.values.data().iter().position(|&v| v < 0.0) {
        return Err(Error::InvalidMagnitude { value: s.values.data()[index], index });
    }
    let data = s.values.data_mut();
    for v in data.iter_mut() {
        *v = (*v + LOG_EPS).ln();
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in data.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi > lo {
        let span = hi - lo;
        for v in data.iter_mut() {
            *v = (*v - lo) / span;
        }
    } else {
        for v in data.iter_mut() {
            *v = 0.0;
        }
    }
    Ok(s)
}

/// Index folding for reflect padding without edge repetition: `-1 → 1`,
/// `n → n−2`, periodic with period `2(n−1)`.
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    debug_assert!(n > 0);
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

/// Periodic Hann window of length `n`.
pub(crate) fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Pure cosine probe tone. Cosine phase reflects cleanly about sample 0, and
/// lengths with an integer number of half-cycles before the last sample also
/// reflect cleanly on the right, so every frame of the padded signal sees an
/// exact tone.
#[cfg(test)]
pub(crate) fn test_tone(freq: f64, len: usize) -> AudioClip {
    let samples = (0..len)
        .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / SAMPLE_RATE as f64).cos() as f32)
        .collect();
    AudioClip::new(samples, SAMPLE_RATE).unwrap()
}
