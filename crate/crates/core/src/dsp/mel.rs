//! Mel filter bank and log-mel spectrogram.

use super::{log_normalize, stft_magnitude, AudioClip, Spectrogram, SpectrogramKind};
use super::{HOP, WINDOW_LEN};
use crate::error::{Error, Result};
use crate::nn::tensor::gemm_nn;
use crate::nn::Tensor;

pub const N_MELS: usize = 229;
pub const MEL_FMIN: f64 = 30.0;
pub const MEL_FMAX: f64 = 8000.0;

/// HTK mel scale.
pub fn mel_scale(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_inverse(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters over linear-frequency bins.
#[derive(Debug)]
pub struct FilterBank {
    /// `[F, K]`, all weights ≥ 0, peak 1 per row.
    pub weights: Tensor<f64>,
    /// Peak frequency of each filter, in Hz.
    pub center_frequencies: Vec<f64>,
    /// Half-open `[lo, hi)` column range of each row's nonzero support.
    pub support: Vec<(usize, usize)>,
}

/// Builds `n_mels` triangles with peaks equally spaced on the mel scale
/// between `fmin` and `fmax`; triangle `i` spans peaks `i−1..i+1` and the
/// columns are DFT bins `k·sr/window_len`.
pub fn mel_filterbank(
    n_mels: usize,
    fmin: f64,
    fmax: f64,
    window_len: usize,
    sr: f64,
) -> Result<FilterBank> {
    if fmax > sr / 2.0 {
        return Err(Error::AboveNyquist { fmax, nyquist: sr / 2.0 });
    }
    if !(fmin >= 0.0 && fmin < fmax) {
        return Err(Error::config("fmin", format!("need 0 <= fmin < fmax, got {fmin}..{fmax}")));
    }
    if n_mels == 0 {
        return Err(Error::config("n_mels", "must be >= 1"));
    }

    let n_bins = window_len / 2 + 1;
    let m_lo = mel_scale(fmin);
    let m_hi = mel_scale(fmax);
    // n_mels + 2 corner frequencies: peak of filter i is corner i + 1. The
    // two ends are pinned to fmin/fmax exactly — round-tripping them through
    // the mel formula lands ~1e-12 Hz off and can leak a denormal weight into
    // a bin sitting exactly on the boundary.
    let corners: Vec<f64> = (0..n_mels + 2)
        .map(|i| match i {
            0 => fmin,
            i if i == n_mels + 1 => fmax,
            i => mel_inverse(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64),
        })
        .collect();

    let mut weights = Tensor::zeros(&[n_mels, n_bins]);
    let mut support = Vec::with_capacity(n_mels);
    for r in 0..n_mels {
        let (left, peak, right) = (corners[r], corners[r + 1], corners[r + 2]);
        let (mut lo, mut hi) = (n_bins, 0);
        for k in 0..n_bins {
            let g = k as f64 * sr / window_len as f64;
            let w = ((g - left) / (peak - left))
                .min((right - g) / (right - peak))
                .max(0.0);
            if w > 0.0 {
                weights.data_mut()[r * n_bins + k] = w;
                lo = lo.min(k);
                hi = hi.max(k + 1);
            }
        }
        support.push(if lo < hi { (lo, hi) } else { (0, 0) });
    }

    Ok(FilterBank {
        weights,
        center_frequencies: corners[1..=n_mels].to_vec(),
        support,
    })
}

/// Log-mel spectrogram with the canonical parameters: 229 triangles from
/// 30 Hz to Nyquist applied to the power STFT, then conditioned to [0,1].
pub fn mel_spectrogram(clip: &AudioClip) -> Result<Spectrogram> {
    let sr = clip.sample_rate() as f64;
    let bank = mel_filterbank(N_MELS, MEL_FMIN, MEL_FMAX, WINDOW_LEN, sr)?;
    let stft = stft_magnitude(clip, WINDOW_LEN, HOP)?;

    let (n_bins, n_frames) = (stft.n_bins(), stft.n_frames());
    let mut power = stft.values;
    for v in power.data_mut() {
        *v *= *v;
    }
    let mut values = Tensor::zeros(&[N_MELS, n_frames]);
    gemm_nn(
        N_MELS,
        n_bins,
        n_frames,
        1.0,
        bank.weights.data(),
        power.data(),
        0.0,
        values.data_mut(),
    );

    log_normalize(Spectrogram {
        values,
        bin_frequencies: bank.center_frequencies,
        hop_seconds: stft.hop_seconds,
        kind: SpectrogramKind::Mel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{test_tone, SAMPLE_RATE};
    use approx::assert_abs_diff_eq;

    fn default_bank() -> FilterBank {
        mel_filterbank(N_MELS, MEL_FMIN, MEL_FMAX, WINDOW_LEN, SAMPLE_RATE as f64).unwrap()
    }

    #[test]
    fn single_filter_spans_full_range_peaking_at_mel_midpoint() {
        let bank = mel_filterbank(1, 30.0, 8000.0, WINDOW_LEN, SAMPLE_RATE as f64).unwrap();
        assert_eq!(bank.weights.shape(), &[1, 1025]);
        let expected_center = mel_inverse((mel_scale(30.0) + mel_scale(8000.0)) / 2.0);
        assert_abs_diff_eq!(bank.center_frequencies[0], expected_center, epsilon = 1e-9);
        // Support strictly inside (30, 8000) Hz.
        let (lo, hi) = bank.support[0];
        let hz = |k: usize| k as f64 * SAMPLE_RATE as f64 / WINDOW_LEN as f64;
        assert!(hz(lo) > 30.0 && hz(hi - 1) < 8000.0);
        // Peak weight at the bin nearest the center frequency.
        let peak_bin = (lo..hi)
            .max_by(|&a, &b| bank.weights.data()[a].total_cmp(&bank.weights.data()[b]))
            .unwrap();
        assert!((hz(peak_bin) - expected_center).abs() <= hz(1));
    }

    #[test]
    fn default_bank_shape_and_contiguous_support() {
        let bank = default_bank();
        assert_eq!(bank.weights.shape(), &[229, 1025]);
        for (r, &(lo, hi)) in bank.support.iter().enumerate() {
            assert!(lo < hi, "row {r} is all-zero");
            for k in 0..1025 {
                let w = bank.weights.data()[r * 1025 + k];
                if (lo..hi).contains(&k) {
                    assert!(w > 0.0, "gap inside support of row {r} at bin {k}");
                } else {
                    assert_eq!(w, 0.0, "weight outside support of row {r} at bin {k}");
                }
            }
        }
    }

    #[test]
    fn first_center_matches_independent_mel_oracle() {
        // Oracle: evaluate the mel formula and its inverse directly.
        let m30 = 2595.0 * (1.0f64 + 30.0 / 700.0).log10();
        let m8000 = 2595.0 * (1.0f64 + 8000.0 / 700.0).log10();
        let m_center0 = m30 + (m8000 - m30) / 230.0;
        let oracle = 700.0 * (10f64.powf(m_center0 / 2595.0) - 1.0);
        let bank = default_bank();
        assert_abs_diff_eq!(bank.center_frequencies[0], oracle, epsilon = 1e-9);
    }

    #[test]
    fn consecutive_supports_leave_no_gap() {
        let bank = default_bank();
        for r in 0..bank.support.len() - 1 {
            let (_, hi) = bank.support[r];
            let (lo_next, _) = bank.support[r + 1];
            assert!(lo_next <= hi, "gap between rows {r} and {}", r + 1);
        }
    }

    #[test]
    fn above_nyquist_is_rejected() {
        match mel_filterbank(229, 30.0, 9000.0, WINDOW_LEN, SAMPLE_RATE as f64) {
            Err(Error::AboveNyquist { fmax, nyquist }) => {
                assert_eq!(fmax, 9000.0);
                assert_eq!(nyquist, 8000.0);
            }
            other => panic!("expected Nyquist error, got {other:?}"),
        }
    }

    #[test]
    fn zero_clip_conditions_to_zeros_with_segment_shape() {
        let clip = AudioClip::new(vec![0.0; 327_680], SAMPLE_RATE).unwrap();
        let s = mel_spectrogram(&clip).unwrap();
        assert_eq!(s.values.shape(), &[229, 640]);
        assert!(s.values.data().iter().all(|&v| v == 0.0));
        assert_eq!(s.kind, SpectrogramKind::Mel);
    }

    #[test]
    fn tone_peaks_in_the_band_containing_its_frequency() {
        let bank = default_bank();
        let s = mel_spectrogram(&test_tone(440.0, 32_001)).unwrap();
        let (n_rows, n_frames) = (s.n_bins(), s.n_frames());
        let hz = |k: usize| k as f64 * SAMPLE_RATE as f64 / WINDOW_LEN as f64;
        for t in 0..n_frames {
            let argmax = (0..n_rows)
                .max_by(|&a, &b| {
                    s.values.data()[a * n_frames + t].total_cmp(&s.values.data()[b * n_frames + t])
                })
                .unwrap();
            // The winning filter's support must contain 440 Hz.
            let (lo, hi) = bank.support[argmax];
            assert!(
                hz(lo) <= 440.0 && 440.0 <= hz(hi - 1),
                "frame {t}: row {argmax} supports {:.1}..{:.1} Hz",
                hz(lo),
                hz(hi - 1)
            );
        }
    }
}
