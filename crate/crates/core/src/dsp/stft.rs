//! Short-time Fourier transform magnitudes.

use super::{hann_periodic, reflect_index, AudioClip, Spectrogram, SpectrogramKind};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use rustfft::{num_complex::Complex, FftPlanner};

/// Magnitude STFT with frames centered at `t·hop`, reflect padding at the
/// edges and `T = floor(N / hop)` frames. Returns `window_len/2 + 1` bins
/// with `bin_frequencies[k] = k·sr/window_len`.
pub fn stft_magnitude(clip: &AudioClip, window_len: usize, hop: usize) -> Result<Spectrogram> {
    if clip.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let n = clip.len();
    let n_frames = n / hop;
    let n_bins = window_len / 2 + 1;
    let sr = clip.sample_rate() as f64;

    let window = hann_periodic(window_len);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(window_len);

    let mut values = Tensor::zeros(&[n_bins, n_frames]);
    let mut buf = vec![Complex::new(0.0, 0.0); window_len];
    let samples = clip.samples();
    let half = (window_len / 2) as isize;

    for t in 0..n_frames {
        let center = (t * hop) as isize;
        for (i, w) in window.iter().enumerate() {
            let idx = reflect_index(center + i as isize - half, n);
            buf[i] = Complex::new(samples[idx] as f64 * w, 0.0);
        }
        fft.process(&mut buf);
        for k in 0..n_bins {
            values.data_mut()[k * n_frames + t] = buf[k].norm();
        }
    }

    Ok(Spectrogram {
        values,
        bin_frequencies: (0..n_bins).map(|k| k as f64 * sr / window_len as f64).collect(),
        hop_seconds: hop as f64 / sr,
        kind: SpectrogramKind::StftMagnitude,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{test_tone, HOP, SAMPLE_RATE, WINDOW_LEN};
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_clip_gives_zero_matrix_of_expected_shape() {
        let clip = AudioClip::new(vec![0.0; 32_768], SAMPLE_RATE).unwrap();
        let s = stft_magnitude(&clip, WINDOW_LEN, HOP).unwrap();
        assert_eq!(s.values.shape(), &[1025, 64]);
        assert!(s.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_clip_is_an_error() {
        let clip = AudioClip::new(vec![], SAMPLE_RATE).unwrap();
        assert!(matches!(stft_magnitude(&clip, WINDOW_LEN, HOP), Err(Error::EmptyAudio)));
    }

    #[test]
    fn one_khz_tone_peaks_at_bin_128_every_frame() {
        // 1000 Hz · 2048 / 16000 = 128 exactly; the clip length puts an
        // integer number of cycles before each reflection point, so even the
        // edge frames see a clean tone.
        let s = stft_magnitude(&test_tone(1000.0, 32_001), WINDOW_LEN, HOP).unwrap();
        let (n_bins, n_frames) = (s.n_bins(), s.n_frames());
        assert_eq!(n_frames, 62);
        for t in 0..n_frames {
            let argmax = (0..n_bins)
                .max_by(|&a, &b| {
                    s.values.data()[a * n_frames + t]
                        .total_cmp(&s.values.data()[b * n_frames + t])
                })
                .unwrap();
            assert_eq!(argmax, 128, "frame {t}");
        }
        assert_abs_diff_eq!(s.bin_frequencies[128], 1000.0, epsilon = 1e-9);
    }

    #[test]
    fn one_frame_matches_direct_dft_oracle() {
        // Interior frame of a 1 kHz tone, recomputed as a plain O(n²) DFT.
        let clip = test_tone(1000.0, 32_001);
        let s = stft_magnitude(&clip, WINDOW_LEN, HOP).unwrap();
        let t = 30; // center 15360; window fully inside the clip
        let center = t * HOP;
        let window = hann_periodic(WINDOW_LEN);
        for k in [0usize, 64, 128, 500, 1024] {
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for i in 0..WINDOW_LEN {
                let x = clip.samples()[center + i - WINDOW_LEN / 2] as f64 * window[i];
                let phi = -2.0 * std::f64::consts::PI * (k * i) as f64 / WINDOW_LEN as f64;
                re += x * phi.cos();
                im += x * phi.sin();
            }
            let oracle = (re * re + im * im).sqrt();
            let got = s.values.data()[k * s.n_frames() + t];
            assert_abs_diff_eq!(got, oracle, epsilon = 1e-8 * (1.0 + oracle));
        }
    }

    #[test]
    fn frame_count_follows_floor_rule() {
        for n in [512usize, 513, 1023, 327_680, 5000] {
            let clip = AudioClip::new(vec![0.1; n], SAMPLE_RATE).unwrap();
            let s = stft_magnitude(&clip, WINDOW_LEN, HOP).unwrap();
            assert_eq!(s.n_frames(), n / HOP, "N = {n}");
        }
    }

    #[test]
    fn twenty_second_segment_gives_640_frames() {
        let clip = AudioClip::new(vec![0.0; 327_680], SAMPLE_RATE).unwrap();
        let s = stft_magnitude(&clip, WINDOW_LEN, HOP).unwrap();
        assert_eq!(s.values.shape(), &[1025, 640]);
    }
}
