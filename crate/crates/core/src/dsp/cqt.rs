//! Constant-Q transform by direct time-domain inner products.

use super::{hann_periodic, log_normalize, reflect_index, AudioClip, Spectrogram, SpectrogramKind};
use super::HOP;
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const CQT_FMIN: f64 = 27.5;
pub const CQT_BINS: usize = 176;
pub const BINS_PER_OCTAVE: usize = 24;

struct Atom {
    re: Vec<f64>,
    im: Vec<f64>,
}

/// `values[k][t] = |⟨signal centered at t·hop, atom k⟩|` where atom `k` is a
/// Hann-windowed, L1-normalized complex exponential at
/// `f_k = fmin·2^(k/bpo)` with window length `ceil(Q·sr/f_k)`,
/// `Q = 1/(2^(1/bpo) − 1)`. Output is conditioned to [0,1].
pub fn cqt(
    clip: &AudioClip,
    fmin: f64,
    n_bins: usize,
    bins_per_octave: usize,
    hop: usize,
) -> Result<Spectrogram> {
    log_normalize(cqt_raw(clip, fmin, n_bins, bins_per_octave, hop)?)
}

/// The transform before log compression and normalization.
pub(crate) fn cqt_raw(
    clip: &AudioClip,
    fmin: f64,
    n_bins: usize,
    bins_per_octave: usize,
    hop: usize,
) -> Result<Spectrogram> {
    if clip.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let sr = clip.sample_rate() as f64;
    let freqs: Vec<f64> = (0..n_bins)
        .map(|k| fmin * 2f64.powf(k as f64 / bins_per_octave as f64))
        .collect();
    let top = *freqs.last().unwrap();
    if top >= sr / 2.0 {
        return Err(Error::AboveNyquist { fmax: top, nyquist: sr / 2.0 });
    }

    let q = 1.0 / (2f64.powf(1.0 / bins_per_octave as f64) - 1.0);
    let atoms: Vec<Atom> = freqs
        .iter()
        .map(|&f| {
            let len = (q * sr / f).ceil() as usize;
            let window = hann_periodic(len);
            let norm: f64 = window.iter().sum();
            let mut re = Vec::with_capacity(len);
            let mut im = Vec::with_capacity(len);
            for (n, w) in window.iter().enumerate() {
                let phi = -2.0 * std::f64::consts::PI * f * n as f64 / sr;
                re.push(w * phi.cos() / norm);
                im.push(w * phi.sin() / norm);
            }
            Atom { re, im }
        })
        .collect();

    let n = clip.len();
    let n_frames = n / hop;
    let samples = clip.samples();
    let mut values = Tensor::zeros(&[n_bins, n_frames]);
    for (k, atom) in atoms.iter().enumerate() {
        let len = atom.re.len();
        let half = (len / 2) as isize;
        for t in 0..n_frames {
            let center = (t * hop) as isize;
            let (mut acc_re, mut acc_im) = (0.0f64, 0.0f64);
            let start = center - half;
            if start >= 0 && start as usize + len <= n {
                // Fully supported window: no index folding needed.
                let s = &samples[start as usize..start as usize + len];
                for i in 0..len {
                    let x = s[i] as f64;
                    acc_re += x * atom.re[i];
                    acc_im += x * atom.im[i];
                }
            } else {
                for i in 0..len {
                    let x = samples[reflect_index(start + i as isize, n)] as f64;
                    acc_re += x * atom.re[i];
                    acc_im += x * atom.im[i];
                }
            }
            values.data_mut()[k * n_frames + t] = acc_re.hypot(acc_im);
        }
    }

    Ok(Spectrogram {
        values,
        bin_frequencies: freqs,
        hop_seconds: hop as f64 / sr,
        kind: SpectrogramKind::Cqt,
    })
}

/// CQT with the canonical parameters: 27.5 Hz start, 176 bins, 24 per octave.
pub fn cqt_default(clip: &AudioClip) -> Result<Spectrogram> {
    cqt(clip, CQT_FMIN, CQT_BINS, BINS_PER_OCTAVE, HOP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{test_tone, SAMPLE_RATE};
    use approx::assert_abs_diff_eq;

    fn per_frame_argmax(s: &Spectrogram) -> Vec<usize> {
        let (n_bins, n_frames) = (s.n_bins(), s.n_frames());
        (0..n_frames)
            .map(|t| {
                (0..n_bins)
                    .max_by(|&a, &b| {
                        s.values.data()[a * n_frames + t]
                            .total_cmp(&s.values.data()[b * n_frames + t])
                    })
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn tone_at_440_hz_peaks_at_bin_96_every_frame() {
        // 24·log2(440/27.5) = 24·4 = 96.
        let s = cqt_default(&test_tone(440.0, 32_001)).unwrap();
        for (t, argmax) in per_frame_argmax(&s).into_iter().enumerate() {
            assert_eq!(argmax, 96, "frame {t}");
        }
        assert_abs_diff_eq!(s.bin_frequencies[96], 440.0, epsilon = 1e-9);
    }

    #[test]
    fn tone_at_fmin_peaks_at_bin_zero_every_frame() {
        let s = cqt_default(&test_tone(27.5, 32_001)).unwrap();
        for (t, argmax) in per_frame_argmax(&s).into_iter().enumerate() {
            assert_eq!(argmax, 0, "frame {t}");
        }
    }

    #[test]
    fn zero_clip_conditions_to_zeros() {
        let clip = AudioClip::new(vec![0.0; 16_384], SAMPLE_RATE).unwrap();
        let s = cqt_default(&clip).unwrap();
        assert_eq!(s.values.shape(), &[176, 32]);
        assert!(s.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_clip_and_high_top_bin_are_errors() {
        let empty = AudioClip::new(vec![], SAMPLE_RATE).unwrap();
        assert!(matches!(cqt_default(&empty), Err(Error::EmptyAudio)));
        let clip = test_tone(100.0, 4096);
        // 27.5·2^(239/24) ≈ 27.4 kHz, far above the 8 kHz Nyquist.
        assert!(matches!(
            cqt(&clip, CQT_FMIN, 240, BINS_PER_OCTAVE, HOP),
            Err(Error::AboveNyquist { .. })
        ));
    }

    #[test]
    fn q_factor_and_longest_window_match_closed_form() {
        // Reference value computed independently with Python's math module.
        let q = 1.0 / (2f64.powf(1.0 / 24.0) - 1.0);
        assert_abs_diff_eq!(q, 34.127_087_708_920_56, epsilon = 1e-10);
        let len0 = (q * 16000.0 / 27.5).ceil() as usize;
        assert_eq!(len0, 19_856);
    }

    #[test]
    fn interior_frame_matches_direct_oracle() {
        // Recompute one raw coefficient with an explicit loop over the
        // definition: Hann window, complex exponential, L1 normalization.
        let clip = test_tone(440.0, 32_001);
        let s = cqt_raw(&clip, CQT_FMIN, CQT_BINS, BINS_PER_OCTAVE, HOP).unwrap();

        let k = 96;
        let f = 27.5 * 2f64.powf(k as f64 / 24.0);
        let q = 1.0 / (2f64.powf(1.0 / 24.0) - 1.0);
        let len = (q * 16000.0 / f).ceil() as usize;
        let t = 30; // window fully inside the clip
        let start = t * HOP - len / 2;
        let mut norm = 0.0;
        let (mut re, mut im) = (0.0f64, 0.0f64);
        for i in 0..len {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos();
            norm += w;
            let x = clip.samples()[start + i] as f64 * w;
            let phi = -2.0 * std::f64::consts::PI * f * i as f64 / 16000.0;
            re += x * phi.cos();
            im += x * phi.sin();
        }
        let oracle = (re * re + im * im).sqrt() / norm;
        let got = s.values.data()[k * s.n_frames() + t];
        assert_abs_diff_eq!(got, oracle, epsilon = 1e-12 * (1.0 + oracle.abs()));
    }
}
