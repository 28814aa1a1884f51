//! Band-limited sample-rate conversion with a Kaiser-windowed sinc kernel.

use std::f64::consts::PI;

use crate::dsp::AudioClip;
use crate::error::{Error, Result};

/// Zero crossings of the sinc on each side of the kernel center.
const ZERO_CROSSINGS: usize = 16;
/// Kaiser shape parameter; ~60 dB stopband attenuation.
const KAISER_BETA: f64 = 8.6;

/// Resamples to `target_sr`; output length is `round(len · target/source)`.
/// The signal is treated as zero outside its extent, and each output sample
/// is normalized by its kernel sum so a constant input stays constant away
/// from the edges. Equal rates return the input unchanged.
pub fn resample(clip: &AudioClip, target_sr: u32) -> Result<AudioClip> {
    if target_sr == 0 {
        return Err(Error::config("target_sr", "must be > 0"));
    }
    let source_sr = clip.sample_rate();
    if source_sr == target_sr {
        return Ok(clip.clone());
    }

    let n = clip.len();
    let ratio = f64::from(target_sr) / f64::from(source_sr);
    let out_len = (n as f64 * ratio).round() as usize;
    // Cutoff relative to the source Nyquist; < 1 when downsampling so the
    // kernel also anti-aliases.
    let cutoff = ratio.min(1.0);
    let half_width = ZERO_CROSSINGS as f64 / cutoff;
    let i0_beta = bessel_i0(KAISER_BETA);

    let x = clip.samples();
    let mut out = Vec::with_capacity(out_len);
    for j in 0..out_len {
        let pos = j as f64 / ratio;
        let lo = (pos - half_width).ceil() as i64;
        let hi = (pos + half_width).floor() as i64;
        let mut acc = 0.0f64;
        let mut norm = 0.0f64;
        for i in lo..=hi {
            let d = i as f64 - pos;
            let u = d / half_width;
            let window = bessel_i0(KAISER_BETA * (1.0 - u * u).max(0.0).sqrt()) / i0_beta;
            let k = cutoff * sinc(cutoff * d) * window;
            norm += k;
            if (0..n as i64).contains(&i) {
                acc += f64::from(x[i as usize]) * k;
            }
        }
        out.push(if norm != 0.0 { (acc / norm) as f32 } else { 0.0 });
    }
    AudioClip::new(out, target_sr)
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for k in 1..=64 {
        let f = half / k as f64;
        term *= f * f;
        sum += term;
        if term < sum * 1e-16 {
            break;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::stft_magnitude;
    use approx::assert_abs_diff_eq;

    fn tone(freq: f64, sr: u32, len: usize) -> AudioClip {
        let samples = (0..len)
            .map(|i| (2.0 * PI * freq * i as f64 / f64::from(sr)).cos() as f32)
            .collect();
        AudioClip::new(samples, sr).unwrap()
    }

    #[test]
    fn equal_rates_return_identical_samples() {
        let clip = tone(440.0, 16_000, 1000);
        let out = resample(&clip, 16_000).unwrap();
        assert_eq!(out.samples(), clip.samples());
    }

    #[test]
    fn output_length_follows_the_rounding_formula() {
        let clip = AudioClip::new(vec![0.0; 44_100], 44_100).unwrap();
        assert_eq!(resample(&clip, 16_000).unwrap().len(), 16_000);
        let clip = AudioClip::new(vec![0.0; 999], 48_000).unwrap();
        assert_eq!(resample(&clip, 16_000).unwrap().len(), 333);
    }

    #[test]
    fn zero_target_rate_is_rejected() {
        let clip = AudioClip::new(vec![0.0; 10], 16_000).unwrap();
        assert!(matches!(resample(&clip, 0), Err(Error::Config { .. })));
    }

    #[test]
    fn halving_the_rate_keeps_a_1khz_tone_at_its_bin() {
        let clip = tone(1000.0, 32_000, 64_000);
        let out = resample(&clip, 16_000).unwrap();
        assert_eq!(out.len(), 32_000);
        let s = stft_magnitude(&out, 2048, 512).unwrap();
        // 1 kHz sits at bin 1000/(16000/2048) = 128. Edge frames see the
        // resampler's boundary taper, so check the interior.
        let (bins, frames) = (s.n_bins(), s.n_frames());
        for t in 2..frames - 2 {
            let argmax = (0..bins)
                .max_by(|&a, &b| {
                    s.values.data()[a * frames + t].total_cmp(&s.values.data()[b * frames + t])
                })
                .unwrap();
            assert_eq!(argmax, 128, "frame {t}");
        }
    }

    #[test]
    fn tone_below_the_new_nyquist_survives_44k_downsampling() {
        let clip = tone(5000.0, 44_100, 44_100);
        let out = resample(&clip, 16_000).unwrap();
        let interior = &out.samples()[2000..14_000];
        let rms = (interior.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>()
            / interior.len() as f64)
            .sqrt();
        assert_abs_diff_eq!(rms, 0.707, epsilon = 0.05);
    }

    #[test]
    fn tone_above_the_new_nyquist_is_suppressed() {
        let clip = tone(10_000.0, 44_100, 44_100);
        let out = resample(&clip, 16_000).unwrap();
        let interior = &out.samples()[2000..14_000];
        let rms = (interior.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>()
            / interior.len() as f64)
            .sqrt();
        assert!(rms < 0.02, "aliased energy too high: rms {rms}");
    }

    #[test]
    fn constant_input_stays_constant_in_the_interior() {
        let clip = AudioClip::new(vec![0.5; 48_000], 48_000).unwrap();
        let out = resample(&clip, 16_000).unwrap();
        for &v in &out.samples()[200..15_800] {
            assert_abs_diff_eq!(v, 0.5, epsilon = 1e-6);
        }
    }

    #[test]
    fn empty_input_gives_empty_output() {
        let clip = AudioClip::new(vec![], 44_100).unwrap();
        assert_eq!(resample(&clip, 16_000).unwrap().len(), 0);
    }
}
