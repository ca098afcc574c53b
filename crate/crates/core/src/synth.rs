//! Deterministic synthetic test material: speech-like utterances (voiced
//! syllables through formant resonators, separated by pauses) and
//! speech-shaped noise. Everything is seeded, so test scenes are
//! reproducible bit for bit.

use crate::error::Result;
use crate::signal::Signal;
use crate::stft::{apply_gain_and_synthesize, magnitude, stft_forward, StftConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Two-pole resonator, the classic digital formant filter.
struct Resonator {
    b0: f64,
    a1: f64,
    a2: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq_hz: f64, bandwidth_hz: f64, fs: f64) -> Self {
        let r = (-PI * bandwidth_hz / fs).exp();
        Resonator {
            b0: 1.0 - r,
            a1: 2.0 * r * (2.0 * PI * freq_hz / fs).cos(),
            a2: -r * r,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Generate a seeded speech-like utterance: a run of syllables, each a
/// pitch-drifting impulse train (or a noise burst for the occasional
/// unvoiced one) through three randomized formant resonators under a
/// raised-cosine envelope, with silent gaps in between. Peak-normalized
/// to 0.5.
pub fn speech_like(seed: u64, sample_rate_hz: u32, duration_s: f64) -> Signal {
    let fs = sample_rate_hz as f64;
    let len = (duration_s * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = vec![0.0f64; len];
    let mut n = 0usize;
    while n < len {
        n += (rng.gen_range(0.03..0.12) * fs) as usize;
        if n >= len {
            break;
        }
        let end = (n + (rng.gen_range(0.12..0.28) * fs) as usize).min(len);
        let voiced = rng.gen::<f64>() < 0.8;
        let f0 = rng.gen_range(100.0..220.0);
        let drift = rng.gen_range(-0.15..0.15);
        let mut formants = [
            Resonator::new(rng.gen_range(300.0..800.0), 80.0, fs),
            Resonator::new(rng.gen_range(900.0..2200.0), 120.0, fs),
            Resonator::new(rng.gen_range(2300.0..3200.0), 200.0, fs),
        ];
        let amp = rng.gen_range(0.5..1.0);
        let count = end - n;
        let mut phase = 0.0f64;
        for i in 0..count {
            let pos = i as f64 / count as f64;
            let env = (PI * pos).sin().sqrt();
            let mut src = if voiced {
                phase += f0 * (1.0 + drift * pos) / fs;
                let pulse = if phase >= 1.0 {
                    phase -= 1.0;
                    1.0
                } else {
                    0.0
                };
                pulse + rng.gen_range(-0.05..0.05)
            } else {
                rng.gen_range(-0.4..0.4)
            };
            src *= env;
            let v: f64 = formants.iter_mut().map(|f| f.tick(src)).sum();
            samples[n + i] += amp * v;
        }
        n = end;
    }
    let peak = samples.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak > 0.0 {
        let g = 0.5 / peak;
        for v in &mut samples {
            *v *= g;
        }
    }
    Signal::new(samples, sample_rate_hz)
}

/// Seeded Gaussian white noise via Box-Muller.
pub fn white_noise(seed: u64, sample_rate_hz: u32, len: usize) -> Signal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..len)
        .map(|_| {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
        })
        .collect();
    Signal::new(samples, sample_rate_hz)
}

/// Noise whose long-term spectrum follows the reference signal's:
/// white noise re-weighted per frequency bin by the reference's average
/// magnitude profile. Inputs shorter than one analysis frame fall back
/// to unshaped white noise. The output is not level-calibrated; scale it
/// against the target signal for a desired signal-to-noise ratio.
pub fn speech_shaped_noise(reference: &Signal, seed: u64, len: usize) -> Result<Signal> {
    let noise = white_noise(seed, reference.sample_rate_hz, len);
    let frame = 1024usize;
    if reference.len() < frame || len < frame {
        return Ok(noise);
    }
    let cfg = StftConfig::new(frame, 1)?;
    let ref_mag = magnitude(&stft_forward(reference, &cfg)?);
    let frames = ref_mag.frames() as f64;
    let profile: Vec<f64> = ref_mag
        .values
        .rows()
        .into_iter()
        .map(|row| row.sum() / frames)
        .collect();
    let peak = profile.iter().fold(0.0f64, |m, &v| m.max(v));
    if peak == 0.0 {
        return Ok(noise);
    }
    // Floor the profile so no band is zeroed out entirely.
    let floor = peak * 1e-4;
    let noise_stft = stft_forward(&noise, &cfg)?;
    let gain = Array2::from_shape_fn((noise_stft.bins(), noise_stft.frames()), |(k, _)| {
        profile[k].max(floor) / peak
    });
    apply_gain_and_synthesize(&noise_stft, &gain, 1, reference.sample_rate_hz)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band_energy(sig: &Signal, lo_hz: f64, hi_hz: f64) -> f64 {
        let cfg = StftConfig::new(512, 2).unwrap();
        let spec = magnitude(&stft_forward(sig, &cfg).unwrap());
        let fs = sig.sample_rate_hz as f64;
        let hz_per_bin = fs / 512.0;
        let lo = (lo_hz / hz_per_bin) as usize;
        let hi = ((hi_hz / hz_per_bin) as usize).min(spec.bins() - 1);
        (lo..=hi).map(|k| spec.values.row(k).sum()).sum()
    }

    #[test]
    fn utterance_is_deterministic_and_normalized() {
        let a = speech_like(42, 16000, 1.5);
        let b = speech_like(42, 16000, 1.5);
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.len(), 24000);
        let peak = a.samples.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!((peak - 0.5).abs() < 1e-12);
        let c = speech_like(43, 16000, 1.5);
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn utterance_energy_sits_in_speech_bands() {
        let s = speech_like(7, 16000, 2.0);
        let low = band_energy(&s, 100.0, 2000.0);
        let high = band_energy(&s, 6000.0, 8000.0);
        assert!(low > 10.0 * high, "low {low} vs high {high}");
    }

    #[test]
    fn utterance_has_pauses() {
        let s = speech_like(7, 16000, 2.0);
        let win = 320;
        let rms: Vec<f64> = s
            .samples
            .chunks(win)
            .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64).sqrt())
            .collect();
        let peak = rms.iter().cloned().fold(0.0f64, f64::max);
        let quiet = rms.iter().filter(|&&r| r < 0.05 * peak).count();
        assert!(quiet >= 2, "expected silent stretches, rms peaks {peak}");
    }

    #[test]
    fn shaped_noise_follows_reference_spectrum() {
        let reference = speech_like(11, 16000, 2.0);
        let shaped = speech_shaped_noise(&reference, 5, 16000).unwrap();
        assert_eq!(shaped.len(), 16000);
        let white = white_noise(5, 16000, 16000);
        let ratio = |s: &Signal| band_energy(s, 6000.0, 8000.0) / band_energy(s, 100.0, 2000.0);
        assert!(
            ratio(&shaped) < 0.2 * ratio(&white),
            "shaped {} vs white {}",
            ratio(&shaped),
            ratio(&white)
        );
        let again = speech_shaped_noise(&reference, 5, 16000).unwrap();
        assert_eq!(shaped.samples, again.samples);
    }

    #[test]
    fn short_reference_falls_back_to_white_noise() {
        let tiny = Signal::new(vec![0.1; 100], 16000);
        let n = speech_shaped_noise(&tiny, 3, 500).unwrap();
        assert_eq!(n.samples, white_noise(3, 16000, 500).samples);
    }
}
