//! Forward/inverse STFT with square-root Hann windows at 50% overlap.
//!
//! The same square-root Hann window is applied at analysis and at
//! synthesis, so the effective window after overlap-add is plain Hann,
//! which sums to exactly one at 50% overlap. That makes the pipeline
//! "gain in, gain out": the engines only ever touch non-negative gains,
//! phases pass through untouched.

use crate::error::{DerevError, Result};
use crate::signal::{fft_pair, Cpx, Signal};
use ndarray::Array2;

/// Analysis parameters. `hop` is always `frame_len / 2`; anything else
/// would break perfect reconstruction with the square-root Hann pair.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StftConfig {
    /// Frame length in samples (1024 = 64 ms at 16 kHz).
    pub frame_len: usize,
    /// Hop size in samples; must equal `frame_len / 2`.
    pub hop: usize,
    /// Spectrogram exponent: 1 for magnitude, 2 for power.
    pub power_p: u8,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            frame_len: 1024,
            hop: 512,
            power_p: 1,
        }
    }
}

impl StftConfig {
    pub fn new(frame_len: usize, power_p: u8) -> Result<Self> {
        let cfg = StftConfig {
            frame_len,
            hop: frame_len / 2,
            power_p,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Frame length from a duration in milliseconds at a given rate.
    pub fn from_frame_ms(frame_ms: f64, sample_rate_hz: u32, power_p: u8) -> Result<Self> {
        if !(frame_ms.is_finite() && frame_ms > 0.0) {
            return Err(DerevError::InvalidSpec(format!(
                "frame length {frame_ms} ms is not positive"
            )));
        }
        let mut frame_len = (frame_ms * 1e-3 * sample_rate_hz as f64).round() as usize;
        frame_len += frame_len % 2; // keep it even so hop = frame_len/2 is exact
        Self::new(frame_len, power_p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_len < 2 || self.frame_len % 2 != 0 {
            return Err(DerevError::InvalidSpec(format!(
                "frame_len {} must be an even length of at least 2",
                self.frame_len
            )));
        }
        if self.hop * 2 != self.frame_len {
            return Err(DerevError::InvalidSpec(format!(
                "hop {} must be exactly frame_len/2 = {}",
                self.hop,
                self.frame_len / 2
            )));
        }
        if self.power_p != 1 && self.power_p != 2 {
            return Err(DerevError::InvalidSpec(format!(
                "power_p {} must be 1 or 2",
                self.power_p
            )));
        }
        Ok(())
    }

    /// Number of frequency bins of the one-sided spectrum.
    pub fn bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Number of frames produced for a signal of `len` samples: the tail
    /// is zero-padded so every sample is covered by some frame.
    pub fn frames_for_len(&self, len: usize) -> usize {
        debug_assert!(len >= self.frame_len);
        1 + (len - self.frame_len).div_ceil(self.hop)
    }
}

/// Complex STFT coefficients, bins × frames, plus everything needed to
/// invert them back to the original timeline.
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram {
    pub coeffs: Array2<Cpx>,
    pub config: StftConfig,
    pub original_len: usize,
}

impl ComplexSpectrogram {
    pub fn bins(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn frames(&self) -> usize {
        self.coeffs.ncols()
    }
}

/// Non-negative spectrogram `|y_c|^p`; the common currency of every
/// estimation engine in this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Array2<f64>,
    pub power_p: u8,
}

impl Spectrogram {
    pub fn bins(&self) -> usize {
        self.values.nrows()
    }

    pub fn frames(&self) -> usize {
        self.values.ncols()
    }

    pub fn sum(&self) -> f64 {
        self.values.sum()
    }
}

/// The square-root of a periodic Hann window: w[n] = sin(pi n / N).
pub(crate) fn sqrt_hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| (std::f64::consts::PI * n as f64 / len as f64).sin())
        .collect()
}

/// Forward STFT. The tail is zero-padded to a whole frame so the frame
/// count covers the entire signal, reverberant tail included.
pub fn stft_forward(signal: &Signal, config: &StftConfig) -> Result<ComplexSpectrogram> {
    config.validate()?;
    let n = config.frame_len;
    if signal.len() < n {
        return Err(DerevError::SignalTooShort {
            len: signal.len(),
            min: n,
        });
    }
    let frames = config.frames_for_len(signal.len());
    let bins = config.bins();
    let window = sqrt_hann(n);
    let (fwd, _) = fft_pair(n);

    let mut coeffs = Array2::<Cpx>::zeros((bins, frames));
    let mut buf = vec![0.0f64; n];
    let mut spectrum = fwd.make_output_vec();
    for t in 0..frames {
        let start = t * config.hop;
        for i in 0..n {
            let x = signal.samples.get(start + i).copied().unwrap_or(0.0);
            buf[i] = x * window[i];
        }
        fwd.process(&mut buf, &mut spectrum)
            .expect("buffer lengths match the plan");
        for (k, &c) in spectrum.iter().enumerate() {
            coeffs[(k, t)] = c;
        }
    }
    Ok(ComplexSpectrogram {
        coeffs,
        config: *config,
        original_len: signal.len(),
    })
}

/// Entry-wise `|c|^p` with p taken from the config carried by `spec`.
pub fn magnitude(spec: &ComplexSpectrogram) -> Spectrogram {
    let p = spec.config.power_p;
    let values = spec.coeffs.mapv(|c| {
        let e = c.norm_sqr();
        if p == 2 {
            e
        } else {
            e.sqrt()
        }
    });
    Spectrogram {
        values,
        power_p: p,
    }
}

/// Scale every coefficient by `gain^(1/p)`, keep the phase, then invert
/// with square-root Hann synthesis windows and overlap-add. The output
/// is truncated to the length of the analyzed signal.
pub fn apply_gain_and_synthesize(
    spec: &ComplexSpectrogram,
    gain: &Array2<f64>,
    power_p: u8,
    sample_rate_hz: u32,
) -> Result<Signal> {
    let (bins, frames) = (spec.bins(), spec.frames());
    if gain.dim() != (bins, frames) {
        return Err(DerevError::DimensionMismatch(format!(
            "gain is {:?}, spectrogram is {:?}",
            gain.dim(),
            (bins, frames)
        )));
    }
    let n = spec.config.frame_len;
    let hop = spec.config.hop;
    let window = sqrt_hann(n);
    let (_, inv) = fft_pair(n);
    let inv_scale = 1.0 / n as f64;

    let padded = (frames - 1) * hop + n;
    let mut out = vec![0.0f64; padded];
    let mut spectrum = inv.make_input_vec();
    let mut frame = inv.make_output_vec();
    for t in 0..frames {
        for k in 0..bins {
            let g = gain[(k, t)];
            let amp = if power_p == 2 { g.sqrt() } else { g };
            spectrum[k] = spec.coeffs[(k, t)] * amp;
        }
        // The inverse real FFT requires purely real DC and Nyquist bins;
        // rounding in the forward pass could leave dust there.
        spectrum[0].im = 0.0;
        spectrum[bins - 1].im = 0.0;
        inv.process(&mut spectrum, &mut frame)
            .expect("buffer lengths match the plan");
        let start = t * hop;
        for i in 0..n {
            out[start + i] += frame[i] * inv_scale * window[i];
        }
    }
    out.truncate(spec.original_len);
    Ok(Signal::new(out, sample_rate_hz))
}

/// First sample index (inclusive) and one-past-last index of the region
/// where overlapping Hann windows sum to exactly one, i.e. where the
/// round trip is exact up to rounding.
pub fn full_overlap_region(spec: &ComplexSpectrogram) -> (usize, usize) {
    let hop = spec.config.hop;
    let end = (spec.frames() * hop).min(spec.original_len);
    (hop.min(end), end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn rand_signal(len: usize, seed: u64) -> Signal {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Signal::new((0..len).map(|_| rng.gen_range(-0.9..0.9)).collect(), 16000)
    }

    #[test]
    fn frame_count_covers_padded_tail() {
        let cfg = StftConfig::default();
        let spec = stft_forward(&rand_signal(16000, 1), &cfg).unwrap();
        assert_eq!(spec.frames(), 31);
        assert_eq!(spec.bins(), 513);
    }

    #[test]
    fn zero_signal_gives_zero_coefficients() {
        let cfg = StftConfig::new(256, 1).unwrap();
        let spec = stft_forward(&Signal::new(vec![0.0; 2048], 16000), &cfg).unwrap();
        assert!(spec.coeffs.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn too_short_signal_is_refused() {
        let cfg = StftConfig::default();
        let err = stft_forward(&Signal::new(vec![0.0; 1023], 16000), &cfg).unwrap_err();
        assert!(matches!(err, DerevError::SignalTooShort { .. }));
    }

    #[test]
    fn bin_centered_sinusoid_concentrates_in_main_lobe() {
        let cfg = StftConfig::new(1024, 2).unwrap();
        let bin = 10usize;
        let f = bin as f64 / 1024.0;
        let sig = Signal::new(
            (0..8192)
                .map(|n| (2.0 * std::f64::consts::PI * f * n as f64).sin())
                .collect(),
            16000,
        );
        let spec = stft_forward(&sig, &cfg).unwrap();
        // Interior frames: skip first and last, which see the padded tail
        // or the signal edge.
        for t in 1..spec.frames() - 1 {
            let total: f64 = (0..spec.bins()).map(|k| spec.coeffs[(k, t)].norm_sqr()).sum();
            let lobe: f64 = (bin - 1..=bin + 1)
                .map(|k| spec.coeffs[(k, t)].norm_sqr())
                .sum();
            assert!(
                lobe >= 0.90 * total,
                "frame {t}: main lobe holds only {:.1}% of the energy",
                100.0 * lobe / total
            );
        }
    }

    #[test]
    fn magnitude_follows_power_exponent() {
        let mut coeffs = Array2::<Cpx>::zeros((3, 2));
        coeffs[(1, 1)] = Cpx::new(3.0, 4.0);
        let base = ComplexSpectrogram {
            coeffs,
            config: StftConfig::new(4, 1).unwrap(),
            original_len: 8,
        };
        assert_abs_diff_eq!(magnitude(&base).values[(1, 1)], 5.0, epsilon = 1e-12);
        let mut squared = base.clone();
        squared.config.power_p = 2;
        assert_abs_diff_eq!(magnitude(&squared).values[(1, 1)], 25.0, epsilon = 1e-12);
        assert_eq!(magnitude(&base).values[(0, 0)], 0.0);
    }

    #[test]
    fn unit_gain_round_trip_is_exact_on_full_overlap() {
        let cfg = StftConfig::default();
        let sig = rand_signal(16000, 2);
        let spec = stft_forward(&sig, &cfg).unwrap();
        let ones = Array2::<f64>::ones((spec.bins(), spec.frames()));
        let back = apply_gain_and_synthesize(&spec, &ones, cfg.power_p, 16000).unwrap();
        assert_eq!(back.len(), sig.len());
        let (lo, hi) = full_overlap_region(&spec);
        for n in lo..hi {
            assert_abs_diff_eq!(back.samples[n], sig.samples[n], epsilon = 1e-6);
        }
    }

    #[test]
    fn zero_gain_silences_everything() {
        let cfg = StftConfig::new(256, 1).unwrap();
        let sig = rand_signal(4096, 3);
        let spec = stft_forward(&sig, &cfg).unwrap();
        let zeros = Array2::<f64>::zeros((spec.bins(), spec.frames()));
        let out = apply_gain_and_synthesize(&spec, &zeros, 1, 16000).unwrap();
        assert!(out.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn power_domain_gain_acts_as_its_square_root() {
        let cfg = StftConfig::new(512, 2).unwrap();
        let sig = rand_signal(8192, 4);
        let spec = stft_forward(&sig, &cfg).unwrap();
        let quarter = Array2::<f64>::from_elem((spec.bins(), spec.frames()), 0.25);
        let out = apply_gain_and_synthesize(&spec, &quarter, 2, 16000).unwrap();
        let (lo, hi) = full_overlap_region(&spec);
        for n in lo..hi {
            assert_abs_diff_eq!(out.samples[n], 0.5 * sig.samples[n], epsilon = 1e-6);
        }
    }

    #[test]
    fn gain_shape_mismatch_is_an_error() {
        let cfg = StftConfig::new(256, 1).unwrap();
        let spec = stft_forward(&rand_signal(2048, 5), &cfg).unwrap();
        let bad = Array2::<f64>::ones((spec.bins(), spec.frames() + 1));
        assert!(matches!(
            apply_gain_and_synthesize(&spec, &bad, 1, 16000),
            Err(DerevError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn one_sided_power_sum_matches_windowed_energy() {
        let cfg = StftConfig::new(512, 2).unwrap();
        let sig = rand_signal(6000, 6);
        let spec = stft_forward(&sig, &cfg).unwrap();
        let pow = magnitude(&spec);
        let bins = spec.bins();
        // One-sided Parseval: interior bins count twice, DC/Nyquist once.
        let mut lhs = 0.0;
        for t in 0..spec.frames() {
            for k in 0..bins {
                let w = if k == 0 || k == bins - 1 { 1.0 } else { 2.0 };
                lhs += w * pow.values[(k, t)];
            }
        }
        lhs /= cfg.frame_len as f64;
        let window = sqrt_hann(cfg.frame_len);
        let mut rhs = 0.0;
        for t in 0..spec.frames() {
            for i in 0..cfg.frame_len {
                let x = sig.samples.get(t * cfg.hop + i).copied().unwrap_or(0.0);
                rhs += (x * window[i]).powi(2);
            }
        }
        assert!((lhs - rhs).abs() <= 1e-6 * rhs.max(1.0), "{lhs} vs {rhs}");
    }
}
