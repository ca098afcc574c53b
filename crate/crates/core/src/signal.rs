//! Mono time-domain signals and WAV file plumbing.
//!
//! Only single-channel RIFF/WAVE files are handled: PCM 16-bit and IEEE
//! float 32-bit on read, always PCM 16-bit on write. No resampling is
//! performed anywhere; callers that care about the rate check it with
//! [`Signal::expect_rate`].

use crate::error::{DerevError, Result};
use realfft::num_complex::Complex;
use realfft::RealFftPlanner;
use std::path::Path;

/// A mono signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    /// Amplitudes, nominally in [-1, 1].
    pub samples: Vec<f64>,
    /// Sampling rate in Hz.
    pub sample_rate_hz: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        Signal {
            samples,
            sample_rate_hz,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Root-mean-square amplitude; zero for an empty signal.
    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let e: f64 = self.samples.iter().map(|x| x * x).sum();
        (e / self.samples.len() as f64).sqrt()
    }

    /// Largest absolute sample value.
    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    /// Hard error when the signal was recorded at a different rate than
    /// the pipeline expects. We never resample.
    pub fn expect_rate(&self, expected: u32) -> Result<()> {
        if self.sample_rate_hz != expected {
            return Err(DerevError::SampleRateMismatch {
                expected,
                got: self.sample_rate_hz,
            });
        }
        Ok(())
    }
}

fn map_hound_err(e: hound::Error) -> DerevError {
    match e {
        hound::Error::IoError(io) => DerevError::Io(io),
        other => DerevError::CorruptHeader(other.to_string()),
    }
}

/// Read a mono WAV file into a [`Signal`].
///
/// 16-bit PCM samples are scaled by 1/32768; 32-bit float samples are
/// taken verbatim. Anything multi-channel or in another encoding is
/// rejected rather than silently mixed down.
pub fn read_wav<P: AsRef<Path>>(path: P) -> Result<Signal> {
    let mut reader = hound::WavReader::open(path).map_err(map_hound_err)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(DerevError::UnsupportedFormat(format!(
            "{} channels; only mono is supported",
            spec.channels
        )));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0).map_err(map_hound_err))
            .collect::<Result<_>>()?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from).map_err(map_hound_err))
            .collect::<Result<_>>()?,
        (fmt, bits) => {
            return Err(DerevError::UnsupportedFormat(format!(
                "{bits}-bit {fmt:?}; only 16-bit PCM and 32-bit float are supported"
            )))
        }
    };
    if samples.is_empty() {
        return Err(DerevError::CorruptHeader("file contains no samples".into()));
    }
    for (index, &x) in samples.iter().enumerate() {
        if !x.is_finite() {
            return Err(DerevError::NonFiniteSample { index });
        }
    }
    Ok(Signal::new(samples, spec.sample_rate))
}

/// Write a [`Signal`] as 16-bit PCM mono WAV.
///
/// Samples are clamped to [-1, 1] and then quantized, so a round trip
/// reproduces in-range samples within one quantization step (1/32768).
pub fn write_wav<P: AsRef<Path>>(signal: &Signal, path: P) -> Result<()> {
    for (index, &x) in signal.samples.iter().enumerate() {
        if !x.is_finite() {
            return Err(DerevError::NonFiniteSample { index });
        }
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(map_hound_err)?;
    for &x in &signal.samples {
        let q = (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(map_hound_err)?;
    }
    writer.finalize().map_err(map_hound_err)?;
    Ok(())
}

/// Full linear convolution of a signal with an impulse response,
/// `out[n] = Σ_m rir[m]·signal[n−m]`, length `len(s)+len(h)−1`.
///
/// Implemented by pointwise multiplication of zero-padded real FFTs,
/// which keeps long room responses cheap.
pub fn convolve_time(signal: &Signal, rir: &Signal) -> Result<Signal> {
    if signal.sample_rate_hz != rir.sample_rate_hz {
        return Err(DerevError::SampleRateMismatch {
            expected: signal.sample_rate_hz,
            got: rir.sample_rate_hz,
        });
    }
    if signal.is_empty() || rir.is_empty() {
        return Ok(Signal::new(Vec::new(), signal.sample_rate_hz));
    }
    let out_len = signal.len() + rir.len() - 1;
    let n = out_len.next_power_of_two();

    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut a = vec![0.0; n];
    a[..signal.len()].copy_from_slice(&signal.samples);
    let mut b = vec![0.0; n];
    b[..rir.len()].copy_from_slice(&rir.samples);

    let mut fa = fwd.make_output_vec();
    let mut fb = fwd.make_output_vec();
    fwd.process(&mut a, &mut fa).expect("fft length prepared above");
    fwd.process(&mut b, &mut fb).expect("fft length prepared above");
    for (x, y) in fa.iter_mut().zip(fb.iter()) {
        *x *= y;
    }
    let mut out = inv.make_output_vec();
    inv.process(&mut fa, &mut out).expect("fft length prepared above");

    let scale = 1.0 / n as f64;
    let samples = out[..out_len].iter().map(|&x| x * scale).collect();
    Ok(Signal::new(samples, signal.sample_rate_hz))
}

/// Shared helper: plan a one-sided real FFT pair of the given length.
pub(crate) fn fft_pair(
    n: usize,
) -> (
    std::sync::Arc<dyn realfft::RealToComplex<f64>>,
    std::sync::Arc<dyn realfft::ComplexToReal<f64>>,
) {
    let mut planner = RealFftPlanner::<f64>::new();
    (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
}

pub(crate) type Cpx = Complex<f64>;
