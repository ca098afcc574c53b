//! Evaluation helpers: a synthetic room-impulse-response generator and
//! three desk-scale quality measures (normalized KL fit, log-spectral
//! distance, and an FFT-cepstrum distance surrogate).
//!
//! PESQ and reverberation-decay-tail measures are deliberately not
//! implemented; the cepstral distance here uses FFT cepstra rather than
//! LPC cepstra, so its absolute values are not comparable to published
//! LPC-based CD figures. It is meant for A/B comparisons within this
//! tool only.

use crate::error::{DerevError, Result};
use crate::nctf::kl_divergence;
use crate::signal::Signal;
use crate::stft::Spectrogram;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{LN_10, PI};

/// Parameters for a synthetic exponentially-decaying room impulse
/// response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RirSpec {
    /// Reverberation time in seconds: the decay envelope falls by 60 dB
    /// over this span.
    pub t60: f64,
    /// Direct-to-reverberant energy ratio in dB.
    pub drr_db: f64,
    /// Total length in samples (direct impulse plus tail).
    pub length: usize,
    pub seed: u64,
    pub sample_rate_hz: u32,
}

/// Build a unit direct impulse at sample 0 followed by a seeded Gaussian
/// tail shaped by `exp(−3·ln10·n/(fs·t60))`, with the tail rescaled so
/// the direct-to-tail energy ratio matches `drr_db` exactly.
pub fn synthesize_rir(spec: &RirSpec) -> Result<Signal> {
    if !(spec.t60 > 0.0) || spec.length < 2 || spec.sample_rate_hz == 0 {
        return Err(DerevError::InvalidSpec(format!(
            "rir wants t60 > 0 (got {}), length ≥ 2 (got {}), positive rate (got {})",
            spec.t60, spec.length, spec.sample_rate_hz
        )));
    }
    let fs = spec.sample_rate_hz as f64;
    let decay = 3.0 * LN_10 / (fs * spec.t60);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut tail: Vec<f64> = (1..spec.length)
        .map(|n| {
            // Box-Muller keeps us independent of distribution crates.
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen();
            let g = (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos();
            g * (-decay * n as f64).exp()
        })
        .collect();
    let tail_energy: f64 = tail.iter().map(|v| v * v).sum();
    // Direct path is the unit impulse, so DRR = 1/tail_energy.
    let target_tail_energy = 10f64.powf(-spec.drr_db / 10.0);
    let scale = if tail_energy > 0.0 {
        (target_tail_energy / tail_energy).sqrt()
    } else {
        0.0
    };
    for v in &mut tail {
        *v *= scale;
    }
    let mut samples = Vec::with_capacity(spec.length);
    samples.push(1.0);
    samples.extend(tail);
    Ok(Signal::new(samples, spec.sample_rate_hz))
}

/// Measured direct-to-reverberant ratio in dB of an impulse response
/// whose direct path is sample 0.
pub fn measured_drr_db(rir: &Signal) -> f64 {
    let direct = rir.samples.first().map(|v| v * v).unwrap_or(0.0);
    let tail: f64 = rir.samples.iter().skip(1).map(|v| v * v).sum();
    10.0 * (direct / tail.max(f64::MIN_POSITIVE)).log10()
}

/// RMS over frames of the per-frame RMS of `20·log10((a+δ)/(b+δ))`,
/// in dB. δ is `floor_db` below the louder spectrogram's peak, so zero
/// bins stay finite; two all-zero inputs compare as 0.
pub fn log_spectral_distance(
    a: &Spectrogram,
    b: &Spectrogram,
    floor_db: f64,
) -> Result<f64> {
    if a.values.dim() != b.values.dim() {
        return Err(DerevError::DimensionMismatch(format!(
            "lsd wants equal shapes, got {:?} and {:?}",
            a.values.dim(),
            b.values.dim()
        )));
    }
    let peak = a
        .values
        .iter()
        .chain(b.values.iter())
        .fold(0.0f64, |m, &v| m.max(v));
    if peak == 0.0 {
        return Ok(0.0);
    }
    let delta = peak * 10f64.powf(floor_db / 20.0);
    let mut sq_sum = 0.0;
    for (&av, &bv) in a.values.iter().zip(b.values.iter()) {
        let d = 20.0 * ((av + delta) / (bv + delta)).log10();
        sq_sum += d * d;
    }
    Ok((sq_sum / a.values.len() as f64).sqrt())
}

fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Mean frame-wise distance between truncated FFT cepstra:
/// `(10/ln10)·√2·‖Δc₁..Δc_order‖` averaged over active frames. c₀ is
/// excluded and the log floor is frame-relative, so a pure gain change
/// scores (numerically) zero. Frames are 32 ms rounded up to a power of
/// two, half overlapped; a frame counts as active when the *reference*
/// frame energy is within 40 dB of the loudest reference frame.
pub fn cepstral_distance(reference: &Signal, test: &Signal, order: usize) -> Result<f64> {
    if reference.sample_rate_hz != test.sample_rate_hz {
        return Err(DerevError::SampleRateMismatch {
            expected: reference.sample_rate_hz,
            got: test.sample_rate_hz,
        });
    }
    if reference.len() != test.len() {
        return Err(DerevError::LengthMismatch(format!(
            "cepstral distance wants equal lengths, got {} and {}",
            reference.len(),
            test.len()
        )));
    }
    let fs = reference.sample_rate_hz as f64;
    let frame = ((0.032 * fs) as usize).max(2).next_power_of_two();
    if reference.len() < frame {
        return Err(DerevError::SignalTooShort {
            len: reference.len(),
            min: frame,
        });
    }
    let hop = frame / 2;
    let window = hann(frame);
    let n_frames = 1 + (reference.len() - frame) / hop;

    let frame_energy = |s: &Signal, f: usize| -> f64 {
        let start = f * hop;
        (0..frame)
            .map(|n| {
                let v = s.samples[start + n] * window[n];
                v * v
            })
            .sum()
    };
    let peak_energy = (0..n_frames)
        .map(|f| frame_energy(reference, f))
        .fold(0.0f64, f64::max);
    if peak_energy == 0.0 {
        return Ok(0.0);
    }
    let active_floor = peak_energy * 1e-4;

    let (fwd, _) = crate::signal::fft_pair(frame);
    let spectrum_of = |s: &Signal, f: usize| -> Vec<f64> {
        let start = f * hop;
        let mut buf: Vec<f64> = (0..frame).map(|n| s.samples[start + n] * window[n]).collect();
        let mut out = fwd.make_output_vec();
        fwd.process(&mut buf, &mut out).expect("fft sizes match");
        out.iter().map(|c| c.norm()).collect()
    };

    // c_q = (1/N)·Σ_k log|X(k)|·cos(2πkq/N), folded onto the one-sided
    // spectrum because log|X| is even.
    let half = frame / 2;
    let cepstrum = |mag: &[f64], q: usize| -> f64 {
        let frame_max = mag.iter().fold(0.0f64, |m, &v| m.max(v));
        let floor = frame_max * 1e-9;
        let mut acc = mag[0].max(floor).ln();
        for (k, &m) in mag.iter().enumerate().take(half).skip(1) {
            acc += 2.0 * m.max(floor).ln() * (2.0 * PI * (k * q) as f64 / frame as f64).cos();
        }
        acc += mag[half].max(floor).ln() * (PI * q as f64).cos();
        acc / frame as f64
    };

    let mut total = 0.0;
    let mut active = 0usize;
    for f in 0..n_frames {
        if frame_energy(reference, f) < active_floor {
            continue;
        }
        let mr = spectrum_of(reference, f);
        let mt = spectrum_of(test, f);
        let mut sq = 0.0;
        for q in 1..=order {
            let d = cepstrum(&mr, q) - cepstrum(&mt, q);
            sq += d * d;
        }
        total += (10.0 / LN_10) * (2.0 * sq).sqrt();
        active += 1;
    }
    if active == 0 {
        return Ok(0.0);
    }
    Ok(total / active as f64)
}

/// KL divergence normalized by the observed mass `Σy`, making scores
/// comparable across utterances of different loudness and length.
pub fn kl_fit(y: &Spectrogram, y_hat: &Spectrogram) -> f64 {
    let mass = y.values.sum();
    if mass == 0.0 {
        return 0.0;
    }
    kl_divergence(y, y_hat) / mass
}

/// One evaluated (file, method) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub file: String,
    pub method: String,
    pub kl_fit: f64,
    pub lsd_db: f64,
    pub cd: f64,
}

impl MetricReport {
    pub fn csv_header() -> &'static str {
        "file,method,kl_fit,lsd_db,cd"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.file, self.method, self.kl_fit, self.lsd_db, self.cd
        )
    }
}
