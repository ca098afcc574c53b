//! The convolutive transfer-function model in the magnitude STFT domain
//! and the baseline estimator built directly on it.
//!
//! A reverberant spectrogram is modeled as a causal per-frequency
//! convolution of the clean spectrogram with a short non-negative filter:
//!
//! `ŷ(k,t) = Σ_{τ=0}^{L_h−1} h(k,τ)·s(k,t−τ)`
//!
//! Both `h` and `s` are estimated by alternating multiplicative updates
//! that minimize the generalized KL divergence between `y` and `ŷ` plus
//! an ℓ1 penalty on `s`. The clean spectrogram is kept K×T (same shape
//! as `y`) with the convolution zero-padded below the first frame, so
//! all matrices stay congruent and the gain functions can index the
//! whole utterance.

use crate::config::EngineConfig;
use crate::error::{DerevError, Result};
use crate::ops;
use crate::report::FitReport;
use crate::stft::Spectrogram;
use ndarray::Array2;

/// Added to every denominator to avoid division by zero.
pub const EPS: f64 = 1e-12;

/// Sub-band filter magnitudes, one row per frequency bin, one column
/// per STFT-domain tap.
#[derive(Debug, Clone, PartialEq)]
pub struct RirModel {
    pub h: Array2<f64>,
}

impl RirModel {
    pub fn bins(&self) -> usize {
        self.h.nrows()
    }

    pub fn taps(&self) -> usize {
        self.h.ncols()
    }
}

/// Sparsity weight for the ℓ1 term on the clean spectrogram or the
/// activations. With `auto_scale` the weight is derived from the data
/// as `0.1/(K·T)·Σy`, computed once per run from the input spectrogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityConfig {
    pub lambda: f64,
    pub auto_scale: bool,
}

impl SparsityConfig {
    pub fn auto() -> Self {
        SparsityConfig {
            lambda: 0.0,
            auto_scale: true,
        }
    }

    pub fn fixed(lambda: f64) -> Self {
        SparsityConfig {
            lambda,
            auto_scale: false,
        }
    }

    /// The effective weight for a given input spectrogram.
    pub fn resolve(&self, y: &Spectrogram) -> f64 {
        if self.auto_scale {
            let (k, t) = y.values.dim();
            0.1 / (k as f64 * t as f64) * y.values.sum()
        } else {
            self.lambda
        }
    }
}

/// Linearly decaying filter initialization: every row is
/// `[1, (L_h−1)/L_h, …, 1/L_h]`, identical across frequencies.
pub fn init_rir(bins: usize, taps: usize) -> RirModel {
    assert!(bins >= 1 && taps >= 1, "init_rir needs K ≥ 1 and L_h ≥ 1");
    let mut h = Array2::<f64>::zeros((bins, taps));
    for k in 0..bins {
        for tau in 0..taps {
            h[(k, tau)] = (taps - tau) as f64 / taps as f64;
        }
    }
    RirModel { h }
}

/// Causal row-wise convolution of a clean spectrogram with the filter.
pub fn rowwise_convolve(s: &Spectrogram, h: &RirModel) -> Result<Spectrogram> {
    if s.bins() != h.bins() {
        return Err(DerevError::DimensionMismatch(format!(
            "spectrogram has {} rows, filter has {}",
            s.bins(),
            h.bins()
        )));
    }
    Ok(Spectrogram {
        values: ops::conv_rows(&s.values, &h.h),
        power_p: s.power_p,
    })
}

/// Generalized KL divergence `Σ y·log(y/ŷ) + ŷ − y` with the standard
/// conventions `0·log(0/a) = 0` and `y>0, ŷ=0 → +∞`.
pub fn kl_divergence(y: &Spectrogram, y_hat: &Spectrogram) -> f64 {
    assert_eq!(
        y.values.dim(),
        y_hat.values.dim(),
        "kl_divergence requires equal dimensions"
    );
    kl_raw(&y.values, &y_hat.values)
}

pub(crate) fn kl_raw(y: &Array2<f64>, y_hat: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    for (&yv, &hv) in y.iter().zip(y_hat.iter()) {
        debug_assert!(yv >= 0.0 && hv >= 0.0);
        if yv > 0.0 {
            if hv > 0.0 {
                total += yv * (yv / hv).ln() + hv - yv;
            } else {
                return f64::INFINITY;
            }
        } else {
            total += hv;
        }
    }
    total
}

/// One multiplicative filter update:
/// `h'(k,τ) = h(k,τ)·[Σ_t y(k,t)s(k,t−τ)/ỹ(k,t)]/[Σ_t s(k,t−τ)]`
/// with `ỹ` recomputed from the passed-in `h` and `s`.
pub fn baseline_update_h(
    h: &RirModel,
    s: &Spectrogram,
    y: &Spectrogram,
    eps: f64,
) -> Result<RirModel> {
    check_model_dims(h, s, y)?;
    Ok(RirModel {
        h: ops::update_h_blocks(&h.h, &y.values, &s.values, eps),
    })
}

/// One multiplicative clean-spectrogram update:
/// `s'(k,t) = s(k,t)·[Σ_τ y(k,t+τ)h(k,τ)/ỹ(k,t+τ)]/[Σ_τ h(k,τ) + λ]`.
///
/// Both sums over τ run only while `t+τ` stays inside the utterance, so
/// an exact model input is an exact fixed point at λ=0.
pub fn baseline_update_s(
    s: &Spectrogram,
    h: &RirModel,
    y: &Spectrogram,
    lambda: f64,
    eps: f64,
) -> Result<Spectrogram> {
    check_model_dims(h, s, y)?;
    let y_tilde = ops::conv_rows(&s.values, &h.h);
    let a = ops::ratio(&y.values, &y_tilde, eps);
    let num = ops::forward_corr(&a, &h.h);
    let den = ops::forward_mass(&h.h, s.bins(), s.frames());
    let mut out = s.values.clone();
    ndarray::Zip::from(&mut out)
        .and(&num)
        .and(&den)
        .for_each(|sv, &n, &d| *sv *= n / (d + lambda + eps));
    Ok(Spectrogram {
        values: out,
        power_p: s.power_p,
    })
}

fn check_model_dims(h: &RirModel, s: &Spectrogram, y: &Spectrogram) -> Result<()> {
    if s.values.dim() != y.values.dim() || s.bins() != h.bins() {
        return Err(DerevError::DimensionMismatch(format!(
            "y {:?}, s {:?}, h {:?}",
            y.values.dim(),
            s.values.dim(),
            h.h.dim()
        )));
    }
    Ok(())
}

/// Result of [`normalize_scale`]: the rescaled parameters plus the
/// factors a caller must fold into the remaining matrices to keep the
/// model products unchanged.
#[derive(Debug, Clone)]
pub struct ScaleNormalization {
    pub h: RirModel,
    /// Basis with columns summed to one and the filter-row compensation
    /// folded in (present iff a basis was passed).
    pub w: Option<Array2<f64>>,
    /// Multiply activation row r by this to keep W·X unchanged.
    pub x_row_scales: Option<Vec<f64>>,
    /// First-column values of the incoming filter; multiply a standalone
    /// clean-spectrogram row k by this to keep h∗s unchanged.
    pub h_row_scales: Vec<f64>,
}

/// Rescale the model so the filter's first column is all ones and every
/// basis column sums to one, in that documented order: basis columns
/// first, then filter rows with the compensation folded into the basis
/// rows. The returned scale factors let callers preserve W·X (via the
/// activations) and h∗s (via a standalone clean estimate) exactly.
pub fn normalize_scale(h: &RirModel, w: Option<&Array2<f64>>) -> Result<ScaleNormalization> {
    // Step 1: columns of W to unit sum; record the sums for X.
    let (mut w_out, x_row_scales) = match w {
        Some(w) => {
            let mut w = w.clone();
            let mut sums = Vec::with_capacity(w.ncols());
            for mut col in w.columns_mut() {
                let s: f64 = col.sum();
                if s > 0.0 {
                    col.mapv_inplace(|v| v / s);
                    sums.push(s);
                } else {
                    // Dead atom: leave it alone rather than divide by zero.
                    sums.push(1.0);
                }
            }
            (Some(w), Some(sums))
        }
        None => (None, None),
    };

    // Step 2: filter rows divided by their first tap; compensation goes
    // into the basis rows (replicated blocks share the base row scale).
    let mut h_out = h.h.clone();
    let bins = h_out.nrows();
    let mut h_row_scales = Vec::with_capacity(bins);
    for (k, mut row) in h_out.rows_mut().into_iter().enumerate() {
        let g = row[0];
        if !(g > 0.0) {
            return Err(DerevError::DegenerateFirstColumn { row: k });
        }
        row.mapv_inplace(|v| v / g);
        h_row_scales.push(g);
    }
    if let Some(w) = w_out.as_mut() {
        for (f, mut row) in w.rows_mut().into_iter().enumerate() {
            let g = h_row_scales[f % bins];
            row.mapv_inplace(|v| v * g);
        }
    }
    Ok(ScaleNormalization {
        h: RirModel { h: h_out },
        w: w_out,
        x_row_scales,
        h_row_scales,
    })
}

/// Enforce non-increasing filter rows by a sequential min scan:
/// `h(k,τ) ← min(h(k,τ), h(k,τ−1))` for τ = 1..L_h−1.
pub fn clamp_decay(h: &RirModel) -> RirModel {
    let mut out = h.h.clone();
    for mut row in out.rows_mut() {
        for tau in 1..row.len() {
            if row[tau] > row[tau - 1] {
                row[tau] = row[tau - 1];
            }
        }
    }
    RirModel { h: out }
}

/// The regularized baseline cost `KL(y | h∗s) + λ·Σs`.
pub fn baseline_cost(y: &Spectrogram, s: &Spectrogram, h: &RirModel, lambda: f64) -> (f64, f64, f64) {
    let y_tilde = ops::conv_rows(&s.values, &h.h);
    let kl = kl_raw(&y.values, &y_tilde);
    let sparsity = lambda * s.values.sum();
    (kl + sparsity, kl, sparsity)
}

/// Output of a full baseline run.
#[derive(Debug, Clone)]
pub struct BaselineRun {
    /// Magnitude-substitution gain `s ⊘ (y + eps)`; applying it to the
    /// reverberant STFT reproduces the estimated spectrogram with the
    /// reverberant phase.
    pub gain: Array2<f64>,
    pub report: FitReport,
    pub s: Spectrogram,
    pub h: RirModel,
}

/// Alternate the two baseline updates for the configured number of
/// sweeps. In production mode the filter is rescaled (first tap = 1,
/// compensation folded into `s`), clamped to decay, and the clean
/// estimate sharpened by φ_x after every sweep; pure mode runs the bare
/// updates so the descent property is exactly testable.
pub fn run_baseline(y: &Spectrogram, config: &EngineConfig) -> Result<BaselineRun> {
    config.validate()?;
    let (bins, frames) = y.values.dim();
    let lambda = config.resolve_lambda(y);
    let mut report = FitReport::new(["Q_cost", "kl_term", "sparsity_term"]);

    if y.values.sum() == 0.0 {
        // Digital silence: the model is all zeros and the multiplicative
        // machinery would only decay toward it. Return the zero gain.
        report.push(0.0, 0.0, 0.0);
        report.final_kl = 0.0;
        return Ok(BaselineRun {
            gain: Array2::zeros((bins, frames)),
            report,
            s: Spectrogram {
                values: Array2::zeros((bins, frames)),
                power_p: y.power_p,
            },
            h: init_rir(bins, config.lh),
        });
    }

    let mut h = init_rir(bins, config.lh);
    let mut s = y.clone();
    let (q, kl, sp) = baseline_cost(y, &s, &h, lambda);
    report.push(q, kl, sp);

    for _ in 0..config.iterations {
        h = baseline_update_h(&h, &s, y, config.eps)?;
        s = baseline_update_s(&s, &h, y, lambda, config.eps)?;
        if !config.pure_mode {
            let norm = normalize_scale(&h, None)?;
            h = clamp_decay(&norm.h);
            for (k, mut row) in s.values.rows_mut().into_iter().enumerate() {
                let g = norm.h_row_scales[k];
                row.mapv_inplace(|v| (v * g).powf(config.phi_x));
            }
        }
        let (q, kl, sp) = baseline_cost(y, &s, &h, lambda);
        report.push(q, kl, sp);
    }
    report.final_kl = report.rows.last().map(|r| r.term_a).unwrap_or(0.0);
    report.iterations_run = config.iterations;

    let gain = ops::ratio(&s.values, &y.values, config.eps);
    Ok(BaselineRun { gain, report, s, h })
}
