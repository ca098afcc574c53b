//! Weighted estimator: keeps an explicit clean-spectrogram estimate `s`
//! and balances two costs through a weight ρ ∈ (0,1),
//!
//! `L2 = ρ·[KL(s | w·x) + λ·Σx] + (1−ρ)·[KL(y | h∗s) + λ·Σs]`,
//!
//! so the spectral dictionary acts as a prior on `s` instead of a hard
//! constraint. The filter and dictionary factors take multiplicative
//! updates; `s` itself has a closed-form minimizer through the principal
//! branch of the Lambert W function.

use crate::config::{BasisMode, EngineConfig};
use crate::error::{DerevError, Result};
use crate::integrated::init_spectral_model;
use crate::nctf::{clamp_decay, init_rir, kl_raw, normalize_scale, RirModel};
use crate::nmf::{kl_update_activations, kl_update_basis, NmfModel};
use crate::ops;
use crate::report::FitReport;
use crate::stft::Spectrogram;
use ndarray::Array2;
use rayon::prelude::*;

/// Principal branch of the Lambert W function on the non-negative axis:
/// the `w ≥ 0` with `w·e^w = z`. Halley iteration from `ln(1+z)`;
/// residual `|w·e^w − z| ≤ 1e-12·max(1,z)`.
pub fn lambert_w0(z: f64) -> Result<f64> {
    if !z.is_finite() || z < 0.0 {
        return Err(DerevError::NegativeArgument(z));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    if z > 1e300 {
        // e^w·(w+1) would overflow inside the iteration; solve the
        // equivalent w + ln w = ln z instead.
        return Ok(solve_w_log(z.ln()));
    }
    let mut w = z.ln_1p();
    for _ in 0..50 {
        let ew = w.exp();
        let f = w * ew - z;
        if f.abs() <= 1e-12 * z.max(1.0) {
            break;
        }
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        w -= f / denom;
    }
    Ok(w)
}

/// Newton solve of `w + ln w = a` (the log form of `w·e^w = e^a`),
/// used whenever `e^a` would overflow.
fn solve_w_log(a: f64) -> f64 {
    let mut w = if a > 1.0 { a - a.ln() } else { 1.0 };
    for _ in 0..100 {
        let g = w + w.ln() - a;
        if g.abs() <= 1e-13 * a.abs().max(1.0) {
            break;
        }
        w -= g * w / (w + 1.0);
    }
    w
}

/// Solve the per-entry stationarity condition `c/s + ρ·ln s + b = 0`
/// (with `c ≤ 0`) for `s > 0`: `s = −c / (ρ·W(−(c/ρ)·e^{b/ρ}))`.
///
/// `c = 0` collapses to the analytic limit `exp(−b/ρ)`, capped at `cap`
/// (the current model maximum) so an unconstrained entry cannot blow up.
pub(crate) fn solve_stationary(c: f64, b: f64, rho: f64, cap: f64) -> f64 {
    debug_assert!(c <= 0.0 && rho > 0.0 && rho < 1.0);
    let limit = || (-b / rho).exp().min(cap);
    if c == 0.0 {
        return limit();
    }
    let neg_c_over_rho = -c / rho;
    let a = neg_c_over_rho.ln() + b / rho;
    if a > 700.0 {
        return neg_c_over_rho / solve_w_log(a);
    }
    let z = a.exp();
    if z == 0.0 {
        // W(z) ~ z as z→0, and −c/(ρz) reduces to the same limit.
        return limit();
    }
    let w = lambert_w0(z).expect("z is positive and finite");
    neg_c_over_rho / w
}

/// Full state of a weighted run.
#[derive(Debug, Clone)]
pub struct WeightedState {
    /// Explicit K×T clean-spectrogram estimate.
    pub s: Array2<f64>,
    pub h: RirModel,
    pub nmf: NmfModel,
    pub rho: f64,
}

pub(crate) fn update_s_raw(
    s: &Array2<f64>,
    h: &Array2<f64>,
    s_model: &Array2<f64>,
    y_vals: &Array2<f64>,
    rho: f64,
    lambda: f64,
    eps: f64,
) -> Array2<f64> {
    let (bins, frames) = s.dim();
    let y_tilde = ops::conv_rows(s, h);
    let a = ops::ratio(y_vals, &y_tilde, eps);
    let bcorr = ops::forward_corr(&a, h);
    let mass = ops::forward_mass(h, bins, frames);
    let cap = s_model.fold(0.0f64, |m, &v| m.max(v));
    let one_m = 1.0 - rho;

    let bc = bcorr.as_slice().expect("standard layout");
    let dv = mass.as_slice().expect("standard layout");
    let sm = s_model.as_slice().expect("standard layout");
    let mut out = s.clone();
    out.as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(frames)
        .enumerate()
        .for_each(|(k, row)| {
            for t in 0..frames {
                let idx = k * frames + t;
                let c = -one_m * row[t] * bc[idx];
                let b = one_m * (dv[idx] + lambda) - rho * (sm[idx] + eps).ln();
                row[t] = solve_stationary(c, b, rho, cap);
            }
        });
    out
}

/// The Lambert-W update of the clean-spectrogram estimate. Every entry
/// is moved to the exact minimizer of its separable surrogate, i.e. it
/// satisfies `c/s + ρ·ln s + b = 0` with
/// `c = −(1−ρ)·s·Σ_τ h(k,τ)·y(k,t+τ)/ỹ(k,t+τ)` and
/// `b = (1−ρ)·(Σ_τ h(k,τ) + λ) − ρ·ln(s̃(k,t))`, `s̃ = w·x`.
pub fn weighted_update_s(
    state: &WeightedState,
    y: &Spectrogram,
    lambda: f64,
    eps: f64,
) -> Result<Array2<f64>> {
    let s_model = state.nmf.model_spectrogram();
    if state.s.dim() != y.values.dim()
        || s_model.dim() != state.s.dim()
        || state.h.bins() != state.s.nrows()
    {
        return Err(DerevError::DimensionMismatch(format!(
            "s {:?}, y {:?}, w·x {:?}, h {:?}",
            state.s.dim(),
            y.values.dim(),
            s_model.dim(),
            state.h.h.dim()
        )));
    }
    Ok(update_s_raw(
        &state.s,
        &state.h.h,
        &s_model,
        &y.values,
        state.rho,
        lambda,
        eps,
    ))
}

/// Filter update against the explicit clean estimate, identical in form
/// to the convolutive baseline.
pub fn weighted_update_h(
    h: &RirModel,
    s: &Array2<f64>,
    y: &Spectrogram,
    eps: f64,
) -> Result<RirModel> {
    if s.dim() != y.values.dim() || h.bins() != s.nrows() {
        return Err(DerevError::DimensionMismatch(format!(
            "s {:?}, y {:?}, h {:?}",
            s.dim(),
            y.values.dim(),
            h.h.dim()
        )));
    }
    Ok(RirModel {
        h: ops::update_h_blocks(&h.h, &y.values, s, eps),
    })
}

/// Dictionary update: the plain KL-NMF basis rule fitted to `s`.
pub fn weighted_update_w(
    w: &Array2<f64>,
    s: &Array2<f64>,
    x: &Array2<f64>,
    eps: f64,
) -> Array2<f64> {
    kl_update_basis(w, s, x, eps)
}

/// Activation update: the plain sparse KL-NMF rule fitted to `s`.
pub fn weighted_update_x(
    x: &Array2<f64>,
    s: &Array2<f64>,
    w: &Array2<f64>,
    lambda: f64,
    eps: f64,
) -> Array2<f64> {
    kl_update_activations(x, s, w, lambda, eps)
}

/// Dereverberation gain `G = s ⊘ (h∗s + eps)`.
pub fn weighted_gain(s: &Array2<f64>, h: &RirModel, eps: f64) -> Array2<f64> {
    let y_tilde = ops::conv_rows(s, &h.h);
    ops::ratio(s, &y_tilde, eps)
}

/// The two cost branches and their blend, returned as (L2, P, Q) with
/// `P = KL(s | w·x) + λ·Σx` and `Q = KL(y | h∗s) + λ·Σs`. One shared λ
/// weights both sparsity terms.
pub fn weighted_cost(y: &Spectrogram, state: &WeightedState, lambda: f64) -> (f64, f64, f64) {
    let s_model = state.nmf.model_spectrogram();
    let p = kl_raw(&state.s, &s_model) + lambda * state.nmf.x.sum();
    let q = kl_raw(&y.values, &ops::conv_rows(&state.s, &state.h.h)) + lambda * state.s.sum();
    (state.rho * p + (1.0 - state.rho) * q, p, q)
}

/// Everything a completed weighted run hands back.
#[derive(Debug, Clone)]
pub struct WeightedRun {
    /// K×T gain to apply to the reverberant STFT.
    pub gain: Array2<f64>,
    pub report: FitReport,
    pub state: WeightedState,
}

/// Run the weighted method end to end: `s` starts as the observed
/// spectrogram, the dictionary from seeded NMF; each sweep updates
/// h → s → w → x, with rescaling, decay clamping and φ_x sharpening of
/// both `x` and `s` afterwards unless in pure mode; the gain comes from
/// the final `s` and `h`. Frame stacking is not supported here.
pub fn run_weighted(
    y: &Spectrogram,
    config: &EngineConfig,
    fixed_basis: Option<&Array2<f64>>,
) -> Result<WeightedRun> {
    config.validate()?;
    if !(config.rho > 0.0 && config.rho < 1.0) {
        return Err(DerevError::InvalidWeight(config.rho));
    }
    if config.t_st > 1 {
        return Err(DerevError::InvalidSpec(
            "frame stacking is only available for the integrated method".into(),
        ));
    }
    let (bins, frames) = y.values.dim();
    let lambda = config.resolve_lambda(y);
    let rho = config.rho;
    let mut report = FitReport::new(["L2", "P_term", "Q_term"]);

    if y.values.sum() == 0.0 {
        report.push(0.0, 0.0, 0.0);
        return Ok(WeightedRun {
            gain: Array2::zeros((bins, frames)),
            report,
            state: WeightedState {
                s: Array2::zeros((bins, frames)),
                h: init_rir(bins, config.lh),
                nmf: NmfModel {
                    w: Array2::zeros((bins, config.rank)),
                    x: Array2::zeros((config.rank, frames)),
                    rank: config.rank,
                },
                rho,
            },
        });
    }

    let (mut w, mut x) = init_spectral_model(&y.values, config, fixed_basis)?;
    let mut s = y.values.clone();
    let mut h = init_rir(bins, config.lh);

    let cost = |s: &Array2<f64>, h: &RirModel, w: &Array2<f64>, x: &Array2<f64>| {
        let p = kl_raw(s, &w.dot(x)) + lambda * x.sum();
        let q = kl_raw(&y.values, &ops::conv_rows(s, &h.h)) + lambda * s.sum();
        (rho * p + (1.0 - rho) * q, p, q)
    };
    let (l2, p, q) = cost(&s, &h, &w, &x);
    report.push(l2, p, q);

    let online = config.basis_mode == BasisMode::Online;
    for _ in 0..config.iterations {
        h = RirModel {
            h: ops::update_h_blocks(&h.h, &y.values, &s, config.eps),
        };
        s = update_s_raw(&s, &h.h, &w.dot(&x), &y.values, rho, lambda, config.eps);
        if online {
            w = kl_update_basis(&w, &s, &x, config.eps);
        }
        x = kl_update_activations(&x, &s, &w, lambda, config.eps);
        if !config.pure_mode {
            let norm = normalize_scale(&h, Some(&w))?;
            h = clamp_decay(&norm.h);
            w = norm.w.expect("basis was passed in");
            let col_scales = norm.x_row_scales.expect("basis was passed in");
            for (r, mut row) in x.rows_mut().into_iter().enumerate() {
                let g = col_scales[r];
                row.mapv_inplace(|v| (v * g).powf(config.phi_x));
            }
            for (k, mut row) in s.rows_mut().into_iter().enumerate() {
                let g = norm.h_row_scales[k];
                row.mapv_inplace(|v| (v * g).powf(config.phi_x));
            }
        }
        let (l2, p, q) = cost(&s, &h, &w, &x);
        report.push(l2, p, q);
    }
    report.final_kl = kl_raw(&y.values, &ops::conv_rows(&s, &h.h));
    report.iterations_run = config.iterations;

    let gain = weighted_gain(&s, &h, config.eps);
    debug_assert!(gain.iter().all(|&g| g.is_finite() && g >= 0.0));

    Ok(WeightedRun {
        gain,
        report,
        state: WeightedState {
            s,
            h,
            nmf: NmfModel {
                w,
                x,
                rank: config.rank,
            },
            rho,
        },
    })
}
