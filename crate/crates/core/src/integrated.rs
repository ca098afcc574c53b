//! Integrated estimator: the convolutive acoustic model and the NMF
//! spectral model share one cost, `KL(y | h∗(w·x)) + λ·Σx`, minimized by
//! alternating multiplicative updates of h, w and x. The clean speech is
//! recovered through a time-varying gain rather than the raw model
//! product, which tolerates a mediocre dictionary fit.
//!
//! Frame stacking is handled in the same loop: with `t_st > 1` the
//! input is stacked, the basis lives on `K·t_st` rows, the filter keeps
//! its base `K` rows (replicated implicitly across blocks), and the gain
//! averages the overlapping block estimates. Every kernel reduces
//! bit-exactly to the unstacked form at `t_st = 1`.

use crate::config::{BasisMode, EngineConfig};
use crate::error::{DerevError, Result};
use crate::nctf::{clamp_decay, init_rir, kl_raw, normalize_scale, RirModel};
use crate::nmf::{kl_update_activations, nmf_factorize, NmfModel};
use crate::ops;
use crate::report::FitReport;
use crate::stack::{stack, StackedSpectrogram};
use crate::stft::Spectrogram;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check_dims(
    h: &RirModel,
    w: &Array2<f64>,
    x: &Array2<f64>,
    y: &Spectrogram,
) -> Result<()> {
    if w.nrows() != y.bins()
        || w.ncols() != x.nrows()
        || x.ncols() != y.frames()
        || h.bins() != y.bins()
    {
        return Err(DerevError::DimensionMismatch(format!(
            "h {:?}, w {:?}, x {:?}, y {:?}",
            h.h.dim(),
            w.dim(),
            x.dim(),
            y.values.dim()
        )));
    }
    Ok(())
}

/// Filter update with the modeled spectrogram `s̃ = w·x` in place of a
/// free clean-speech estimate.
pub fn integrated_update_h(
    h: &RirModel,
    w: &Array2<f64>,
    x: &Array2<f64>,
    y: &Spectrogram,
    eps: f64,
) -> Result<RirModel> {
    check_dims(h, w, x, y)?;
    let s_model = w.dot(x);
    Ok(RirModel {
        h: ops::update_h_blocks(&h.h, &y.values, &s_model, eps),
    })
}

pub(crate) fn update_w_raw(
    w: &Array2<f64>,
    h: &Array2<f64>,
    x: &Array2<f64>,
    y_vals: &Array2<f64>,
    eps: f64,
) -> Array2<f64> {
    let s_model = w.dot(x);
    let y_tilde = ops::conv_rows(&s_model, h);
    let a = ops::ratio(y_vals, &y_tilde, eps);
    let b = ops::forward_corr(&a, h);
    let d = ops::forward_mass(h, y_vals.nrows(), y_vals.ncols());
    let num = b.dot(&x.t());
    let den = d.dot(&x.t());
    let mut out = w.clone();
    ndarray::Zip::from(&mut out)
        .and(&num)
        .and(&den)
        .for_each(|wv, &n, &dn| *wv *= n / (dn + eps));
    out
}

/// Basis update: `w'(k,r) = w(k,r)·[Σ_{t,τ} y h x/ỹ]/[Σ_{t,τ} h x]`, with
/// both τ-sums restricted to frames inside the utterance.
pub fn integrated_update_w(
    w: &Array2<f64>,
    h: &RirModel,
    x: &Array2<f64>,
    y: &Spectrogram,
    eps: f64,
) -> Result<Array2<f64>> {
    check_dims(h, w, x, y)?;
    Ok(update_w_raw(w, &h.h, x, &y.values, eps))
}

pub(crate) fn update_x_raw(
    x: &Array2<f64>,
    h: &Array2<f64>,
    w: &Array2<f64>,
    y_vals: &Array2<f64>,
    lambda: f64,
    eps: f64,
) -> Array2<f64> {
    let s_model = w.dot(x);
    let y_tilde = ops::conv_rows(&s_model, h);
    let a = ops::ratio(y_vals, &y_tilde, eps);
    let b = ops::forward_corr(&a, h);
    let d = ops::forward_mass(h, y_vals.nrows(), y_vals.ncols());
    let num = w.t().dot(&b);
    let den = w.t().dot(&d);
    let mut out = x.clone();
    ndarray::Zip::from(&mut out)
        .and(&num)
        .and(&den)
        .for_each(|xv, &n, &dn| *xv *= n / (dn + lambda + eps));
    out
}

/// Activation update with ℓ1 sparsity:
/// `x'(r,t) = x(r,t)·[Σ_{k,τ} y(k,t+τ) h w/ỹ(k,t+τ)]/[Σ_{k,τ} h w + λ]`.
pub fn integrated_update_x(
    x: &Array2<f64>,
    h: &RirModel,
    w: &Array2<f64>,
    y: &Spectrogram,
    lambda: f64,
    eps: f64,
) -> Result<Array2<f64>> {
    check_dims(h, w, x, y)?;
    Ok(update_x_raw(x, &h.h, w, &y.values, lambda, eps))
}

/// The dereverberation gain `G = s̃ ⊘ (h∗s̃ + eps)` with `s̃ = w·x`.
pub fn integrated_gain(
    h: &RirModel,
    w: &Array2<f64>,
    x: &Array2<f64>,
    eps: f64,
) -> Array2<f64> {
    let s_model = w.dot(x);
    let y_tilde = ops::conv_rows(&s_model, &h.h);
    ops::block_ratio(&s_model, &y_tilde, h.bins(), eps)
}

/// Cost `KL(y | h∗(w·x)) + λ·Σx`, returned as (total, kl, sparsity).
pub fn integrated_cost(
    y: &Spectrogram,
    h: &RirModel,
    w: &Array2<f64>,
    x: &Array2<f64>,
    lambda: f64,
) -> (f64, f64, f64) {
    let y_tilde = ops::conv_rows(&w.dot(x), &h.h);
    let kl = kl_raw(&y.values, &y_tilde);
    let sp = lambda * x.sum();
    (kl + sp, kl, sp)
}

/// Everything a completed integrated run hands back.
#[derive(Debug, Clone)]
pub struct IntegratedRun {
    /// K×T gain to apply to the reverberant STFT.
    pub gain: Array2<f64>,
    pub report: FitReport,
    /// Final spectral model (rows span `K·t_st` when stacking).
    pub nmf: NmfModel,
    pub h: RirModel,
    t_st: usize,
    base_k: usize,
}

impl IntegratedRun {
    /// Direct clean-spectrogram estimate `Σ_r w·x` (the model product).
    /// With stacking the overlapping block estimates for each base frame
    /// are averaged back onto the K×T grid.
    pub fn direct_estimate(&self) -> Array2<f64> {
        let s_model = self.nmf.model_spectrogram();
        if self.t_st == 1 {
            return s_model;
        }
        let (k, t_len) = (self.base_k, s_model.ncols());
        let mut out = Array2::<f64>::zeros((k, t_len));
        for t in 0..t_len {
            for f in 0..k {
                let mut acc = 0.0;
                let mut count = 0.0;
                for l in 0..self.t_st.min(t + 1) {
                    acc += s_model[(l * k + f, t - l)];
                    count += 1.0;
                }
                out[(f, t)] = acc / count;
            }
        }
        out
    }
}

fn seeded_activations(
    rank: usize,
    t_cols: usize,
    f_rows: usize,
    mean_v: f64,
    seed: u64,
) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // With sum-normalized basis columns, activations carry the scale:
    // aim the initial column sums at the data's per-column mass.
    let scale = if mean_v > 0.0 {
        f_rows as f64 * mean_v / rank as f64
    } else {
        1.0
    };
    let data: Vec<f64> = (0..rank * t_cols)
        .map(|_| (0.01 + rng.gen::<f64>()) * scale)
        .collect();
    Array2::from_shape_vec((rank, t_cols), data).expect("shape matches data")
}

pub(crate) fn init_spectral_model(
    y_vals: &Array2<f64>,
    config: &EngineConfig,
    fixed_basis: Option<&Array2<f64>>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (f_rows, t_cols) = y_vals.dim();
    match (config.basis_mode, fixed_basis) {
        (BasisMode::Online, None) => {
            let model = nmf_factorize(y_vals, config.rank, config.init_nmf_iters, config.seed)?;
            Ok((model.w, model.x))
        }
        (BasisMode::Online, Some(_)) => Err(DerevError::InvalidSpec(
            "a basis file was supplied but basis_mode is online".into(),
        )),
        (_, None) => Err(DerevError::InvalidSpec(
            "fixed basis mode requires a basis file".into(),
        )),
        (_, Some(w)) => {
            if w.nrows() != f_rows {
                return Err(DerevError::DimensionMismatch(format!(
                    "basis has {} rows, spectrogram (after stacking) has {f_rows}",
                    w.nrows()
                )));
            }
            if w.ncols() != config.rank {
                return Err(DerevError::DimensionMismatch(format!(
                    "basis has {} atoms, config.rank is {}",
                    w.ncols(),
                    config.rank
                )));
            }
            let mean_v = y_vals.sum() / (f_rows * t_cols) as f64;
            let mut x = seeded_activations(config.rank, t_cols, f_rows, mean_v, config.seed);
            for _ in 0..config.init_nmf_iters {
                x = kl_update_activations(&x, y_vals, w, 0.0, config.eps);
            }
            Ok((w.clone(), x))
        }
    }
}

/// Run the integrated method end to end: initialize, sweep h→w→x for the
/// configured iterations (with rescaling, decay clamping and φ_x
/// sharpening after each sweep unless in pure mode), then compute the
/// gain. With `t_st > 1` the whole estimation runs on the stacked
/// spectrogram and the gain averages the overlapping blocks.
pub fn run_integrated(
    y: &Spectrogram,
    config: &EngineConfig,
    fixed_basis: Option<&Array2<f64>>,
) -> Result<IntegratedRun> {
    config.validate()?;
    let (bins, frames) = y.values.dim();
    let lambda = config.resolve_lambda(y);
    let header = if config.t_st > 1 {
        ["L1st_cost", "kl_term", "sparsity_term"]
    } else {
        ["L1_cost", "kl_term", "sparsity_term"]
    };
    let mut report = FitReport::new(header);

    if y.values.sum() == 0.0 {
        report.push(0.0, 0.0, 0.0);
        return Ok(IntegratedRun {
            gain: Array2::zeros((bins, frames)),
            report,
            nmf: NmfModel {
                w: Array2::zeros((bins * config.t_st, config.rank)),
                x: Array2::zeros((config.rank, frames)),
                rank: config.rank,
            },
            h: init_rir(bins, config.lh),
            t_st: config.t_st,
            base_k: bins,
        });
    }

    let y_st: StackedSpectrogram = stack(y, config.t_st)?;
    let (mut w, mut x) = init_spectral_model(&y_st.values, config, fixed_basis)?;
    let mut h = init_rir(bins, config.lh);

    let cost = |h: &RirModel, w: &Array2<f64>, x: &Array2<f64>| {
        let y_tilde = ops::conv_rows(&w.dot(x), &h.h);
        let kl = kl_raw(&y_st.values, &y_tilde);
        (kl + lambda * x.sum(), kl, lambda * x.sum())
    };
    let (c, kl, sp) = cost(&h, &w, &x);
    report.push(c, kl, sp);

    let online = config.basis_mode == BasisMode::Online;
    for _ in 0..config.iterations {
        h = RirModel {
            h: ops::update_h_blocks(&h.h, &y_st.values, &w.dot(&x), config.eps),
        };
        if online {
            w = update_w_raw(&w, &h.h, &x, &y_st.values, config.eps);
        }
        x = update_x_raw(&x, &h.h, &w, &y_st.values, lambda, config.eps);
        if !config.pure_mode {
            let norm = normalize_scale(&h, Some(&w))?;
            h = clamp_decay(&norm.h);
            w = norm.w.expect("basis was passed in");
            let scales = norm.x_row_scales.expect("basis was passed in");
            for (r, mut row) in x.rows_mut().into_iter().enumerate() {
                let g = scales[r];
                row.mapv_inplace(|v| (v * g).powf(config.phi_x));
            }
        }
        let (c, kl, sp) = cost(&h, &w, &x);
        report.push(c, kl, sp);
    }
    report.final_kl = report.rows.last().map(|r| r.term_a).unwrap_or(0.0);
    report.iterations_run = config.iterations;

    let s_model = w.dot(&x);
    let y_tilde = ops::conv_rows(&s_model, &h.h);
    let gain = ops::block_ratio(&s_model, &y_tilde, bins, config.eps);
    debug_assert!(gain.iter().all(|&g| g.is_finite() && g >= 0.0));

    Ok(IntegratedRun {
        gain,
        report,
        nmf: NmfModel {
            w,
            x,
            rank: config.rank,
        },
        h,
        t_st: config.t_st,
        base_k: bins,
    })
}
