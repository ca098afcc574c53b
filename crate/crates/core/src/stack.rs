//! Temporal modeling by frame stacking.
//!
//! A stacked spectrogram puts `t_st` consecutive frames on top of each
//! other: block l of stacked column t is base column t+l (zero-padded
//! past the end), so row `l·K + k` tracks frequency k at lag l. The
//! filter keeps its base K rows and acts identically on every block,
//! which couples the blocks through the shared filter update and the
//! averaged gain below. With `t_st = 1` every operation here performs
//! literally the same arithmetic as its unstacked counterpart.

use crate::error::{DerevError, Result};
use crate::nctf::RirModel;
use crate::ops;
use crate::stft::Spectrogram;
use ndarray::Array2;

/// A (K·T_st)×T matrix of stacked frames.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedSpectrogram {
    pub values: Array2<f64>,
    pub t_st: usize,
    pub base_k: usize,
}

impl StackedSpectrogram {
    pub fn frames(&self) -> usize {
        self.values.ncols()
    }
}

/// Stack `t_st` consecutive columns of `spec` into each output column.
pub fn stack(spec: &Spectrogram, t_st: usize) -> Result<StackedSpectrogram> {
    if t_st < 1 {
        return Err(DerevError::InvalidWindow(
            "stacking window must be at least 1 frame".into(),
        ));
    }
    let (k, t_len) = spec.values.dim();
    let mut values = Array2::<f64>::zeros((k * t_st, t_len));
    for l in 0..t_st {
        for t in 0..t_len {
            if t + l < t_len {
                for f in 0..k {
                    values[(l * k + f, t)] = spec.values[(f, t + l)];
                }
            }
        }
    }
    Ok(StackedSpectrogram {
        values,
        t_st,
        base_k: k,
    })
}

/// Vertically replicate the K-row filter across `blocks` blocks; the
/// stacked model convolves every block with the same base row.
#[cfg(test)]
pub(crate) fn replicate_rows(h: &Array2<f64>, blocks: usize) -> Array2<f64> {
    let (k, lh) = h.dim();
    Array2::from_shape_fn((k * blocks, lh), |(f, tau)| h[(f % k, tau)])
}

fn check_stacked_dims(
    h: &RirModel,
    w_st: &Array2<f64>,
    x: &Array2<f64>,
    y_st: &StackedSpectrogram,
) -> Result<()> {
    let f_rows = y_st.base_k * y_st.t_st;
    if h.bins() != y_st.base_k
        || w_st.nrows() != f_rows
        || w_st.ncols() != x.nrows()
        || x.ncols() != y_st.frames()
        || y_st.values.nrows() != f_rows
    {
        return Err(DerevError::DimensionMismatch(format!(
            "h {:?}, w {:?}, x {:?}, stacked y {:?} (K = {}, T_st = {})",
            h.h.dim(),
            w_st.dim(),
            x.dim(),
            y_st.values.dim(),
            y_st.base_k,
            y_st.t_st
        )));
    }
    Ok(())
}

/// Multiplicative filter update aggregated over all stacked blocks:
/// every block contributes to the same K×L_h filter through the shared
/// base row. Reduces bit-exactly to the unstacked update at `t_st = 1`.
pub fn stacked_update_h(
    h: &RirModel,
    w_st: &Array2<f64>,
    x: &Array2<f64>,
    y_st: &StackedSpectrogram,
    eps: f64,
) -> Result<RirModel> {
    check_stacked_dims(h, w_st, x, y_st)?;
    let s_st = w_st.dot(x);
    Ok(RirModel {
        h: ops::update_h_blocks(&h.h, &y_st.values, &s_st, eps),
    })
}

/// Basis update on the stacked grid; the same multiplicative rule as the
/// unstacked basis update, with the filter row shared across blocks.
pub fn stacked_update_w(
    w_st: &Array2<f64>,
    h: &RirModel,
    x: &Array2<f64>,
    y_st: &StackedSpectrogram,
    eps: f64,
) -> Result<Array2<f64>> {
    check_stacked_dims(h, w_st, x, y_st)?;
    Ok(crate::integrated::update_w_raw(
        w_st, &h.h, x, &y_st.values, eps,
    ))
}

/// Activation update on the stacked grid with ℓ1 sparsity.
pub fn stacked_update_x(
    x: &Array2<f64>,
    h: &RirModel,
    w_st: &Array2<f64>,
    y_st: &StackedSpectrogram,
    lambda: f64,
    eps: f64,
) -> Result<Array2<f64>> {
    check_stacked_dims(h, w_st, x, y_st)?;
    Ok(crate::integrated::update_x_raw(
        x, &h.h, w_st, &y_st.values, lambda, eps,
    ))
}

/// Gain that averages the overlapping stacked estimates:
/// `G(k,t) = Σ_l s̃(l·K+k, t) / (Σ_l ỹ(l·K+k, t) + eps)`.
pub fn stacked_gain(
    h: &RirModel,
    w_st: &Array2<f64>,
    x: &Array2<f64>,
    t_st: usize,
    eps: f64,
) -> Array2<f64> {
    debug_assert_eq!(w_st.nrows(), h.bins() * t_st);
    let s_st = w_st.dot(x);
    let y_tilde = ops::conv_rows(&s_st, &h.h);
    ops::block_ratio(&s_st, &y_tilde, h.bins(), eps)
}

/// Stacked model cost: `KL(y_st | h∗(w_st·x)) + λ·Σx`.
pub fn stacked_cost(
    y_st: &StackedSpectrogram,
    h: &RirModel,
    w_st: &Array2<f64>,
    x: &Array2<f64>,
    lambda: f64,
) -> (f64, f64, f64) {
    let s_st = w_st.dot(x);
    let y_tilde = ops::conv_rows(&s_st, &h.h);
    let kl = crate::nctf::kl_raw(&y_st.values, &y_tilde);
    let sparsity = lambda * x.sum();
    (kl + sparsity, kl, sparsity)
}
