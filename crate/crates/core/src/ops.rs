//! Raw-array kernels shared by every estimation engine.
//!
//! All matrices here are standard-layout `Array2<f64>` with frequency
//! rows and time columns. A "blocked" matrix has `blocks·K` rows where
//! row `f` belongs to base frequency `f % K`; the filter `h` always has
//! the base `K` rows and is implicitly replicated across blocks. With a
//! single block everything reduces to the plain per-frequency form, and
//! because an accumulation over one block performs the identical
//! floating-point operations, the reduction is bit-exact — a property
//! the stacking tests rely on.
//!
//! Parallelism is only ever across output rows; the summation order
//! inside each output element is fixed (block-ascending, then
//! time-ascending), so results are bit-identical at any thread count.

use ndarray::Array2;
use rayon::prelude::*;

fn rows(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("kernel matrices are standard layout")
}

/// Causal per-row convolution `out(f,t) = Σ_τ h(k,τ)·s(f,t−τ)` with the
/// boundary `s(·,t) = 0` for `t < 0`.
pub(crate) fn conv_rows(s: &Array2<f64>, h: &Array2<f64>) -> Array2<f64> {
    let (f_rows, t_len) = s.dim();
    let base_k = h.nrows();
    debug_assert_eq!(f_rows % base_k, 0);
    let lh = h.ncols();
    let s_flat = rows(s);
    let h_flat = rows(h);
    let mut out = Array2::<f64>::zeros((f_rows, t_len));
    out.as_slice_mut()
        .expect("freshly allocated")
        .par_chunks_mut(t_len)
        .enumerate()
        .for_each(|(f, out_row)| {
            let h_row = &h_flat[(f % base_k) * lh..(f % base_k) * lh + lh];
            let s_row = &s_flat[f * t_len..(f + 1) * t_len];
            for (t, o) in out_row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (tau, &hv) in h_row.iter().enumerate().take(lh.min(t + 1)) {
                    acc += hv * s_row[t - tau];
                }
                *o = acc;
            }
        });
    out
}

/// Element-wise `y / (y_tilde + eps)`.
pub(crate) fn ratio(y: &Array2<f64>, y_tilde: &Array2<f64>, eps: f64) -> Array2<f64> {
    let mut out = y.clone();
    out.zip_mut_with(y_tilde, |a, &b| *a /= b + eps);
    out
}

/// Forward-looking correlation `B(f,t) = Σ_τ h(k,τ)·a(f,t+τ)` where the
/// sum runs only over τ with `t+τ` inside the matrix. This is the shared
/// numerator kernel of every activation/clean-speech update.
pub(crate) fn forward_corr(a: &Array2<f64>, h: &Array2<f64>) -> Array2<f64> {
    let (f_rows, t_len) = a.dim();
    let base_k = h.nrows();
    debug_assert_eq!(f_rows % base_k, 0);
    let lh = h.ncols();
    let a_flat = rows(a);
    let h_flat = rows(h);
    let mut out = Array2::<f64>::zeros((f_rows, t_len));
    out.as_slice_mut()
        .expect("freshly allocated")
        .par_chunks_mut(t_len)
        .enumerate()
        .for_each(|(f, out_row)| {
            let h_row = &h_flat[(f % base_k) * lh..(f % base_k) * lh + lh];
            let a_row = &a_flat[f * t_len..(f + 1) * t_len];
            for (t, o) in out_row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (tau, &hv) in h_row.iter().enumerate().take(lh.min(t_len - t)) {
                    acc += hv * a_row[t + tau];
                }
                *o = acc;
            }
        });
    out
}

/// The matching denominator kernel: `D(f,t) = Σ_τ h(k,τ)` over the same
/// in-range τ as [`forward_corr`]. Restricting the sum to frames that
/// actually exist keeps exact-model inputs at a true fixed point; the
/// unrestricted sum would over-count at the tail.
pub(crate) fn forward_mass(h: &Array2<f64>, f_rows: usize, t_len: usize) -> Array2<f64> {
    let base_k = h.nrows();
    debug_assert_eq!(f_rows % base_k, 0);
    let lh = h.ncols();
    let h_flat = rows(h);
    let mut out = Array2::<f64>::zeros((f_rows, t_len));
    out.as_slice_mut()
        .expect("freshly allocated")
        .par_chunks_mut(t_len)
        .enumerate()
        .for_each(|(f, out_row)| {
            let h_row = &h_flat[(f % base_k) * lh..(f % base_k) * lh + lh];
            // Suffix sums: D(f,t) depends only on how many taps remain.
            for (t, o) in out_row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for &hv in h_row.iter().take(lh.min(t_len - t)) {
                    acc += hv;
                }
                *o = acc;
            }
        });
    out
}

/// Multiplicative filter update shared by the baseline, integrated and
/// stacked engines:
///
/// `h'(k,τ) = h(k,τ) · [Σ_{l,t} A(f,t)·s(f,t−τ)] / [Σ_{l,t} s(f,t−τ) + eps]`
///
/// with `A = y ⊘ (h∗s + eps)` and `f = l·K + k` running over the blocks.
pub(crate) fn update_h_blocks(
    h: &Array2<f64>,
    y: &Array2<f64>,
    s_like: &Array2<f64>,
    eps: f64,
) -> Array2<f64> {
    let (f_rows, t_len) = s_like.dim();
    let (base_k, lh) = h.dim();
    debug_assert_eq!(y.dim(), (f_rows, t_len));
    let blocks = f_rows / base_k;
    let y_tilde = conv_rows(s_like, h);
    let a = ratio(y, &y_tilde, eps);
    let a_flat = rows(&a);
    let s_flat = rows(s_like);
    let h_flat = rows(h);
    let mut out = Array2::<f64>::zeros((base_k, lh));
    out.as_slice_mut()
        .expect("freshly allocated")
        .par_chunks_mut(lh)
        .enumerate()
        .for_each(|(k, out_row)| {
            for (tau, o) in out_row.iter_mut().enumerate() {
                let mut num = 0.0;
                let mut den = 0.0;
                for l in 0..blocks {
                    let f = l * base_k + k;
                    let a_row = &a_flat[f * t_len..(f + 1) * t_len];
                    let s_row = &s_flat[f * t_len..(f + 1) * t_len];
                    for t in tau..t_len {
                        num += a_row[t] * s_row[t - tau];
                        den += s_row[t - tau];
                    }
                }
                *o = h_flat[k * lh + tau] * num / (den + eps);
            }
        });
    out
}

/// Per-column sum of a gain-style ratio over blocks:
/// `out(k,t) = [Σ_l num(f,t)] / [Σ_l den(f,t) + eps]`.
pub(crate) fn block_ratio(
    num: &Array2<f64>,
    den: &Array2<f64>,
    base_k: usize,
    eps: f64,
) -> Array2<f64> {
    let (f_rows, t_len) = num.dim();
    debug_assert_eq!(den.dim(), (f_rows, t_len));
    debug_assert_eq!(f_rows % base_k, 0);
    let blocks = f_rows / base_k;
    let n_flat = rows(num);
    let d_flat = rows(den);
    let mut out = Array2::<f64>::zeros((base_k, t_len));
    out.as_slice_mut()
        .expect("freshly allocated")
        .par_chunks_mut(t_len)
        .enumerate()
        .for_each(|(k, out_row)| {
            for (t, o) in out_row.iter_mut().enumerate() {
                let mut n = 0.0;
                let mut d = 0.0;
                for l in 0..blocks {
                    let f = l * base_k + k;
                    n += n_flat[f * t_len + t];
                    d += d_flat[f * t_len + t];
                }
                *o = n / (d + eps);
            }
        });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn conv_rows_identity_kernel() {
        let s = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let h = array![[1.0, 0.0], [1.0, 0.0]];
        assert_eq!(conv_rows(&s, &h), s);
    }

    #[test]
    fn conv_rows_single_row_case() {
        let s = array![[1.0, 2.0, 3.0]];
        let h = array![[1.0, 0.5]];
        let out = conv_rows(&s, &h);
        assert_eq!(out, array![[1.0, 2.5, 4.0]]);
    }

    #[test]
    fn conv_rows_replicates_h_across_blocks() {
        // Two blocks over one base row: both use the same filter row.
        let s = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let h = array![[0.5, 0.25]];
        let out = conv_rows(&s, &h);
        assert_eq!(out, array![[0.5, 0.25, 0.0], [0.0, 0.5, 0.25]]);
    }

    #[test]
    fn forward_mass_truncates_at_the_tail() {
        let h = array![[1.0, 0.5, 0.25]];
        let d = forward_mass(&h, 1, 4);
        assert_eq!(d, array![[1.75, 1.75, 1.5, 1.0]]);
    }

    #[test]
    fn forward_corr_matches_hand_sum() {
        let a = array![[1.0, 2.0, 4.0]];
        let h = array![[1.0, 0.5]];
        // t=0: 1 + 0.5·2 = 2; t=1: 2 + 0.5·4 = 4; t=2: 4 (no τ=1 term).
        assert_eq!(forward_corr(&a, &h), array![[2.0, 4.0, 4.0]]);
    }
}
