//! Spectral dictionary model: standard multiplicative KL-NMF updates,
//! offline basis training, and overcomplete basis sampling.
//!
//! The same two update kernels serve three places: seeding W/X before an
//! engine run, refining the basis during online runs, and training an
//! offline dictionary on clean speech.

use crate::error::{DerevError, Result};
use crate::stft::Spectrogram;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Basis W (F×R) and activations X (R×T), all non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct NmfModel {
    pub w: Array2<f64>,
    pub x: Array2<f64>,
    pub rank: usize,
}

impl NmfModel {
    /// The modeled spectrogram W·X — usable directly as a clean-speech
    /// estimate when a gain mask is not wanted.
    pub fn model_spectrogram(&self) -> Array2<f64> {
        self.w.dot(&self.x)
    }
}

/// One multiplicative basis update for `v ≈ w·x` under generalized KL:
/// `w ← w ⊙ [(v ⊘ (wx+eps))·xᵀ] / [row-sums of x + eps]`.
pub fn kl_update_basis(w: &Array2<f64>, v: &Array2<f64>, x: &Array2<f64>, eps: f64) -> Array2<f64> {
    let mut ratio = v.clone();
    ratio.zip_mut_with(&w.dot(x), |a, &b| *a /= b + eps);
    let num = ratio.dot(&x.t());
    let x_sums: Vec<f64> = x.rows().into_iter().map(|r| r.sum()).collect();
    let mut out = w.clone();
    for r in 0..w.ncols() {
        let d = x_sums[r] + eps;
        for f in 0..w.nrows() {
            out[(f, r)] = w[(f, r)] * num[(f, r)] / d;
        }
    }
    out
}

/// One multiplicative activation update with ℓ1 sparsity:
/// `x ← x ⊙ [wᵀ·(v ⊘ (wx+eps))] / [column-sums of w + λ + eps]`.
pub fn kl_update_activations(
    x: &Array2<f64>,
    v: &Array2<f64>,
    w: &Array2<f64>,
    lambda: f64,
    eps: f64,
) -> Array2<f64> {
    let mut ratio = v.clone();
    ratio.zip_mut_with(&w.dot(x), |a, &b| *a /= b + eps);
    let num = w.t().dot(&ratio);
    let w_sums: Vec<f64> = w.columns().into_iter().map(|c| c.sum()).collect();
    let mut out = x.clone();
    for r in 0..x.nrows() {
        let d = w_sums[r] + lambda + eps;
        for t in 0..x.ncols() {
            out[(r, t)] = x[(r, t)] * num[(r, t)] / d;
        }
    }
    out
}

/// Seeded uniform-positive initialization scaled so W·X starts near the
/// data's mean level. The draw order is fixed (W row-major, then X), so
/// equal seeds give bit-identical models.
pub(crate) fn seeded_init(
    f_rows: usize,
    rank: usize,
    t_cols: usize,
    mean_v: f64,
    seed: u64,
) -> (Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = if mean_v > 0.0 {
        (mean_v / rank as f64).sqrt()
    } else {
        1.0
    };
    let w_data: Vec<f64> = (0..f_rows * rank)
        .map(|_| (0.01 + rng.gen::<f64>()) * scale)
        .collect();
    let x_data: Vec<f64> = (0..rank * t_cols)
        .map(|_| (0.01 + rng.gen::<f64>()) * scale)
        .collect();
    let w = Array2::from_shape_vec((f_rows, rank), w_data).expect("shape matches data");
    let x = Array2::from_shape_vec((rank, t_cols), x_data).expect("shape matches data");
    (w, x)
}

/// Factorize `v ≈ w·x` by `iterations` sweeps of the two KL updates from
/// a seeded random start.
pub fn nmf_factorize(
    v: &Array2<f64>,
    rank: usize,
    iterations: usize,
    seed: u64,
) -> Result<NmfModel> {
    if rank == 0 {
        return Err(DerevError::InvalidRank {
            rank,
            reason: "rank must be at least 1".into(),
        });
    }
    let (f_rows, t_cols) = v.dim();
    let mean_v = v.sum() / (f_rows * t_cols).max(1) as f64;
    let (mut w, mut x) = seeded_init(f_rows, rank, t_cols, mean_v, seed);
    for _ in 0..iterations {
        w = kl_update_basis(&w, v, &x, crate::nctf::EPS);
        x = kl_update_activations(&x, v, &w, 0.0, crate::nctf::EPS);
    }
    Ok(NmfModel { w, x, rank })
}

fn concat_frames(training: &[Spectrogram]) -> Result<Array2<f64>> {
    let first = training.first().ok_or(DerevError::EmptyTrainingSet)?;
    let f_rows = first.bins();
    let total: usize = training.iter().map(|s| s.frames()).sum();
    let mut v = Array2::<f64>::zeros((f_rows, total));
    let mut offset = 0;
    for spec in training {
        if spec.bins() != f_rows {
            return Err(DerevError::DimensionMismatch(format!(
                "training spectrogram has {} rows, expected {}",
                spec.bins(),
                f_rows
            )));
        }
        for t in 0..spec.frames() {
            for f in 0..f_rows {
                v[(f, offset + t)] = spec.values[(f, t)];
            }
        }
        offset += spec.frames();
    }
    Ok(v)
}

fn normalize_columns(w: &mut Array2<f64>) {
    for mut col in w.columns_mut() {
        let s: f64 = col.sum();
        if s > 0.0 {
            col.mapv_inplace(|v| v / s);
        }
    }
}

/// Train a low-rank dictionary on clean speech: concatenate the
/// spectrograms along time, factorize, return only the sum-normalized
/// basis.
pub fn train_basis_offline(
    training: &[Spectrogram],
    rank: usize,
    iterations: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    let v = concat_frames(training)?;
    if rank > v.ncols() {
        return Err(DerevError::InvalidRank {
            rank,
            reason: format!("exceeds the {} available training frames", v.ncols()),
        });
    }
    let model = nmf_factorize(&v, rank, iterations, seed)?;
    let mut w = model.w;
    normalize_columns(&mut w);
    Ok(w)
}

/// Build an overcomplete dictionary by sampling `rank` distinct training
/// frames with a seeded index walk: start at a uniform position, then
/// repeatedly jump by a uniform step in [1, total/rank], wrapping around
/// and skipping already-taken frames. All-zero frames are excluded up
/// front since they would be dead atoms.
pub fn sample_overcomplete_basis(
    training: &[Spectrogram],
    rank: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    if rank == 0 {
        return Err(DerevError::InvalidRank {
            rank,
            reason: "rank must be at least 1".into(),
        });
    }
    let v = concat_frames(training)?;
    let usable: Vec<usize> = (0..v.ncols()).filter(|&t| v.column(t).sum() > 0.0).collect();
    if usable.len() < rank {
        return Err(DerevError::InsufficientFrames {
            need: rank,
            have: usable.len(),
        });
    }
    let n = usable.len();
    let max_step = (n / rank).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut visited = vec![false; n];
    let mut w = Array2::<f64>::zeros((v.nrows(), rank));
    let mut pos = rng.gen_range(0..n);
    for r in 0..rank {
        while visited[pos] {
            pos = (pos + 1) % n;
        }
        visited[pos] = true;
        let col = v.column(usable[pos]);
        let s: f64 = col.sum();
        for f in 0..v.nrows() {
            w[(f, r)] = col[f] / s;
        }
        pos = (pos + rng.gen_range(1..=max_step)) % n;
    }
    Ok(w)
}

const BASIS_MAGIC: &[u8; 6] = b"NCTFW1";

/// Persist a basis: magic, F and R as little-endian u64, then the F·R
/// entries as little-endian f64 in column-major order.
pub fn write_basis<P: AsRef<Path>>(w: &Array2<f64>, path: P) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    out.write_all(BASIS_MAGIC)?;
    out.write_all(&(w.nrows() as u64).to_le_bytes())?;
    out.write_all(&(w.ncols() as u64).to_le_bytes())?;
    for r in 0..w.ncols() {
        for f in 0..w.nrows() {
            out.write_all(&w[(f, r)].to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read a basis file written by [`write_basis`], validating the header
/// and that every entry is a finite non-negative value.
pub fn read_basis<P: AsRef<Path>>(path: P) -> Result<Array2<f64>> {
    let file = std::fs::File::open(path)?;
    let mut input = BufReader::new(file);
    let mut magic = [0u8; 6];
    input.read_exact(&mut magic)?;
    if &magic != BASIS_MAGIC {
        return Err(DerevError::CorruptHeader(
            "not a basis file (bad magic)".into(),
        ));
    }
    let mut u64buf = [0u8; 8];
    input.read_exact(&mut u64buf)?;
    let f_rows = u64::from_le_bytes(u64buf) as usize;
    input.read_exact(&mut u64buf)?;
    let rank = u64::from_le_bytes(u64buf) as usize;
    if f_rows == 0 || rank == 0 || f_rows.checked_mul(rank).is_none() {
        return Err(DerevError::CorruptHeader(format!(
            "implausible basis dimensions {f_rows}×{rank}"
        )));
    }
    let mut w = Array2::<f64>::zeros((f_rows, rank));
    let mut f64buf = [0u8; 8];
    for r in 0..rank {
        for f in 0..f_rows {
            input.read_exact(&mut f64buf)?;
            let v = f64::from_le_bytes(f64buf);
            if !v.is_finite() || v < 0.0 {
                return Err(DerevError::CorruptHeader(format!(
                    "basis entry ({f},{r}) = {v} is not a finite non-negative value"
                )));
            }
            w[(f, r)] = v;
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nctf::{kl_raw, EPS};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn spec(values: Array2<f64>) -> Spectrogram {
        Spectrogram { values, power_p: 1 }
    }

    fn rand_matrix(f: usize, t: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((f, t), |_| rng.gen_range(0.05..2.0))
    }

    #[test]
    fn rank_one_data_is_recovered() {
        let u = array![0.5, 1.0, 2.0, 0.25];
        let vrow = array![1.0, 3.0, 0.5, 2.0, 1.5];
        let mut v = Array2::<f64>::zeros((4, 5));
        for f in 0..4 {
            for t in 0..5 {
                v[(f, t)] = u[f] * vrow[t];
            }
        }
        let model = nmf_factorize(&v, 1, 50, 42).unwrap();
        let kl = kl_raw(&v, &model.model_spectrogram());
        assert!(kl <= 1e-6 * v.sum(), "kl = {kl}");
    }

    #[test]
    fn zero_iterations_returns_seeded_init() {
        let v = rand_matrix(3, 4, 1);
        let a = nmf_factorize(&v, 2, 0, 9).unwrap();
        let mean = v.sum() / 12.0;
        let (w0, x0) = seeded_init(3, 2, 4, mean, 9);
        assert_eq!(a.w, w0);
        assert_eq!(a.x, x0);
    }

    #[test]
    fn equal_seeds_give_bit_identical_models() {
        let v = rand_matrix(5, 7, 2);
        let a = nmf_factorize(&v, 3, 12, 77).unwrap();
        let b = nmf_factorize(&v, 3, 12, 77).unwrap();
        assert_eq!(a.w, b.w);
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn rank_zero_is_invalid() {
        let v = rand_matrix(2, 2, 3);
        assert!(matches!(
            nmf_factorize(&v, 0, 1, 0),
            Err(DerevError::InvalidRank { .. })
        ));
    }

    #[test]
    fn kl_never_increases_across_updates() {
        let v = rand_matrix(6, 10, 4);
        let model = nmf_factorize(&v, 3, 0, 5).unwrap();
        let (mut w, mut x) = (model.w, model.x);
        let mut prev = kl_raw(&v, &w.dot(&x));
        for _ in 0..25 {
            w = kl_update_basis(&w, &v, &x, EPS);
            let after_w = kl_raw(&v, &w.dot(&x));
            assert!(after_w <= prev + 1e-9 * (1.0 + prev.abs()));
            x = kl_update_activations(&x, &v, &w, 0.0, EPS);
            let after_x = kl_raw(&v, &w.dot(&x));
            assert!(after_x <= after_w + 1e-9 * (1.0 + after_w.abs()));
            prev = after_x;
        }
    }

    #[test]
    fn sparsity_shrinks_activations_monotonically() {
        let v = rand_matrix(4, 6, 6);
        let model = nmf_factorize(&v, 2, 5, 7).unwrap();
        let lambdas = [0.0, 0.5, 5.0, 50.0];
        let mut prev_sum = f64::INFINITY;
        for &l in &lambdas {
            let x2 = kl_update_activations(&model.x, &v, &model.w, l, EPS);
            let s = x2.sum();
            assert!(s <= prev_sum);
            prev_sum = s;
        }
    }

    #[test]
    fn training_on_single_spectrogram_reduces_to_factorize() {
        let v = rand_matrix(4, 9, 8);
        let w_trained = train_basis_offline(&[spec(v.clone())], 2, 7, 3).unwrap();
        let mut w_direct = nmf_factorize(&v, 2, 7, 3).unwrap().w;
        normalize_columns(&mut w_direct);
        assert_eq!(w_trained, w_direct);
    }

    #[test]
    fn training_is_scale_invariant_under_fixed_seed() {
        let v = rand_matrix(5, 11, 9);
        let w1 = train_basis_offline(&[spec(v.clone())], 3, 10, 4).unwrap();
        let w2 = train_basis_offline(&[spec(v.mapv(|x| 2.0 * x))], 3, 10, 4).unwrap();
        for (a, b) in w1.iter().zip(w2.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn training_rejects_rank_beyond_frames() {
        let v = rand_matrix(3, 4, 10);
        assert!(matches!(
            train_basis_offline(&[spec(v)], 5, 3, 0),
            Err(DerevError::InvalidRank { .. })
        ));
        assert!(matches!(
            train_basis_offline(&[], 1, 3, 0),
            Err(DerevError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn sampled_basis_columns_come_from_training_frames() {
        let v = rand_matrix(4, 12, 11);
        let w = sample_overcomplete_basis(&[spec(v.clone())], 5, 13).unwrap();
        for r in 0..5 {
            let col = w.column(r);
            let found = (0..v.ncols()).any(|t| {
                let frame = v.column(t);
                let s: f64 = frame.sum();
                (0..4).all(|f| (col[f] - frame[f] / s).abs() < 1e-12)
            });
            assert!(found, "column {r} does not match any training frame");
        }
        let again = sample_overcomplete_basis(&[spec(v)], 5, 13).unwrap();
        assert_eq!(w, again);
    }

    #[test]
    fn exhaustive_sampling_is_a_permutation() {
        let v = rand_matrix(3, 6, 12);
        let w = sample_overcomplete_basis(&[spec(v.clone())], 6, 1).unwrap();
        let mut matched = vec![false; 6];
        for r in 0..6 {
            let col = w.column(r);
            let hit = (0..6).find(|&t| {
                let frame = v.column(t);
                let s: f64 = frame.sum();
                !matched[t] && (0..3).all(|f| (col[f] - frame[f] / s).abs() < 1e-12)
            });
            matched[hit.expect("every sampled column is a training frame")] = true;
        }
        assert!(matched.iter().all(|&m| m));
    }

    #[test]
    fn zero_frames_are_excluded_from_sampling() {
        let mut v = rand_matrix(3, 5, 14);
        for f in 0..3 {
            v[(f, 2)] = 0.0;
        }
        let err = sample_overcomplete_basis(&[spec(v)], 5, 0).unwrap_err();
        match err {
            DerevError::InsufficientFrames { need, have } => {
                assert_eq!((need, have), (5, 4));
            }
            other => panic!("expected InsufficientFrames, got {other:?}"),
        }
    }

    #[test]
    fn basis_file_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.nctfw");
        let w = rand_matrix(7, 3, 15);
        write_basis(&w, &path).unwrap();
        let back = read_basis(&path).unwrap();
        assert_eq!(w, back);
    }

    #[test]
    fn garbage_basis_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.nctfw");
        std::fs::write(&path, b"not a basis at all").unwrap();
        assert!(matches!(
            read_basis(&path),
            Err(DerevError::CorruptHeader(_))
        ));
    }
}
