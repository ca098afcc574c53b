//! Randomized invariant checks over the public API.

use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nctfderev::nctf::{baseline_update_h, baseline_update_s};
use nctfderev::weighted::weighted_update_s;
use nctfderev::{
    integrated::integrated_gain, kl_divergence, lambert_w0, read_wav, rowwise_convolve, stack,
    stft_forward, write_wav, FitReport, NmfModel, RirModel, Signal, Spectrogram, StftConfig,
    WeightedState, EPS,
};

fn mat(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.gen_range(lo..hi))
}

fn spec(values: Array2<f64>) -> Spectrogram {
    Spectrogram { values, power_p: 1 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn convolution_is_linear_in_the_clean_spectrogram(
        seed in 0u64..1_000_000,
        k in 1usize..5,
        t in 1usize..8,
        lh in 1usize..4,
        alpha in 0.01f64..100.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s1 = mat(&mut rng, k, t, 0.0, 1.0);
        let s2 = mat(&mut rng, k, t, 0.0, 1.0);
        let h = RirModel { h: mat(&mut rng, k, lh, 0.0, 1.0) };

        let conv = |v: &Array2<f64>| rowwise_convolve(&spec(v.clone()), &h).unwrap().values;
        let scaled = conv(&(&s1 * alpha));
        let base = conv(&s1) * alpha;
        for (a, b) in scaled.iter().zip(base.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        let sum = conv(&(&s1 + &s2));
        let parts = conv(&s1) + conv(&s2);
        for (a, b) in sum.iter().zip(parts.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn updates_preserve_non_negativity_and_finiteness(
        seed in 0u64..1_000_000,
        k in 1usize..6,
        t in 2usize..10,
        lh in 1usize..4,
        rho in 0.05f64..0.95,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = spec(mat(&mut rng, k, t, 0.0, 2.0));
        let s = spec(mat(&mut rng, k, t, 0.0, 2.0));
        let h = RirModel { h: mat(&mut rng, k, lh, 0.0, 1.0) };

        let h1 = baseline_update_h(&h, &s, &y, EPS).unwrap();
        prop_assert!(h1.h.iter().all(|v| v.is_finite() && *v >= 0.0));
        let s1 = baseline_update_s(&s, &h, &y, 0.01, EPS).unwrap();
        prop_assert!(s1.values.iter().all(|v| v.is_finite() && *v >= 0.0));

        let r = 2;
        let state = WeightedState {
            s: s.values.clone(),
            h: RirModel { h: h.h.clone() },
            nmf: NmfModel {
                w: mat(&mut rng, k, r, 0.0, 1.0),
                x: mat(&mut rng, r, t, 0.0, 1.0),
                rank: r,
            },
            rho,
        };
        let s2 = weighted_update_s(&state, &y, 0.01, EPS).unwrap();
        prop_assert!(s2.iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn kl_divergence_is_non_negative_and_zero_at_equality(
        seed in 0u64..1_000_000,
        k in 1usize..5,
        t in 1usize..8,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = spec(mat(&mut rng, k, t, 0.0, 2.0));
        let mut other = y.clone();
        other.values += 0.1;
        prop_assert_eq!(kl_divergence(&y, &y), 0.0);
        prop_assert!(kl_divergence(&y, &other) > 0.0);
    }

    #[test]
    fn stacked_columns_mirror_base_frames(
        seed in 0u64..1_000_000,
        k in 1usize..5,
        t in 1usize..9,
        t_st in 1usize..4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = spec(mat(&mut rng, k, t, 0.0, 1.0));
        let st = stack(&s, t_st).unwrap();
        prop_assert_eq!(st.values.dim(), (k * t_st, t));
        for l in 0..t_st {
            for f in 0..k {
                for col in 0..t {
                    let want = if col + l < t { s.values[(f, col + l)] } else { 0.0 };
                    prop_assert_eq!(st.values[(l * k + f, col)], want);
                }
            }
        }
    }

    #[test]
    fn lambert_w_is_monotone_and_inverts_its_defining_map(
        z1 in 0.0f64..1e6,
        z2 in 0.0f64..1e6,
        w in 0.0f64..10.0,
    ) {
        let (lo, hi) = if z1 <= z2 { (z1, z2) } else { (z2, z1) };
        prop_assert!(lambert_w0(lo).unwrap() <= lambert_w0(hi).unwrap() + 1e-12);
        let z = w * w.exp();
        let back = lambert_w0(z).unwrap();
        prop_assert!((back - w).abs() <= 1e-9 * w.max(1.0));
    }

    #[test]
    fn wav_round_trip_stays_within_quantization(
        seed in 0u64..1_000_000,
        len in 1usize..4000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sig = Signal::new(samples.clone(), 16_000);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        write_wav(&sig, &path).unwrap();
        let back = read_wav(&path).unwrap();
        prop_assert_eq!(back.len(), len);
        for (a, b) in samples.iter().zip(back.samples.iter()) {
            prop_assert!((a - b).abs() <= 1.5 / 32768.0, "{} vs {}", a, b);
        }
    }

    #[test]
    fn gain_never_exceeds_the_inverse_direct_path(
        seed in 0u64..1_000_000,
        k in 1usize..5,
        t in 1usize..8,
        lh in 1usize..4,
        r in 1usize..4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = mat(&mut rng, k, r, 0.0, 1.0);
        let x = mat(&mut rng, r, t, 0.0, 1.0);
        let h = RirModel { h: mat(&mut rng, k, lh, 0.05, 1.0) };
        let g = integrated_gain(&h, &w, &x, EPS);
        for ki in 0..k {
            let bound = 1.0 / h.h[(ki, 0)];
            for ti in 0..t {
                prop_assert!(g[(ki, ti)] <= bound * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn frame_count_formula_matches_the_transform(
        seed in 0u64..1_000_000,
        extra in 0usize..5000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = StftConfig::from_frame_ms(16.0, 16_000, 1).unwrap();
        let len = cfg.frame_len + extra;
        let samples: Vec<f64> = (0..len).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let cpx = stft_forward(&Signal::new(samples, 16_000), &cfg).unwrap();
        prop_assert_eq!(cpx.frames(), cfg.frames_for_len(len));
    }

    #[test]
    fn cost_trace_csv_round_trips_exact_values(
        rows in prop::collection::vec((0.0f64..1e6, 0.0f64..1e6, 0.0f64..1e3), 1..20),
    ) {
        let mut report = FitReport::new(["a", "b", "c"]);
        for &(x, y, z) in &rows {
            report.push(x, y, z);
        }
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for (line, &(x, y, z)) in text.lines().skip(1).zip(rows.iter()) {
            let cells: Vec<&str> = line.split(',').collect();
            prop_assert_eq!(cells[1].parse::<f64>().unwrap(), x);
            prop_assert_eq!(cells[2].parse::<f64>().unwrap(), y);
            prop_assert_eq!(cells[3].parse::<f64>().unwrap(), z);
        }
    }
}
