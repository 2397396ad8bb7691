//! Property tests for the crate's core invariants.

use proptest::prelude::*;

use timegrain::embedding::{revin_denormalize, revin_normalize};
use timegrain::numerics::{Graph, Tensor};
use timegrain::spectral::{irfft, rfft};
use timegrain::tasks::{detect, point_adjust};

fn finite_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0..100.0f64, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fft_round_trip_recovers_any_signal(
        log_d in 3usize..8,
        seed_data in finite_vec(256),
    ) {
        let d = 1 << log_d;
        let x = Tensor::new(vec![1, d], seed_data[..d].to_vec()).unwrap();
        let s = rfft(&x).unwrap();
        let back = irfft(&s.bins, d).unwrap();
        prop_assert!(x.max_abs_diff(&back) < 1e-9);
        // DC and Nyquist bins are purely real
        prop_assert_eq!(s.bins.im.data()[0], 0.0);
        prop_assert_eq!(s.bins.im.data()[s.bin_count() - 1], 0.0);
    }

    #[test]
    fn softmax_rows_are_simplex_points(rows in 1usize..5, cols in 1usize..8, data in finite_vec(40)) {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![rows, cols], data[..rows * cols].to_vec()).unwrap());
        let y = g.softmax_rows(x).unwrap();
        for r in 0..rows {
            let row = g.value(y).row(r);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            let sum: f64 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn revin_round_trip(
        data in prop::collection::vec(-50.0..50.0f64, 8..64),
        gamma in prop::sample::select(vec![0.5f64, 1.0, 2.0]),
        beta in -2.0..2.0f64,
    ) {
        let (y, stats) = revin_normalize(&data, gamma, beta).unwrap();
        let back = revin_denormalize(&y, &stats, gamma, beta).unwrap();
        for (a, b) in data.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn point_adjust_idempotent_and_monotone(
        truth in prop::collection::vec(any::<bool>(), 30),
        pred in prop::collection::vec(any::<bool>(), 30),
        extra in 0usize..30,
    ) {
        let adj = point_adjust(&pred, &truth).unwrap();
        prop_assert_eq!(point_adjust(&adj, &truth).unwrap(), adj.clone());
        let mut pred2 = pred.clone();
        pred2[extra] = true;
        let adj2 = point_adjust(&pred2, &truth).unwrap();
        for i in 0..30 {
            prop_assert!(!adj[i] || adj2[i]);
        }
    }

    #[test]
    fn detection_is_rank_invariant(
        val in prop::collection::vec(0.0..1.0f64, 10..40),
        scores in prop::collection::vec(0.0..1.0f64, 10..40),
        k_frac in 0.0..1.0f64,
    ) {
        // exact rank invariance holds at non-interpolating quantile
        // positions (an interpolated threshold is not order-preserving
        // under nonlinear transforms for scores inside the gap)
        let k = ((val.len() - 1) as f64 * k_frac).round() as usize;
        let q = k as f64 / (val.len() - 1) as f64;
        let l1 = detect(&scores, &val, q).unwrap();
        // strictly monotone transform, threshold recomputed on the
        // transformed validation scores
        let t = |v: f64| (2.0 * v).exp() + v;
        let val_t: Vec<f64> = val.iter().map(|&v| t(v)).collect();
        let scores_t: Vec<f64> = scores.iter().map(|&v| t(v)).collect();
        let l2 = detect(&scores_t, &val_t, q).unwrap();
        prop_assert_eq!(l1, l2);
    }

    #[test]
    fn splits_never_leak(
        len in 10usize..500,
        a in 0.1..0.8f64,
        b in 0.05..0.2f64,
    ) {
        use timegrain::data::{parse_delimited, split};
        let text: String = (0..len).map(|i| format!("{i}\n")).collect();
        let mut ds = parse_delimited(&text, false, "t".into()).unwrap();
        let c = 1.0 - a - b;
        prop_assume!(c > 0.0);
        split(&mut ds, (a, b, c)).unwrap();
        prop_assert_eq!(ds.splits.train.end, ds.splits.val.start);
        prop_assert_eq!(ds.splits.val.end, ds.splits.test.start);
        prop_assert_eq!(ds.splits.test.end, len);
    }
}
