use jumplab::dataset::Problem;
use jumplab::learners::{ConfusionMatrix, EvalReport, Forest, ForestConfig, Knn, Matrix, argmax_count, mean_sd};
use jumplab::selection::{Axis, SelectionConfig, discretize, estimate_mi, mi_codes, select_features};
use proptest::prelude::*;

fn labelled(rows: usize, dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<usize>)> {
    (prop::collection::vec(-50i32..50, rows * dim), prop::collection::vec(0usize..2, rows))
        .prop_map(|(x, y)| (x.into_iter().map(f64::from).collect(), y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mi_is_symmetric_and_nonnegative(x in prop::collection::vec(-1e3f64..1e3, 10..200), seed in any::<u64>()) {
        let y: Vec<f64> = x.iter().enumerate().map(|(k, v)| v.sin() * 10.0 + ((seed >> (k % 60)) & 1) as f64).collect();
        let a = estimate_mi(Axis::Real(&x), Axis::Real(&y), 8).unwrap();
        let b = estimate_mi(Axis::Real(&y), Axis::Real(&x), 8).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-12);
        prop_assert!(a.value >= -1e-12);
    }

    #[test]
    fn merging_bins_never_raises_mi(x in prop::collection::vec(-1e3f64..1e3, 10..200), y in prop::collection::vec(0u32..3, 200)) {
        let y = &y[..x.len()];
        let fine = discretize(&x, 8);
        let coarse: Vec<u32> = fine.iter().map(|c| c / 2).collect();
        prop_assert!(mi_codes(&coarse, y, 4, 3) <= mi_codes(&fine, y, 8, 3) + 1e-12);
    }

    #[test]
    fn report_recomputes_from_the_matrices(
        reps in prop::collection::vec(prop::collection::vec((0usize..3, 0usize..3), 20..60), 1..6),
    ) {
        let mats: Vec<ConfusionMatrix> = reps
            .iter()
            .map(|r| {
                let (a, p): (Vec<usize>, Vec<usize>) = r.iter().copied().unzip();
                ConfusionMatrix::from_predictions(Problem::Trinary, &a, &p)
            })
            .collect();
        let report = EvalReport::from_matrices(Problem::Trinary, &mats);
        prop_assert_eq!(report.replicates, mats.len());
        for (k, (name, mean, sd)) in report.metrics.iter().enumerate() {
            let xs: Vec<f64> = mats.iter().map(|m| m.metrics().named()[k].1).collect();
            prop_assert_eq!((*mean, *sd), mean_sd(&xs), "{}", name);
        }
        let acc: Vec<f64> = reps
            .iter()
            .map(|r| r.iter().filter(|(a, p)| a == p).count() as f64 / r.len() as f64)
            .collect();
        let (m, _) = report.get("acc").unwrap();
        prop_assert!((m - mean_sd(&acc).0).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn forest_predicts_the_vote_majority((x, y) in labelled(60, 4), seed in any::<u64>()) {
        prop_assume!(y.contains(&0) && y.contains(&1));
        let m = Matrix::new(60, 4, x).unwrap();
        let cfg = ForestConfig { trees: 15, seed, ..ForestConfig::default() };
        let f = Forest::train(&m, &y, 2, &cfg).unwrap();
        prop_assert_eq!(&f, &Forest::train(&m, &y, 2, &cfg).unwrap());
        for k in 0..60 {
            let votes = f.votes(m.row(k));
            prop_assert_eq!(votes.iter().sum::<usize>(), 15);
            prop_assert_eq!(f.predict(m.row(k)), argmax_count(&votes));
        }
    }

    #[test]
    fn one_neighbour_memorizes_distinct_points((x, y) in labelled(50, 3)) {
        let rows: Vec<Vec<f64>> = x.chunks(3).map(<[f64]>::to_vec).collect();
        let mut seen = rows.clone();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        seen.dedup();
        prop_assume!(seen.len() == rows.len());
        let m = Matrix::from_rows(&rows).unwrap();
        let knn = Knn::train(&m, &y, 2, 1).unwrap();
        prop_assert_eq!(knn.predict_all(&m), y);
    }

    #[test]
    fn screening_ignores_instance_order((x, y) in labelled(80, 5), perm_seed in any::<u64>()) {
        let cfg = SelectionConfig { bins: 6, trials: 30, seed: 11, max_features: None };
        let a = select_features(&x, 5, &y, &cfg).unwrap();
        let mut order: Vec<usize> = (0..80).collect();
        order.sort_by_key(|&k| (k as u64).wrapping_mul(perm_seed | 1).rotate_left(23) ^ perm_seed);
        let px: Vec<f64> = order.iter().flat_map(|&k| x[k * 5..k * 5 + 5].to_vec()).collect();
        let py: Vec<usize> = order.iter().map(|&k| y[k]).collect();
        let b = select_features(&px, 5, &py, &cfg).unwrap();
        prop_assert_eq!(&a.screened_out, &b.screened_out);
        for j in 0..5 {
            prop_assert!((a.raw_mi[j] - b.raw_mi[j]).abs() <= 1e-12);
            prop_assert!((a.baseline[j] - b.baseline[j]).abs() <= 1e-12);
        }
    }
}
