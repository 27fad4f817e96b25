use funsub::fdata::DesignMatrix;
use funsub::flm::{fit_penalized, PenalizedSystem};
use funsub::sim::imse;
use funsub::spline::build_knots;
use funsub::subsample::{draw_with_replacement, probs_from_scores};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn design(n: usize, d: usize, vals: &[f64]) -> DesignMatrix {
    let kv = build_knots(0.0, 1.0, d - 4, 3).unwrap();
    DesignMatrix::from_entries(
        DMatrix::from_fn(n, d, |i, j| vals[(i * d + j) % vals.len()]),
        &kv,
        2,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probabilities_sum_to_one_above_floor(
        scores in prop::collection::vec(0.0f64..1e3, 1..200),
        alpha in 0.0f64..=1.0,
    ) {
        prop_assume!(alpha > 0.0 || scores.iter().any(|&s| s > 0.0));
        let pv = probs_from_scores(&scores, alpha).unwrap();
        let n = scores.len() as f64;
        prop_assert!((pv.total() - 1.0).abs() < 1e-12);
        for &p in &pv.probs {
            prop_assert!(p >= alpha / n * (1.0 - 1e-12));
        }
    }

    #[test]
    fn probabilities_ignore_score_scale(
        scores in prop::collection::vec(0.01f64..1e3, 1..100),
        scale in 1e-6f64..1e6,
    ) {
        let a = probs_from_scores(&scores, 0.05).unwrap();
        let scaled: Vec<f64> = scores.iter().map(|s| s * scale).collect();
        let b = probs_from_scores(&scaled, 0.05).unwrap();
        for (x, y) in a.probs.iter().zip(&b.probs) {
            prop_assert!((x - y).abs() <= 1e-12 * x.max(1e-300) + 1e-15);
        }
    }

    #[test]
    fn basis_partition_of_unity(
        interior in 0usize..30,
        degree in 0usize..6,
        t in 0.0f64..=1.0,
    ) {
        let kv = build_knots(0.0, 1.0, interior, degree).unwrap();
        let row = kv.basis_matrix(&[t]).unwrap();
        prop_assert!((row.sum() - 1.0).abs() < 1e-12);
        prop_assert!(row.iter().all(|&v| v >= -1e-14));
    }

    #[test]
    fn draws_stay_in_range(
        scores in prop::collection::vec(0.01f64..10.0, 1..50),
        l in 1usize..500,
        seed in any::<u64>(),
    ) {
        let pv = probs_from_scores(&scores, 0.01).unwrap();
        let draw = draw_with_replacement(&pv, l, seed).unwrap();
        prop_assert_eq!(draw.indices.len(), l);
        for (&i, &w) in draw.indices.iter().zip(&draw.weights) {
            prop_assert!(i < scores.len());
            prop_assert!((w - 1.0 / (l as f64 * pv.probs[i])).abs() <= 1e-12 * w);
        }
    }

    #[test]
    fn weight_scale_keeps_the_minimizer(
        vals in prop::collection::vec(-1.0f64..1.0, 60),
        y in prop::collection::vec(-3.0f64..3.0, 12),
        w in prop::collection::vec(0.1f64..5.0, 12),
        k in 0.01f64..100.0,
        lambda in 1e-4f64..10.0,
    ) {
        let d = design(12, 5, &vals);
        let a = fit_penalized(&d, &y, lambda, Some(&w)).unwrap();
        let wk: Vec<f64> = w.iter().map(|v| v * k).collect();
        let b = fit_penalized(&d, &y, lambda * k, Some(&wk)).unwrap();
        let scale = a.coefficients.iter().fold(1.0f64, |m, c| m.max(c.abs()));
        for (x, z) in a.coefficients.iter().zip(&b.coefficients) {
            prop_assert!((x - z).abs() <= 1e-7 * scale);
        }
    }

    #[test]
    fn df_decreases_with_lambda(
        vals in prop::collection::vec(-1.0f64..1.0, 90),
        y in prop::collection::vec(-3.0f64..3.0, 15),
    ) {
        let d = design(15, 6, &vals);
        let sys = PenalizedSystem::new(&d, &y, None).unwrap();
        let mut prev = f64::INFINITY;
        for lambda in [1e-6, 1e-3, 1e-1, 1.0, 1e1, 1e3] {
            let df = sys.solve(lambda).unwrap().df;
            prop_assert!(df <= prev + 1e-8);
            prev = df;
        }
    }

    #[test]
    fn imse_is_nonnegative(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
        let v = imse(|t| a * t * t + b, |t| c * t, 201);
        prop_assert!(v >= 0.0);
    }
}
