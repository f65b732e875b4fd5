use std::collections::BTreeSet;

use mass_core::analysis::linalg::train_test_split;
use mass_core::analysis::{
    distill, distill_objective, fit_theory, heldout_r2, jaccard, pca, pearson, significant_count,
    ActivationMatrix,
};
use mass_core::model::TermCatalog;
use mass_core::physics::{sample_batch, SystemId};
use mass_core::seed::derived_rng;
use mass_core::train::{ema_update, lr_schedule};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..64).prop_filter("nonzero", |v| v.iter().any(|x| *x != 0.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn significant_count_is_monotone_in_fraction(v in weights(), a in 0.01f64..1.0, b in 0.01f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let k_lo = significant_count(&v, lo).unwrap();
        let k_hi = significant_count(&v, hi).unwrap();
        prop_assert!(k_lo <= k_hi);
        prop_assert!(k_hi <= v.len() && k_lo >= 1);
    }

    #[test]
    fn significant_count_ignores_scale_and_sign(v in weights(), e in -20i32..20, f in 0.05f64..1.0) {
        // Powers of two scale exactly, so the count must not move at all.
        let s = 2f64.powi(e);
        let scaled: Vec<f64> = v.iter().map(|x| -s * x).collect();
        prop_assert_eq!(significant_count(&v, f).unwrap(), significant_count(&scaled, f).unwrap());
    }

    #[test]
    fn pca_ratios_form_a_distribution(seed in 0u64..10_000, rows in 4usize..30, cols in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = ActivationMatrix::new(rows, cols, values, Vec::new()).unwrap();
        let p = pca(&m).unwrap();
        let total: f64 = p.explained.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "sum {}", total);
        prop_assert!(p.explained.windows(2).all(|w| w[0] + 1e-12 >= w[1]));
        prop_assert!(p.explained.iter().all(|r| *r >= -1e-12 && *r <= 1.0 + 1e-12));
        prop_assert!(p.loading.iter().sum::<f64>() >= -1e-12);
        prop_assert_eq!(p.projection.len(), rows);
    }

    #[test]
    fn theory_label_survives_rescaling(
        seed in 0u64..10_000,
        c1 in prop_oneof![-3.0f64..-0.2, 0.2f64..3.0],
        c2 in prop_oneof![-3.0f64..-0.2, 0.2f64..3.0],
        alpha in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0],
        shift in -4.0f64..4.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 64;
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s: Vec<f64> = (0..n).map(|i| c1 * t[i] + c2 * v[i] + 0.01 * rng.random_range(-1.0..1.0)).collect();
        let base = fit_theory(&s, &t, &v).unwrap();
        let moved: Vec<f64> = s.iter().map(|x| alpha * x + shift).collect();
        let other = fit_theory(&moved, &t, &v).unwrap();
        prop_assert_eq!(base.label, other.label);
        prop_assert!((base.r2 - other.r2).abs() < 1e-8);
    }

    #[test]
    fn distilled_coefficients_beat_random_feasible_points(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, k) = (60, 5);
        let a = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
        let u = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let rows: Vec<usize> = (0..n).collect();
        let fit = distill(&a, &u, &v, &rows, &rows).unwrap();
        let best = distill_objective(&a, &u, &v, &fit.c, &rows);
        for _ in 0..100 {
            let c: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
            prop_assert!(best <= distill_objective(&a, &u, &v, &c, &rows) + 1e-9);
        }
        for (c, d) in fit.c.iter().zip(&fit.d) {
            prop_assert!((c + d - 1.0).abs() <= f64::EPSILON * (1.0 + c.abs()));
        }
    }

    #[test]
    fn heldout_r2_ignores_column_recombination(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, k) = (80, 4);
        let x = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(n, 2, |i, j| x[(i, j)] - 0.5 * x[(i, 3)] + 0.1 * rng.random_range(-1.0..1.0));
        // Unit upper-triangular mixing is always invertible.
        let m = DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else if i < j { rng.random_range(-2.0..2.0) } else { 0.0 });
        let (train, test) = train_test_split(n, 0.8, &mut rng);
        let r1 = heldout_r2(&x, &y, &train, &test).unwrap();
        let r2 = heldout_r2(&(&x * &m), &y, &train, &test).unwrap();
        prop_assert!((r1 - r2).abs() < 1e-9, "{} vs {}", r1, r2);
    }

    #[test]
    fn ema_stays_between_old_and_new(old in prop::collection::vec(-5.0f64..5.0, 1..16), shift in -5.0f64..5.0, decay in 0.0f64..1.0) {
        let params: Vec<f64> = old.iter().map(|x| x + shift).collect();
        let mut ema = old.clone();
        ema_update(&mut ema, &params, decay);
        for ((e, o), p) in ema.iter().zip(&old).zip(&params) {
            prop_assert!(*e >= o.min(*p) - 1e-12 && *e <= o.max(*p) + 1e-12);
        }
        let mut fixed = params.clone();
        ema_update(&mut fixed, &params, decay);
        prop_assert_eq!(fixed, params);
    }

    #[test]
    fn lr_schedule_is_bounded(step in 0usize..5000, len in 1usize..5000, warmup in 0usize..200, base in 1e-6f64..1.0) {
        let lr = lr_schedule(step.min(len - 1), len, warmup, base);
        prop_assert!((0.0..=base * (1.0 + 1e-12)).contains(&lr));
    }

    #[test]
    fn pearson_is_a_symmetric_correlation(seed in 0u64..10_000, n in 3usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = pearson(&a, &b).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        prop_assert!((r - pearson(&b, &a).unwrap()).abs() < 1e-14);
        prop_assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jaccard_is_a_similarity(a in prop::collection::btree_set(0usize..40, 1..20), b in prop::collection::btree_set(0usize..40, 1..20)) {
        let j = jaccard(&a, &b);
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(j, jaccard(&b, &a));
        prop_assert_eq!(jaccard(&a, &a), 1.0);
        let disjoint: BTreeSet<usize> = b.iter().map(|x| x + 100).collect();
        prop_assert_eq!(jaccard(&a, &disjoint), 0.0);
    }

    #[test]
    fn samples_respect_the_domain(seed in 0u64..1000, idx in 0usize..10) {
        let sys = SystemId::ALL[idx];
        let spec = sys.spec();
        let b = sample_batch(&spec, 16, &mut derived_rng(seed, "prop", 0)).unwrap();
        for i in 0..b.len() {
            prop_assert!(spec.check_domain(b.x_row(i), b.y_row(i)).is_ok());
            prop_assert_eq!(b.xdot_row(i), b.y_row(i));
            prop_assert!(b.ydot_row(i).iter().all(|v| v.is_finite()));
        }
    }
}

#[test]
fn catalog_names_are_unique() {
    let names = TermCatalog::standard().names();
    let set: BTreeSet<&String> = names.iter().collect();
    assert_eq!(set.len(), names.len());
}
