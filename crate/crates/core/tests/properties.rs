mod common;

use hyposcreen_core::config::PipelineConfig;
use hyposcreen_core::ensemble::select_top_models;
use hyposcreen_core::evaluate::roc_auroc;
use hyposcreen_core::explain::{silhouette_score, tree_shap};
use hyposcreen_core::ingest::Expression;
use hyposcreen_core::preprocess::smote_oversample;
use hyposcreen_core::rng::from_seed;
use hyposcreen_core::stats::{fisher_exact, normal_approx_ci, z_two_proportions};
use hyposcreen_core::Matrix;
use proptest::prelude::*;

proptest! {
    #[test]
    fn auroc_bounded_monotone_invariant_and_antisymmetric(
        pairs in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..120),
    ) {
        let (scores, labels): (Vec<f64>, Vec<bool>) = pairs.into_iter().unzip();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let roc = roc_auroc(&scores, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&roc.auroc));
        for w in roc.points.windows(2) {
            prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
        let last = roc.points.last().unwrap();
        prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        let squashed: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        prop_assert!((roc_auroc(&squashed, &labels).unwrap().auroc - roc.auroc).abs() < 1e-12);
        let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((roc_auroc(&flipped, &labels).unwrap().auroc - (1.0 - roc.auroc)).abs() < 1e-12);
    }

    #[test]
    fn fisher_p_is_a_probability_and_row_symmetric(a in 0u64..15, b in 0u64..15, c in 0u64..15, d in 0u64..15) {
        prop_assume!(a + b > 0 && c + d > 0 && a + c > 0 && b + d > 0);
        let r = fisher_exact(a, b, c, d).unwrap();
        prop_assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        let s = fisher_exact(c, d, a, b).unwrap();
        prop_assert!((r.p_value - s.p_value).abs() < 1e-12);
    }

    #[test]
    fn z_test_antisymmetric(x1 in 5u32..100, extra1 in 5u32..200, x2 in 5u32..100, extra2 in 5u32..200) {
        let (n1, n2) = ((x1 + extra1) as f64, (x2 + extra2) as f64);
        let r = z_two_proportions(x1 as f64, n1, x2 as f64, n2).unwrap();
        let s = z_two_proportions(x2 as f64, n2, x1 as f64, n1).unwrap();
        prop_assert!((r.statistic + s.statistic).abs() < 1e-12);
        prop_assert!((r.p_value - s.p_value).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&r.p_value));
    }

    #[test]
    fn ci_is_centred_on_rate(events in 0u32..500, extra in 1u32..500) {
        let n = (events + extra) as f64;
        let ci = normal_approx_ci(events as f64, n, 0.95, false);
        prop_assert!(ci.lo <= ci.rate && ci.rate <= ci.hi);
        prop_assert!(ci.half_width >= 0.0);
        prop_assert!(((ci.hi - ci.rate) - (ci.rate - ci.lo)).abs() < 1e-12);
        let t = normal_approx_ci(events as f64, n, 0.95, true);
        prop_assert!(t.lo >= 0.0 && t.hi <= 1.0);
    }

    #[test]
    fn silhouette_bounded(
        pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, any::<bool>()), 4..60),
    ) {
        let labels: Vec<bool> = pts.iter().map(|p| p.2).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let m = Matrix::from_rows(&pts.iter().map(|p| vec![p.0, p.1]).collect::<Vec<_>>());
        let s = silhouette_score(&m, &labels).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn smote_balances_and_is_seed_deterministic(m in 2usize..25, extra in 0usize..40, k in 1usize..8, seed in any::<u64>()) {
        let mut rng = from_seed(seed);
        let minority = common::oracles::random_matrix(&mut rng, m, 3);
        let a = smote_oversample(&minority, m + extra, k, seed).unwrap();
        let b = smote_oversample(&minority, m + extra, k, seed).unwrap();
        prop_assert_eq!(a.rows.nrows(), extra);
        prop_assert_eq!(&a, &b);
    }

    #[test]
    fn top_models_are_the_best(aurocs in prop::collection::vec(0.0f64..1.0, 1..30), m_frac in 0.0f64..1.0) {
        let m = 1 + ((aurocs.len() - 1) as f64 * m_frac) as usize;
        let top = select_top_models(&aurocs, m).unwrap();
        prop_assert_eq!(top.len(), m);
        let mut dedup = top.clone();
        dedup.sort();
        dedup.dedup();
        prop_assert_eq!(dedup.len(), m);
        let worst_kept = top.iter().map(|&i| aurocs[i]).fold(f64::INFINITY, f64::min);
        for (i, &a) in aurocs.iter().enumerate() {
            if !top.contains(&i) {
                prop_assert!(a <= worst_kept);
            }
        }
    }

    #[test]
    fn config_round_trip_is_canonical(
        mask in 1u8..8,
        scaler in prop::sample::select(vec!["minmax", "standard", "none"]),
        n_features in 1usize..60,
        folds in 2usize..12,
        seed in any::<u64>(),
        threshold in 0.0f64..=1.0,
    ) {
        let mut c = PipelineConfig::default();
        c.expressions = Expression::ALL.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, e)| *e).collect();
        c.scaler = scaler.to_string();
        c.selection.n_features = n_features;
        c.cv_folds = folds;
        c.seed = seed;
        c.threshold = threshold;
        let text = c.to_canonical_json();
        let back = PipelineConfig::from_json(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_canonical_json(), text);
        prop_assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn treeshap_local_accuracy(seed in any::<u64>(), d in 1usize..8) {
        let mut rng = from_seed(seed);
        let (model, x) = common::oracles::random_booster(&mut rng, d);
        for row in x.rows_iter().take(10) {
            let a = tree_shap(&model, row).unwrap();
            prop_assert!(a.local_accuracy_error() < 1e-9);
        }
    }
}
