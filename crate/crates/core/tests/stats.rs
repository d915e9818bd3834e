use mtbench_core::data::Subset;
use mtbench_core::eval::{EvalResult, ModelFamily, TaskEval};
use mtbench_core::mtnn::Architecture;
use mtbench_core::split::Regime;
use mtbench_core::stats::*;
use proptest::prelude::*;

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn rounded(k: usize, n: usize) -> (f64, f64) {
    let (lo, hi) = wilson_interval(k, n, 0.05).unwrap();
    (round2(lo), round2(hi))
}

#[test]
fn wilson_matches_printed_intervals() {
    let (lo, hi) = wilson_interval(15, 22, 0.05).unwrap();
    assert!((lo - 0.473).abs() < 5e-4 && (hi - 0.836).abs() < 5e-4, "({lo}, {hi})");
    assert_eq!(rounded(15, 22), (0.47, 0.84));
    assert_eq!(rounded(16, 22), (0.52, 0.87));
    assert_eq!(rounded(22, 22), (0.85, 1.0));
    let (lo, hi) = wilson_interval(11, 22, 0.05).unwrap();
    assert!((lo + hi - 1.0).abs() < 1e-15);
}

/// Every sign-test interval printed in the comparison tables is reproduced
/// by some k out of at most 22 non-zero differences.
#[test]
fn printed_interval_sweep() {
    let printed = [
        (0.20, 0.57),
        (0.43, 0.80),
        (0.47, 0.84),
        (0.39, 0.77),
        (0.52, 0.87),
        (0.35, 0.73),
        (0.27, 0.65),
        (0.67, 0.95),
        (0.61, 0.93),
        (0.57, 0.90),
        (0.72, 0.97),
        (0.78, 0.99),
        (0.37, 0.76),
        (0.28, 0.68),
        (0.65, 0.95),
        (0.05, 0.33),
        (0.85, 1.00),
    ];
    for iv in printed {
        let full: Vec<usize> = (0..=22).filter(|&k| rounded(k, 22) == iv).collect();
        let reduced: Vec<(usize, usize)> = (1..22)
            .flat_map(|n| (0..=n).map(move |k| (k, n)))
            .filter(|&(k, n)| rounded(k, n) == iv)
            .collect();
        assert!(!full.is_empty() || !reduced.is_empty(), "{iv:?} unmatched");
        // Three intervals need one zero difference excluded (n = 21).
        let at_21 = [((0.37, 0.76), 12), ((0.28, 0.68), 10), ((0.65, 0.95), 18)];
        if let Some(&(_, k)) = at_21.iter().find(|(p, _)| *p == iv) {
            assert!(full.is_empty());
            assert!(reduced.contains(&(k, 21)));
        } else {
            assert_eq!(full.len(), 1, "{iv:?}");
        }
    }
}

#[test]
fn wilson_rejects_bad_counts() {
    assert!(matches!(wilson_interval(3, 2, 0.05), Err(StatsError::InvalidCounts { .. })));
    assert!(wilson_interval(0, 0, 0.05).is_err());
    assert!(matches!(wilson_interval(1, 2, 1.5), Err(StatsError::InvalidAlpha(_))));
    let (lo, hi) = wilson_interval(0, 5, 0.05).unwrap();
    assert_eq!(lo, 0.0);
    assert!(hi > 0.0 && hi < 1.0);
}

/// `erf` by its Maclaurin series, adequate for |x| ≤ 3.
fn erf(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    for n in 1..200 {
        term *= -x * x / n as f64;
        sum += term / (2 * n + 1) as f64;
    }
    2.0 / std::f64::consts::PI.sqrt() * sum
}

#[test]
fn quantile_inverts_the_normal_cdf() {
    for i in 1..200 {
        let p = 0.0015 + 0.997 * i as f64 / 200.0;
        let z = normal_quantile(p);
        let cdf = 0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2));
        assert!((cdf - p).abs() < 1e-12, "p {p}: cdf {cdf}");
    }
    // Deep tail reference values.
    assert!((normal_quantile(1e-10) + 6.361_340_902_404_056).abs() < 1e-9);
    assert!((normal_quantile(1.0 - 1e-6) - 4.753_424_308_822_899).abs() < 1e-9);
}

#[test]
fn sign_test_examples() {
    assert_eq!(sign_test(&[0.1, -0.2, 0.0]).unwrap(), (1, 2));
    assert_eq!(sign_test(&[0.3; 7]).unwrap(), (7, 7));
    assert!(matches!(sign_test(&[0.0, 0.0]), Err(StatsError::AllZero)));
    assert!(matches!(sign_test(&[]), Err(StatsError::EmptyInput)));
}

fn result(model: ModelFamily, aucs: &[(&str, Option<f64>)]) -> EvalResult {
    EvalResult {
        model,
        arch: model.is_network().then(|| Architecture::new(vec![1000]).unwrap()),
        regime: Regime::LeakyTemporal,
        subset: Subset::Test,
        tasks: aucs
            .iter()
            .map(|(t, a)| TaskEval {
                task: t.to_string(),
                step: None,
                auc: *a,
                n_active: 1,
                n_inactive: 1,
                note: None,
            })
            .collect(),
    }
}

#[test]
fn paired_delta_examples() {
    let a = result(ModelFamily::WMtnn, &[("x", Some(0.8)), ("y", Some(0.6))]);
    let b = result(ModelFamily::Stnn, &[("y", Some(0.65)), ("x", Some(0.7))]);
    let d = paired_deltas(&a, &b).unwrap();
    assert_eq!(d[0].0, "x");
    assert!((d[0].1 - 0.10).abs() < 1e-12 && (d[1].1 + 0.05).abs() < 1e-12);
    assert!(paired_deltas(&a, &a).unwrap().iter().all(|(_, v)| *v == 0.0));
    let missing = result(ModelFamily::Stnn, &[("x", Some(0.7)), ("z", Some(0.65))]);
    assert!(matches!(paired_deltas(&a, &missing), Err(StatsError::TaskMismatch(_))));
    let short = result(ModelFamily::Stnn, &[("x", Some(0.7))]);
    assert!(matches!(paired_deltas(&a, &short), Err(StatsError::TaskMismatch(_))));
    let undefined = result(ModelFamily::Stnn, &[("x", Some(0.7)), ("y", None)]);
    assert!(matches!(paired_deltas(&a, &undefined), Err(StatsError::UndefinedAuc(_))));

    let c = compare(&a, &b, 0.05).unwrap();
    assert!((c.median - 0.025).abs() < 1e-12);
    assert_eq!((c.k, c.n), (1, 2));
    assert_eq!(c.model_a, "w-mtnn (1000)");
    assert_eq!(c.model_b, "stnn (1000)");
    assert!(!c.significant());
}

#[test]
fn identical_models_are_indistinguishable() {
    let a = result(ModelFamily::Forest, &[("x", Some(0.8)), ("y", Some(0.6))]);
    assert!(matches!(compare(&a, &a, 0.05), Err(StatsError::AllZero)));
    let c = compare_lenient(&a, &a, 0.05).unwrap();
    assert_eq!((c.k, c.n, c.interval), (0, 0, None));
    assert!(!c.significant());
}

#[test]
fn all_positive_deltas_are_significant() {
    let tasks: Vec<String> = (0..22).map(|i| format!("t{i}")).collect();
    let a = result(ModelFamily::UMtnn, &tasks.iter().map(|t| (t.as_str(), Some(0.8))).collect::<Vec<_>>());
    let b = result(ModelFamily::Forest, &tasks.iter().map(|t| (t.as_str(), Some(0.7))).collect::<Vec<_>>());
    let c = compare(&a, &b, 0.05).unwrap();
    let (lo, hi) = c.interval.unwrap();
    assert_eq!((round2(lo), round2(hi)), (0.85, 1.0));
    assert_eq!(c.direction(), 1);
    let r = compare(&b, &a, 0.05).unwrap();
    assert_eq!(r.direction(), -1);
}

#[test]
fn bootstrap_examples() {
    assert_eq!(bootstrap_mean_ci(&[0.3; 9], 500, 0.05, 1).unwrap(), (0.3, 0.3));
    let values: Vec<f64> = (0..30).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
    let a = bootstrap_mean_ci(&values, 2000, 0.05, 7).unwrap();
    assert_eq!(a, bootstrap_mean_ci(&values, 2000, 0.05, 7).unwrap());
    assert_ne!(a, bootstrap_mean_ci(&values, 2000, 0.05, 8).unwrap());
    assert!(a.0 < a.1);
    // Two points: resampled means are k/2 with k ~ Binomial(2, 1/2), so the
    // 2.5% and 97.5% percentiles are 0 and 1.
    let (lo, hi) = bootstrap_mean_ci(&[0.0, 1.0], 10_000, 0.05, 3).unwrap();
    assert!(lo <= 0.5 && hi >= 0.5);
    assert_eq!((lo, hi), (0.0, 1.0));
    assert!(matches!(bootstrap_mean_ci(&[], 10, 0.05, 0), Err(StatsError::EmptyInput)));
}

#[test]
fn comparison_csv_round_trip() {
    let rows = vec![
        ComparisonRow {
            model_a: "w-mtnn (2000,1000)".into(),
            model_b: "stnn (2000,1000)".into(),
            median_delta_auc: 0.032,
            k: 17,
            n: 22,
            ci_lo: Some(0.5659),
            ci_hi: Some(0.8997),
            significant: true,
        },
        ComparisonRow {
            model_a: "forest".into(),
            model_b: "forest".into(),
            median_delta_auc: 0.0,
            k: 0,
            n: 0,
            ci_lo: None,
            ci_hi: None,
            significant: false,
        },
    ];
    let mut buf = Vec::new();
    write_comparisons(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("model_a,model_b,median_delta_auc,k,n,ci_lo,ci_hi,significant\n"));
    assert!(text.contains("forest,forest,0.0,0,0,,,false\n"));
    assert_eq!(read_comparisons(buf.as_slice()).unwrap(), rows);
}

proptest! {
    #[test]
    fn wilson_mirrors(n in 1usize..400, frac in 0.0f64..=1.0, alpha in 0.001f64..0.5) {
        let k = ((n as f64) * frac).floor() as usize;
        let (lo, hi) = wilson_interval(k, n, alpha).unwrap();
        let (mlo, mhi) = wilson_interval(n - k, n, alpha).unwrap();
        prop_assert!((lo - (1.0 - mhi)).abs() < 1e-12);
        prop_assert!((hi - (1.0 - mlo)).abs() < 1e-12);
        prop_assert!(0.0 <= lo && lo <= hi && hi <= 1.0);
        let p = k as f64 / n as f64;
        prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
    }

    #[test]
    fn wilson_narrows_with_more_trials(num in 0usize..=4, m in 1usize..60) {
        // Fixed p̂ = num/4, n = 4m versus 4(m+1).
        let (a_lo, a_hi) = wilson_interval(num * m, 4 * m, 0.05).unwrap();
        let (b_lo, b_hi) = wilson_interval(num * (m + 1), 4 * (m + 1), 0.05).unwrap();
        prop_assert!(b_hi - b_lo < a_hi - a_lo);
    }

    #[test]
    fn comparison_is_antisymmetric(deltas in prop::collection::vec(-3i32..=3, 1..30)) {
        let names: Vec<String> = (0..deltas.len()).map(|i| format!("t{i}")).collect();
        let a = result(ModelFamily::WMtnn, &names.iter().map(|t| (t.as_str(), Some(0.5))).collect::<Vec<_>>());
        let b = result(
            ModelFamily::Stnn,
            &names.iter().zip(&deltas).map(|(t, d)| (t.as_str(), Some(0.5 + *d as f64 / 16.0))).collect::<Vec<_>>(),
        );
        let ab = compare_lenient(&a, &b, 0.05).unwrap();
        let ba = compare_lenient(&b, &a, 0.05).unwrap();
        prop_assert_eq!(ab.direction(), -ba.direction());
        prop_assert_eq!(ab.n, ba.n);
        prop_assert_eq!(ab.k + ba.k, ab.n);
        prop_assert!(ab.k <= ab.n && ab.n <= names.len());
    }
}
