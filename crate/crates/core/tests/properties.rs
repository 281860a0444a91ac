use proptest::prelude::*;

use h1gap::construction::{first_exceedance, stop_path, CSequence, StoppedSummary, ThresholdSample};
use h1gap::diagnostics::{analytic_series, divergence_bound, sandwich_check, terminal_mean_truncated, TailTable};
use h1gap::models::{enumerate_don, ModelKind};
use h1gap::paths::{path_sup, path_terminal, realized_qv, Ensemble, PathKind, SamplePath};
use h1gap::seed::derive_seed;
use h1gap::stats::wilson_interval;

fn any_path() -> impl Strategy<Value = SamplePath> {
    (prop::collection::vec(0.0f64..50.0, 1..40), any::<bool>()).prop_map(|(values, continuous)| {
        let kind = if continuous { PathKind::ContinuousGrid } else { PathKind::DiscreteStep };
        SamplePath::from_values(kind, values, 0).unwrap()
    })
}

fn any_threshold() -> impl Strategy<Value = ThresholdSample> {
    prop_oneof![(1u64..60).prop_map(ThresholdSample::Exact), (0.0f64..8.0).prop_map(ThresholdSample::LogMagnitude)]
}

proptest! {
    #[test]
    fn derived_seeds_are_deterministic_and_distinct(master in any::<u64>(), i in 0u64..1_000_000, j in 0u64..1_000_000) {
        prop_assert_eq!(derive_seed(master, i), derive_seed(master, i));
        if i != j {
            prop_assert_ne!(derive_seed(master, i), derive_seed(master, j));
        }
    }

    #[test]
    fn stopping_is_idempotent(path in any_path(), y in any_threshold()) {
        let record = first_exceedance(&path, y).unwrap();
        let once = stop_path(&path, &record).unwrap();
        let twice = stop_path(&once, &record).unwrap();
        prop_assert_eq!(&once, &twice);
        if path.kind == PathKind::DiscreteStep {
            prop_assert_eq!(first_exceedance(&once, y).unwrap().sigma_index, record.sigma_index);
        }
    }

    #[test]
    fn stopped_sup_never_exceeds_raw_sup_on_discrete_paths(path in any_path(), y in any_threshold()) {
        let record = first_exceedance(&path, y).unwrap();
        let stopped = stop_path(&path, &record).unwrap();
        let raw = path_sup(&path).unwrap();
        prop_assert!(path_sup(&stopped).unwrap() <= raw);
        if !record.hit {
            prop_assert_eq!(path_sup(&stopped).unwrap(), raw);
        }
    }

    #[test]
    fn summary_matches_materialized_stop(path in any_path(), y in any_threshold()) {
        let record = first_exceedance(&path, y).unwrap();
        let s = StoppedSummary::of(7, &path, &record);
        let stopped = stop_path(&path, &record).unwrap();
        prop_assert_eq!(s.sup.to_bits(), path_sup(&stopped).unwrap().to_bits());
        prop_assert_eq!(s.terminal.to_bits(), path_terminal(&stopped).unwrap().to_bits());
        prop_assert_eq!(s.qv.to_bits(), realized_qv(&stopped).unwrap().to_bits());
    }

    #[test]
    fn tail_table_is_monotone_and_covers_estimates(sups in prop::collection::vec(0.0f64..40.0, 1..200), m in 1u64..40) {
        let t = TailTable::from_sups(&sups, m).unwrap();
        prop_assert_eq!(t.levels.len() as u64, m);
        for w in t.estimates.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        for i in 0..t.estimates.len() {
            prop_assert!(t.ci_low[i] <= t.estimates[i] && t.estimates[i] <= t.ci_high[i]);
            prop_assert!(0.0 <= t.ci_low[i] && t.ci_high[i] <= 1.0);
        }
    }

    #[test]
    fn sandwich_always_holds(sups in prop::collection::vec(0.0f64..1e6, 1..300)) {
        prop_assert!(sandwich_check(&sups).unwrap().holds);
    }

    #[test]
    fn wilson_interval_is_ordered(trials in 1u64..100_000, frac in 0.0f64..=1.0) {
        let k = ((trials as f64) * frac).floor() as u64;
        let ci = wilson_interval(k, trials, 1.96);
        let p = k as f64 / trials as f64;
        prop_assert!(0.0 <= ci.low && ci.low <= p && p <= ci.high && ci.high <= 1.0);
    }

    #[test]
    fn c_is_non_decreasing_and_pmf_non_negative(n in 1u64..2_000_000, don in any::<bool>()) {
        let seq = if don { CSequence::double_or_nothing() } else { CSequence::inverse_bessel() };
        let (a, b) = (seq.c_value(n).unwrap(), seq.c_value(n + 1).unwrap());
        prop_assert!(a > 1.0 && b >= a);
        prop_assert!(seq.y_pmf(n).unwrap() >= 0.0);
    }

    #[test]
    fn quantile_is_monotone(u in 1e-9f64..0.999, du in 0.0f64..0.2, don in any::<bool>()) {
        let seq = if don { CSequence::double_or_nothing() } else { CSequence::inverse_bessel() };
        let v = (u + du).min(0.9999);
        prop_assert!(seq.y_quantile(u).unwrap().log2() <= seq.y_quantile(v).unwrap().log2());
    }

    #[test]
    fn terminal_mean_is_non_decreasing_in_y_max(
        rows in prop::collection::vec((1u64..64, 0.0f64..100.0), 1..100),
        y1 in 1u64..64,
        dy in 0u64..64,
    ) {
        let items = rows.iter().enumerate().map(|(i, (y, v))| {
            let path = SamplePath::from_values(PathKind::DiscreteStep, vec![1.0, *v], i as u64).unwrap();
            let record = first_exceedance(&path, ThresholdSample::Exact(*y)).unwrap();
            StoppedSummary::of(i as u64, &path, &record)
        }).collect();
        let e = Ensemble { master_seed: 0, model_tag: "test".into(), items };
        let a = terminal_mean_truncated(&e, y1).unwrap().mean;
        let b = terminal_mean_truncated(&e, y1 + dy).unwrap().mean;
        prop_assert!(a <= b);
    }
}

#[test]
fn series_and_bound_are_monotone() {
    for kind in [ModelKind::InverseBessel, ModelKind::DoubleOrNothing] {
        let seq = CSequence::closed_form(kind);
        let r = analytic_series(kind, &seq, 5000).unwrap();
        for w in r.partial_sums.windows(2) {
            assert!(w[1] >= w[0]);
        }
        let b: Vec<f64> = (1..=5000).map(|m| divergence_bound(&seq, m).unwrap()).collect();
        for w in b.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }
}

#[test]
fn enumerations_sum_to_one() {
    for d in 1..=25 {
        assert!((enumerate_don(d).unwrap().total_prob() - 1.0).abs() < 1e-15, "depth {d}");
    }
}
