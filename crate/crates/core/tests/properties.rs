//! Property-based invariants.

use itq_core::cre::{pooled_family, prediction_intervals_treated, pvalue_all, pvalue_treated, Inverter};
use itq_core::model::{ExperimentData, RankTransform, Scope};
use itq_core::rank::{null_distribution, Design, NullOptions};
use itq_core::tail::{choose_kprime_single, Hypergeometric};
use itq_core::worst_case::{brute_force_min, min_stat_cre};
use proptest::prelude::*;

/// Small experiments with half-integer outcomes, so ties occur.
fn experiment(max_n: usize) -> impl Strategy<Value = ExperimentData> {
    (3..=max_n)
        .prop_flat_map(|n| {
            (
                proptest::collection::vec(any::<bool>(), n),
                proptest::collection::vec(-6i32..6, n),
            )
        })
        .prop_filter("both arms present", |(z, _)| z.iter().any(|&t| t) && z.iter().any(|&t| !t))
        .prop_map(|(z, y)| ExperimentData::new(z, y.into_iter().map(|v| v as f64 / 2.0).collect()).unwrap())
}

fn transform() -> impl Strategy<Value = RankTransform> {
    prop_oneof![Just(RankTransform::Wilcoxon), (2u32..5).prop_map(|s| RankTransform::Stephenson { s })]
}

fn exact_null(data: &ExperimentData, tr: &RankTransform) -> itq_core::NullDistribution {
    null_distribution(&Design::of(data), std::slice::from_ref(tr), &NullOptions::exact()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scores_are_nondecreasing(n in 1usize..60, s in 2u32..8) {
        for tr in [RankTransform::Wilcoxon, RankTransform::Stephenson { s }] {
            let sc = tr.scores(n).unwrap();
            prop_assert_eq!(sc.len(), n);
            prop_assert!(sc.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn label_switch_is_an_involution(data in experiment(10)) {
        let twice = data.switch_labels_negate().switch_labels_negate();
        prop_assert_eq!(twice.treated(), data.treated());
        prop_assert_eq!(twice.outcomes(), data.outcomes());
    }

    #[test]
    fn worst_case_matches_enumeration(data in experiment(9), tr in transform(), k in 0usize..10, c in -8i32..8) {
        let k = k.min(data.n());
        let c = c as f64 / 2.0;
        let fast = min_stat_cre(&data, &tr, k, c).unwrap();
        let slow = brute_force_min(&data, std::slice::from_ref(&tr), Scope::AllUnits, k, c).unwrap();
        prop_assert_eq!(fast, slow);
    }

    #[test]
    fn worst_case_monotone(data in experiment(10), tr in transform(), c in -8i32..8) {
        let c = c as f64 / 2.0;
        let by_k: Vec<f64> = (0..=data.n()).map(|k| min_stat_cre(&data, &tr, k, c).unwrap()).collect();
        prop_assert!(by_k.windows(2).all(|w| w[0] <= w[1]));
        let by_c: Vec<f64> = (-10..10).map(|c| min_stat_cre(&data, &tr, data.n() / 2, c as f64 / 2.0).unwrap()).collect();
        prop_assert!(by_c.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn treated_scope_is_shifted_all_units(data in experiment(10), tr in transform(), k in 0usize..10, c in -8i32..8) {
        let null = exact_null(&data, &tr);
        let k = k.min(data.n_treated());
        let c = c as f64 / 2.0;
        let t = pvalue_treated(&data, &tr, k, c, &null).unwrap().value;
        let a = pvalue_all(&data, &tr, data.n_control() + k, c, &null).unwrap().value;
        prop_assert_eq!(t, a);
    }

    #[test]
    fn families_are_nested(data in experiment(10), tr in transform(), alpha in 0.02f64..0.45) {
        let fam = prediction_intervals_treated(&data, &tr, alpha, &exact_null(&data, &tr)).unwrap();
        prop_assert!(fam.is_nested());
        let switched = data.switch_labels_negate();
        let t_null = exact_null(&data, &tr);
        let c_null = exact_null(&switched, &tr);
        let pooled = pooled_family(
            &Inverter::cre(&data, &tr, &t_null).unwrap(),
            &Inverter::cre(&switched, &tr, &c_null).unwrap(),
            alpha,
        );
        prop_assert!(pooled.is_nested());
        prop_assert_eq!(pooled.entries.len(), data.n());
    }

    #[test]
    fn intervals_shift_with_treated_outcomes(data in experiment(9), tr in transform(), shift in -4i32..4) {
        let shifted = ExperimentData::new(
            data.treated().to_vec(),
            data.outcomes().iter().zip(data.treated()).map(|(y, &t)| if t { y + shift as f64 } else { *y }).collect(),
        ).unwrap();
        let null = exact_null(&data, &tr);
        let a = prediction_intervals_treated(&data, &tr, 0.2, &null).unwrap();
        let b = prediction_intervals_treated(&shifted, &tr, 0.2, &null).unwrap();
        for (x, y) in a.entries.iter().zip(&b.entries) {
            prop_assert_eq!(x.interval.lower + shift as f64, y.interval.lower);
            prop_assert_eq!(x.interval.closed_at_lower, y.interval.closed_at_lower);
        }
    }

    #[test]
    fn null_tail_is_a_survival_function(n in 2usize..14, frac in 0.1f64..0.9, tr in transform()) {
        let n_t = ((n as f64 * frac).round() as usize).clamp(1, n - 1);
        let g = null_distribution(&Design::Cre { n, n_t }, &[tr], &NullOptions::exact()).unwrap();
        let tail = g.tail_weights();
        prop_assert!((tail[0] - 1.0).abs() < 1e-12);
        prop_assert!(tail.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(g.support().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn hypergeometric_is_normalized(pop in 1u64..400, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let successes = (pop as f64 * a) as u64;
        let draws = (pop as f64 * b) as u64;
        let h = Hypergeometric::new(pop, successes, draws).unwrap();
        let (lo, hi) = h.support();
        let total: f64 = (lo..=hi).map(|x| h.pmf(x)).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!((lo..=hi).all(|x| h.sf(x) >= h.sf(x + 1)));
    }

    #[test]
    fn single_correction_within_budget(n in 4u64..200, frac in 0.1f64..0.9, kf in 0.0f64..1.0, gamma in 0.0f64..1.0) {
        let n_t = ((n as f64 * frac).round() as u64).clamp(1, n - 1);
        let k = (n as f64 * kf).round() as u64;
        let (k_prime, correction) = choose_kprime_single(n, n_t, k, 0.1, gamma).unwrap();
        prop_assert!(correction <= gamma * 0.1 + 1e-12);
        prop_assert!(k_prime as u64 <= n_t);
        prop_assert!(k_prime as u64 >= k.saturating_sub(n - n_t));
    }
}
