use std::collections::BTreeMap;

use linknas::rng::{stream, Stream};
use linknas::tasks::{auc, filtered_rank, mrr_hits, MetricsReport};
use proptest::prelude::*;
use rand::Rng;

/// Probability that a positive outscores a negative, ties counting one half.
fn pairwise_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut twice = 0u64;
    for p in pos {
        for n in neg {
            twice += if p > n { 2 } else if p == n { 1 } else { 0 };
        }
    }
    twice as f64 / (2 * pos.len() * neg.len()) as f64
}

#[test]
fn auc_matches_pairwise_on_1000_cases() {
    let mut rng = stream(0, Stream::Split);
    for case in 0..1000 {
        let np = rng.random_range(1..=200);
        let nn = rng.random_range(1..=200);
        // coarse grids every few cases force many ties
        let levels = if case % 3 == 0 { 5 } else { 1_000_000 };
        let mut draw = |_| rng.random_range(0..levels) as f64 / levels as f64;
        let pos: Vec<f64> = (0..np).map(&mut draw).collect();
        let neg: Vec<f64> = (0..nn).map(&mut draw).collect();
        assert_eq!(auc(&pos, &neg).unwrap(), pairwise_auc(&pos, &neg), "case {case}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn better_rank_never_hurts(ranks in proptest::collection::vec(1usize..50, 1..40), pick in any::<prop::sample::Index>(), by in 1usize..50) {
        let i = pick.index(ranks.len());
        let mut better = ranks.clone();
        better[i] = better[i].saturating_sub(by).max(1);
        let before = mrr_hits(&ranks, &[1, 3, 10]).unwrap();
        let after = mrr_hits(&better, &[1, 3, 10]).unwrap();
        for (k, v) in &before {
            prop_assert!(after[k] >= *v, "{k}: {} < {v}", after[k]);
        }
    }

    #[test]
    fn filtering_more_never_worsens_rank(
        scores in proptest::collection::vec(0u8..6, 2..40),
        target in any::<prop::sample::Index>(),
        small in proptest::collection::vec(any::<prop::sample::Index>(), 0..10),
        extra in proptest::collection::vec(any::<prop::sample::Index>(), 0..10),
    ) {
        let s: Vec<f64> = scores.iter().map(|&x| x as f64).collect();
        let t = target.index(s.len());
        let mut f: Vec<usize> = small.iter().map(|i| i.index(s.len())).collect();
        f.sort();
        f.dedup();
        let mut g: Vec<usize> = f.iter().copied().chain(extra.iter().map(|i| i.index(s.len()))).collect();
        g.sort();
        g.dedup();
        prop_assert!(filtered_rank(&s, t, &g) <= filtered_rank(&s, t, &f));
        prop_assert!(filtered_rank(&s, t, &f) >= 1);
    }

    #[test]
    fn report_recomputes_from_per_seed_values(vals in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 2), 1..8)) {
        let runs: Vec<(u64, BTreeMap<String, f64>)> = vals
            .iter()
            .enumerate()
            .map(|(s, v)| (s as u64, BTreeMap::from([("a".to_string(), v[0]), ("b".to_string(), v[1])])))
            .collect();
        let r = MetricsReport::from_runs("d", "nc", &runs).unwrap();
        prop_assert_eq!(r.n, vals.len());
        for (j, m) in ["a", "b"].into_iter().enumerate() {
            let xs: Vec<f64> = r.per_seed[m].clone();
            prop_assert_eq!(&xs, &vals.iter().map(|v| v[j]).collect::<Vec<_>>());
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!((r.mean[m] - mean).abs() <= 1e-12);
            prop_assert!((r.std[m] - std).abs() <= 1e-12);
        }
    }
}
