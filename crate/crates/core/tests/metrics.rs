mod common;

use std::collections::BTreeMap;

use common::*;
use dsrm::evaluate::{
    average_precision, mean_average_precision, ndcg_at_k, precision_at_1, Averaging, MentionKey, RankedList,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn list(query: &str, gains: &[f64]) -> RankedList {
    RankedList::new(query, gains.iter().enumerate().map(|(i, g)| (format!("c{i}"), *g)).collect()).unwrap()
}

fn gains() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), Just(2.0), 0.0f64..4.0], 1..12)
}

#[test]
fn invalid_lists_are_rejected() {
    assert!(RankedList::new("q", vec![("a".into(), 1.0), ("a".into(), 0.0)]).is_err());
    assert!(RankedList::new("q", vec![("a".into(), -1.0)]).is_err());
    assert!(RankedList::new("q", vec![("a".into(), f64::NAN)]).is_err());
    assert!(ndcg_at_k(&list("q", &[1.0]), 0).is_err());
    assert!(mean_average_precision(&[]).is_err());
    assert!(precision_at_1(&BTreeMap::new(), &[], Averaging::Micro).is_err());
}

#[test]
fn graded_hand_value() {
    // DCG = 1/log2(3) + 3/log2(4); ideal = 3 + 1/log2(3).
    let got = ndcg_at_k(&list("q", &[0.0, 1.0, 2.0]), 3).unwrap();
    let want = (1.0 / 3f64.log2() + 3.0 / 2.0) / (3.0 + 1.0 / 3f64.log2());
    assert!((got - want).abs() < 1e-15);
}

proptest! {
    #[test]
    fn metrics_lie_in_unit_range(g in gains(), k in 1usize..15) {
        let l = list("q", &g);
        let n = ndcg_at_k(&l, k).unwrap();
        let ap = average_precision(&l);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
        prop_assert!((0.0..=1.0).contains(&ap));
    }

    #[test]
    fn gain_sorted_order_dominates(g in gains(), k in 1usize..15, seed in any::<u64>()) {
        let mut sorted = g.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut shuffled = g.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let best = list("q", &sorted);
        let other = list("q", &shuffled);
        if g.iter().any(|x| *x > 0.0) {
            prop_assert!((ndcg_at_k(&best, k).unwrap() - 1.0).abs() <= 1e-12);
        }
        prop_assert!(ndcg_at_k(&best, k).unwrap() >= ndcg_at_k(&other, k).unwrap() - 1e-12);
        prop_assert!(average_precision(&best) >= average_precision(&other) - 1e-12);
    }

    #[test]
    fn map_ignores_query_order(lists in prop::collection::vec(gains(), 1..6), seed in any::<u64>()) {
        let ranked: Vec<RankedList> = lists.iter().enumerate().map(|(i, g)| list(&format!("q{i}"), g)).collect();
        let mut permuted = ranked.clone();
        permuted.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = mean_average_precision(&ranked).unwrap();
        let b = mean_average_precision(&permuted).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    /// With the same number of non-NIL mentions in every document, micro and
    /// macro precision coincide.
    #[test]
    fn micro_equals_macro_for_uniform_documents(
        docs in 1usize..6,
        per_doc in 1usize..6,
        hits in prop::collection::vec(any::<bool>(), 36),
        nils in 0usize..3,
    ) {
        let mut gold = Vec::new();
        let mut decisions = BTreeMap::new();
        for d in 0..docs {
            for m in 0..per_doc + nils {
                let key = MentionKey { doc_id: format!("d{d}"), offset: m };
                if m >= per_doc {
                    gold.push((key.clone(), None));
                    decisions.insert(key, Some(eid("x")));
                    continue;
                }
                let truth = eid(&format!("t{d}_{m}"));
                let chosen = if hits[d * 6 + m] { truth.clone() } else { eid("wrong") };
                gold.push((key.clone(), Some(truth)));
                decisions.insert(key, Some(chosen));
            }
        }
        let micro = precision_at_1(&decisions, &gold, Averaging::Micro).unwrap();
        let macro_ = precision_at_1(&decisions, &gold, Averaging::Macro).unwrap();
        prop_assert!((micro - macro_).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&micro));
    }
}
