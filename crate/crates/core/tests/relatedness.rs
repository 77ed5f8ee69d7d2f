mod common;

use std::collections::BTreeSet;

use common::*;
use dsrm::relatedness::{build_tfidf, ngd_from_sets, ngd_relatedness, vsp_relatedness, Ngd, Relatedness};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn set(prefix: &str, range: std::ops::Range<usize>) -> BTreeSet<dsrm::kg::EntityId> {
    range.map(|i| eid(&format!("{prefix}{i}"))).collect()
}

#[test]
fn fixture_matches_brute_force() {
    let check = relatedness_check();
    assert_eq!(check.pairs, 100);
    assert!(check.max_ngd_diff <= 1e-12, "{}", check.max_ngd_diff);
    assert!(check.max_vsp_diff <= 1e-12, "{}", check.max_vsp_diff);
}

#[test]
fn ngd_hand_values() {
    // 100 entities, |Ei| = |Ej| = 10 sharing 5: 1 - ln 2 / ln 10.
    let a = set("l", 0..10);
    let b = set("l", 5..15);
    let r = ngd_from_sets(100, &a, &b);
    assert!((r - (1.0 - 2f64.ln() / 10f64.ln())).abs() < 1e-15);
    assert_eq!(format!("{r:.6}"), "0.698970");

    assert_eq!(ngd_from_sets(100, &a, &set("m", 0..10)), 0.0);
    assert_eq!(ngd_from_sets(100, &BTreeSet::new(), &a), 0.0);
    assert_eq!(ngd_from_sets(100, &a, &a), 1.0);
    assert_eq!(ngd_from_sets(10, &a, &a), 1.0);
}

#[test]
fn unknown_entities_are_errors() {
    let kg = ten_entity_kg();
    let model = build_tfidf(&kg).unwrap();
    assert!(ngd_relatedness(&kg, &eid("e0"), &eid("nope")).is_err());
    assert!(vsp_relatedness(&model, &eid("nope"), &eid("e0")).is_err());
    assert!(Ngd(&kg).relatedness(&eid("nope"), &eid("nope")).is_err());
}

#[test]
fn random_graphs_are_symmetric_and_bounded() {
    let (pairs, symmetric, in_range) = relatedness_sweep(1000, 99);
    assert!(pairs > 1000);
    assert!(symmetric);
    assert!(in_range);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ngd_sets_symmetric_and_bounded(
        total in 1usize..200,
        a in prop::collection::btree_set(0usize..200, 0..40),
        b in prop::collection::btree_set(0usize..200, 0..40),
    ) {
        let to_ids = |s: &BTreeSet<usize>| s.iter().map(|i| eid(&format!("x{i}"))).collect::<BTreeSet<_>>();
        let (a, b) = (to_ids(&a), to_ids(&b));
        let total = total.max(a.union(&b).count());
        let r1 = ngd_from_sets(total, &a, &b);
        let r2 = ngd_from_sets(total, &b, &a);
        prop_assert_eq!(r1, r2);
        prop_assert!((0.0..=1.0).contains(&r1));
    }

    #[test]
    fn baselines_symmetric_on_random_graphs(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kg = random_kg(&mut rng);
        let model = build_tfidf(&kg).unwrap();
        for a in kg.ids() {
            for b in kg.ids() {
                let n = ngd_relatedness(&kg, a, b).unwrap();
                let v = vsp_relatedness(&model, a, b).unwrap();
                prop_assert_eq!(n, ngd_relatedness(&kg, b, a).unwrap());
                prop_assert_eq!(v, vsp_relatedness(&model, b, a).unwrap());
                prop_assert!((0.0..=1.0).contains(&n) && (0.0..=1.0).contains(&v));
            }
        }
    }
}
