//! Property tests for the contracts that hold over whole input classes.

use proptest::prelude::*;

use kgemb::hpo::SearchSpace;
use kgemb::ingest::{build_graph, holdout_split, ComboRow, GraphVariant, RawRecords};
use kgemb::kg::{build_vocabulary, TripleStore};

#[test]
fn decode_config_total_over_1e5_points() {
    let space = SearchSpace::default_space();
    let mut state = 0x5eedu64;
    let mut next = || {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64
    };
    for i in 0..100_000 {
        let point: Vec<f64> = (0..space.dimension()).map(|_| next()).collect();
        let trial = space
            .decode_config(&point)
            .unwrap_or_else(|e| panic!("point {i} failed to decode: {e}"));
        let re = space.encode(&trial.assignments);
        assert!(re.iter().all(|&u| (0.0..=1.0).contains(&u)));
    }
}

/// Per-relation holdout sizes are exactly round-half-even of n * fraction.
#[test]
fn holdout_sizes_exact_per_relation() {
    let mut records = RawRecords::default();
    let sizes = [23usize, 5, 40, 8, 16];
    for (rel, &n) in sizes.iter().enumerate() {
        for i in 0..n {
            records.combo.push(ComboRow {
                drug_a: format!("a{rel}_{i}"),
                drug_b: format!("b{rel}_{i}"),
                se_id: format!("s{rel}"),
                se_name: format!("s{rel}"),
            });
        }
    }
    let bundle = build_graph(&records, GraphVariant::Selfloops, 0).unwrap();
    let bundle = holdout_split(bundle, 0.1, 123).unwrap();
    for (rel, &n) in sizes.iter().enumerate() {
        let rel_id = bundle
            .vocabulary
            .relation_id(&format!("pse:s{rel}"))
            .unwrap();
        let expected = (n as f64 * 0.1).round_ties_even() as usize;
        assert_eq!(
            bundle.holdout.predicate_count(rel_id),
            expected,
            "relation {rel} with {n} edges"
        );
        assert_eq!(bundle.train.predicate_count(rel_id), n - expected);
    }
}

fn name_strategy() -> impl Strategy<Value = String> {
    "[a-d]{1,2}".prop_map(|s| s)
}

proptest! {
    /// Vocabulary building is deterministic and idempotent under repeats.
    #[test]
    fn vocabulary_dedup_and_determinism(
        rows in proptest::collection::vec(
            (name_strategy(), name_strategy(), name_strategy()),
            1..40,
        )
    ) {
        let (vocab_a, triples_a) = build_vocabulary(&rows).unwrap();
        let (vocab_b, triples_b) = build_vocabulary(&rows).unwrap();
        prop_assert_eq!(&vocab_a, &vocab_b);
        prop_assert_eq!(&triples_a, &triples_b);
        // duplicating the input changes nothing
        let doubled: Vec<_> = rows.iter().chain(rows.iter()).cloned().collect();
        let (vocab_c, triples_c) = build_vocabulary(&doubled).unwrap();
        prop_assert_eq!(&vocab_a, &vocab_c);
        prop_assert_eq!(&triples_a, &triples_c);
        // every triple is reachable through the lookup index
        let store = TripleStore::new(
            triples_a.clone(),
            vocab_a.entity_count(),
            vocab_a.relation_count(),
        )
        .unwrap();
        let completion_total: usize = store
            .triples()
            .iter()
            .map(|t| {
                store
                    .objects_of(t.subject, t.predicate)
                    .unwrap()
                    .iter()
                    .filter(|&&o| o == t.object)
                    .count()
            })
            .sum();
        prop_assert_eq!(completion_total, store.len());
    }

    /// Sorting-based AUROC equals the pairwise oracle on arbitrary scores.
    #[test]
    fn auroc_equals_pairwise_oracle(
        pos in proptest::collection::vec(0u8..8, 1..60),
        neg in proptest::collection::vec(0u8..8, 1..60),
    ) {
        let pos: Vec<f64> = pos.into_iter().map(|v| v as f64 / 2.0).collect();
        let neg: Vec<f64> = neg.into_iter().map(|v| v as f64 / 2.0).collect();
        let fast = kgemb::eval::classification_metrics(&pos, &neg, 0).unwrap().auroc;
        let mut wins = 0.0;
        for &p in &pos {
            for &n in &neg {
                if p > n {
                    wins += 1.0;
                } else if p == n {
                    wins += 0.5;
                }
            }
        }
        let slow = wins / (pos.len() * neg.len()) as f64;
        prop_assert!((fast - slow).abs() <= 1e-12);
    }

    /// The logistic link is a proper probability.
    #[test]
    fn probability_in_unit_interval(score in -1e6f64..1e6) {
        let p = kgemb::models::probability(score);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p + kgemb::models::probability(-score) - 1.0).abs() < 1e-15);
    }
}
