//! Per-relation classification assessment: negative sampling and the
//! AUROC / AUPRC / AP@50 metrics.
//!
//! Tie handling is explicit everywhere. AUROC is the Mann-Whitney
//! statistic computed by rank-summation with average ranks for tied
//! groups, identical to the O(P*N) pairwise count. AUPRC is the
//! average-precision summation over descending-score thresholds with tied
//! scores collapsed into one threshold. AP@50 needs a total order, so ties
//! are broken by a seeded shuffle whose seed is recorded in the report.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::EvalError;
use crate::kg::{EntityId, RelationId, Triple, TripleStore};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassMetrics {
    pub auroc: f64,
    pub auprc: f64,
    pub ap50: f64,
}

const MAX_NEGATIVE_ATTEMPTS: usize = 1000;

/// Draws one negative per positive: an ordered drug pair (a, b), a != b,
/// such that neither direction is a known triple of `relation` in any of
/// the `known` stores. Deterministic for a fixed seed.
pub fn sample_eval_negatives(
    relation: RelationId,
    positives: &[Triple],
    known: &[&TripleStore],
    drug_pool: &[EntityId],
    seed: u64,
) -> Result<Vec<Triple>, EvalError> {
    if drug_pool.len() < 2 {
        return Err(EvalError::InsufficientNegatives(relation));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut negatives = Vec::with_capacity(positives.len());
    for _ in positives {
        let mut found = None;
        for _ in 0..MAX_NEGATIVE_ATTEMPTS {
            let a = drug_pool[rng.random_range(0..drug_pool.len())];
            let b = drug_pool[rng.random_range(0..drug_pool.len())];
            if a == b {
                continue;
            }
            let forward = Triple {
                subject: a,
                predicate: relation,
                object: b,
            };
            let backward = Triple {
                subject: b,
                predicate: relation,
                object: a,
            };
            if known
                .iter()
                .any(|s| s.contains(forward) || s.contains(backward))
            {
                continue;
            }
            found = Some(forward);
            break;
        }
        match found {
            Some(t) => negatives.push(t),
            None => return Err(EvalError::InsufficientNegatives(relation)),
        }
    }
    Ok(negatives)
}

/// AUROC, AUPRC and AP@50 of positive scores against negative scores.
pub fn classification_metrics(
    pos_scores: &[f64],
    neg_scores: &[f64],
    tie_seed: u64,
) -> Result<ClassMetrics, EvalError> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return Err(EvalError::DegenerateLabels);
    }
    Ok(ClassMetrics {
        auroc: auroc(pos_scores, neg_scores),
        auprc: average_precision(pos_scores, neg_scores),
        ap50: ap_at_k(pos_scores, neg_scores, 50, tie_seed),
    })
}

/// Mann-Whitney AUROC via rank summation with average ranks for ties.
fn auroc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // group occupies ranks i+1 ..= j (1-based); everyone gets the mean
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let group_pos = all[i..j].iter().filter(|(_, p)| *p).count();
        rank_sum_pos += avg_rank * group_pos as f64;
        i = j;
    }
    let p = pos.len() as f64;
    let n = neg.len() as f64;
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    u / (p * n)
}

/// Average precision over descending-score thresholds, tied scores grouped
/// as one threshold.
fn average_precision(pos: &[f64], neg: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores"));
    let p_total = pos.len() as f64;
    let mut tp = 0.0f64;
    let mut fp = 0.0f64;
    let mut prev_recall = 0.0f64;
    let mut ap = 0.0f64;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        for (_, is_pos) in &all[i..j] {
            if *is_pos {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
        }
        let recall = tp / p_total;
        let precision = tp / (tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    ap
}

/// Precision-at-hits sum over the top `k` of the full ranking, divided by
/// `min(P, k)`. Ties are ordered by a seeded shuffle.
fn ap_at_k(pos: &[f64], neg: &[f64], k: usize, tie_seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(tie_seed);
    let mut all: Vec<(f64, u64, bool)> = Vec::with_capacity(pos.len() + neg.len());
    for &s in pos {
        all.push((s, rng.random(), true));
    }
    for &s in neg {
        all.push((s, rng.random(), false));
    }
    all.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("finite scores")
            .then(a.1.cmp(&b.1))
    });
    let depth = k.min(all.len());
    let mut hits = 0.0f64;
    let mut sum = 0.0f64;
    for (idx, (_, _, is_pos)) in all[..depth].iter().enumerate() {
        if *is_pos {
            hits += 1.0;
            sum += hits / (idx + 1) as f64;
        }
    }
    sum / pos.len().min(k) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation_scores_one() {
        let m = classification_metrics(&[0.9, 0.8], &[0.3, 0.2], 0).unwrap();
        assert_eq!(m.auroc, 1.0);
        assert_eq!(m.auprc, 1.0);
        assert_eq!(m.ap50, 1.0);
    }

    #[test]
    fn interleaved_auroc_hand_count() {
        // pairs: (0.9 vs 0.8) win, (0.9 vs 0.2) win, (0.3 vs 0.8) loss,
        // (0.3 vs 0.2) win -> 3/4
        let m = classification_metrics(&[0.9, 0.3], &[0.8, 0.2], 0).unwrap();
        assert!((m.auroc - 0.75).abs() < 1e-15);
    }

    #[test]
    fn ap_hand_sum() {
        // descending labels 1,0,1,0 -> AP = (1/1 + 2/3) / 2
        let m = classification_metrics(&[0.9, 0.5], &[0.7, 0.3], 0).unwrap();
        let expected = (1.0 + 2.0 / 3.0) / 2.0;
        assert!((m.auprc - expected).abs() < 1e-15);
        assert!((m.ap50 - expected).abs() < 1e-15);
    }

    #[test]
    fn one_class_empty_rejected() {
        assert!(matches!(
            classification_metrics(&[], &[0.1], 0),
            Err(EvalError::DegenerateLabels)
        ));
        assert!(matches!(
            classification_metrics(&[0.1], &[], 0),
            Err(EvalError::DegenerateLabels)
        ));
    }

    /// O(P*N) pairwise oracle including ties.
    fn brute_force_auroc(pos: &[f64], neg: &[f64]) -> f64 {
        let mut wins = 0.0;
        for &p in pos {
            for &n in neg {
                if p > n {
                    wins += 1.0;
                } else if p == n {
                    wins += 0.5;
                }
            }
        }
        wins / (pos.len() * neg.len()) as f64
    }

    fn splitmix(state: &mut u64) -> u64 {
        *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    #[test]
    fn auroc_matches_pairwise_oracle_with_ties() {
        let mut state = 42u64;
        for case in 0..200 {
            let p = 1 + (splitmix(&mut state) % 30) as usize;
            let n = 1 + (splitmix(&mut state) % 30) as usize;
            // coarse grid forces plenty of ties
            let draw = |state: &mut u64| (splitmix(state) % 7) as f64 / 3.0;
            let pos: Vec<f64> = (0..p).map(|_| draw(&mut state)).collect();
            let neg: Vec<f64> = (0..n).map(|_| draw(&mut state)).collect();
            let fast = classification_metrics(&pos, &neg, 0).unwrap().auroc;
            let slow = brute_force_auroc(&pos, &neg);
            assert!(
                (fast - slow).abs() <= 1e-12,
                "case {case}: {fast} vs {slow}"
            );
        }
    }

    #[test]
    fn auroc_invariant_under_monotone_transform() {
        let pos = vec![0.1, 0.5, 0.9, 0.5];
        let neg = vec![0.2, 0.4, 0.4];
        let a = classification_metrics(&pos, &neg, 0).unwrap().auroc;
        let squash = |v: &[f64]| v.iter().map(|&x| (3.0 * x + 1.0).exp()).collect::<Vec<_>>();
        let b = classification_metrics(&squash(&pos), &squash(&neg), 0)
            .unwrap()
            .auroc;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn ap50_truncates_at_fifty() {
        // 60 positives above 60 negatives: top-50 all positive, denominator 50
        let pos: Vec<f64> = (0..60).map(|i| 100.0 + i as f64).collect();
        let neg: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let m = classification_metrics(&pos, &neg, 0).unwrap();
        assert_eq!(m.ap50, 1.0);
    }

    #[test]
    fn ap50_deterministic_under_tie_seed() {
        let pos = vec![0.5; 30];
        let neg = vec![0.5; 30];
        let a = classification_metrics(&pos, &neg, 7).unwrap().ap50;
        let b = classification_metrics(&pos, &neg, 7).unwrap().ap50;
        assert_eq!(a, b);
        // all scores tied: AUROC is exactly one half regardless of seed
        assert_eq!(classification_metrics(&pos, &neg, 7).unwrap().auroc, 0.5);
    }

    fn store(triples: Vec<Triple>, n: usize) -> TripleStore {
        TripleStore::new(triples, n, 1).unwrap()
    }

    #[test]
    fn exhausted_pool_reports_insufficient() {
        let known = store(vec![Triple::new(0, 0, 1)], 2);
        let err = sample_eval_negatives(
            RelationId(0),
            known.triples(),
            &[&known],
            &[EntityId(0), EntityId(1)],
            3,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            EvalError::InsufficientNegatives(RelationId(0))
        ));
    }

    #[test]
    fn negatives_avoid_both_directions() {
        let known = store(vec![Triple::new(0, 0, 1)], 4);
        let pool: Vec<EntityId> = (0..4).map(EntityId).collect();
        let negatives =
            sample_eval_negatives(RelationId(0), known.triples(), &[&known], &pool, 5).unwrap();
        assert_eq!(negatives.len(), 1);
        let t = negatives[0];
        assert_ne!(t.subject, t.object);
        assert_ne!((t.subject.0, t.object.0), (0, 1));
        assert_ne!((t.subject.0, t.object.0), (1, 0));
    }

    #[test]
    fn negatives_deterministic_for_seed() {
        let known = store(vec![Triple::new(0, 0, 1), Triple::new(2, 0, 3)], 8);
        let pool: Vec<EntityId> = (0..8).map(EntityId).collect();
        let a =
            sample_eval_negatives(RelationId(0), known.triples(), &[&known], &pool, 11).unwrap();
        let b =
            sample_eval_negatives(RelationId(0), known.triples(), &[&known], &pool, 11).unwrap();
        assert_eq!(a, b);
        let c =
            sample_eval_negatives(RelationId(0), known.triples(), &[&known], &pool, 12).unwrap();
        assert_ne!(a, c);
    }
}
