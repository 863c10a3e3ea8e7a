//! Filtered entity-ranking metrics and the per-relation classification
//! assessment of the holdout split.

mod classify;

pub use classify::{classification_metrics, sample_eval_negatives, ClassMetrics};

use thiserror::Error;

use crate::ingest::DatasetBundle;
use crate::kg::{EntityId, KgError, RelationId, Triple, TripleStore};
use crate::models::{self, ModelError, ModelParams, Real, Side};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("one score class is empty")]
    DegenerateLabels,
    #[error("cannot sample enough negatives for relation {0:?}")]
    InsufficientNegatives(RelationId),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Kg(#[from] KgError),
}

/// Filtered rank of one test triple on one side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankResult {
    pub triple: Triple,
    pub side: Side,
    /// 1-based; ties get the mean rank, rounded half up.
    pub filtered_rank: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankingMetrics {
    pub mrr: f64,
    pub hits_at_1: f64,
    pub hits_at_3: f64,
    pub hits_at_10: f64,
}

/// One relation's classification assessment.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationAssessment {
    pub relation: RelationId,
    pub name: String,
    pub n_pos: usize,
    pub n_neg: usize,
    pub auroc: f64,
    pub auprc: f64,
    pub ap50: f64,
}

/// Full evaluation output: per-relation rows, their medians, and the
/// filtered ranking aggregates.
#[derive(Clone, Debug)]
pub struct MetricsReport {
    pub rows: Vec<RelationAssessment>,
    /// Relations skipped because no valid negative could be drawn.
    pub skipped: Vec<(RelationId, String)>,
    pub median_auroc: f64,
    pub median_auprc: f64,
    pub median_ap50: f64,
    pub ranking: RankingMetrics,
    pub seed: u64,
}

fn rank_with_filters(scores: &[f64], test_idx: usize, filtered: &[EntityId]) -> usize {
    let x = scores[test_idx];
    let mut skip = vec![false; scores.len()];
    for e in filtered {
        skip[e.idx()] = true;
    }
    skip[test_idx] = false;
    let mut greater = 0usize;
    let mut ties = 0usize;
    for (j, &s) in scores.iter().enumerate() {
        if j == test_idx || skip[j] {
            continue;
        }
        if s > x {
            greater += 1;
        } else if s == x {
            ties += 1;
        }
    }
    // mean rank over the tied block, rounded half up
    1 + greater + (ties + 1) / 2
}

/// Ranks every triple on both sides against all entities, removing known
/// true competitors found in the filter stores (the test triple itself is
/// always kept).
pub fn rank_all<F: Real>(
    params: &ModelParams<F>,
    triples: &[Triple],
    filters: &[&TripleStore],
) -> Result<Vec<RankResult>, EvalError> {
    let mut out = Vec::with_capacity(triples.len() * 2);
    let mut filtered: Vec<EntityId> = Vec::new();
    for &t in triples {
        let object_row =
            models::score_against_all(params, &[(t.subject, t.predicate)], Side::Object)?;
        let scores: Vec<f64> = object_row.row(0).iter().map(|v| v.as_f64()).collect();
        filtered.clear();
        for store in filters {
            filtered.extend_from_slice(store.objects_of(t.subject, t.predicate)?);
        }
        out.push(RankResult {
            triple: t,
            side: Side::Object,
            filtered_rank: rank_with_filters(&scores, t.object.idx(), &filtered),
        });

        let subject_row =
            models::score_against_all(params, &[(t.object, t.predicate)], Side::Subject)?;
        let scores: Vec<f64> = subject_row.row(0).iter().map(|v| v.as_f64()).collect();
        filtered.clear();
        for store in filters {
            filtered.extend_from_slice(store.subjects_of(t.predicate, t.object)?);
        }
        out.push(RankResult {
            triple: t,
            side: Side::Subject,
            filtered_rank: rank_with_filters(&scores, t.subject.idx(), &filtered),
        });
    }
    Ok(out)
}

/// MRR and hits@{1,3,10} of a rank list.
pub fn ranking_metrics(ranks: &[RankResult]) -> Result<RankingMetrics, EvalError> {
    if ranks.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let n = ranks.len() as f64;
    let mrr = ranks
        .iter()
        .map(|r| 1.0 / r.filtered_rank as f64)
        .sum::<f64>()
        / n;
    let hits = |k: usize| ranks.iter().filter(|r| r.filtered_rank <= k).count() as f64 / n;
    Ok(RankingMetrics {
        mrr,
        hits_at_1: hits(1),
        hits_at_3: hits(3),
        hits_at_10: hits(10),
    })
}

/// Average-of-two-middles median.
fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite metric"));
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Assesses holdout triples per polypharmacy relation: 1:1 sampled
/// negatives, AUROC/AUPRC/AP@50 per relation, medians across relations,
/// plus filtered MRR and hits@k over the whole holdout.
///
/// Negative sampling and tie shuffling derive a per-relation seed from
/// `seed`, so relations can be assessed in any order or in parallel with
/// identical output.
pub fn assess<F: Real>(
    params: &ModelParams<F>,
    bundle: &DatasetBundle,
    seed: u64,
) -> Result<MetricsReport, EvalError> {
    if bundle.holdout.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let drug_pool = bundle.drug_entities();
    let filters = bundle.filter_stores();
    let known: [&TripleStore; 3] = [&bundle.train, &bundle.valid, &bundle.holdout];

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for &rel in &bundle.pse_relations {
        let positives: Vec<Triple> = bundle
            .holdout
            .triples()
            .iter()
            .filter(|t| t.predicate == rel)
            .copied()
            .collect();
        if positives.is_empty() {
            continue;
        }
        let rel_seed = splitmix64(seed ^ ((rel.0 as u64) << 1) ^ 0xa55e_55ed);
        let name = bundle.vocabulary.relation_name(rel).to_string();
        let negatives = match sample_eval_negatives(rel, &positives, &known, &drug_pool, rel_seed) {
            Ok(n) => n,
            Err(EvalError::InsufficientNegatives(_)) => {
                skipped.push((rel, name));
                continue;
            }
            Err(other) => return Err(other),
        };
        let pos_scores: Vec<f64> = models::score_triples(params, &positives)?
            .into_iter()
            .map(|v| v.as_f64())
            .collect();
        let neg_scores: Vec<f64> = models::score_triples(params, &negatives)?
            .into_iter()
            .map(|v| v.as_f64())
            .collect();
        let metrics = classification_metrics(&pos_scores, &neg_scores, rel_seed)?;
        rows.push(RelationAssessment {
            relation: rel,
            name,
            n_pos: positives.len(),
            n_neg: negatives.len(),
            auroc: metrics.auroc,
            auprc: metrics.auprc,
            ap50: metrics.ap50,
        });
    }
    if rows.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }

    let ranks = rank_all(params, bundle.holdout.triples(), &filters)?;
    let ranking = ranking_metrics(&ranks)?;

    let median_auroc = median(&mut rows.iter().map(|r| r.auroc).collect());
    let median_auprc = median(&mut rows.iter().map(|r| r.auprc).collect());
    let median_ap50 = median(&mut rows.iter().map(|r| r.ap50).collect());

    Ok(MetricsReport {
        rows,
        skipped,
        median_auroc,
        median_auprc,
        median_ap50,
        ranking,
        seed,
    })
}

impl MetricsReport {
    /// Per-relation CSV with a trailing `#median` comment row. Floats carry
    /// six decimals, rounded half to even.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("#seed,{}\n", self.seed));
        out.push_str("#ties,auroc=average-rank;auprc=grouped-thresholds;ap50=seeded-shuffle\n");
        out.push_str("relation_id,relation_name,n_pos,n_neg,auroc,auprc,ap50\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{:.6}\n",
                r.relation.0, r.name, r.n_pos, r.n_neg, r.auroc, r.auprc, r.ap50
            ));
        }
        for (rel, name) in &self.skipped {
            out.push_str(&format!("#insufficient_negatives,{},{}\n", rel.0, name));
        }
        out.push_str(&format!(
            "#median,,,,{:.6},{:.6},{:.6}\n",
            self.median_auroc, self.median_auprc, self.median_ap50
        ));
        out
    }

    /// One-row summary CSV with the ranking aggregates.
    pub fn summary_csv(&self) -> String {
        format!(
            "mrr,hits_at_1,hits_at_3,hits_at_10\n{:.6},{:.6},{:.6},{:.6}\n",
            self.ranking.mrr,
            self.ranking.hits_at_1,
            self.ranking.hits_at_3,
            self.ranking.hits_at_10
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Family, Matrix, ModelSpec};

    fn distmult_params(entities: Vec<Vec<f64>>, relations: Vec<Vec<f64>>) -> ModelParams<f64> {
        let dim = entities[0].len();
        ModelParams {
            spec: ModelSpec::new(Family::DistMult, dim).unwrap(),
            entities: Matrix::from_vec(
                entities.len(),
                dim,
                entities.into_iter().flatten().collect(),
            ),
            relations: Matrix::from_vec(
                relations.len(),
                dim,
                relations.into_iter().flatten().collect(),
            ),
        }
    }

    #[test]
    fn top_score_ranks_first() {
        // subject 0 with relation [1,1]: object scores = dot(e0, ej)
        let params = distmult_params(
            vec![
                vec![1.0, 0.0],
                vec![5.0, 0.0],
                vec![0.1, 0.0],
                vec![-1.0, 0.0],
            ],
            vec![vec![1.0, 1.0]],
        );
        let t = Triple::new(0, 0, 1);
        let empty = TripleStore::empty(4, 1);
        let ranks = rank_all(&params, &[t], &[&empty]).unwrap();
        assert_eq!(ranks[0].filtered_rank, 1);
    }

    #[test]
    fn total_tie_gets_middle_rank() {
        // zero relation vector makes every candidate score 0
        let params = distmult_params(vec![vec![1.0, 1.0]; 4], vec![vec![0.0, 0.0]]);
        let t = Triple::new(0, 0, 1);
        let empty = TripleStore::empty(4, 1);
        let ranks = rank_all(&params, &[t], &[&empty]).unwrap();
        // N = 4, all tied: rank = round_half_up((4 + 1) / 2) = 3
        assert_eq!(ranks[0].filtered_rank, 3);
    }

    #[test]
    fn filtered_competitor_removed_tie_halved() {
        // anchor (entity 4) scores candidates by their first component:
        // e0 -> 5, e1 -> 3 (test), e2 -> 3, e3 -> 1
        let params = distmult_params(
            vec![
                vec![5.0, 0.0],
                vec![3.0, 0.0],
                vec![3.0, 0.0],
                vec![1.0, 0.0],
                vec![1.0, 0.0],
            ],
            vec![vec![1.0, 1.0]],
        );
        let t = Triple::new(4, 0, 1);
        // filter knows (4, 0, 0): candidate 0 (score 5) is removed
        let filter = TripleStore::new(vec![Triple::new(4, 0, 0)], 5, 1).unwrap();
        let ranks = rank_all(&params, &[t], &[&filter]).unwrap();
        assert_eq!(ranks[0].filtered_rank, 2);
    }

    #[test]
    fn rank_preserving_perturbation_keeps_ranks() {
        let params = distmult_params(
            vec![
                vec![4.0, 0.0],
                vec![2.0, 0.0],
                vec![1.0, 0.0],
                vec![0.5, 0.0],
                vec![1.0, 0.0],
            ],
            vec![vec![1.0, 1.0]],
        );
        let mut nudged = params.clone();
        for i in 0..5 {
            let v = nudged.entities.row_mut(i);
            v[0] = v[0] * 1.0001 + 1e-9 * (i as f64);
        }
        let empty = TripleStore::empty(5, 1);
        let t = Triple::new(4, 0, 1);
        let a = rank_all(&params, &[t], &[&empty]).unwrap();
        let b = rank_all(&nudged, &[t], &[&empty]).unwrap();
        assert_eq!(a[0].filtered_rank, b[0].filtered_rank);
    }

    #[test]
    fn ranking_metrics_hand_values() {
        let mk = |rank| RankResult {
            triple: Triple::new(0, 0, 0),
            side: Side::Object,
            filtered_rank: rank,
        };
        let single = [mk(1)];
        let m = ranking_metrics(&single).unwrap();
        assert_eq!(m.mrr, 1.0);
        assert_eq!(m.hits_at_10, 1.0);

        let three = [mk(1), mk(2), mk(4)];
        let m = ranking_metrics(&three).unwrap();
        assert!((m.mrr - (1.0 + 0.5 + 0.25) / 3.0).abs() < 1e-15);
        assert!((m.hits_at_3 - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            ranking_metrics(&[]),
            Err(EvalError::EmptyEvaluation)
        ));
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&mut vec![0.9, 0.6, 0.7]), 0.7);
        assert_eq!(median(&mut vec![0.6, 0.9]), 0.75);
    }
}
