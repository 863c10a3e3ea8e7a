//! Target assembly for the three training strategies.
//!
//! Every strategy reduces to the same row shape: an anchor entity, a
//! relation, a candidate set for the open slot, and the candidate indices
//! labelled positive. 1vsAll emits two all-entity rows per triple with a
//! single positive; KvsAll emits one all-entity row per distinct
//! (subject, predicate) and (predicate, object) key in the batch with
//! multi-hot labels taken from the training store; negative sampling lists
//! the true completion followed by uniformly drawn corruptions.

use std::collections::HashSet;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use super::config::TrainStrategy;
use crate::kg::{EntityId, RelationId, Triple, TripleStore};
use crate::models::Side;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Candidates {
    /// Candidate j is entity j, for every entity.
    All,
    Listed(Vec<EntityId>),
}

#[derive(Clone, Debug)]
pub struct TargetRow {
    pub side: Side,
    pub anchor: EntityId,
    pub relation: RelationId,
    pub candidates: Candidates,
    /// Indices into the candidate set, sorted ascending.
    pub positives: Vec<u32>,
}

#[derive(Clone, Debug, Default)]
pub struct TargetBatch {
    pub rows: Vec<TargetRow>,
    /// Corruptions kept although they collide with a training positive
    /// (candidate pool exhausted after 50 attempts).
    pub saturated_corruptions: u64,
}

const MAX_CORRUPTION_ATTEMPTS: usize = 50;

pub fn assemble_targets(
    strategy: &TrainStrategy,
    batch: &[Triple],
    train: &TripleStore,
    rng: &mut ChaCha20Rng,
) -> TargetBatch {
    match strategy {
        TrainStrategy::OneVsAll => one_vs_all(batch),
        TrainStrategy::KVsAll => k_vs_all(batch, train),
        TrainStrategy::NegSampling {
            subject_samples,
            object_samples,
        } => neg_sampling(batch, train, *subject_samples, *object_samples, rng),
    }
}

fn one_vs_all(batch: &[Triple]) -> TargetBatch {
    let mut rows = Vec::with_capacity(batch.len() * 2);
    for t in batch {
        rows.push(TargetRow {
            side: Side::Object,
            anchor: t.subject,
            relation: t.predicate,
            candidates: Candidates::All,
            positives: vec![t.object.0],
        });
        rows.push(TargetRow {
            side: Side::Subject,
            anchor: t.object,
            relation: t.predicate,
            candidates: Candidates::All,
            positives: vec![t.subject.0],
        });
    }
    TargetBatch {
        rows,
        saturated_corruptions: 0,
    }
}

fn k_vs_all(batch: &[Triple], train: &TripleStore) -> TargetBatch {
    let mut rows = Vec::new();
    let mut seen_sp = HashSet::new();
    let mut seen_po = HashSet::new();
    for t in batch {
        if seen_sp.insert((t.subject, t.predicate)) {
            let positives = train
                .objects_of(t.subject, t.predicate)
                .expect("batch ids in range")
                .iter()
                .map(|e| e.0)
                .collect();
            rows.push(TargetRow {
                side: Side::Object,
                anchor: t.subject,
                relation: t.predicate,
                candidates: Candidates::All,
                positives,
            });
        }
    }
    for t in batch {
        if seen_po.insert((t.predicate, t.object)) {
            let positives = train
                .subjects_of(t.predicate, t.object)
                .expect("batch ids in range")
                .iter()
                .map(|e| e.0)
                .collect();
            rows.push(TargetRow {
                side: Side::Subject,
                anchor: t.object,
                relation: t.predicate,
                candidates: Candidates::All,
                positives,
            });
        }
    }
    TargetBatch {
        rows,
        saturated_corruptions: 0,
    }
}

fn neg_sampling(
    batch: &[Triple],
    train: &TripleStore,
    subject_samples: usize,
    object_samples: usize,
    rng: &mut ChaCha20Rng,
) -> TargetBatch {
    let n = train.entity_count() as u32;
    let mut saturated = 0u64;
    let mut rows = Vec::with_capacity(batch.len() * 2);
    let mut draw = |collides: &dyn Fn(EntityId) -> bool, rng: &mut ChaCha20Rng| -> EntityId {
        let mut candidate = EntityId(rng.random_range(0..n));
        for _ in 0..MAX_CORRUPTION_ATTEMPTS {
            if !collides(candidate) {
                return candidate;
            }
            candidate = EntityId(rng.random_range(0..n));
        }
        saturated += 1;
        candidate
    };
    for t in batch {
        let mut object_cands = Vec::with_capacity(1 + object_samples);
        object_cands.push(t.object);
        for _ in 0..object_samples {
            let is_positive = |e: EntityId| {
                train.contains(Triple {
                    subject: t.subject,
                    predicate: t.predicate,
                    object: e,
                })
            };
            object_cands.push(draw(&is_positive, rng));
        }
        rows.push(TargetRow {
            side: Side::Object,
            anchor: t.subject,
            relation: t.predicate,
            candidates: Candidates::Listed(object_cands),
            positives: vec![0],
        });
        let mut subject_cands = Vec::with_capacity(1 + subject_samples);
        subject_cands.push(t.subject);
        for _ in 0..subject_samples {
            let is_positive = |e: EntityId| {
                train.contains(Triple {
                    subject: e,
                    predicate: t.predicate,
                    object: t.object,
                })
            };
            subject_cands.push(draw(&is_positive, rng));
        }
        rows.push(TargetRow {
            side: Side::Subject,
            anchor: t.object,
            relation: t.predicate,
            candidates: Candidates::Listed(subject_cands),
            positives: vec![0],
        });
    }
    TargetBatch {
        rows,
        saturated_corruptions: saturated,
    }
}
