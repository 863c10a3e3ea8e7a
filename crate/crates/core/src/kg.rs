//! Immutable integer-indexed triple storage.
//!
//! A [`Vocabulary`] maps entity/relation names to dense indexes in
//! first-appearance order; a [`TripleStore`] holds deduplicated triples
//! together with the (subject, predicate) and (predicate, object) indexes
//! that label assembly and filtered ranking query. Stores are immutable
//! after construction and safe to share across threads.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("empty graph: no triples supplied")]
    EmptyGraph,
    #[error("malformed triple at row {0}: empty name field")]
    MalformedTriple(usize),
    #[error("{kind} id {id} out of range (count {count})")]
    IdOutOfRange {
        kind: &'static str,
        id: u32,
        count: u32,
    },
    #[error("duplicate {kind} name {name:?}")]
    DuplicateName { kind: &'static str, name: String },
}

/// Dense entity index into the owning [`Vocabulary`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u32);

/// Dense relation index into the owning [`Vocabulary`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationId(pub u32);

impl EntityId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

/// One (subject, predicate, object) fact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub subject: EntityId,
    pub predicate: RelationId,
    pub object: EntityId,
}

impl Triple {
    pub fn new(s: u32, p: u32, o: u32) -> Self {
        Triple {
            subject: EntityId(s),
            predicate: RelationId(p),
            object: EntityId(o),
        }
    }
}

/// Entity and relation name tables with reverse lookup.
///
/// Indexes are assigned in first-appearance order and recorded verbatim in
/// the exported dataset files, so an index never has to be re-derived.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    entity_index: HashMap<String, u32>,
    relation_index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from pre-ordered name lists, validating that
    /// names are unique and non-empty.
    pub fn from_names(
        entity_names: Vec<String>,
        relation_names: Vec<String>,
    ) -> Result<Self, KgError> {
        let mut entity_index = HashMap::with_capacity(entity_names.len());
        for (i, name) in entity_names.iter().enumerate() {
            if name.is_empty() {
                return Err(KgError::MalformedTriple(i));
            }
            if entity_index.insert(name.clone(), i as u32).is_some() {
                return Err(KgError::DuplicateName {
                    kind: "entity",
                    name: name.clone(),
                });
            }
        }
        let mut relation_index = HashMap::with_capacity(relation_names.len());
        for (i, name) in relation_names.iter().enumerate() {
            if name.is_empty() {
                return Err(KgError::MalformedTriple(i));
            }
            if relation_index.insert(name.clone(), i as u32).is_some() {
                return Err(KgError::DuplicateName {
                    kind: "relation",
                    name: name.clone(),
                });
            }
        }
        Ok(Vocabulary {
            entity_names,
            relation_names,
            entity_index,
            relation_index,
        })
    }

    pub fn entity_count(&self) -> usize {
        self.entity_names.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relation_names.len()
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entity_names[id.idx()]
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        &self.relation_names[id.idx()]
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entity_index.get(name).map(|&i| EntityId(i))
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_index.get(name).map(|&i| RelationId(i))
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entity_names
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }
}

/// Converts named triples into integer triples, interning entities in
/// first-appearance order (subject before object within each row) and
/// relations in first-appearance order.
///
/// Duplicate rows are removed; the first occurrence keeps its position.
pub fn build_vocabulary(
    named: &[(String, String, String)],
) -> Result<(Vocabulary, Vec<Triple>), KgError> {
    if named.is_empty() {
        return Err(KgError::EmptyGraph);
    }
    let mut entity_names = Vec::new();
    let mut relation_names = Vec::new();
    let mut entity_index: HashMap<&str, u32> = HashMap::new();
    let mut relation_index: HashMap<&str, u32> = HashMap::new();
    let mut triples = Vec::with_capacity(named.len());
    let mut seen: HashSet<Triple> = HashSet::with_capacity(named.len());

    for (row, (s, p, o)) in named.iter().enumerate() {
        if s.is_empty() || p.is_empty() || o.is_empty() {
            return Err(KgError::MalformedTriple(row));
        }
        let si = *entity_index.entry(s.as_str()).or_insert_with(|| {
            entity_names.push(s.clone());
            (entity_names.len() - 1) as u32
        });
        let oi = *entity_index.entry(o.as_str()).or_insert_with(|| {
            entity_names.push(o.clone());
            (entity_names.len() - 1) as u32
        });
        let pi = *relation_index.entry(p.as_str()).or_insert_with(|| {
            relation_names.push(p.clone());
            (relation_names.len() - 1) as u32
        });
        let t = Triple::new(si, pi, oi);
        if seen.insert(t) {
            triples.push(t);
        }
    }

    let vocab = Vocabulary::from_names(entity_names, relation_names)?;
    Ok((vocab, triples))
}

/// Deduplicated triple list plus lookup indexes.
#[derive(Clone, Debug)]
pub struct TripleStore {
    triples: Vec<Triple>,
    by_sp: HashMap<(u32, u32), Vec<EntityId>>,
    by_po: HashMap<(u32, u32), Vec<EntityId>>,
    by_p: HashMap<u32, usize>,
    set: HashSet<Triple>,
    entity_count: u32,
    relation_count: u32,
}

impl TripleStore {
    /// Builds a store over a vocabulary of the given sizes. Out-of-range ids
    /// are rejected; duplicate triples are dropped (first occurrence kept).
    pub fn new(
        triples: Vec<Triple>,
        entity_count: usize,
        relation_count: usize,
    ) -> Result<Self, KgError> {
        let entity_count = entity_count as u32;
        let relation_count = relation_count as u32;
        let mut store = TripleStore {
            triples: Vec::with_capacity(triples.len()),
            by_sp: HashMap::new(),
            by_po: HashMap::new(),
            by_p: HashMap::new(),
            set: HashSet::with_capacity(triples.len()),
            entity_count,
            relation_count,
        };
        for t in triples {
            store.check_triple(t)?;
            if store.set.insert(t) {
                store.triples.push(t);
            }
        }
        for &t in &store.triples {
            store
                .by_sp
                .entry((t.subject.0, t.predicate.0))
                .or_default()
                .push(t.object);
            store
                .by_po
                .entry((t.predicate.0, t.object.0))
                .or_default()
                .push(t.subject);
            *store.by_p.entry(t.predicate.0).or_default() += 1;
        }
        for v in store.by_sp.values_mut() {
            v.sort_unstable();
        }
        for v in store.by_po.values_mut() {
            v.sort_unstable();
        }
        Ok(store)
    }

    pub fn empty(entity_count: usize, relation_count: usize) -> Self {
        TripleStore::new(Vec::new(), entity_count, relation_count).expect("empty store")
    }

    fn check_triple(&self, t: Triple) -> Result<(), KgError> {
        self.check_entity(t.subject)?;
        self.check_relation(t.predicate)?;
        self.check_entity(t.object)
    }

    fn check_entity(&self, e: EntityId) -> Result<(), KgError> {
        if e.0 >= self.entity_count {
            return Err(KgError::IdOutOfRange {
                kind: "entity",
                id: e.0,
                count: self.entity_count,
            });
        }
        Ok(())
    }

    fn check_relation(&self, r: RelationId) -> Result<(), KgError> {
        if r.0 >= self.relation_count {
            return Err(KgError::IdOutOfRange {
                kind: "relation",
                id: r.0,
                count: self.relation_count,
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count as usize
    }

    pub fn relation_count(&self) -> usize {
        self.relation_count as usize
    }

    /// True iff the exact triple was ingested.
    pub fn exists(&self, t: Triple) -> Result<bool, KgError> {
        self.check_triple(t)?;
        Ok(self.set.contains(&t))
    }

    /// Unchecked membership test for hot paths; ids must be in range.
    #[inline]
    pub fn contains(&self, t: Triple) -> bool {
        self.set.contains(&t)
    }

    /// All objects completing (s, p, ?), sorted ascending.
    pub fn objects_of(&self, s: EntityId, p: RelationId) -> Result<&[EntityId], KgError> {
        self.check_entity(s)?;
        self.check_relation(p)?;
        Ok(self
            .by_sp
            .get(&(s.0, p.0))
            .map(Vec::as_slice)
            .unwrap_or(&[]))
    }

    /// All subjects completing (?, p, o), sorted ascending.
    pub fn subjects_of(&self, p: RelationId, o: EntityId) -> Result<&[EntityId], KgError> {
        self.check_relation(p)?;
        self.check_entity(o)?;
        Ok(self
            .by_po
            .get(&(p.0, o.0))
            .map(Vec::as_slice)
            .unwrap_or(&[]))
    }

    /// Number of triples carrying the given predicate.
    pub fn predicate_count(&self, p: RelationId) -> usize {
        self.by_p.get(&p.0).copied().unwrap_or(0)
    }
}

/// Pairwise overlap and range diagnostics for a train/valid/holdout split.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub train_valid_overlap: usize,
    pub train_holdout_overlap: usize,
    pub valid_holdout_overlap: usize,
    pub out_of_range: usize,
}

impl ValidationReport {
    /// The pipeline may only proceed when holdout and train are disjoint.
    pub fn pipeline_ok(&self) -> bool {
        self.train_holdout_overlap == 0 && self.out_of_range == 0
    }
}

/// Report-only consistency check across the three splits. Stores are
/// expected to share one vocabulary; triples outside the smallest common
/// id range are counted as out-of-range.
pub fn validate_splits(
    train: &TripleStore,
    valid: &TripleStore,
    holdout: &TripleStore,
) -> ValidationReport {
    let entity_count = train
        .entity_count()
        .min(valid.entity_count())
        .min(holdout.entity_count()) as u32;
    let relation_count = train
        .relation_count()
        .min(valid.relation_count())
        .min(holdout.relation_count()) as u32;
    let mut out_of_range = 0;
    for store in [train, valid, holdout] {
        for t in store.triples() {
            if t.subject.0 >= entity_count
                || t.object.0 >= entity_count
                || t.predicate.0 >= relation_count
            {
                out_of_range += 1;
            }
        }
    }
    let overlap = |a: &TripleStore, b: &TripleStore| {
        let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        small
            .triples()
            .iter()
            .filter(|t| large.contains(**t))
            .count()
    };
    ValidationReport {
        train_valid_overlap: overlap(train, valid),
        train_holdout_overlap: overlap(train, holdout),
        valid_holdout_overlap: overlap(valid, holdout),
        out_of_range,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn named(rows: &[(&str, &str, &str)]) -> Vec<(String, String, String)> {
        rows.iter()
            .map(|(s, p, o)| (s.to_string(), p.to_string(), o.to_string()))
            .collect()
    }

    #[test]
    fn single_edge() {
        let (vocab, triples) = build_vocabulary(&named(&[("a", "r", "b")])).unwrap();
        assert_eq!(vocab.entity_names(), ["a", "b"]);
        assert_eq!(vocab.relation_names(), ["r"]);
        assert_eq!(triples, vec![Triple::new(0, 0, 1)]);
    }

    #[test]
    fn duplicate_rows_dedup() {
        let (_, triples) = build_vocabulary(&named(&[("a", "r", "b"), ("a", "r", "b")])).unwrap();
        assert_eq!(triples.len(), 1);
    }

    #[test]
    fn first_appearance_ordering() {
        let rows = named(&[("a", "r", "b"), ("b", "s", "a"), ("a", "s", "a")]);
        let (vocab, triples) = build_vocabulary(&rows).unwrap();
        assert_eq!(vocab.entity_names(), ["a", "b"]);
        assert_eq!(vocab.relation_names(), ["r", "s"]);
        assert_eq!(
            triples,
            vec![
                Triple::new(0, 0, 1),
                Triple::new(1, 1, 0),
                Triple::new(0, 1, 0)
            ]
        );
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(build_vocabulary(&[]), Err(KgError::EmptyGraph)));
    }

    #[test]
    fn empty_name_rejected() {
        let err = build_vocabulary(&named(&[("a", "r", "b"), ("", "r", "b")])).unwrap_err();
        assert!(matches!(err, KgError::MalformedTriple(1)));
    }

    #[test]
    fn deterministic_rebuild() {
        let rows = named(&[("x", "r", "y"), ("y", "q", "z"), ("x", "q", "z")]);
        let a = build_vocabulary(&rows).unwrap();
        let b = build_vocabulary(&rows).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn lookup_exists_and_completions() {
        let store = TripleStore::new(vec![Triple::new(0, 0, 1)], 2, 1).unwrap();
        assert!(store.exists(Triple::new(0, 0, 1)).unwrap());
        assert!(!store.exists(Triple::new(1, 0, 0)).unwrap());
        assert_eq!(
            store.objects_of(EntityId(0), RelationId(0)).unwrap(),
            &[EntityId(1)]
        );
        assert!(store
            .objects_of(EntityId(1), RelationId(0))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn completions_sorted() {
        let store = TripleStore::new(
            vec![
                Triple::new(0, 0, 1),
                Triple::new(0, 0, 2),
                Triple::new(0, 0, 0),
            ],
            3,
            1,
        )
        .unwrap();
        let objs = store.objects_of(EntityId(0), RelationId(0)).unwrap();
        assert_eq!(objs, &[EntityId(0), EntityId(1), EntityId(2)]);
    }

    #[test]
    fn out_of_range_lookup() {
        let store = TripleStore::new(vec![Triple::new(0, 0, 1)], 2, 1).unwrap();
        assert!(matches!(
            store.exists(Triple::new(0, 0, 2)),
            Err(KgError::IdOutOfRange { kind: "entity", .. })
        ));
        assert!(matches!(
            store.objects_of(EntityId(0), RelationId(1)),
            Err(KgError::IdOutOfRange {
                kind: "relation",
                ..
            })
        ));
    }

    #[test]
    fn exists_brute_force_small_graph() {
        let triples: Vec<Triple> = (0..4u32)
            .flat_map(|s| (0..4u32).map(move |o| Triple::new(s, (s + o) % 2, o)))
            .collect();
        let store = TripleStore::new(triples.clone(), 4, 2).unwrap();
        let ingested: HashSet<Triple> = triples.into_iter().collect();
        for s in 0..4u32 {
            for p in 0..2u32 {
                for o in 0..4u32 {
                    let t = Triple::new(s, p, o);
                    assert_eq!(store.exists(t).unwrap(), ingested.contains(&t));
                }
            }
        }
    }

    #[test]
    fn index_counts_sum_to_len() {
        let triples = vec![
            Triple::new(0, 0, 1),
            Triple::new(0, 0, 2),
            Triple::new(1, 1, 0),
            Triple::new(2, 0, 0),
        ];
        let store = TripleStore::new(triples, 3, 2).unwrap();
        let sp_total: usize = store.by_sp.values().map(Vec::len).sum();
        let po_total: usize = store.by_po.values().map(Vec::len).sum();
        let p_total: usize = store.by_p.values().sum();
        assert_eq!(sp_total, store.len());
        assert_eq!(po_total, store.len());
        assert_eq!(p_total, store.len());
    }

    #[test]
    fn validate_disjoint_splits() {
        let train = TripleStore::new(vec![Triple::new(0, 0, 1)], 3, 1).unwrap();
        let valid = TripleStore::new(vec![Triple::new(1, 0, 2)], 3, 1).unwrap();
        let holdout = TripleStore::new(vec![Triple::new(2, 0, 0)], 3, 1).unwrap();
        let report = validate_splits(&train, &valid, &holdout);
        assert_eq!(report, ValidationReport::default());
        assert!(report.pipeline_ok());
    }

    #[test]
    fn validate_identical_train_holdout() {
        let triples = vec![Triple::new(0, 0, 1), Triple::new(1, 0, 2)];
        let train = TripleStore::new(triples.clone(), 3, 1).unwrap();
        let holdout = TripleStore::new(triples, 3, 1).unwrap();
        let valid = TripleStore::empty(3, 1);
        let report = validate_splits(&train, &valid, &holdout);
        assert_eq!(report.train_holdout_overlap, 2);
        assert!(!report.pipeline_ok());
    }

    #[test]
    fn validate_partial_overlap_blocks() {
        let train =
            TripleStore::new(vec![Triple::new(0, 0, 1), Triple::new(1, 0, 2)], 3, 1).unwrap();
        let holdout = TripleStore::new(vec![Triple::new(1, 0, 2)], 3, 1).unwrap();
        let report = validate_splits(&train, &TripleStore::empty(3, 1), &holdout);
        assert_eq!(report.train_holdout_overlap, 1);
        assert!(!report.pipeline_ok());
    }
}
