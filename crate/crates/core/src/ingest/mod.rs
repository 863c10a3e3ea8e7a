//! Source-table parsing, graph construction and split management.
//!
//! The raw corpus arrives as four comma-separated tables: drug-pair side
//! effects, single-drug side effects, drug-target links and protein-protein
//! interactions. Two graph constructions are supported:
//!
//! - `Selfloops` turns each single-drug side effect into an edge from the
//!   drug back to itself under a per-side-effect relation.
//! - `NonNaive` leaves those edges out and instead collects an n-hot
//!   feature vector per drug, later reduced and used to initialise drug
//!   embeddings.
//!
//! Both variants share the polypharmacy edges bit-for-bit: pair edges are
//! assembled first and stored once in canonical direction (lexicographically
//! smaller drug first), so entity/relation ids and the holdout split agree
//! across variants. Protein interactions are symmetric and materialised in
//! both directions under one relation.
//!
//! Every count the builder touches lands in the ledger: raw rows, removed
//! duplicates, per-meta-edge totals, dropped rare side effects, orphan
//! drugs. The ledger ships with the exported dataset.

pub mod dataset;
pub mod features;

pub use dataset::{export_dataset, import_dataset};
pub use features::{reduce_features, reduce_features_with, ReduceOptions, Reduction};

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::kg::{build_vocabulary, EntityId, KgError, RelationId, TripleStore, Vocabulary};

pub const RELATION_TARGETS: &str = "targets";
pub const RELATION_PPI: &str = "ppi";
pub const PSE_PREFIX: &str = "pse:";
pub const MONO_PREFIX: &str = "mono:";

/// Side effects with fewer drug-pair edges than this are dropped, matching
/// the corpus convention behind the 963 evaluated side effects.
pub const DEFAULT_MIN_PSE_COUNT: usize = 500;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{0}")]
    MalformedRows(MalformedRows),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error("corrupt dataset file {file}: {reason}")]
    CorruptDataset { file: String, reason: String },
    #[error("split fraction {0} outside (0, 1)")]
    BadFraction(f64),
    #[error("{0} split already populated")]
    SplitExists(&'static str),
    #[error("feature reduction: {0}")]
    Features(String),
}

/// All malformed rows found while parsing, with file and 1-based data row.
#[derive(Debug)]
pub struct MalformedRows(pub Vec<RowIssue>);

#[derive(Debug)]
pub struct RowIssue {
    pub file: String,
    pub row: usize,
    pub reason: String,
}

impl fmt::Display for MalformedRows {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} malformed row(s):", self.0.len())?;
        for issue in self.0.iter().take(5) {
            write!(f, " [{} row {}: {}]", issue.file, issue.row, issue.reason)?;
        }
        if self.0.len() > 5 {
            write!(f, " ...")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComboRow {
    pub drug_a: String,
    pub drug_b: String,
    pub se_id: String,
    pub se_name: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonoRow {
    pub drug: String,
    pub se_id: String,
    pub se_name: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetLink {
    pub drug: String,
    pub gene: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PpiLink {
    pub gene_a: String,
    pub gene_b: String,
}

/// Parsed source tables, identifiers kept as opaque strings.
#[derive(Clone, Debug, Default)]
pub struct RawRecords {
    pub combo: Vec<ComboRow>,
    pub mono: Vec<MonoRow>,
    pub targets: Vec<TargetLink>,
    pub ppi: Vec<PpiLink>,
}

#[derive(Clone, Debug)]
pub struct SourcePaths {
    pub combo: PathBuf,
    pub mono: PathBuf,
    pub targets: PathBuf,
    pub ppi: PathBuf,
}

/// Graph construction variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphVariant {
    Selfloops,
    NonNaive,
}

impl GraphVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            GraphVariant::Selfloops => "selfloops",
            GraphVariant::NonNaive => "nonnaive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "selfloops" => Some(GraphVariant::Selfloops),
            "nonnaive" | "non-naive" => Some(GraphVariant::NonNaive),
            _ => None,
        }
    }
}

/// Binary drug-by-side-effect matrix, stored sparsely. Rows exist for drugs
/// with at least one retained single-drug side effect.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureMatrix {
    drug_ids: Vec<EntityId>,
    rows: Vec<Vec<u32>>,
    column_count: usize,
}

impl FeatureMatrix {
    /// Builds from (drug, column) hot cells; cells are grouped by drug and
    /// sorted, duplicates removed.
    pub fn from_hot_cells(cells: &[(EntityId, u32)], column_count: usize) -> Self {
        let mut by_drug: BTreeMap<EntityId, BTreeSet<u32>> = BTreeMap::new();
        for &(drug, col) in cells {
            by_drug.entry(drug).or_default().insert(col);
        }
        let mut drug_ids = Vec::with_capacity(by_drug.len());
        let mut rows = Vec::with_capacity(by_drug.len());
        for (drug, cols) in by_drug {
            drug_ids.push(drug);
            rows.push(cols.into_iter().collect());
        }
        FeatureMatrix {
            drug_ids,
            rows,
            column_count,
        }
    }

    pub fn row_count(&self) -> usize {
        self.drug_ids.len()
    }

    pub fn column_count(&self) -> usize {
        self.column_count
    }

    pub fn drug_ids(&self) -> &[EntityId] {
        &self.drug_ids
    }

    /// Sorted hot column indices of row `i`.
    pub fn hot(&self, i: usize) -> &[u32] {
        &self.rows[i]
    }

    pub fn hot_cell_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

/// Monotone counters describing one ingestion run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Ledger(BTreeMap<String, u64>);

impl Ledger {
    pub fn add(&mut self, name: &str, n: u64) {
        *self.0.entry(name.to_string()).or_default() += n;
    }

    pub fn set(&mut self, name: &str, n: u64) {
        self.0.insert(name.to_string(), n);
    }

    pub fn get(&self, name: &str) -> Option<u64> {
        self.0.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

/// A constructed dataset: vocabulary, splits, the polypharmacy relation
/// set, optional drug features and the ingestion ledger.
#[derive(Clone, Debug)]
pub struct DatasetBundle {
    pub vocabulary: Vocabulary,
    pub train: TripleStore,
    pub valid: TripleStore,
    pub holdout: TripleStore,
    pub pse_relations: BTreeSet<RelationId>,
    pub features: Option<FeatureMatrix>,
    pub ledger: Ledger,
}

impl DatasetBundle {
    /// Entities appearing in any polypharmacy edge across all splits,
    /// sorted ascending. This is the candidate pool for evaluation
    /// negatives.
    pub fn drug_entities(&self) -> Vec<EntityId> {
        let mut drugs = BTreeSet::new();
        for store in [&self.train, &self.valid, &self.holdout] {
            for t in store.triples() {
                if self.pse_relations.contains(&t.predicate) {
                    drugs.insert(t.subject);
                    drugs.insert(t.object);
                }
            }
        }
        drugs.into_iter().collect()
    }

    pub fn filter_stores(&self) -> [&TripleStore; 3] {
        [&self.train, &self.valid, &self.holdout]
    }
}

fn check_file(path: &Path) -> Result<(), IngestError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(IngestError::FileNotFound(path.to_path_buf()))
    }
}

fn parse_csv(
    path: &Path,
    expected_cols: usize,
    issues: &mut Vec<RowIssue>,
) -> Result<Vec<Vec<String>>, IngestError> {
    check_file(path)?;
    let file_tag = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|source| IngestError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|source| IngestError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        if record.len() != expected_cols {
            issues.push(RowIssue {
                file: file_tag.clone(),
                row,
                reason: format!("expected {expected_cols} columns, got {}", record.len()),
            });
            continue;
        }
        let fields: Vec<String> = record.iter().map(str::to_string).collect();
        if fields.iter().any(|f| f.is_empty()) {
            issues.push(RowIssue {
                file: file_tag.clone(),
                row,
                reason: "empty identifier".into(),
            });
            continue;
        }
        rows.push(fields);
    }
    Ok(rows)
}

/// Parses the four source tables. Column orders: combo = drug1, drug2,
/// side-effect id, side-effect name; mono = drug, side-effect id,
/// side-effect name; targets = drug, gene; ppi = gene1, gene2.
pub fn parse_source_tables(paths: &SourcePaths) -> Result<RawRecords, IngestError> {
    let mut issues = Vec::new();
    let combo_rows = parse_csv(&paths.combo, 4, &mut issues)?;
    let mono_rows = parse_csv(&paths.mono, 3, &mut issues)?;
    let target_rows = parse_csv(&paths.targets, 2, &mut issues)?;
    let ppi_rows = parse_csv(&paths.ppi, 2, &mut issues)?;

    let mut records = RawRecords::default();
    let combo_tag = file_tag(&paths.combo);
    for (i, mut f) in combo_rows.into_iter().enumerate() {
        let se_name = f.pop().unwrap();
        let se_id = f.pop().unwrap();
        let drug_b = f.pop().unwrap();
        let drug_a = f.pop().unwrap();
        if drug_a == drug_b {
            issues.push(RowIssue {
                file: combo_tag.clone(),
                row: i + 1,
                reason: "drug pair with identical drugs".into(),
            });
            continue;
        }
        records.combo.push(ComboRow {
            drug_a,
            drug_b,
            se_id,
            se_name,
        });
    }
    for mut f in mono_rows {
        let se_name = f.pop().unwrap();
        let se_id = f.pop().unwrap();
        let drug = f.pop().unwrap();
        records.mono.push(MonoRow {
            drug,
            se_id,
            se_name,
        });
    }
    for mut f in target_rows {
        let gene = f.pop().unwrap();
        let drug = f.pop().unwrap();
        records.targets.push(TargetLink { drug, gene });
    }
    for mut f in ppi_rows {
        let gene_b = f.pop().unwrap();
        let gene_a = f.pop().unwrap();
        records.ppi.push(PpiLink { gene_a, gene_b });
    }

    if issues.is_empty() {
        Ok(records)
    } else {
        Err(IngestError::MalformedRows(MalformedRows(issues)))
    }
}

fn file_tag(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn canonical_pair<'a>(a: &'a str, b: &'a str) -> (&'a str, &'a str) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Builds one graph variant from parsed records. Polypharmacy side effects
/// with fewer than `min_pse_count` unique drug pairs are dropped. The
/// returned bundle has empty valid and holdout splits.
pub fn build_graph(
    records: &RawRecords,
    variant: GraphVariant,
    min_pse_count: usize,
) -> Result<DatasetBundle, IngestError> {
    let mut ledger = Ledger::default();
    ledger.set("raw_rows_combo", records.combo.len() as u64);
    ledger.set("raw_rows_mono", records.mono.len() as u64);
    ledger.set("raw_rows_targets", records.targets.len() as u64);
    ledger.set("raw_rows_ppi", records.ppi.len() as u64);

    // Deduplicate pair edges in canonical direction and count per side
    // effect, keeping first-appearance order.
    let mut combo_seen: HashSet<(String, String, String)> = HashSet::new();
    let mut combo_edges: Vec<(String, String, String)> = Vec::new(); // (a, se_id, b)
    let mut pse_counts: HashMap<String, usize> = HashMap::new();
    let mut dup_combo = 0u64;
    for row in &records.combo {
        let (a, b) = canonical_pair(&row.drug_a, &row.drug_b);
        let key = (a.to_string(), row.se_id.clone(), b.to_string());
        if combo_seen.insert(key.clone()) {
            *pse_counts.entry(row.se_id.clone()).or_default() += 1;
            combo_edges.push(key);
        } else {
            dup_combo += 1;
        }
    }
    ledger.set("duplicates_combo", dup_combo);

    let kept_se: HashSet<&String> = pse_counts
        .iter()
        .filter(|(_, &n)| n >= min_pse_count)
        .map(|(se, _)| se)
        .collect();
    let dropped_relations = pse_counts.len() - kept_se.len();
    let dropped_edges: usize = pse_counts
        .iter()
        .filter(|(se, _)| !kept_se.contains(se))
        .map(|(_, &n)| n)
        .sum();
    ledger.set("pse_relations_dropped", dropped_relations as u64);
    ledger.set("pse_edges_dropped", dropped_edges as u64);

    let mut target_seen = HashSet::new();
    let mut target_edges = Vec::new();
    let mut dup_targets = 0u64;
    for row in &records.targets {
        if target_seen.insert((row.drug.clone(), row.gene.clone())) {
            target_edges.push((row.drug.clone(), row.gene.clone()));
        } else {
            dup_targets += 1;
        }
    }
    ledger.set("duplicates_targets", dup_targets);

    let mut ppi_seen = HashSet::new();
    let mut ppi_edges = Vec::new();
    let mut dup_ppi = 0u64;
    for row in &records.ppi {
        let (a, b) = canonical_pair(&row.gene_a, &row.gene_b);
        if ppi_seen.insert((a.to_string(), b.to_string())) {
            ppi_edges.push((a.to_string(), b.to_string()));
        } else {
            dup_ppi += 1;
        }
    }
    ledger.set("duplicates_ppi", dup_ppi);

    let mut mono_seen = HashSet::new();
    let mut mono_pairs = Vec::new(); // (drug, se_id) first-appearance order
    let mut dup_mono = 0u64;
    for row in &records.mono {
        if mono_seen.insert((row.drug.clone(), row.se_id.clone())) {
            mono_pairs.push((row.drug.clone(), row.se_id.clone()));
        } else {
            dup_mono += 1;
        }
    }
    ledger.set("duplicates_mono", dup_mono);

    // Assembly order fixes entity/relation ids: pair edges first so both
    // variants agree on them, then targets, then symmetric interactions,
    // then (Selfloops only) the self edges.
    let mut named: Vec<(String, String, String)> = Vec::new();
    for (a, se, b) in &combo_edges {
        if kept_se.contains(se) {
            named.push((a.clone(), format!("{PSE_PREFIX}{se}"), b.clone()));
        }
    }
    for (drug, gene) in &target_edges {
        named.push((drug.clone(), RELATION_TARGETS.to_string(), gene.clone()));
    }
    for (a, b) in &ppi_edges {
        named.push((a.clone(), RELATION_PPI.to_string(), b.clone()));
        if a != b {
            named.push((b.clone(), RELATION_PPI.to_string(), a.clone()));
        }
    }
    if variant == GraphVariant::Selfloops {
        for (drug, se) in &mono_pairs {
            named.push((drug.clone(), format!("{MONO_PREFIX}{se}"), drug.clone()));
        }
    }

    let (vocabulary, triples) = build_vocabulary(&named)?;
    let train = TripleStore::new(
        triples,
        vocabulary.entity_count(),
        vocabulary.relation_count(),
    )?;

    let mut pse_relations = BTreeSet::new();
    for (i, name) in vocabulary.relation_names().iter().enumerate() {
        if name.starts_with(PSE_PREFIX) {
            pse_relations.insert(RelationId(i as u32));
        }
    }

    // Feature matrix for the NonNaive variant: columns are single-drug side
    // effects in first-appearance order; drugs never seen in the graph
    // cannot receive an edge and are dropped as orphans.
    let features = if variant == GraphVariant::NonNaive {
        let mut column_of: HashMap<&str, u32> = HashMap::new();
        let mut columns = 0u32;
        for (_, se) in &mono_pairs {
            if !column_of.contains_key(se.as_str()) {
                column_of.insert(se, columns);
                columns += 1;
            }
        }
        let mut cells = Vec::new();
        let mut orphans = HashSet::new();
        for (drug, se) in &mono_pairs {
            match vocabulary.entity_id(drug) {
                Some(id) => cells.push((id, column_of[se.as_str()])),
                None => {
                    orphans.insert(drug.clone());
                }
            }
        }
        ledger.set("orphan_drugs", orphans.len() as u64);
        let matrix = FeatureMatrix::from_hot_cells(&cells, columns as usize);
        ledger.set("feature_columns", columns as u64);
        ledger.set("feature_rows", matrix.row_count() as u64);
        ledger.set("feature_hot_cells", matrix.hot_cell_count() as u64);
        Some(matrix)
    } else {
        ledger.set("orphan_drugs", 0);
        None
    };

    // Per-meta-edge totals, counted from the deduplicated store.
    let mut pse_edge_total = 0u64;
    let mut mono_edge_total = 0u64;
    let mut target_edge_total = 0u64;
    let mut ppi_edge_total = 0u64;
    for (i, name) in vocabulary.relation_names().iter().enumerate() {
        let count = train.predicate_count(RelationId(i as u32)) as u64;
        if name.starts_with(PSE_PREFIX) {
            pse_edge_total += count;
        } else if name.starts_with(MONO_PREFIX) {
            mono_edge_total += count;
        } else if name == RELATION_TARGETS {
            target_edge_total += count;
        } else if name == RELATION_PPI {
            ppi_edge_total += count;
        }
    }
    ledger.set("edges_pse", pse_edge_total);
    ledger.set("edges_mono_selfloop", mono_edge_total);
    ledger.set("edges_targets", target_edge_total);
    ledger.set("edges_ppi", ppi_edge_total);
    ledger.set("pse_relations_kept", pse_relations.len() as u64);
    ledger.set("nodes", vocabulary.entity_count() as u64);
    ledger.set("meta_edges", vocabulary.relation_count() as u64);
    ledger.set("edges_total", train.len() as u64);

    let valid = TripleStore::empty(vocabulary.entity_count(), vocabulary.relation_count());
    let holdout = TripleStore::empty(vocabulary.entity_count(), vocabulary.relation_count());
    Ok(DatasetBundle {
        vocabulary,
        train,
        valid,
        holdout,
        pse_relations,
        features,
        ledger,
    })
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum CarveTarget {
    Holdout,
    Valid,
}

/// Moves `round(n * fraction)` edges of each polypharmacy relation from
/// train into the target split, sampled uniformly without replacement.
/// Rounding is half-to-even. Relations that would lose zero edges are kept
/// whole and logged. Selection is keyed on (seed, relation id), so two
/// bundles sharing the same pair edges select the same triples.
fn carve(
    mut bundle: DatasetBundle,
    fraction: f64,
    seed: u64,
    target: CarveTarget,
) -> Result<DatasetBundle, IngestError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(IngestError::BadFraction(fraction));
    }
    match target {
        CarveTarget::Holdout if !bundle.holdout.is_empty() => {
            return Err(IngestError::SplitExists("holdout"))
        }
        CarveTarget::Valid if !bundle.valid.is_empty() => {
            return Err(IngestError::SplitExists("valid"))
        }
        _ => {}
    }
    let domain = match target {
        CarveTarget::Holdout => HOLDOUT_DOMAIN,
        CarveTarget::Valid => VALID_DOMAIN,
    };

    let mut selected: HashSet<usize> = HashSet::new();
    let mut unsplit = 0u64;
    for &rel in &bundle.pse_relations {
        let indices: Vec<usize> = bundle
            .train
            .triples()
            .iter()
            .enumerate()
            .filter(|(_, t)| t.predicate == rel)
            .map(|(i, _)| i)
            .collect();
        let n = indices.len();
        if n == 0 {
            continue;
        }
        let k = (n as f64 * fraction).round_ties_even() as usize;
        if k == 0 {
            unsplit += 1;
            continue;
        }
        let mut rng = ChaCha20Rng::seed_from_u64(splitmix64(seed ^ domain ^ (rel.0 as u64)));
        // Partial Fisher-Yates: the first k slots end up uniformly chosen
        // without replacement.
        let mut pool = indices;
        for i in 0..k {
            let j = rng.random_range(i..n);
            pool.swap(i, j);
        }
        selected.extend(pool.into_iter().take(k));
    }

    let mut kept = Vec::with_capacity(bundle.train.len() - selected.len());
    let mut moved = Vec::with_capacity(selected.len());
    for (i, &t) in bundle.train.triples().iter().enumerate() {
        if selected.contains(&i) {
            moved.push(t);
        } else {
            kept.push(t);
        }
    }
    let entity_count = bundle.train.entity_count();
    let relation_count = bundle.train.relation_count();
    bundle.train = TripleStore::new(kept, entity_count, relation_count)?;
    let moved_store = TripleStore::new(moved, entity_count, relation_count)?;
    match target {
        CarveTarget::Holdout => {
            bundle.ledger.set("holdout_edges", moved_store.len() as u64);
            bundle.ledger.set("holdout_unsplit_relations", unsplit);
            bundle.holdout = moved_store;
        }
        CarveTarget::Valid => {
            bundle.ledger.set("valid_edges", moved_store.len() as u64);
            bundle.ledger.set("valid_unsplit_relations", unsplit);
            bundle.valid = moved_store;
        }
    }
    Ok(bundle)
}

// Domain separators keep holdout and valid selections on distinct streams.
const HOLDOUT_DOMAIN: u64 = 0x686f_6c64_6f75_7400;
const VALID_DOMAIN: u64 = 0x7661_6c69_6400_0000;

/// Populates the holdout split from each polypharmacy relation.
pub fn holdout_split(
    bundle: DatasetBundle,
    fraction: f64,
    seed: u64,
) -> Result<DatasetBundle, IngestError> {
    carve(bundle, fraction, seed, CarveTarget::Holdout)
}

/// Carves a validation split from the remaining training polypharmacy
/// edges; used for early stopping and model selection during training.
pub fn valid_split(
    bundle: DatasetBundle,
    fraction: f64,
    seed: u64,
) -> Result<DatasetBundle, IngestError> {
    carve(bundle, fraction, seed, CarveTarget::Valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Triple;

    fn combo(a: &str, b: &str, se: &str) -> ComboRow {
        ComboRow {
            drug_a: a.into(),
            drug_b: b.into(),
            se_id: se.into(),
            se_name: format!("name-{se}"),
        }
    }

    fn mono(drug: &str, se: &str) -> MonoRow {
        MonoRow {
            drug: drug.into(),
            se_id: se.into(),
            se_name: format!("name-{se}"),
        }
    }

    fn minimal_records() -> RawRecords {
        RawRecords {
            combo: vec![combo("D1", "D2", "S1")],
            mono: vec![mono("D1", "M1")],
            targets: vec![TargetLink {
                drug: "D1".into(),
                gene: "G1".into(),
            }],
            ppi: vec![PpiLink {
                gene_a: "G1".into(),
                gene_b: "G2".into(),
            }],
        }
    }

    #[test]
    fn selfloops_materialises_mono_edge() {
        let bundle = build_graph(&minimal_records(), GraphVariant::Selfloops, 0).unwrap();
        let d1 = bundle.vocabulary.entity_id("D1").unwrap();
        let mono_rel = bundle.vocabulary.relation_id("mono:M1").unwrap();
        assert!(bundle
            .train
            .exists(Triple {
                subject: d1,
                predicate: mono_rel,
                object: d1
            })
            .unwrap());
        assert!(bundle.features.is_none());
        assert_eq!(bundle.ledger.get("edges_mono_selfloop"), Some(1));
        // ppi materialised both ways
        assert_eq!(bundle.ledger.get("edges_ppi"), Some(2));
    }

    #[test]
    fn nonnaive_uses_features_instead() {
        let bundle = build_graph(&minimal_records(), GraphVariant::NonNaive, 0).unwrap();
        assert!(bundle.vocabulary.relation_id("mono:M1").is_none());
        let features = bundle.features.as_ref().unwrap();
        assert_eq!(features.row_count(), 1);
        assert_eq!(features.column_count(), 1);
        assert_eq!(features.hot(0), &[0]);
        assert_eq!(bundle.ledger.get("orphan_drugs"), Some(0));
    }

    #[test]
    fn variants_share_pse_triples() {
        let mut records = minimal_records();
        records.combo.push(combo("D3", "D1", "S1"));
        records.combo.push(combo("D2", "D3", "S2"));
        let a = build_graph(&records, GraphVariant::Selfloops, 0).unwrap();
        let b = build_graph(&records, GraphVariant::NonNaive, 0).unwrap();
        let pse_triples = |bundle: &DatasetBundle| {
            bundle
                .train
                .triples()
                .iter()
                .filter(|t| bundle.pse_relations.contains(&t.predicate))
                .copied()
                .collect::<Vec<_>>()
        };
        assert_eq!(pse_triples(&a), pse_triples(&b));
        // triple-count difference = unique (drug, mono side effect) pairs
        assert_eq!(a.train.len() - b.train.len(), 1);
    }

    #[test]
    fn mono_only_drug_is_orphan_under_nonnaive() {
        let mut records = minimal_records();
        records.mono.push(mono("D9", "M1"));
        let selfloops = build_graph(&records, GraphVariant::Selfloops, 0).unwrap();
        assert!(selfloops.vocabulary.entity_id("D9").is_some());
        let nonnaive = build_graph(&records, GraphVariant::NonNaive, 0).unwrap();
        assert!(nonnaive.vocabulary.entity_id("D9").is_none());
        assert_eq!(nonnaive.ledger.get("orphan_drugs"), Some(1));
    }

    #[test]
    fn min_pse_count_drops_rare_side_effects() {
        let mut records = minimal_records();
        for i in 0..5 {
            records
                .combo
                .push(combo(&format!("A{i}"), &format!("B{i}"), "S2"));
        }
        let bundle = build_graph(&records, GraphVariant::Selfloops, 2).unwrap();
        assert!(bundle.vocabulary.relation_id("pse:S2").is_some());
        assert!(bundle.vocabulary.relation_id("pse:S1").is_none());
        assert_eq!(bundle.ledger.get("pse_relations_dropped"), Some(1));
        assert_eq!(bundle.ledger.get("pse_edges_dropped"), Some(1));
    }

    #[test]
    fn canonical_direction_dedups_reversed_pairs() {
        let mut records = minimal_records();
        records.combo.push(combo("D2", "D1", "S1"));
        let bundle = build_graph(&records, GraphVariant::Selfloops, 0).unwrap();
        assert_eq!(bundle.ledger.get("duplicates_combo"), Some(1));
        assert_eq!(bundle.ledger.get("edges_pse"), Some(1));
    }

    fn pair_records(n_pairs: usize) -> RawRecords {
        let mut records = RawRecords::default();
        for i in 0..n_pairs {
            records
                .combo
                .push(combo(&format!("A{i:03}"), &format!("B{i:03}"), "S1"));
        }
        records
    }

    #[test]
    fn holdout_takes_exact_rounded_tenth() {
        let bundle = build_graph(&pair_records(20), GraphVariant::Selfloops, 0).unwrap();
        let bundle = holdout_split(bundle, 0.1, 7).unwrap();
        assert_eq!(bundle.holdout.len(), 2);
        assert_eq!(bundle.train.len(), 18);
        assert_eq!(bundle.ledger.get("holdout_edges"), Some(2));
    }

    #[test]
    fn tiny_relation_kept_whole() {
        // round_ties_even(5 * 0.1) = round(0.5) = 0
        let bundle = build_graph(&pair_records(5), GraphVariant::Selfloops, 0).unwrap();
        let bundle = holdout_split(bundle, 0.1, 7).unwrap();
        assert_eq!(bundle.holdout.len(), 0);
        assert_eq!(bundle.ledger.get("holdout_unsplit_relations"), Some(1));
    }

    #[test]
    fn holdout_disjoint_and_exhaustive() {
        let bundle = build_graph(&pair_records(40), GraphVariant::Selfloops, 0).unwrap();
        let before: Vec<Triple> = bundle.train.triples().to_vec();
        let bundle = holdout_split(bundle, 0.25, 3).unwrap();
        assert_eq!(bundle.holdout.len(), 10);
        let report = crate::kg::validate_splits(&bundle.train, &bundle.valid, &bundle.holdout);
        assert!(report.pipeline_ok());
        let mut rejoined: Vec<Triple> = bundle
            .train
            .triples()
            .iter()
            .chain(bundle.holdout.triples())
            .copied()
            .collect();
        rejoined.sort();
        let mut original = before;
        original.sort();
        assert_eq!(rejoined, original);
    }

    #[test]
    fn same_seed_selects_same_edges_in_both_variants() {
        let mut records = pair_records(30);
        records.mono.push(mono("A000", "M1"));
        let a = build_graph(&records, GraphVariant::Selfloops, 0).unwrap();
        let b = build_graph(&records, GraphVariant::NonNaive, 0).unwrap();
        let a = holdout_split(a, 0.2, 11).unwrap();
        let b = holdout_split(b, 0.2, 11).unwrap();
        assert_eq!(a.holdout.triples(), b.holdout.triples());
    }

    #[test]
    fn double_split_rejected() {
        let bundle = build_graph(&pair_records(20), GraphVariant::Selfloops, 0).unwrap();
        let bundle = holdout_split(bundle, 0.1, 7).unwrap();
        assert!(matches!(
            holdout_split(bundle, 0.1, 7),
            Err(IngestError::SplitExists("holdout"))
        ));
    }

    #[test]
    fn bad_fraction_rejected() {
        let bundle = build_graph(&pair_records(20), GraphVariant::Selfloops, 0).unwrap();
        assert!(matches!(
            holdout_split(bundle, 1.5, 7),
            Err(IngestError::BadFraction(_))
        ));
    }

    #[test]
    fn valid_split_after_holdout() {
        let bundle = build_graph(&pair_records(40), GraphVariant::Selfloops, 0).unwrap();
        let bundle = holdout_split(bundle, 0.25, 3).unwrap();
        let bundle = valid_split(bundle, 0.1, 3).unwrap();
        assert_eq!(bundle.valid.len(), 3); // round(30 * 0.1)
        let report = crate::kg::validate_splits(&bundle.train, &bundle.valid, &bundle.holdout);
        assert!(report.pipeline_ok());
        assert_eq!(report.valid_holdout_overlap, 0);
    }

    #[test]
    fn drug_entities_cover_pse_incidence() {
        let bundle = build_graph(&minimal_records(), GraphVariant::Selfloops, 0).unwrap();
        let drugs = bundle.drug_entities();
        assert_eq!(drugs.len(), 2);
        assert!(drugs.contains(&bundle.vocabulary.entity_id("D1").unwrap()));
        assert!(drugs.contains(&bundle.vocabulary.entity_id("D2").unwrap()));
    }
}
