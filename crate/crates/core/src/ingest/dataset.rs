//! On-disk dataset directory format.
//!
//! All files are TSV with LF line endings and UTF-8 text:
//!
//! - `entities.tsv`, `relations.tsv` — `<index>\t<name>`, index ascending
//!   from 0.
//! - `train.tsv`, `valid.tsv`, `holdout.tsv` — `<s>\t<p>\t<o>` integer
//!   triples; empty splits are not written.
//! - `pse_relations.tsv` — one polypharmacy relation index per line.
//! - `features.tsv` — sparse `<drug_index>\t<column_index>\t1` rows
//!   (NonNaive variant only).
//! - `ledger.tsv` — `<counter>\t<value>` rows, sorted by counter name.
//!
//! Import followed by export reproduces the directory byte for byte.

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{DatasetBundle, FeatureMatrix, IngestError, Ledger};
use crate::kg::{EntityId, RelationId, Triple, TripleStore, Vocabulary};

const REQUIRED_FILES: [&str; 5] = [
    "entities.tsv",
    "relations.tsv",
    "train.tsv",
    "pse_relations.tsv",
    "ledger.tsv",
];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn corrupt(file: &str, reason: impl Into<String>) -> IngestError {
    IngestError::CorruptDataset {
        file: file.into(),
        reason: reason.into(),
    }
}

fn write_lines<I: IntoIterator<Item = String>>(path: &Path, lines: I) -> Result<(), IngestError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for line in lines {
        w.write_all(line.as_bytes()).map_err(io_err(path))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn triple_lines(store: &TripleStore) -> impl Iterator<Item = String> + '_ {
    store
        .triples()
        .iter()
        .map(|t| format!("{}\t{}\t{}", t.subject.0, t.predicate.0, t.object.0))
}

/// Writes a bundle into `dir`, creating it if needed.
pub fn export_dataset(bundle: &DatasetBundle, dir: &Path) -> Result<(), IngestError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_lines(
        &dir.join("entities.tsv"),
        bundle
            .vocabulary
            .entity_names()
            .iter()
            .enumerate()
            .map(|(i, name)| format!("{i}\t{name}")),
    )?;
    write_lines(
        &dir.join("relations.tsv"),
        bundle
            .vocabulary
            .relation_names()
            .iter()
            .enumerate()
            .map(|(i, name)| format!("{i}\t{name}")),
    )?;
    write_lines(&dir.join("train.tsv"), triple_lines(&bundle.train))?;
    if !bundle.valid.is_empty() {
        write_lines(&dir.join("valid.tsv"), triple_lines(&bundle.valid))?;
    }
    if !bundle.holdout.is_empty() {
        write_lines(&dir.join("holdout.tsv"), triple_lines(&bundle.holdout))?;
    }
    write_lines(
        &dir.join("pse_relations.tsv"),
        bundle.pse_relations.iter().map(|r| r.0.to_string()),
    )?;
    if let Some(features) = &bundle.features {
        let mut lines = Vec::with_capacity(features.hot_cell_count());
        for (i, &drug) in features.drug_ids().iter().enumerate() {
            for &col in features.hot(i) {
                lines.push(format!("{}\t{col}\t1", drug.0));
            }
        }
        write_lines(&dir.join("features.tsv"), lines.into_iter())?;
    }
    write_lines(
        &dir.join("ledger.tsv"),
        bundle.ledger.iter().map(|(k, v)| format!("{k}\t{v}")),
    )?;
    Ok(())
}

fn read_to_string(dir: &Path, file: &str) -> Result<String, IngestError> {
    let path = dir.join(file);
    if !path.is_file() {
        return Err(corrupt(file, "missing"));
    }
    fs::read_to_string(&path).map_err(io_err(&path))
}

fn parse_name_table(text: &str, file: &str) -> Result<Vec<String>, IngestError> {
    let mut names = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let (idx, name) = line
            .split_once('\t')
            .ok_or_else(|| corrupt(file, format!("line {}: expected two fields", i + 1)))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| corrupt(file, format!("line {}: bad index", i + 1)))?;
        if idx != i {
            return Err(corrupt(
                file,
                format!("line {}: index {idx} out of order", i + 1),
            ));
        }
        if name.is_empty() {
            return Err(corrupt(file, format!("line {}: empty name", i + 1)));
        }
        names.push(name.to_string());
    }
    Ok(names)
}

fn parse_triples(
    text: &str,
    file: &str,
    entity_count: usize,
    relation_count: usize,
) -> Result<TripleStore, IngestError> {
    let mut triples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split('\t');
        let mut next = |what: &str| {
            parts
                .next()
                .and_then(|p| p.parse::<u32>().ok())
                .ok_or_else(|| corrupt(file, format!("line {}: bad {what}", i + 1)))
        };
        let s = next("subject")?;
        let p = next("predicate")?;
        let o = next("object")?;
        if parts.next().is_some() {
            return Err(corrupt(file, format!("line {}: trailing fields", i + 1)));
        }
        triples.push(Triple::new(s, p, o));
    }
    TripleStore::new(triples, entity_count, relation_count)
        .map_err(|e| corrupt(file, e.to_string()))
}

/// Reads a dataset directory written by [`export_dataset`].
pub fn import_dataset(dir: &Path) -> Result<DatasetBundle, IngestError> {
    for file in REQUIRED_FILES {
        if !dir.join(file).is_file() {
            return Err(corrupt(file, "missing"));
        }
    }
    let entity_names = parse_name_table(&read_to_string(dir, "entities.tsv")?, "entities.tsv")?;
    let relation_names = parse_name_table(&read_to_string(dir, "relations.tsv")?, "relations.tsv")?;
    let vocabulary = Vocabulary::from_names(entity_names, relation_names)
        .map_err(|e| corrupt("entities.tsv", e.to_string()))?;
    let (ne, nr) = (vocabulary.entity_count(), vocabulary.relation_count());

    let train = parse_triples(&read_to_string(dir, "train.tsv")?, "train.tsv", ne, nr)?;
    let valid = if dir.join("valid.tsv").is_file() {
        parse_triples(&read_to_string(dir, "valid.tsv")?, "valid.tsv", ne, nr)?
    } else {
        TripleStore::empty(ne, nr)
    };
    let holdout = if dir.join("holdout.tsv").is_file() {
        parse_triples(&read_to_string(dir, "holdout.tsv")?, "holdout.tsv", ne, nr)?
    } else {
        TripleStore::empty(ne, nr)
    };

    let mut pse_relations = BTreeSet::new();
    for (i, line) in read_to_string(dir, "pse_relations.tsv")?
        .lines()
        .enumerate()
    {
        let idx: u32 = line
            .parse()
            .map_err(|_| corrupt("pse_relations.tsv", format!("line {}: bad index", i + 1)))?;
        if idx as usize >= nr {
            return Err(corrupt(
                "pse_relations.tsv",
                format!("line {}: relation {idx} out of range", i + 1),
            ));
        }
        pse_relations.insert(RelationId(idx));
    }

    let mut ledger = Ledger::default();
    for (i, line) in read_to_string(dir, "ledger.tsv")?.lines().enumerate() {
        let (name, value) = line
            .split_once('\t')
            .ok_or_else(|| corrupt("ledger.tsv", format!("line {}: expected two fields", i + 1)))?;
        let value: u64 = value
            .parse()
            .map_err(|_| corrupt("ledger.tsv", format!("line {}: bad value", i + 1)))?;
        ledger.set(name, value);
    }

    let features = if dir.join("features.tsv").is_file() {
        let column_count = ledger
            .get("feature_columns")
            .ok_or_else(|| corrupt("ledger.tsv", "feature_columns counter missing"))?
            as usize;
        let mut cells = Vec::new();
        for (i, line) in read_to_string(dir, "features.tsv")?.lines().enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 || fields[2] != "1" {
                return Err(corrupt(
                    "features.tsv",
                    format!("line {}: expected `<drug>\\t<column>\\t1`", i + 1),
                ));
            }
            let drug: u32 = fields[0]
                .parse()
                .map_err(|_| corrupt("features.tsv", format!("line {}: bad drug index", i + 1)))?;
            let col: u32 = fields[1]
                .parse()
                .map_err(|_| corrupt("features.tsv", format!("line {}: bad column", i + 1)))?;
            if drug as usize >= ne {
                return Err(corrupt(
                    "features.tsv",
                    format!("line {}: drug {drug} out of range", i + 1),
                ));
            }
            if col as usize >= column_count {
                return Err(corrupt(
                    "features.tsv",
                    format!("line {}: column {col} out of range", i + 1),
                ));
            }
            cells.push((EntityId(drug), col));
        }
        Some(FeatureMatrix::from_hot_cells(&cells, column_count))
    } else {
        None
    };

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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_graph, holdout_split, GraphVariant, RawRecords};
    use crate::ingest::{ComboRow, MonoRow, PpiLink, TargetLink};

    fn records() -> RawRecords {
        let mut combo = Vec::new();
        for i in 0..12 {
            combo.push(ComboRow {
                drug_a: format!("A{i:02}"),
                drug_b: format!("B{i:02}"),
                se_id: "S1".into(),
                se_name: "nausea".into(),
            });
        }
        RawRecords {
            combo,
            mono: vec![MonoRow {
                drug: "A00".into(),
                se_id: "M1".into(),
                se_name: "rash".into(),
            }],
            targets: vec![TargetLink {
                drug: "A00".into(),
                gene: "G1".into(),
            }],
            ppi: vec![PpiLink {
                gene_a: "G1".into(),
                gene_b: "G2".into(),
            }],
        }
    }

    fn dir(tag: &str) -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!("kgemb_ds_{tag}_{}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        d
    }

    fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        files
    }

    #[test]
    fn minimal_bundle_writes_five_files() {
        let records = RawRecords {
            combo: vec![ComboRow {
                drug_a: "X".into(),
                drug_b: "Y".into(),
                se_id: "S".into(),
                se_name: "s".into(),
            }],
            ..RawRecords::default()
        };
        let bundle = build_graph(&records, GraphVariant::Selfloops, 0).unwrap();
        let d = dir("minimal");
        export_dataset(&bundle, &d).unwrap();
        let files = read_all(&d);
        let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(
            names,
            [
                "entities.tsv",
                "ledger.tsv",
                "pse_relations.tsv",
                "relations.tsv",
                "train.tsv"
            ]
        );
        fs::remove_dir_all(&d).unwrap();
    }

    #[test]
    fn round_trip_is_byte_identical() {
        for variant in [GraphVariant::Selfloops, GraphVariant::NonNaive] {
            let bundle = build_graph(&records(), variant, 0).unwrap();
            let bundle = holdout_split(bundle, 0.25, 9).unwrap();
            let d1 = dir(&format!("rt1_{}", variant.as_str()));
            let d2 = dir(&format!("rt2_{}", variant.as_str()));
            export_dataset(&bundle, &d1).unwrap();
            let back = import_dataset(&d1).unwrap();
            export_dataset(&back, &d2).unwrap();
            assert_eq!(read_all(&d1), read_all(&d2), "{variant:?}");
            if variant == GraphVariant::NonNaive {
                assert!(d1.join("features.tsv").is_file());
            }
            fs::remove_dir_all(&d1).unwrap();
            fs::remove_dir_all(&d2).unwrap();
        }
    }

    #[test]
    fn out_of_range_id_detected() {
        let bundle = build_graph(&records(), GraphVariant::Selfloops, 0).unwrap();
        let d = dir("corrupt");
        export_dataset(&bundle, &d).unwrap();
        let n = bundle.vocabulary.entity_count();
        fs::write(d.join("holdout.tsv"), format!("{n}\t0\t0\n")).unwrap();
        let err = import_dataset(&d).unwrap_err();
        assert!(matches!(err, IngestError::CorruptDataset { file, .. } if file == "holdout.tsv"));
        fs::remove_dir_all(&d).unwrap();
    }

    #[test]
    fn missing_required_file_detected() {
        let bundle = build_graph(&records(), GraphVariant::Selfloops, 0).unwrap();
        let d = dir("missing");
        export_dataset(&bundle, &d).unwrap();
        fs::remove_file(d.join("pse_relations.tsv")).unwrap();
        let err = import_dataset(&d).unwrap_err();
        assert!(
            matches!(err, IngestError::CorruptDataset { file, .. } if file == "pse_relations.tsv")
        );
        fs::remove_dir_all(&d).unwrap();
    }
}
