//! Synthetic datasets: a desk-scale community graph for tests and demos,
//! and the tiny source tables shipped with the repository.

use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::ingest::{
    build_graph, ComboRow, DatasetBundle, GraphVariant, IngestError, MonoRow, PpiLink, RawRecords,
    SourcePaths, TargetLink,
};

/// Number of entities in the community fixture.
pub const COMMUNITY_ENTITIES: usize = 200;
pub const COMMUNITY_COUNT: usize = 4;
pub const COMMUNITY_RELATIONS: usize = 10;
/// Probability that a within-community ordered pair carries an edge.
pub const COMMUNITY_DENSITY: f64 = 0.8;

/// Synthetic drug-pair records: 200 drugs in 4 communities of 50, 10 side
/// effects, edges dense within communities and absent across them.
pub fn community_records(seed: u64) -> RawRecords {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let per_community = COMMUNITY_ENTITIES / COMMUNITY_COUNT;
    let mut combo = Vec::new();
    for relation in 0..COMMUNITY_RELATIONS {
        for community in 0..COMMUNITY_COUNT {
            let base = community * per_community;
            for a in 0..per_community {
                for b in (a + 1)..per_community {
                    if rng.random::<f64>() < COMMUNITY_DENSITY {
                        combo.push(ComboRow {
                            drug_a: format!("d{:03}", base + a),
                            drug_b: format!("d{:03}", base + b),
                            se_id: format!("se{relation}"),
                            se_name: format!("effect-{relation}"),
                        });
                    }
                }
            }
        }
    }
    RawRecords {
        combo,
        ..RawRecords::default()
    }
}

/// Community fixture as a built bundle (holdout still empty).
pub fn community_bundle(seed: u64) -> Result<DatasetBundle, IngestError> {
    build_graph(&community_records(seed), GraphVariant::Selfloops, 0)
}

/// Writes the toy source tables (12 drugs, 18 genes, 3 pair side effects,
/// 2 single-drug side effects) and returns their paths. Deterministic
/// content, no randomness.
pub fn write_toy_tables(dir: &Path) -> io::Result<SourcePaths> {
    std::fs::create_dir_all(dir)?;
    let records = toy_records();
    let combo = dir.join("combo.csv");
    let mono = dir.join("mono.csv");
    let targets = dir.join("targets.csv");
    let ppi = dir.join("ppi.csv");

    let mut text = String::from("drug1,drug2,se_id,se_name\n");
    for row in &records.combo {
        text.push_str(&format!(
            "{},{},{},{}\n",
            row.drug_a, row.drug_b, row.se_id, row.se_name
        ));
    }
    std::fs::write(&combo, text)?;

    let mut text = String::from("drug,se_id,se_name\n");
    for row in &records.mono {
        text.push_str(&format!("{},{},{}\n", row.drug, row.se_id, row.se_name));
    }
    std::fs::write(&mono, text)?;

    let mut text = String::from("drug,gene\n");
    for row in &records.targets {
        text.push_str(&format!("{},{}\n", row.drug, row.gene));
    }
    std::fs::write(&targets, text)?;

    let mut text = String::from("gene1,gene2\n");
    for row in &records.ppi {
        text.push_str(&format!("{},{}\n", row.gene_a, row.gene_b));
    }
    std::fs::write(&ppi, text)?;

    Ok(SourcePaths {
        combo,
        mono,
        targets,
        ppi,
    })
}

/// The toy records behind [`write_toy_tables`].
pub fn toy_records() -> RawRecords {
    let drug = |i: usize| format!("D{:02}", i + 1);
    let gene = |i: usize| format!("G{:02}", i + 1);
    let se_names = ["nausea", "headache", "dizziness"];

    let mut combo = Vec::new();
    // each side effect links a deterministic band of drug pairs
    for (s, name) in se_names.iter().enumerate() {
        for a in 0..12usize {
            for b in (a + 1)..12 {
                if (a * 5 + b * 3 + s * 7) % 4 == 0 {
                    combo.push(ComboRow {
                        drug_a: drug(a),
                        drug_b: drug(b),
                        se_id: format!("C{:03}", s + 1),
                        se_name: name.to_string(),
                    });
                }
            }
        }
    }
    let mut mono = Vec::new();
    for (s, name) in ["rash", "fatigue"].iter().enumerate() {
        for a in 0..12usize {
            if (a + s) % 3 == 0 {
                mono.push(MonoRow {
                    drug: drug(a),
                    se_id: format!("M{:03}", s + 1),
                    se_name: name.to_string(),
                });
            }
        }
    }
    let mut targets = Vec::new();
    for a in 0..12usize {
        targets.push(TargetLink {
            drug: drug(a),
            gene: gene(a % 18),
        });
        targets.push(TargetLink {
            drug: drug(a),
            gene: gene((a * 7 + 5) % 18),
        });
    }
    let mut ppi = Vec::new();
    for g in 0..18usize {
        ppi.push(PpiLink {
            gene_a: gene(g),
            gene_b: gene((g + 1) % 18),
        });
        if g % 3 == 0 {
            ppi.push(PpiLink {
                gene_a: gene(g),
                gene_b: gene((g + 7) % 18),
            });
        }
    }
    RawRecords {
        combo,
        mono,
        targets,
        ppi,
    }
}

/// Path of the toy dataset shipped in the repository, resolved relative to
/// the crate.
pub fn shipped_toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy")
}
