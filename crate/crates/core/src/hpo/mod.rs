//! Two-phase hyperparameter search: a Sobol space-filling design followed
//! by Gaussian-process Bayesian optimisation with expected improvement.
//!
//! Every trial is appended to a tab-separated journal and fsynced, so a
//! killed search resumes from the journal without re-running anything.
//! With a deterministic trial runner the journal is byte-identical across
//! runs, regardless of the worker count.

pub mod gp;
pub mod sobol;
pub mod space;

pub use gp::{expected_improvement, fit_surrogate, suggest_next, GpState};
pub use sobol::{sobol_points, MAX_DIMENSION};
pub use space::{Conditional, Domain, Scale, SearchSpace, TrialConfig};

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::train::ConfigError;

#[derive(Debug, Error)]
pub enum HpoError {
    #[error("unsupported Sobol dimension {0} (table covers 1..=64)")]
    UnsupportedDimension(usize),
    #[error("surrogate needs at least 2 completed trials, have {0}")]
    InsufficientData(usize),
    #[error("search space: {0}")]
    Space(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("journal: {0}")]
    Journal(String),
    #[error("hpo io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrialStatus {
    Ok,
    Failed,
}

/// One finished trial.
#[derive(Clone, Debug)]
pub struct TrialRecord {
    pub index: usize,
    /// Unit-cube point (for journaled trials: the re-encoding of the
    /// assignments).
    pub point: Vec<f64>,
    pub config: TrialConfig,
    pub status: TrialStatus,
    /// Validation MRR; present iff the trial succeeded.
    pub outcome: Option<f64>,
    pub wall_seconds: f64,
}

/// What a trial runner reports back.
#[derive(Clone, Debug)]
pub struct TrialResult {
    pub outcome: Result<f64, String>,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct SearchBudget {
    pub n_sobol: usize,
    pub n_bayes: usize,
}

impl SearchBudget {
    pub fn total(&self) -> usize {
        self.n_sobol + self.n_bayes
    }
}

#[derive(Debug)]
pub struct SearchOutcome {
    pub best: Option<TrialRecord>,
    pub records: Vec<TrialRecord>,
}

fn journal_line(record: &TrialRecord) -> String {
    let status = match record.status {
        TrialStatus::Ok => "ok",
        TrialStatus::Failed => "failed",
    };
    let outcome = record.outcome.map(|v| v.to_string()).unwrap_or_default();
    let mut line = format!(
        "{}\t{}\t{}\t{}",
        record.index, status, outcome, record.wall_seconds
    );
    for (k, v) in &record.config.assignments {
        line.push('\t');
        line.push_str(k);
        line.push('=');
        line.push_str(v);
    }
    line
}

/// Reads a journal back into trial records. Points are re-encoded from the
/// stored assignments.
pub fn read_journal(path: &Path, space: &SearchSpace) -> Result<Vec<TrialRecord>, HpoError> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let err = |what: &str| HpoError::Journal(format!("line {}: bad {what}", lineno + 1));
        let index: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| err("index"))?;
        let status = match fields.next() {
            Some("ok") => TrialStatus::Ok,
            Some("failed") => TrialStatus::Failed,
            _ => return Err(err("status")),
        };
        let outcome_field = fields.next().ok_or_else(|| err("outcome"))?;
        let outcome = if outcome_field.is_empty() {
            None
        } else {
            Some(outcome_field.parse().map_err(|_| err("outcome"))?)
        };
        let wall_seconds: f64 = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| err("seconds"))?;
        let mut assignments = Vec::new();
        for pair in fields {
            let (k, v) = pair.split_once('=').ok_or_else(|| err("assignment"))?;
            assignments.push((k.to_string(), v.to_string()));
        }
        if index != records.len() {
            return Err(HpoError::Journal(format!(
                "line {}: trial index {index} out of order",
                lineno + 1
            )));
        }
        let mut train = crate::train::TrainConfig::default();
        train.apply_pairs(assignments.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        let point = space.encode(&assignments);
        records.push(TrialRecord {
            index,
            point,
            config: TrialConfig { assignments, train },
            status,
            outcome,
            wall_seconds,
        });
    }
    Ok(records)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct Journal {
    writer: Option<BufWriter<File>>,
}

impl Journal {
    fn open(path: Option<&Path>) -> Result<Self, HpoError> {
        let writer = match path {
            Some(p) => {
                let file = OpenOptions::new().create(true).append(true).open(p)?;
                Some(BufWriter::new(file))
            }
            None => None,
        };
        Ok(Journal { writer })
    }

    fn append(&mut self, record: &TrialRecord) -> Result<(), HpoError> {
        if let Some(w) = &mut self.writer {
            writeln!(w, "{}", journal_line(record))?;
            w.flush()?;
            w.get_ref().sync_data()?;
        }
        Ok(())
    }
}

fn run_one(
    index: usize,
    point: Vec<f64>,
    space: &SearchSpace,
    runner: &(dyn Fn(usize, &TrialConfig) -> TrialResult + Sync),
) -> Result<TrialRecord, HpoError> {
    let config = space.decode_config(&point)?;
    let result = runner(index, &config);
    let (status, outcome) = match result.outcome {
        Ok(v) => (TrialStatus::Ok, Some(v)),
        Err(_) => (TrialStatus::Failed, None),
    };
    Ok(TrialRecord {
        index,
        point,
        config,
        status,
        outcome,
        wall_seconds: result.seconds,
    })
}

/// Runs the two-phase search.
///
/// Phase one evaluates Sobol design points (in parallel up to `workers`,
/// journaled in index order); phase two refits the surrogate after every
/// trial and evaluates the expected-improvement suggestion. Failed trials
/// are recorded and the search continues. If a journal path is given and
/// the file exists, completed trials are loaded and skipped.
pub fn run_search(
    space: &SearchSpace,
    budget: SearchBudget,
    seed: u64,
    journal_path: Option<&Path>,
    workers: usize,
    runner: &(dyn Fn(usize, &TrialConfig) -> TrialResult + Sync),
) -> Result<SearchOutcome, HpoError> {
    if budget.total() == 0 {
        return Err(HpoError::Space(
            "budget must cover at least one trial".into(),
        ));
    }
    let workers = workers.max(1);
    let mut records: Vec<TrialRecord> = match journal_path {
        Some(p) if p.exists() => read_journal(p, space)?,
        _ => Vec::new(),
    };
    if records.len() > budget.total() {
        return Err(HpoError::Journal(format!(
            "journal has {} trials but the budget is {}",
            records.len(),
            budget.total()
        )));
    }
    let mut journal = Journal::open(journal_path)?;

    // Phase 1: Sobol design.
    let design = sobol_points(space.dimension(), budget.n_sobol)?;
    let mut next_index = records.len();
    while next_index < budget.n_sobol {
        let chunk_end = (next_index + workers).min(budget.n_sobol);
        let chunk: Vec<usize> = (next_index..chunk_end).collect();
        let mut results: Vec<Option<TrialRecord>> = Vec::new();
        results.resize_with(chunk.len(), || None);
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for (slot, &index) in chunk.iter().enumerate() {
                let point = design[index].clone();
                handles.push((
                    slot,
                    scope.spawn(move || run_one(index, point, space, runner)),
                ));
            }
            for (slot, handle) in handles {
                results[slot] = Some(handle.join().expect("trial thread panicked")?);
            }
            Ok::<(), HpoError>(())
        })?;
        for result in results.into_iter().flatten() {
            journal.append(&result)?;
            records.push(result);
        }
        next_index = chunk_end;
    }

    // Phase 2: fit, suggest, run; strictly sequential.
    while records.len() < budget.total() {
        let index = records.len();
        let point = match fit_surrogate(&records, space) {
            Ok(gp) => {
                let best = records
                    .iter()
                    .filter_map(|r| r.outcome)
                    .fold(f64::NEG_INFINITY, f64::max);
                suggest_next(&gp, space, best, splitmix64(seed ^ index as u64))?
            }
            // Not enough successful trials to fit a surrogate yet: keep
            // walking the Sobol sequence.
            Err(HpoError::InsufficientData(_)) => {
                sobol_points(space.dimension(), index + 1)?.swap_remove(index)
            }
            Err(other) => return Err(other),
        };
        let record = run_one(index, point, space, runner)?;
        journal.append(&record)?;
        records.push(record);
    }

    let best = records
        .iter()
        .filter(|r| r.outcome.is_some())
        .max_by(|a, b| {
            a.outcome
                .unwrap()
                .partial_cmp(&b.outcome.unwrap())
                .expect("finite outcomes")
        })
        .cloned();
    Ok(SearchOutcome { best, records })
}
