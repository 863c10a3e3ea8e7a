//! The `kgemb` command-line surface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical fault.
//! All randomness flows from the explicit `--seed` flags; identical inputs
//! and seeds give byte-identical primary output files.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::checkpoint::{self, Container};
use crate::eval::{self, EvalError};
use crate::hpo::{self, HpoError, SearchBudget, SearchSpace, TrialConfig, TrialResult};
use crate::ingest::{self, DatasetBundle, GraphVariant, IngestError};
use crate::kg::EntityId;
use crate::models::{ModelError, ModelParams};
use crate::train::{
    self, InitKind, Precision, TrainConfig, TrainData, TrainError, TrainLog, TrainOptions,
};

#[derive(Parser)]
#[command(
    name = "kgemb",
    about = "Knowledge-graph embeddings for polypharmacy side-effect prediction",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a dataset directory from the four source tables
    Ingest {
        /// Drug-pair side-effect table (drug1,drug2,se_id,se_name)
        #[arg(long)]
        combo: PathBuf,
        /// Single-drug side-effect table (drug,se_id,se_name)
        #[arg(long)]
        mono: PathBuf,
        /// Drug-target table (drug,gene)
        #[arg(long)]
        targets: PathBuf,
        /// Protein-protein interaction table (gene1,gene2)
        #[arg(long)]
        ppi: PathBuf,
        /// Graph construction: selfloops | nonnaive
        #[arg(long)]
        variant: String,
        /// Output dataset directory
        #[arg(long)]
        out: PathBuf,
        /// Drop pair side effects with fewer unique drug pairs than this
        #[arg(long, default_value_t = ingest::DEFAULT_MIN_PSE_COUNT)]
        min_pse: usize,
    },
    /// Move a fraction of each pair side effect into the holdout split
    Split {
        /// Dataset directory (modified in place)
        #[arg(long)]
        dataset: PathBuf,
        /// Holdout fraction per relation
        #[arg(long, default_value_t = 0.1)]
        fraction: f64,
        /// Validation fraction carved from the remaining training edges
        #[arg(long, default_value_t = 0.0)]
        valid_fraction: f64,
        /// Split selection seed
        #[arg(long)]
        seed: u64,
    },
    /// Train a model on a dataset
    Train {
        /// Dataset directory
        #[arg(long)]
        dataset: PathBuf,
        /// Training configuration file (key = value lines)
        #[arg(long)]
        config: PathBuf,
        /// Output directory for checkpoints and the training log
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Write a checkpoint after every epoch
        #[arg(long)]
        save_every_epoch: bool,
        /// Override the config seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Assess a checkpoint on the holdout split
    Eval {
        /// Dataset directory
        #[arg(long)]
        dataset: PathBuf,
        /// Checkpoint file
        #[arg(long)]
        checkpoint: PathBuf,
        /// Negative-sampling and tie-breaking seed
        #[arg(long)]
        seed: u64,
        /// Report CSV path (summary lands next to it)
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-phase hyperparameter search (Sobol design, then Bayesian
    /// optimisation)
    Hpo {
        /// Dataset directory (needs a validation split)
        #[arg(long)]
        dataset: PathBuf,
        /// Search-space file; built-in default space when omitted
        #[arg(long)]
        space: Option<PathBuf>,
        /// Total trial budget
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Trials in the Sobol phase (default: half the budget)
        #[arg(long)]
        sobol: Option<usize>,
        /// Search seed
        #[arg(long)]
        seed: u64,
        /// Append-only trial journal (resumed when present)
        #[arg(long)]
        journal: PathBuf,
        /// Parallel trial workers in the Sobol phase
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Assess every per-epoch checkpoint with shared negatives
    Curve {
        /// Directory holding epoch_%05d.ckpt files and train_log.csv
        #[arg(long)]
        checkpoints: PathBuf,
        /// Dataset directory
        #[arg(long)]
        dataset: PathBuf,
        /// Negative-sampling seed (shared across epochs)
        #[arg(long)]
        seed: u64,
        /// Output CSV (default: curve.csv inside the checkpoint directory)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarise an HPO journal (and optionally an eval report)
    Report {
        /// Trial journal to summarise
        #[arg(long)]
        journal: PathBuf,
        /// Space file the journal was produced with (default space
        /// otherwise)
        #[arg(long)]
        space: Option<PathBuf>,
        /// Eval report CSV; prints its medians as a summary table
        #[arg(long)]
        eval: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::BadFraction(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match &e {
            TrainError::NumericalFault(_) => CliError::Numerical(e.to_string()),
            TrainError::Model(ModelError::NumericalFault(_)) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match &e {
            EvalError::Model(ModelError::NumericalFault(_)) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<HpoError> for CliError {
    fn from(e: HpoError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<checkpoint::CheckpointError> for CliError {
    fn from(e: checkpoint::CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn data_err(e: impl fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

/// Parses argv and runs the selected subcommand, returning the process
/// exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest {
            combo,
            mono,
            targets,
            ppi,
            variant,
            out,
            min_pse,
        } => run_ingest(&combo, &mono, &targets, &ppi, &variant, &out, min_pse),
        Command::Split {
            dataset,
            fraction,
            valid_fraction,
            seed,
        } => run_split(&dataset, fraction, valid_fraction, seed),
        Command::Train {
            dataset,
            config,
            out,
            save_every_epoch,
            seed,
        } => run_train(&dataset, &config, &out, save_every_epoch, seed),
        Command::Eval {
            dataset,
            checkpoint,
            seed,
            out,
        } => run_eval(&dataset, &checkpoint, seed, &out),
        Command::Hpo {
            dataset,
            space,
            trials,
            sobol,
            seed,
            journal,
            workers,
        } => run_hpo(
            &dataset,
            space.as_deref(),
            trials,
            sobol,
            seed,
            &journal,
            workers,
        ),
        Command::Curve {
            checkpoints,
            dataset,
            seed,
            out,
        } => run_curve(&checkpoints, &dataset, seed, out.as_deref()),
        Command::Report {
            journal,
            space,
            eval,
        } => run_report(&journal, space.as_deref(), eval.as_deref()),
    }
}

fn run_ingest(
    combo: &Path,
    mono: &Path,
    targets: &Path,
    ppi: &Path,
    variant: &str,
    out: &Path,
    min_pse: usize,
) -> Result<(), CliError> {
    let variant = GraphVariant::parse(variant)
        .ok_or_else(|| CliError::Usage(format!("unknown variant {variant:?}")))?;
    let paths = ingest::SourcePaths {
        combo: combo.to_path_buf(),
        mono: mono.to_path_buf(),
        targets: targets.to_path_buf(),
        ppi: ppi.to_path_buf(),
    };
    let records = ingest::parse_source_tables(&paths)?;
    let bundle = ingest::build_graph(&records, variant, min_pse)?;
    ingest::export_dataset(&bundle, out)?;
    println!(
        "ingested {} ({}): {} entities, {} relations, {} edges -> {}",
        variant.as_str(),
        if bundle.features.is_some() {
            "with features"
        } else {
            "self-loop edges"
        },
        bundle.vocabulary.entity_count(),
        bundle.vocabulary.relation_count(),
        bundle.train.len(),
        out.display()
    );
    Ok(())
}

fn run_split(
    dataset: &Path,
    fraction: f64,
    valid_fraction: f64,
    seed: u64,
) -> Result<(), CliError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CliError::Usage(format!(
            "--fraction {fraction} outside (0, 1)"
        )));
    }
    if !(0.0..1.0).contains(&valid_fraction) {
        return Err(CliError::Usage(format!(
            "--valid-fraction {valid_fraction} outside [0, 1)"
        )));
    }
    let bundle = ingest::import_dataset(dataset)?;
    let mut bundle = ingest::holdout_split(bundle, fraction, seed)?;
    if valid_fraction > 0.0 {
        bundle = ingest::valid_split(bundle, valid_fraction, seed)?;
    }
    ingest::export_dataset(&bundle, dataset)?;
    println!(
        "split: {} holdout, {} valid, {} train edges",
        bundle.holdout.len(),
        bundle.valid.len(),
        bundle.train.len()
    );
    Ok(())
}

fn feature_rows_for(
    bundle: &DatasetBundle,
    config: &TrainConfig,
) -> Result<Option<HashMap<EntityId, Vec<f64>>>, CliError> {
    if config.init != InitKind::Features {
        return Ok(None);
    }
    let features = bundle.features.as_ref().ok_or_else(|| {
        CliError::Data("train.init = features needs a dataset built with feature vectors".into())
    })?;
    let reduction = ingest::reduce_features(features, config.dim).map_err(data_err)?;
    Ok(Some(reduction.rows_by_entity()))
}

fn run_train(
    dataset: &Path,
    config_path: &Path,
    out: &Path,
    save_every_epoch: bool,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", config_path.display())))?;
    let mut config = TrainConfig::parse_str(&text).map_err(data_err)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let bundle = ingest::import_dataset(dataset)?;
    let feature_rows = feature_rows_for(&bundle, &config)?;
    let data = TrainData {
        train: &bundle.train,
        valid: &bundle.valid,
        n_entities: bundle.vocabulary.entity_count(),
        n_relations: bundle.vocabulary.relation_count(),
        feature_rows,
    };
    let options = TrainOptions {
        out_dir: Some(out.to_path_buf()),
        save_every_epoch,
    };
    let log = match config.precision {
        Precision::F32 => train::run_training::<f32>(&config, &data, &options)?.1,
        Precision::F64 => train::run_training::<f64>(&config, &data, &options)?.1,
    };
    let last = log.epochs.last().expect("at least one epoch");
    println!(
        "trained {} epochs (stop: {}), final loss {:.6} -> {}",
        last.epoch,
        if log.stop_reason.is_empty() {
            "completed"
        } else {
            &log.stop_reason
        },
        last.loss,
        out.display()
    );
    Ok(())
}

fn load_checkpoint_model(path: &Path) -> Result<ModelParams<f64>, CliError> {
    let container = Container::read(path)?;
    Ok(checkpoint::load_model_f64(&container)?)
}

fn run_eval(dataset: &Path, ckpt: &Path, seed: u64, out: &Path) -> Result<(), CliError> {
    let bundle = ingest::import_dataset(dataset)?;
    let params = load_checkpoint_model(ckpt)?;
    let report = eval::assess(&params, &bundle, seed)?;
    std::fs::write(out, report.to_csv()).map_err(data_err)?;
    let summary_path = out.with_extension("summary.csv");
    std::fs::write(&summary_path, report.summary_csv()).map_err(data_err)?;
    println!(
        "assessed {} relations: median auroc {:.6}, auprc {:.6}, ap50 {:.6}; mrr {:.6} -> {}",
        report.rows.len(),
        report.median_auroc,
        report.median_auprc,
        report.median_ap50,
        report.ranking.mrr,
        out.display()
    );
    Ok(())
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn run_hpo(
    dataset: &Path,
    space_path: Option<&Path>,
    trials: usize,
    sobol: Option<usize>,
    seed: u64,
    journal: &Path,
    workers: usize,
) -> Result<(), CliError> {
    if trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let n_sobol = sobol.unwrap_or(trials / 2).min(trials);
    let budget = SearchBudget {
        n_sobol,
        n_bayes: trials - n_sobol,
    };
    let space = match space_path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", p.display())))?;
            SearchSpace::parse_str(&text)?
        }
        None => SearchSpace::default_space(),
    };
    let bundle = ingest::import_dataset(dataset)?;
    if bundle.valid.is_empty() {
        return Err(CliError::Data(
            "hpo needs a validation split; run `split` with --valid-fraction".into(),
        ));
    }

    let runner = |index: usize, trial: &TrialConfig| -> TrialResult {
        let started = Instant::now();
        let mut config = trial.train.clone();
        config.seed = splitmix64(seed ^ (index as u64));
        let outcome = (|| -> Result<f64, CliError> {
            let feature_rows = feature_rows_for(&bundle, &config)?;
            let data = TrainData {
                train: &bundle.train,
                valid: &bundle.valid,
                n_entities: bundle.vocabulary.entity_count(),
                n_relations: bundle.vocabulary.relation_count(),
                feature_rows,
            };
            let options = TrainOptions::default();
            let log = match config.precision {
                Precision::F32 => train::run_training::<f32>(&config, &data, &options)?.1,
                Precision::F64 => train::run_training::<f64>(&config, &data, &options)?.1,
            };
            log.epochs
                .iter()
                .filter_map(|r| r.valid_mrr)
                .fold(None, |best: Option<f64>, v| {
                    Some(best.map_or(v, |b| b.max(v)))
                })
                .ok_or_else(|| CliError::Data("training produced no validation evaluations".into()))
        })();
        TrialResult {
            outcome: outcome.map_err(|e| e.to_string()),
            seconds: started.elapsed().as_secs_f64(),
        }
    };

    let outcome = hpo::run_search(&space, budget, seed, Some(journal), workers, &runner)?;
    match &outcome.best {
        Some(best) => {
            println!(
                "best trial {} with validation MRR {:.6}",
                best.index,
                best.outcome.unwrap()
            );
            for (k, v) in &best.config.assignments {
                println!("  {k} = {v}");
            }
        }
        None => println!("all {} trials failed", outcome.records.len()),
    }
    Ok(())
}

/// Assesses each per-epoch checkpoint with the same seed (hence identical
/// negatives) and joins cumulative wall seconds from the training log.
fn run_curve(
    checkpoints: &Path,
    dataset: &Path,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let bundle = ingest::import_dataset(dataset)?;
    let log_path = checkpoints.join("train_log.csv");
    let log_text = std::fs::read_to_string(&log_path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", log_path.display())))?;
    let epochs = TrainLog::parse_csv(&log_text)?;
    let mut cumulative = HashMap::new();
    let mut acc = 0.0f64;
    for r in &epochs {
        acc += r.seconds;
        cumulative.insert(r.epoch, acc);
    }

    let mut files: Vec<(u64, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(checkpoints).map_err(data_err)? {
        let entry = entry.map_err(data_err)?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(epoch) = name
            .strip_prefix("epoch_")
            .and_then(|rest| rest.strip_suffix(".ckpt"))
            .and_then(|digits| digits.parse::<u64>().ok())
        {
            files.push((epoch, entry.path()));
        }
    }
    if files.is_empty() {
        return Err(CliError::Data(format!(
            "no epoch_%05d.ckpt files in {}",
            checkpoints.display()
        )));
    }
    files.sort();

    let mut csv = String::from("epoch,median_auroc,median_auprc,median_ap50,seconds_cum\n");
    for (epoch, path) in files {
        let params = match load_checkpoint_model(&path) {
            Ok(p) => p,
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", path.display());
                csv.push_str(&format!(
                    "#skipped,{},unreadable\n",
                    path.file_name().unwrap_or_default().to_string_lossy()
                ));
                continue;
            }
        };
        let report = eval::assess(&params, &bundle, seed)?;
        let seconds = cumulative.get(&epoch).copied().unwrap_or(f64::NAN);
        csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            epoch, report.median_auroc, report.median_auprc, report.median_ap50, seconds
        ));
    }
    let out_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| checkpoints.join("curve.csv"));
    std::fs::write(&out_path, &csv).map_err(data_err)?;
    println!("curve -> {}", out_path.display());
    Ok(())
}

fn run_report(
    journal: &Path,
    space_path: Option<&Path>,
    eval_csv: Option<&Path>,
) -> Result<(), CliError> {
    let space = match space_path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", p.display())))?;
            SearchSpace::parse_str(&text)?
        }
        None => SearchSpace::default_space(),
    };
    let records = hpo::read_journal(journal, &space)?;
    if records.is_empty() {
        return Err(CliError::Data("journal is empty".into()));
    }
    let ok: Vec<_> = records.iter().filter(|r| r.outcome.is_some()).collect();
    println!(
        "{} trials ({} ok, {} failed)",
        records.len(),
        ok.len(),
        records.len() - ok.len()
    );
    match ok
        .iter()
        .max_by(|a, b| a.outcome.unwrap().partial_cmp(&b.outcome.unwrap()).unwrap())
    {
        Some(best) => {
            println!(
                "best trial {}: validation MRR {:.6} ({:.1}s)",
                best.index,
                best.outcome.unwrap(),
                best.wall_seconds
            );
            for (k, v) in &best.config.assignments {
                println!("  {k} = {v}");
            }
        }
        None => println!("no successful trials"),
    }

    if let Some(path) = eval_csv {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        let median_line = text
            .lines()
            .find(|l| l.starts_with("#median,"))
            .ok_or_else(|| CliError::Data("eval report has no #median row".into()))?;
        let fields: Vec<&str> = median_line.split(',').collect();
        if fields.len() != 7 {
            return Err(CliError::Data("malformed #median row".into()));
        }
        println!("holdout medians:");
        println!("  AUROC  {}", fields[4]);
        println!("  AUPRC  {}", fields[5]);
        println!("  AP@50  {}", fields[6]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    /// Every flag the parser accepts appears in the rendered help of its
    /// subcommand.
    #[test]
    fn help_documents_every_flag() {
        let mut root = Cli::command();
        root.build();
        for sub in root.get_subcommands() {
            let help = sub.clone().render_long_help().to_string();
            for arg in sub.get_arguments() {
                if let Some(long) = arg.get_long() {
                    assert!(
                        help.contains(&format!("--{long}")),
                        "{}: --{long} missing from help",
                        sub.get_name()
                    );
                }
            }
        }
    }

    #[test]
    fn no_arguments_is_usage_error() {
        assert_eq!(dispatch(["kgemb"]), 1);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(dispatch(["kgemb", "--help"]), 0);
        assert_eq!(dispatch(["kgemb", "split", "--help"]), 0);
    }

    #[test]
    fn unknown_flag_rejected() {
        assert_eq!(dispatch(["kgemb", "split", "--bogus", "1"]), 1);
    }

    #[test]
    fn out_of_range_fraction_is_usage_error() {
        let code = dispatch([
            "kgemb",
            "split",
            "--dataset",
            "/nonexistent",
            "--fraction",
            "1.5",
            "--seed",
            "1",
        ]);
        assert_eq!(code, 1);
    }

    #[test]
    fn missing_dataset_is_data_error() {
        let code = dispatch([
            "kgemb",
            "split",
            "--dataset",
            "/nonexistent_kgemb_dataset",
            "--fraction",
            "0.1",
            "--seed",
            "1",
        ]);
        assert_eq!(code, 2);
    }
}
