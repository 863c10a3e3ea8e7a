//! The training loop: strategies, losses, optimizers, scheduling, early
//! stopping and per-epoch checkpointing.
//!
//! Randomness is split over three seeded streams (batch shuffling, negative
//! sampling, dropout), so a fixed seed reproduces the loss column of the
//! training log bit for bit in 64-bit mode. Checkpoints are written to a
//! temporary file and renamed into place; the log is flushed after every
//! epoch.

pub mod config;
mod loss;
mod optim;
mod stopping;
mod strategy;

pub use config::{
    ConfigError, EarlyStopConfig, InitKind, LossKind, LossSpec, OptimizerKind, OptimizerSpec,
    Precision, SchedulerConfig, StopMode, StrategyKind, TrainConfig, TrainStrategy,
};
pub use loss::{loss_value, loss_value_and_grads, LossOptions, SparseGrads};
pub use optim::Optimizer;
pub use stopping::{EarlyStopper, PlateauScheduler, StopDecision, StopReason};
pub use strategy::{assemble_targets, Candidates, TargetBatch, TargetRow};

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::checkpoint::{self, Array, ArrayData, CheckpointError, Container};
use crate::eval;
use crate::kg::{EntityId, TripleStore};
use crate::models::{init_params, InitSpec, ModelError, ModelParams, Real};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("numerical fault: {0}")]
    NumericalFault(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("training io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
}

/// Split views plus vocabulary sizes; built by the CLI from a dataset
/// bundle or directly from a synthetic fixture.
pub struct TrainData<'a> {
    pub train: &'a TripleStore,
    pub valid: &'a TripleStore,
    pub n_entities: usize,
    pub n_relations: usize,
    /// Reduced feature rows for `train.init = features`.
    pub feature_rows: Option<HashMap<EntityId, Vec<f64>>>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Where checkpoints and the training log go; nothing is written when
    /// absent.
    pub out_dir: Option<PathBuf>,
    pub save_every_epoch: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: u64,
    pub loss: f64,
    pub seconds: f64,
    pub lr: f64,
    pub valid_mrr: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: String,
    pub saturated_corruptions: u64,
}

pub const LOG_HEADER: &str = "epoch,loss,seconds,lr,valid_mrr";

impl EpochRecord {
    fn csv_line(&self) -> String {
        let mrr = self.valid_mrr.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.epoch, self.loss, self.seconds, self.lr, mrr
        )
    }
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(LOG_HEADER);
        out.push('\n');
        for r in &self.epochs {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }

    /// Parses a log written by [`TrainLog::to_csv`].
    pub fn parse_csv(text: &str) -> Result<Vec<EpochRecord>, TrainError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == LOG_HEADER => {}
            _ => return Err(TrainError::Invalid("bad training log header".into())),
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(TrainError::Invalid(format!(
                    "training log line {}: expected 5 fields",
                    i + 2
                )));
            }
            let parse = |s: &str, what: &str| -> Result<f64, TrainError> {
                s.parse()
                    .map_err(|_| TrainError::Invalid(format!("training log: bad {what}: {s:?}")))
            };
            records.push(EpochRecord {
                epoch: fields[0]
                    .parse()
                    .map_err(|_| TrainError::Invalid("training log: bad epoch".into()))?,
                loss: parse(fields[1], "loss")?,
                seconds: parse(fields[2], "seconds")?,
                lr: parse(fields[3], "lr")?,
                valid_mrr: if fields[4].is_empty() {
                    None
                } else {
                    Some(parse(fields[4], "valid_mrr")?)
                },
            });
        }
        Ok(records)
    }
}

fn init_spec_for(config: &TrainConfig) -> (InitSpec, InitSpec) {
    let base = match config.init {
        InitKind::Normal => InitSpec::Normal {
            std: config.init_std,
        },
        InitKind::Uniform => InitSpec::Uniform {
            lo: config.init_lo,
            hi: config.init_hi,
        },
        InitKind::XavierNormal => InitSpec::XavierNormal,
        InitKind::XavierUniform => InitSpec::XavierUniform,
        InitKind::Features => InitSpec::FromFeatures,
    };
    // Feature vectors initialise entities only; relations draw Xavier.
    let relation = if config.init == InitKind::Features {
        InitSpec::XavierNormal
    } else {
        base.clone()
    };
    (base, relation)
}

/// Mean filtered reciprocal rank of the validation triples, candidates
/// filtered against train and valid.
fn valid_mrr<F: Real>(params: &ModelParams<F>, data: &TrainData) -> Result<f64, TrainError> {
    let filters = [data.train, data.valid];
    let ranks = eval::rank_all(params, data.valid.triples(), &filters)
        .map_err(|e| TrainError::Invalid(e.to_string()))?;
    let metrics = eval::ranking_metrics(&ranks).map_err(|e| TrainError::Invalid(e.to_string()))?;
    Ok(metrics.mrr)
}

fn write_checkpoint<F: Real>(
    path: &Path,
    params: &ModelParams<F>,
    optimizer: &Optimizer<F>,
    epoch: u64,
    digest: &[u8; 32],
) -> Result<(), CheckpointError> {
    let mut c = Container::new();
    checkpoint::insert_model(&mut c, params);
    c.insert("epoch", Array::scalar_u64(epoch));
    c.insert(
        "config_digest",
        Array::new(vec![32], ArrayData::U8(digest.to_vec())),
    );
    optimizer.save_slots(&mut c);
    c.write(path)
}

/// Trains a model on `data` under `config`. Returns the final parameters
/// and the per-epoch log; writes `train_log.csv`, per-epoch checkpoints
/// (when enabled) and `final.ckpt` into the output directory.
pub fn run_training<F: Real>(
    config: &TrainConfig,
    data: &TrainData,
    options: &TrainOptions,
) -> Result<(ModelParams<F>, TrainLog), TrainError> {
    config.validate()?;
    let spec = config.model_spec()?;
    if data.train.is_empty() {
        return Err(TrainError::Invalid("training split is empty".into()));
    }

    let (entity_init, relation_init) = init_spec_for(config);
    if config.init == InitKind::Features && data.feature_rows.is_none() {
        return Err(TrainError::Invalid(
            "train.init = features requires a dataset with feature vectors".into(),
        ));
    }
    let mut params = init_params::<F>(
        spec,
        data.n_entities,
        data.n_relations,
        &entity_init,
        &relation_init,
        config.seed,
        data.feature_rows.as_ref(),
    )?;

    let strategy = config.train_strategy();
    let loss_spec = config.loss_spec();
    let loss_opts = LossOptions {
        dropout_entity: config.dropout_entity,
        dropout_relation: config.dropout_relation,
        reg_weight: config.effective_reg_weight(),
        reg_exponent: config.reg_exponent,
    };
    let mut optimizer = Optimizer::new(
        config.optimizer,
        data.n_entities,
        data.n_relations,
        spec.dim,
    );
    let mut scheduler = PlateauScheduler::new(config.scheduler, config.optimizer.learning_rate);
    let mut stopper = EarlyStopper::new(config.stop);

    let mut shuffle_rng = ChaCha20Rng::seed_from_u64(config.seed.wrapping_add(0x5348_5546));
    let mut target_rng = ChaCha20Rng::seed_from_u64(config.seed.wrapping_add(0x4e45_4753));
    let mut dropout_rng = ChaCha20Rng::seed_from_u64(config.seed.wrapping_add(0x4452_4f50));

    let digest = config.digest();
    let mut log_writer = match &options.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut w = BufWriter::new(File::create(dir.join("train_log.csv"))?);
            writeln!(w, "{LOG_HEADER}")?;
            Some(w)
        }
        None => None,
    };

    let mut indices: Vec<usize> = (0..data.train.len()).collect();
    let mut log = TrainLog::default();
    let run_evals = !data.valid.is_empty();

    for epoch in 1..=config.stop.max_epochs {
        let started = Instant::now();
        indices.shuffle(&mut shuffle_rng);
        let mut batch_losses = 0.0f64;
        let mut batches = 0usize;
        for chunk in indices.chunks(config.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| data.train.triples()[i]).collect();
            let targets = assemble_targets(&strategy, &batch, data.train, &mut target_rng);
            log.saturated_corruptions += targets.saturated_corruptions;
            let (loss, grads) =
                loss_value_and_grads(&params, &targets, &loss_spec, &loss_opts, &mut dropout_rng)?;
            optimizer.step(&mut params, &grads)?;
            batch_losses += loss.as_f64();
            batches += 1;
        }
        let mean_loss = batch_losses / batches as f64;

        let mut decision = StopDecision::Continue;
        let mut epoch_mrr = None;
        if run_evals && stopper.is_eval_epoch(epoch) {
            let mrr = valid_mrr(&params, data)?;
            epoch_mrr = Some(mrr);
            let lr = scheduler.observe(mrr);
            optimizer.set_lr(lr);
            decision = stopper.update(epoch, mrr);
        }

        let record = EpochRecord {
            epoch,
            loss: mean_loss,
            seconds: started.elapsed().as_secs_f64(),
            lr: optimizer.lr(),
            valid_mrr: epoch_mrr,
        };
        if let Some(w) = &mut log_writer {
            writeln!(w, "{}", record.csv_line())?;
            w.flush()?;
        }
        log.epochs.push(record);

        if options.save_every_epoch {
            if let Some(dir) = &options.out_dir {
                write_checkpoint(
                    &dir.join(checkpoint::epoch_file_name(epoch)),
                    &params,
                    &optimizer,
                    epoch,
                    &digest,
                )?;
            }
        }

        match decision {
            StopDecision::Stop(StopReason::Patience) => {
                log.stop_reason = format!("patience at epoch {epoch}");
                break;
            }
            StopDecision::Stop(StopReason::MaxEpochs) => {
                log.stop_reason = format!("max epochs at epoch {epoch}");
                break;
            }
            StopDecision::Continue => {}
        }
        if epoch == config.stop.max_epochs {
            log.stop_reason = format!("max epochs at epoch {epoch}");
        }
    }

    if let Some(dir) = &options.out_dir {
        let epoch = log.epochs.last().map(|r| r.epoch).unwrap_or(0);
        write_checkpoint(&dir.join("final.ckpt"), &params, &optimizer, epoch, &digest)?;
    }

    Ok((params, log))
}
