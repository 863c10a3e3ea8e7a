//! Early stopping and learning-rate plateau scheduling.

use super::config::{EarlyStopConfig, SchedulerConfig, StopMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop(StopReason),
}

/// Tracks the best validation metric and counts consecutive non-improving
/// checks. Checks run at `first_eval` and every `eval_every` epochs after;
/// stopping never happens before `min_epochs` and always at `max_epochs`.
#[derive(Clone, Debug)]
pub struct EarlyStopper {
    cfg: EarlyStopConfig,
    best: Option<f64>,
    fails: u32,
}

impl EarlyStopper {
    pub fn new(cfg: EarlyStopConfig) -> Self {
        EarlyStopper {
            cfg,
            best: None,
            fails: 0,
        }
    }

    pub fn is_eval_epoch(&self, epoch: u64) -> bool {
        epoch >= self.cfg.first_eval && (epoch - self.cfg.first_eval) % self.cfg.eval_every == 0
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// Feeds one validation check. Call only at evaluation epochs.
    pub fn update(&mut self, epoch: u64, metric: f64) -> StopDecision {
        match self.best {
            None => {
                // Inclusive mode lets a weak first check count against the
                // patience budget; strict mode only sets the baseline.
                if self.cfg.mode == StopMode::Inclusive && metric <= self.cfg.threshold {
                    self.fails = 1;
                }
                self.best = Some(metric);
            }
            Some(best) if metric > best => {
                self.best = Some(metric);
                self.fails = 0;
            }
            Some(_) => self.fails += 1,
        }
        if epoch >= self.cfg.max_epochs {
            StopDecision::Stop(StopReason::MaxEpochs)
        } else if self.fails >= self.cfg.patience && epoch >= self.cfg.min_epochs {
            StopDecision::Stop(StopReason::Patience)
        } else {
            StopDecision::Continue
        }
    }
}

/// Multiplies the learning rate by `factor` after `patience_evals`
/// evaluations without improvement. The rate never increases.
#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    cfg: SchedulerConfig,
    lr: f64,
    best: Option<f64>,
    fails: u32,
}

impl PlateauScheduler {
    pub fn new(cfg: SchedulerConfig, initial_lr: f64) -> Self {
        PlateauScheduler {
            cfg,
            lr: initial_lr,
            best: None,
            fails: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Observes one validation metric and returns the rate to use next.
    pub fn observe(&mut self, metric: f64) -> f64 {
        match self.best {
            None => self.best = Some(metric),
            Some(best) if metric > best => {
                self.best = Some(metric);
                self.fails = 0;
            }
            Some(_) => {
                self.fails += 1;
                if self.fails >= self.cfg.patience_evals {
                    self.lr *= self.cfg.factor;
                    self.fails = 0;
                }
            }
        }
        self.lr
    }
}
