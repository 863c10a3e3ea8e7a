//! Line-oriented `key = value` training configuration.
//!
//! `#` starts a comment, blank lines are ignored, unknown keys are errors.
//! Defaults reproduce the best-performing run of the study: SimplE at
//! d = 256 trained with 1vsAll + KL under Adam at lr 0.011, batch 256,
//! entity/relation dropout 0.068/0.125, no regularisation, Xavier-normal
//! initialisation.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::models::{Family, ModelError, ModelSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {0}: expected `key = value`")]
    Syntax(usize),
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// How negatives are provided to the loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainStrategy {
    NegSampling {
        subject_samples: usize,
        object_samples: usize,
    },
    OneVsAll,
    KVsAll,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossSpec {
    BceWithLogits,
    KlSoftmax,
    MarginRanking { margin: f64 },
    SoftMargin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrategyKind {
    NegSampling,
    OneVsAll,
    KVsAll,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    BceWithLogits,
    KlSoftmax,
    MarginRanking,
    SoftMargin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adagrad,
    Adadelta,
    Adam,
    Adamax,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adadelta => "adadelta",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Adamax => "adamax",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub rho: f64,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        OptimizerSpec {
            kind: OptimizerKind::Adam,
            learning_rate: 0.011,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            rho: 0.95,
        }
    }
}

/// Counting mode for the first early-stopping check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopMode {
    /// The first check only sets the baseline.
    Strict,
    /// A first check at or below `threshold` already counts as
    /// non-improving.
    Inclusive,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EarlyStopConfig {
    pub first_eval: u64,
    pub eval_every: u64,
    pub patience: u32,
    pub min_epochs: u64,
    pub max_epochs: u64,
    pub mode: StopMode,
    pub threshold: f64,
}

impl Default for EarlyStopConfig {
    fn default() -> Self {
        EarlyStopConfig {
            first_eval: 50,
            eval_every: 5,
            patience: 2,
            min_epochs: 55,
            max_epochs: 500,
            mode: StopMode::Strict,
            threshold: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchedulerConfig {
    pub factor: f64,
    pub patience_evals: u32,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            factor: 0.95,
            patience_evals: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitKind {
    Normal,
    Uniform,
    XavierNormal,
    XavierUniform,
    /// Initialise entities from reduced dataset feature vectors.
    Features,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

/// The full hyperparameter record for one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub family: Family,
    pub dim: usize,
    pub strategy_kind: StrategyKind,
    pub negsamp_subject: usize,
    pub negsamp_object: usize,
    pub loss_kind: LossKind,
    pub margin: f64,
    pub optimizer: OptimizerSpec,
    pub batch_size: usize,
    pub dropout_entity: f64,
    pub dropout_relation: f64,
    pub reg_enabled: bool,
    pub reg_weight: f64,
    pub reg_exponent: i32,
    pub init: InitKind,
    pub init_std: f64,
    pub init_lo: f64,
    pub init_hi: f64,
    pub scheduler: SchedulerConfig,
    pub stop: EarlyStopConfig,
    pub precision: Precision,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            family: Family::SimplE,
            dim: 256,
            strategy_kind: StrategyKind::OneVsAll,
            negsamp_subject: 10,
            negsamp_object: 10,
            loss_kind: LossKind::KlSoftmax,
            margin: 1.0,
            optimizer: OptimizerSpec::default(),
            batch_size: 256,
            dropout_entity: 0.068,
            dropout_relation: 0.125,
            reg_enabled: true,
            reg_weight: 0.0,
            reg_exponent: 2,
            init: InitKind::XavierNormal,
            init_std: 0.1,
            init_lo: -0.1,
            init_hi: 0.1,
            scheduler: SchedulerConfig::default(),
            stop: EarlyStopConfig::default(),
            precision: Precision::F32,
            seed: 0,
        }
    }
}

fn bad(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse::<T>()
        .map_err(|_| bad(key, value, "not a number"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

impl TrainConfig {
    /// Parses a config file body over the defaults.
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut config = TrainConfig::default();
        config.apply_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Applies config lines on top of the current values.
    pub fn apply_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax(lineno + 1))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn apply_pairs<'a>(
        &mut self,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<(), ConfigError> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Sets a single dotted key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "model.family" => {
                self.family = Family::parse(value)
                    .ok_or_else(|| bad(key, value, "expected distmult|complex|simple"))?;
            }
            "model.dim" => self.dim = parse_num(key, value)?,
            "train.strategy" => {
                self.strategy_kind = match value.to_ascii_lowercase().as_str() {
                    "negsamp" => StrategyKind::NegSampling,
                    "1vsall" => StrategyKind::OneVsAll,
                    "kvsall" => StrategyKind::KVsAll,
                    _ => return Err(bad(key, value, "expected negsamp|1vsAll|KvsAll")),
                };
            }
            "train.negsamp.subject" | "train.negsamp.object" => {
                let n: usize = parse_num(key, value)?;
                if n == 0 {
                    return Err(bad(key, value, "sample count must be at least 1"));
                }
                if key.ends_with("subject") {
                    self.negsamp_subject = n;
                } else {
                    self.negsamp_object = n;
                }
            }
            "train.loss" => {
                self.loss_kind = match value.to_ascii_lowercase().as_str() {
                    "bce" => LossKind::BceWithLogits,
                    "kl" => LossKind::KlSoftmax,
                    "margin_ranking" => LossKind::MarginRanking,
                    "soft_margin" => LossKind::SoftMargin,
                    _ => {
                        return Err(bad(
                            key,
                            value,
                            "expected bce|kl|margin_ranking|soft_margin",
                        ))
                    }
                };
            }
            "train.margin" => {
                let m: f64 = parse_num(key, value)?;
                if m <= 0.0 {
                    return Err(bad(key, value, "margin must be positive"));
                }
                self.margin = m;
            }
            "train.optimizer" => {
                self.optimizer.kind = match value.to_ascii_lowercase().as_str() {
                    "sgd" => OptimizerKind::Sgd,
                    "adagrad" => OptimizerKind::Adagrad,
                    "adadelta" => OptimizerKind::Adadelta,
                    "adam" => OptimizerKind::Adam,
                    "adamax" => OptimizerKind::Adamax,
                    _ => return Err(bad(key, value, "unknown optimizer")),
                };
            }
            "train.lr" => self.optimizer.learning_rate = parse_num(key, value)?,
            "train.opt.beta1" => self.optimizer.beta1 = parse_num(key, value)?,
            "train.opt.beta2" => self.optimizer.beta2 = parse_num(key, value)?,
            "train.opt.eps" => self.optimizer.epsilon = parse_num(key, value)?,
            "train.opt.rho" => self.optimizer.rho = parse_num(key, value)?,
            "train.batch_size" => self.batch_size = parse_num(key, value)?,
            "train.dropout.entity" => self.dropout_entity = parse_num(key, value)?,
            "train.dropout.relation" => self.dropout_relation = parse_num(key, value)?,
            "train.reg.enabled" => self.reg_enabled = parse_bool(key, value)?,
            "train.reg.weight" => self.reg_weight = parse_num(key, value)?,
            "train.reg.exponent" => self.reg_exponent = parse_num(key, value)?,
            "train.init" => {
                self.init = match value.to_ascii_lowercase().as_str() {
                    "normal" => InitKind::Normal,
                    "uniform" => InitKind::Uniform,
                    "xavier_normal" => InitKind::XavierNormal,
                    "xavier_uniform" => InitKind::XavierUniform,
                    "features" => InitKind::Features,
                    _ => return Err(bad(key, value, "unknown initialiser")),
                };
            }
            "train.init.std" => self.init_std = parse_num(key, value)?,
            "train.init.lo" => self.init_lo = parse_num(key, value)?,
            "train.init.hi" => self.init_hi = parse_num(key, value)?,
            "train.scheduler.factor" => self.scheduler.factor = parse_num(key, value)?,
            "train.scheduler.patience" => self.scheduler.patience_evals = parse_num(key, value)?,
            "train.stop.first_eval" => self.stop.first_eval = parse_num(key, value)?,
            "train.stop.every" => self.stop.eval_every = parse_num(key, value)?,
            "train.stop.patience" => self.stop.patience = parse_num(key, value)?,
            "train.stop.min_epochs" => self.stop.min_epochs = parse_num(key, value)?,
            "train.stop.max_epochs" => self.stop.max_epochs = parse_num(key, value)?,
            "train.stop.mode" => {
                self.stop.mode = match value {
                    "strict" => StopMode::Strict,
                    "inclusive" => StopMode::Inclusive,
                    _ => return Err(bad(key, value, "expected strict|inclusive")),
                };
            }
            "train.stop.threshold" => self.stop.threshold = parse_num(key, value)?,
            "train.precision" => {
                self.precision = match value {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => return Err(bad(key, value, "expected f32|f64")),
                };
            }
            "train.seed" => self.seed = parse_num(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        ModelSpec::new(self.family, self.dim)?;
        if self.batch_size == 0 {
            return Err(ConfigError::Invalid("batch_size must be at least 1".into()));
        }
        for (name, p) in [
            ("dropout.entity", self.dropout_entity),
            ("dropout.relation", self.dropout_relation),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(ConfigError::Invalid(format!("{name} must be in [0, 1)")));
            }
        }
        if self.optimizer.learning_rate <= 0.0 {
            return Err(ConfigError::Invalid("lr must be positive".into()));
        }
        if self.margin <= 0.0 {
            return Err(ConfigError::Invalid("margin must be positive".into()));
        }
        if self.reg_weight < 0.0 {
            return Err(ConfigError::Invalid("reg weight must be >= 0".into()));
        }
        if self.reg_exponent < 1 {
            return Err(ConfigError::Invalid("reg exponent must be >= 1".into()));
        }
        if self.stop.min_epochs > self.stop.max_epochs {
            return Err(ConfigError::Invalid(
                "stop.min_epochs must not exceed stop.max_epochs".into(),
            ));
        }
        if self.stop.eval_every == 0 {
            return Err(ConfigError::Invalid("stop.every must be at least 1".into()));
        }
        if self.init_lo >= self.init_hi {
            return Err(ConfigError::Invalid("init.lo must be below init.hi".into()));
        }
        if self.init_std <= 0.0 {
            return Err(ConfigError::Invalid("init.std must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.scheduler.factor) {
            return Err(ConfigError::Invalid(
                "scheduler.factor must be in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn model_spec(&self) -> Result<ModelSpec, ModelError> {
        ModelSpec::new(self.family, self.dim)
    }

    /// Strategy with its sample counts attached.
    pub fn train_strategy(&self) -> TrainStrategy {
        match self.strategy_kind {
            StrategyKind::NegSampling => TrainStrategy::NegSampling {
                subject_samples: self.negsamp_subject,
                object_samples: self.negsamp_object,
            },
            StrategyKind::OneVsAll => TrainStrategy::OneVsAll,
            StrategyKind::KVsAll => TrainStrategy::KVsAll,
        }
    }

    /// Loss with its margin attached.
    pub fn loss_spec(&self) -> LossSpec {
        match self.loss_kind {
            LossKind::BceWithLogits => LossSpec::BceWithLogits,
            LossKind::KlSoftmax => LossSpec::KlSoftmax,
            LossKind::MarginRanking => LossSpec::MarginRanking {
                margin: self.margin,
            },
            LossKind::SoftMargin => LossSpec::SoftMargin,
        }
    }

    /// Canonical `(key, value)` rendering covering every key the parser
    /// accepts, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let strategy = match self.strategy_kind {
            StrategyKind::NegSampling => "negsamp",
            StrategyKind::OneVsAll => "1vsAll",
            StrategyKind::KVsAll => "KvsAll",
        };
        let loss = match self.loss_kind {
            LossKind::BceWithLogits => "bce",
            LossKind::KlSoftmax => "kl",
            LossKind::MarginRanking => "margin_ranking",
            LossKind::SoftMargin => "soft_margin",
        };
        let init = match self.init {
            InitKind::Normal => "normal",
            InitKind::Uniform => "uniform",
            InitKind::XavierNormal => "xavier_normal",
            InitKind::XavierUniform => "xavier_uniform",
            InitKind::Features => "features",
        };
        let mode = match self.stop.mode {
            StopMode::Strict => "strict",
            StopMode::Inclusive => "inclusive",
        };
        let precision = match self.precision {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        };
        vec![
            ("model.family".into(), self.family.as_str().into()),
            ("model.dim".into(), self.dim.to_string()),
            ("train.strategy".into(), strategy.into()),
            (
                "train.negsamp.subject".into(),
                self.negsamp_subject.to_string(),
            ),
            (
                "train.negsamp.object".into(),
                self.negsamp_object.to_string(),
            ),
            ("train.loss".into(), loss.into()),
            ("train.margin".into(), self.margin.to_string()),
            (
                "train.optimizer".into(),
                self.optimizer.kind.as_str().into(),
            ),
            ("train.lr".into(), self.optimizer.learning_rate.to_string()),
            ("train.opt.beta1".into(), self.optimizer.beta1.to_string()),
            ("train.opt.beta2".into(), self.optimizer.beta2.to_string()),
            ("train.opt.eps".into(), self.optimizer.epsilon.to_string()),
            ("train.opt.rho".into(), self.optimizer.rho.to_string()),
            ("train.batch_size".into(), self.batch_size.to_string()),
            (
                "train.dropout.entity".into(),
                self.dropout_entity.to_string(),
            ),
            (
                "train.dropout.relation".into(),
                self.dropout_relation.to_string(),
            ),
            ("train.reg.enabled".into(), self.reg_enabled.to_string()),
            ("train.reg.weight".into(), self.reg_weight.to_string()),
            ("train.reg.exponent".into(), self.reg_exponent.to_string()),
            ("train.init".into(), init.into()),
            ("train.init.std".into(), self.init_std.to_string()),
            ("train.init.lo".into(), self.init_lo.to_string()),
            ("train.init.hi".into(), self.init_hi.to_string()),
            (
                "train.scheduler.factor".into(),
                self.scheduler.factor.to_string(),
            ),
            (
                "train.scheduler.patience".into(),
                self.scheduler.patience_evals.to_string(),
            ),
            (
                "train.stop.first_eval".into(),
                self.stop.first_eval.to_string(),
            ),
            ("train.stop.every".into(), self.stop.eval_every.to_string()),
            ("train.stop.patience".into(), self.stop.patience.to_string()),
            (
                "train.stop.min_epochs".into(),
                self.stop.min_epochs.to_string(),
            ),
            (
                "train.stop.max_epochs".into(),
                self.stop.max_epochs.to_string(),
            ),
            ("train.stop.mode".into(), mode.into()),
            (
                "train.stop.threshold".into(),
                self.stop.threshold.to_string(),
            ),
            ("train.precision".into(), precision.into()),
            ("train.seed".into(), self.seed.to_string()),
        ]
    }

    /// SHA-256 of the canonical key/value rendering; stored in checkpoints.
    pub fn digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        for (k, v) in self.to_pairs() {
            hasher.update(k.as_bytes());
            hasher.update(b" = ");
            hasher.update(v.as_bytes());
            hasher.update(b"\n");
        }
        hasher.finalize().into()
    }

    /// Effective regularisation weight (zero when disabled).
    pub fn effective_reg_weight(&self) -> f64 {
        if self.reg_enabled {
            self.reg_weight
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_run() {
        let c = TrainConfig::default();
        assert_eq!(c.family, Family::SimplE);
        assert_eq!(c.dim, 256);
        assert_eq!(c.strategy_kind, StrategyKind::OneVsAll);
        assert_eq!(c.loss_kind, LossKind::KlSoftmax);
        assert_eq!(c.optimizer.kind, OptimizerKind::Adam);
        assert_eq!(c.optimizer.learning_rate, 0.011);
        assert_eq!(c.batch_size, 256);
        assert_eq!(c.dropout_entity, 0.068);
        assert_eq!(c.dropout_relation, 0.125);
        assert_eq!(c.effective_reg_weight(), 0.0);
        assert_eq!(c.stop.min_epochs, 55);
        assert_eq!(c.stop.max_epochs, 500);
    }

    #[test]
    fn parses_example_keys() {
        let text = "\
# reference run
model.family = simple
model.dim = 256
train.optimizer = adam
train.lr = 0.011
train.batch_size = 256
train.strategy = 1vsAll
train.loss = kl
train.dropout.entity = 0.068
train.dropout.relation = 0.125
";
        let c = TrainConfig::parse_str(text).unwrap();
        assert_eq!(c, TrainConfig::default());
    }

    #[test]
    fn unknown_key_rejected() {
        let err = TrainConfig::parse_str("train.nope = 1").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey(_)));
    }

    #[test]
    fn syntax_error_carries_line() {
        let err = TrainConfig::parse_str("model.dim = 4\nbogus line\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax(2)));
    }

    #[test]
    fn round_trip_through_pairs() {
        let mut c = TrainConfig::default();
        c.set("train.loss", "margin_ranking").unwrap();
        c.set("train.margin", "2.5").unwrap();
        c.set("train.strategy", "negsamp").unwrap();
        c.set("train.negsamp.object", "7").unwrap();
        let mut rebuilt = TrainConfig::default();
        let pairs = c.to_pairs();
        rebuilt
            .apply_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .unwrap();
        assert_eq!(rebuilt, c);
        assert_eq!(rebuilt.digest(), c.digest());
        assert_eq!(c.loss_spec(), LossSpec::MarginRanking { margin: 2.5 });
        assert_eq!(
            c.train_strategy(),
            TrainStrategy::NegSampling {
                subject_samples: 10,
                object_samples: 7
            }
        );
    }

    #[test]
    fn validation_catches_bad_ranges() {
        let mut c = TrainConfig::default();
        c.dropout_entity = 1.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.family = Family::ComplEx;
        c.dim = 7;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.stop.min_epochs = 10;
        c.stop.max_epochs = 5;
        assert!(c.validate().is_err());
    }
}
