//! Hyperparameter search-space definition and the unit-cube decoding.
//!
//! Parameter names are training-config keys; decoding a point produces
//! `key = value` assignments applied over the config defaults, so every
//! point in the unit cube yields a complete, valid configuration.
//! Conditional parameters (`active_when`) decode only when their gate
//! matches; inactive parameters keep the documented config defaults.

use std::collections::BTreeMap;

use super::HpoError;
use crate::train::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
    Log2,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    Categorical(Vec<String>),
    IntRange { lo: i64, hi: i64, scale: Scale },
    FloatRange { lo: f64, hi: f64, scale: Scale },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conditional {
    /// The gated parameter.
    pub param: String,
    /// Gate parameter; must be declared before `param`.
    pub when: String,
    /// Value of `when` that activates `param`.
    pub equals: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace {
    params: Vec<(String, Domain)>,
    conditionals: Vec<Conditional>,
}

/// A decoded trial: the space assignments plus the full materialised
/// training configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialConfig {
    pub assignments: Vec<(String, String)>,
    pub train: TrainConfig,
}

impl SearchSpace {
    pub fn new(
        params: Vec<(String, Domain)>,
        conditionals: Vec<Conditional>,
    ) -> Result<Self, HpoError> {
        if params.is_empty() {
            return Err(HpoError::Space("empty search space".into()));
        }
        for (i, (name, domain)) in params.iter().enumerate() {
            if params[..i].iter().any(|(n, _)| n == name) {
                return Err(HpoError::Space(format!("duplicate parameter {name:?}")));
            }
            match domain {
                Domain::Categorical(options) if options.is_empty() => {
                    return Err(HpoError::Space(format!("{name:?} has no options")));
                }
                Domain::IntRange { lo, hi, .. } if lo > hi => {
                    return Err(HpoError::Space(format!("{name:?} range empty")));
                }
                Domain::FloatRange { lo, hi, scale } => {
                    if lo >= hi {
                        return Err(HpoError::Space(format!("{name:?} range empty")));
                    }
                    if *scale == Scale::Log && *lo <= 0.0 {
                        return Err(HpoError::Space(format!(
                            "{name:?} log scale needs positive bounds"
                        )));
                    }
                }
                _ => {}
            }
        }
        // Gates must be declared before the parameters they gate; this
        // keeps the conditional graph trivially acyclic.
        for c in &conditionals {
            let gated = params.iter().position(|(n, _)| *n == c.param);
            let gate = params.iter().position(|(n, _)| *n == c.when);
            match (gated, gate) {
                (Some(gi), Some(wi)) if wi < gi => {}
                (Some(_), Some(_)) => {
                    return Err(HpoError::Space(format!(
                        "conditional on {:?} must reference an earlier parameter",
                        c.param
                    )));
                }
                _ => {
                    return Err(HpoError::Space(format!(
                        "conditional references unknown parameter ({:?} or {:?})",
                        c.param, c.when
                    )));
                }
            }
        }
        Ok(SearchSpace {
            params,
            conditionals,
        })
    }

    /// Number of unit-cube dimensions (one per parameter).
    pub fn dimension(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[(String, Domain)] {
        &self.params
    }

    fn is_active(&self, name: &str, decoded: &BTreeMap<String, String>) -> bool {
        self.conditionals
            .iter()
            .filter(|c| c.param == name)
            .all(|c| decoded.get(&c.when).map(String::as_str) == Some(c.equals.as_str()))
    }

    fn decode_value(domain: &Domain, u: f64) -> String {
        let u = u.clamp(0.0, 1.0 - f64::EPSILON);
        match domain {
            Domain::Categorical(options) => {
                let idx = ((u * options.len() as f64) as usize).min(options.len() - 1);
                options[idx].clone()
            }
            Domain::IntRange { lo, hi, scale } => {
                let v = match scale {
                    Scale::Log2 => {
                        let e_lo = (*lo as f64).log2();
                        let e_hi = (*hi as f64).log2();
                        (e_lo + u * (e_hi - e_lo)).round().exp2().round() as i64
                    }
                    _ => (*lo as f64 + u * (*hi as f64 - *lo as f64)).round() as i64,
                };
                v.clamp(*lo, *hi).to_string()
            }
            Domain::FloatRange { lo, hi, scale } => {
                let v = match scale {
                    Scale::Log => (lo.ln() + u * (hi.ln() - lo.ln())).exp(),
                    _ => lo + u * (hi - lo),
                };
                v.clamp(*lo, *hi).to_string()
            }
        }
    }

    /// Decodes a unit point into active `key = value` assignments.
    pub fn decode(&self, point: &[f64]) -> Vec<(String, String)> {
        assert_eq!(point.len(), self.params.len(), "point dimension mismatch");
        let mut decoded = BTreeMap::new();
        let mut out = Vec::new();
        for (i, (name, domain)) in self.params.iter().enumerate() {
            if !self.is_active(name, &decoded) {
                continue;
            }
            let value = Self::decode_value(domain, point[i]);
            decoded.insert(name.clone(), value.clone());
            out.push((name.clone(), value));
        }
        out
    }

    /// Decodes a point into a complete training configuration. Total:
    /// every point yields a valid config.
    pub fn decode_config(&self, point: &[f64]) -> Result<TrialConfig, HpoError> {
        let assignments = self.decode(point);
        let mut train = TrainConfig::default();
        train
            .apply_pairs(assignments.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .map_err(|e| HpoError::Space(format!("decoded assignment rejected: {e}")))?;
        train
            .validate()
            .map_err(|e| HpoError::Space(format!("decoded config invalid: {e}")))?;
        Ok(TrialConfig { assignments, train })
    }

    /// Re-encodes assignments into the unit cube (inactive or missing
    /// parameters sit at 0.5). Categorical values map to their cell
    /// centre, so encode-then-decode reproduces the assignments.
    pub fn encode(&self, assignments: &[(String, String)]) -> Vec<f64> {
        let map: BTreeMap<&str, &str> = assignments
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect();
        let mut point = Vec::with_capacity(self.params.len());
        for (name, domain) in &self.params {
            let u = match map.get(name.as_str()) {
                None => 0.5,
                Some(value) => match domain {
                    Domain::Categorical(options) => options
                        .iter()
                        .position(|o| o == value)
                        .map(|idx| (idx as f64 + 0.5) / options.len() as f64)
                        .unwrap_or(0.5),
                    Domain::IntRange { lo, hi, scale } => {
                        let v: f64 = value.parse().unwrap_or(*lo as f64);
                        match scale {
                            Scale::Log2 => {
                                let e_lo = (*lo as f64).log2();
                                let e_hi = (*hi as f64).log2();
                                if e_hi > e_lo {
                                    ((v.log2() - e_lo) / (e_hi - e_lo)).clamp(0.0, 1.0)
                                } else {
                                    0.5
                                }
                            }
                            _ => {
                                if hi > lo {
                                    ((v - *lo as f64) / (*hi as f64 - *lo as f64)).clamp(0.0, 1.0)
                                } else {
                                    0.5
                                }
                            }
                        }
                    }
                    Domain::FloatRange { lo, hi, scale } => {
                        let v: f64 = value.parse().unwrap_or(*lo);
                        match scale {
                            Scale::Log => {
                                ((v.ln() - lo.ln()) / (hi.ln() - lo.ln())).clamp(0.0, 1.0)
                            }
                            _ => ((v - lo) / (hi - lo)).clamp(0.0, 1.0),
                        }
                    }
                },
            };
            point.push(u);
        }
        point
    }

    /// Width of the surrogate feature encoding (one-hot categoricals,
    /// unit-scaled numerics).
    pub fn gp_dimension(&self) -> usize {
        self.params
            .iter()
            .map(|(_, d)| match d {
                Domain::Categorical(options) => options.len(),
                _ => 1,
            })
            .sum()
    }

    /// Encodes assignments for the Gaussian-process surrogate.
    pub fn gp_encode(&self, assignments: &[(String, String)]) -> Vec<f64> {
        let map: BTreeMap<&str, &str> = assignments
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect();
        let mut features = Vec::with_capacity(self.gp_dimension());
        for (name, domain) in &self.params {
            match domain {
                Domain::Categorical(options) => {
                    let chosen = map.get(name.as_str()).copied();
                    for option in options {
                        features.push(if chosen == Some(option.as_str()) {
                            1.0
                        } else {
                            0.0
                        });
                    }
                }
                _ => {
                    // reuse the unit-cube scaling for numerics
                    let single = match map.get(name.as_str()) {
                        None => 0.5,
                        Some(v) => {
                            let pair = [(name.clone(), v.to_string())];
                            let idx = self.params.iter().position(|(n, _)| n == name).unwrap();
                            self.encode(&pair)[idx]
                        }
                    };
                    features.push(single);
                }
            }
        }
        features
    }

    /// The default space: optimizer (5) x loss (4) x dim {32..512} x
    /// strategy (3) x batch {128..8192} x lr [1e-4, 1] x dropouts x
    /// regularisation ({off} or log-range) x initialiser (4).
    pub fn default_space() -> SearchSpace {
        let params = vec![
            (
                "train.optimizer".into(),
                Domain::Categorical(
                    ["sgd", "adagrad", "adadelta", "adam", "adamax"]
                        .map(String::from)
                        .to_vec(),
                ),
            ),
            (
                "train.loss".into(),
                Domain::Categorical(
                    ["bce", "kl", "margin_ranking", "soft_margin"]
                        .map(String::from)
                        .to_vec(),
                ),
            ),
            (
                "model.dim".into(),
                Domain::IntRange {
                    lo: 32,
                    hi: 512,
                    scale: Scale::Log2,
                },
            ),
            (
                "train.strategy".into(),
                Domain::Categorical(["negsamp", "1vsAll", "KvsAll"].map(String::from).to_vec()),
            ),
            (
                "train.batch_size".into(),
                Domain::IntRange {
                    lo: 128,
                    hi: 8192,
                    scale: Scale::Log2,
                },
            ),
            (
                "train.lr".into(),
                Domain::FloatRange {
                    lo: 1e-4,
                    hi: 1.0,
                    scale: Scale::Log,
                },
            ),
            (
                "train.dropout.entity".into(),
                Domain::FloatRange {
                    lo: 0.0,
                    hi: 0.5,
                    scale: Scale::Linear,
                },
            ),
            (
                "train.dropout.relation".into(),
                Domain::FloatRange {
                    lo: 0.0,
                    hi: 0.5,
                    scale: Scale::Linear,
                },
            ),
            (
                "train.reg.enabled".into(),
                Domain::Categorical(["false", "true"].map(String::from).to_vec()),
            ),
            (
                "train.reg.weight".into(),
                Domain::FloatRange {
                    lo: 1e-12,
                    hi: 1e-2,
                    scale: Scale::Log,
                },
            ),
            (
                "train.init".into(),
                Domain::Categorical(
                    ["normal", "uniform", "xavier_normal", "xavier_uniform"]
                        .map(String::from)
                        .to_vec(),
                ),
            ),
        ];
        let conditionals = vec![Conditional {
            param: "train.reg.weight".into(),
            when: "train.reg.enabled".into(),
            equals: "true".into(),
        }];
        SearchSpace::new(params, conditionals).expect("default space is valid")
    }

    /// Parses the `param.<name>.<attr> = value` space-file dialect.
    pub fn parse_str(text: &str) -> Result<SearchSpace, HpoError> {
        #[derive(Default)]
        struct Partial {
            kind: Option<String>,
            values: Option<String>,
            lo: Option<String>,
            hi: Option<String>,
            scale: Option<String>,
            active_when: Option<String>,
        }
        let mut order: Vec<String> = Vec::new();
        let mut partials: BTreeMap<String, Partial> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HpoError::Space(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let rest = key.strip_prefix("param.").ok_or_else(|| {
                HpoError::Space(format!("line {}: keys start with `param.`", lineno + 1))
            })?;
            let (name, attr) = rest.rsplit_once('.').ok_or_else(|| {
                HpoError::Space(format!("line {}: expected param.<name>.<attr>", lineno + 1))
            })?;
            if !partials.contains_key(name) {
                order.push(name.to_string());
            }
            let slot = partials.entry(name.to_string()).or_default();
            match attr {
                "type" => slot.kind = Some(value.to_string()),
                "values" => slot.values = Some(value.to_string()),
                "lo" => slot.lo = Some(value.to_string()),
                "hi" => slot.hi = Some(value.to_string()),
                "scale" => slot.scale = Some(value.to_string()),
                "active_when" => slot.active_when = Some(value.to_string()),
                other => {
                    return Err(HpoError::Space(format!(
                        "line {}: unknown attribute {other:?}",
                        lineno + 1
                    )))
                }
            }
        }

        let parse_scale = |s: Option<&str>, name: &str| -> Result<Scale, HpoError> {
            match s.unwrap_or("linear") {
                "linear" => Ok(Scale::Linear),
                "log" => Ok(Scale::Log),
                "log2" => Ok(Scale::Log2),
                other => Err(HpoError::Space(format!("{name}: unknown scale {other:?}"))),
            }
        };

        let mut params = Vec::new();
        let mut conditionals = Vec::new();
        for name in order {
            let p = &partials[&name];
            let kind = p
                .kind
                .as_deref()
                .ok_or_else(|| HpoError::Space(format!("{name}: missing type")))?;
            let domain = match kind {
                "categorical" => {
                    let values = p
                        .values
                        .as_deref()
                        .ok_or_else(|| HpoError::Space(format!("{name}: missing values")))?;
                    Domain::Categorical(values.split(',').map(|v| v.trim().to_string()).collect())
                }
                "int" | "float" => {
                    let lo =
                        p.lo.as_deref()
                            .ok_or_else(|| HpoError::Space(format!("{name}: missing lo")))?;
                    let hi =
                        p.hi.as_deref()
                            .ok_or_else(|| HpoError::Space(format!("{name}: missing hi")))?;
                    let scale = parse_scale(p.scale.as_deref(), &name)?;
                    if kind == "int" {
                        Domain::IntRange {
                            lo: lo
                                .parse()
                                .map_err(|_| HpoError::Space(format!("{name}: bad lo {lo:?}")))?,
                            hi: hi
                                .parse()
                                .map_err(|_| HpoError::Space(format!("{name}: bad hi {hi:?}")))?,
                            scale,
                        }
                    } else {
                        Domain::FloatRange {
                            lo: lo
                                .parse()
                                .map_err(|_| HpoError::Space(format!("{name}: bad lo {lo:?}")))?,
                            hi: hi
                                .parse()
                                .map_err(|_| HpoError::Space(format!("{name}: bad hi {hi:?}")))?,
                            scale,
                        }
                    }
                }
                other => return Err(HpoError::Space(format!("{name}: unknown type {other:?}"))),
            };
            if let Some(cond) = &p.active_when {
                let (when, equals) = cond.split_once('=').ok_or_else(|| {
                    HpoError::Space(format!("{name}: active_when expects <param>=<value>"))
                })?;
                conditionals.push(Conditional {
                    param: name.clone(),
                    when: when.trim().to_string(),
                    equals: equals.trim().to_string(),
                });
            }
            params.push((name, domain));
        }
        SearchSpace::new(params, conditionals)
    }
}
