//! Embedding parameter storage, the three tensor-factorisation scorers
//! with analytic gradients, and embedding initialisers.
//!
//! Scores are trilinear forms over entity and relation vectors:
//!
//! - DistMult: `sum_i s[i] * r[i] * o[i]`
//! - ComplEx: `Re(sum_i s_c[i] * r_c[i] * conj(o_c[i]))`, where the complex
//!   vectors take their real part from columns `[0, d/2)` and imaginary part
//!   from `[d/2, d)`.
//! - SimplE: `(sum_i h_s[i] * r_fwd[i] * t_o[i] + sum_i h_o[i] * r_inv[i] * t_s[i]) / 2`,
//!   with entity head/tail halves and relation forward/inverse halves in the
//!   same contiguous-half layout.
//!
//! The half layout is frozen in the checkpoint container so parameters can
//! be exchanged between runs.

mod scoring;

pub(crate) use scoring::{anchor_relation_grads, candidate_coeff};
pub use scoring::{score_against_all, score_gradients, score_triples, ScoreGradients, Side};

use std::collections::HashMap;
use std::fmt;
use std::iter::Sum;

use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, Uniform};
use thiserror::Error;

use crate::kg::EntityId;

/// Standard deviation of the default normal initialiser. Feature-based
/// initialisation rescales to this value so both start points are
/// comparable in magnitude.
pub const DEFAULT_INIT_STD: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("embedding dim {dim} invalid for {family}: {reason}")]
    BadDimension {
        family: Family,
        dim: usize,
        reason: &'static str,
    },
    #[error("feature row for entity {0} has width {1}, expected {2}")]
    DimensionMismatch(u32, usize, usize),
    #[error("non-finite value encountered at {0}")]
    NumericalFault(String),
}

/// Floating-point scalar the pipeline is generic over. Training defaults to
/// `f32`; gradient checks and the acceptance suite run in `f64`.
pub trait Real: Float + Sum + fmt::Debug + fmt::Display + Default + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
    /// Checkpoint dtype tag (1 = f32, 2 = f64).
    fn dtype_code() -> u8;
}

impl Real for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn dtype_code() -> u8 {
        1
    }
}

impl Real for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    fn dtype_code() -> u8 {
        2
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix shape mismatch");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }
}

/// Model family selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    DistMult,
    ComplEx,
    SimplE,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::DistMult => "distmult",
            Family::ComplEx => "complex",
            Family::SimplE => "simple",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        match s.to_ascii_lowercase().as_str() {
            "distmult" => Some(Family::DistMult),
            "complex" => Some(Family::ComplEx),
            "simple" => Some(Family::SimplE),
            _ => None,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Model family plus total embedding width (real numbers per vector).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub family: Family,
    pub dim: usize,
}

impl ModelSpec {
    pub fn new(family: Family, dim: usize) -> Result<Self, ModelError> {
        if dim < 2 {
            return Err(ModelError::BadDimension {
                family,
                dim,
                reason: "dim must be at least 2",
            });
        }
        if matches!(family, Family::ComplEx | Family::SimplE) && dim % 2 != 0 {
            return Err(ModelError::BadDimension {
                family,
                dim,
                reason: "dim must be even (two contiguous halves)",
            });
        }
        Ok(ModelSpec { family, dim })
    }

    /// Width of one half for the two-half families.
    pub fn half(&self) -> usize {
        self.dim / 2
    }
}

/// Embedding initialiser.
#[derive(Clone, Debug, PartialEq)]
pub enum InitSpec {
    Normal {
        std: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    XavierNormal,
    XavierUniform,
    /// Copy provided rows for listed entities; everything else falls back
    /// to Xavier-normal draws.
    FromFeatures,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::Normal {
            std: DEFAULT_INIT_STD,
        }
    }
}

/// Dense entity and relation embeddings for one model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<F> {
    pub spec: ModelSpec,
    pub entities: Matrix<F>,
    pub relations: Matrix<F>,
}

impl<F: Real> ModelParams<F> {
    pub fn entity_count(&self) -> usize {
        self.entities.rows()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.rows()
    }
}

/// Xavier standard deviation for an `n_rows x n_cols` matrix
/// (fan_in = rows, fan_out = cols).
pub fn xavier_std(n_rows: usize, n_cols: usize) -> f64 {
    (2.0 / (n_rows + n_cols) as f64).sqrt()
}

fn fill<F: Real>(m: &mut Matrix<F>, init: &InitSpec, rng: &mut ChaCha20Rng) {
    let (rows, cols) = (m.rows(), m.cols());
    match init {
        InitSpec::Normal { std } => {
            let dist = Normal::new(0.0f64, *std).expect("std > 0");
            for v in m.data_mut() {
                *v = F::from_f64(dist.sample(rng));
            }
        }
        InitSpec::Uniform { lo, hi } => {
            let dist = Uniform::new(*lo, *hi).expect("lo < hi");
            for v in m.data_mut() {
                *v = F::from_f64(dist.sample(rng));
            }
        }
        InitSpec::XavierNormal => {
            let dist = Normal::new(0.0f64, xavier_std(rows, cols)).expect("positive std");
            for v in m.data_mut() {
                *v = F::from_f64(dist.sample(rng));
            }
        }
        InitSpec::XavierUniform => {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            let dist = Uniform::new(-bound, bound).expect("bound > 0");
            for v in m.data_mut() {
                *v = F::from_f64(dist.sample(rng));
            }
        }
        InitSpec::FromFeatures => unreachable!("handled by init_params"),
    }
}

/// Draws seeded, platform-deterministic initial parameters. Entity rows are
/// drawn first, then relation rows, so the relation stream does not depend
/// on how entity values were produced.
///
/// `feature_rows` is required for (and only for) [`InitSpec::FromFeatures`];
/// listed entities copy their row verbatim, all other entities draw
/// Xavier-normal values.
pub fn init_params<F: Real>(
    spec: ModelSpec,
    n_entities: usize,
    n_relations: usize,
    entity_init: &InitSpec,
    relation_init: &InitSpec,
    seed: u64,
    feature_rows: Option<&HashMap<EntityId, Vec<f64>>>,
) -> Result<ModelParams<F>, ModelError> {
    let mut entities = Matrix::zeros(n_entities, spec.dim);
    let mut relations = Matrix::zeros(n_relations, spec.dim);
    let mut ent_rng = ChaCha20Rng::seed_from_u64(seed);
    let mut rel_rng = ChaCha20Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);

    match entity_init {
        InitSpec::FromFeatures => {
            let rows = feature_rows.ok_or(ModelError::DimensionMismatch(0, 0, spec.dim))?;
            let fallback =
                Normal::new(0.0f64, xavier_std(n_entities, spec.dim)).expect("positive std");
            for i in 0..n_entities {
                if let Some(row) = rows.get(&EntityId(i as u32)) {
                    if row.len() != spec.dim {
                        return Err(ModelError::DimensionMismatch(i as u32, row.len(), spec.dim));
                    }
                    for (dst, &src) in entities.row_mut(i).iter_mut().zip(row) {
                        *dst = F::from_f64(src);
                    }
                } else {
                    for dst in entities.row_mut(i).iter_mut() {
                        *dst = F::from_f64(fallback.sample(&mut ent_rng));
                    }
                }
            }
        }
        other => fill(&mut entities, other, &mut ent_rng),
    }
    match relation_init {
        InitSpec::FromFeatures => {
            return Err(ModelError::DimensionMismatch(0, 0, spec.dim));
        }
        other => fill(&mut relations, other, &mut rel_rng),
    }

    Ok(ModelParams {
        spec,
        entities,
        relations,
    })
}

/// Overflow-safe logistic function mapping a score to a probability.
pub fn probability(score: f64) -> f64 {
    if score >= 0.0 {
        1.0 / (1.0 + (-score).exp())
    } else {
        let e = score.exp();
        e / (1.0 + e)
    }
}
