//! Loss evaluation and the sparse backward pass.
//!
//! Candidate scores inside a row are linear in the candidate embedding
//! (`score = coeff . candidate`), so the backward pass needs one coefficient
//! vector per row plus the gradient-weighted candidate sum. Dropout applies
//! to the looked-up anchor and relation embeddings only (candidate tables
//! stay intact); masks scale surviving components by 1/(1-p), and the same
//! mask chains the gradient back to the stored parameters.
//!
//! All reductions run in a fixed order, so a fixed seed gives bit-identical
//! losses and gradients.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use super::config::LossSpec;
use super::strategy::{Candidates, TargetBatch, TargetRow};
use super::TrainError;
use crate::models::{self, Matrix, ModelParams, Real};

#[derive(Clone, Debug)]
pub struct LossOptions {
    pub dropout_entity: f64,
    pub dropout_relation: f64,
    pub reg_weight: f64,
    pub reg_exponent: i32,
}

impl Default for LossOptions {
    fn default() -> Self {
        LossOptions {
            dropout_entity: 0.0,
            dropout_relation: 0.0,
            reg_weight: 0.0,
            reg_exponent: 2,
        }
    }
}

/// Gradients for the parameter rows a batch touched.
#[derive(Clone, Debug, Default)]
pub struct SparseGrads<F> {
    pub entities: HashMap<u32, Vec<F>>,
    pub relations: HashMap<u32, Vec<F>>,
}

impl<F: Real> SparseGrads<F> {
    fn entity_row(&mut self, id: u32, dim: usize) -> &mut Vec<F> {
        self.entities
            .entry(id)
            .or_insert_with(|| vec![F::zero(); dim])
    }

    fn relation_row(&mut self, id: u32, dim: usize) -> &mut Vec<F> {
        self.relations
            .entry(id)
            .or_insert_with(|| vec![F::zero(); dim])
    }
}

#[inline]
fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// ln(1 + e^x), computed without overflow.
#[inline]
fn softplus<F: Real>(x: F) -> F {
    x.max(F::zero()) + (-(x.abs())).exp().ln_1p()
}

fn dropout_mask<F: Real>(dim: usize, p: f64, rng: &mut ChaCha20Rng) -> Vec<F> {
    let scale = F::from_f64(1.0 / (1.0 - p));
    (0..dim)
        .map(|_| {
            if rng.random::<f64>() < p {
                F::zero()
            } else {
                scale
            }
        })
        .collect()
}

struct PreparedRow<F> {
    anchor_vec: Vec<F>,
    relation_vec: Vec<F>,
    anchor_mask: Option<Vec<F>>,
    relation_mask: Option<Vec<F>>,
    scores: Vec<F>,
    is_positive: Vec<bool>,
}

fn candidate_count<F: Real>(row: &TargetRow, params: &ModelParams<F>) -> usize {
    match &row.candidates {
        Candidates::All => params.entity_count(),
        Candidates::Listed(c) => c.len(),
    }
}

fn prepare_row<F: Real>(
    params: &ModelParams<F>,
    row: &TargetRow,
    opts: &LossOptions,
    rng: &mut ChaCha20Rng,
) -> PreparedRow<F> {
    let dim = params.spec.dim;
    let mut anchor_vec = params.entities.row(row.anchor.idx()).to_vec();
    let mut relation_vec = params.relations.row(row.relation.idx()).to_vec();
    let anchor_mask = (opts.dropout_entity > 0.0).then(|| {
        let mask = dropout_mask::<F>(dim, opts.dropout_entity, rng);
        for (v, m) in anchor_vec.iter_mut().zip(&mask) {
            *v = *v * *m;
        }
        mask
    });
    let relation_mask = (opts.dropout_relation > 0.0).then(|| {
        let mask = dropout_mask::<F>(dim, opts.dropout_relation, rng);
        for (v, m) in relation_vec.iter_mut().zip(&mask) {
            *v = *v * *m;
        }
        mask
    });

    let mut coeff = vec![F::zero(); dim];
    models::candidate_coeff(
        &params.spec,
        row.side,
        &anchor_vec,
        &relation_vec,
        &mut coeff,
    );
    let n_cand = candidate_count(row, params);
    let mut scores = Vec::with_capacity(n_cand);
    match &row.candidates {
        Candidates::All => {
            for j in 0..n_cand {
                scores.push(dot(&coeff, params.entities.row(j)));
            }
        }
        Candidates::Listed(cands) => {
            for c in cands {
                scores.push(dot(&coeff, params.entities.row(c.idx())));
            }
        }
    }
    let mut is_positive = vec![false; n_cand];
    for &p in &row.positives {
        is_positive[p as usize] = true;
    }
    PreparedRow {
        anchor_vec,
        relation_vec,
        anchor_mask,
        relation_mask,
        scores,
        is_positive,
    }
}

#[inline]
fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    let mut acc = F::zero();
    for i in 0..a.len() {
        acc = acc + a[i] * b[i];
    }
    acc
}

/// Computes the batch loss and the gradients of every touched embedding row.
///
/// Means are taken over all candidate entries (BCE, soft margin), over rows
/// (KL cross-entropy) or over positive-negative pairs (margin ranking).
pub fn loss_value_and_grads<F: Real>(
    params: &ModelParams<F>,
    targets: &TargetBatch,
    loss: &LossSpec,
    opts: &LossOptions,
    rng: &mut ChaCha20Rng,
) -> Result<(F, SparseGrads<F>), TrainError> {
    if targets.rows.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let dim = params.spec.dim;

    let prepared: Vec<PreparedRow<F>> = targets
        .rows
        .iter()
        .map(|row| prepare_row(params, row, opts, rng))
        .collect();
    for (k, prep) in prepared.iter().enumerate() {
        if prep.scores.iter().any(|s| !s.is_finite()) {
            return Err(TrainError::NumericalFault(format!(
                "non-finite candidate score in batch row {k}"
            )));
        }
    }

    // Normaliser for the mean, depending on the loss's unit of account.
    let denom: f64 = match loss {
        LossSpec::BceWithLogits | LossSpec::SoftMargin => {
            prepared.iter().map(|r| r.scores.len()).sum::<usize>() as f64
        }
        LossSpec::KlSoftmax => prepared.len() as f64,
        LossSpec::MarginRanking { .. } => prepared
            .iter()
            .map(|r| {
                let pos = r.is_positive.iter().filter(|&&b| b).count();
                pos * (r.scores.len() - pos)
            })
            .sum::<usize>() as f64,
    };
    let inv = F::from_f64(if denom > 0.0 { 1.0 / denom } else { 0.0 });

    let mut raw_loss = F::zero();
    let mut grads = SparseGrads::default();
    let mut weighted_sum = vec![F::zero(); dim];
    let mut coeff = vec![F::zero(); dim];
    let mut anchor_grad = vec![F::zero(); dim];
    let mut relation_grad = vec![F::zero(); dim];

    for (row, prep) in targets.rows.iter().zip(&prepared) {
        // d(raw loss)/d(score_j), before the 1/denom scale.
        let mut g = vec![F::zero(); prep.scores.len()];
        match loss {
            LossSpec::BceWithLogits => {
                for (j, (&x, &pos)) in prep.scores.iter().zip(&prep.is_positive).enumerate() {
                    let y = if pos { F::one() } else { F::zero() };
                    raw_loss = raw_loss + softplus(x) - y * x;
                    g[j] = sigmoid(x) - y;
                }
            }
            LossSpec::KlSoftmax => {
                let pos_count = prep.is_positive.iter().filter(|&&b| b).count();
                if pos_count == 0 {
                    continue;
                }
                let p_val = F::from_f64(1.0 / pos_count as f64);
                let max = prep.scores.iter().cloned().fold(F::neg_infinity(), F::max);
                let mut z = F::zero();
                for &x in &prep.scores {
                    z = z + (x - max).exp();
                }
                let log_z = z.ln() + max;
                for (j, (&x, &pos)) in prep.scores.iter().zip(&prep.is_positive).enumerate() {
                    let q = (x - log_z).exp();
                    let p = if pos { p_val } else { F::zero() };
                    if pos {
                        raw_loss = raw_loss - p * (x - log_z);
                    }
                    g[j] = q - p;
                }
            }
            LossSpec::MarginRanking { margin } => {
                let m = F::from_f64(*margin);
                for (jp, &pos) in prep.is_positive.iter().enumerate() {
                    if !pos {
                        continue;
                    }
                    let xp = prep.scores[jp];
                    for (jn, &neg_pos) in prep.is_positive.iter().enumerate() {
                        if neg_pos {
                            continue;
                        }
                        let v = m - xp + prep.scores[jn];
                        if v > F::zero() {
                            raw_loss = raw_loss + v;
                            g[jp] = g[jp] - F::one();
                            g[jn] = g[jn] + F::one();
                        }
                    }
                }
            }
            LossSpec::SoftMargin => {
                for (j, (&x, &pos)) in prep.scores.iter().zip(&prep.is_positive).enumerate() {
                    let y = if pos { F::one() } else { -F::one() };
                    raw_loss = raw_loss + softplus(-y * x);
                    g[j] = -y * sigmoid(-y * x);
                }
            }
        }

        // Backward: candidate rows take g_j * coeff; the anchor and relation
        // take the bilinear gradients of the weighted candidate sum.
        models::candidate_coeff(
            &params.spec,
            row.side,
            &prep.anchor_vec,
            &prep.relation_vec,
            &mut coeff,
        );
        for w in weighted_sum.iter_mut() {
            *w = F::zero();
        }
        let touch = |grads: &mut SparseGrads<F>, weighted_sum: &mut [F], cand_id: u32, gj: F| {
            if gj == F::zero() {
                return;
            }
            let gj = gj * inv;
            let cand_row = params.entities.row(cand_id as usize);
            for i in 0..dim {
                weighted_sum[i] = weighted_sum[i] + gj * cand_row[i];
            }
            let out = grads.entity_row(cand_id, dim);
            for i in 0..dim {
                out[i] = out[i] + gj * coeff[i];
            }
        };
        match &row.candidates {
            Candidates::All => {
                for (j, &gj) in g.iter().enumerate() {
                    touch(&mut grads, &mut weighted_sum, j as u32, gj);
                }
            }
            Candidates::Listed(cands) => {
                for (j, &gj) in g.iter().enumerate() {
                    touch(&mut grads, &mut weighted_sum, cands[j].0, gj);
                }
            }
        }
        models::anchor_relation_grads(
            &params.spec,
            row.side,
            &prep.anchor_vec,
            &prep.relation_vec,
            &weighted_sum,
            &mut anchor_grad,
            &mut relation_grad,
        );
        if let Some(mask) = &prep.anchor_mask {
            for (v, m) in anchor_grad.iter_mut().zip(mask) {
                *v = *v * *m;
            }
        }
        if let Some(mask) = &prep.relation_mask {
            for (v, m) in relation_grad.iter_mut().zip(mask) {
                *v = *v * *m;
            }
        }
        let out = grads.entity_row(row.anchor.0, dim);
        for i in 0..dim {
            out[i] = out[i] + anchor_grad[i];
        }
        let out = grads.relation_row(row.relation.0, dim);
        for i in 0..dim {
            out[i] = out[i] + relation_grad[i];
        }
    }

    let mut total = raw_loss * inv;

    // Lp penalty over every embedding row the batch touched.
    if opts.reg_weight > 0.0 {
        let w = F::from_f64(opts.reg_weight);
        let p = opts.reg_exponent;
        let pf = F::from_f64(p as f64);
        let mut entity_keys: Vec<u32> = grads.entities.keys().copied().collect();
        entity_keys.sort_unstable();
        let mut relation_keys: Vec<u32> = grads.relations.keys().copied().collect();
        relation_keys.sort_unstable();
        let mut penalize = |vals: &[F], grad: &mut [F]| {
            for i in 0..vals.len() {
                let v = vals[i];
                let a = v.abs();
                total = total + w * a.powi(p);
                let mag = if p == 1 { F::one() } else { a.powi(p - 1) };
                grad[i] = grad[i] + w * pf * mag * v.signum();
            }
        };
        for id in entity_keys {
            let vals = params.entities.row(id as usize).to_vec();
            penalize(&vals, grads.entities.get_mut(&id).unwrap());
        }
        for id in relation_keys {
            let vals = params.relations.row(id as usize).to_vec();
            penalize(&vals, grads.relations.get_mut(&id).unwrap());
        }
    }

    Ok((total, grads))
}

/// Total loss only, for finite-difference checks.
pub fn loss_value<F: Real>(
    params: &ModelParams<F>,
    targets: &TargetBatch,
    loss: &LossSpec,
    opts: &LossOptions,
    rng: &mut ChaCha20Rng,
) -> Result<F, TrainError> {
    loss_value_and_grads(params, targets, loss, opts, rng).map(|(l, _)| l)
}

/// Applies gradients to a scratch parameter copy; test helper for
/// optimizer-facing code lives in the optimizer module instead.
#[allow(dead_code)]
fn _shape_check<F: Real>(_: &Matrix<F>) {}
