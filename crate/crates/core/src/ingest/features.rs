//! Reduction of drug feature vectors to embedding initialisation points.
//!
//! Columns are mean-centered, then the top-d right singular directions are
//! found by power iteration on the Gram matrix with implicit deflation
//! (tolerance 1e-9 on the singular-value change, at most 1000 iterations
//! per component). Each direction's largest-magnitude entry is made
//! positive, rows are projected onto the directions, and the projections
//! are rescaled so their element-wise standard deviation matches the
//! default random-initialiser standard deviation.

use std::collections::HashMap;

use super::{FeatureMatrix, IngestError};
use crate::kg::EntityId;
use crate::models::DEFAULT_INIT_STD;

#[derive(Clone, Debug)]
pub struct ReduceOptions {
    pub center: bool,
    /// Target element-wise standard deviation of the output; `None` keeps
    /// raw projections.
    pub rescale_to: Option<f64>,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions {
            center: true,
            rescale_to: Some(DEFAULT_INIT_STD),
        }
    }
}

/// Projection of a dense matrix onto its top right singular directions.
#[derive(Clone, Debug)]
pub struct MatrixReduction {
    /// One projected row per input row, `d` values each.
    pub rows: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    /// Right singular directions, one length-`cols` vector per component.
    pub directions: Vec<Vec<f64>>,
    /// Trailing output columns zero-filled because the matrix ran out of
    /// rank.
    pub zero_filled: usize,
}

/// [`MatrixReduction`] plus the drug each row belongs to.
#[derive(Clone, Debug)]
pub struct Reduction {
    pub drug_ids: Vec<EntityId>,
    pub reduction: MatrixReduction,
}

impl Reduction {
    /// Rows keyed by entity, the shape the initialiser consumes.
    pub fn rows_by_entity(&self) -> HashMap<EntityId, Vec<f64>> {
        self.drug_ids
            .iter()
            .zip(&self.reduction.rows)
            .map(|(&id, row)| (id, row.clone()))
            .collect()
    }
}

const TOLERANCE: f64 = 1e-9;
const MAX_ITERATIONS: usize = 1000;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fixed pseudo-random start vector; deterministic without a seed input.
fn start_vector(cols: usize, component: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..cols)
        .map(|i| {
            let bits = splitmix64((component as u64) << 32 | i as u64);
            // map to (-1, 1)
            (bits >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect();
    normalize(&mut v);
    v
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

/// Reduces a dense row-major `rows x cols` matrix to `d` columns.
pub fn reduce_matrix(
    data: &[f64],
    rows: usize,
    cols: usize,
    d: usize,
    opts: &ReduceOptions,
) -> Result<MatrixReduction, IngestError> {
    assert_eq!(data.len(), rows * cols, "matrix shape mismatch");
    if d > rows.min(cols) {
        return Err(IngestError::Features(format!(
            "d = {d} exceeds min(rows, cols) = {}",
            rows.min(cols)
        )));
    }
    let mut x = data.to_vec();
    if opts.center {
        for j in 0..cols {
            let mean = (0..rows).map(|i| x[i * cols + j]).sum::<f64>() / rows as f64;
            for i in 0..rows {
                x[i * cols + j] -= mean;
            }
        }
    }

    // w = X^T (X v) - sum_j lambda_j v_j (v_j . v), the deflated Gram
    // product without forming the Gram matrix.
    let gram_product = |v: &[f64], found: &[(f64, Vec<f64>)], u: &mut [f64], w: &mut [f64]| {
        for ui in u.iter_mut() {
            *ui = 0.0;
        }
        for i in 0..rows {
            let row = &x[i * cols..(i + 1) * cols];
            let mut acc = 0.0;
            for j in 0..cols {
                acc += row[j] * v[j];
            }
            u[i] = acc;
        }
        for wi in w.iter_mut() {
            *wi = 0.0;
        }
        for i in 0..rows {
            let row = &x[i * cols..(i + 1) * cols];
            let ui = u[i];
            for j in 0..cols {
                w[j] += ui * row[j];
            }
        }
        for (lambda, dir) in found {
            let proj: f64 = dir.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            let scale = lambda * proj;
            for j in 0..cols {
                w[j] -= scale * dir[j];
            }
        }
    };

    let mut found: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut singular_values = Vec::with_capacity(d);
    let mut zero_filled = 0;
    let mut u = vec![0.0; rows];
    let mut w = vec![0.0; cols];
    let mut max_sigma: f64 = 0.0;

    for component in 0..d {
        let mut v = start_vector(cols, component);
        let mut prev_sigma = f64::INFINITY;
        let mut lambda = 0.0;
        let mut degenerate = false;
        for _ in 0..MAX_ITERATIONS {
            gram_product(&v, &found, &mut u, &mut w);
            lambda = v.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
            let norm = normalize(&mut w);
            if norm <= f64::EPSILON * cols as f64 {
                degenerate = true;
                break;
            }
            // The value settles before the direction does; require both.
            let drift = v
                .iter()
                .zip(w.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            v.copy_from_slice(&w);
            let sigma = lambda.max(0.0).sqrt();
            if (sigma - prev_sigma).abs() <= TOLERANCE && drift <= TOLERANCE {
                break;
            }
            prev_sigma = sigma;
        }
        let sigma = lambda.max(0.0).sqrt();
        // Rank exhausted: remaining output columns stay zero.
        if degenerate || sigma <= 1e-12 * max_sigma.max(1.0) {
            zero_filled = d - component;
            break;
        }
        max_sigma = max_sigma.max(sigma);
        // Sign convention: largest-magnitude entry positive.
        let mut arg = 0;
        for j in 1..cols {
            if v[j].abs() > v[arg].abs() {
                arg = j;
            }
        }
        if v[arg] < 0.0 {
            for vj in v.iter_mut() {
                *vj = -*vj;
            }
        }
        singular_values.push(sigma);
        found.push((lambda, v));
    }

    let mut out = vec![vec![0.0f64; d]; rows];
    for (c, (_, dir)) in found.iter().enumerate() {
        for i in 0..rows {
            let row = &x[i * cols..(i + 1) * cols];
            out[i][c] = row.iter().zip(dir.iter()).map(|(a, b)| a * b).sum();
        }
    }

    if let Some(target) = opts.rescale_to {
        let count = (rows * d) as f64;
        if count > 0.0 {
            let mean: f64 = out.iter().flatten().sum::<f64>() / count;
            let var: f64 = out
                .iter()
                .flatten()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / count;
            let std = var.sqrt();
            if std > 0.0 {
                let scale = target / std;
                for row in &mut out {
                    for v in row.iter_mut() {
                        *v *= scale;
                    }
                }
            }
        }
    }

    Ok(MatrixReduction {
        rows: out,
        singular_values,
        directions: found.into_iter().map(|(_, v)| v).collect(),
        zero_filled,
    })
}

fn dense_of(features: &FeatureMatrix) -> Vec<f64> {
    let (n, m) = (features.row_count(), features.column_count());
    let mut x = vec![0.0f64; n * m];
    for i in 0..n {
        for &col in features.hot(i) {
            x[i * m + col as usize] = 1.0;
        }
    }
    x
}

/// Centers, reduces and rescales a feature matrix to `d` columns per drug.
pub fn reduce_features(features: &FeatureMatrix, d: usize) -> Result<Reduction, IngestError> {
    reduce_features_with(features, d, &ReduceOptions::default())
}

pub fn reduce_features_with(
    features: &FeatureMatrix,
    d: usize,
    opts: &ReduceOptions,
) -> Result<Reduction, IngestError> {
    let x = dense_of(features);
    let reduction = reduce_matrix(&x, features.row_count(), features.column_count(), d, opts)?;
    Ok(Reduction {
        drug_ids: features.drug_ids().to_vec(),
        reduction,
    })
}
