//! Sparse optimizers.
//!
//! Only rows touched by a batch are updated, and the bias-correction step
//! counters of Adam/Adamax are kept per row so rarely-touched embeddings do
//! not over-decay. Slot state lives in dense matrices sized like the
//! parameters; untouched rows keep their bits.

use super::config::{OptimizerKind, OptimizerSpec};
use super::loss::SparseGrads;
use super::TrainError;
use crate::checkpoint::{matrix_to_array, Array, ArrayData, Container};
use crate::models::{Matrix, ModelParams, Real};

struct Slots<F> {
    a: Matrix<F>,
    b: Matrix<F>,
    steps: Vec<u64>,
}

pub struct Optimizer<F> {
    spec: OptimizerSpec,
    lr: f64,
    entity: Slots<F>,
    relation: Slots<F>,
}

fn needs_second_slot(kind: OptimizerKind) -> bool {
    matches!(
        kind,
        OptimizerKind::Adadelta | OptimizerKind::Adam | OptimizerKind::Adamax
    )
}

impl<F: Real> Optimizer<F> {
    pub fn new(spec: OptimizerSpec, n_entities: usize, n_relations: usize, dim: usize) -> Self {
        let make = |rows: usize| {
            let first = if spec.kind == OptimizerKind::Sgd {
                Matrix::zeros(0, 0)
            } else {
                Matrix::zeros(rows, dim)
            };
            let second = if needs_second_slot(spec.kind) {
                Matrix::zeros(rows, dim)
            } else {
                Matrix::zeros(0, 0)
            };
            let steps = if matches!(spec.kind, OptimizerKind::Adam | OptimizerKind::Adamax) {
                vec![0; rows]
            } else {
                Vec::new()
            };
            Slots {
                a: first,
                b: second,
                steps,
            }
        };
        Optimizer {
            spec,
            lr: spec.learning_rate,
            entity: make(n_entities),
            relation: make(n_relations),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    /// Applies one update. Rows not present in `grads` are untouched
    /// bit-for-bit.
    pub fn step(
        &mut self,
        params: &mut ModelParams<F>,
        grads: &SparseGrads<F>,
    ) -> Result<(), TrainError> {
        let mut entity_ids: Vec<u32> = grads.entities.keys().copied().collect();
        entity_ids.sort_unstable();
        for id in entity_ids {
            let g = &grads.entities[&id];
            check_finite(g, "entity", id)?;
            update_row(
                &self.spec,
                self.lr,
                params.entities.row_mut(id as usize),
                g,
                &mut self.entity,
                id as usize,
            );
        }
        let mut relation_ids: Vec<u32> = grads.relations.keys().copied().collect();
        relation_ids.sort_unstable();
        for id in relation_ids {
            let g = &grads.relations[&id];
            check_finite(g, "relation", id)?;
            update_row(
                &self.spec,
                self.lr,
                params.relations.row_mut(id as usize),
                g,
                &mut self.relation,
                id as usize,
            );
        }
        Ok(())
    }

    /// Serialises slot state into a checkpoint container.
    pub fn save_slots(&self, c: &mut Container) {
        let names: &[&str] = match self.spec.kind {
            OptimizerKind::Sgd => &[],
            OptimizerKind::Adagrad => &["acc"],
            OptimizerKind::Adadelta => &["avg_sq_grad", "avg_sq_update"],
            OptimizerKind::Adam => &["m", "v"],
            OptimizerKind::Adamax => &["m", "u"],
        };
        for (group, slots) in [("entity", &self.entity), ("relation", &self.relation)] {
            for (i, name) in names.iter().enumerate() {
                let m = if i == 0 { &slots.a } else { &slots.b };
                c.insert(format!("opt_{group}_{name}"), matrix_to_array(m));
            }
            if !slots.steps.is_empty() {
                c.insert(
                    format!("opt_{group}_t"),
                    Array::new(vec![slots.steps.len()], ArrayData::U64(slots.steps.clone())),
                );
            }
        }
    }
}

fn check_finite<F: Real>(g: &[F], kind: &'static str, id: u32) -> Result<(), TrainError> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(TrainError::NumericalFault(format!(
            "{kind} row {id} gradient"
        )));
    }
    Ok(())
}

fn update_row<F: Real>(
    spec: &OptimizerSpec,
    lr: f64,
    theta: &mut [F],
    g: &[F],
    slots: &mut Slots<F>,
    row: usize,
) {
    let alpha = F::from_f64(lr);
    let eps = F::from_f64(spec.epsilon);
    match spec.kind {
        OptimizerKind::Sgd => {
            for i in 0..theta.len() {
                theta[i] = theta[i] - alpha * g[i];
            }
        }
        OptimizerKind::Adagrad => {
            let acc = slots.a.row_mut(row);
            for i in 0..theta.len() {
                acc[i] = acc[i] + g[i] * g[i];
                theta[i] = theta[i] - alpha * g[i] / (acc[i].sqrt() + eps);
            }
        }
        OptimizerKind::Adadelta => {
            let rho = F::from_f64(spec.rho);
            let one_m_rho = F::one() - rho;
            for i in 0..theta.len() {
                let eg2 = slots.a.row_mut(row);
                eg2[i] = rho * eg2[i] + one_m_rho * g[i] * g[i];
                let eg2_i = eg2[i];
                let ed2 = slots.b.row_mut(row);
                let delta = g[i] * (ed2[i] + eps).sqrt() / (eg2_i + eps).sqrt();
                ed2[i] = rho * ed2[i] + one_m_rho * delta * delta;
                theta[i] = theta[i] - alpha * delta;
            }
        }
        OptimizerKind::Adam => {
            slots.steps[row] += 1;
            let t = slots.steps[row] as i32;
            let beta1 = F::from_f64(spec.beta1);
            let beta2 = F::from_f64(spec.beta2);
            let bc1 = F::one() - F::from_f64(spec.beta1).powi(t);
            let bc2 = F::one() - F::from_f64(spec.beta2).powi(t);
            for i in 0..theta.len() {
                let m = slots.a.row_mut(row);
                m[i] = beta1 * m[i] + (F::one() - beta1) * g[i];
                let m_hat = m[i] / bc1;
                let v = slots.b.row_mut(row);
                v[i] = beta2 * v[i] + (F::one() - beta2) * g[i] * g[i];
                let v_hat = v[i] / bc2;
                theta[i] = theta[i] - alpha * m_hat / (v_hat.sqrt() + eps);
            }
        }
        OptimizerKind::Adamax => {
            slots.steps[row] += 1;
            let t = slots.steps[row] as i32;
            let beta1 = F::from_f64(spec.beta1);
            let beta2 = F::from_f64(spec.beta2);
            let bc1 = F::one() - F::from_f64(spec.beta1).powi(t);
            for i in 0..theta.len() {
                let m = slots.a.row_mut(row);
                m[i] = beta1 * m[i] + (F::one() - beta1) * g[i];
                let m_i = m[i];
                let u = slots.b.row_mut(row);
                u[i] = (beta2 * u[i]).max(g[i].abs());
                theta[i] = theta[i] - alpha * m_i / (bc1 * (u[i] + eps));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Family, ModelSpec};
    use std::collections::HashMap;

    fn one_row_params(theta: f64) -> ModelParams<f64> {
        ModelParams {
            spec: ModelSpec::new(Family::DistMult, 2).unwrap(),
            entities: Matrix::from_vec(1, 2, vec![theta, theta]),
            relations: Matrix::from_vec(1, 2, vec![0.0, 0.0]),
        }
    }

    fn grads_for(id: u32, g: Vec<f64>) -> SparseGrads<f64> {
        let mut grads = SparseGrads::default();
        grads.entities.insert(id, g);
        grads
    }

    fn spec(kind: OptimizerKind, lr: f64) -> OptimizerSpec {
        OptimizerSpec {
            kind,
            learning_rate: lr,
            ..OptimizerSpec::default()
        }
    }

    #[test]
    fn sgd_step() {
        let mut params = one_row_params(1.0);
        let mut opt = Optimizer::new(spec(OptimizerKind::Sgd, 0.1), 1, 1, 2);
        opt.step(&mut params, &grads_for(0, vec![2.0, 2.0]))
            .unwrap();
        assert!((params.entities.row(0)[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_closed_form() {
        let mut params = one_row_params(0.0);
        let mut opt = Optimizer::new(spec(OptimizerKind::Adam, 0.011), 1, 1, 2);
        opt.step(&mut params, &grads_for(0, vec![1.0, 1.0]))
            .unwrap();
        // m_hat = v_hat = 1 -> update = -lr / (1 + eps)
        let expected = -0.011 / (1.0 + 1e-8);
        assert!((params.entities.row(0)[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn adagrad_two_steps() {
        let mut params = one_row_params(0.0);
        let mut opt = Optimizer::new(spec(OptimizerKind::Adagrad, 1.0), 1, 1, 2);
        opt.step(&mut params, &grads_for(0, vec![1.0, 0.0]))
            .unwrap();
        let after_one = -1.0 / (1.0 + 1e-8);
        assert!((params.entities.row(0)[0] - after_one).abs() < 1e-12);
        opt.step(&mut params, &grads_for(0, vec![1.0, 0.0]))
            .unwrap();
        let after_two = after_one - 1.0 / (2.0f64.sqrt() + 1e-8);
        assert!((params.entities.row(0)[0] - after_two).abs() < 1e-12);
    }

    #[test]
    fn untouched_rows_bit_identical() {
        for kind in [
            OptimizerKind::Sgd,
            OptimizerKind::Adagrad,
            OptimizerKind::Adadelta,
            OptimizerKind::Adam,
            OptimizerKind::Adamax,
        ] {
            let mut params = ModelParams {
                spec: ModelSpec::new(Family::DistMult, 2).unwrap(),
                entities: Matrix::from_vec(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]),
                relations: Matrix::from_vec(1, 2, vec![0.7, 0.8]),
            };
            let before_row2 = params.entities.row(2).to_vec();
            let before_rel = params.relations.row(0).to_vec();
            let mut opt = Optimizer::new(spec(kind, 0.5), 3, 1, 2);
            let mut grads = SparseGrads::default();
            grads.entities = HashMap::from([(0u32, vec![1.0, -1.0]), (1u32, vec![0.5, 0.5])]);
            opt.step(&mut params, &grads).unwrap();
            assert_eq!(params.entities.row(2), before_row2.as_slice(), "{kind:?}");
            assert_eq!(params.relations.row(0), before_rel.as_slice(), "{kind:?}");
            assert_ne!(params.entities.row(0), &[0.1, 0.2]);
        }
    }

    #[test]
    fn per_row_bias_correction_counts_touches() {
        // Row 0 stepped twice, row 1 once: row 1's first step must use t=1.
        let mut params = ModelParams {
            spec: ModelSpec::new(Family::DistMult, 2).unwrap(),
            entities: Matrix::zeros(2, 2),
            relations: Matrix::zeros(1, 2),
        };
        let mut opt = Optimizer::new(spec(OptimizerKind::Adam, 0.011), 2, 1, 2);
        opt.step(&mut params, &grads_for(0, vec![1.0, 1.0]))
            .unwrap();
        opt.step(&mut params, &grads_for(0, vec![1.0, 1.0]))
            .unwrap();
        opt.step(&mut params, &grads_for(1, vec![1.0, 1.0]))
            .unwrap();
        let first_step = -0.011 / (1.0 + 1e-8);
        assert!((params.entities.row(1)[0] - first_step).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_reports_row() {
        let mut params = one_row_params(0.0);
        let mut opt = Optimizer::new(spec(OptimizerKind::Sgd, 0.1), 1, 1, 2);
        let err = opt
            .step(&mut params, &grads_for(0, vec![f64::NAN, 0.0]))
            .unwrap_err();
        match err {
            TrainError::NumericalFault(msg) => assert!(msg.contains("row 0")),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
