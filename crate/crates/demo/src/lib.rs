//! Browser demo for the kgemb toolkit.
//!
//! Three interactive views, all running the real library code compiled to
//! WebAssembly:
//!
//! - Sobol designs: the low-discrepancy points behind the first search
//!   phase, next to seeded pseudorandom points.
//! - Bayesian optimisation: a 1-D Gaussian-process surrogate with expected
//!   improvement, stepped one trial at a time.
//! - Live training: a small community knowledge graph embedded epoch by
//!   epoch, with loss and holdout AUROC/AUPRC curves.

use wasm_bindgen::prelude::*;

use kgemb::eval;
use kgemb::hpo::{self, Domain, Scale, SearchSpace};
use kgemb::ingest::{
    build_graph, holdout_split, ComboRow, DatasetBundle, GraphVariant, RawRecords,
};
use kgemb::models::{init_params, Family, InitSpec, ModelParams, ModelSpec};
use kgemb::train::{
    assemble_targets, loss_value_and_grads, LossOptions, LossSpec, Optimizer, OptimizerSpec,
    TrainStrategy,
};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// First `n` two-dimensional Sobol points, interleaved `[x0, y0, x1, y1, ..]`.
#[wasm_bindgen]
pub fn sobol_scatter(n: usize) -> Vec<f64> {
    hpo::sobol_points(2, n)
        .map(|points| points.into_iter().flatten().collect())
        .unwrap_or_default()
}

/// `n` seeded uniform points in the unit square, same layout.
#[wasm_bindgen]
pub fn random_scatter(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..2 * n).map(|_| rng.random::<f64>()).collect()
}

fn bo_objective(kind: &str, x: f64) -> f64 {
    match kind {
        // smooth single optimum
        "bump" => (-(x - 0.62) * (x - 0.62) * 30.0).exp(),
        // two peaks of different height
        "twin" => {
            0.9 * (-(x - 0.2) * (x - 0.2) * 200.0).exp() + (-(x - 0.75) * (x - 0.75) * 120.0).exp()
        }
        // wiggly landscape
        _ => 0.5 + 0.4 * (9.0 * x).sin() * (1.0 - x) + 0.3 * x,
    }
}

/// One-dimensional Bayesian-optimisation walkthrough: a short Sobol
/// start-up, then fit-suggest-evaluate steps.
#[wasm_bindgen]
pub struct BoDemo {
    space: SearchSpace,
    objective: String,
    seed: u64,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

#[wasm_bindgen]
impl BoDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(objective: String, seed: u64) -> BoDemo {
        let space = SearchSpace::new(
            vec![(
                "train.dropout.entity".into(),
                Domain::FloatRange {
                    lo: 0.0,
                    hi: 0.99,
                    scale: Scale::Linear,
                },
            )],
            vec![],
        )
        .expect("demo space");
        BoDemo {
            space,
            objective,
            seed,
            xs: Vec::new(),
            ys: Vec::new(),
        }
    }

    /// Runs one more trial and returns the evaluated x.
    pub fn step(&mut self) -> f64 {
        let x = if self.xs.len() < 4 {
            hpo::sobol_points(1, self.xs.len() + 1).expect("1-D sobol")[self.xs.len()][0]
        } else {
            match self.gp() {
                Some(gp) => {
                    let best = self.ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let seed = self.seed ^ ((self.xs.len() as u64) << 8);
                    hpo::suggest_next(&gp, &self.space, best, seed)
                        .map(|p| p[0])
                        .unwrap_or(0.5)
                }
                None => 0.5,
            }
        };
        let y = bo_objective(&self.objective, x);
        self.xs.push(x);
        self.ys.push(y);
        x
    }

    fn gp(&self) -> Option<hpo::GpState> {
        let records: Vec<hpo::TrialRecord> = self
            .xs
            .iter()
            .zip(&self.ys)
            .enumerate()
            .map(|(i, (&x, &y))| {
                let config = self.space.decode_config(&[x]).expect("total decode");
                hpo::TrialRecord {
                    index: i,
                    point: vec![x],
                    config,
                    status: hpo::TrialStatus::Ok,
                    outcome: Some(y),
                    wall_seconds: 0.0,
                }
            })
            .collect();
        hpo::fit_surrogate(&records, &self.space).ok()
    }

    pub fn observed_x(&self) -> Vec<f64> {
        self.xs.clone()
    }

    pub fn observed_y(&self) -> Vec<f64> {
        self.ys.clone()
    }

    /// True objective on a grid (for display).
    pub fn objective_curve(&self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| bo_objective(&self.objective, i as f64 / (n - 1) as f64))
            .collect()
    }

    /// Posterior mean, mean - 2 sigma, mean + 2 sigma and expected
    /// improvement on a grid, concatenated (4 blocks of `n`). Empty until
    /// the surrogate can be fitted.
    pub fn surrogate_curves(&self, n: usize) -> Vec<f64> {
        let Some(gp) = self.gp() else {
            return Vec::new();
        };
        let best = self.ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut mean = Vec::with_capacity(n);
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        let mut acquisition = Vec::with_capacity(n);
        for i in 0..n {
            let x = i as f64 / (n - 1) as f64;
            let features = self.space.gp_encode(&self.space.decode(&[x]));
            let (_, sigma) = gp.posterior(&features);
            let raw = gp.posterior_mean_raw(&features);
            let band = 2.0 * sigma * gp.outcome_scale();
            mean.push(raw);
            lower.push(raw - band);
            upper.push(raw + band);
            acquisition.push(hpo::expected_improvement(&gp, &features, best));
        }
        let mut out = mean;
        out.extend(lower);
        out.extend(upper);
        out.extend(acquisition);
        out
    }
}

fn demo_records(seed: u64) -> RawRecords {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (communities, size, relations, density) = (4usize, 20usize, 4usize, 0.7f64);
    let mut combo = Vec::new();
    for r in 0..relations {
        for c in 0..communities {
            let base = c * size;
            for a in 0..size {
                for b in (a + 1)..size {
                    if rng.random::<f64>() < density {
                        combo.push(ComboRow {
                            drug_a: format!("d{:03}", base + a),
                            drug_b: format!("d{:03}", base + b),
                            se_id: format!("se{r}"),
                            se_name: format!("effect-{r}"),
                        });
                    }
                }
            }
        }
    }
    RawRecords {
        combo,
        ..RawRecords::default()
    }
}

/// Epoch-by-epoch embedding of a small community graph (80 drugs in four
/// communities, four side-effect relations, 10% holdout).
#[wasm_bindgen]
pub struct TrainDemo {
    bundle: DatasetBundle,
    params: ModelParams<f32>,
    optimizer: Optimizer<f32>,
    strategy: TrainStrategy,
    loss: LossSpec,
    shuffle_rng: ChaCha20Rng,
    target_rng: ChaCha20Rng,
    dropout_rng: ChaCha20Rng,
    batch_size: usize,
    losses: Vec<f64>,
    aurocs: Vec<f64>,
    auprcs: Vec<f64>,
    eval_seed: u64,
}

#[wasm_bindgen]
impl TrainDemo {
    /// `family` is one of `distmult`, `complex`, `simple`.
    #[wasm_bindgen(constructor)]
    pub fn new(family: String, dim: usize, lr: f64, seed: u64) -> Result<TrainDemo, JsError> {
        let family = Family::parse(&family).ok_or_else(|| JsError::new("unknown family"))?;
        let spec = ModelSpec::new(family, dim).map_err(|e| JsError::new(&e.to_string()))?;
        let bundle = build_graph(&demo_records(seed), GraphVariant::Selfloops, 0)
            .and_then(|b| holdout_split(b, 0.1, seed))
            .map_err(|e| JsError::new(&e.to_string()))?;
        let init = InitSpec::XavierNormal;
        let params = init_params::<f32>(
            spec,
            bundle.vocabulary.entity_count(),
            bundle.vocabulary.relation_count(),
            &init,
            &init,
            seed,
            None,
        )
        .map_err(|e| JsError::new(&e.to_string()))?;
        let optimizer_spec = OptimizerSpec {
            learning_rate: lr,
            ..OptimizerSpec::default()
        };
        let optimizer = Optimizer::new(
            optimizer_spec,
            bundle.vocabulary.entity_count(),
            bundle.vocabulary.relation_count(),
            spec.dim,
        );
        Ok(TrainDemo {
            bundle,
            params,
            optimizer,
            strategy: TrainStrategy::OneVsAll,
            loss: LossSpec::KlSoftmax,
            shuffle_rng: ChaCha20Rng::seed_from_u64(seed ^ 0x53),
            target_rng: ChaCha20Rng::seed_from_u64(seed ^ 0x4e),
            dropout_rng: ChaCha20Rng::seed_from_u64(seed ^ 0x44),
            batch_size: 512,
            losses: Vec::new(),
            aurocs: Vec::new(),
            auprcs: Vec::new(),
            eval_seed: seed ^ 0xe7a1,
        })
    }

    /// Runs one epoch and assesses the holdout; returns the mean loss.
    pub fn run_epoch(&mut self) -> Result<f64, JsError> {
        let train = &self.bundle.train;
        let mut indices: Vec<usize> = (0..train.len()).collect();
        indices.shuffle(&mut self.shuffle_rng);
        let opts = LossOptions::default();
        let mut total = 0.0f64;
        let mut batches = 0usize;
        for chunk in indices.chunks(self.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| train.triples()[i]).collect();
            let targets = assemble_targets(&self.strategy, &batch, train, &mut self.target_rng);
            let (loss, grads) = loss_value_and_grads(
                &self.params,
                &targets,
                &self.loss,
                &opts,
                &mut self.dropout_rng,
            )
            .map_err(|e| JsError::new(&e.to_string()))?;
            self.optimizer
                .step(&mut self.params, &grads)
                .map_err(|e| JsError::new(&e.to_string()))?;
            total += loss as f64;
            batches += 1;
        }
        let mean = total / batches as f64;
        self.losses.push(mean);
        let report = eval::assess(&self.params, &self.bundle, self.eval_seed)
            .map_err(|e| JsError::new(&e.to_string()))?;
        self.aurocs.push(report.median_auroc);
        self.auprcs.push(report.median_auprc);
        Ok(mean)
    }

    pub fn epochs(&self) -> usize {
        self.losses.len()
    }

    pub fn loss_history(&self) -> Vec<f64> {
        self.losses.clone()
    }

    pub fn auroc_history(&self) -> Vec<f64> {
        self.aurocs.clone()
    }

    pub fn auprc_history(&self) -> Vec<f64> {
        self.auprcs.clone()
    }

    pub fn edge_count(&self) -> usize {
        self.bundle.train.len()
    }

    pub fn holdout_count(&self) -> usize {
        self.bundle.holdout.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sobol_scatter_shape() {
        let pts = sobol_scatter(16);
        assert_eq!(pts.len(), 32);
        assert!(pts.iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn bo_demo_converges_toward_peak() {
        let mut demo = BoDemo::new("bump".into(), 1);
        for _ in 0..14 {
            demo.step();
        }
        let best_idx = demo
            .ys
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!(
            (demo.xs[best_idx] - 0.62).abs() < 0.15,
            "best x {}",
            demo.xs[best_idx]
        );
        let curves = demo.surrogate_curves(50);
        assert_eq!(curves.len(), 200);
    }

    #[test]
    fn train_demo_learns() {
        let mut demo = TrainDemo::new("simple".into(), 32, 0.05, 3).unwrap();
        for _ in 0..8 {
            demo.run_epoch().unwrap();
        }
        assert_eq!(demo.epochs(), 8);
        assert!(demo.loss_history()[7] < demo.loss_history()[0]);
        assert!(demo.auroc_history()[7] > 0.85, "{:?}", demo.auroc_history());
    }
}
