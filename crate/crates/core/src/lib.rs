//! Tensor-factorisation knowledge-graph embeddings for polypharmacy
//! side-effect prediction.
//!
//! The crate covers the whole pipeline:
//!
//! - [`kg`] — integer-indexed triple storage with lookup indexes.
//! - [`ingest`] — source-table parsing, the two graph constructions
//!   (self-loop edges vs. drug feature vectors), holdout splitting,
//!   feature reduction, and the on-disk dataset format.
//! - [`models`] — DistMult / ComplEx / SimplE scorers with analytic
//!   gradients and embedding initialisers.
//! - [`train`] — losses, training strategies, sparse optimizers,
//!   early stopping and the training loop.
//! - [`eval`] — filtered entity ranking (MRR, hits@k) and per-relation
//!   classification metrics (AUROC, AUPRC, AP@50).
//! - [`hpo`] — two-phase hyperparameter search: Sobol design followed by
//!   Gaussian-process Bayesian optimisation with expected improvement.
//! - [`cli`] — the `kgemb` command-line surface.
//!
//! Everything is seeded and deterministic: the same inputs and seeds
//! produce byte-identical datasets, checkpoints and reports.

pub mod checkpoint;
pub mod cli;
pub mod eval;
pub mod fixture;
pub mod hpo;
pub mod ingest;
pub mod kg;
pub mod models;
pub mod train;

pub use kg::{EntityId, RelationId, Triple, TripleStore, Vocabulary};
pub use models::{Family, ModelParams, ModelSpec};
pub use train::TrainConfig;
