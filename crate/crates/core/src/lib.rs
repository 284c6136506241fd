//! Pool-based active learning with virtual adversarial perturbations.
//!
//! The crate implements the VAPAL acquisition strategy — represent each
//! unlabeled example by the perturbation of its feature vector that most
//! changes the model's output distribution (in KL divergence), then cluster
//! those perturbations and query the examples nearest to the cluster
//! centers — together with the usual baselines (random, entropy, BADGE) and
//! two VAT-based ablations (`LDS_vec`, `LDR_class`).
//!
//! Everything operates on fixed feature vectors (pre-computed embeddings or
//! synthetic blobs) and a small feed-forward classifier head with exact
//! analytic gradients, so simulations run in seconds and every trajectory is
//! reproducible bit-for-bit from its seeds.
//!
//! Module map:
//! - [`math`]: softmax / KL / entropy / norms on plain `f64` vectors
//! - [`model`]: the classifier head, its gradients, and Adam-style training
//! - [`vat`]: power-iteration virtual adversarial perturbations and LDS/LDR scores
//! - [`clustering`]: Lloyd k-means, k-means++ seeding, nearest-distinct extraction
//! - [`acquisition`]: the strategy zoo selecting `m` example ids per round
//! - [`simulation`]: the acquire/label/retrain/evaluate loop and macro-F1
//! - [`data_io`]: JSONL datasets, synthetic blob generation, results CSV

pub mod acquisition;
pub mod clustering;
pub mod data_io;
mod error;
pub mod math;
pub mod model;
pub mod seed;
pub mod simulation;
pub mod vat;

pub use acquisition::{acquire, badge_embedding, AcquisitionBatch, Strategy};
pub use clustering::{kmeans, kmeans_pp_seeds, nearest_distinct, ClusterResult};
pub use data_io::{load_dataset, synthetic_blobs, write_dataset, write_results, BlobConfig, Dataset, Example};
pub use error::{Error, Result};
pub use math::{entropy, kl_divergence, l2_normalize, softmax, ProbDist};
pub use model::{init_params, predict_proba, train, ModelConfig, ModelParams, TrainConfig};
pub use simulation::{macro_f1, run_simulation, summarize, IterationRecord, RoundSummary, SeedSelection, SimConfig};
pub use vat::{compute_vadv, kl_contribution_vector, ldr_score, lds_score, Perturbation, VatConfig};
