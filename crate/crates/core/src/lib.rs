//! Unsupervised out-of-distribution scoring over feature embeddings.
//!
//! Detectors are fitted on in-distribution reference embeddings and score
//! query embeddings with the convention that a higher score is more
//! out-of-distribution:
//!
//! * [`lof`]: Local Outlier Factor in novelty mode, cosine or Euclidean.
//! * [`ssd`]: Mahalanobis distance to a single fitted Gaussian.
//!
//! [`experiment`] runs fit/score/AUROC evaluations over a manifest-aligned
//! embedding matrix, [`split`] produces leakage-free splits, and
//! [`contrastive`] plus [`encoder`] provide a small NT-Xent training loop for
//! end-to-end tests on synthetic data.

mod codec;

pub mod auroc;
pub mod contrastive;
pub mod distance;
pub mod embedding;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod lof;
pub mod manifest;
pub mod parallel;
pub mod protocols;
pub mod split;
pub mod ssd;
pub mod synthetic;

pub use auroc::{auroc, ScoreSet};
pub use distance::{cosine_distance, Metric};
pub use embedding::{load_embeddings, save_embeddings, EmbeddingFormat, EmbeddingMatrix};
pub use error::{OodError, Result};
pub use experiment::{k_sweep, run_experiment, DetectorConfig, EvalReport, ExperimentConfig};
pub use lof::{fit_lof, knn_query, lof_score, lof_score_batch, LofModel};
pub use manifest::{filter_subset, Filter, SampleManifest, SampleRecord, Split};
pub use split::{stratified_group_split, SplitAssignment, SplitRatios};
pub use ssd::{fit_gaussian, mahalanobis_score, mahalanobis_score_batch, GaussianStats};
