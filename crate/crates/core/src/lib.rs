//! Gene-pair interaction prediction with a two-branch (convolutional +
//! feed-forward) network trained from expression profiles alone.
//!
//! The crate is organised as a pipeline:
//!
//! * [`data`]: shared domain types (genes, expression matrices, pairs).
//! * [`ingest`]: TSV parsing, negative sampling and synthetic datasets.
//! * [`preprocess`]: normalization, undersampling, splitting, featurization.
//! * [`autonet`]: a small differentiable network engine written from scratch.
//! * [`model`]: the two-branch network, its CNN-only ablation and grid search.
//! * [`metrics`]: ROC/PR curves, AUROC, average precision, MCC.
//! * [`trainer`]: training loop, checkpoints, evaluation and the correlation baseline.
//! * [`pipeline`]: run configuration and the end-to-end prepare/train steps.

pub mod autonet;
pub mod data;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod trainer;

pub use data::{
    canonicalize_pair, ExpressionMatrix, GeneId, Label, LabeledDataset, PairExample, PairFeatures,
    Split,
};
pub use error::{Error, Result};
pub use model::{Architecture, GenerConfig, GridSpec, Network};
pub use rng::Rng;
