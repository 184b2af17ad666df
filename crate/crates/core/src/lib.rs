//! Sparse coding of handwritten digits and the sensitivity of sparse codes to
//! small image perturbations.
//!
//! * [`dataset`]: MNIST IDX ingest, splits, labeled subsets, synthetic digits.
//! * [`sparse_coding`]: dictionary learning and exact LASSO codes.
//! * [`perturbations`]: noise, swap and elastic-distortion directions.
//! * [`sensitivity`]: active Jacobians, gain spectra, filter-pair statistics,
//!   and sensitivity histograms.
//! * [`classifiers`]: pixel, sparse, random-feature and trained-MLP
//!   representations evaluated by 1-NN and logistic regression.
//! * [`cli`]: experiment configuration, checkpoints, reports and the pipeline
//!   behind the `sparsecode` binary.

pub mod classifiers;
pub mod cli;
pub mod dataset;
pub mod linalg;
pub mod perturbations;
pub mod rng;
pub mod sensitivity;
pub mod sparse_coding;

pub use dataset::{ImageSet, LabeledSubset, Split};
pub use sparse_coding::{Dictionary, SparseCode};
