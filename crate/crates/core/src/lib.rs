//! Triplet probability embedding (TPE) for deep feature vectors.
//!
//! The crate is organised around the pipeline that takes labeled feature
//! vectors to a discriminative low-dimensional embedding and evaluates it:
//!
//! * [`data`]: feature records, datasets, file formats, and a seeded
//!   synthetic generator with subject/media structure.
//! * [`embedding`]: the projection matrix, PCA initialization, the triplet
//!   probability objective and its gradient, hard-negative sampling, and
//!   SGD training for both TPE and the hinge-loss TDE baseline.
//! * [`pooling`]: average and media pooling of multi-item templates.
//! * [`verify`]: cosine scoring, ROC/EER/AUC/FNMR@FMR, CMC and TPIR@FPIR,
//!   and the accuracy threshold.
//! * [`cluster`]: average-linkage agglomerative clustering with replayable
//!   merge history, pairwise precision/recall/F1, cutoff learning, pruning
//!   and a k-means baseline.
//! * [`repro`]: seeded end-to-end experiments on synthetic data.

pub mod cluster;
pub mod data;
pub mod embedding;
pub mod error;
pub mod pooling;
pub mod repro;
pub mod verify;

pub use error::{Error, Result};
