//! Classify binary files by how well they compress together.
//!
//! The pipeline: ingest labelled files into a [`corpus::CorpusSet`], measure
//! pairwise similarity with the normalised compression distance
//! ([`distance::ncd`]), assemble per-sample feature vectors against a fixed
//! reference set ([`features`]), and train a random decision forest
//! ([`forest`]) on those vectors. [`cluster`] provides an unsupervised
//! k-medoids baseline over the same distances, and [`eval`] holds the ROC /
//! rank-test machinery used to compare the two.
//!
//! Everything downstream of a seed is deterministic: the same corpus, the
//! same [`compressor::CompressorConfig`], and the same seed produce
//! byte-identical artifacts, regardless of thread count.

pub mod cluster;
pub mod compressor;
pub mod corpus;
pub mod distance;
pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
pub mod seed;
pub mod synth;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
