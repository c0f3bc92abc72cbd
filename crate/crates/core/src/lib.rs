//! Desk-scale laboratory for training point-cloud segmentation models under
//! instance-level label noise.
//!
//! The pipeline: generate synthetic labeled scenes ([`synth`]), corrupt the
//! training labels at the object-instance level ([`noise`]), partition rooms
//! into overlapping blocks and sample fixed-size batches ([`data`]), cluster
//! block geometry into correction units ([`cluster`]), train a small
//! per-point classifier ([`model`]), and run the two-stage noise-adaptive
//! loop that selects reliable points from prediction histories and corrects
//! labels cluster-by-cluster with a voting rule ([`pnal`]). Quality and
//! correction-process measurement lives in [`metrics`]; file-level experiment
//! commands in [`experiment`].

pub mod cluster;
pub mod data;
pub mod error;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod model;
pub mod noise;
pub mod pnal;
pub mod seed;
pub mod synth;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Class label index, `0..num_classes`.
pub type ClassId = usize;

/// Scene-wide stable point identifier.
pub type GlobalId = u64;
