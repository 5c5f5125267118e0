//! Two-step collaborative anomaly detection for smart-home IoT flows.
//!
//! Flows pass an autoencoder frequency filter first; flows it finds
//! infrequent are checked against k-means clusters of rare-but-benign
//! behavior learned from the pooled traffic of identical devices.

pub mod baselines;
pub mod config;
pub mod encode;
pub mod error;
pub mod eval;
pub mod filter1;
pub mod filter2;
pub mod ingest;
pub mod matrix;
pub mod model;
pub mod pipeline;
pub mod stats;
pub mod synth;

pub use config::PipelineConfig;
pub use error::{Error, ErrorClass, Result};
pub use matrix::Matrix;
pub use pipeline::{CadeshModel, StageTimings};
pub use model::{FlowRecord, LabelClass, PartitionTag, Verdict};
