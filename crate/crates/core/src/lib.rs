//! Solar irradiance forecasting from weather features, temporal one-hot
//! encodings and graph embeddings of the measurement sites.
//!
//! Pipeline: [`synth`] or real files → [`geo`] graph → [`embedding`] →
//! [`features`] → [`forest`] → [`eval`]. The `solarcast` binary wraps it.

pub mod cli;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
pub mod geo;
pub mod stats;
pub mod synth;

pub use error::Error;
