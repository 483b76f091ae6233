//! Disease surveillance as a noisy communication channel.
//!
//! A ground-truth epidemic curve (the message) is encoded by two kinds of
//! channel: clinic-based provider reporting and internet activity traces.
//! Every observable feature is emitted together with its exact split into
//! signal, systematic noise and random noise, so decoders can be scored both
//! by error against the truth and by how much of their output is driven by
//! noise (deceptiveness).
//!
//! Module map:
//! - [`epidemic`]: seasonal and SIR ground-truth curves
//! - [`traditional`]: population partition, care seeking, provider reports
//! - [`internet`]: trace-count features with confounds and drift
//! - [`decoders`]: weighted average, correlation/relevance filter, ridge fit
//! - [`metrics`]: error and deceptiveness
//! - [`harness`]: scenarios, Monte Carlo replicates, ingestion and reports

pub mod decoders;
pub mod epidemic;
pub mod error;
pub mod harness;
pub mod internet;
pub mod metrics;
pub mod rng;
pub mod traditional;

pub use error::{Error, Result};
