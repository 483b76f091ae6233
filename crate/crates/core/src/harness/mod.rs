//! Scenarios, Monte Carlo execution, ingestion and reports.

pub mod config;
pub mod excise;
pub mod exec;
pub mod ingest;
pub mod real;
pub mod report;
pub mod scenario;

pub use config::ScenarioConfig;
pub use excise::{excise_and_interpolate, excise_feature_window};
pub use exec::{map_replicates, Execution};
pub use ingest::{ingest_series_csv, IngestedSeries, SeriesSchema};
pub use scenario::{run_replicate, run_scenario, RunReport};
