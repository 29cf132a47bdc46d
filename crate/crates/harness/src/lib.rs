//! Scenario-driven experiment runner for the DMT optical link models.
//!
//! A [`Scenario`] names a link, a modem configuration and an OSNR sweep.
//! Each sweep point trains the modem through the link, loads bits and power
//! from the estimated SNR, sends payload until enough errors are counted and
//! records the outcome. Results are written as CSV datasets.

pub mod output;
pub mod run;
pub mod scenario;

use dmtlink_core::channel::ChannelError;
use dmtlink_core::loading::LoadingError;
use dmtlink_core::metrics::MetricsError;
use dmtlink_core::modem::ModemError;
use thiserror::Error;

pub use output::emit_outputs;
pub use run::{run_point, run_scenario, PointOutcome, RunOptions, RunRecord, ScenarioResult};
pub use scenario::{bundled, bundled_names, resolve, RatePolicy, Scenario};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown scenario '{0}' (not a file or bundled name)")]
    UnknownScenario(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Output { path: String, message: String },
    #[error(transparent)]
    Modem(#[from] ModemError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Loading(#[from] LoadingError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}
