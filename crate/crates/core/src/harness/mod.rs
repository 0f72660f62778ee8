//! Scenario ingestion, the closed-loop run, metrics and output files.

mod metrics;
mod output;
mod run;
mod scenario;

pub use metrics::{compute_metrics, Distribution, Identity, Metrics};
pub use output::{load_run, metrics_json, run_json, write_outputs, write_plotdata, PLOT_FILES};
pub use run::{run, CameraSource, EstimateRecord, InitSummary, RunLog, RunStatus, StepPhase, StepRecord};
pub use scenario::{bundled, AgentSpec, EmbeddingConfig, Scenario, BUNDLED};

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("usage: {0}")]
    Usage(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
