//! Batch front-end: synthesize or load recordings, preprocess, search every
//! pipeline's hyperparameters, evaluate on held-out blocks, and write the
//! report, the results table and the plot files.

pub mod artifacts;
pub mod config;
pub mod report;
pub mod run;

pub use config::RunConfig;
pub use report::EvaluationReport;
pub use run::{run, REPORT_FILE, RESULTS_FILE};

/// An error tagged with the stage that produced it.
#[derive(Debug, thiserror::Error)]
#[error("{stage}: {source}")]
pub struct StageError {
    pub stage: String,
    #[source]
    pub source: rsvp_core::Error,
}

impl StageError {
    pub fn new(stage: impl Into<String>, source: rsvp_core::Error) -> Self {
        StageError {
            stage: stage.into(),
            source,
        }
    }

    /// Adapter for `map_err`.
    pub fn at(stage: impl Into<String>) -> impl FnOnce(rsvp_core::Error) -> StageError {
        let stage = stage.into();
        move |e| StageError::new(stage, e)
    }
}
