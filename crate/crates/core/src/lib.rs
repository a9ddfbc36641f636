//! Single-trial ERP classification pipelines for RSVP EEG.
//!
//! The crate covers the whole chain from a continuous recording to an AUC:
//!
//! ```text
//! ContinuousRecording ── preprocess ──> EpochSet
//!     ── spatial (MTWLB | xDAWN | CSP | none) ──> component time series
//!     ── features (per-series PCA, 1% variance) ──> FeatureMatrix
//!     ── classifiers (LDA | BLR | LR) ──> scores ── eval::auc
//! ```
//!
//! `eval` wraps the chain in stratified k-fold cross validation and a
//! seeded random hyperparameter search; `synth` generates RSVP recordings
//! with known ground truth, and `io` reads and writes the native formats.

pub mod classifiers;
pub mod error;
pub mod eval;
pub mod features;
pub mod io;
pub mod linalg;
pub mod montage;
mod par;
pub mod preprocess;
pub mod spatial;
pub mod synth;
pub mod topomap;

pub use error::{Error, Result};
