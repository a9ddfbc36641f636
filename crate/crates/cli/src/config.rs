//! Run configuration: one JSON document.

use std::path::{Path, PathBuf};

use rsvp_core::eval::{PipelineKind, SearchSpace};
use rsvp_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::StageError;

/// Where the epochs come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Synthetic participants; participant `i` is generated with seed
    /// `seed + i`, replacing the generator's own `seed` field.
    Synth {
        #[serde(default = "one")]
        participants: usize,
        #[serde(default)]
        generator: SynthConfig,
    },
    /// Recording sidecars (`.json`), one participant each.
    Recordings(Vec<PathBuf>),
    /// Already preprocessed epoch files, one participant each.
    Epochs(Vec<PathBuf>),
}

fn one() -> usize {
    1
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synth {
            participants: 1,
            generator: SynthConfig::default(),
        }
    }
}

/// Order of re-referencing and filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// Common average reference, then bandpass.
    #[default]
    CarFirst,
    BandpassFirst,
    /// Keep the recorded reference.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub reference: Reference,
    /// Bandpass edges in Hz.
    pub band: (f64, f64),
    /// Resampling target; `null` keeps the recorded rate.
    pub target_rate: Option<f64>,
    /// Epoch window relative to onset, seconds.
    pub window: (f64, f64),
    /// Peak-to-peak EOG rejection threshold in µV; `null` disables.
    pub rejection_uv: Option<f64>,
    /// Excluded from CAR, used for rejection, then dropped.
    pub eog_channels: Vec<String>,
    pub test_blocks_per_task: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            reference: Reference::CarFirst,
            band: (0.1, 30.0),
            target_rate: Some(250.0),
            window: (0.0, 1.0),
            rejection_uv: Some(rsvp_core::preprocess::DEFAULT_REJECTION_UV),
            eog_channels: vec!["HEOG".into(), "VEOG".into()],
            test_blocks_per_task: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub budget: usize,
    pub k: usize,
    pub space: SearchSpace,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            budget: 100,
            k: 10,
            space: SearchSpace::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArtifactConfig {
    pub topomaps: bool,
    pub erp_diff: bool,
}

impl Default for ArtifactConfig {
    fn default() -> Self {
        ArtifactConfig {
            topomaps: true,
            erp_diff: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; required.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub data: DataSource,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default = "PipelineKind::grid")]
    pub pipelines: Vec<PipelineKind>,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub artifacts: ArtifactConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            data: DataSource::default(),
            preprocess: PreprocessConfig::default(),
            pipelines: PipelineKind::grid(),
            search: SearchConfig::default(),
            artifacts: ArtifactConfig::default(),
        }
    }
}

fn config_error(message: impl Into<String>) -> StageError {
    StageError::new("config", rsvp_core::Error::Parameter(message.into()))
}

impl RunConfig {
    /// Parses a config file; relative data paths resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<RunConfig, StageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| StageError::new("config", e.into()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        match &mut cfg.data {
            DataSource::Recordings(paths) | DataSource::Epochs(paths) => {
                for p in paths.iter_mut() {
                    if p.is_relative() {
                        *p = base.join(&*p);
                    }
                }
            }
            DataSource::Synth { .. } => {}
        }
        Ok(cfg)
    }

    pub fn master_seed(&self) -> Result<u64, StageError> {
        self.seed
            .ok_or_else(|| config_error("a seed is required (set \"seed\" in the config or pass --seed)"))
    }

    pub fn validate(&self) -> Result<(), StageError> {
        self.master_seed()?;
        if self.pipelines.is_empty() {
            return Err(config_error("at least one pipeline is required"));
        }
        let mut seen = self.pipelines.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.pipelines.len() {
            return Err(config_error("pipelines are listed more than once"));
        }
        if self.search.budget == 0 || self.search.k < 2 {
            return Err(config_error("search needs budget ≥ 1 and k ≥ 2"));
        }
        self.search.space.validate().map_err(|e| StageError::new("config", e))?;
        let p = &self.preprocess;
        if !(p.window.1 > p.window.0) || p.test_blocks_per_task == 0 {
            return Err(config_error("epoch window must be non-empty and test_blocks_per_task ≥ 1"));
        }
        match &self.data {
            DataSource::Synth { participants, generator } => {
                if *participants == 0 {
                    return Err(config_error("synth needs at least one participant"));
                }
                generator.validate().map_err(|e| StageError::new("config", e))?;
            }
            DataSource::Recordings(paths) | DataSource::Epochs(paths) => {
                if paths.is_empty() {
                    return Err(config_error("no input files listed"));
                }
            }
        }
        Ok(())
    }
}
