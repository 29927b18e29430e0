//! Pipeline configuration file.
//!
//! Every section is optional; missing keys take their defaults, and
//! command-line flags override whatever the file sets.
//!
//! ```toml
//! workers = 4
//!
//! [layout]
//! theta = 0.5
//! grid_w = 256
//!
//! [tracker]
//! flow_lambda = -0.05
//!
//! [paths]
//! detections = "test/detections.jsonl"
//! ```

use crate::flow::{CornerParams, FlowParams};
use crate::layout::LayoutParams;
use crate::synth::SynthConfig;
use crate::tracker::{TrackerConfig, TrackerParams};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub detections: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub frames: Option<PathBuf>,
    pub layout: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub layout: LayoutParams,
    pub tracker: TrackerParams,
    pub corners: CornerParams,
    pub flow: FlowParams,
    pub synth: SynthConfig,
    pub paths: Paths,
}

impl PipelineConfig {
    pub fn parse(text: &str, path: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_string(),
            reason: e.to_string(),
        })?;
        cfg.validate().map_err(|reason| ConfigError::Parse {
            path: path.to_string(),
            reason,
        })?;
        Ok(cfg)
    }

    /// Loads a file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        if let Some(base) = path.parent() {
            let p = &mut cfg.paths;
            for slot in [
                &mut p.detections,
                &mut p.annotations,
                &mut p.masks,
                &mut p.frames,
                &mut p.layout,
                &mut p.output,
            ] {
                if let Some(rel) = slot.as_mut().filter(|r| r.is_relative()) {
                    *rel = base.join(&*rel);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.layout.validate().map_err(|e| e.to_string())?;
        self.tracker.validate().map_err(|e| e.to_string())?;
        self.corners.validate().map_err(|e| e.to_string())?;
        self.flow.validate().map_err(|e| e.to_string())?;
        if self.workers == Some(0) {
            return Err("workers must be at least 1".into());
        }
        Ok(())
    }

    pub fn tracker_config(&self) -> TrackerConfig {
        TrackerConfig {
            tracker: self.tracker,
            corners: self.corners,
            flow: self.flow,
        }
    }
}
