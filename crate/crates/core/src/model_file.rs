//! Versioned JSON model file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::{validate_threshold, MonitorModels};
use crate::error::{HifError, Result};
use crate::io::{read_json, write_json};
use crate::pipeline::PipelineConfig;
use crate::rng::GENERATOR_NAME;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub generator: String,
    pub config: PipelineConfig,
    /// Sampling gap `ts / M`, stored for readability.
    pub gap: usize,
    pub threshold: u32,
    pub models: MonitorModels,
}

impl ModelFile {
    pub fn new(config: PipelineConfig, models: MonitorModels, threshold: u32) -> Result<Self> {
        let file = Self {
            format_version: FORMAT_VERSION,
            generator: GENERATOR_NAME.to_string(),
            gap: config.gap()?,
            config,
            threshold,
            models,
        };
        file.validate()?;
        Ok(file)
    }

    /// Re-checks every invariant of the stored models.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(HifError::ModelFormat(format!(
                "format version {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let fail = |e: HifError| HifError::ModelFormat(e.to_string());
        self.config.validate().map_err(fail)?;
        validate_threshold(self.threshold).map_err(fail)?;
        self.models.validate().map_err(fail)?;
        if self.gap != self.config.gap().map_err(fail)? {
            return Err(HifError::ModelFormat(format!(
                "gap {} does not match ts / M = {}",
                self.gap,
                self.config.ts / self.config.m_vars
            )));
        }
        let m = &self.models;
        if m.ts != self.config.ts || m.m_vars != self.config.m_vars {
            return Err(HifError::ModelFormat(format!(
                "models use ts = {}, M = {} but config says ts = {}, M = {}",
                m.ts, m.m_vars, self.config.ts, self.config.m_vars
            )));
        }
        if m.autoencoder.layer_dims() != self.config.layer_dims.as_slice() {
            return Err(HifError::ModelFormat(format!(
                "autoencoder layers {:?} differ from config {:?}",
                m.autoencoder.layer_dims(),
                self.config.layer_dims
            )));
        }
        if m.monitor.alpha != self.config.alpha {
            return Err(HifError::ModelFormat(format!(
                "monitor alpha {} differs from config {}",
                m.monitor.alpha, self.config.alpha
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ModelFile = read_json(path).map_err(|e| match e {
            HifError::Parse { context, message } => {
                HifError::ModelFormat(format!("{context}: {message}"))
            }
            other => other,
        })?;
        file.validate()?;
        Ok(file)
    }
}
