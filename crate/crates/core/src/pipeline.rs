//! Offline training: augmentation, scaling, autoencoder, residual monitor.

use serde::{Deserialize, Serialize};

use crate::autoencoder::{self, TrainConfig, TrainHistory};
use crate::detector::MonitorModels;
use crate::error::{HifError, Result};
use crate::linalg::Matrix;
use crate::pca_monitor::PcaMonitorModel;
use crate::rng::SeededRng;
use crate::signal_prep::{augment, sampling_gap, split, CycleMatrix, MinMaxScaler, WaveformRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub ts: usize,
    pub m_vars: usize,
    pub layer_dims: Vec<usize>,
    pub train: TrainConfig,
    pub train_fraction: f64,
    pub cpv_target: f64,
    pub alpha: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            ts: 320,
            m_vars: 32,
            layer_dims: vec![32, 15, 10, 15, 32],
            train: TrainConfig::default(),
            train_fraction: 0.8,
            cpv_target: 0.95,
            alpha: 0.99,
        }
    }
}

impl PipelineConfig {
    pub fn gap(&self) -> Result<usize> {
        sampling_gap(self.ts, self.m_vars)
    }

    /// Seed of the train/validation shuffle.
    pub fn split_seed(&self) -> u64 {
        SeededRng::derive_seed(self.train.seed, 3)
    }

    pub fn validate(&self) -> Result<()> {
        self.gap()?;
        autoencoder::validate_layer_dims(&self.layer_dims)?;
        if self.layer_dims[0] != self.m_vars || self.layer_dims.last() != Some(&self.m_vars) {
            return Err(HifError::InvalidConfig(format!(
                "layers {:?} must start and end with M = {}",
                self.layer_dims, self.m_vars
            )));
        }
        self.train.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(HifError::InvalidConfig(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if !(self.cpv_target > 0.0 && self.cpv_target <= 1.0) {
            return Err(HifError::InvalidConfig(format!(
                "cpv must lie in (0, 1], got {}",
                self.cpv_target
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(HifError::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub n_cycles: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub history: TrainHistory,
    pub n_components: usize,
    pub g: f64,
    pub h: f64,
    pub t2_limit: f64,
    pub spe_limit: f64,
    pub phi_limit: f64,
}

/// Stacks the cycle matrices of every phase of every recording.
pub fn training_matrix(recordings: &[WaveformRecord], ts: usize, m_vars: usize) -> Result<Matrix> {
    if recordings.is_empty() {
        return Err(HifError::InsufficientData("no load recordings given".into()));
    }
    let mut parts = Vec::new();
    for (i, r) in recordings.iter().enumerate() {
        if r.ts() != ts {
            return Err(HifError::InvalidConfig(format!(
                "recording {i} has ts = {}, training uses ts = {ts}",
                r.ts()
            )));
        }
        for p in r.phases() {
            if p.samples.iter().any(|v| !v.is_finite()) {
                return Err(HifError::InvalidInput(format!(
                    "recording {i} phase {} contains non-finite samples",
                    p.name
                )));
            }
            parts.push(augment(&p.samples, ts, m_vars)?);
        }
    }
    Ok(CycleMatrix::concat(&parts)?.data)
}

/// Runs the whole offline procedure on load-only recordings.
pub fn train_models(
    recordings: &[WaveformRecord],
    config: &PipelineConfig,
) -> Result<(MonitorModels, TrainingReport)> {
    config.validate()?;
    let x = training_matrix(recordings, config.ts, config.m_vars)?;
    let input_scaler = MinMaxScaler::fit(&x)?;
    let scaled = input_scaler.apply(&x)?;
    let (train_x, val_x) = split(&scaled, config.train_fraction, config.split_seed())?;
    log::info!(
        "training on {} cycles ({} train, {} validation)",
        x.rows(),
        train_x.rows(),
        val_x.rows()
    );
    let (ae, history) = autoencoder::train(&train_x, &val_x, &config.layer_dims, &config.train)?;
    let residuals = autoencoder::residuals(&ae, &Matrix::vstack(&[train_x.clone(), val_x.clone()])?)?;
    let monitor = PcaMonitorModel::fit(&residuals, config.cpv_target, config.alpha)?;
    let report = TrainingReport {
        n_cycles: x.rows(),
        n_train: train_x.rows(),
        n_validation: val_x.rows(),
        history,
        n_components: monitor.n_components,
        g: monitor.g,
        h: monitor.h,
        t2_limit: monitor.t2_limit,
        spe_limit: monitor.spe_limit,
        phi_limit: monitor.phi_limit,
    };
    let models = MonitorModels {
        ts: config.ts,
        m_vars: config.m_vars,
        input_scaler,
        autoencoder: ae,
        monitor,
    };
    models.validate()?;
    Ok((models, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{gen_load, LoadProfile};

    #[test]
    fn training_matrix_counts_every_phase() {
        let r = gen_load(&LoadProfile::random(1), 2.0, 320).unwrap();
        let x = training_matrix(&[r.clone(), r], 320, 32).unwrap();
        assert_eq!((x.rows(), x.cols()), (2 * 3 * 120, 32));
    }

    #[test]
    fn rejects_inconsistent_layers() {
        let c = PipelineConfig {
            layer_dims: vec![16, 8, 16],
            ..PipelineConfig::default()
        };
        assert!(matches!(c.validate(), Err(HifError::InvalidConfig(_))));
        let c = PipelineConfig {
            m_vars: 30,
            layer_dims: vec![30, 10, 30],
            ..PipelineConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn small_pipeline_runs() {
        let recs: Vec<_> = (0..2)
            .map(|s| gen_load(&LoadProfile::random(s), 4.0, 64).unwrap())
            .collect();
        let config = PipelineConfig {
            ts: 64,
            m_vars: 8,
            layer_dims: vec![8, 5, 3, 5, 8],
            train: TrainConfig {
                epochs: 5,
                ..TrainConfig::default()
            },
            ..PipelineConfig::default()
        };
        let (models, report) = train_models(&recs, &config).unwrap();
        assert_eq!(report.n_cycles, 2 * 3 * 240);
        assert_eq!(report.n_train + report.n_validation, report.n_cycles);
        assert_eq!(report.history.epochs.len(), 5);
        assert!(models.monitor.phi_limit > 0.0);
    }
}
