//! Unsupervised high-impedance-fault detection from current waveforms.
//!
//! Cycles are gap-sampled into fixed-width vectors, reconstructed by an
//! autoencoder trained on normal load only, and the reconstruction residuals
//! are monitored with PCA statistics. A per-phase counter turns exceedances
//! into a latched trip.

pub mod autoencoder;
pub mod detector;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model_file;
pub mod pca_monitor;
pub mod pipeline;
pub mod rng;
pub mod signal_prep;
pub mod stats;
pub mod synthgen;

pub use autoencoder::{AutoencoderModel, TrainConfig};
pub use detector::{run_recording, DetectorState, MonitorModels, DEFAULT_TRIP_THRESHOLD};
pub use error::{HifError, Result};
pub use linalg::Matrix;
pub use model_file::ModelFile;
pub use pca_monitor::PcaMonitorModel;
pub use pipeline::{train_models, PipelineConfig, TrainingReport};
pub use signal_prep::{FaultLabel, PhaseSignal, WaveformRecord};
