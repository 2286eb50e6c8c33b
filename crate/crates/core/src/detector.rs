//! Streaming per-phase detection with an abnormal-cycle counter and a
//! latched trip flag.

use serde::{Deserialize, Serialize};

use crate::autoencoder::AutoencoderModel;
use crate::error::{HifError, Result};
use crate::pca_monitor::{MonitorIndices, PcaMonitorModel};
use crate::signal_prep::{sample_cycle, sampling_gap, MinMaxScaler, WaveformRecord};

/// Counter threshold used when none is configured.
pub const DEFAULT_TRIP_THRESHOLD: u32 = 60;

/// Everything needed to turn one cycle of samples into monitoring indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorModels {
    pub ts: usize,
    pub m_vars: usize,
    pub input_scaler: MinMaxScaler,
    pub autoencoder: AutoencoderModel,
    pub monitor: PcaMonitorModel,
}

impl MonitorModels {
    pub fn validate(&self) -> Result<()> {
        sampling_gap(self.ts, self.m_vars).map_err(|e| HifError::ModelFormat(e.to_string()))?;
        self.input_scaler.validate()?;
        self.autoencoder.validate()?;
        self.monitor.validate()?;
        let widths = [
            ("input scaler", self.input_scaler.n_features()),
            ("autoencoder input", self.autoencoder.input_dim()),
            ("PCA monitor", self.monitor.n_vars()),
        ];
        for (name, width) in widths {
            if width != self.m_vars {
                return Err(HifError::ModelFormat(format!(
                    "{name} has {width} variables, pipeline uses M = {}",
                    self.m_vars
                )));
            }
        }
        Ok(())
    }

    /// Monitoring indices of one raw cycle.
    pub fn evaluate_cycle(&self, cycle: &[f64]) -> Result<MonitorIndices> {
        if cycle.len() != self.ts {
            return Err(HifError::Shape(format!(
                "cycle has {} samples, expected {}",
                cycle.len(),
                self.ts
            )));
        }
        if cycle.iter().any(|v| !v.is_finite()) {
            return Err(HifError::InvalidInput("cycle contains non-finite samples".into()));
        }
        let x = sample_cycle(cycle, self.ts, self.m_vars)?;
        let mut scaled = vec![0.0; self.m_vars];
        self.input_scaler.apply_row(&x, &mut scaled);
        let recon = self.autoencoder.forward(&scaled)?.reconstruction;
        let residual: Vec<f64> = scaled.iter().zip(&recon).map(|(a, b)| a - b).collect();
        let e = self.monitor.standardize(&residual)?;
        self.monitor.indices(&e)
    }

    pub fn phi_limit(&self) -> f64 {
        self.monitor.phi_limit
    }
}

/// Counter state of one phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorState {
    pub phase: String,
    pub counter: u32,
    pub tripped: bool,
    pub cycle_index: u64,
}

/// Result of one processed cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutput {
    pub cycle_index: u64,
    pub phi: f64,
    pub limit: f64,
    pub above_limit: bool,
    pub counter: u32,
    /// Latched trip flag after this cycle.
    pub trip_issued: bool,
}

impl DetectorState {
    pub fn new(phase: impl Into<String>) -> Self {
        Self {
            phase: phase.into(),
            counter: 0,
            tripped: false,
            cycle_index: 0,
        }
    }

    /// Clears the counter and the trip latch; the cycle index is kept.
    pub fn reset(&mut self) {
        self.counter = 0;
        self.tripped = false;
    }

    /// Updates the counter with an already computed index value.
    pub fn advance(&mut self, phi: f64, limit: f64, threshold: u32) -> DetectionOutput {
        let above = phi > limit;
        self.counter = if above {
            self.counter.saturating_add(1)
        } else {
            self.counter.saturating_sub(1)
        };
        if self.counter >= threshold {
            self.tripped = true;
        }
        let out = DetectionOutput {
            cycle_index: self.cycle_index,
            phi,
            limit,
            above_limit: above,
            counter: self.counter,
            trip_issued: self.tripped,
        };
        self.cycle_index += 1;
        out
    }

    /// Moves past a cycle that could not be evaluated.
    pub fn skip_cycle(&mut self) {
        self.cycle_index += 1;
    }

    /// Evaluates one cycle and updates the counter. On error the state is
    /// left untouched.
    pub fn process_cycle(
        &mut self,
        models: &MonitorModels,
        cycle: &[f64],
        threshold: u32,
    ) -> Result<DetectionOutput> {
        let idx = models.evaluate_cycle(cycle)?;
        Ok(self.advance(idx.phi, models.phi_limit(), threshold))
    }
}

/// Noteworthy things that happened while processing a recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum DetectionEvent {
    Trip {
        phase: String,
        cycle_index: u64,
        time_s: f64,
    },
    SkippedCycle {
        phase: String,
        cycle_index: u64,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: String,
    pub tripped: bool,
    pub first_trip_cycle: Option<u64>,
    pub first_trip_time_s: Option<f64>,
    pub skipped_cycles: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTrace {
    pub phase: String,
    pub outputs: Vec<DetectionOutput>,
}

/// Per-phase traces, events and summary of one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingDetection {
    pub traces: Vec<PhaseTrace>,
    pub summary: Vec<PhaseSummary>,
    pub events: Vec<DetectionEvent>,
}

impl RecordingDetection {
    pub fn any_trip(&self) -> bool {
        self.summary.iter().any(|s| s.tripped)
    }

    pub fn phase_summary(&self, phase: &str) -> Option<&PhaseSummary> {
        self.summary.iter().find(|s| s.phase == phase)
    }
}

pub fn validate_threshold(threshold: u32) -> Result<()> {
    if threshold == 0 {
        return Err(HifError::InvalidConfig("trip threshold must be at least 1".into()));
    }
    Ok(())
}

/// Runs one phase through a fresh detector.
pub fn run_phase(
    phase: &str,
    samples: &[f64],
    models: &MonitorModels,
    threshold: u32,
    cycle_seconds: f64,
) -> (PhaseTrace, PhaseSummary, Vec<DetectionEvent>) {
    let mut state = DetectorState::new(phase);
    let mut outputs = Vec::with_capacity(samples.len() / models.ts);
    let mut events = Vec::new();
    let mut first_trip = None;
    let mut skipped = 0;
    for cycle in samples.chunks_exact(models.ts) {
        let index = state.cycle_index;
        match state.process_cycle(models, cycle, threshold) {
            Ok(out) => {
                if out.trip_issued && first_trip.is_none() {
                    first_trip = Some(out.cycle_index);
                    events.push(DetectionEvent::Trip {
                        phase: phase.to_string(),
                        cycle_index: out.cycle_index,
                        time_s: out.cycle_index as f64 * cycle_seconds,
                    });
                }
                outputs.push(out);
            }
            Err(err) => {
                log::warn!("phase {phase}: skipping cycle {index}: {err}");
                events.push(DetectionEvent::SkippedCycle {
                    phase: phase.to_string(),
                    cycle_index: index,
                    reason: err.to_string(),
                });
                skipped += 1;
                state.skip_cycle();
            }
        }
    }
    let summary = PhaseSummary {
        phase: phase.to_string(),
        tripped: state.tripped,
        first_trip_cycle: first_trip,
        first_trip_time_s: first_trip.map(|c| c as f64 * cycle_seconds),
        skipped_cycles: skipped,
    };
    (
        PhaseTrace {
            phase: phase.to_string(),
            outputs,
        },
        summary,
        events,
    )
}

/// Runs every phase of a recording independently with the shared models.
pub fn run_recording(
    record: &WaveformRecord,
    models: &MonitorModels,
    threshold: u32,
) -> Result<RecordingDetection> {
    validate_threshold(threshold)?;
    if record.ts() != models.ts {
        return Err(HifError::InvalidConfig(format!(
            "recording has ts = {} but the model was trained with ts = {}",
            record.ts(),
            models.ts
        )));
    }
    if record.len() < record.ts() {
        return Err(HifError::InsufficientData(format!(
            "recording of {} samples is shorter than one cycle",
            record.len()
        )));
    }
    let cycle_seconds = record.ts() as f64 / record.sample_rate();
    let mut result = RecordingDetection {
        traces: Vec::new(),
        summary: Vec::new(),
        events: Vec::new(),
    };
    for p in record.phases() {
        let (trace, summary, events) = run_phase(&p.name, &p.samples, models, threshold, cycle_seconds);
        result.traces.push(trace);
        result.summary.push(summary);
        result.events.extend(events);
    }
    Ok(result)
}
