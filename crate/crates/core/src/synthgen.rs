//! Seeded synthetic three-phase load currents and HIF-like distortions.
//!
//! Load waveforms are a fundamental plus harmonics under slow amplitude
//! modulation and slowly wandering harmonic content, with white noise and
//! sparse spikes. The fault model adds an arc-like component to one phase:
//! a half-cycle-wise random, asymmetric current that is extinguished for a
//! random fraction after each zero crossing, ramps up over a number of cycles
//! and occasionally drops out for a whole cycle.

use serde::{Deserialize, Serialize};

use crate::error::{HifError, Result};
use crate::rng::SeededRng;
use crate::signal_prep::{FaultLabel, PhaseSignal, WaveformRecord};

pub const PHASE_NAMES: [&str; 3] = ["A", "B", "C"];
pub const DEFAULT_FREQUENCY_HZ: f64 = 60.0;
pub const DEFAULT_TS: usize = 320;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub order: u32,
    /// Relative to the fundamental.
    pub relative_amplitude: f64,
    pub phase_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeProcess {
    pub rate_per_1000_cycles: f64,
    /// Amperes.
    pub magnitude_min: f64,
    pub magnitude_max: f64,
}

impl SpikeProcess {
    pub fn off() -> Self {
        Self {
            rate_per_1000_cycles: 0.0,
            magnitude_min: 0.0,
            magnitude_max: 0.0,
        }
    }
}

/// Parameters of one synthetic load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    /// Peak amperes of the fundamental before unbalance scaling.
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub harmonics: Vec<Harmonic>,
    pub modulation_depth: f64,
    pub modulation_period_cycles: f64,
    /// Peak relative deviation of the slow random amplitude drift.
    pub amplitude_wander: f64,
    /// Peak relative deviation of the common harmonic level.
    pub harmonic_wander: f64,
    /// Peak deviation of the load angle, degrees.
    pub angle_wander_deg: f64,
    /// Amperes.
    pub noise_std: f64,
    pub spikes: SpikeProcess,
    pub phase_scale: [f64; 3],
    pub phase_angle_deg: [f64; 3],
    pub seed: u64,
}

impl LoadProfile {
    /// A clean sinusoid of the given peak amplitude; a starting point for tests.
    pub fn sinusoid(amplitude: f64, seed: u64) -> Self {
        Self {
            amplitude,
            frequency_hz: DEFAULT_FREQUENCY_HZ,
            harmonics: Vec::new(),
            modulation_depth: 0.0,
            modulation_period_cycles: 600.0,
            amplitude_wander: 0.0,
            harmonic_wander: 0.0,
            angle_wander_deg: 0.0,
            noise_std: 0.0,
            spikes: SpikeProcess::off(),
            phase_scale: [1.0; 3],
            phase_angle_deg: [0.0, -120.0, 120.0],
            seed,
        }
    }

    /// Draws a load from the family shared by every profile of one feeder.
    pub fn random(seed: u64) -> Self {
        let mut rng = SeededRng::new(SeededRng::derive_seed(seed, 0x10AD));
        // harmonic phases are a feeder property; levels vary a little per load
        let signature = [(3, 0.06, 30.0), (5, 0.035, -60.0), (7, 0.015, 110.0), (9, 0.008, 200.0)];
        let harmonics = signature
            .iter()
            .map(|&(order, level, phase)| Harmonic {
                order,
                relative_amplitude: level * rng.uniform_range(0.95, 1.05),
                phase_deg: phase,
            })
            .collect();
        let amplitude = rng.uniform_range(195.0, 205.0);
        let phase_scale = [
            rng.uniform_range(0.99, 1.01),
            rng.uniform_range(0.99, 1.01),
            rng.uniform_range(0.99, 1.01),
        ];
        let base = [0.0, -120.0, 120.0];
        let phase_angle_deg = base.map(|b| b - 20.0 + rng.uniform_range(-2.0, 2.0));
        Self {
            amplitude,
            frequency_hz: DEFAULT_FREQUENCY_HZ,
            harmonics,
            modulation_depth: rng.uniform_range(0.18, 0.22),
            modulation_period_cycles: rng.uniform_range(400.0, 1200.0),
            amplitude_wander: 0.03,
            harmonic_wander: 0.3,
            angle_wander_deg: 8.0,
            noise_std: 2.0,
            spikes: SpikeProcess {
                rate_per_1000_cycles: rng.uniform_range(1.0, 3.0),
                magnitude_min: 0.05 * amplitude,
                magnitude_max: 0.2 * amplitude,
            },
            phase_scale,
            phase_angle_deg,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(HifError::InvalidConfig(format!("{field}: {msg}")));
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !nonneg(self.amplitude) {
            return fail("amplitude", format!("must be >= 0, got {}", self.amplitude));
        }
        if !(self.frequency_hz > 0.0 && self.frequency_hz.is_finite()) {
            return fail("frequency_hz", format!("must be positive, got {}", self.frequency_hz));
        }
        for h in &self.harmonics {
            if h.order < 2 {
                return fail("harmonics.order", format!("must be >= 2, got {}", h.order));
            }
            if !nonneg(h.relative_amplitude) || !h.phase_deg.is_finite() {
                return fail(
                    "harmonics.relative_amplitude",
                    format!("must be >= 0, got {}", h.relative_amplitude),
                );
            }
        }
        if !(0.0..1.0).contains(&self.modulation_depth) {
            return fail(
                "modulation_depth",
                format!("must lie in [0, 1), got {}", self.modulation_depth),
            );
        }
        if !(self.modulation_period_cycles > 0.0) {
            return fail(
                "modulation_period_cycles",
                format!("must be positive, got {}", self.modulation_period_cycles),
            );
        }
        if !(0.0..1.0).contains(&self.amplitude_wander) {
            return fail(
                "amplitude_wander",
                format!("must lie in [0, 1), got {}", self.amplitude_wander),
            );
        }
        if !(0.0..1.0).contains(&self.harmonic_wander) {
            return fail(
                "harmonic_wander",
                format!("must lie in [0, 1), got {}", self.harmonic_wander),
            );
        }
        if !nonneg(self.angle_wander_deg) {
            return fail("angle_wander_deg", format!("must be >= 0, got {}", self.angle_wander_deg));
        }
        if !nonneg(self.noise_std) {
            return fail("noise_std", format!("must be >= 0, got {}", self.noise_std));
        }
        let s = &self.spikes;
        if !nonneg(s.rate_per_1000_cycles) || s.rate_per_1000_cycles > 1000.0 {
            return fail(
                "spikes.rate_per_1000_cycles",
                format!("must lie in [0, 1000], got {}", s.rate_per_1000_cycles),
            );
        }
        if !nonneg(s.magnitude_min) || !nonneg(s.magnitude_max) || s.magnitude_max < s.magnitude_min {
            return fail(
                "spikes.magnitude_min",
                format!("need 0 <= min <= max, got {}..{}", s.magnitude_min, s.magnitude_max),
            );
        }
        if self.phase_scale.iter().any(|&v| !nonneg(v)) {
            return fail("phase_scale", format!("must be >= 0, got {:?}", self.phase_scale));
        }
        if self.phase_angle_deg.iter().any(|v| !v.is_finite()) {
            return fail("phase_angle_deg", "must be finite".into());
        }
        Ok(())
    }
}

/// Sum of three slow sinusoids, normalized to peak magnitude at most 1.
struct Wander {
    terms: [(f64, f64, f64); 3],
}

impl Wander {
    fn new(rng: &mut SeededRng) -> Self {
        let mut terms = [(0.0, 0.0, 0.0); 3];
        let mut total = 0.0;
        for t in &mut terms {
            let weight = rng.uniform_range(0.3, 1.0);
            let period = rng.uniform_range(60.0, 900.0);
            let phase = rng.uniform_range(0.0, std::f64::consts::TAU);
            *t = (weight, period, phase);
            total += weight;
        }
        for t in &mut terms {
            t.0 /= total;
        }
        Self { terms }
    }

    fn at(&self, cycle: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(w, period, phase)| w * (std::f64::consts::TAU * cycle / period + phase).sin())
            .sum()
    }
}

/// Number of whole cycles in `duration_s`.
fn whole_cycles(duration_s: f64, frequency_hz: f64) -> usize {
    (duration_s * frequency_hz + 1e-9).floor() as usize
}

/// Generates a three-phase load recording of whole cycles.
pub fn gen_load(profile: &LoadProfile, duration_s: f64, ts: usize) -> Result<WaveformRecord> {
    profile.validate()?;
    if ts == 0 {
        return Err(HifError::InvalidConfig("ts: must be positive".into()));
    }
    let n_cycles = whole_cycles(duration_s, profile.frequency_hz);
    if !duration_s.is_finite() || n_cycles == 0 {
        return Err(HifError::InvalidConfig(format!(
            "duration_s: {duration_s} s is shorter than one cycle"
        )));
    }
    let sample_rate = profile.frequency_hz * ts as f64;
    let n = n_cycles * ts;
    let tau = std::f64::consts::TAU;

    let mut shared = SeededRng::new(SeededRng::derive_seed(profile.seed, 1));
    let modulation_phase = shared.uniform_range(0.0, tau);

    let mut phases = Vec::with_capacity(3);
    for (p, name) in PHASE_NAMES.iter().enumerate() {
        let mut rng = SeededRng::new(SeededRng::derive_seed(profile.seed, 100 + p as u64));
        let amp_wander = Wander::new(&mut rng);
        let angle_wander = Wander::new(&mut rng);
        // one factor for all harmonics: the share of nonlinear load drifts
        let harmonic_wander = Wander::new(&mut rng);
        let mut noise = SeededRng::new(SeededRng::derive_seed(profile.seed, 200 + p as u64));
        let mut spikes = SeededRng::new(SeededRng::derive_seed(profile.seed, 300 + p as u64));

        let base = profile.amplitude * profile.phase_scale[p];
        let mut samples = Vec::with_capacity(n);
        let mut levels = vec![0.0; profile.harmonics.len()];
        for c in 0..n_cycles {
            let cf = c as f64;
            let envelope = base
                * (1.0
                    + profile.modulation_depth
                        * (tau * cf / profile.modulation_period_cycles + modulation_phase).sin())
                * (1.0 + profile.amplitude_wander * amp_wander.at(cf));
            let angle = (profile.phase_angle_deg[p] + profile.angle_wander_deg * angle_wander.at(cf)).to_radians();
            let share = 1.0 + profile.harmonic_wander * harmonic_wander.at(cf);
            for (lvl, h) in levels.iter_mut().zip(&profile.harmonics) {
                *lvl = h.relative_amplitude * share;
            }
            let start = samples.len();
            for k in 0..ts {
                let theta = tau * k as f64 / ts as f64 + angle;
                let mut v = theta.sin();
                for (lvl, h) in levels.iter().zip(&profile.harmonics) {
                    v += lvl * (f64::from(h.order) * theta + h.phase_deg.to_radians()).sin();
                }
                let mut x = envelope * v;
                if profile.noise_std > 0.0 {
                    x += profile.noise_std * noise.normal();
                }
                samples.push(x);
            }
            if profile.spikes.rate_per_1000_cycles > 0.0
                && spikes.bernoulli(profile.spikes.rate_per_1000_cycles / 1000.0)
            {
                let at = spikes.below(ts as u64) as usize;
                let mag = spikes.uniform_range(profile.spikes.magnitude_min, profile.spikes.magnitude_max);
                let sign = if spikes.bernoulli(0.5) { 1.0 } else { -1.0 };
                for (j, s) in samples[start + at..].iter_mut().take(8).enumerate() {
                    *s += sign * mag * (-0.5 * j as f64).exp();
                }
            }
        }
        phases.push(PhaseSignal {
            name: (*name).to_string(),
            samples,
        });
    }
    WaveformRecord::new(ts, sample_rate, phases)
}

/// Parameters of an injected high-impedance fault.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HifConfig {
    pub start_s: f64,
    pub end_s: f64,
    pub phase: String,
    /// Peak of the arc component relative to the phase's fundamental.
    pub magnitude: f64,
    /// Positive half-cycles are scaled by `1 + asymmetry`, negative by `1 - asymmetry`.
    pub asymmetry: f64,
    /// Relative standard deviation of the per-half-cycle magnitude.
    pub randomness: f64,
    /// Largest fraction of a half-cycle during which the arc stays extinguished.
    pub max_extinction: f64,
    pub buildup_cycles: f64,
    pub dropout_probability: f64,
    pub seed: u64,
}

impl Default for HifConfig {
    fn default() -> Self {
        Self {
            start_s: 100.0,
            end_s: 160.0,
            phase: "A".into(),
            magnitude: 0.15,
            asymmetry: 0.3,
            randomness: 0.4,
            max_extinction: 0.3,
            buildup_cycles: 20.0,
            dropout_probability: 0.05,
            seed: 0,
        }
    }
}

impl HifConfig {
    pub fn validate(&self, duration_s: f64) -> Result<()> {
        let fail = |field: &str, msg: String| Err(HifError::InvalidConfig(format!("{field}: {msg}")));
        if !(self.start_s >= 0.0 && self.start_s.is_finite()) {
            return fail("start_s", format!("must be >= 0, got {}", self.start_s));
        }
        if !(self.end_s > self.start_s) {
            return fail(
                "end_s",
                format!("must be greater than start_s {}, got {}", self.start_s, self.end_s),
            );
        }
        if self.end_s > duration_s + 1e-9 {
            return fail(
                "end_s",
                format!("fault window ends at {} s after the {duration_s} s recording", self.end_s),
            );
        }
        if !(self.magnitude >= 0.0 && self.magnitude.is_finite()) {
            return fail("magnitude", format!("must be >= 0, got {}", self.magnitude));
        }
        if !(0.0..=1.0).contains(&self.asymmetry) {
            return fail("asymmetry", format!("must lie in [0, 1], got {}", self.asymmetry));
        }
        if !(self.randomness >= 0.0 && self.randomness.is_finite()) {
            return fail("randomness", format!("must be >= 0, got {}", self.randomness));
        }
        if !(0.0..1.0).contains(&self.max_extinction) {
            return fail(
                "max_extinction",
                format!("must lie in [0, 1), got {}", self.max_extinction),
            );
        }
        if !(self.buildup_cycles >= 0.0 && self.buildup_cycles.is_finite()) {
            return fail("buildup_cycles", format!("must be >= 0, got {}", self.buildup_cycles));
        }
        if !(0.0..=1.0).contains(&self.dropout_probability) {
            return fail(
                "dropout_probability",
                format!("must lie in [0, 1], got {}", self.dropout_probability),
            );
        }
        Ok(())
    }
}

/// Amplitude and angle of the fundamental, estimated by a single-bin DFT over
/// up to 60 whole cycles before `before_sample` (at least the first cycle).
fn fundamental_phasor(samples: &[f64], ts: usize, before_sample: usize) -> (f64, f64) {
    let cycles = (before_sample / ts).clamp(1, 60).min(samples.len() / ts);
    let end = (before_sample / ts).max(cycles) * ts;
    let start = end - cycles * ts;
    let (mut re, mut im) = (0.0, 0.0);
    for (k, &x) in samples[start..end].iter().enumerate() {
        let theta = std::f64::consts::TAU * ((start + k) % ts) as f64 / ts as f64;
        re += x * theta.sin();
        im += x * theta.cos();
    }
    let scale = 2.0 / (cycles * ts) as f64;
    let (a, b) = (re * scale, im * scale);
    // x ≈ a sin θ + b cos θ = amp sin(θ + angle)
    ((a * a + b * b).sqrt(), b.atan2(a))
}

/// Adds an arc-like distortion to one phase inside the fault window and labels
/// the recording. Samples outside the window and other phases are untouched.
pub fn inject_hif(record: &WaveformRecord, config: &HifConfig) -> Result<WaveformRecord> {
    config.validate(record.duration_seconds())?;
    let ts = record.ts();
    let sr = record.sample_rate();
    let start = (config.start_s * sr).round() as usize;
    let end = ((config.end_s * sr).round() as usize).min(record.len());
    if start >= end {
        return Err(HifError::InvalidConfig(format!(
            "start_s: fault window [{}, {}) s is empty at this sample rate",
            config.start_s, config.end_s
        )));
    }
    let phase_idx = record
        .phases()
        .iter()
        .position(|p| p.name == config.phase)
        .ok_or_else(|| {
            HifError::InvalidConfig(format!("phase: {:?} is not in the recording", config.phase))
        })?;

    let mut out = record.clone();
    let label = FaultLabel {
        start_sample: start,
        end_sample: end,
        phase: config.phase.clone(),
    };
    if config.magnitude > 0.0 {
        let samples = &mut out.phases_mut()[phase_idx].samples;
        let (amplitude, angle) = fundamental_phasor(samples, ts, start);
        let mut rng = SeededRng::new(SeededRng::derive_seed(config.seed, 0xA4C));
        let half = std::f64::consts::PI;
        let mut current_half: Option<i64> = None;
        let mut half_magnitude = 0.0;
        let mut extinction = 0.0;
        let mut current_cycle = usize::MAX;
        let mut dropped = false;
        for (k, s) in samples.iter_mut().enumerate().take(end).skip(start) {
            let cycle = k / ts;
            if cycle != current_cycle {
                current_cycle = cycle;
                dropped = rng.bernoulli(config.dropout_probability);
            }
            let theta = std::f64::consts::TAU * k as f64 / ts as f64 + angle;
            let half_index = (theta / half).floor() as i64;
            if current_half != Some(half_index) {
                current_half = Some(half_index);
                let positive = half_index.rem_euclid(2) == 0;
                let skew = if positive { 1.0 + config.asymmetry } else { 1.0 - config.asymmetry };
                half_magnitude = (config.magnitude * skew * (1.0 + config.randomness * rng.normal())).max(0.0);
                extinction = rng.uniform_range(0.0, config.max_extinction);
            }
            if dropped {
                continue;
            }
            let within = theta / half - half_index as f64;
            if within < extinction {
                continue;
            }
            let since_start = (k - start) as f64 / ts as f64;
            let ramp = if config.buildup_cycles > 0.0 {
                ((since_start + 1.0) / config.buildup_cycles).min(1.0)
            } else {
                1.0
            };
            let arc = amplitude * half_magnitude * ramp * theta.sin();
            if arc != 0.0 {
                *s += arc;
            }
        }
    }
    out.set_label(Some(label))?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseKind {
    Load,
    Fault,
}

/// Shape of a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub n_load_profiles: usize,
    pub n_fault_cases: usize,
    pub base_seed: u64,
    pub duration_s: f64,
    pub ts: usize,
    /// Fault magnitudes cycled through by the fault cases.
    pub severities: Vec<f64>,
    /// Template for every fault; magnitude and seed are set per case.
    pub fault: HifConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_load_profiles: 4,
            n_fault_cases: 12,
            base_seed: 2023,
            duration_s: 180.0,
            ts: DEFAULT_TS,
            severities: vec![0.0, 0.05, 0.1, 0.15],
            fault: HifConfig::default(),
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_load_profiles == 0 {
            return Err(HifError::InvalidConfig("n_load_profiles: must be at least 1".into()));
        }
        if self.n_fault_cases > 0 && self.severities.is_empty() {
            return Err(HifError::InvalidConfig("severities: must not be empty".into()));
        }
        if let Some(s) = self.severities.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(HifError::InvalidConfig(format!("severities: {s} is not a magnitude")));
        }
        if self.ts == 0 {
            return Err(HifError::InvalidConfig("ts: must be positive".into()));
        }
        if whole_cycles(self.duration_s, DEFAULT_FREQUENCY_HZ) == 0 {
            return Err(HifError::InvalidConfig(format!(
                "duration_s: {} s is shorter than one cycle",
                self.duration_s
            )));
        }
        if self.n_fault_cases > 0 {
            self.fault.validate(self.duration_s)?;
        }
        Ok(())
    }

    pub fn load_profile(&self, index: usize) -> LoadProfile {
        LoadProfile::random(SeededRng::derive_seed(self.base_seed, index as u64))
    }

    /// Profile index and magnitude of fault case `i`.
    pub fn fault_case(&self, i: usize) -> (usize, f64) {
        let n_sev = self.severities.len();
        let profile = (i / n_sev + i) % self.n_load_profiles;
        (profile, self.severities[i % n_sev])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub name: String,
    pub kind: CaseKind,
    pub profile_index: usize,
    pub severity: Option<f64>,
    pub seed: u64,
    pub record: WaveformRecord,
}

/// Load recordings followed by fault recordings, all reproducible from the
/// configuration.
pub fn make_corpus(config: &CorpusConfig) -> Result<Vec<CorpusEntry>> {
    config.validate()?;
    let mut entries = Vec::with_capacity(config.n_load_profiles + config.n_fault_cases);
    for i in 0..config.n_load_profiles {
        let profile = config.load_profile(i);
        entries.push(CorpusEntry {
            name: format!("load_{i:02}"),
            kind: CaseKind::Load,
            profile_index: i,
            severity: None,
            seed: profile.seed,
            record: gen_load(&profile, config.duration_s, config.ts)?,
        });
    }
    for i in 0..config.n_fault_cases {
        let (profile_index, magnitude) = config.fault_case(i);
        let seed = SeededRng::derive_seed(config.base_seed, 10_000 + i as u64);
        let profile = LoadProfile {
            seed,
            ..config.load_profile(profile_index)
        };
        let base = gen_load(&profile, config.duration_s, config.ts)?;
        let fault = HifConfig {
            magnitude,
            seed,
            ..config.fault.clone()
        };
        entries.push(CorpusEntry {
            name: format!("fault_{i:02}"),
            kind: CaseKind::Fault,
            profile_index,
            severity: Some(magnitude),
            seed,
            record: inject_hif(&base, &fault)?,
        });
    }
    Ok(entries)
}
