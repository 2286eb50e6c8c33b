//! Command implementations behind the `hif` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use hif_core::detector::{run_recording, DetectionEvent, PhaseSummary, RecordingDetection};
use hif_core::io::{self as hio, RecordingMeta};
use hif_core::metrics::{self, CaseLabel, CaseOutcome, CaseResult, ConfusionCounts, DetectionMetrics};
use hif_core::rng::GENERATOR_NAME;
use hif_core::synthgen::{make_corpus, CaseKind, CorpusConfig};
use hif_core::{HifError, ModelFile, PipelineConfig, TrainConfig, WaveformRecord};

pub const SEED_ENV: &str = "HIF_SEED";
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "hif", version, about = "High-impedance fault detection on current waveforms")]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus of load and fault recordings.
    Simulate(SimulateArgs),
    /// Fit the autoencoder and PCA monitor on load recordings.
    Train(TrainArgs),
    /// Run the detector over one recording.
    Detect(DetectArgs),
    /// Score the detector on every recording of a manifest.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Corpus configuration (JSON). Missing keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the base seed of the configuration.
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Load recordings (CSV with a .meta sidecar) or corpus manifests, whose
    /// load entries are used.
    #[arg(required = true)]
    pub recordings: Vec<PathBuf>,
    #[arg(long, default_value_t = 320)]
    pub ts: usize,
    #[arg(long = "vars", default_value_t = 32)]
    pub m_vars: usize,
    /// Layer widths, input to output.
    #[arg(long, value_delimiter = ',', default_value = "32,15,10,15,32")]
    pub layers: Vec<usize>,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.95)]
    pub cpv: f64,
    #[arg(long, default_value_t = 0.99)]
    pub alpha: f64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Trip threshold stored in the model file.
    #[arg(long, default_value_t = hif_core::DEFAULT_TRIP_THRESHOLD)]
    pub threshold: u32,
    /// Also write the training report (losses per epoch, limits) as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    pub model: PathBuf,
    pub recording: PathBuf,
    /// Defaults to the threshold stored in the model.
    #[arg(long)]
    pub threshold: Option<u32>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub model: PathBuf,
    pub manifest: PathBuf,
    #[arg(long)]
    pub threshold: Option<u32>,
    /// Seconds after the fault ends in which a trip still counts.
    #[arg(long, default_value_t = metrics::DEFAULT_GRACE_SECONDS)]
    pub grace: f64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub kind: CaseKind,
    /// CSV path relative to the manifest.
    pub file: String,
    pub meta: String,
    pub profile_index: usize,
    pub severity: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub config: CorpusConfig,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> hif_core::Result<Self> {
        hio::read_json(path)
    }

    pub fn resolve(manifest_path: &Path, file: &str) -> PathBuf {
        manifest_path.parent().unwrap_or(Path::new(".")).join(file)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseReport {
    pub name: String,
    pub kind: CaseKind,
    pub outcome: CaseOutcome,
    pub phases: Vec<PhaseSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub model: String,
    pub manifest: String,
    pub threshold: u32,
    pub grace_seconds: f64,
    pub counts: ConfusionCounts,
    pub metrics: DetectionMetrics,
    pub cases: Vec<CaseReport>,
}

/// Maps a failure to the process exit code: 2 for configuration and
/// validation problems, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let validation = err
        .chain()
        .any(|e| e.downcast_ref::<HifError>().is_some_and(HifError::is_validation));
    if validation {
        2
    } else {
        1
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Detect(a) => cmd_detect(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

pub fn cmd_simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let mut config = match &args.config {
        Some(path) => hio::read_json::<CorpusConfig>(path)?,
        None => CorpusConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.base_seed = seed;
    }
    config.validate()?;
    create_dir(&args.out)?;

    let corpus = make_corpus(&config)?;
    let entries = corpus
        .par_iter()
        .map(|e| {
            let file = format!("{}.csv", e.name);
            let path = args.out.join(&file);
            hio::write_recording(&path, &e.record)?;
            let meta = hio::meta_path(&path);
            Ok(ManifestEntry {
                name: e.name.clone(),
                kind: e.kind,
                file,
                meta: meta.file_name().unwrap().to_string_lossy().into_owned(),
                profile_index: e.profile_index,
                severity: e.severity,
                seed: e.seed,
            })
        })
        .collect::<hif_core::Result<Vec<_>>>()?;
    let manifest = Manifest {
        generator: GENERATOR_NAME.to_string(),
        config,
        entries,
    };
    let manifest_path = args.out.join(MANIFEST_NAME);
    hio::write_json(&manifest_path, &manifest)?;

    let n_load = manifest.entries.iter().filter(|e| e.kind == CaseKind::Load).count();
    println!(
        "wrote {n_load} load and {} fault recordings to {}",
        manifest.entries.len() - n_load,
        args.out.display()
    );
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

/// Expands manifests into their load recordings; other paths are taken as is.
fn training_paths(inputs: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.extension().is_some_and(|e| e == "json") {
            let m = Manifest::load(p)?;
            out.extend(
                m.entries
                    .iter()
                    .filter(|e| e.kind == CaseKind::Load)
                    .map(|e| Manifest::resolve(p, &e.file)),
            );
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        bail!(HifError::InvalidConfig("recordings: no load recordings given".into()));
    }
    Ok(out)
}

pub fn cmd_train(args: &TrainArgs) -> anyhow::Result<()> {
    let config = PipelineConfig {
        ts: args.ts,
        m_vars: args.m_vars,
        layer_dims: args.layers.clone(),
        train: TrainConfig {
            learning_rate: args.lr,
            epochs: args.epochs,
            batch_size: args.batch,
            seed: args.seed,
            ..TrainConfig::default()
        },
        cpv_target: args.cpv,
        alpha: args.alpha,
        ..PipelineConfig::default()
    };
    config.validate()?;
    hif_core::detector::validate_threshold(args.threshold)?;

    let mut recordings = Vec::new();
    for path in training_paths(&args.recordings)? {
        let rec = hio::read_recording(&path)?;
        if let Some(f) = rec.label() {
            log::warn!("{} is labelled as a {} fault; training on it anyway", path.display(), f.phase);
        }
        log::info!("loaded {} ({} samples)", path.display(), rec.len());
        recordings.push(rec);
    }

    let (models, report) = hif_core::train_models(&recordings, &config)?;
    let file = ModelFile::new(config, models, args.threshold)?;
    file.save(&args.out)?;
    if let Some(path) = &args.report {
        hio::write_json(path, &report)?;
    }

    let last = report.history.last().context("training produced no epochs")?;
    println!(
        "cycles: {} ({} train, {} validation)",
        report.n_cycles, report.n_train, report.n_validation
    );
    println!(
        "final loss: train {:.6e}, validation {:.6e} (epoch {})",
        last.train_loss, last.validation_loss, last.epoch
    );
    println!("components: l = {}", report.n_components);
    println!("spe weighting: g = {:.6}, h = {:.4}", report.g, report.h);
    println!(
        "limits: T2 {:.4}, SPE {:.4}, phi {:.4}",
        report.t2_limit, report.spe_limit, report.phi_limit
    );
    println!("model: {}", args.out.display());
    Ok(())
}

fn write_detection(dir: &Path, det: &RecordingDetection) -> anyhow::Result<()> {
    create_dir(dir)?;
    for t in &det.traces {
        hio::write_trace_csv(&dir.join(format!("trace_{}.csv", t.phase)), &t.outputs)?;
    }
    hio::write_event_log(&dir.join("events.jsonl"), &det.events)?;
    hio::write_json(&dir.join("summary.json"), &det.summary)?;
    Ok(())
}

pub fn summary_lines(det: &RecordingDetection) -> Vec<String> {
    det.summary
        .iter()
        .map(|s| match (s.first_trip_cycle, s.first_trip_time_s) {
            (Some(c), Some(t)) => format!("phase {}: trip at {t:.3} s (cycle {c})", s.phase),
            _ => format!("phase {}: no trip", s.phase),
        })
        .collect()
}

pub fn cmd_detect(args: &DetectArgs) -> anyhow::Result<()> {
    let model = ModelFile::load(&args.model)?;
    let threshold = args.threshold.unwrap_or(model.threshold);
    let rec = hio::read_recording(&args.recording)?;
    let det = run_recording(&rec, &model.models, threshold)?;
    write_detection(&args.out, &det)?;

    let skipped = det
        .events
        .iter()
        .filter(|e| matches!(e, DetectionEvent::SkippedCycle { .. }))
        .count();
    println!("{} (threshold {threshold})", args.recording.display());
    for line in summary_lines(&det) {
        println!("  {line}");
    }
    if skipped > 0 {
        println!("  skipped cycles: {skipped}");
    }
    println!("traces: {}", args.out.display());
    Ok(())
}

fn case_label(name: &str, rec: &WaveformRecord) -> CaseLabel {
    CaseLabel {
        name: name.to_string(),
        fault: rec.label().cloned(),
        ts: rec.ts(),
        sample_rate: rec.sample_rate(),
    }
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> anyhow::Result<()> {
    let model = ModelFile::load(&args.model)?;
    let threshold = args.threshold.unwrap_or(model.threshold);
    hif_core::detector::validate_threshold(threshold)?;
    if !(args.grace >= 0.0 && args.grace.is_finite()) {
        bail!(HifError::InvalidConfig(format!("grace: {} is not a duration", args.grace)));
    }
    let manifest = Manifest::load(&args.manifest)?;
    let paths: Vec<(PathBuf, PathBuf)> = manifest
        .entries
        .iter()
        .map(|e| {
            (
                Manifest::resolve(&args.manifest, &e.file),
                Manifest::resolve(&args.manifest, &e.meta),
            )
        })
        .collect();
    let missing: Vec<String> = paths
        .iter()
        .flat_map(|(csv, meta)| [csv, meta])
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        bail!("missing recordings:\n  {}", missing.join("\n  "));
    }

    let cases = manifest
        .entries
        .par_iter()
        .zip(&paths)
        .map(|(e, (csv, meta))| {
            let rec = hio::read_recording(csv)?;
            // the sidecar named in the manifest must agree with the one read
            let listed = hio::read_meta(meta)?;
            if listed != RecordingMeta::of(&rec) {
                return Err(HifError::InvalidInput(format!(
                    "{}: metadata differs from {}",
                    csv.display(),
                    meta.display()
                )));
            }
            let det = run_recording(&rec, &model.models, threshold)?;
            Ok((
                case_label(&e.name, &rec),
                CaseResult {
                    name: e.name.clone(),
                    phases: det.summary,
                },
            ))
        })
        .collect::<hif_core::Result<Vec<_>>>()?;

    let mut reports = Vec::with_capacity(cases.len());
    for ((label, result), entry) in cases.iter().zip(&manifest.entries) {
        reports.push(CaseReport {
            name: entry.name.clone(),
            kind: entry.kind,
            outcome: metrics::score_case(label, result, args.grace)?,
            phases: result.phases.clone(),
        });
    }
    let (labels, results): (Vec<_>, Vec<_>) = cases.into_iter().unzip();
    let counts = metrics::score_corpus(&labels, &results, args.grace)?;
    let m = metrics::compute(&counts)?;

    let mut by_outcome: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for r in &reports {
        if matches!(r.outcome, CaseOutcome::FalsePositive | CaseOutcome::FalseNegative) {
            by_outcome
                .entry(format!("{:?}", r.outcome))
                .or_default()
                .push(&r.name);
        }
    }

    println!(
        "{} recordings, threshold {threshold}, grace {} s",
        reports.len(),
        args.grace
    );
    println!(
        "TP {}  TN {}  FP {}  FN {}",
        counts.tp, counts.tn, counts.fp, counts.fn_
    );
    print!("{}", metrics::render_table(&[("AE + PCA", m)]));
    for (outcome, names) in &by_outcome {
        println!("{outcome}: {}", names.join(", "));
    }

    if let Some(path) = &args.report {
        let report = EvaluationReport {
            model: args.model.display().to_string(),
            manifest: args.manifest.display().to_string(),
            threshold,
            grace_seconds: args.grace,
            counts,
            metrics: m,
            cases: reports,
        };
        hio::write_json(path, &report)?;
        println!("report: {}", path.display());
    }
    Ok(())
}
