//! File formats: waveform CSV with its `.meta` sidecar, per-phase detection
//! traces and the line-delimited event log.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detector::{DetectionEvent, DetectionOutput};
use crate::error::{HifError, Result};
use crate::signal_prep::{FaultLabel, PhaseSignal, WaveformRecord};

pub const WAVEFORM_HEADER: [&str; 4] = ["sample_index", "phase_a", "phase_b", "phase_c"];
pub const TRACE_HEADER: &str = "cycle_index,phi,limit,above,counter,trip";

/// Contents of the `.meta` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub ts: usize,
    pub sample_rate: f64,
    pub fault_start_sample: Option<usize>,
    pub fault_end_sample: Option<usize>,
    pub faulted_phase: Option<String>,
}

impl RecordingMeta {
    pub fn of(record: &WaveformRecord) -> Self {
        let label = record.label();
        Self {
            ts: record.ts(),
            sample_rate: record.sample_rate(),
            fault_start_sample: label.map(|l| l.start_sample),
            fault_end_sample: label.map(|l| l.end_sample),
            faulted_phase: label.map(|l| l.phase.clone()),
        }
    }

    pub fn label(&self) -> Result<Option<FaultLabel>> {
        match (self.fault_start_sample, self.fault_end_sample, &self.faulted_phase) {
            (None, None, None) => Ok(None),
            (Some(start_sample), Some(end_sample), Some(phase)) => Ok(Some(FaultLabel {
                start_sample,
                end_sample,
                phase: phase.clone(),
            })),
            _ => Err(HifError::InvalidConfig(
                "meta: fault_start_sample, fault_end_sample and faulted_phase must be set together".into(),
            )),
        }
    }
}

/// `<dir>/<stem>.meta` next to a waveform CSV.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HifError::io(path, e))
}

/// Writes the waveform CSV and its sidecar.
pub fn write_recording(csv_path: &Path, record: &WaveformRecord) -> Result<()> {
    if record.phases().len() != 3 {
        return Err(HifError::Shape(format!(
            "waveform CSV holds exactly 3 phases, recording has {}",
            record.phases().len()
        )));
    }
    let mut w = create(csv_path)?;
    let io_err = |e| HifError::io(csv_path, e);
    writeln!(w, "{}", WAVEFORM_HEADER.join(",")).map_err(io_err)?;
    let [a, b, c] = [0, 1, 2].map(|i| &record.phases()[i].samples);
    for i in 0..record.len() {
        writeln!(w, "{i},{},{},{}", a[i], b[i], c[i]).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    write_meta(&meta_path(csv_path), &RecordingMeta::of(record))
}

pub fn write_meta(path: &Path, meta: &RecordingMeta) -> Result<()> {
    write_json(path, meta)
}

pub fn read_meta(path: &Path) -> Result<RecordingMeta> {
    read_json(path)
}

/// Reads a waveform CSV plus its required sidecar.
pub fn read_recording(csv_path: &Path) -> Result<WaveformRecord> {
    let meta = read_meta(&meta_path(csv_path))?;
    let phases = read_waveform_csv(csv_path)?;
    let mut record = WaveformRecord::new(meta.ts, meta.sample_rate, phases)?;
    record.set_label(meta.label()?)?;
    Ok(record)
}

/// Parses the three phase columns of a waveform CSV.
pub fn read_waveform_csv(path: &Path) -> Result<Vec<PhaseSignal>> {
    let file = File::open(path).map_err(|e| HifError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let parse_err = |message: String| HifError::Parse {
        context: path.display().to_string(),
        message,
    };
    let header = reader.headers().map_err(|e| parse_err(e.to_string()))?.clone();
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != WAVEFORM_HEADER {
        return Err(parse_err(format!(
            "header {got:?}, expected {:?}",
            WAVEFORM_HEADER
        )));
    }
    let mut cols: [Vec<f64>; 3] = Default::default();
    let mut row = csv::StringRecord::new();
    let mut line = 0usize;
    while reader.read_record(&mut row).map_err(|e| parse_err(e.to_string()))? {
        if row.len() != 4 {
            return Err(parse_err(format!("row {line} has {} fields", row.len())));
        }
        let index: usize = row[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(format!("row {line} sample_index: {e}")))?;
        if index != line {
            return Err(parse_err(format!("row {line} has sample_index {index}")));
        }
        for (k, col) in cols.iter_mut().enumerate() {
            let v: f64 = row[k + 1]
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("row {line} {}: {e}", WAVEFORM_HEADER[k + 1])))?;
            col.push(v);
        }
        line += 1;
    }
    let [a, b, c] = cols;
    Ok(vec![
        PhaseSignal { name: "A".into(), samples: a },
        PhaseSignal { name: "B".into(), samples: b },
        PhaseSignal { name: "C".into(), samples: c },
    ])
}

/// Writes one phase's detection trace.
pub fn write_trace_csv(path: &Path, outputs: &[DetectionOutput]) -> Result<()> {
    let mut w = create(path)?;
    let io_err = |e| HifError::io(path, e);
    writeln!(w, "{TRACE_HEADER}").map_err(io_err)?;
    for o in outputs {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            o.cycle_index,
            o.phi,
            o.limit,
            u8::from(o.above_limit),
            o.counter,
            u8::from(o.trip_issued)
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<DetectionOutput>> {
    let file = File::open(path).map_err(|e| HifError::io(path, e))?;
    let parse_err = |message: String| HifError::Parse {
        context: path.display().to_string(),
        message,
    };
    let mut lines = BufReader::new(file).lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == TRACE_HEADER => {}
        _ => return Err(parse_err(format!("missing header {TRACE_HEADER:?}"))),
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| HifError::io(path, e))?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(parse_err(format!("line {} has {} fields", n + 2, f.len())));
        }
        let bad = |what: &str| parse_err(format!("line {}: bad {what}", n + 2));
        let flag = |s: &str, what: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(bad(what)),
        };
        out.push(DetectionOutput {
            cycle_index: f[0].parse().map_err(|_| bad("cycle_index"))?,
            phi: f[1].parse().map_err(|_| bad("phi"))?,
            limit: f[2].parse().map_err(|_| bad("limit"))?,
            above_limit: flag(f[3], "above")?,
            counter: f[4].parse().map_err(|_| bad("counter"))?,
            trip_issued: flag(f[5], "trip")?,
        });
    }
    Ok(out)
}

/// One JSON object per line.
pub fn write_event_log(path: &Path, events: &[DetectionEvent]) -> Result<()> {
    let mut w = create(path)?;
    for e in events {
        let line = serde_json::to_string(e).map_err(|err| HifError::Parse {
            context: path.display().to_string(),
            message: err.to_string(),
        })?;
        writeln!(w, "{line}").map_err(|err| HifError::io(path, err))?;
    }
    w.flush().map_err(|e| HifError::io(path, e))
}

pub fn read_event_log(path: &Path) -> Result<Vec<DetectionEvent>> {
    let file = File::open(path).map_err(|e| HifError::io(path, e))?;
    BufReader::new(file)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|l| {
            let l = l.map_err(|e| HifError::io(path, e))?;
            serde_json::from_str(&l).map_err(|e| HifError::Parse {
                context: path.display().to_string(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Pretty-printed JSON document.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| HifError::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    writeln!(w).map_err(|e| HifError::io(path, e))?;
    w.flush().map_err(|e| HifError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| HifError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| HifError::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })
}
