//! Case-level detection metrics.

use serde::{Deserialize, Serialize};

use crate::detector::PhaseSummary;
use crate::error::{HifError, Result};
use crate::signal_prep::FaultLabel;

/// Grace period after the fault window during which a trip still counts.
pub const DEFAULT_GRACE_SECONDS: f64 = 10.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// The five percentages; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub accuracy: Option<f64>,
    pub security: Option<f64>,
    pub dependability: Option<f64>,
    pub safety: Option<f64>,
    pub sensibility: Option<f64>,
}

fn percent(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64 * 100.0)
}

pub fn compute(c: &ConfusionCounts) -> Result<DetectionMetrics> {
    if c.total() == 0 {
        return Err(HifError::InvalidInput("all confusion counts are zero".into()));
    }
    Ok(DetectionMetrics {
        accuracy: percent(c.tp + c.tn, c.total()),
        security: percent(c.tn, c.tn + c.fp),
        dependability: percent(c.tp, c.tp + c.fn_),
        safety: percent(c.tn, c.tn + c.fn_),
        sensibility: percent(c.tp, c.tp + c.fp),
    })
}

impl DetectionMetrics {
    pub fn as_array(&self) -> [Option<f64>; 5] {
        [
            self.accuracy,
            self.security,
            self.dependability,
            self.safety,
            self.sensibility,
        ]
    }
}

pub const METRIC_NAMES: [&str; 5] = ["Acc", "Sec", "Dep", "Saf", "Sen"];

/// Formats a metric for display: one decimal, trailing `.0` dropped, `n/a` when undefined.
pub fn format_metric(v: Option<f64>) -> String {
    match v {
        None => "n/a".to_string(),
        Some(x) => {
            let s = format!("{x:.1}");
            format!("{}%", s.strip_suffix(".0").unwrap_or(&s))
        }
    }
}

/// Plain-text table with one row per method.
pub fn render_table(rows: &[(&str, DetectionMetrics)]) -> String {
    let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(8);
    let col_w = 7;
    let mut out = format!("{:<name_w$}", "");
    for h in METRIC_NAMES {
        out.push_str(&format!(" | {h:>col_w$}"));
    }
    out.push('\n');
    out.push_str(&"-".repeat(name_w + METRIC_NAMES.len() * (col_w + 3)));
    out.push('\n');
    for (name, m) in rows {
        out.push_str(&format!("{name:<name_w$}"));
        for v in m.as_array() {
            out.push_str(&format!(" | {:>col_w$}", format_metric(v)));
        }
        out.push('\n');
    }
    out
}

/// Ground truth of one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseLabel {
    pub name: String,
    pub fault: Option<FaultLabel>,
    pub ts: usize,
    pub sample_rate: f64,
}

/// Detector outcome of one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub name: String,
    pub phases: Vec<PhaseSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseOutcome {
    TruePositive,
    TrueNegative,
    FalsePositive,
    FalseNegative,
}

/// Scores one recording.
///
/// A load case is a false positive if any phase trips. A fault case is a true
/// positive when the faulted phase trips inside the fault window (extended by
/// `grace_seconds`) and no other phase trips; a trip on any other phase, or a
/// faulted-phase trip outside the window, makes it a false positive; no trip
/// at all is a false negative.
pub fn score_case(label: &CaseLabel, result: &CaseResult, grace_seconds: f64) -> Result<CaseOutcome> {
    if label.name != result.name {
        return Err(HifError::InvalidInput(format!(
            "label {:?} paired with result {:?}",
            label.name, result.name
        )));
    }
    let Some(fault) = &label.fault else {
        return Ok(if result.phases.iter().any(|p| p.tripped) {
            CaseOutcome::FalsePositive
        } else {
            CaseOutcome::TrueNegative
        });
    };
    let faulted = result
        .phases
        .iter()
        .find(|p| p.phase == fault.phase)
        .ok_or_else(|| {
            HifError::InvalidInput(format!(
                "result for {:?} has no faulted phase {:?}",
                label.name, fault.phase
            ))
        })?;
    if result.phases.iter().any(|p| p.phase != fault.phase && p.tripped) {
        return Ok(CaseOutcome::FalsePositive);
    }
    let Some(cycle) = faulted.first_trip_cycle else {
        return Ok(CaseOutcome::FalseNegative);
    };
    // the trip is declared at the end of its cycle
    let trip_sample = (cycle as f64 + 1.0) * label.ts as f64;
    let lo = fault.start_sample as f64;
    let hi = fault.end_sample as f64 + grace_seconds * label.sample_rate;
    Ok(if trip_sample > lo && trip_sample <= hi {
        CaseOutcome::TruePositive
    } else {
        CaseOutcome::FalsePositive
    })
}

/// Scores a corpus. Labels and results are matched by position and name.
pub fn score_corpus(labels: &[CaseLabel], results: &[CaseResult], grace_seconds: f64) -> Result<ConfusionCounts> {
    if labels.len() != results.len() {
        return Err(HifError::InvalidInput(format!(
            "{} labels but {} detector summaries",
            labels.len(),
            results.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (l, r) in labels.iter().zip(results) {
        match score_case(l, r, grace_seconds)? {
            CaseOutcome::TruePositive => c.tp += 1,
            CaseOutcome::TrueNegative => c.tn += 1,
            CaseOutcome::FalsePositive => c.fp += 1,
            CaseOutcome::FalseNegative => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round1(v: Option<f64>) -> f64 {
        (v.unwrap() * 10.0).round() / 10.0
    }

    #[test]
    fn table_rows() {
        let r = compute(&ConfusionCounts::new(5, 15, 0, 9)).unwrap();
        assert_eq!(
            r.as_array().map(round1),
            [69.0, 100.0, 35.7, 62.5, 100.0]
        );
        assert!((r.accuracy.unwrap() - 68.965_517).abs() < 1e-5);
        let r = compute(&ConfusionCounts::new(7, 15, 0, 7)).unwrap();
        assert_eq!(r.as_array().map(round1), [75.9, 100.0, 50.0, 68.2, 100.0]);
    }

    #[test]
    fn zero_denominators_are_not_applicable() {
        let r = compute(&ConfusionCounts::new(0, 10, 0, 0)).unwrap();
        assert_eq!(r.accuracy, Some(100.0));
        assert_eq!(r.security, Some(100.0));
        assert_eq!(r.dependability, None);
        assert_eq!(r.safety, Some(100.0));
        assert_eq!(r.sensibility, None);
        assert!(compute(&ConfusionCounts::default()).is_err());
    }

    #[test]
    fn perfect_counts_give_hundred() {
        let r = compute(&ConfusionCounts::new(3, 4, 0, 0)).unwrap();
        assert!(r.as_array().iter().all(|v| *v == Some(100.0)));
    }

    #[test]
    fn formatting() {
        assert_eq!(format_metric(Some(100.0)), "100%");
        assert_eq!(format_metric(Some(35.714)), "35.7%");
        assert_eq!(format_metric(None), "n/a");
        let t = render_table(&[("AE + PCA", compute(&ConfusionCounts::new(7, 15, 0, 7)).unwrap())]);
        assert!(t.contains("Acc") && t.contains("75.9%") && t.contains("68.2%"));
    }

    fn phases(trips: [Option<u64>; 3]) -> Vec<PhaseSummary> {
        ["A", "B", "C"]
            .iter()
            .zip(trips)
            .map(|(p, t)| PhaseSummary {
                phase: p.to_string(),
                tripped: t.is_some(),
                first_trip_cycle: t,
                first_trip_time_s: None,
                skipped_cycles: 0,
            })
            .collect()
    }

    fn corpus(n_load: usize, n_fault: usize) -> Vec<CaseLabel> {
        let load = (0..n_load).map(|i| CaseLabel {
            name: format!("load_{i}"),
            fault: None,
            ts: 10,
            sample_rate: 600.0,
        });
        let fault = (0..n_fault).map(|i| CaseLabel {
            name: format!("fault_{i}"),
            fault: Some(FaultLabel {
                start_sample: 1000,
                end_sample: 2000,
                phase: "A".into(),
            }),
            ts: 10,
            sample_rate: 600.0,
        });
        load.chain(fault).collect()
    }

    fn results(labels: &[CaseLabel], f: impl Fn(&CaseLabel) -> [Option<u64>; 3]) -> Vec<CaseResult> {
        labels
            .iter()
            .map(|l| CaseResult {
                name: l.name.clone(),
                phases: phases(f(l)),
            })
            .collect()
    }

    #[test]
    fn perfect_and_silent_detectors() {
        let labels = corpus(4, 12);
        let perfect = results(&labels, |l| if l.fault.is_some() { [Some(150), None, None] } else { [None; 3] });
        assert_eq!(score_corpus(&labels, &perfect, 10.0).unwrap(), ConfusionCounts::new(12, 4, 0, 0));
        let silent = results(&labels, |_| [None; 3]);
        assert_eq!(score_corpus(&labels, &silent, 10.0).unwrap(), ConfusionCounts::new(0, 4, 0, 12));
    }

    #[test]
    fn healthy_phase_trip_is_false_positive() {
        let labels = corpus(1, 1);
        let r = results(&labels, |_| [None, Some(5), None]);
        let c = score_corpus(&labels, &r, 10.0).unwrap();
        assert_eq!(c.fp, 2);
    }

    #[test]
    fn trip_timing_window() {
        let labels = corpus(0, 1);
        let at = |cycle| score_case(&labels[0], &results(&labels, |_| [Some(cycle), None, None])[0], 10.0).unwrap();
        // window covers samples (1000, 2000 + 6000]
        assert_eq!(at(50), CaseOutcome::FalsePositive);
        assert_eq!(at(100), CaseOutcome::TruePositive);
        assert_eq!(at(799), CaseOutcome::TruePositive);
        assert_eq!(at(800), CaseOutcome::FalsePositive);
    }

    #[test]
    fn mismatched_inputs() {
        let labels = corpus(2, 0);
        let r = results(&labels[..1], |_| [None; 3]);
        assert!(score_corpus(&labels, &r, 10.0).is_err());
        let mut r = results(&labels, |_| [None; 3]);
        r[1].name = "other".into();
        assert!(score_corpus(&labels, &r, 10.0).is_err());
    }
}
