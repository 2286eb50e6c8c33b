use std::sync::OnceLock;

use hif_core::detector::{run_recording, MonitorModels};
use hif_core::pipeline::{train_models, PipelineConfig};
use hif_core::synthgen::{gen_load, inject_hif, CorpusConfig, HifConfig, LoadProfile};

fn models() -> &'static MonitorModels {
    static MODELS: OnceLock<MonitorModels> = OnceLock::new();
    MODELS.get_or_init(|| {
        let corpus = CorpusConfig::default();
        let recs: Vec<_> = (0..3)
            .map(|i| gen_load(&corpus.load_profile(i), 90.0, 320).unwrap())
            .collect();
        train_models(&recs, &PipelineConfig::default()).unwrap().0
    })
}

fn fault_recording(seed: u64, magnitude: f64, phase: &str) -> hif_core::WaveformRecord {
    let profile = LoadProfile {
        seed,
        ..CorpusConfig::default().load_profile(3)
    };
    let base = gen_load(&profile, 60.0, 320).unwrap();
    inject_hif(
        &base,
        &HifConfig {
            start_s: 20.0,
            end_s: 50.0,
            phase: phase.into(),
            magnitude,
            seed,
            ..HifConfig::default()
        },
    )
    .unwrap()
}

#[test]
fn detection_rate_grows_with_severity() {
    let severities = [0.0, 0.03, 0.06, 0.1, 0.15];
    let seeds = 100..106u64;
    let mut rates = Vec::new();
    for &mag in &severities {
        let mut detected = 0;
        let mut exceed = 0.0;
        for seed in seeds.clone() {
            let rec = fault_recording(seed, mag, "A");
            let d = run_recording(&rec, models(), 60).unwrap();
            let a = d.phase_summary("A").unwrap();
            detected += usize::from(a.first_trip_cycle.is_some_and(|c| c >= 1200));
            let window = &d.traces[0].outputs[1200..3000];
            exceed += window.iter().filter(|o| o.above_limit).count() as f64 / window.len() as f64;
        }
        rates.push((detected, exceed / seeds.clone().count() as f64));
    }
    for pair in rates.windows(2) {
        assert!(pair[1].0 >= pair[0].0, "detections not monotone: {rates:?}");
        assert!(pair[1].1 >= pair[0].1, "exceedance not monotone: {rates:?}");
    }
    assert_eq!(rates[0].0, 0, "{rates:?}");
    assert_eq!(rates.last().unwrap().0, 6, "{rates:?}");
}

#[test]
fn phases_are_detected_independently() {
    for phase in ["B", "C"] {
        let rec = fault_recording(7, 0.15, phase);
        let d = run_recording(&rec, models(), 60).unwrap();
        for s in &d.summary {
            assert_eq!(s.tripped, s.phase == phase, "fault on {phase}: {:?}", d.summary);
        }
        // the untouched phases give the same trace as the clean recording
        let clean = fault_recording(7, 0.0, phase);
        let dc = run_recording(&clean, models(), 60).unwrap();
        for (t, tc) in d.traces.iter().zip(&dc.traces) {
            if t.phase != phase {
                assert_eq!(t.outputs, tc.outputs);
            }
        }
    }
}
