//! Waveform records, cycle augmentation and the two column scalers.
//!
//! A single-phase current waveform with `ts` samples per cycle becomes an
//! `N x M` matrix: row `i` holds every `ts / M`-th sample of cycle `i`.

use serde::{Deserialize, Serialize};

use crate::error::{HifError, Result};
use crate::linalg::Matrix;
use crate::rng::SeededRng;

/// Floor applied to scaler ranges and standard deviations.
pub const SCALE_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSignal {
    pub name: String,
    pub samples: Vec<f64>,
}

/// Location of a labeled fault inside a recording, in samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultLabel {
    pub start_sample: usize,
    /// Exclusive.
    pub end_sample: usize,
    pub phase: String,
}

/// Raw multi-phase current samples of one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformRecord {
    ts: usize,
    sample_rate: f64,
    phases: Vec<PhaseSignal>,
    label: Option<FaultLabel>,
}

impl WaveformRecord {
    pub fn new(ts: usize, sample_rate: f64, phases: Vec<PhaseSignal>) -> Result<Self> {
        if ts == 0 {
            return Err(HifError::InvalidConfig(
                "samples per cycle must be positive".into(),
            ));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(HifError::InvalidConfig(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if phases.is_empty() {
            return Err(HifError::InvalidInput("recording has no phases".into()));
        }
        let len = phases[0].samples.len();
        if let Some(p) = phases.iter().find(|p| p.samples.len() != len) {
            return Err(HifError::Shape(format!(
                "phase {} has {} samples, expected {len}",
                p.name,
                p.samples.len()
            )));
        }
        Ok(Self {
            ts,
            sample_rate,
            phases,
            label: None,
        })
    }

    pub fn with_label(mut self, label: FaultLabel) -> Result<Self> {
        self.set_label(Some(label))?;
        Ok(self)
    }

    pub fn set_label(&mut self, label: Option<FaultLabel>) -> Result<()> {
        if let Some(l) = &label {
            if l.start_sample >= l.end_sample || l.end_sample > self.len() {
                return Err(HifError::InvalidConfig(format!(
                    "fault window [{}, {}) is not inside [0, {})",
                    l.start_sample,
                    l.end_sample,
                    self.len()
                )));
            }
            if self.phase(&l.phase).is_none() {
                return Err(HifError::InvalidConfig(format!(
                    "faulted phase {:?} is not in the recording",
                    l.phase
                )));
            }
        }
        self.label = label;
        Ok(())
    }

    pub fn ts(&self) -> usize {
        self.ts
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn phases(&self) -> &[PhaseSignal] {
        &self.phases
    }

    pub fn phases_mut(&mut self) -> &mut [PhaseSignal] {
        &mut self.phases
    }

    pub fn phase(&self, name: &str) -> Option<&PhaseSignal> {
        self.phases.iter().find(|p| p.name == name)
    }

    pub fn label(&self) -> Option<&FaultLabel> {
        self.label.as_ref()
    }

    /// Samples per phase.
    pub fn len(&self) -> usize {
        self.phases[0].samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_cycles(&self) -> usize {
        self.len() / self.ts
    }

    pub fn duration_seconds(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }
}

/// Gap-sampled cycle matrix built from one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleMatrix {
    pub data: Matrix,
    pub ts: usize,
    pub m_vars: usize,
    pub gap: usize,
}

impl CycleMatrix {
    pub fn n_cycles(&self) -> usize {
        self.data.rows()
    }

    /// Concatenates matrices that share the same sampling layout.
    pub fn concat(parts: &[CycleMatrix]) -> Result<CycleMatrix> {
        let first = parts
            .first()
            .ok_or_else(|| HifError::InsufficientData("nothing to concatenate".into()))?;
        if let Some(p) = parts
            .iter()
            .find(|p| p.ts != first.ts || p.m_vars != first.m_vars)
        {
            return Err(HifError::Shape(format!(
                "cannot concatenate ts={} M={} with ts={} M={}",
                p.ts, p.m_vars, first.ts, first.m_vars
            )));
        }
        let mats: Vec<Matrix> = parts.iter().map(|p| p.data.clone()).collect();
        Ok(CycleMatrix {
            data: Matrix::vstack(&mats)?,
            ts: first.ts,
            m_vars: first.m_vars,
            gap: first.gap,
        })
    }
}

/// Returns the sampling gap `ts / m` or an error when `m` does not divide `ts`.
pub fn sampling_gap(ts: usize, m_vars: usize) -> Result<usize> {
    if ts == 0 || m_vars == 0 {
        return Err(HifError::InvalidConfig(format!(
            "ts and M must be positive, got ts={ts} M={m_vars}"
        )));
    }
    if ts % m_vars != 0 {
        return Err(HifError::InvalidConfig(format!(
            "M={m_vars} does not divide ts={ts}"
        )));
    }
    Ok(ts / m_vars)
}

/// Picks `m_vars` evenly spaced samples out of one cycle.
pub fn sample_cycle(cycle: &[f64], ts: usize, m_vars: usize) -> Result<Vec<f64>> {
    let gap = sampling_gap(ts, m_vars)?;
    if cycle.len() != ts {
        return Err(HifError::Shape(format!(
            "cycle has {} samples, expected {ts}",
            cycle.len()
        )));
    }
    Ok(cycle.iter().step_by(gap).copied().collect())
}

/// Builds the cycle matrix: `data[i][j] = signal[i * ts + j * gap]`.
/// Samples after the last complete cycle are dropped.
pub fn augment(signal: &[f64], ts: usize, m_vars: usize) -> Result<CycleMatrix> {
    let gap = sampling_gap(ts, m_vars)?;
    let n = signal.len() / ts;
    if n == 0 {
        return Err(HifError::InsufficientData(format!(
            "signal of {} samples is shorter than one cycle of {ts}",
            signal.len()
        )));
    }
    let mut data = Vec::with_capacity(n * m_vars);
    for cycle in signal.chunks_exact(ts) {
        data.extend(cycle.iter().step_by(gap));
    }
    Ok(CycleMatrix {
        data: Matrix::new(n, m_vars, data)?,
        ts,
        m_vars,
        gap,
    })
}

/// Per-column min-max scaler. Degenerate columns map to 0 and values outside
/// the fitted range are not clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.is_empty() {
            return Err(HifError::InsufficientData(
                "min-max fit needs a non-empty matrix".into(),
            ));
        }
        let mut min = x.row(0).to_vec();
        let mut max = min.clone();
        for row in x.iter_rows().skip(1) {
            for ((lo, hi), &v) in min.iter_mut().zip(max.iter_mut()).zip(row) {
                *lo = lo.min(v);
                *hi = hi.max(v);
            }
        }
        Ok(Self { min, max })
    }

    pub fn n_features(&self) -> usize {
        self.min.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.min.len() != self.max.len() || self.min.is_empty() {
            return Err(HifError::ModelFormat(format!(
                "min-max scaler has {} minima and {} maxima",
                self.min.len(),
                self.max.len()
            )));
        }
        for (j, (lo, hi)) in self.min.iter().zip(&self.max).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || hi < lo {
                return Err(HifError::ModelFormat(format!(
                    "min-max column {j}: max {hi} < min {lo}"
                )));
            }
        }
        Ok(())
    }

    pub fn apply_row(&self, x: &[f64], out: &mut [f64]) {
        for (((o, &v), &lo), &hi) in out.iter_mut().zip(x).zip(&self.min).zip(&self.max) {
            let range = hi - lo;
            *o = if range < SCALE_EPSILON { 0.0 } else { (v - lo) / range };
        }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        self.check_cols(x.cols())?;
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            self.apply_row(x.row(i), out.row_mut(i));
        }
        Ok(out)
    }

    /// Inverse affine map; degenerate columns map back to their minimum.
    pub fn inverse(&self, x: &Matrix) -> Result<Matrix> {
        self.check_cols(x.cols())?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((o, &lo), &hi) in out.row_mut(i).iter_mut().zip(&self.min).zip(&self.max) {
                let range = hi - lo;
                *o = if range < SCALE_EPSILON { lo } else { *o * range + lo };
            }
        }
        Ok(out)
    }

    fn check_cols(&self, cols: usize) -> Result<()> {
        if cols != self.n_features() {
            return Err(HifError::Shape(format!(
                "matrix has {cols} columns, scaler expects {}",
                self.n_features()
            )));
        }
        Ok(())
    }
}

/// Per-column standardization with the sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ZScoreScaler {
    pub fn fit(x: &Matrix) -> Result<Self> {
        let n = x.rows();
        if n < 2 || x.cols() == 0 {
            return Err(HifError::InsufficientData(format!(
                "z-score fit needs at least 2 rows, got {n}"
            )));
        }
        let mut mean = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; x.cols()];
        for row in x.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| (s / (n - 1) as f64).sqrt().max(SCALE_EPSILON))
            .collect();
        Ok(Self { mean, std })
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() || self.mean.is_empty() {
            return Err(HifError::ModelFormat(format!(
                "z-score scaler has {} means and {} deviations",
                self.mean.len(),
                self.std.len()
            )));
        }
        for (j, (m, s)) in self.mean.iter().zip(&self.std).enumerate() {
            if !m.is_finite() || !s.is_finite() || *s < SCALE_EPSILON {
                return Err(HifError::ModelFormat(format!(
                    "z-score column {j}: mean {m}, std {s}"
                )));
            }
        }
        Ok(())
    }

    pub fn apply_row(&self, x: &[f64], out: &mut [f64]) {
        for (((o, v), m), s) in out.iter_mut().zip(x).zip(&self.mean).zip(&self.std) {
            *o = (v - m) / s;
        }
    }

    pub fn apply_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features() {
            return Err(HifError::Shape(format!(
                "vector has {} entries, scaler expects {}",
                x.len(),
                self.n_features()
            )));
        }
        let mut out = vec![0.0; x.len()];
        self.apply_row(x, &mut out);
        Ok(out)
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.n_features() {
            return Err(HifError::Shape(format!(
                "matrix has {} columns, scaler expects {}",
                x.cols(),
                self.n_features()
            )));
        }
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            self.apply_row(x.row(i), out.row_mut(i));
        }
        Ok(out)
    }

    pub fn inverse(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.n_features() {
            return Err(HifError::Shape(format!(
                "matrix has {} columns, scaler expects {}",
                x.cols(),
                self.n_features()
            )));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((o, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.std) {
                *o = *o * s + m;
            }
        }
        Ok(out)
    }
}

/// Shuffles rows with `seed` and splits them into train and validation parts.
///
/// The train size is `round(n * train_fraction)`, kept within `[1, n - 1]`.
pub fn split(x: &Matrix, train_fraction: f64, seed: u64) -> Result<(Matrix, Matrix)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(HifError::InvalidConfig(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = x.rows();
    if n < 2 {
        return Err(HifError::InsufficientData(format!(
            "split needs at least 2 rows, got {n}"
        )));
    }
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let (train_idx, val_idx) = order.split_at(n_train);
    Ok((x.select_rows(train_idx), x.select_rows(val_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(values: &[f64]) -> Matrix {
        Matrix::from_rows(values.iter().map(|&v| vec![v]).collect()).unwrap()
    }

    #[test]
    fn augment_gap_two() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let m = augment(&s, 4, 2).unwrap();
        assert_eq!(m.data.to_rows(), vec![vec![1.0, 3.0], vec![5.0, 7.0]]);
        assert_eq!(m.gap, 2);
    }

    #[test]
    fn augment_gap_one_is_reshape() {
        let m = augment(&[1.0, 2.0, 3.0, 4.0], 2, 2).unwrap();
        assert_eq!(m.data.to_rows(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn augment_default_layout() {
        let s: Vec<f64> = (0..3200).map(f64::from).collect();
        let m = augment(&s, 320, 32).unwrap();
        assert_eq!((m.data.rows(), m.data.cols(), m.gap), (10, 32, 10));
        assert_eq!(m.data[(3, 5)], (3 * 320 + 5 * 10) as f64);
    }

    #[test]
    fn augment_drops_partial_cycle() {
        let m = augment(&[1.0, 2.0, 3.0, 4.0, 5.0], 2, 1).unwrap();
        assert_eq!(m.data.to_rows(), vec![vec![1.0], vec![3.0]]);
    }

    #[test]
    fn augment_errors() {
        assert!(matches!(
            augment(&[0.0; 10], 10, 3),
            Err(HifError::InvalidConfig(_))
        ));
        assert!(matches!(
            augment(&[0.0; 3], 4, 2),
            Err(HifError::InsufficientData(_))
        ));
    }

    #[test]
    fn minmax_fit_examples() {
        let s = MinMaxScaler::fit(&col(&[0.0, 5.0, 10.0])).unwrap();
        assert_eq!((s.min[0], s.max[0]), (0.0, 10.0));
        let s = MinMaxScaler::fit(&col(&[3.0, 3.0, 3.0])).unwrap();
        assert_eq!((s.min[0], s.max[0]), (3.0, 3.0));
        let m = Matrix::from_rows(vec![vec![0.0, 2.0], vec![4.0, 6.0]]).unwrap();
        let s = MinMaxScaler::fit(&m).unwrap();
        assert_eq!(s.min, vec![0.0, 2.0]);
        assert_eq!(s.max, vec![4.0, 6.0]);
        assert!(MinMaxScaler::fit(&Matrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn minmax_apply_examples() {
        let s = MinMaxScaler {
            min: vec![0.0],
            max: vec![10.0],
        };
        let out = s.apply(&col(&[5.0, 12.0])).unwrap();
        assert_eq!(out.column(0), vec![0.5, 1.2]);

        let degenerate = MinMaxScaler {
            min: vec![3.0],
            max: vec![3.0],
        };
        let out = degenerate.apply(&col(&[3.0, -7.0, 100.0])).unwrap();
        assert_eq!(out.column(0), vec![0.0, 0.0, 0.0]);

        let wide = Matrix::zeros(1, 2);
        assert!(matches!(s.apply(&wide), Err(HifError::Shape(_))));
    }

    #[test]
    fn zscore_two_points() {
        let s = ZScoreScaler::fit(&col(&[1.0, 3.0])).unwrap();
        assert_eq!(s.mean[0], 2.0);
        assert!((s.std[0] - 2f64.sqrt()).abs() < 1e-15);
        let z = s.apply_vec(&[3.0]).unwrap();
        assert!((z[0] - 0.707_106_781_186_547_5).abs() < 1e-12);
    }

    #[test]
    fn zscore_standardizes_training_data() {
        let mut rng = SeededRng::new(4);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.normal() * 3.0 + 1.0, rng.uniform() * 100.0])
            .collect();
        let x = Matrix::from_rows(rows).unwrap();
        let s = ZScoreScaler::fit(&x).unwrap();
        let z = s.apply(&x).unwrap();
        for j in 0..2 {
            let c = z.column(j);
            let mean = c.iter().sum::<f64>() / c.len() as f64;
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (c.len() - 1) as f64;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zscore_constant_column_gives_zero() {
        let s = ZScoreScaler::fit(&col(&[4.0, 4.0, 4.0])).unwrap();
        assert_eq!(s.std[0], SCALE_EPSILON);
        assert_eq!(s.apply_vec(&[4.0]).unwrap(), vec![0.0]);
        assert!(matches!(
            ZScoreScaler::fit(&col(&[1.0])),
            Err(HifError::InsufficientData(_))
        ));
    }

    #[test]
    fn split_sizes() {
        let x = col(&(0..10).map(f64::from).collect::<Vec<_>>());
        let (t, v) = split(&x, 0.8, 1).unwrap();
        assert_eq!((t.rows(), v.rows()), (8, 2));
        let x = col(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let (t, v) = split(&x, 0.8, 1).unwrap();
        assert_eq!((t.rows(), v.rows()), (4, 1));
        let (t2, v2) = split(&x, 0.8, 1).unwrap();
        assert_eq!((t, v), (t2, v2));
        assert!(split(&col(&[1.0]), 0.8, 1).is_err());
        assert!(split(&x, 1.0, 1).is_err());
    }

    #[test]
    fn record_rejects_ragged_phases() {
        let phases = vec![
            PhaseSignal {
                name: "A".into(),
                samples: vec![0.0; 4],
            },
            PhaseSignal {
                name: "B".into(),
                samples: vec![0.0; 3],
            },
        ];
        assert!(WaveformRecord::new(2, 120.0, phases).is_err());
    }

    #[test]
    fn record_rejects_label_outside() {
        let phases = vec![PhaseSignal {
            name: "A".into(),
            samples: vec![0.0; 4],
        }];
        let r = WaveformRecord::new(2, 120.0, phases).unwrap();
        let bad = FaultLabel {
            start_sample: 2,
            end_sample: 5,
            phase: "A".into(),
        };
        assert!(r.with_label(bad).is_err());
    }

    proptest! {
        #[test]
        fn augment_index_identity(
            m_vars in 1usize..6,
            gap in 1usize..5,
            extra in 0usize..7,
            cycles in 1usize..6,
        ) {
            let ts = m_vars * gap;
            let signal: Vec<f64> = (0..cycles * ts + extra.min(ts - 1)).map(|i| i as f64 * 0.5 - 3.0).collect();
            let m = augment(&signal, ts, m_vars).unwrap();
            prop_assert_eq!(m.data.rows(), signal.len() / ts);
            for i in 0..m.data.rows() {
                for j in 0..m_vars {
                    prop_assert_eq!(m.data[(i, j)], signal[i * ts + j * gap]);
                }
            }
        }

        #[test]
        fn scaler_round_trips(
            rows in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 3), 2..20)
        ) {
            let x = Matrix::from_rows(rows).unwrap();
            let mm = MinMaxScaler::fit(&x).unwrap();
            let back = mm.inverse(&mm.apply(&x).unwrap()).unwrap();
            let zs = ZScoreScaler::fit(&x).unwrap();
            let back_z = zs.inverse(&zs.apply(&x).unwrap()).unwrap();
            for j in 0..3 {
                let degenerate = mm.max[j] - mm.min[j] < SCALE_EPSILON;
                for i in 0..x.rows() {
                    let tol = 1e-12 * (1.0 + x[(i, j)].abs());
                    if !degenerate {
                        prop_assert!((back[(i, j)] - x[(i, j)]).abs() <= tol);
                        prop_assert!((back_z[(i, j)] - x[(i, j)]).abs() <= tol);
                    }
                }
            }
        }

        #[test]
        fn split_is_a_partition(n in 2usize..60, frac in 0.05f64..0.95, seed in any::<u64>()) {
            let x = col(&(0..n).map(|i| i as f64).collect::<Vec<_>>());
            let (t, v) = split(&x, frac, seed).unwrap();
            prop_assert!(t.rows() >= 1 && v.rows() >= 1);
            let mut all: Vec<f64> = t.column(0).into_iter().chain(v.column(0)).collect();
            all.sort_by(f64::total_cmp);
            prop_assert_eq!(all, x.column(0));
        }
    }
}
