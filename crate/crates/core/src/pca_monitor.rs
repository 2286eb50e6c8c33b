//! PCA monitoring of standardized autoencoder residuals.
//!
//! The fitted model keeps the leading `l` eigenvectors of the residual
//! covariance and derives three statistics per residual vector `e`:
//!
//! * `T² = eᵀ P Λ⁻¹ Pᵀ e`, limit `χ²(l; α)`
//! * `SPE = ‖e − P Pᵀ e‖²`, limit `g · χ²(h; α)`
//! * `φ = T² + SPE / g`, limit `χ²(l + h; α)`
//!
//! with `g = Σλᵢ² / Σλᵢ` and `h = (Σλᵢ)² / Σλᵢ²` over the discarded
//! eigenvalues.

use serde::{Deserialize, Serialize};

use crate::error::{HifError, Result};
use crate::linalg::{covariance, dot, symmetric_eigen, Matrix};
use crate::signal_prep::ZScoreScaler;
use crate::stats::chi2_quantile;

/// Eigenvalues below this fraction of the largest are set to zero.
pub const EIGEN_CLAMP_RELATIVE: f64 = 1e-12;

const ORTHONORMAL_TOL: f64 = 1e-10;
const LIMIT_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaMonitorModel {
    pub residual_scaler: ZScoreScaler,
    /// `M x l`, orthonormal columns.
    pub loadings: Matrix,
    /// All `M` eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub n_components: usize,
    pub g: f64,
    pub h: f64,
    pub alpha: f64,
    pub t2_limit: f64,
    pub spe_limit: f64,
    pub phi_limit: f64,
}

/// Monitoring statistics of one residual vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorIndices {
    pub t2: f64,
    pub spe: f64,
    pub phi: f64,
}

/// Cumulative percent variance captured by the first `l` eigenvalues, as a fraction.
pub fn cpv(eigenvalues: &[f64], l: usize) -> Result<f64> {
    if l == 0 || l > eigenvalues.len() {
        return Err(HifError::InvalidInput(format!(
            "l must lie in [1, {}], got {l}",
            eigenvalues.len()
        )));
    }
    if eigenvalues.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(HifError::InvalidInput(
            "eigenvalues must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(HifError::DegenerateData("all eigenvalues are zero".into()));
    }
    Ok(eigenvalues[..l].iter().sum::<f64>() / total)
}

/// `g` and `h` from the eigenvalues after the first `l`.
fn residual_moments(eigenvalues: &[f64], l: usize) -> (f64, f64) {
    let tail = &eigenvalues[l..];
    let s1: f64 = tail.iter().sum();
    let s2: f64 = tail.iter().map(|v| v * v).sum();
    (s2 / s1, s1 * s1 / s2)
}

/// The three control limits at confidence `alpha`.
pub fn control_limits(l: usize, g: f64, h: f64, alpha: f64) -> Result<(f64, f64, f64)> {
    let t2 = chi2_quantile(l as f64, alpha)?;
    let spe = g * chi2_quantile(h, alpha)?;
    let phi = chi2_quantile(l as f64 + h, alpha)?;
    Ok((t2, spe, phi))
}

impl PcaMonitorModel {
    /// Fits the monitor on raw residuals `E` (rows are cycles).
    pub fn fit(residuals: &Matrix, cpv_target: f64, alpha: f64) -> Result<Self> {
        let m = residuals.cols();
        if !(cpv_target > 0.0 && cpv_target <= 1.0) {
            return Err(HifError::InvalidConfig(format!(
                "CPV target must lie in (0, 1], got {cpv_target}"
            )));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(HifError::InvalidConfig(format!(
                "confidence level must lie in (0, 1), got {alpha}"
            )));
        }
        if m < 2 {
            return Err(HifError::InsufficientData(format!(
                "PCA monitoring needs at least 2 variables, got {m}"
            )));
        }
        if residuals.rows() < m + 1 {
            return Err(HifError::InsufficientData(format!(
                "PCA fit needs at least {} rows for {m} variables, got {}",
                m + 1,
                residuals.rows()
            )));
        }
        if !residuals.is_finite() {
            return Err(HifError::InvalidInput("residuals contain non-finite values".into()));
        }

        let scaler = ZScoreScaler::fit(residuals)?;
        let standardized = scaler.apply(residuals)?;
        let cov = covariance(&standardized)?;
        let eig = symmetric_eigen(&cov)?;

        let largest = eig.values[0];
        if !(largest > 0.0) {
            return Err(HifError::DegenerateData(
                "residual covariance has no positive eigenvalue".into(),
            ));
        }
        let eigenvalues: Vec<f64> = eig
            .values
            .iter()
            .map(|&v| if v < EIGEN_CLAMP_RELATIVE * largest { 0.0 } else { v })
            .collect();
        let rank = eigenvalues.iter().filter(|&&v| v > 0.0).count();
        if rank < 2 {
            return Err(HifError::DegenerateData(format!(
                "residual covariance has {rank} nonzero eigenvalue(s), need at least 2"
            )));
        }

        let mut l = (1..=m)
            .find(|&l| cpv(&eigenvalues, l).is_ok_and(|c| c >= cpv_target - 1e-12))
            .unwrap_or(m);
        if l >= m {
            return Err(HifError::DegenerateData(format!(
                "CPV target {cpv_target} needs all {m} components, leaving no residual subspace"
            )));
        }
        if eigenvalues[l..].iter().sum::<f64>() <= 0.0 {
            l = rank - 1;
        }

        let (g, h) = residual_moments(&eigenvalues, l);
        let (t2_limit, spe_limit, phi_limit) = control_limits(l, g, h, alpha)?;

        let mut loadings = Matrix::zeros(m, l);
        for k in 0..l {
            for i in 0..m {
                loadings[(i, k)] = eig.vectors[(i, k)];
            }
        }
        let model = Self {
            residual_scaler: scaler,
            loadings,
            eigenvalues,
            n_components: l,
            g,
            h,
            alpha,
            t2_limit,
            spe_limit,
            phi_limit,
        };
        log::info!(
            "PCA monitor: l = {l} of {m}, g = {g:.6}, h = {h:.6}, limits T² {t2_limit:.4}, SPE {spe_limit:.4}, φ {phi_limit:.4}"
        );
        Ok(model)
    }

    pub fn n_vars(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Standardizes a raw residual with the stored column statistics.
    pub fn standardize(&self, raw: &[f64]) -> Result<Vec<f64>> {
        self.residual_scaler.apply_vec(raw)
    }

    fn check_len(&self, e: &[f64]) -> Result<()> {
        if e.len() != self.n_vars() {
            return Err(HifError::Shape(format!(
                "residual has {} entries, monitor expects {}",
                e.len(),
                self.n_vars()
            )));
        }
        Ok(())
    }

    fn scores(&self, e: &[f64]) -> Vec<f64> {
        (0..self.n_components)
            .map(|k| (0..self.n_vars()).map(|i| self.loadings[(i, k)] * e[i]).sum())
            .collect()
    }

    fn spe_from_scores(&self, e: &[f64], scores: &[f64]) -> f64 {
        let mut sum = 0.0;
        for (i, &ei) in e.iter().enumerate() {
            let proj: f64 = self.loadings.row(i).iter().zip(scores).map(|(p, s)| p * s).sum();
            let r = ei - proj;
            sum += r * r;
        }
        sum
    }

    /// Hotelling T² of a standardized residual.
    pub fn t2_index(&self, e: &[f64]) -> Result<f64> {
        self.check_len(e)?;
        Ok(self.t2_from_scores(&self.scores(e)))
    }

    fn t2_from_scores(&self, scores: &[f64]) -> f64 {
        scores
            .iter()
            .zip(&self.eigenvalues)
            .map(|(s, lambda)| s * s / lambda)
            .sum()
    }

    /// Squared prediction error of a standardized residual.
    pub fn spe_index(&self, e: &[f64]) -> Result<f64> {
        self.check_len(e)?;
        Ok(self.spe_from_scores(e, &self.scores(e)))
    }

    /// Combined index `T² + SPE / g`.
    pub fn phi_index(&self, e: &[f64]) -> Result<f64> {
        Ok(self.indices(e)?.phi)
    }

    /// All three statistics with one projection.
    pub fn indices(&self, e: &[f64]) -> Result<MonitorIndices> {
        self.check_len(e)?;
        let scores = self.scores(e);
        let t2 = self.t2_from_scores(&scores);
        let spe = self.spe_from_scores(e, &scores);
        Ok(MonitorIndices {
            t2,
            spe,
            phi: t2 + spe / self.g,
        })
    }

    /// Squared norm of the projection of `e` onto the principal subspace.
    pub fn projected_norm_sq(&self, e: &[f64]) -> Result<f64> {
        self.check_len(e)?;
        let s = self.scores(e);
        Ok(dot(&s, &s))
    }

    /// Re-checks every invariant; used after loading from disk.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HifError::ModelFormat(msg));
        self.residual_scaler.validate()?;
        let m = self.eigenvalues.len();
        let l = self.n_components;
        if self.residual_scaler.n_features() != m {
            return bad(format!(
                "residual scaler has {} columns but there are {m} eigenvalues",
                self.residual_scaler.n_features()
            ));
        }
        if l == 0 || l >= m {
            return bad(format!("n_components {l} must lie in [1, {m})"));
        }
        if self.loadings.rows() != m || self.loadings.cols() != l {
            return bad(format!(
                "loadings are {}x{}, expected {m}x{l}",
                self.loadings.rows(),
                self.loadings.cols()
            ));
        }
        if self.eigenvalues.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("eigenvalues must be finite and nonnegative".into());
        }
        if self.eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return bad("eigenvalues are not sorted in descending order".into());
        }
        if self.eigenvalues[..l].iter().any(|&v| v <= 0.0) {
            return bad("a retained eigenvalue is zero".into());
        }
        if self.eigenvalues[l..].iter().sum::<f64>() <= 0.0 {
            return bad("residual subspace has zero variance".into());
        }
        let ptp = self.loadings.transpose().matmul(&self.loadings)?;
        for i in 0..l {
            for j in 0..l {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (ptp[(i, j)] - expect).abs() > ORTHONORMAL_TOL {
                    return bad(format!(
                        "loadings are not orthonormal: (PᵀP)[{i},{j}] = {}",
                        ptp[(i, j)]
                    ));
                }
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} is outside (0, 1)", self.alpha));
        }
        let (g, h) = residual_moments(&self.eigenvalues, l);
        let close = |a: f64, b: f64| (a - b).abs() <= LIMIT_REL_TOL * b.abs().max(1e-300);
        if !close(self.g, g) || !close(self.h, h) {
            return bad(format!(
                "g/h ({}, {}) disagree with the eigenvalues ({g}, {h})",
                self.g, self.h
            ));
        }
        let (t2, spe, phi) = control_limits(l, self.g, self.h, self.alpha)?;
        if !close(self.t2_limit, t2) || !close(self.spe_limit, spe) || !close(self.phi_limit, phi) {
            return bad(format!(
                "control limits ({}, {}, {}) disagree with recomputed ({t2}, {spe}, {phi})",
                self.t2_limit, self.spe_limit, self.phi_limit
            ));
        }
        Ok(())
    }
}
