//! Estimation of the coefficient matrix from sampled trajectories: forward
//! difference regression, least squares with a known zero pattern, sparse
//! Bayesian learning, and the resulting confidence ellipsoid.

mod lasso;
mod lse;
mod region;
mod regression;
mod sbl;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub use lasso::{weighted_l1_gram, weighted_l1_solve, L1Options};
pub use lse::{lse_fit, lse_row};
pub use region::{chi2_quantile, confidence_region};
pub use regression::{build_regression, RegressionData};
pub use sbl::{
    log_det_sigma_y, posterior_moments, sbl_fit, sbl_row, z_update, SblIteration, SblOptions, SblRow,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Lse,
    Sbl,
}

/// Estimate for one species (one row of `M`).
#[derive(Debug, Clone, PartialEq)]
pub struct RowFit {
    /// Estimated columns, ascending.
    pub support: Vec<usize>,
    /// Full row of length `m`, zero off the support.
    pub theta: DVector<f64>,
    /// Covariance over `support`, in the same order.
    pub covariance: DMatrix<f64>,
    pub sigma2: f64,
    /// Latent prior variances (sparse Bayesian learning only).
    pub gamma: Option<DVector<f64>>,
    pub trace: Vec<SblIteration>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub method: Method,
    pub rows: Vec<RowFit>,
    pub complexes: usize,
}

impl EstimationResult {
    /// `M̂`, zero outside each row's support.
    pub fn estimate(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.complexes);
        for (i, row) in self.rows.iter().enumerate() {
            m.set_row(i, &row.theta.transpose());
        }
        m
    }

    pub fn support_mask(&self) -> DMatrix<bool> {
        let mut mask = DMatrix::from_element(self.rows.len(), self.complexes, false);
        for (i, row) in self.rows.iter().enumerate() {
            for &j in &row.support {
                mask[(i, j)] = true;
            }
        }
        mask
    }

    /// Standard error of every estimated entry (zero off the support).
    pub fn standard_errors(&self) -> DMatrix<f64> {
        let mut se = DMatrix::zeros(self.rows.len(), self.complexes);
        for (i, row) in self.rows.iter().enumerate() {
            for (k, &j) in row.support.iter().enumerate() {
                se[(i, j)] = row.covariance[(k, k)].max(0.0).sqrt();
            }
        }
        se
    }

    pub fn free_parameters(&self) -> usize {
        self.rows.iter().map(|r| r.support.len()).sum()
    }
}
