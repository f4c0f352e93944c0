use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::EstimationResult;
use crate::realization::{vec_index, UncertaintyRegion};
use crate::{Error, Result};

/// Eigenvalues below this fraction of the largest are treated as zero.
const EIGEN_FLOOR: f64 = 1e-12;

/// `χ²_{df}` quantile at probability `p`.
pub fn chi2_quantile(df: usize, p: f64) -> Result<f64> {
    if df == 0 {
        return Ok(0.0);
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Invalid(format!("quantile probability must lie in [0, 1), got {p}")));
    }
    let dist = ChiSquared::new(df as f64).map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(dist.inverse_cdf(p))
}

/// Joint `1 - α` confidence ellipsoid around `M̂`.
///
/// The covariance is block diagonal over rows. The region is stored as
/// `‖Σ^{-1/2} Δ‖₂ ≤ √χ²_{df,1-α}` over the estimated entries, with `df` the
/// number of estimated entries; every other entry is pinned to zero.
/// Directions of (near) zero variance get a large finite weight.
pub fn confidence_region(result: &EstimationResult, alpha: f64) -> Result<UncertaintyRegion> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let m = result.complexes;
    let mut free = Vec::new();
    let mut blocks = Vec::new();
    for (i, row) in result.rows.iter().enumerate() {
        let cov = &row.covariance;
        if cov.shape() != (row.support.len(), row.support.len()) {
            return Err(Error::Dimension(format!("row {i}: covariance does not match its support")));
        }
        free.extend(row.support.iter().map(|&j| vec_index(i, j, m)));
        blocks.push(cov);
    }
    let df = free.len();
    let level = chi2_quantile(df, 1.0 - alpha)?.sqrt();
    let mut transform = DMatrix::zeros(df, df);
    let mut offset = 0;
    for (i, cov) in blocks.into_iter().enumerate() {
        let k = cov.nrows();
        if k == 0 {
            continue;
        }
        let w = inverse_sqrt(cov, i)?;
        transform.view_mut((offset, offset), (k, k)).copy_from(&w);
        offset += k;
    }
    UncertaintyRegion::ellipsoidal(result.estimate(), free, transform, level)
}

/// Symmetric `Σ^{-1/2}` with small eigenvalues floored.
fn inverse_sqrt(cov: &DMatrix<f64>, row: usize) -> Result<DMatrix<f64>> {
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericFailure(format!("row {row}: covariance is not finite")));
    }
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let top = eig.eigenvalues.amax();
    if !(top > 0.0) {
        return Err(Error::NumericFailure(format!("row {row}: covariance is zero")));
    }
    let floor = EIGEN_FLOOR * top;
    let mut floored = 0;
    let scaled = eig.eigenvalues.map(|e| {
        if e < floor {
            floored += 1;
            1.0 / floor.sqrt()
        } else {
            1.0 / e.sqrt()
        }
    });
    if floored > 0 {
        warn!("row {row}: {floored} covariance direction(s) are singular and treated as pinned");
    }
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&scaled) * v.transpose())
}
