use nalgebra::{DMatrix, DVector, SVD};
use rayon::prelude::*;

use super::{EstimationResult, Method, RegressionData, RowFit};
use crate::{Error, Result};

/// Least squares for one row over the columns in `support`.
///
/// Returns the full-length parameter vector, `σ̂² = RSS / (N - |S|)` and the
/// covariance `σ̂² (Φ_Sᵀ Φ_S)⁻¹`.
pub fn lse_row(phi: &DMatrix<f64>, y: &DVector<f64>, support: &[usize], row: usize) -> Result<RowFit> {
    let (n_rows, m) = phi.shape();
    let s = support.len();
    let mut theta = DVector::zeros(m);
    if s == 0 {
        let dof = n_rows.max(1) as f64;
        return Ok(RowFit {
            support: vec![],
            theta,
            covariance: DMatrix::zeros(0, 0),
            sigma2: y.norm_squared() / dof,
            gamma: None,
            trace: vec![],
            converged: true,
        });
    }
    if n_rows <= s {
        return Err(Error::Invalid(format!(
            "row {row}: {n_rows} samples cannot determine {s} parameters"
        )));
    }
    let phi_s = phi.select_columns(support);
    let qr = phi_s.clone().qr();
    let r = qr.r();
    let rmax = (0..s).map(|k| r[(k, k)].abs()).fold(0.0, f64::max);
    if (0..s).any(|k| r[(k, k)].abs() <= 1e-10 * rmax.max(f64::MIN_POSITIVE)) {
        return Err(Error::RankDeficient {
            row,
            columns: collinear_columns(&phi_s, support),
        });
    }
    let qty = qr.q().transpose() * y;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::NumericFailure(format!("row {row}: triangular solve failed")))?;
    for (k, &j) in support.iter().enumerate() {
        theta[j] = coef[k];
    }
    let resid = y - &phi_s * &coef;
    let sigma2 = resid.norm_squared() / (n_rows - s) as f64;
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericFailure(format!("row {row}: singular R factor")))?;
    let mut covariance = &r_inv * r_inv.transpose() * sigma2;
    covariance = (&covariance + covariance.transpose()) * 0.5;
    Ok(RowFit {
        support: support.to_vec(),
        theta,
        covariance,
        sigma2,
        gamma: None,
        trace: vec![],
        converged: true,
    })
}

/// Columns taking part in the (near) linear dependence of `Φ_S`.
fn collinear_columns(phi_s: &DMatrix<f64>, support: &[usize]) -> Vec<usize> {
    let svd = SVD::new(phi_s.clone(), false, true);
    let Some(vt) = svd.v_t else {
        return support.to_vec();
    };
    let (imin, _) = svd.singular_values.argmin();
    let v = vt.row(imin);
    let vmax = v.amax();
    support
        .iter()
        .enumerate()
        .filter(|(k, _)| v[*k].abs() > 1e-3 * vmax)
        .map(|(_, &j)| j)
        .collect()
}

/// Least squares with a known zero pattern; `mask[(i, j)]` marks the
/// estimated coefficients of row `i`.
pub fn lse_fit(data: &RegressionData, mask: &DMatrix<bool>) -> Result<EstimationResult> {
    let (n, m) = (data.species(), data.complexes());
    if mask.shape() != (n, m) {
        return Err(Error::Dimension(format!(
            "mask is {:?}, expected {:?}",
            mask.shape(),
            (n, m)
        )));
    }
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let support: Vec<usize> = (0..m).filter(|&j| mask[(i, j)]).collect();
            let y = data.targets.column(i).into_owned();
            lse_row(&data.phi, &y, &support, i)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EstimationResult {
        method: Method::Lse,
        rows,
        complexes: m,
    })
}
