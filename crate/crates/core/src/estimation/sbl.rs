use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::Serialize;

use super::lasso::{weighted_l1_gram, L1Options};
use super::lse::lse_row;
use super::{EstimationResult, Method, RegressionData};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SblOptions {
    /// Relative change of `γ` (max norm) that ends the loop.
    pub tol_gamma: f64,
    pub max_iter: usize,
    /// Latent variances at or below this are pruned.
    pub eps_gamma: f64,
    pub l1: L1Options,
}

impl Default for SblOptions {
    fn default() -> Self {
        SblOptions {
            tol_gamma: 1e-6,
            max_iter: 50,
            eps_gamma: 1e-8,
            l1: L1Options::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SblIteration {
    pub iteration: usize,
    /// Upper-bound cost `(1/λ)‖y - Φθ‖² + Σ θᵢ²/γᵢ + log|Σ_y|`.
    pub cost: f64,
    pub change: f64,
    pub active: usize,
}

/// Raw output of the reweighting loop for one row, before debiasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SblRow {
    pub theta: DVector<f64>,
    pub gamma: DVector<f64>,
    /// `θ` after the first (unit-weight) iteration.
    pub first_theta: DVector<f64>,
    pub trace: Vec<SblIteration>,
    pub converged: bool,
}

/// `K = λI + D G D` with `D = Γ^{1/2}`.
fn inner_factor(g: &DMatrix<f64>, d: &DVector<f64>, lambda: f64) -> Result<Cholesky<f64, Dyn>> {
    let m = d.len();
    let mut k = DMatrix::from_fn(m, m, |i, j| d[i] * g[(i, j)] * d[j]);
    for i in 0..m {
        k[(i, i)] += lambda;
    }
    Cholesky::new(k).ok_or_else(|| Error::NumericFailure("λI + Γ^{1/2}ΦᵀΦΓ^{1/2} is not positive definite".into()))
}

fn check_gamma(gamma: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Invalid(format!("lambda must be finite and > 0, got {lambda}")));
    }
    if gamma.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
        return Err(Error::Invalid("gamma must be finite and >= 0".into()));
    }
    Ok(gamma.map(f64::sqrt))
}

/// `z = diag(Φᵀ Σ_y⁻¹ Φ)`, the gradient of `log|Σ_y|` in `γ`, from the Gram
/// matrix.
fn z_from_gram(g: &DMatrix<f64>, gamma: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let d = check_gamma(gamma, lambda)?;
    let chol = inner_factor(g, &d, lambda)?;
    // Φᵀ Σ_y⁻¹ Φ = (G - G D K⁻¹ D G) / λ.
    let dg = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| d[i] * g[(i, j)]);
    let solved = chol.solve(&dg);
    let m = g.nrows();
    Ok(DVector::from_fn(m, |i, _| {
        if gamma[i] * g[(i, i)] > lambda {
            // Equal to the form below, since K⁻¹ D G D = I - λK⁻¹, but free of
            // cancellation when λ is small against γᵢ Gᵢᵢ.
            (solved[(i, i)] / d[i]).max(0.0)
        } else {
            let reduction: f64 = (0..m).map(|k| dg[(k, i)] * solved[(k, i)]).sum();
            ((g[(i, i)] - reduction) / lambda).max(0.0)
        }
    }))
}

/// `z_i = φᵢᵀ Σ_y⁻¹ φᵢ` with `Σ_y = λI + ΦΓΦᵀ`.
pub fn z_update(phi: &DMatrix<f64>, gamma: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if phi.ncols() != gamma.len() {
        return Err(Error::Dimension(format!("design has {} columns, gamma {}", phi.ncols(), gamma.len())));
    }
    z_from_gram(&(phi.transpose() * phi), gamma, lambda)
}

/// `log|Σ_y| = N log λ + log|I + Γ^{1/2} G Γ^{1/2} / λ|`.
pub fn log_det_sigma_y(g: &DMatrix<f64>, rows: usize, gamma: &DVector<f64>, lambda: f64) -> Result<f64> {
    let d = check_gamma(gamma, lambda)?;
    let chol = inner_factor(g, &d, lambda)?;
    let log_det_k: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let m = gamma.len() as f64;
    Ok(rows as f64 * lambda.ln() + log_det_k - m * lambda.ln())
}

fn moments_from_gram(g: &DMatrix<f64>, b: &DVector<f64>, gamma: &DVector<f64>, lambda: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = check_gamma(gamma, lambda)?;
    let chol = inner_factor(g, &d, lambda)?;
    let m = d.len();
    let db = b.component_mul(&d);
    let mu = chol.solve(&db).component_mul(&d);
    let kinv = chol.inverse();
    let mut sigma = DMatrix::from_fn(m, m, |i, j| lambda * d[i] * kinv[(i, j)] * d[j]);
    sigma = (&sigma + sigma.transpose()) * 0.5;
    Ok((mu, sigma))
}

/// Approximate posterior mean and covariance of `θ` for the prior
/// `θ ~ N(0, Γ)`: `μ = ΓΦᵀΣ_y⁻¹y`, `Σ = Γ - ΓΦᵀΣ_y⁻¹ΦΓ`.
pub fn posterior_moments(phi: &DMatrix<f64>, y: &DVector<f64>, gamma: &DVector<f64>, lambda: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if phi.ncols() != gamma.len() || phi.nrows() != y.len() {
        return Err(Error::Dimension("design, target and gamma disagree".into()));
    }
    moments_from_gram(&(phi.transpose() * phi), &(phi.transpose() * y), gamma, lambda)
}

/// Iterated reweighted L1 for one row, given `G = ΦᵀΦ`, `b = Φᵀy`, `yᵀy`
/// and the number of samples.
pub fn sbl_row(g: &DMatrix<f64>, b: &DVector<f64>, yty: f64, rows: usize, lambda: f64, opts: &SblOptions) -> Result<SblRow> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Invalid(format!("lambda must be finite and > 0, got {lambda}")));
    }
    let m = b.len();
    let mut z = DVector::from_element(m, 1.0);
    let mut gamma = DVector::zeros(m);
    let mut theta = DVector::zeros(m);
    let mut first_theta = None;
    let mut trace = Vec::new();
    let mut converged = false;
    for iteration in 1..=opts.max_iter {
        // Minimizing the bound over (θ, γ) for fixed z gives the penalty
        // 2√zᵢ|θᵢ| and γᵢ = |θᵢ|/√zᵢ.
        let root_z = z.map(f64::sqrt);
        theta = weighted_l1_gram(g, b, yty, &root_z, lambda, opts.l1)?;
        if first_theta.is_none() {
            first_theta = Some(theta.clone());
        }
        let new_gamma = DVector::from_fn(m, |i, _| if theta[i] == 0.0 { 0.0 } else { theta[i].abs() / root_z[i] });
        let gt = g * &theta;
        let rss = (yty - 2.0 * b.dot(&theta) + theta.dot(&gt)).max(0.0);
        let prior: f64 = (0..m).map(|i| theta[i].abs() * root_z[i]).sum();
        let cost = rss / lambda + prior + log_det_sigma_y(g, rows, &new_gamma, lambda)?;
        let scale = new_gamma.amax();
        let change = if scale > 0.0 {
            (&new_gamma - &gamma).amax() / scale
        } else if gamma.amax() == 0.0 {
            0.0
        } else {
            1.0
        };
        gamma = new_gamma;
        trace.push(SblIteration {
            iteration,
            cost,
            change,
            active: gamma.iter().filter(|&&v| v > opts.eps_gamma).count(),
        });
        if iteration > 1 && change < opts.tol_gamma {
            converged = true;
            break;
        }
        if gamma.amax() == 0.0 {
            converged = true;
            break;
        }
        z = z_from_gram(g, &gamma, lambda)?;
    }
    Ok(SblRow {
        theta,
        gamma,
        first_theta: first_theta.unwrap_or_else(|| DVector::zeros(m)),
        trace,
        converged,
    })
}

/// Sparse Bayesian learning, row by row. `lambda = None` uses each row's
/// residual variance from a full-support least-squares fit. The returned
/// parameters are a least-squares refit on the recovered support; the
/// covariance is the posterior covariance restricted to that support.
pub fn sbl_fit(data: &RegressionData, lambda: Option<f64>, opts: &SblOptions) -> Result<EstimationResult> {
    let (n, m) = (data.species(), data.complexes());
    let g = data.phi.transpose() * &data.phi;
    let full: Vec<usize> = (0..m).collect();
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let y = data.targets.column(i).into_owned();
            let lam = match lambda {
                Some(l) => l,
                // Noiseless rows have a vanishing residual variance; keep the
                // penalty at rounding level relative to the targets.
                None => {
                    let floor = f64::EPSILON * (y.norm_squared() / data.rows() as f64).max(f64::MIN_POSITIVE);
                    lse_row(&data.phi, &y, &full, i)?.sigma2.max(floor)
                }
            };
            if !(lam > 0.0) {
                return Err(Error::Invalid(format!(
                    "row {i}: noise variance parameter {lam} is not positive"
                )));
            }
            let b = data.phi.transpose() * &y;
            let raw = sbl_row(&g, &b, y.norm_squared(), data.rows(), lam, opts)?;
            if !raw.converged {
                warn!("row {i}: sparse Bayesian learning stopped after {} iterations", raw.trace.len());
            }
            let support: Vec<usize> = (0..m).filter(|&j| raw.gamma[j] > opts.eps_gamma).collect();
            let mut fit = lse_row(&data.phi, &y, &support, i)?;
            let (_, sigma) = moments_from_gram(&g, &b, &raw.gamma, lam)?;
            fit.covariance = sigma.select_rows(&support).select_columns(&support);
            fit.gamma = Some(raw.gamma);
            fit.trace = raw.trace;
            fit.converged = raw.converged;
            Ok(fit)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EstimationResult {
        method: Method::Sbl,
        rows,
        complexes: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(rows: usize, cols: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>, DVector<f64>, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(rows, |_, _| rng.random_range(-1.0..1.0));
        let gamma = DVector::from_fn(cols, |_, _| rng.random_range(0.0..2.0));
        (phi, y, gamma, rng.random_range(0.1..1.0))
    }

    fn dense_log_det(phi: &DMatrix<f64>, gamma: &DVector<f64>, lambda: f64) -> f64 {
        let n = phi.nrows();
        let sy = DMatrix::identity(n, n) * lambda + phi * DMatrix::from_diagonal(gamma) * phi.transpose();
        sy.cholesky().unwrap().l().diagonal().iter().map(|v| 2.0 * v.ln()).sum()
    }

    #[test]
    fn z_for_identity_design() {
        let z = z_update(&DMatrix::identity(4, 4), &DVector::zeros(4), 0.25).unwrap();
        assert!(z.iter().all(|&v| (v - 4.0).abs() < 1e-12));
    }

    #[test]
    fn z_matches_finite_differences() {
        let (phi, _, gamma, lambda) = instance(15, 5, 7);
        let z = z_update(&phi, &gamma, lambda).unwrap();
        for i in 0..5 {
            let h = 1e-5;
            let mut up = gamma.clone();
            up[i] += h;
            let mut down = gamma.clone();
            down[i] -= h;
            let fd = (dense_log_det(&phi, &up, lambda) - dense_log_det(&phi, &down, lambda)) / (2.0 * h);
            assert!((z[i] - fd).abs() <= 1e-5 * fd.abs(), "{i}: {} vs {fd}", z[i]);
        }
    }

    #[test]
    fn log_det_matches_dense() {
        let (phi, _, gamma, lambda) = instance(12, 4, 8);
        let g = phi.transpose() * &phi;
        let ours = log_det_sigma_y(&g, 12, &gamma, lambda).unwrap();
        assert!((ours - dense_log_det(&phi, &gamma, lambda)).abs() < 1e-10);
    }

    #[test]
    fn z_vanishes_for_huge_gamma() {
        let (phi, _, mut gamma, lambda) = instance(10, 3, 9);
        let mut last = f64::INFINITY;
        for g0 in [1.0, 1e2, 1e4, 1e8] {
            gamma[0] = g0;
            let z = z_update(&phi, &gamma, lambda).unwrap();
            assert!(z[0] < last);
            last = z[0];
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn posterior_matches_ridge_form() {
        let (phi, y, mut gamma, lambda) = instance(20, 5, 10);
        gamma[2] = 0.0;
        let (mu, sigma) = posterior_moments(&phi, &y, &gamma, lambda).unwrap();
        let support = [0, 1, 3, 4];
        let ps = phi.select_columns(&support);
        let mut a = ps.transpose() * &ps;
        for (k, &j) in support.iter().enumerate() {
            a[(k, k)] += lambda / gamma[j];
        }
        let ridge = a.try_inverse().unwrap() * ps.transpose() * &y;
        for (k, &j) in support.iter().enumerate() {
            assert!((mu[j] - ridge[k]).abs() < 1e-10);
        }
        assert_eq!(mu[2], 0.0);
        assert!(sigma.row(2).amax() == 0.0);
        let dense_sigma = {
            let gm = DMatrix::from_diagonal(&gamma);
            let sy = DMatrix::identity(20, 20) * lambda + &phi * &gm * phi.transpose();
            &gm - &gm * phi.transpose() * sy.try_inverse().unwrap() * &phi * &gm
        };
        assert!((&sigma - dense_sigma).amax() < 1e-10);
    }

    #[test]
    fn posterior_washes_out() {
        let (phi, y, gamma, _) = instance(20, 4, 11);
        let (mu, _) = posterior_moments(&phi, &y, &gamma, 1e8).unwrap();
        assert!(mu.amax() < 1e-6);
        let (mu0, s0) = posterior_moments(&phi, &y, &DVector::zeros(4), 0.3).unwrap();
        assert_eq!(mu0.amax(), 0.0);
        assert_eq!(s0.amax(), 0.0);
    }

    #[test]
    fn zero_target_gives_empty_support() {
        let (phi, _, _, _) = instance(30, 4, 12);
        let g = phi.transpose() * &phi;
        let raw = sbl_row(&g, &DVector::zeros(4), 0.0, 30, 0.1, &SblOptions::default()).unwrap();
        assert_eq!(raw.theta.amax(), 0.0);
        assert_eq!(raw.gamma.amax(), 0.0);
        assert!(raw.converged);
    }

    #[test]
    fn cost_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let phi = DMatrix::from_fn(60, 8, |_, _| rng.random_range(-1.0..1.0));
        let truth = DVector::from_vec(vec![1.5, 0.0, 0.0, -2.0, 0.0, 0.4, 0.0, 0.0]);
        let y = &phi * &truth + DVector::from_fn(60, |_, _| rng.random_range(-0.3..0.3));
        let g = phi.transpose() * &phi;
        let b = phi.transpose() * &y;
        let raw = sbl_row(&g, &b, y.norm_squared(), 60, 0.05, &SblOptions::default()).unwrap();
        for w in raw.trace.windows(2) {
            assert!(w[1].cost - w[0].cost <= 1e-10 * w[0].cost.abs().max(1.0), "{:?}", raw.trace);
        }
    }
}
