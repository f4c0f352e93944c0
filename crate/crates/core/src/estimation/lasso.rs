use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Stopping rules for the weighted L1 solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Options {
    /// Duality gap relative to `max(1, primal objective)`.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for L1Options {
    fn default() -> Self {
        L1Options {
            tol: 1e-12,
            max_sweeps: 20_000,
        }
    }
}

/// Minimizes `‖y - Φθ‖² + 2λ Σ w_i |θ_i|`.
///
/// An infinite weight pins its coordinate to zero; a zero weight leaves it
/// unpenalized, so `λ = 0` gives ordinary least squares.
pub fn weighted_l1_solve(phi: &DMatrix<f64>, y: &DVector<f64>, weights: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if phi.nrows() != y.len() || phi.ncols() != weights.len() {
        return Err(Error::Dimension(format!(
            "design {:?}, target {}, weights {}",
            phi.shape(),
            y.len(),
            weights.len()
        )));
    }
    let g = phi.transpose() * phi;
    let b = phi.transpose() * y;
    weighted_l1_gram(&g, &b, y.norm_squared(), weights, lambda, L1Options::default())
}

/// Gram form of [`weighted_l1_solve`]: `G = ΦᵀΦ`, `b = Φᵀy`, `yty = yᵀy`.
///
/// Cyclic coordinate descent locates the active set, then an active-set
/// pass solves the reduced optimality system exactly.
pub fn weighted_l1_gram(g: &DMatrix<f64>, b: &DVector<f64>, yty: f64, weights: &DVector<f64>, lambda: f64, opts: L1Options) -> Result<DVector<f64>> {
    let m = b.len();
    if g.shape() != (m, m) || weights.len() != m {
        return Err(Error::Dimension("gram, correlation and weights disagree".into()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Invalid(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
        return Err(Error::Invalid("weights must be >= 0".into()));
    }
    let pen: Vec<f64> = weights.iter().map(|w| lambda * w).collect();
    let usable: Vec<bool> = (0..m).map(|j| pen[j].is_finite() && g[(j, j)] > 0.0).collect();

    let mut theta: DVector<f64> = DVector::zeros(m);
    // Gradient half: c = b - Gθ.
    let mut c = b.clone();
    let scale = yty.max(1.0);
    for sweep in 0..opts.max_sweeps {
        let mut max_change = 0.0f64;
        for j in (0..m).filter(|&j| usable[j]) {
            let gjj = g[(j, j)];
            let rho = c[j] + gjj * theta[j];
            let new = soft(rho, pen[j]) / gjj;
            let delta = new - theta[j];
            if delta != 0.0 {
                c.axpy(-delta, &g.column(j), 1.0);
                theta[j] = new;
                max_change = max_change.max(delta.abs() * gjj.sqrt());
            }
        }
        if sweep % 10 == 9 || max_change == 0.0 {
            if let Some(polished) = polish(g, b, &pen, &usable, &theta) {
                if gap(g, b, yty, &pen, &usable, &polished) <= opts.tol * scale {
                    return Ok(polished);
                }
            }
            if gap(g, b, yty, &pen, &usable, &theta) <= opts.tol * scale {
                return Ok(theta);
            }
        }
        if !theta.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericFailure("weighted L1 iterate diverged".into()));
        }
    }
    let final_gap = gap(g, b, yty, &pen, &usable, &theta);
    if final_gap <= 1e3 * opts.tol * scale {
        return Ok(theta);
    }
    Err(Error::NumericFailure(format!(
        "weighted L1 solver stopped with duality gap {final_gap:.3e}"
    )))
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Duality gap of the penalized problem with the dual point `ν = s·r`
/// scaled into the dual feasible set.
fn gap(g: &DMatrix<f64>, b: &DVector<f64>, yty: f64, pen: &[f64], usable: &[bool], theta: &DVector<f64>) -> f64 {
    let gt = g * theta;
    let corr = b - &gt;
    let bt = b.dot(theta);
    let rr = (yty - 2.0 * bt + theta.dot(&gt)).max(0.0);
    let yr = yty - bt;
    let mut s = 1.0f64;
    for j in 0..b.len() {
        if !usable[j] {
            continue;
        }
        let a = corr[j].abs();
        if a > pen[j] {
            // Zero-penalty coordinates at a least-squares stationary point
            // only leave rounding noise here.
            let noise = 1e-12 * (b[j].abs() + g[(j, j)] * theta[j].abs()).max(1e-300);
            if pen[j] == 0.0 && a <= noise {
                continue;
            }
            s = s.min(pen[j] / a);
        }
    }
    let primal = rr + 2.0 * (0..b.len()).filter(|&j| usable[j]).map(|j| pen[j] * theta[j].abs()).sum::<f64>();
    let dual = 2.0 * s * yr - s * s * rr;
    (primal - dual).max(0.0)
}

/// Active-set refinement from a near-optimal point: solve the stationarity
/// system on the current support with fixed signs, step back on sign
/// changes, and add the worst KKT violator until none remain.
fn polish(g: &DMatrix<f64>, b: &DVector<f64>, pen: &[f64], usable: &[bool], start: &DVector<f64>) -> Option<DVector<f64>> {
    let m = b.len();
    let mut theta = start.clone();
    let mut active: Vec<usize> = (0..m).filter(|&j| usable[j] && theta[j] != 0.0).collect();
    let mut sign: Vec<f64> = (0..m).map(|j| theta[j].signum()).collect();
    for _ in 0..4 * m + 10 {
        let target = if active.is_empty() {
            DVector::zeros(0)
        } else {
            let ga = g.select_rows(&active).select_columns(&active);
            let rhs = DVector::from_iterator(active.len(), active.iter().map(|&j| b[j] - pen[j] * sign[j]));
            ga.cholesky()?.solve(&rhs)
        };
        // Largest step toward `target` that keeps penalized signs.
        let mut t = 1.0f64;
        let mut blocking = None;
        for (k, &j) in active.iter().enumerate() {
            if pen[j] == 0.0 {
                continue;
            }
            if target[k] * sign[j] < 0.0 {
                let ratio = theta[j] / (theta[j] - target[k]);
                if ratio < t {
                    t = ratio;
                    blocking = Some(k);
                }
            }
        }
        for (k, &j) in active.iter().enumerate() {
            theta[j] += t * (target[k] - theta[j]);
        }
        if let Some(k) = blocking {
            theta[active[k]] = 0.0;
            active.remove(k);
            continue;
        }
        for (k, &j) in active.iter().enumerate() {
            if pen[j] == 0.0 {
                sign[j] = target[k].signum();
            }
        }
        let corr = b - g * &theta;
        let mut worst = None;
        let mut worst_excess = 0.0;
        for j in (0..m).filter(|&j| usable[j] && !active.contains(&j)) {
            let excess = corr[j].abs() - pen[j];
            let noise = 1e-12 * (b[j].abs() + pen[j]).max(1e-300);
            if excess > noise && excess > worst_excess {
                worst_excess = excess;
                worst = Some(j);
            }
        }
        match worst {
            None => return Some(theta),
            Some(j) => {
                sign[j] = corr[j].signum();
                active.push(j);
                active.sort_unstable();
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(rows, |_, _| rng.random_range(-1.0..1.0));
        (phi, y)
    }

    #[test]
    fn zero_lambda_is_least_squares() {
        let (phi, y) = random(30, 5, 1);
        let theta = weighted_l1_solve(&phi, &y, &DVector::from_element(5, 1.0), 0.0).unwrap();
        let ols = phi.clone().svd(true, true).solve(&y, 1e-14).unwrap();
        assert!((theta - ols).amax() < 1e-10);
    }

    #[test]
    fn above_threshold_gives_zero() {
        let (phi, y) = random(25, 6, 2);
        let w = DVector::from_vec(vec![1.0, 2.0, 0.5, 1.0, 3.0, 1.5]);
        let b = phi.transpose() * &y;
        let lambda_max = (0..6).map(|j| b[j].abs() / w[j]).fold(0.0, f64::max);
        let theta = weighted_l1_solve(&phi, &y, &w, lambda_max * 1.0001).unwrap();
        assert_eq!(theta.amax(), 0.0);
        let below = weighted_l1_solve(&phi, &y, &w, lambda_max * 0.9).unwrap();
        assert!(below.amax() > 0.0);
    }

    #[test]
    fn orthonormal_design_soft_thresholds() {
        let (a, y) = random(12, 4, 3);
        let q = a.qr().q();
        let lambda = 0.15;
        let theta = weighted_l1_solve(&q, &y, &DVector::from_element(4, 1.0), lambda).unwrap();
        let b = q.transpose() * &y;
        for j in 0..4 {
            let expect = b[j].signum() * (b[j].abs() - lambda).max(0.0);
            assert!((theta[j] - expect).abs() < 1e-10, "{j}: {} vs {expect}", theta[j]);
        }
    }

    #[test]
    fn infinite_weight_pins_coordinate() {
        let (phi, y) = random(20, 3, 4);
        let w = DVector::from_vec(vec![1.0, f64::INFINITY, 1.0]);
        let theta = weighted_l1_solve(&phi, &y, &w, 0.01).unwrap();
        assert_eq!(theta[1], 0.0);
    }

    #[test]
    fn satisfies_optimality_conditions() {
        for seed in 0..20 {
            let (phi, y) = random(40, 8, 100 + seed);
            let w = DVector::from_fn(8, |j, _| 0.5 + j as f64 * 0.2);
            let lambda = 0.5;
            let theta = weighted_l1_solve(&phi, &y, &w, lambda).unwrap();
            let corr = phi.transpose() * (&y - &phi * &theta);
            for j in 0..8 {
                if theta[j] != 0.0 {
                    assert!((corr[j] - lambda * w[j] * theta[j].signum()).abs() < 1e-9);
                } else {
                    assert!(corr[j].abs() <= lambda * w[j] + 1e-9);
                }
            }
        }
    }
}
