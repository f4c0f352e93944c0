use log::warn;
use nalgebra::DMatrix;

use crate::kinetic::{monomial_eval, ComplexMatrix, Trajectory};
use crate::{Error, Result};

/// Stacked forward-difference regression `y⁽ⁱ⁾ = Φ θ⁽ⁱ⁾ + ν`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    /// One column per species: `(x_i(t_k) - x_i(t_{k-1})) / h`.
    pub targets: DMatrix<f64>,
    /// Monomials at the preceding sample, one column per complex.
    pub phi: DMatrix<f64>,
    pub step: f64,
}

impl RegressionData {
    pub fn rows(&self) -> usize {
        self.phi.nrows()
    }

    pub fn species(&self) -> usize {
        self.targets.ncols()
    }

    pub fn complexes(&self) -> usize {
        self.phi.ncols()
    }
}

/// Stacks all experiments. Each contributes `samples - 1` rows; no row spans
/// two experiments. Negative states are rejected unless `allow_negative`
/// (noisy measurements of near-zero concentrations dip below zero).
pub fn build_regression(dataset: &[Trajectory], complexes: &ComplexMatrix, allow_negative: bool) -> Result<RegressionData> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::Invalid("dataset has no trajectories".into()))?;
    let h = first.step;
    let n = complexes.species();
    let m = complexes.complexes();
    let mut total = 0;
    let mut negatives = 0usize;
    for (e, tr) in dataset.iter().enumerate() {
        if tr.samples() < 2 {
            return Err(Error::Invalid(format!("experiment {e} has fewer than two samples")));
        }
        if tr.species() != n {
            return Err(Error::Dimension(format!(
                "experiment {e} has {} species, complexes involve {n}",
                tr.species()
            )));
        }
        if (tr.step - h).abs() > 1e-9 * h {
            return Err(Error::Invalid(format!(
                "experiment {e} uses step {}, expected {h}",
                tr.step
            )));
        }
        negatives += tr.states.iter().filter(|&&v| v < 0.0).count();
        total += tr.samples() - 1;
    }
    if negatives > 0 {
        if !allow_negative {
            return Err(Error::Invalid(format!(
                "dataset contains {negatives} negative state values"
            )));
        }
        warn!("dataset contains {negatives} negative state values; keeping them");
    }

    let mut targets = DMatrix::zeros(total, n);
    let mut phi = DMatrix::zeros(total, m);
    let mut row = 0;
    for tr in dataset {
        for k in 1..tr.samples() {
            let prev = tr.state(k - 1);
            let psi = monomial_eval(complexes, &prev)?;
            phi.set_row(row, &psi.transpose());
            for i in 0..n {
                targets[(row, i)] = (tr.states[(k, i)] - prev[i]) / h;
            }
            row += 1;
        }
    }
    Ok(RegressionData {
        targets,
        phi,
        step: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark;
    use crate::kinetic::simulate;

    #[test]
    fn constant_trajectory_has_zero_targets() {
        let states = DMatrix::from_element(4, 5, 0.5);
        let tr = Trajectory::from_samples(vec![0.0, 0.1, 0.2, 0.3], states).unwrap();
        let data = build_regression(&[tr], &benchmark::complexes(), false).unwrap();
        assert_eq!(data.rows(), 3);
        assert!(data.targets.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn noiseless_rows_are_euler_consistent() {
        let sys = benchmark::system();
        let tr = simulate(&sys, &[0.2, 0.9, 0.4, 0.6, 0.3], 2.0, 0.01).unwrap();
        let data = build_regression(&[tr.clone(), tr], sys.complexes(), false).unwrap();
        assert_eq!(data.rows(), 2 * 200);
        let predicted = &data.phi * sys.coefficients().transpose();
        assert!((predicted - &data.targets).amax() < 1e-10);
    }

    #[test]
    fn mismatched_steps_rejected() {
        let sys = benchmark::system();
        let a = simulate(&sys, &[0.2; 5], 1.0, 0.01).unwrap();
        let b = simulate(&sys, &[0.2; 5], 1.0, 0.02).unwrap();
        assert!(build_regression(&[a, b], sys.complexes(), false).is_err());
    }

    #[test]
    fn negative_states_need_override() {
        let mut states = DMatrix::from_element(3, 5, 0.5);
        states[(1, 2)] = -0.01;
        let tr = Trajectory::from_samples(vec![0.0, 0.1, 0.2], states).unwrap();
        assert!(build_regression(&[tr.clone()], &benchmark::complexes(), false).is_err());
        assert!(build_regression(&[tr], &benchmark::complexes(), true).is_ok());
    }
}
