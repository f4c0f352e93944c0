//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use crnid::enumeration::RealizationSet;
use crnid::kinetic::{ComplexMatrix, Edge, KineticSystem, KirchhoffMatrix};
use crnid::realization::{RealizationProblem, UncertaintyRegion};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A random mass-action system with at most `max_n` species and `max_m`
/// complexes, built from a random reaction graph so that it is kinetic.
pub fn random_system(rng: &mut ChaCha8Rng, max_n: usize, max_m: usize) -> (KineticSystem, KirchhoffMatrix) {
    loop {
        let n = rng.random_range(1..=max_n);
        let m = rng.random_range(2..=max_m);
        let y = DMatrix::from_fn(n, m, |_, _| rng.random_range(0..=2u32));
        let Ok(complexes) = ComplexMatrix::new(y) else { continue };
        let mut rates: Vec<(Edge, f64)> = Vec::new();
        for e in Edge::all(m) {
            if rng.random_bool(0.4) {
                rates.push((e, rng.random_range(0.1..2.0)));
            }
        }
        if rates.is_empty() {
            continue;
        }
        let a = KirchhoffMatrix::from_rates(m, rates).unwrap();
        let coefficients = complexes.matrix() * a.matrix();
        if coefficients.amax() < 1e-9 {
            continue;
        }
        return (KineticSystem::new(complexes, coefficients).unwrap(), a);
    }
}

/// The exact problem or a ball of radius `fraction · ‖M‖_F` around `M`.
pub fn problem(system: &KineticSystem, fraction: f64) -> RealizationProblem {
    if fraction == 0.0 {
        return RealizationProblem::exact(system);
    }
    let m = system.coefficients().clone();
    let rho = fraction * m.norm();
    RealizationProblem::new(
        system.complexes().clone(),
        UncertaintyRegion::spherical(m, rho).unwrap(),
        BTreeSet::new(),
    )
    .unwrap()
}

pub fn support_sets(set: &RealizationSet) -> BTreeSet<Vec<Edge>> {
    set.supports.iter().map(|f| f.edges.clone()).collect()
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// `log det(λI + Φ diag(γ) Φᵀ)` computed directly on the `N × N` matrix.
pub fn log_det_direct(phi: &DMatrix<f64>, gamma: &DVector<f64>, lambda: f64) -> f64 {
    let n = phi.nrows();
    let sigma = DMatrix::identity(n, n) * lambda + phi * DMatrix::from_diagonal(gamma) * phi.transpose();
    let chol = sigma.cholesky().expect("Σ_y is positive definite");
    2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Largest relative deviation of `z` from central differences of the
/// directly computed log determinant.
pub fn z_gradient_error(phi: &DMatrix<f64>, gamma: &DVector<f64>, lambda: f64, z: &DVector<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..gamma.len() {
        let step = 1e-5 * gamma[i].max(1e-2);
        let mut up = gamma.clone();
        let mut down = gamma.clone();
        up[i] += step;
        down[i] -= step;
        let fd = (log_det_direct(phi, &up, lambda) - log_det_direct(phi, &down, lambda)) / (2.0 * step);
        worst = worst.max((z[i] - fd).abs() / fd.abs().max(1e-12));
    }
    worst
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fraction of `redraws` independent datasets whose confidence region at
/// level `1 - alpha` contains the benchmark coefficients. Noise enters the
/// Euler increments, so the regression errors are exactly Gaussian.
pub fn region_coverage(redraws: u64, alpha: f64) -> f64 {
    use crnid::benchmark;
    use crnid::estimation::{build_regression, confidence_region, lse_fit};
    use crnid::pipeline::{generate_data, NoiseModel, Protocol};

    let protocol = Protocol {
        experiments: 5,
        duration: 2.0,
        step: 0.01,
        x0_range: [0.0, 1.0],
        seed: 0,
        allow_negative: true,
    };
    let system = benchmark::system();
    let truth = benchmark::coefficients();
    let mut hits = 0;
    for seed in 0..redraws {
        let p = Protocol { seed, ..protocol.clone() };
        let data = generate_data(&system, &p, 1e-2, NoiseModel::Equation).unwrap();
        let reg = build_regression(&data.trajectories, system.complexes(), true).unwrap();
        let est = lse_fit(&reg, &benchmark::true_mask()).unwrap();
        if confidence_region(&est, alpha).unwrap().contains(&truth, 0.0) {
            hits += 1;
        }
    }
    hits as f64 / redraws as f64
}
