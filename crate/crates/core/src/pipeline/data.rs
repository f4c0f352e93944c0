use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::error;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{NoiseModel, Protocol};
use crate::kinetic::{monomial_eval, read_trajectory_csv, simulate, write_trajectory_csv, KineticSystem, Model, ModelFile, Trajectory};
use crate::{Error, Result};

/// Name of the random number generator recorded in manifests.
pub const RNG_NAME: &str = "ChaCha8";

/// `samples` points in `[lo, hi]^dims`: each dimension is split into
/// `samples` equal strata, one uniform point per stratum, strata shuffled
/// independently per dimension.
pub fn latin_hypercube<R: Rng>(rng: &mut R, samples: usize, dims: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dims]; samples];
    for d in 0..dims {
        let mut strata: Vec<usize> = (0..samples).collect();
        strata.shuffle(rng);
        for (k, p) in points.iter_mut().enumerate() {
            let u: f64 = rng.random();
            p[d] = lo + (hi - lo) * (strata[k] as f64 + u) / samples as f64;
        }
    }
    points
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub x0: Vec<Vec<f64>>,
    pub sigma2: f64,
    pub noise_model: NoiseModel,
    pub seed: u64,
}

/// Noise stream of experiment `e`; stream 0 drives the initial states, so
/// every noise level of a sweep shares initial states and standardized
/// noise draws.
fn noise_rng(seed: u64, e: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(e as u64 + 1);
    rng
}

/// Simulates every experiment of the protocol and adds Gaussian noise of
/// variance `sigma2`.
pub fn generate_data(system: &KineticSystem, protocol: &Protocol, sigma2: f64, noise_model: NoiseModel) -> Result<Dataset> {
    let n = system.complexes().species();
    let mut rng = ChaCha8Rng::seed_from_u64(protocol.seed);
    let x0 = latin_hypercube(&mut rng, protocol.experiments, n, protocol.x0_range[0], protocol.x0_range[1]);
    let sd = sigma2.sqrt();
    let mut trajectories = Vec::with_capacity(x0.len());
    for (e, start) in x0.iter().enumerate() {
        let mut noise = noise_rng(protocol.seed, e);
        let result = match noise_model {
            NoiseModel::State => simulate(system, start, protocol.duration, protocol.step).map(|mut tr| {
                if sd > 0.0 {
                    for v in tr.states.iter_mut() {
                        let z: f64 = noise.sample(StandardNormal);
                        *v += sd * z;
                    }
                }
                tr
            }),
            NoiseModel::Equation => simulate_with_equation_noise(system, start, protocol.duration, protocol.step, sd, &mut noise),
        };
        match result {
            Ok(tr) => trajectories.push(tr),
            Err(err) => {
                error!("experiment {e} from x0 = {start:?} failed: {err}");
                return Err(err.in_stage("simulate"));
            }
        }
    }
    Ok(Dataset {
        trajectories,
        x0,
        sigma2,
        noise_model,
        seed: protocol.seed,
    })
}

/// Euler recursion with `N(0, sd²)` added to the right-hand side at every
/// step. States are not clamped, so the difference quotients are exactly
/// `f(x_{k-1}) + ν_k`; the most negative state is recorded.
fn simulate_with_equation_noise(system: &KineticSystem, x0: &[f64], duration: f64, h: f64, sd: f64, rng: &mut ChaCha8Rng) -> Result<Trajectory> {
    let clean = simulate(system, x0, duration, h)?;
    if sd == 0.0 {
        return Ok(clean);
    }
    let n = x0.len();
    let steps = clean.samples() - 1;
    let mut states = DMatrix::zeros(steps + 1, n);
    let mut x = x0.to_vec();
    let mut violation: f64 = 0.0;
    states.row_mut(0).copy_from_slice(&x);
    for k in 1..=steps {
        let psi = monomial_eval(system.complexes(), &x)?;
        let dx = system.coefficients() * psi;
        for i in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let next = x[i] + h * (dx[i] + sd * z);
            if !next.is_finite() {
                return Err(Error::Divergence { step: k });
            }
            violation = violation.max(-next);
            x[i] = next;
        }
        states.row_mut(k).copy_from_slice(&x);
    }
    Ok(Trajectory {
        times: clean.times,
        states,
        step: h,
        clamp_violation: violation,
    })
}

/// Manifest written next to the per-experiment CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub rng: String,
    pub seed: u64,
    pub protocol: Protocol,
    pub sigma2: f64,
    pub noise_model: NoiseModel,
    pub x0: Vec<Vec<f64>>,
    pub files: Vec<String>,
    pub model: ModelFile,
}

/// Writes `exp_000.csv`, ... and `manifest.json` into `dir`; returns the
/// manifest path.
pub fn write_dataset(dataset: &Dataset, protocol: &Protocol, model: &Model, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::with_capacity(dataset.trajectories.len());
    for (e, tr) in dataset.trajectories.iter().enumerate() {
        let name = format!("exp_{e:03}.csv");
        write_trajectory_csv(&dir.join(&name), tr)?;
        files.push(name);
    }
    let manifest = Manifest {
        schema: 1,
        rng: RNG_NAME.into(),
        seed: dataset.seed,
        protocol: protocol.clone(),
        sigma2: dataset.sigma2,
        noise_model: dataset.noise_model,
        x0: dataset.x0.clone(),
        files,
        model: model.to_file_data(),
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::File::create(&path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Reads a dataset and the model it was generated from.
pub fn read_dataset(manifest_path: &Path) -> Result<(Dataset, Model)> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.schema != 1 {
        return Err(Error::Config(format!("unsupported manifest schema {}", manifest.schema)));
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let trajectories = manifest
        .files
        .iter()
        .map(|f| read_trajectory_csv(&dir.join(f)))
        .collect::<Result<Vec<_>>>()?;
    let model = Model::from_file_data(manifest.model)?;
    Ok((
        Dataset {
            trajectories,
            x0: manifest.x0,
            sigma2: manifest.sigma2,
            noise_model: manifest.noise_model,
            seed: manifest.seed,
        },
        model,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark;

    #[test]
    fn hypercube_has_one_point_per_stratum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = latin_hypercube(&mut rng, 20, 4, 0.0, 1.0);
        for d in 0..4 {
            let mut strata: Vec<usize> = pts.iter().map(|p| (p[d] * 20.0).floor() as usize).collect();
            strata.sort_unstable();
            assert_eq!(strata, (0..20).collect::<Vec<_>>());
        }
    }

    fn small_protocol() -> Protocol {
        Protocol {
            experiments: 3,
            duration: 1.0,
            step: 0.1,
            ..Protocol::default()
        }
    }

    #[test]
    fn zero_noise_is_pure_simulation() {
        let sys = benchmark::system();
        let p = small_protocol();
        for model in [NoiseModel::State, NoiseModel::Equation] {
            let d = generate_data(&sys, &p, 0.0, model).unwrap();
            for (tr, x0) in d.trajectories.iter().zip(&d.x0) {
                assert_eq!(tr, &simulate(&sys, x0, 1.0, 0.1).unwrap());
                assert_eq!(tr.samples(), 11);
            }
        }
    }

    #[test]
    fn files_are_deterministic_and_round_trip() {
        let sys = benchmark::system();
        let p = small_protocol();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let d1 = generate_data(&sys, &p, 1e-3, NoiseModel::State).unwrap();
        let d2 = generate_data(&sys, &p, 1e-3, NoiseModel::State).unwrap();
        let m1 = write_dataset(&d1, &p, &benchmark::model(), a.path()).unwrap();
        write_dataset(&d2, &p, &benchmark::model(), b.path()).unwrap();
        for f in ["exp_000.csv", "exp_002.csv", "manifest.json"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
        let (back, model) = read_dataset(&m1).unwrap();
        assert_eq!(back.trajectories.len(), 3);
        for (x, y) in back.trajectories.iter().zip(&d1.trajectories) {
            assert_eq!(x.states, y.states);
        }
        assert_eq!(model.system.coefficients(), sys.coefficients());
    }
}
