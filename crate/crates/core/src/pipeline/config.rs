use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::kinetic::Edge;
use crate::{Error, Result};

/// Everything needed to reproduce one run or sweep. Loaded from TOML or
/// JSON; the format follows the file extension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Model JSON; the built-in benchmark when absent.
    #[serde(default)]
    pub model: Option<PathBuf>,
    /// Existing dataset manifest; data are generated when absent.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Reactions forbidden in every realization, e.g. `"C4->C1"`.
    #[serde(default)]
    pub exclusions: Vec<String>,
    /// Additional exclusion sets counted separately (one column each in a
    /// sweep).
    #[serde(default)]
    pub exclusion_sets: Vec<Vec<String>>,
    #[serde(default)]
    pub max_realizations: Option<usize>,
    /// Write a DOT file for every realization, not only the dense one.
    #[serde(default)]
    pub dot_all: bool,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    pub experiments: usize,
    /// Simulated time span `T`.
    pub duration: f64,
    /// Sampling step `h`.
    pub step: f64,
    /// Initial states are Latin-hypercube samples in this box.
    pub x0_range: [f64; 2],
    pub seed: u64,
    /// Keep negative noisy states instead of rejecting the dataset.
    #[serde(default = "yes")]
    pub allow_negative: bool,
}

fn yes() -> bool {
    true
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            experiments: 50,
            duration: 10.0,
            step: 0.01,
            x0_range: [0.0, 1.0],
            seed: 1,
            allow_negative: true,
        }
    }
}

/// Where the Gaussian noise enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    /// Added to every sampled state after simulation.
    #[default]
    State,
    /// Added to the Euler increment, `x_k = x_{k-1} + h (f(x_{k-1}) + ν_k)`,
    /// so the difference quotients carry exactly `N(0, σ²)` noise.
    Equation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub sigma2: f64,
    #[serde(default)]
    pub model: NoiseModel,
    #[serde(default)]
    pub sweep: Option<SweepRange>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma2: 1e-4,
            model: NoiseModel::State,
            sweep: None,
        }
    }
}

/// Log-spaced noise variances from `lo` to `hi` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRange {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl SweepRange {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.lo];
        }
        let (a, b) = (self.lo.log10(), self.hi.log10());
        (0..self.count)
            .map(|k| 10f64.powf(a + (b - a) * k as f64 / (self.count - 1) as f64))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum EstimatorConfig {
    /// Least squares on a known zero pattern; the model's own pattern when
    /// `mask` is absent.
    Lse {
        #[serde(default)]
        mask: Option<Vec<Vec<bool>>>,
    },
    /// Sparse Bayesian learning; `lambda` defaults to each row's residual
    /// variance.
    Sbl {
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default)]
        tol_gamma: Option<f64>,
        #[serde(default)]
        max_iter: Option<usize>,
    },
    /// No estimation: the model's own coefficients with a spherical region
    /// of radius `rho` (exact when zero).
    Exact {
        #[serde(default)]
        rho: f64,
    },
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig::Lse { mask: None }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: None,
            data: None,
            output: default_output(),
            protocol: Protocol::default(),
            noise: NoiseConfig::default(),
            estimator: EstimatorConfig::default(),
            alpha: default_alpha(),
            exclusions: vec![],
            exclusion_sets: vec![],
            max_realizations: None,
            dot_all: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: ExperimentConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            _ => toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.protocol;
        let bad = |msg: String| Err(Error::Config(msg));
        if !(p.step > 0.0 && p.duration > p.step) || !p.duration.is_finite() {
            return bad(format!("need T > h > 0, got T = {}, h = {}", p.duration, p.step));
        }
        if p.experiments == 0 {
            return bad("protocol needs at least one experiment".into());
        }
        let [lo, hi] = p.x0_range;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("x0_range must satisfy 0 <= lo <= hi, got [{lo}, {hi}]"));
        }
        if !(self.noise.sigma2 >= 0.0) || !self.noise.sigma2.is_finite() {
            return bad(format!("sigma2 must be finite and >= 0, got {}", self.noise.sigma2));
        }
        if let Some(s) = &self.noise.sweep {
            if s.count == 0 || !(s.lo > 0.0 && s.hi >= s.lo && s.hi.is_finite()) {
                return bad("sweep needs count >= 1 and 0 < lo <= hi".into());
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        match &self.estimator {
            EstimatorConfig::Sbl { lambda: Some(l), .. } if !(*l > 0.0) => {
                return bad(format!("SBL lambda must be > 0, got {l}"));
            }
            EstimatorConfig::Exact { rho } if !(*rho >= 0.0) => {
                return bad(format!("rho must be >= 0, got {rho}"));
            }
            _ => {}
        }
        self.exclusion_set()?;
        self.extra_exclusion_sets()?;
        Ok(())
    }

    pub fn exclusion_set(&self) -> Result<BTreeSet<Edge>> {
        parse_edges(&self.exclusions)
    }

    pub fn extra_exclusion_sets(&self) -> Result<Vec<BTreeSet<Edge>>> {
        self.exclusion_sets.iter().map(|s| parse_edges(s)).collect()
    }
}

pub fn parse_edges(items: &[String]) -> Result<BTreeSet<Edge>> {
    items
        .iter()
        .map(|s| s.parse::<Edge>().map_err(|e| Error::Config(format!("bad reaction {s:?}: {e}"))))
        .collect()
}
