use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::info;
use nalgebra::DMatrix;
use serde::Serialize;

use super::config::{EstimatorConfig, ExperimentConfig};
use super::data::{generate_data, read_dataset, Dataset};
use super::dot::{realization_dot, write_dot};
use crate::benchmark;
use crate::enumeration::{enumerate_with, EnumerateOptions, RealizationSet};
use crate::estimation::{build_regression, chi2_quantile, confidence_region, lse_fit, sbl_fit, EstimationResult, Method, SblOptions};
use crate::kinetic::{info_ratio, r_max, Edge, Model};
use crate::realization::{RealizationProblem, UncertaintyRegion};
use crate::{Error, Result};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeRate {
    pub edge: String,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateSummary {
    pub method: Method,
    pub regression_rows: usize,
    pub m_hat: Vec<Vec<f64>>,
    pub std_errors: Vec<Vec<f64>>,
    pub support: Vec<Vec<bool>>,
    pub sigma2_rows: Vec<f64>,
    pub free_parameters: usize,
    pub chi2_quantile: f64,
    /// Whether the estimated zero pattern equals the model's.
    pub pattern_matches_model: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExclusionCount {
    pub excluded: Vec<String>,
    pub count: usize,
    pub partial: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timing {
    pub data_secs: f64,
    pub estimate_secs: f64,
    pub enumerate_secs: f64,
    pub total_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema: u32,
    pub sigma2: Option<f64>,
    pub alpha: f64,
    pub seed: Option<u64>,
    pub experiments: Option<usize>,
    pub estimate: Option<EstimateSummary>,
    pub exclusions: Vec<String>,
    pub dense_edges: usize,
    pub dense: Vec<EdgeRate>,
    pub realizations: usize,
    pub partial: bool,
    pub failure: Option<String>,
    pub r_max: u128,
    pub info_ratio: f64,
    pub supports: Vec<Vec<String>>,
    pub exclusion_studies: Vec<ExclusionCount>,
    pub timing: Timing,
}

/// Everything produced by one run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub problem: RealizationProblem,
    pub estimate: Option<EstimationResult>,
    pub realizations: RealizationSet,
}

pub fn load_model(config: &ExperimentConfig) -> Result<Model> {
    match &config.model {
        Some(path) => Model::load(path).map_err(|e| e.in_stage("model")),
        None => Ok(benchmark::model()),
    }
}

/// The configured dataset at noise level `sigma2`: read from the manifest
/// when one is given, generated otherwise. `None` for exact runs.
pub fn prepare_data(config: &ExperimentConfig, model: &Model, sigma2: f64) -> Result<Option<Dataset>> {
    if matches!(config.estimator, EstimatorConfig::Exact { .. }) {
        return Ok(None);
    }
    if let Some(path) = &config.data {
        let (dataset, _) = read_dataset(path).map_err(|e| e.in_stage("data"))?;
        return Ok(Some(dataset));
    }
    generate_data(&model.system, &config.protocol, sigma2, config.noise.model).map(Some)
}

/// Runs estimation on `dataset`.
pub fn estimate(config: &ExperimentConfig, model: &Model, dataset: &Dataset) -> Result<EstimationResult> {
    let complexes = model.system.complexes();
    let data = build_regression(&dataset.trajectories, complexes, config.protocol.allow_negative)?;
    match &config.estimator {
        EstimatorConfig::Lse { mask } => {
            let mask = match mask {
                Some(rows) => {
                    let (n, m) = (complexes.species(), complexes.complexes());
                    if rows.len() != n || rows.iter().any(|r| r.len() != m) {
                        return Err(Error::Config(format!("LSE mask must be {n}x{m}")));
                    }
                    DMatrix::from_fn(n, m, |i, j| rows[i][j])
                }
                None => model.system.coefficients().map(|v| v != 0.0),
            };
            lse_fit(&data, &mask)
        }
        EstimatorConfig::Sbl {
            lambda,
            tol_gamma,
            max_iter,
        } => {
            let mut opts = SblOptions::default();
            if let Some(t) = tol_gamma {
                opts.tol_gamma = *t;
            }
            if let Some(k) = max_iter {
                opts.max_iter = *k;
            }
            sbl_fit(&data, *lambda, &opts)
        }
        EstimatorConfig::Exact { .. } => Err(Error::Config("exact runs do not estimate".into())),
    }
}

/// Row-major nested vectors, as written to JSON.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn edge_names(edges: &BTreeSet<Edge>) -> Vec<String> {
    edges.iter().map(Edge::to_string).collect()
}

/// Full pipeline for one noise level.
pub fn run_with(config: &ExperimentConfig, model: &Model, sigma2: f64) -> Result<Outcome> {
    let start = Instant::now();
    let mut timing = Timing::default();
    let dataset = prepare_data(config, model, sigma2)?;
    timing.data_secs = start.elapsed().as_secs_f64();

    let t = Instant::now();
    let complexes = model.system.complexes().clone();
    let (region, estimate) = match (&config.estimator, &dataset) {
        (EstimatorConfig::Exact { rho }, _) => {
            let nominal = model.system.coefficients().clone();
            let region = if *rho == 0.0 {
                UncertaintyRegion::exact(nominal)
            } else {
                UncertaintyRegion::spherical(nominal, *rho)?
            };
            (region, None)
        }
        (_, Some(d)) => {
            let est = estimate(config, model, d).map_err(|e| e.in_stage("estimate"))?;
            let region = confidence_region(&est, config.alpha).map_err(|e| e.in_stage("confidence region"))?;
            (region, Some(est))
        }
        (_, None) => return Err(Error::Config("no dataset for estimation".into())),
    };
    timing.estimate_secs = t.elapsed().as_secs_f64();

    let exclusions = config.exclusion_set()?;
    let problem = RealizationProblem::new(complexes, region, exclusions.clone())?;
    let t = Instant::now();
    let opts = EnumerateOptions {
        max_realizations: config.max_realizations,
        ..Default::default()
    };
    let set = enumerate_with(&problem, &opts).map_err(|e| e.in_stage("realizations"))?;
    let mut studies = Vec::new();
    for h in config.extra_exclusion_sets()? {
        let (count, partial) = match enumerate_with(&problem.with_exclusions(&h), &opts) {
            Ok(s) => (s.count(), s.partial),
            Err(Error::Infeasible(_)) => (0, false),
            Err(e) => return Err(e.in_stage("exclusion study")),
        };
        studies.push(ExclusionCount {
            excluded: edge_names(&h),
            count,
            partial,
        });
    }
    timing.enumerate_secs = t.elapsed().as_secs_f64();

    let dense_edges = set.dense.support.len();
    let (rmax, ratio) = if dense_edges == 0 {
        (0, 1.0)
    } else {
        (r_max(dense_edges, 1)?, info_ratio(set.count().max(1), dense_edges)?)
    };
    let summary = estimate.as_ref().map(|est| {
        let mask = est.support_mask();
        let model_mask = model.system.coefficients().map(|v| v != 0.0);
        EstimateSummary {
            method: est.method,
            regression_rows: dataset.as_ref().map_or(0, |d| d.trajectories.iter().map(|t| t.samples() - 1).sum()),
            m_hat: matrix_rows(&est.estimate()),
            std_errors: matrix_rows(&est.standard_errors()),
            support: mask.row_iter().map(|r| r.iter().copied().collect()).collect(),
            sigma2_rows: est.rows.iter().map(|r| r.sigma2).collect(),
            free_parameters: est.free_parameters(),
            chi2_quantile: chi2_quantile(est.free_parameters(), 1.0 - config.alpha).unwrap_or(f64::NAN),
            pattern_matches_model: mask == model_mask,
            converged: est.rows.iter().all(|r| r.converged),
        }
    });
    let report = Report {
        schema: REPORT_SCHEMA,
        sigma2: dataset.as_ref().map(|d| d.sigma2),
        alpha: config.alpha,
        seed: dataset.as_ref().map(|d| d.seed),
        experiments: dataset.as_ref().map(|d| d.trajectories.len()),
        estimate: summary,
        exclusions: edge_names(&exclusions),
        dense_edges,
        dense: set
            .dense
            .support
            .iter()
            .map(|&e| EdgeRate {
                edge: e.to_string(),
                rate: set.dense.kirchhoff.rate(e),
            })
            .collect(),
        realizations: set.count(),
        partial: set.partial,
        failure: set.failure.clone(),
        r_max: rmax,
        info_ratio: ratio,
        supports: set.supports.iter().map(|f| f.edges.iter().map(Edge::to_string).collect()).collect(),
        exclusion_studies: studies,
        timing: Timing {
            total_secs: start.elapsed().as_secs_f64(),
            ..timing
        },
    };
    info!(
        "dense realization has {} reactions; {} realizations",
        report.dense_edges, report.realizations
    );
    Ok(Outcome {
        report,
        problem,
        estimate,
        realizations: set,
    })
}

/// Runs the configured pipeline at the configured noise level.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<Outcome> {
    config.validate()?;
    let model = load_model(config)?;
    run_with(config, &model, config.noise.sigma2)
}

/// Writes `report.json`, `dense.dot` and, when configured, one DOT file per
/// realization into `dir`.
pub fn write_outputs(config: &ExperimentConfig, outcome: &Outcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(&outcome.report)?;
    text.push('\n');
    fs::File::create(&path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| Error::io(&path, e))?;
    let complexes = &outcome.problem.complexes;
    write_dot(&dir.join("dense.dot"), &realization_dot(complexes, &outcome.realizations.dense, "dense"))?;
    if config.dot_all {
        for (k, f) in outcome.realizations.supports.iter().enumerate() {
            let name = format!("realization_{:04}", k + 1);
            write_dot(&dir.join(format!("{name}.dot")), &realization_dot(complexes, &f.realization, &name))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_mode_is_unique() {
        let config: ExperimentConfig = toml::from_str("[estimator]\nmethod = \"exact\"").unwrap();
        let out = run_pipeline(&config).unwrap();
        assert_eq!(out.report.dense_edges, 6);
        assert_eq!(out.report.realizations, 1);
        assert_eq!(out.report.r_max, 63);
        assert!(out.report.estimate.is_none());
    }

    #[test]
    fn noiseless_lse_recovers_coefficients() {
        let text = r#"
            [protocol]
            experiments = 5
            duration = 5.0
            step = 0.05
            x0_range = [0.0, 1.0]
            seed = 3
            [noise]
            sigma2 = 0.0
        "#;
        let config: ExperimentConfig = toml::from_str(text).unwrap();
        let model = load_model(&config).unwrap();
        let data = prepare_data(&config, &model, 0.0).unwrap().unwrap();
        let est = estimate(&config, &model, &data).unwrap();
        assert!((est.estimate() - benchmark::coefficients()).amax() < 1e-8);
    }

    #[test]
    fn noiseless_sbl_recovers_the_pattern() {
        let text = r#"
            [protocol]
            experiments = 10
            duration = 10.0
            step = 0.1
            x0_range = [0.0, 1.0]
            seed = 1
            [noise]
            sigma2 = 0.0
            [estimator]
            method = "sbl"
        "#;
        let config: ExperimentConfig = toml::from_str(text).unwrap();
        let model = load_model(&config).unwrap();
        let data = prepare_data(&config, &model, 0.0).unwrap().unwrap();
        let est = estimate(&config, &model, &data).unwrap();
        assert_eq!(est.support_mask(), benchmark::true_mask());
        assert!((est.estimate() - benchmark::coefficients()).amax() < 1e-8);
    }
}
