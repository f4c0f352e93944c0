mod common;

use std::fs;

use crnid::benchmark;
use crnid::pipeline::{
    generate_data, run_pipeline, run_sweep, write_dataset, write_outputs, EstimatorConfig, ExperimentConfig, NoiseModel, Protocol, Report, SweepRange,
    Timing,
};

fn small_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.protocol = Protocol {
        experiments: 10,
        duration: 5.0,
        step: 0.01,
        x0_range: [0.0, 1.0],
        seed: 11,
        allow_negative: true,
    };
    c.noise.sigma2 = 1e-3;
    c.noise.model = NoiseModel::Equation;
    c
}

fn without_timing(mut r: Report) -> Report {
    r.timing = Timing::default();
    r
}

#[test]
fn reports_and_dot_files_are_deterministic() {
    let config = small_config();
    let a = run_pipeline(&config).unwrap();
    let b = run_pipeline(&config).unwrap();
    assert_eq!(without_timing(a.report.clone()), without_timing(b.report.clone()));
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_outputs(&config, &a, da.path()).unwrap();
    write_outputs(&config, &b, db.path()).unwrap();
    let dot = |d: &tempfile::TempDir| fs::read(d.path().join("dense.dot")).unwrap();
    assert_eq!(dot(&da), dot(&db));
    assert!(a.report.dense_edges >= 6);
    assert_eq!(a.report.schema, 1);
}

#[test]
fn pipeline_from_files_matches_in_memory_run() {
    let config = small_config();
    let model = benchmark::model();
    let data = generate_data(&model.system, &config.protocol, config.noise.sigma2, config.noise.model).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(&data, &config.protocol, &model, dir.path()).unwrap();
    let from_files = ExperimentConfig {
        data: Some(manifest),
        ..config.clone()
    };
    let a = run_pipeline(&config).unwrap().report;
    let b = run_pipeline(&from_files).unwrap().report;
    assert_eq!(without_timing(a), without_timing(b));
}

#[test]
fn single_point_sweep_matches_the_pipeline() {
    let mut config = small_config();
    config.noise.sweep = Some(SweepRange {
        lo: config.noise.sigma2,
        hi: config.noise.sigma2,
        count: 1,
    });
    let rows = run_sweep(&config).unwrap();
    let report = run_pipeline(&config).unwrap().report;
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].count, Some(report.realizations));
    assert_eq!(rows[0].dense_edges, Some(report.dense_edges));
    assert_eq!(rows[0].ratio, Some(report.info_ratio));
}

#[test]
fn benchmark_protocol_has_fifty_runs_of_1001_samples() {
    let config = ExperimentConfig::default();
    let data = generate_data(&benchmark::system(), &config.protocol, 1e-4, NoiseModel::State).unwrap();
    assert_eq!(data.trajectories.len(), 50);
    assert!(data.trajectories.iter().all(|t| t.samples() == 1001));
}

#[test]
fn excluding_a_true_reaction_in_exact_mode_is_infeasible() {
    let config = ExperimentConfig {
        estimator: EstimatorConfig::Exact { rho: 0.0 },
        exclusions: vec!["C1->C2".into()],
        ..ExperimentConfig::default()
    };
    match run_pipeline(&config) {
        Err(e) => assert_eq!(e.exit_code(), 2, "{e}"),
        Ok(_) => panic!("expected infeasibility"),
    }
}

#[test]
fn sweep_records_failed_points_and_continues() {
    let mut config = small_config();
    config.exclusions = vec!["C1->C2".into()];
    config.noise.sweep = Some(SweepRange { lo: 1e-4, hi: 1e-3, count: 2 });
    let rows = run_sweep(&config).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.count.is_none() && r.status.starts_with("error")));
}

#[test]
fn confidence_region_covers_the_truth_at_the_nominal_rate() {
    let alpha = 0.05;
    let coverage = common::region_coverage(200, alpha);
    assert!(coverage >= 1.0 - alpha - 0.05, "coverage {coverage}");
}
