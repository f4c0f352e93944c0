use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use crnid::conic::dump_program;
use crnid::enumeration::{enumerate_with, EnumerateOptions, Progress};
use crnid::estimation::confidence_region;
use crnid::kinetic::{Edge, Model, Realization};
use crnid::pipeline::{
    estimate, load_model, matrix_rows, prepare_data, realization_dot, run_pipeline, run_sweep, saturation_summary, write_dataset, write_dot, write_outputs,
    write_sweep_csv, EstimatorConfig, ExperimentConfig,
};
use crnid::realization::{build_program, dense_realization, RealizationProblem, UncertaintyRegion};
use crnid::{Error, Result};

#[derive(Parser)]
#[command(name = "crnid", version, about = "Identify kinetic models from time series and enumerate their reaction network structures")]
struct Cli {
    /// Experiment configuration (TOML or JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the protocol seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the configuration).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; all cores by default.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Writes the first dense-realization program to this file.
    #[arg(long, global = true)]
    dump_program: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the noisy dataset (one CSV per experiment plus a manifest).
    Simulate {
        #[arg(long)]
        sigma2: Option<f64>,
    },
    /// Estimate the coefficient matrix and its covariance.
    Estimate,
    /// Compute the dense realization.
    Dense,
    /// Enumerate all realizations.
    Enumerate {
        #[arg(long)]
        max_realizations: Option<usize>,
    },
    /// Run estimation, dense realization and enumeration; write the report.
    Pipeline,
    /// Run the pipeline over the configured noise sweep.
    Sweep,
    /// Write the reaction graph of a model that carries A_kappa.
    ExportDot {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.protocol.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

/// Realization problem for the configured estimator at the configured noise.
fn problem_for(config: &ExperimentConfig, model: &Model) -> Result<RealizationProblem> {
    let region = match &config.estimator {
        EstimatorConfig::Exact { rho } if *rho == 0.0 => UncertaintyRegion::exact(model.system.coefficients().clone()),
        EstimatorConfig::Exact { rho } => UncertaintyRegion::spherical(model.system.coefficients().clone(), *rho)?,
        _ => {
            let data = prepare_data(config, model, config.noise.sigma2)?.ok_or_else(|| Error::Config("no dataset".into()))?;
            let est = estimate(config, model, &data).map_err(|e| e.in_stage("estimate"))?;
            confidence_region(&est, config.alpha)?
        }
    };
    RealizationProblem::new(model.system.complexes().clone(), region, config.exclusion_set()?)
}

fn maybe_dump(cli: &Cli, problem: &RealizationProblem) -> Result<()> {
    if let Some(path) = &cli.dump_program {
        let all: BTreeSet<Edge> = problem.candidates().into_iter().collect();
        dump_program(&build_program(problem, &all)?, path)?;
        info!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct DenseOut {
    edges: Vec<(String, f64)>,
    coefficients: Vec<Vec<f64>>,
}

fn dense_out(r: &Realization) -> DenseOut {
    DenseOut {
        edges: r.support.iter().map(|&e| (e.to_string(), r.kirchhoff.rate(e))).collect(),
        coefficients: matrix_rows(&r.coefficients),
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Command::ExportDot { model, output } = &cli.command {
        let m = Model::load(model)?;
        let a = m
            .kirchhoff
            .clone()
            .ok_or_else(|| Error::Config(format!("{} has no A_kappa", model.display())))?;
        let r = Realization::new(a, m.system.coefficients().clone());
        let text = realization_dot(m.system.complexes(), &r, "model");
        match output {
            Some(p) => write_dot(p, &text)?,
            None => print!("{text}"),
        }
        return Ok(());
    }

    let config = load_config(cli)?;
    let out = config.output.clone();
    create_dir(&out)?;
    match &cli.command {
        Command::Simulate { sigma2 } => {
            let model = load_model(&config)?;
            let sigma2 = sigma2.unwrap_or(config.noise.sigma2);
            let data = crnid::pipeline::generate_data(&model.system, &config.protocol, sigma2, config.noise.model)?;
            let manifest = write_dataset(&data, &config.protocol, &model, &out.join("data"))?;
            println!("{}", manifest.display());
        }
        Command::Estimate => {
            let model = load_model(&config)?;
            let data = prepare_data(&config, &model, config.noise.sigma2)?
                .ok_or_else(|| Error::Config("estimator \"exact\" does not estimate".into()))?;
            let est = estimate(&config, &model, &data)?;
            #[derive(Serialize)]
            struct EstimateOut {
                m_hat: Vec<Vec<f64>>,
                std_errors: Vec<Vec<f64>>,
                covariance_blocks: Vec<Vec<Vec<f64>>>,
                supports: Vec<Vec<usize>>,
                sigma2_rows: Vec<f64>,
            }
            let value = EstimateOut {
                m_hat: matrix_rows(&est.estimate()),
                std_errors: matrix_rows(&est.standard_errors()),
                covariance_blocks: est.rows.iter().map(|r| matrix_rows(&r.covariance)).collect(),
                supports: est.rows.iter().map(|r| r.support.clone()).collect(),
                sigma2_rows: est.rows.iter().map(|r| r.sigma2).collect(),
            };
            write_json(&out.join("estimate.json"), &value)?;
            println!("{}", out.join("estimate.json").display());
        }
        Command::Dense => {
            let model = load_model(&config)?;
            let problem = problem_for(&config, &model)?;
            maybe_dump(cli, &problem)?;
            let dense = dense_realization(&problem)?;
            write_json(&out.join("dense.json"), &dense_out(&dense))?;
            write_dot(&out.join("dense.dot"), &realization_dot(&problem.complexes, &dense, "dense"))?;
            println!("dense realization: {} reactions", dense.support.len());
        }
        Command::Enumerate { max_realizations } => {
            let model = load_model(&config)?;
            let problem = problem_for(&config, &model)?;
            maybe_dump(cli, &problem)?;
            let hook = |p: Progress| info!("{} nodes done, {} queued, {} found", p.completed, p.queued, p.found);
            let opts = EnumerateOptions {
                max_realizations: max_realizations.or(config.max_realizations),
                progress: Some(&hook),
                ..Default::default()
            };
            let set = enumerate_with(&problem, &opts)?;
            let supports: Vec<Vec<String>> = set.supports.iter().map(|f| f.edges.iter().map(Edge::to_string).collect()).collect();
            write_json(&out.join("realizations.json"), &supports)?;
            println!("{} realizations (dense: {} reactions)", set.count(), set.dense.support.len());
            if let Some(why) = &set.failure {
                return Err(Error::NumericFailure(format!("enumeration stopped early: {why}")));
            }
        }
        Command::Pipeline => {
            if cli.dump_program.is_some() {
                let model = load_model(&config)?;
                maybe_dump(cli, &problem_for(&config, &model)?)?;
            }
            let outcome = run_pipeline(&config)?;
            write_outputs(&config, &outcome, &out)?;
            let r = &outcome.report;
            println!(
                "dense: {} reactions; realizations: {}; r_max: {}; ratio: {:.4}",
                r.dense_edges, r.realizations, r.r_max, r.info_ratio
            );
            if let Some(why) = &r.failure {
                return Err(Error::NumericFailure(format!("enumeration stopped early: {why}")));
            }
        }
        Command::Sweep => {
            let rows = run_sweep(&config)?;
            let path = out.join("sweep.csv");
            write_sweep_csv(&path, &config, &rows)?;
            println!("{}", saturation_summary(&rows));
            println!("{}", path.display());
        }
        Command::ExportDot { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            warn!("could not size the thread pool: {e}");
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
