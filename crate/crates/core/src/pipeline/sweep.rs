use std::fs;
use std::path::Path;

use log::warn;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::run::{load_model, run_with};
use crate::kinetic::r_max;
use crate::{Error, Result};

/// One noise level of a sweep. Counts are `None` when the point failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sigma2: f64,
    pub dense_edges: Option<usize>,
    pub count: Option<usize>,
    pub ratio: Option<f64>,
    /// One count per configured extra exclusion set.
    pub exclusion_counts: Vec<Option<usize>>,
    pub status: String,
}

/// Full pipeline at every configured noise level. Points run in parallel;
/// a failing point is recorded and the sweep continues.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let sigmas = match &config.noise.sweep {
        Some(s) => s.values(),
        None => vec![config.noise.sigma2],
    };
    let model = load_model(config)?;
    let extra = config.extra_exclusion_sets()?.len();
    let rows = sigmas
        .par_iter()
        .map(|&sigma2| match run_with(config, &model, sigma2) {
            Ok(out) => {
                let r = &out.report;
                SweepRow {
                    sigma2,
                    dense_edges: Some(r.dense_edges),
                    count: Some(r.realizations),
                    ratio: Some(r.info_ratio),
                    exclusion_counts: r.exclusion_studies.iter().map(|s| Some(s.count)).collect(),
                    status: if r.partial { "partial".into() } else { "ok".into() },
                }
            }
            Err(e) => {
                warn!("sweep point sigma2 = {sigma2:e} failed: {e}");
                SweepRow {
                    sigma2,
                    dense_edges: None,
                    count: None,
                    ratio: None,
                    exclusion_counts: vec![None; extra],
                    status: format!("error: {e}"),
                }
            }
        })
        .collect();
    Ok(rows)
}

/// `sigma2,dense_edges,count,ratio[,count[H]...],status`.
pub fn write_sweep_csv(path: &Path, config: &ExperimentConfig, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Invalid(format!("{other:?}")),
    })?;
    let mut header = vec!["sigma2".to_string(), "dense_edges".into(), "count".into(), "ratio".into()];
    for set in &config.exclusion_sets {
        header.push(format!("count[{}]", set.join(" ")));
    }
    header.push("status".into());
    w.write_record(&header)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in rows {
        let mut rec = vec![
            format!("{:.16e}", r.sigma2),
            opt(r.dense_edges.map(|v| v.to_string())),
            opt(r.count.map(|v| v.to_string())),
            opt(r.ratio.map(|v| format!("{v:.16e}"))),
        ];
        rec.extend(r.exclusion_counts.iter().map(|c| opt(c.map(|v| v.to_string()))));
        rec.push(r.status.clone());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Short text summary: the count range and where, if anywhere, counts
/// reach the combinatorial maximum of their dense realization.
pub fn saturation_summary(rows: &[SweepRow]) -> String {
    let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.count.is_some()).collect();
    if ok.is_empty() {
        return "no sweep point succeeded".into();
    }
    let counts: Vec<usize> = ok.iter().filter_map(|r| r.count).collect();
    let lo = counts.iter().min().copied().unwrap_or(0);
    let hi = counts.iter().max().copied().unwrap_or(0);
    let saturated = ok.iter().find(|r| match (r.dense_edges, r.count) {
        (Some(d), Some(c)) if d > 0 => r_max(d, 1).is_ok_and(|m| c as u128 == m),
        _ => false,
    });
    let monotone = counts.windows(2).all(|w| w[1] >= w[0]);
    let mut s = format!(
        "{} of {} points succeeded; counts range {lo}..{hi}; {}",
        ok.len(),
        rows.len(),
        if monotone { "non-decreasing in sigma2" } else { "not monotone in sigma2" }
    );
    match saturated {
        Some(r) => s.push_str(&format!("; saturated from sigma2 = {:.3e}", r.sigma2)),
        None => s.push_str("; never saturated"),
    }
    s
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}
