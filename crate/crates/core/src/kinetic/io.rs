use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{ComplexMatrix, KineticSystem, KirchhoffMatrix, Trajectory};
use crate::{Error, Result};

/// On-disk model description. `complexes` lists the columns of `Y`; `M` and
/// `A_kappa` are row-major. At least one of them must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub species: Option<Vec<String>>,
    pub complexes: Vec<Vec<u32>>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<Vec<f64>>>,
    #[serde(rename = "A_kappa", default, skip_serializing_if = "Option::is_none")]
    pub a_kappa: Option<Vec<Vec<f64>>>,
}

/// A validated model: the kinetic system and, when known, a generating network.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub system: KineticSystem,
    pub kirchhoff: Option<KirchhoffMatrix>,
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("{what} rows have different lengths")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl Model {
    pub fn from_file_data(file: ModelFile) -> Result<Self> {
        let mut complexes = ComplexMatrix::from_columns(&file.complexes)?;
        if let Some(names) = file.species {
            complexes = complexes.with_species_names(names)?;
        }
        let kirchhoff = match &file.a_kappa {
            Some(rows) => Some(KirchhoffMatrix::from_matrix(rows_to_matrix(rows, "A_kappa")?)?),
            None => None,
        };
        let m = match (&file.m, &kirchhoff) {
            (Some(rows), _) => rows_to_matrix(rows, "M")?,
            (None, Some(a)) => super::assemble_coefficients(&complexes, a)?,
            (None, None) => return Err(Error::Invalid("model needs \"M\" or \"A_kappa\"".into())),
        };
        if let Some(a) = &kirchhoff {
            let assembled = super::assemble_coefficients(&complexes, a)?;
            let gap = (&assembled - &m).amax();
            if gap > 1e-9 * m.amax().max(1.0) {
                return Err(Error::Invalid(format!("M differs from Y A_kappa by {gap:e}")));
            }
        }
        let system = KineticSystem::new(complexes, m)?;
        Ok(Model { system, kirchhoff })
    }

    pub fn to_file_data(&self) -> ModelFile {
        let complexes = self.system.complexes();
        ModelFile {
            species: Some(complexes.species_names().to_vec()),
            complexes: complexes.columns(),
            m: Some(matrix_to_rows(self.system.coefficients())),
            a_kappa: self.kirchhoff.as_ref().map(|a| matrix_to_rows(a.matrix())),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_reader(BufReader::new(f))?;
        Self::from_file_data(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer_pretty(&mut w, &self.to_file_data())?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Writes `t,x1,...,xn` with round-trip precision.
pub fn write_trajectory_csv(path: &Path, trajectory: &Trajectory) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(f));
    let n = trajectory.species();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for (k, t) in trajectory.times.iter().enumerate() {
        let mut rec = Vec::with_capacity(n + 1);
        rec.push(format!("{t:.16e}"));
        rec.extend(trajectory.states.row(k).iter().map(|v| format!("{v:.16e}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(BufReader::new(f));
    let header = r.headers()?.clone();
    if header.get(0).map(str::trim) != Some("t") || header.len() < 2 {
        return Err(Error::Invalid(format!("{}: header must be t,x1,...,xn", path.display())));
    }
    let n = header.len() - 1;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| {
                Error::Invalid(format!("{}: bad number {s:?} in data row {}", path.display(), line + 1))
            })
        };
        times.push(parse(&rec[0])?);
        for i in 1..=n {
            values.push(parse(&rec[i])?);
        }
    }
    let states = DMatrix::from_row_slice(times.len(), n, &values);
    Trajectory::from_samples(times, states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark;

    #[test]
    fn model_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = benchmark::model();
        model.save(&path).unwrap();
        let back = Model::load(&path).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn model_from_kirchhoff_only() {
        let mut file = benchmark::model().to_file_data();
        file.m = None;
        let model = Model::from_file_data(file).unwrap();
        assert!((model.system.coefficients() - benchmark::coefficients()).amax() < 1e-15);
    }

    #[test]
    fn inconsistent_model_rejected() {
        let mut file = benchmark::model().to_file_data();
        file.m.as_mut().unwrap()[0][0] += 0.1;
        assert!(Model::from_file_data(file).is_err());
        let mut file = benchmark::model().to_file_data();
        file.m = None;
        file.a_kappa = None;
        assert!(Model::from_file_data(file).is_err());
    }

    #[test]
    fn trajectory_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        let tr = crate::kinetic::simulate(&benchmark::system(), &[0.3, 0.7, 0.1, 0.9, 0.5], 1.0, 0.01).unwrap();
        write_trajectory_csv(&path, &tr).unwrap();
        let back = read_trajectory_csv(&path).unwrap();
        assert_eq!(back.times, tr.times);
        assert_eq!(back.states, tr.states);
    }

    #[test]
    fn bad_csv_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "t,x1\n0,1\n0.1,abc\n").unwrap();
        assert!(read_trajectory_csv(&path).is_err());
        std::fs::write(&path, "t,x1\n0,1\n0.1,1\n0.3,1\n").unwrap();
        assert!(read_trajectory_csv(&path).is_err());
    }
}
