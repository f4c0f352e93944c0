use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ConicProgram, SocConstraint};
use crate::{Error, Result};

/// Self-describing JSON form of a [`ConicProgram`]. Infinite bounds are
/// written as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramFile {
    pub format: String,
    pub sense: String,
    pub dim: usize,
    pub objective: Vec<f64>,
    pub equalities: Vec<EqualityRow>,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
    pub cones: Vec<ConeEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqualityRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// `‖transform (v[indices] - center)‖₂ ≤ radius`, transform row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeEntry {
    pub indices: Vec<usize>,
    pub center: Vec<f64>,
    pub transform: Vec<Vec<f64>>,
    pub radius: f64,
}

const FORMAT: &str = "conic-program/1";

impl From<&ConicProgram> for ProgramFile {
    fn from(p: &ConicProgram) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        ProgramFile {
            format: FORMAT.into(),
            sense: "maximize".into(),
            dim: p.dim,
            objective: p.objective.iter().copied().collect(),
            equalities: p
                .equalities
                .iter()
                .map(|(coeffs, rhs)| EqualityRow {
                    coeffs: coeffs.clone(),
                    rhs: *rhs,
                })
                .collect(),
            lower: p.lower.iter().map(|&v| finite(v)).collect(),
            upper: p.upper.iter().map(|&v| finite(v)).collect(),
            cones: p
                .cones
                .iter()
                .map(|c| ConeEntry {
                    indices: c.indices.clone(),
                    center: c.center.iter().copied().collect(),
                    transform: c.transform.row_iter().map(|r| r.iter().copied().collect()).collect(),
                    radius: c.radius,
                })
                .collect(),
        }
    }
}

impl ProgramFile {
    pub fn into_program(self) -> Result<ConicProgram> {
        let mut p = ConicProgram::new(self.dim);
        p.objective = DVector::from_vec(self.objective);
        p.equalities = self.equalities.into_iter().map(|r| (r.coeffs, r.rhs)).collect();
        p.lower = self.lower.into_iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect();
        p.upper = self.upper.into_iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
        for c in self.cones {
            let rows = c.transform.len();
            let cols = c.indices.len();
            let flat: Vec<f64> = c.transform.into_iter().flatten().collect();
            if flat.len() != rows * cols {
                return Err(Error::Dimension("cone transform is not rectangular".into()));
            }
            p.cones.push(SocConstraint {
                indices: c.indices,
                center: DVector::from_vec(c.center),
                transform: DMatrix::from_row_slice(rows, cols, &flat),
                radius: c.radius,
            });
        }
        p.validate()?;
        Ok(p)
    }
}

pub fn dump_program(program: &ConicProgram, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, &ProgramFile::from(program))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_program(path: &Path) -> Result<ConicProgram> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let file: ProgramFile = serde_json::from_reader(BufReader::new(f))?;
    file.into_program()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut p = ConicProgram::new(3);
        p.objective[1] = 2.0;
        p.add_equality(vec![(0, 1.0), (2, -1.0)], 0.5);
        p.set_bounds(0, 0.0, 1e4);
        p.add_soc(SocConstraint {
            indices: vec![1, 2],
            center: DVector::from_vec(vec![0.1, 0.2]),
            transform: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]),
            radius: 0.3,
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        dump_program(&p, &path).unwrap();
        assert_eq!(load_program(&path).unwrap(), p);
    }
}
