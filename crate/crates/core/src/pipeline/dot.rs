use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::kinetic::{ComplexMatrix, Realization};
use crate::{Error, Result};

/// Feinberg-Horn-Jackson graph in DOT: one node per complex labelled with
/// its formula, one edge per reaction labelled with its rate (4 decimals).
/// Nodes follow complex order, edges source then target order.
pub fn realization_dot(complexes: &ComplexMatrix, realization: &Realization, name: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{name}\" {{");
    out.push_str("  rankdir=LR;\n");
    for j in 0..complexes.complexes() {
        let _ = writeln!(out, "  C{} [label=\"{}\"];", j + 1, complexes.formula(j));
    }
    for e in &realization.support {
        let _ = writeln!(
            out,
            "  C{} -> C{} [label=\"{:.4}\"];",
            e.source + 1,
            e.target + 1,
            realization.kirchhoff.rate(*e)
        );
    }
    out.push_str("}\n");
    out
}

pub fn write_dot(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
