//! The five-species benchmark network used throughout the tests and examples.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::kinetic::{ComplexMatrix, Edge, KineticSystem, KirchhoffMatrix, Model};

/// Columns: X1, 2X2, X1+X3, X4, X2+X5.
pub fn complexes() -> ComplexMatrix {
    ComplexMatrix::from_columns(&[
        vec![1, 0, 0, 0, 0],
        vec![0, 2, 0, 0, 0],
        vec![1, 0, 1, 0, 0],
        vec![0, 0, 0, 1, 0],
        vec![0, 1, 0, 0, 1],
    ])
    .expect("benchmark complexes are valid")
}

#[rustfmt::skip]
pub const KIRCHHOFF: [[f64; 5]; 5] = [
    [-1.163,  0.0,  0.0,     0.0,     0.8492],
    [ 0.3386, 0.0,  0.0,     0.0,     0.4290],
    [ 0.8244, 0.0, -0.7364,  0.5631,  0.0   ],
    [ 0.0,    0.0,  0.0,    -0.5631,  0.0   ],
    [ 0.0,    0.0,  0.7364,  0.0,    -1.2782],
];

pub fn kirchhoff() -> KirchhoffMatrix {
    let a = DMatrix::from_fn(5, 5, |i, j| KIRCHHOFF[i][j]);
    KirchhoffMatrix::from_matrix(a).expect("benchmark Kirchhoff matrix is valid")
}

pub fn coefficients() -> DMatrix<f64> {
    complexes().matrix() * kirchhoff().matrix()
}

pub fn system() -> KineticSystem {
    KineticSystem::new(complexes(), coefficients()).expect("benchmark dimensions agree")
}

pub fn model() -> Model {
    Model {
        system: system(),
        kirchhoff: Some(kirchhoff()),
    }
}

/// C1->C2, C1->C3, C3->C5, C4->C3, C5->C1, C5->C2.
pub fn true_edges() -> BTreeSet<Edge> {
    [(0, 1), (0, 2), (2, 4), (3, 2), (4, 0), (4, 1)]
        .into_iter()
        .map(|(s, t)| Edge::new(s, t))
        .collect()
}

/// Sparsity pattern of the true coefficient matrix.
pub fn true_mask() -> DMatrix<bool> {
    coefficients().map(|v| v != 0.0)
}
