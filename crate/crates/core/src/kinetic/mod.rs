//! Kinetic systems `dx/dt = M psi^Y(x)` and their reaction-network encodings.

mod io;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{
    read_trajectory_csv, write_trajectory_csv, Model, ModelFile,
};

/// Off-diagonal Kirchhoff entries down to this value are accepted as
/// round-off and clamped to zero.
pub const SIGN_TOL: f64 = 1e-12;

/// Column sums of a Kirchhoff matrix must vanish to this tolerance.
pub const COLUMN_SUM_TOL: f64 = 1e-10;

/// A reaction `C_source -> C_target` between two complexes (0-based indices).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
}

impl Edge {
    pub fn new(source: usize, target: usize) -> Self {
        Edge { source, target }
    }

    /// All ordered pairs of distinct complexes, ordered by source then target.
    pub fn all(m: usize) -> Vec<Edge> {
        (0..m)
            .flat_map(|s| (0..m).filter(move |&t| t != s).map(move |t| Edge::new(s, t)))
            .collect()
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}->C{}", self.source + 1, self.target + 1)
    }
}

impl FromStr for Edge {
    type Err = Error;

    /// Parses `"C4->C1"` (1-based, whitespace tolerated).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("cannot parse edge {s:?}; expected e.g. \"C4->C1\""));
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let (lhs, rhs) = compact.split_once("->").ok_or_else(bad)?;
        let index = |part: &str| -> Result<usize> {
            let digits = part.strip_prefix('C').or_else(|| part.strip_prefix('c')).ok_or_else(bad)?;
            let i: usize = digits.parse().map_err(|_| bad())?;
            if i == 0 {
                return Err(bad());
            }
            Ok(i - 1)
        };
        let (source, target) = (index(lhs)?, index(rhs)?);
        if source == target {
            return Err(Error::Invalid(format!("edge {s:?} is a self loop")));
        }
        Ok(Edge { source, target })
    }
}

/// The complex composition matrix `Y` (species x complexes).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    stoich: DMatrix<u32>,
    dense: DMatrix<f64>,
    species_names: Vec<String>,
}

impl ComplexMatrix {
    pub fn new(stoich: DMatrix<u32>) -> Result<Self> {
        let (n, m) = stoich.shape();
        if n == 0 || m == 0 {
            return Err(Error::Invalid("complex matrix needs at least one species and one complex".into()));
        }
        for a in 0..m {
            for b in (a + 1)..m {
                if stoich.column(a) == stoich.column(b) {
                    return Err(Error::Invalid(format!("complexes C{} and C{} are identical", a + 1, b + 1)));
                }
            }
        }
        let dense = stoich.map(f64::from);
        let species_names = (1..=n).map(|i| format!("X{i}")).collect();
        Ok(ComplexMatrix {
            stoich,
            dense,
            species_names,
        })
    }

    /// Builds `Y` from its columns (one vector of stoichiometric coefficients per complex).
    pub fn from_columns(columns: &[Vec<u32>]) -> Result<Self> {
        let m = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension("complex columns have different lengths".into()));
        }
        Self::new(DMatrix::from_fn(n, m, |i, j| columns[j][i]))
    }

    pub fn with_species_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.species() {
            return Err(Error::Dimension(format!(
                "{} species names for {} species",
                names.len(),
                self.species()
            )));
        }
        self.species_names = names;
        Ok(self)
    }

    pub fn species(&self) -> usize {
        self.stoich.nrows()
    }

    pub fn complexes(&self) -> usize {
        self.stoich.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.dense
    }

    pub fn stoichiometry(&self) -> &DMatrix<u32> {
        &self.stoich
    }

    pub fn species_names(&self) -> &[String] {
        &self.species_names
    }

    pub fn columns(&self) -> Vec<Vec<u32>> {
        (0..self.complexes())
            .map(|j| self.stoich.column(j).iter().copied().collect())
            .collect()
    }

    /// Human readable formula of complex `j`, e.g. `"X1+X3"`, `"2X2"` or `"0"`.
    pub fn formula(&self, j: usize) -> String {
        let terms: Vec<String> = self
            .stoich
            .column(j)
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| {
                if c == 1 {
                    self.species_names[i].clone()
                } else {
                    format!("{c}{}", self.species_names[i])
                }
            })
            .collect();
        if terms.is_empty() {
            "0".to_string()
        } else {
            terms.join("+")
        }
    }
}

/// The pair `(Y, M)` defining `dx/dt = M psi^Y(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticSystem {
    complexes: ComplexMatrix,
    coefficients: DMatrix<f64>,
}

impl KineticSystem {
    /// Checks dimensions only; see [`is_kinetic`] for the sign condition.
    pub fn new(complexes: ComplexMatrix, coefficients: DMatrix<f64>) -> Result<Self> {
        let expected = (complexes.species(), complexes.complexes());
        if coefficients.shape() != expected {
            return Err(Error::Dimension(format!(
                "coefficient matrix is {:?}, complexes require {:?}",
                coefficients.shape(),
                expected
            )));
        }
        if coefficients.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("coefficient matrix has non-finite entries".into()));
        }
        Ok(KineticSystem {
            complexes,
            coefficients,
        })
    }

    pub fn complexes(&self) -> &ComplexMatrix {
        &self.complexes
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    /// Right-hand side `M psi^Y(x)`.
    pub fn rhs(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(&self.coefficients * monomial_eval(&self.complexes, x)?)
    }
}

/// Rate-coefficient matrix `A` with `A[(j, i)]` the rate of `C_i -> C_j`
/// and columns summing to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct KirchhoffMatrix {
    a: DMatrix<f64>,
}

impl KirchhoffMatrix {
    pub fn zeros(m: usize) -> Self {
        KirchhoffMatrix {
            a: DMatrix::zeros(m, m),
        }
    }

    /// Validates sign and column-sum structure. Off-diagonal entries in
    /// `[-SIGN_TOL, 0)` are clamped to zero and the diagonal is recomputed.
    pub fn from_matrix(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!("Kirchhoff matrix must be square, got {:?}", a.shape())));
        }
        let m = a.nrows();
        for j in 0..m {
            let mut sum = 0.0;
            for i in 0..m {
                let v = a[(i, j)];
                if !v.is_finite() {
                    return Err(Error::Invalid("Kirchhoff matrix has non-finite entries".into()));
                }
                if i != j && v < -SIGN_TOL {
                    return Err(Error::Invalid(format!(
                        "negative rate {v} for reaction C{}->C{}",
                        j + 1,
                        i + 1
                    )));
                }
                sum += v;
            }
            let scale = a.column(j).amax().max(1.0);
            if sum.abs() > COLUMN_SUM_TOL * scale {
                return Err(Error::Invalid(format!("column {} sums to {sum}, not zero", j + 1)));
            }
        }
        let rates = Edge::all(m).into_iter().map(|e| (e, a[(e.target, e.source)]));
        Self::from_rates(m, rates)
    }

    /// Builds the matrix from reaction rates; the diagonal is derived.
    pub fn from_rates(m: usize, rates: impl IntoIterator<Item = (Edge, f64)>) -> Result<Self> {
        let mut a = DMatrix::zeros(m, m);
        for (e, k) in rates {
            if e.source >= m || e.target >= m || e.source == e.target {
                return Err(Error::Invalid(format!("edge {e} invalid for {m} complexes")));
            }
            if !k.is_finite() || k < -SIGN_TOL {
                return Err(Error::Invalid(format!("invalid rate {k} for {e}")));
            }
            a[(e.target, e.source)] = k.max(0.0);
        }
        for j in 0..m {
            let out: f64 = (0..m).filter(|&i| i != j).map(|i| a[(i, j)]).sum();
            a[(j, j)] = -out;
        }
        Ok(KirchhoffMatrix { a })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn rate(&self, e: Edge) -> f64 {
        self.a[(e.target, e.source)]
    }

    /// Reactions with rate strictly above `eps`.
    pub fn support(&self, eps: f64) -> BTreeSet<Edge> {
        Edge::all(self.dim())
            .into_iter()
            .filter(|&e| self.rate(e) > eps)
            .collect()
    }
}

/// Uniformly sampled state trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// One row per sample, one column per species.
    pub states: DMatrix<f64>,
    pub step: f64,
    /// Largest negative undershoot removed by clamping during simulation.
    pub clamp_violation: f64,
}

impl Trajectory {
    pub fn samples(&self) -> usize {
        self.times.len()
    }

    pub fn species(&self) -> usize {
        self.states.ncols()
    }

    pub fn state(&self, k: usize) -> Vec<f64> {
        self.states.row(k).iter().copied().collect()
    }

    /// Wraps sampled data, checking that the sampling grid is uniform.
    pub fn from_samples(times: Vec<f64>, states: DMatrix<f64>) -> Result<Self> {
        if times.len() != states.nrows() {
            return Err(Error::Dimension(format!(
                "{} time stamps for {} samples",
                times.len(),
                states.nrows()
            )));
        }
        if times.len() < 2 {
            return Err(Error::Invalid("trajectory needs at least two samples".into()));
        }
        let step = times[1] - times[0];
        if !(step > 0.0) {
            return Err(Error::Invalid("time stamps must be strictly increasing".into()));
        }
        for w in times.windows(2) {
            let d = w[1] - w[0];
            if (d - step).abs() > 1e-9 * step.max(w[1].abs()) {
                return Err(Error::Invalid(format!("non-uniform sampling: step {d} vs {step}")));
            }
        }
        Ok(Trajectory {
            times,
            states,
            step,
            clamp_violation: 0.0,
        })
    }
}

/// A Kirchhoff matrix reproducing a particular coefficient matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub kirchhoff: KirchhoffMatrix,
    pub support: BTreeSet<Edge>,
    /// The coefficient matrix `Y A` this realization reproduces.
    pub coefficients: DMatrix<f64>,
}

impl Realization {
    pub fn new(kirchhoff: KirchhoffMatrix, coefficients: DMatrix<f64>) -> Self {
        let support = kirchhoff.support(crate::SUPPORT_EPS);
        Realization {
            kirchhoff,
            support,
            coefficients,
        }
    }

    /// Max-norm of `Y A - M_used`.
    pub fn residual(&self, complexes: &ComplexMatrix) -> f64 {
        (complexes.matrix() * self.kirchhoff.matrix() - &self.coefficients).amax()
    }
}

/// `psi_j(x) = prod_i x_i^{Y_ij}`, with `0^0 = 1`.
pub fn monomial_eval(complexes: &ComplexMatrix, x: &[f64]) -> Result<DVector<f64>> {
    if x.len() != complexes.species() {
        return Err(Error::Dimension(format!(
            "state has {} entries, complexes involve {} species",
            x.len(),
            complexes.species()
        )));
    }
    let y = complexes.stoichiometry();
    Ok(DVector::from_fn(complexes.complexes(), |j, _| {
        x.iter()
            .enumerate()
            .map(|(i, &xi)| match y[(i, j)] {
                0 => 1.0,
                1 => xi,
                p => xi.powi(p as i32),
            })
            .product()
    }))
}

/// Entries with `M_ij < 0` over a zero exponent `Y_ij = 0`; empty iff the
/// system is kinetic.
pub fn kinetic_violations(system: &KineticSystem) -> Vec<(usize, usize)> {
    let m = system.coefficients();
    let y = system.complexes().stoichiometry();
    let mut out = Vec::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if m[(i, j)] < 0.0 && y[(i, j)] == 0 {
                out.push((i, j));
            }
        }
    }
    out
}

/// Whether the system admits a reaction network realization, with the
/// offending `(species, complex)` entries when it does not.
pub fn is_kinetic(system: &KineticSystem) -> (bool, Vec<(usize, usize)>) {
    let v = kinetic_violations(system);
    (v.is_empty(), v)
}

/// `M = Y A`.
pub fn assemble_coefficients(complexes: &ComplexMatrix, kirchhoff: &KirchhoffMatrix) -> Result<DMatrix<f64>> {
    if kirchhoff.dim() != complexes.complexes() {
        return Err(Error::Dimension(format!(
            "Kirchhoff matrix is {0}x{0}, expected {1} complexes",
            kirchhoff.dim(),
            complexes.complexes()
        )));
    }
    Ok(complexes.matrix() * kirchhoff.matrix())
}

/// A reaction network on a possibly enlarged complex set.
#[derive(Debug, Clone)]
pub struct CanonicalNetwork {
    pub complexes: ComplexMatrix,
    pub kirchhoff: KirchhoffMatrix,
}

impl CanonicalNetwork {
    pub fn reactions(&self) -> BTreeSet<Edge> {
        self.kirchhoff.support(0.0)
    }
}

/// Canonical realization: every nonzero `M_ij` becomes the reaction
/// `y_j -> y_j + sign(M_ij) e_i` with rate `|M_ij|`. Product complexes not
/// already present are appended after the original ones.
pub fn canonical_realization(system: &KineticSystem) -> Result<CanonicalNetwork> {
    let (ok, violations) = is_kinetic(system);
    if !ok {
        return Err(Error::NotKinetic(violations));
    }
    let y = system.complexes().stoichiometry();
    let (n, m) = y.shape();
    let mut columns = system.complexes().columns();
    let mut reactions = Vec::new();
    for j in 0..m {
        for i in 0..n {
            let coef = system.coefficients()[(i, j)];
            if coef == 0.0 {
                continue;
            }
            let mut product = columns[j].clone();
            if coef > 0.0 {
                product[i] += 1;
            } else {
                product[i] -= 1;
            }
            let target = match columns.iter().position(|c| *c == product) {
                Some(t) => t,
                None => {
                    columns.push(product);
                    columns.len() - 1
                }
            };
            reactions.push((Edge::new(j, target), coef.abs()));
        }
    }
    let complexes = ComplexMatrix::from_columns(&columns)?
        .with_species_names(system.complexes().species_names().to_vec())?;
    let kirchhoff = KirchhoffMatrix::from_rates(columns.len(), reactions)?;
    Ok(CanonicalNetwork {
        complexes,
        kirchhoff,
    })
}

/// Forward-Euler simulation with step `h` over `duration`, clamping states
/// at zero from below. Produces `floor(duration / h) + 1` samples.
pub fn simulate(system: &KineticSystem, x0: &[f64], duration: f64, h: f64) -> Result<Trajectory> {
    let n = system.complexes().species();
    if x0.len() != n {
        return Err(Error::Dimension(format!("initial state has {} entries, expected {n}", x0.len())));
    }
    if !(h > 0.0) || !(duration >= h) {
        return Err(Error::Invalid(format!("need h > 0 and T >= h, got h = {h}, T = {duration}")));
    }
    if x0.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Invalid("initial state must be finite and nonnegative".into()));
    }
    let steps = (duration / h + 1e-9).floor() as usize;
    let mut states = DMatrix::zeros(steps + 1, n);
    let mut x = x0.to_vec();
    let mut violation: f64 = 0.0;
    states.row_mut(0).copy_from_slice(&x);
    for k in 1..=steps {
        let dx = system.rhs(&x)?;
        for i in 0..n {
            let next = x[i] + h * dx[i];
            if !next.is_finite() {
                return Err(Error::Divergence { step: k });
            }
            if next < 0.0 {
                violation = violation.max(-next);
            }
            x[i] = next.max(0.0);
        }
        states.row_mut(k).copy_from_slice(&x);
    }
    Ok(Trajectory {
        times: (0..=steps).map(|k| k as f64 * h).collect(),
        states,
        step: h,
        clamp_violation: violation,
    })
}

/// Number of nonempty edge subsets of the dense realization with at least
/// `min_edges` edges: `sum_{i >= min_edges} C(dense_edges, i)`.
pub fn r_max(dense_edges: usize, min_edges: usize) -> Result<u128> {
    if min_edges < 1 || dense_edges < min_edges {
        return Err(Error::Invalid(format!(
            "need dense_edges >= min_edges >= 1, got {dense_edges} and {min_edges}"
        )));
    }
    let overflow = || Error::Overflow(format!("r_max({dense_edges}) exceeds 128 bits"));
    let mut total: u128 = 0;
    // C(n, i + 1) = C(n, i) (n - i) / (i + 1); dividing out the common factor
    // first keeps every intermediate no larger than the result.
    let mut binom: u128 = 1;
    for i in 0..=dense_edges {
        if i >= min_edges {
            total = total.checked_add(binom).ok_or_else(overflow)?;
        }
        if i < dense_edges {
            let den = i as u128 + 1;
            let g = gcd(binom, den);
            binom = (binom / g)
                .checked_mul((dense_edges - i) as u128 / (den / g))
                .ok_or_else(overflow)?;
        }
    }
    Ok(total)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Fraction of combinatorially possible structures that remain admissible.
pub fn info_ratio(realizations: usize, dense_edges: usize) -> Result<f64> {
    if realizations < 1 {
        return Err(Error::Invalid("realization count must be at least 1".into()));
    }
    let max = r_max(dense_edges, 1)?;
    Ok(realizations as f64 / max as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark;

    #[test]
    fn edge_parse_and_display() {
        let e: Edge = "C4->C1".parse().unwrap();
        assert_eq!(e, Edge::new(3, 0));
        assert_eq!(e.to_string(), "C4->C1");
        assert_eq!(" C3 -> C2 ".parse::<Edge>().unwrap(), Edge::new(2, 1));
        assert!("C1->C1".parse::<Edge>().is_err());
        assert!("C0->C1".parse::<Edge>().is_err());
        assert!("X1->C2".parse::<Edge>().is_err());
    }

    #[test]
    fn complex_matrix_rejects_duplicates() {
        assert!(ComplexMatrix::from_columns(&[vec![1, 0], vec![1, 0]]).is_err());
        assert!(ComplexMatrix::from_columns(&[]).is_err());
    }

    #[test]
    fn formulas() {
        let y = benchmark::complexes();
        let f: Vec<String> = (0..5).map(|j| y.formula(j)).collect();
        assert_eq!(f, ["X1", "2X2", "X1+X3", "X4", "X2+X5"]);
        let z = ComplexMatrix::from_columns(&[vec![0, 0], vec![1, 0]]).unwrap();
        assert_eq!(z.formula(0), "0");
    }

    #[test]
    fn monomials() {
        let y = benchmark::complexes();
        let ones = monomial_eval(&y, &[1.0; 5]).unwrap();
        assert_eq!(ones.as_slice(), &[1.0; 5]);
        let v = monomial_eval(&y, &[1.0, 3.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(v[1], 9.0);
        let v = monomial_eval(&y, &[2.0, 0.0, 5.0, 0.0, 0.0]).unwrap();
        assert_eq!(v[2], 10.0);
        assert!(monomial_eval(&y, &[1.0; 4]).is_err());
    }

    #[test]
    fn zero_complex_is_constant_monomial() {
        let y = ComplexMatrix::from_columns(&[vec![0], vec![1]]).unwrap();
        assert_eq!(monomial_eval(&y, &[0.0]).unwrap().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn kinetic_condition() {
        let sys = benchmark::system();
        assert_eq!(is_kinetic(&sys), (true, vec![]));

        let mut m = sys.coefficients().clone();
        m[(0, 1)] = -1.0; // Y[(0, 1)] == 0
        let bad = KineticSystem::new(sys.complexes().clone(), m).unwrap();
        assert_eq!(is_kinetic(&bad), (false, vec![(0, 1)]));

        let positive = KineticSystem::new(sys.complexes().clone(), DMatrix::from_element(5, 5, 0.5)).unwrap();
        assert!(is_kinetic(&positive).0);
    }

    #[test]
    fn single_entry_violation() {
        let y = ComplexMatrix::from_columns(&[vec![0], vec![1]]).unwrap();
        let sys = KineticSystem::new(y, DMatrix::from_row_slice(1, 2, &[-1.0, 0.0])).unwrap();
        assert_eq!(is_kinetic(&sys), (false, vec![(0, 0)]));
    }

    #[test]
    fn assemble_small_and_zero() {
        let y = ComplexMatrix::from_columns(&[vec![1, 0], vec![0, 1]]).unwrap();
        let a = KirchhoffMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 2.0, -1.0])).unwrap();
        let m = assemble_coefficients(&y, &a).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 2.0, -1.0]));
        let z = assemble_coefficients(&y, &KirchhoffMatrix::zeros(2)).unwrap();
        assert_eq!(z, DMatrix::zeros(2, 2));
        assert!(assemble_coefficients(&y, &KirchhoffMatrix::zeros(3)).is_err());
    }

    #[test]
    fn kirchhoff_validation() {
        let bad_sign = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, -1.0]);
        assert!(KirchhoffMatrix::from_matrix(bad_sign).is_err());
        let bad_sum = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 2.0, 0.0]);
        assert!(KirchhoffMatrix::from_matrix(bad_sum).is_err());
        let tiny = DMatrix::from_row_slice(2, 2, &[-1e-13, 0.0, -1e-13, 0.0]);
        let k = KirchhoffMatrix::from_matrix(tiny).unwrap();
        assert_eq!(k.matrix(), &DMatrix::zeros(2, 2));
    }

    #[test]
    fn benchmark_support() {
        let support = benchmark::kirchhoff().support(crate::SUPPORT_EPS);
        assert_eq!(support, benchmark::true_edges());
    }

    #[test]
    fn canonical_decay() {
        let y = ComplexMatrix::from_columns(&[vec![1]]).unwrap();
        let sys = KineticSystem::new(y, DMatrix::from_element(1, 1, -1.0)).unwrap();
        let net = canonical_realization(&sys).unwrap();
        assert_eq!(net.complexes.complexes(), 2);
        assert_eq!(net.complexes.formula(1), "0");
        let reactions: Vec<Edge> = net.reactions().into_iter().collect();
        assert_eq!(reactions, vec![Edge::new(0, 1)]);
        assert_eq!(net.kirchhoff.rate(Edge::new(0, 1)), 1.0);
    }

    #[test]
    fn canonical_zero_system() {
        let y = benchmark::complexes();
        let sys = KineticSystem::new(y, DMatrix::zeros(5, 5)).unwrap();
        let net = canonical_realization(&sys).unwrap();
        assert!(net.reactions().is_empty());
    }

    #[test]
    fn canonical_benchmark_round_trip() {
        let sys = benchmark::system();
        let net = canonical_realization(&sys).unwrap();
        let m2 = assemble_coefficients(&net.complexes, &net.kirchhoff).unwrap();
        let m = sys.coefficients();
        assert!((m2.columns(0, 5) - m).amax() <= 1e-12);
        assert!(m2.columns(5, m2.ncols() - 5).amax() == 0.0);
    }

    #[test]
    fn canonical_rejects_non_kinetic() {
        let y = ComplexMatrix::from_columns(&[vec![0], vec![1]]).unwrap();
        let sys = KineticSystem::new(y, DMatrix::from_row_slice(1, 2, &[-1.0, 0.0])).unwrap();
        assert!(matches!(canonical_realization(&sys), Err(Error::NotKinetic(v)) if v == vec![(0, 0)]));
    }

    #[test]
    fn euler_decay_closed_form() {
        let y = ComplexMatrix::from_columns(&[vec![1]]).unwrap();
        let sys = KineticSystem::new(y, DMatrix::from_element(1, 1, -1.0)).unwrap();
        let tr = simulate(&sys, &[1.0], 1.0, 0.01).unwrap();
        assert_eq!(tr.samples(), 101);
        let expected = 0.99f64.powi(100);
        assert!((tr.states[(100, 0)] - expected).abs() < 1e-12);
        assert!((expected - 0.3660).abs() < 1e-4);
    }

    #[test]
    fn zero_state_stays_zero() {
        let tr = simulate(&benchmark::system(), &[0.0; 5], 1.0, 0.1).unwrap();
        assert!(tr.states.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn simulate_rejects_bad_arguments() {
        let sys = benchmark::system();
        assert!(simulate(&sys, &[0.1; 5], 1.0, 0.0).is_err());
        assert!(simulate(&sys, &[0.1; 5], 0.01, 0.1).is_err());
        assert!(simulate(&sys, &[-0.1, 0.1, 0.1, 0.1, 0.1], 1.0, 0.1).is_err());
        assert!(simulate(&sys, &[0.1; 4], 1.0, 0.1).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        // dx/dt = x^2 blows up in finite time; Euler with a coarse step overflows.
        let y = ComplexMatrix::from_columns(&[vec![2]]).unwrap();
        let sys = KineticSystem::new(y, DMatrix::from_element(1, 1, 1.0)).unwrap();
        match simulate(&sys, &[10.0], 100.0, 1.0) {
            Err(Error::Divergence { step }) => assert!(step > 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn r_max_values() {
        assert_eq!(r_max(9, 1).unwrap(), 511);
        assert_eq!(r_max(1, 1).unwrap(), 1);
        assert_eq!(r_max(6, 6).unwrap(), 1);
        assert_eq!(r_max(6, 5).unwrap(), 7);
        assert_eq!(r_max(100, 1).unwrap(), (1u128 << 100) - 1);
        assert_eq!(r_max(127, 1).unwrap(), u128::MAX >> 1);
        assert!(matches!(r_max(129, 1), Err(Error::Overflow(_))));
        assert!(r_max(3, 0).is_err());
        assert!(r_max(3, 4).is_err());
    }

    #[test]
    fn info_ratio_values() {
        assert!((info_ratio(56, 9).unwrap() - 56.0 / 511.0).abs() < 1e-15);
        assert!((info_ratio(56, 9).unwrap() - 0.1096).abs() < 1e-4);
        assert_eq!(info_ratio(511, 9).unwrap(), 1.0);
        assert!((info_ratio(1, 6).unwrap() - 0.01587).abs() < 1e-5);
        assert!(info_ratio(0, 6).is_err());
    }
}
