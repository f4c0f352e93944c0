//! Dense (maximal-support) realizations of exact and uncertain kinetic systems.

use std::collections::BTreeSet;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};

use crate::conic::{self, ConicProgram, SocConstraint, Status};
use crate::kinetic::{ComplexMatrix, Edge, KineticSystem, KirchhoffMatrix, Realization};
use crate::{Error, Result, SUPPORT_EPS};

/// Upper bound on every rate coefficient; keeps the programs bounded when
/// `Y` has a nontrivial kernel.
pub const RATE_UPPER: f64 = 1e4;

/// Admissible coefficient matrices around a nominal estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum RegionKind {
    Exact,
    /// `‖vec(M) - vec(M̄)‖₂ ≤ rho`.
    Spherical { rho: f64 },
    /// `‖W (vec(M)_free - vec(M̄)_free)‖₂ ≤ level` with all other
    /// coordinates pinned to the nominal. `free` holds row-major indices into
    /// `vec(M)`; `transform` is square over them.
    Ellipsoidal {
        free: Vec<usize>,
        transform: DMatrix<f64>,
        level: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyRegion {
    nominal: DMatrix<f64>,
    kind: RegionKind,
}

/// Row-major position of `(i, j)` in `vec(M)` for `m` columns.
pub fn vec_index(i: usize, j: usize, m: usize) -> usize {
    i * m + j
}

impl UncertaintyRegion {
    pub fn exact(nominal: DMatrix<f64>) -> Self {
        UncertaintyRegion {
            nominal,
            kind: RegionKind::Exact,
        }
    }

    pub fn spherical(nominal: DMatrix<f64>, rho: f64) -> Result<Self> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::Invalid(format!("sphere radius must be finite and >= 0, got {rho}")));
        }
        Ok(UncertaintyRegion {
            nominal,
            kind: RegionKind::Spherical { rho },
        })
    }

    pub fn ellipsoidal(nominal: DMatrix<f64>, free: Vec<usize>, transform: DMatrix<f64>, level: f64) -> Result<Self> {
        let len = nominal.len();
        let k = free.len();
        if transform.shape() != (k, k) {
            return Err(Error::Dimension(format!(
                "ellipsoid transform is {:?}, expected {k}x{k}",
                transform.shape()
            )));
        }
        let mut seen = BTreeSet::new();
        if free.iter().any(|&f| f >= len || !seen.insert(f)) {
            return Err(Error::Invalid("ellipsoid coordinates out of range or repeated".into()));
        }
        if !(level >= 0.0) || !level.is_finite() {
            return Err(Error::Invalid(format!("ellipsoid level must be finite and >= 0, got {level}")));
        }
        if k > 0 {
            let sv = transform.clone().singular_values();
            if !(sv.min() > 1e-12 * sv.max()) {
                return Err(Error::Invalid("ellipsoid transform is not full rank".into()));
            }
        }
        Ok(UncertaintyRegion {
            nominal,
            kind: RegionKind::Ellipsoidal { free, transform, level },
        })
    }

    pub fn nominal(&self) -> &DMatrix<f64> {
        &self.nominal
    }

    pub fn kind(&self) -> &RegionKind {
        &self.kind
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.kind, RegionKind::Exact)
    }

    fn vec_of(&self, m: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(m.len(), m.transpose().iter().copied())
    }

    /// Membership test with slack `tol`.
    pub fn contains(&self, m: &DMatrix<f64>, tol: f64) -> bool {
        if m.shape() != self.nominal.shape() {
            return false;
        }
        let diff = self.vec_of(&(m - &self.nominal));
        match &self.kind {
            RegionKind::Exact => diff.amax() <= tol,
            RegionKind::Spherical { rho } => diff.norm() <= rho + tol,
            RegionKind::Ellipsoidal { free, transform, level } => {
                let fixed_ok = (0..diff.len())
                    .filter(|i| !free.contains(i))
                    .all(|i| diff[i].abs() <= tol);
                let sub = DVector::from_iterator(free.len(), free.iter().map(|&i| diff[i]));
                fixed_ok && (transform * sub).norm() <= level + tol
            }
        }
    }
}

/// Complexes, admissible coefficient region and forbidden reactions.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationProblem {
    pub complexes: ComplexMatrix,
    pub region: UncertaintyRegion,
    pub excluded: BTreeSet<Edge>,
}

impl RealizationProblem {
    pub fn new(complexes: ComplexMatrix, region: UncertaintyRegion, excluded: BTreeSet<Edge>) -> Result<Self> {
        let (n, m) = (complexes.species(), complexes.complexes());
        if region.nominal.shape() != (n, m) {
            return Err(Error::Dimension(format!(
                "nominal coefficient matrix is {:?}, expected {:?}",
                region.nominal.shape(),
                (n, m)
            )));
        }
        if let Some(e) = excluded.iter().find(|e| e.source >= m || e.target >= m || e.source == e.target) {
            return Err(Error::Invalid(format!("excluded edge {e} invalid for {m} complexes")));
        }
        Ok(RealizationProblem {
            complexes,
            region,
            excluded,
        })
    }

    /// The exact problem for a known kinetic system.
    pub fn exact(system: &KineticSystem) -> Self {
        RealizationProblem {
            complexes: system.complexes().clone(),
            region: UncertaintyRegion::exact(system.coefficients().clone()),
            excluded: BTreeSet::new(),
        }
    }

    pub fn complexes_count(&self) -> usize {
        self.complexes.complexes()
    }

    pub fn with_exclusions(&self, extra: &BTreeSet<Edge>) -> Self {
        let mut p = self.clone();
        p.excluded.extend(extra.iter().copied());
        p
    }

    /// Candidate edges: all ordered pairs not excluded.
    pub fn candidates(&self) -> Vec<Edge> {
        Edge::all(self.complexes_count())
            .into_iter()
            .filter(|e| !self.excluded.contains(e))
            .collect()
    }
}

/// Position of an edge among the rate variables.
pub fn rate_index(e: Edge, m: usize) -> usize {
    e.source * (m - 1) + if e.target < e.source { e.target } else { e.target - 1 }
}

/// Builds the conic program. Variables are the `m(m-1)` off-diagonal rates in
/// [`Edge::all`] order followed, for non-exact regions, by `vec(M)`. The
/// objective sums the rates of the `selector` edges.
pub fn build_program(problem: &RealizationProblem, selector: &BTreeSet<Edge>) -> Result<ConicProgram> {
    let y = problem.complexes.matrix();
    let (n, m) = y.shape();
    let r = m * (m - 1);
    let exact = problem.region.is_exact();
    let dim = if exact { r } else { r + n * m };
    let mut p = ConicProgram::new(dim);

    for e in Edge::all(m) {
        let k = rate_index(e, m);
        let hi = if problem.excluded.contains(&e) { 0.0 } else { RATE_UPPER };
        p.set_bounds(k, 0.0, hi);
    }
    for e in selector {
        if e.source >= m || e.target >= m || e.source == e.target {
            return Err(Error::Invalid(format!("selector edge {e} invalid for {m} complexes")));
        }
        p.objective[rate_index(*e, m)] = 1.0;
    }

    // Column j of Y A only involves reactions leaving C_j:
    // [Y A]_ij = sum_t (Y_it - Y_ij) k_{j->t}.
    let nominal = problem.region.nominal();
    for i in 0..n {
        for j in 0..m {
            let mut coeffs: Vec<(usize, f64)> = (0..m)
                .filter(|&t| t != j)
                .map(|t| (rate_index(Edge::new(j, t), m), y[(i, t)] - y[(i, j)]))
                .filter(|&(_, c)| c != 0.0)
                .collect();
            if exact {
                p.add_equality(coeffs, nominal[(i, j)]);
            } else {
                coeffs.push((r + vec_index(i, j, m), -1.0));
                p.add_equality(coeffs, 0.0);
            }
        }
    }

    let nominal_vec = DVector::from_iterator(n * m, nominal.transpose().iter().copied());
    match problem.region.kind() {
        RegionKind::Exact => {}
        RegionKind::Spherical { rho } => p.add_soc(SocConstraint {
            indices: (r..r + n * m).collect(),
            center: nominal_vec,
            transform: DMatrix::identity(n * m, n * m),
            radius: *rho,
        }),
        RegionKind::Ellipsoidal { free, transform, level } => {
            for idx in 0..n * m {
                if !free.contains(&idx) {
                    p.set_bounds(r + idx, nominal_vec[idx], nominal_vec[idx]);
                }
            }
            if !free.is_empty() {
                p.add_soc(SocConstraint {
                    indices: free.iter().map(|&f| r + f).collect(),
                    center: DVector::from_iterator(free.len(), free.iter().map(|&f| nominal_vec[f])),
                    transform: transform.clone(),
                    radius: *level,
                });
            }
        }
    }
    Ok(p)
}

/// Counters from one dense-realization computation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DenseStats {
    pub iterations: usize,
    pub solves: usize,
}

struct Solver<'a> {
    problem: &'a RealizationProblem,
    tol: f64,
    solves: usize,
}

impl Solver<'_> {
    fn solve(&mut self, selector: &BTreeSet<Edge>) -> Result<Option<DVector<f64>>> {
        let program = build_program(self.problem, selector)?;
        self.solves += 1;
        let out = conic::solve(&program, self.tol)?;
        match out.status {
            Status::Optimal => Ok(out.solution),
            Status::Infeasible => Ok(None),
            Status::Unbounded => Err(Error::NumericFailure(
                "bounded realization program reported unbounded".into(),
            )),
            Status::NumericFailure => Err(Error::NumericFailure(
                out.stats.note.unwrap_or_else(|| "conic solver stalled".into()),
            )),
        }
    }
}

fn rate(v: &DVector<f64>, e: Edge, m: usize) -> f64 {
    v[rate_index(e, m)]
}

fn to_realization(problem: &RealizationProblem, v: &DVector<f64>) -> Result<Realization> {
    let m = problem.complexes_count();
    let n = problem.complexes.species();
    let rates = Edge::all(m).into_iter().map(|e| (e, rate(v, e, m).max(0.0)));
    let kirchhoff = KirchhoffMatrix::from_rates(m, rates)?;
    let coefficients = if problem.region.is_exact() {
        problem.region.nominal().clone()
    } else {
        let r = m * (m - 1);
        DMatrix::from_fn(n, m, |i, j| v[r + vec_index(i, j, m)])
    };
    Ok(Realization::new(kirchhoff, coefficients))
}

/// The realization with maximal edge support; every feasible realization of
/// the problem uses a subset of its edges.
pub fn dense_realization(problem: &RealizationProblem) -> Result<Realization> {
    dense_realization_with_stats(problem, conic::DEFAULT_TOL).map(|(r, _)| r)
}

pub fn dense_realization_with_stats(problem: &RealizationProblem, tol: f64) -> Result<(Realization, DenseStats)> {
    let m = problem.complexes_count();
    let candidates = problem.candidates();
    let mut solver = Solver { problem, tol, solves: 0 };
    let mut found: BTreeSet<Edge> = BTreeSet::new();
    let mut pool: Vec<DVector<f64>> = Vec::new();
    let mut iterations = 0;
    let mut any_point: Option<DVector<f64>> = None;

    loop {
        let remaining: BTreeSet<Edge> = candidates.iter().copied().filter(|e| !found.contains(e)).collect();
        if remaining.is_empty() && any_point.is_some() {
            break;
        }
        iterations += 1;
        let Some(v) = solver.solve(&remaining)? else {
            if any_point.is_none() {
                return Err(Error::Infeasible("the dense realization program has no feasible point".into()));
            }
            // Only a marginally feasible program does this; keep what is known.
            warn!("feasible realization program reported infeasible on a later solve");
            break;
        };
        any_point.get_or_insert_with(|| v.clone());
        let mut added: BTreeSet<Edge> = remaining.iter().copied().filter(|&e| rate(&v, e, m) > SUPPORT_EPS).collect();
        let borderline: Vec<Edge> = remaining
            .iter()
            .copied()
            .filter(|&e| {
                let k = rate(&v, e, m);
                (SUPPORT_EPS / 10.0..=SUPPORT_EPS).contains(&k)
            })
            .collect();
        for e in borderline {
            if added.contains(&e) {
                continue;
            }
            let single = BTreeSet::from([e]);
            if let Some(w) = solver.solve(&single)? {
                if rate(&w, e, m) > SUPPORT_EPS {
                    added.extend(remaining.iter().copied().filter(|&f| rate(&w, f, m) > SUPPORT_EPS));
                    pool.push(w);
                }
            }
        }
        if added.is_empty() {
            break;
        }
        found.extend(added);
        pool.push(v);
    }

    let point = if found.is_empty() {
        any_point.expect("at least one feasible solve")
    } else {
        match solver.solve(&found)? {
            Some(v) if found.iter().all(|&e| rate(&v, e, m) > SUPPORT_EPS) => v,
            _ => {
                // Convex combination of feasible points carries the union of their supports.
                debug!("final dense solve lost support; averaging {} pooled points", pool.len());
                let sum = pool.iter().fold(DVector::zeros(pool[0].len()), |acc, v| acc + v);
                sum / pool.len() as f64
            }
        }
    };
    let mut realization = to_realization(problem, &point)?;
    // Averaging can dilute a small but genuine rate below the threshold; the
    // support is the set of edges shown positive by some feasible point.
    if !found.is_empty() {
        realization.support = found;
    }
    Ok((
        realization,
        DenseStats {
            iterations,
            solves: solver.solves,
        },
    ))
}

/// Dense realization with additional forbidden reactions.
pub fn constrained_dense(problem: &RealizationProblem, extra_exclusions: &BTreeSet<Edge>) -> Result<Realization> {
    dense_realization(&problem.with_exclusions(extra_exclusions))
}

/// Dense realization using only reactions from `allowed`; `Ok(None)` when
/// no realization exists.
pub fn dense_within(problem: &RealizationProblem, allowed: &BTreeSet<Edge>, tol: f64) -> Result<Option<(Realization, DenseStats)>> {
    let outside: BTreeSet<Edge> = Edge::all(problem.complexes_count())
        .into_iter()
        .filter(|e| !allowed.contains(e))
        .collect();
    match dense_realization_with_stats(&problem.with_exclusions(&outside), tol) {
        Ok(r) => Ok(Some(r)),
        Err(Error::Infeasible(_)) => Ok(None),
        Err(e) => Err(e),
    }
}
