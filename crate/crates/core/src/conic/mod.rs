//! Linear and second-order-cone programs in the form used by the
//! realization computations, with a self-contained interior-point backend.

mod dump;
mod ipm;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub use dump::{dump_program, load_program, ProgramFile};

pub const DEFAULT_TOL: f64 = 1e-8;

const MAX_ITER: usize = 100;

/// `‖transform (v[indices] - center)‖₂ ≤ radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocConstraint {
    pub indices: Vec<usize>,
    pub center: DVector<f64>,
    pub transform: DMatrix<f64>,
    pub radius: f64,
}

/// `maximize objectiveᵀ v` subject to sparse equality rows, per-coordinate
/// bounds and second-order-cone constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub dim: usize,
    pub objective: DVector<f64>,
    pub equalities: Vec<(Vec<(usize, f64)>, f64)>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cones: Vec<SocConstraint>,
}

impl ConicProgram {
    /// Free variables, zero objective, no constraints.
    pub fn new(dim: usize) -> Self {
        ConicProgram {
            dim,
            objective: DVector::zeros(dim),
            equalities: Vec::new(),
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
            cones: Vec::new(),
        }
    }

    pub fn add_equality(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.equalities.push((coeffs, rhs));
    }

    pub fn set_bounds(&mut self, i: usize, lower: f64, upper: f64) {
        self.lower[i] = lower;
        self.upper[i] = upper;
    }

    pub fn add_soc(&mut self, cone: SocConstraint) {
        self.cones.push(cone);
    }

    pub fn eq_matrix(&self) -> (DMatrix<f64>, DVector<f64>) {
        let p = self.equalities.len();
        let mut a = DMatrix::zeros(p, self.dim);
        let mut b = DVector::zeros(p);
        for (r, (coeffs, rhs)) in self.equalities.iter().enumerate() {
            for &(j, v) in coeffs {
                a[(r, j)] += v;
            }
            b[r] = *rhs;
        }
        (a, b)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        if self.objective.len() != d || self.lower.len() != d || self.upper.len() != d {
            return Err(Error::Dimension("objective or bounds length differs from dimension".into()));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("objective has non-finite entries".into()));
        }
        for (coeffs, rhs) in &self.equalities {
            if !rhs.is_finite() || coeffs.iter().any(|&(j, v)| j >= d || !v.is_finite()) {
                return Err(Error::Invalid("equality row has bad index or value".into()));
            }
        }
        for i in 0..d {
            let (l, u) = (self.lower[i], self.upper[i]);
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::Invalid(format!("bad bounds [{l}, {u}] on variable {i}")));
            }
        }
        for (k, c) in self.cones.iter().enumerate() {
            let q = c.indices.len();
            if c.indices.iter().any(|&j| j >= d)
                || c.center.len() != q
                || c.transform.ncols() != q
                || c.transform.nrows() == 0
            {
                return Err(Error::Dimension(format!("cone {k} has inconsistent shape")));
            }
            if !(c.radius >= 0.0) || !c.radius.is_finite() {
                return Err(Error::Invalid(format!("cone {k} has radius {}", c.radius)));
            }
            if c.transform.iter().chain(c.center.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("cone {k} has non-finite data")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    NumericFailure,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Largest equality residual of the returned point.
    pub equality_residual: f64,
    /// Largest bound violation of the returned point.
    pub bound_violation: f64,
    /// Largest cone violation `‖W(v - c)‖ - r` of the returned point.
    pub cone_violation: f64,
    /// Upper bound on the maximum certified by the dual iterate.
    pub dual_bound: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub status: Status,
    pub solution: Option<DVector<f64>>,
    pub objective: Option<f64>,
    pub stats: SolveStats,
}

impl SolveOutcome {
    fn without_solution(status: Status, iterations: usize, note: impl Into<String>) -> Self {
        SolveOutcome {
            status,
            solution: None,
            objective: None,
            stats: SolveStats {
                iterations,
                note: Some(note.into()),
                ..SolveStats::default()
            },
        }
    }
}

/// `v = x0 + N w` parametrizes the affine hull of the equality constraints.
struct Elimination {
    x0: DVector<f64>,
    basis: DMatrix<f64>,
}

fn eliminate(a: &DMatrix<f64>, b: &DVector<f64>, d: usize, tol: f64) -> Option<Elimination> {
    let p = a.nrows();
    if p == 0 {
        return Some(Elimination {
            x0: DVector::zeros(d),
            basis: DMatrix::identity(d, d),
        });
    }
    // Pivoted QR of Aᵀ, padded with zero columns so that Q is square:
    // Aᵀ P = Q R, hence A x = b reads R₁ᵀ (Q₁ᵀ x) = (Pᵀ b)₁ on the rank-r block
    // and Q₂ spans the null space.
    let cols = p.max(d);
    let mut at = DMatrix::zeros(d, cols);
    at.columns_mut(0, p).copy_from(&a.transpose());
    let qr = at.col_piv_qr();
    let q = qr.q();
    let r = qr.r();
    let mut pb = DMatrix::zeros(1, cols);
    pb.columns_mut(0, p).copy_from(&b.transpose());
    qr.p().permute_columns(&mut pb);

    let diag_max = (0..d.min(cols)).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let cutoff = 1e-10 * diag_max.max(1e-300) * (cols as f64).sqrt();
    let rank = (0..d.min(cols)).take_while(|&i| r[(i, i)].abs() > cutoff).count();

    let mut w = DVector::zeros(rank);
    for i in 0..rank {
        let mut acc = pb[(0, i)];
        for j in 0..i {
            acc -= r[(j, i)] * w[j];
        }
        w[i] = acc / r[(i, i)];
    }
    let x0 = q.columns(0, rank) * w;
    let residual = (a * &x0 - b).amax();
    if residual > 10.0 * tol * (1.0 + b.amax()) {
        return None;
    }
    let basis = q.columns(rank, d - rank).into_owned();
    Some(Elimination { x0, basis })
}

/// Solves the program. Errors only on malformed input; solver outcomes,
/// including numeric failure, are reported through [`SolveOutcome::status`].
pub fn solve(program: &ConicProgram, tol: f64) -> Result<SolveOutcome> {
    program.validate()?;
    let d = program.dim;

    // Fixed variables and zero-radius cones become equalities.
    let (mut a, mut b) = program.eq_matrix();
    let mut extra: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut cones = Vec::new();
    for i in 0..d {
        if program.lower[i] == program.upper[i] {
            let mut row = DVector::zeros(d);
            row[i] = 1.0;
            extra.push((row, program.lower[i]));
        } else if program.lower[i] > program.upper[i] {
            return Ok(SolveOutcome::without_solution(
                Status::Infeasible,
                0,
                format!("empty bounds on variable {i}"),
            ));
        }
    }
    for c in &program.cones {
        if c.radius == 0.0 {
            for r in 0..c.transform.nrows() {
                let mut row = DVector::zeros(d);
                for (k, &j) in c.indices.iter().enumerate() {
                    row[j] += c.transform[(r, k)];
                }
                let rhs = c.transform.row(r).dot(&c.center.transpose());
                extra.push((row, rhs));
            }
        } else {
            cones.push(c);
        }
    }
    if !extra.is_empty() {
        let p = a.nrows();
        let mut a2 = DMatrix::zeros(p + extra.len(), d);
        a2.rows_mut(0, p).copy_from(&a);
        let mut b2 = DVector::zeros(p + extra.len());
        b2.rows_mut(0, p).copy_from(&b);
        for (k, (row, rhs)) in extra.iter().enumerate() {
            a2.set_row(p + k, &row.transpose());
            b2[p + k] = *rhs;
        }
        a = a2;
        b = b2;
    }

    let Some(elim) = eliminate(&a, &b, d, tol) else {
        return Ok(SolveOutcome::without_solution(
            Status::Infeasible,
            0,
            "equality constraints are inconsistent",
        ));
    };
    let k = elim.basis.ncols();
    let x0 = &elim.x0;
    let n = &elim.basis;
    let const_tol = 10.0 * tol * (1.0 + x0.amax());

    // Inequalities in the reduced variable w: G w + s = h, s in the cone.
    let mut lp_rows: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut push_lp = |g: DVector<f64>, h: f64| -> bool {
        let norm = g.norm();
        if norm <= 1e-12 {
            return h >= -const_tol;
        }
        lp_rows.push((g / norm, h / norm));
        true
    };
    for i in 0..d {
        if program.lower[i] == program.upper[i] {
            continue;
        }
        let ni = n.row(i).transpose();
        if program.lower[i].is_finite() && !push_lp(-&ni, x0[i] - program.lower[i]) {
            return Ok(SolveOutcome::without_solution(
                Status::Infeasible,
                0,
                format!("lower bound on variable {i} unreachable"),
            ));
        }
        if program.upper[i].is_finite() && !push_lp(ni.clone(), program.upper[i] - x0[i]) {
            return Ok(SolveOutcome::without_solution(
                Status::Infeasible,
                0,
                format!("upper bound on variable {i} unreachable"),
            ));
        }
    }
    let mut soc_blocks: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::new();
    for c in &cones {
        let q = c.transform.nrows();
        let mut sel = DMatrix::zeros(c.indices.len(), k);
        let mut off = DVector::zeros(c.indices.len());
        for (r, &j) in c.indices.iter().enumerate() {
            sel.set_row(r, &n.row(j));
            off[r] = x0[j] - c.center[r];
        }
        let wn = &c.transform * sel;
        let h1 = &c.transform * off;
        if wn.amax() <= 1e-12 {
            if h1.norm() > c.radius + const_tol {
                return Ok(SolveOutcome::without_solution(
                    Status::Infeasible,
                    0,
                    "cone constraint unreachable on the equality set",
                ));
            }
            continue;
        }
        let mut g = DMatrix::zeros(q + 1, k);
        g.rows_mut(1, q).copy_from(&(-wn));
        let mut h = DVector::zeros(q + 1);
        h[0] = c.radius;
        h.rows_mut(1, q).copy_from(&h1);
        let scale = (1..=q).map(|r| g.row(r).norm()).fold(0.0, f64::max);
        soc_blocks.push((g / scale, h / scale));
    }

    let c_red = -(n.transpose() * &program.objective);
    let c_scale = c_red.amax();
    let c_tilde = if c_scale <= 1e-14 * (1.0 + program.objective.amax()) {
        DVector::zeros(k)
    } else {
        c_red / c_scale
    };
    let objective_at = |v: &DVector<f64>| program.objective.dot(v);

    if k == 0 {
        return Ok(finish(program, x0.clone(), 0, None));
    }

    let lp = lp_rows.len();
    let socs: Vec<usize> = soc_blocks.iter().map(|(g, _)| g.nrows()).collect();
    let rows = lp + socs.iter().sum::<usize>();
    if rows == 0 {
        if c_tilde.amax() == 0.0 {
            return Ok(finish(program, x0.clone(), 0, None));
        }
        return Ok(SolveOutcome::without_solution(Status::Unbounded, 0, "no inequality bounds the objective"));
    }
    let mut g = DMatrix::zeros(rows, k);
    let mut h = DVector::zeros(rows);
    for (r, (gr, hr)) in lp_rows.iter().enumerate() {
        g.set_row(r, &gr.transpose());
        h[r] = *hr;
    }
    let mut off = lp;
    for (gb, hb) in &soc_blocks {
        g.rows_mut(off, gb.nrows()).copy_from(gb);
        h.rows_mut(off, hb.len()).copy_from(hb);
        off += gb.nrows();
    }

    let standard = ipm::Standard {
        g,
        h,
        c: c_tilde,
        cone: ipm::ConeSpec { lp, socs },
    };
    let res = ipm::hsde(&standard, tol, MAX_ITER);
    match res.status {
        ipm::IpmStatus::Optimal => {
            let w = &res.x / res.tau;
            let v = x0 + n * &w;
            let c_scale = if standard.c.amax() == 0.0 { 0.0 } else { c_scale };
            let dual = objective_at(x0) + c_scale * standard.h.dot(&res.z) / res.tau;
            Ok(finish(program, v, res.iterations, Some(dual)))
        }
        ipm::IpmStatus::Infeasible => Ok(SolveOutcome::without_solution(
            Status::Infeasible,
            res.iterations,
            "dual certificate of infeasibility",
        )),
        ipm::IpmStatus::Unbounded => Ok(SolveOutcome::without_solution(
            Status::Unbounded,
            res.iterations,
            "primal recession direction improves the objective",
        )),
        ipm::IpmStatus::Failure(why) => Ok(SolveOutcome::without_solution(Status::NumericFailure, res.iterations, why)),
    }
}

fn finish(program: &ConicProgram, v: DVector<f64>, iterations: usize, dual: Option<f64>) -> SolveOutcome {
    let (a, b) = program.eq_matrix();
    let equality_residual = if a.nrows() > 0 { (a * &v - b).amax() } else { 0.0 };
    let mut bound_violation: f64 = 0.0;
    for i in 0..program.dim {
        bound_violation = bound_violation
            .max(program.lower[i] - v[i])
            .max(v[i] - program.upper[i]);
    }
    let mut cone_violation: f64 = 0.0;
    for c in &program.cones {
        let sel = DVector::from_iterator(c.indices.len(), c.indices.iter().map(|&j| v[j]));
        cone_violation = cone_violation.max((&c.transform * (sel - &c.center)).norm() - c.radius);
    }
    let objective = program.objective.dot(&v);
    SolveOutcome {
        status: Status::Optimal,
        objective: Some(objective),
        solution: Some(v),
        stats: SolveStats {
            iterations,
            equality_residual,
            bound_violation: bound_violation.max(0.0),
            cone_violation: cone_violation.max(0.0),
            dual_bound: dual.or(Some(objective)),
            note: None,
        },
    }
}

/// Feasibility test by solving with a zero objective.
pub fn is_feasible(program: &ConicProgram) -> Result<bool> {
    let mut p = program.clone();
    p.objective = DVector::zeros(p.dim);
    let out = solve(&p, DEFAULT_TOL)?;
    match out.status {
        Status::Optimal => Ok(true),
        Status::Infeasible => Ok(false),
        Status::Unbounded => Ok(true),
        Status::NumericFailure => Err(Error::NumericFailure(
            out.stats.note.unwrap_or_else(|| "solver stalled".into()),
        )),
    }
}
