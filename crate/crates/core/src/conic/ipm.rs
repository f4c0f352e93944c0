//! Homogeneous self-dual embedding interior-point method for
//! `min cᵀx  s.t.  Gx + s = h,  s ∈ K`, with `K` a product of a nonnegative
//! orthant and second-order cones, using Nesterov-Todd scaling and
//! Mehrotra predictor-corrector steps.

use nalgebra::{Cholesky, DMatrix, DVector, LU};

pub(super) struct ConeSpec {
    pub lp: usize,
    pub socs: Vec<usize>,
}

impl ConeSpec {
    fn degree(&self) -> usize {
        self.lp + self.socs.len()
    }

    /// `(offset, size)` for every second-order cone block.
    fn soc_blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mut off = self.lp;
        self.socs.iter().map(move |&q| {
            let b = (off, q);
            off += q;
            b
        })
    }
}

pub(super) struct Standard {
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub c: DVector<f64>,
    pub cone: ConeSpec,
}

pub(super) enum IpmStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Failure(String),
}

pub(super) struct IpmResult {
    pub status: IpmStatus,
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub tau: f64,
    pub iterations: usize,
}

/// Unit element of the cone.
fn identity(cone: &ConeSpec, n: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    for i in 0..cone.lp {
        e[i] = 1.0;
    }
    for (off, _) in cone.soc_blocks() {
        e[off] = 1.0;
    }
    e
}

/// Jordan product `u ∘ v`.
fn jordan(cone: &ConeSpec, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(u.len());
    for i in 0..cone.lp {
        out[i] = u[i] * v[i];
    }
    for (off, q) in cone.soc_blocks() {
        let ub = u.rows(off, q);
        let vb = v.rows(off, q);
        out[off] = ub.dot(&vb);
        for j in 1..q {
            out[off + j] = ub[0] * vb[j] + vb[0] * ub[j];
        }
    }
    out
}

/// Solves `λ ∘ u = d` for `u`.
fn jordan_div(cone: &ConeSpec, lambda: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(d.len());
    for i in 0..cone.lp {
        out[i] = d[i] / lambda[i];
    }
    for (off, q) in cone.soc_blocks() {
        let l = lambda.rows(off, q);
        let db = d.rows(off, q);
        let l1d1 = l.rows(1, q - 1).dot(&db.rows(1, q - 1));
        let det = l[0] * l[0] - l.rows(1, q - 1).norm_squared();
        let u0 = (l[0] * db[0] - l1d1) / det;
        out[off] = u0;
        for j in 1..q {
            out[off + j] = (db[j] - u0 * l[j]) / l[0];
        }
    }
    out
}

/// `uᵀ J u` for a cone block.
fn soc_det(u: nalgebra::DVectorView<f64>) -> f64 {
    let q = u.len();
    (u[0] - u.rows(1, q - 1).norm()) * (u[0] + u.rows(1, q - 1).norm())
}

/// Nesterov-Todd scaling: symmetric `W` with `W z = W⁻¹ s = λ`.
struct Scaling {
    lp: Vec<f64>,
    soc_w: Vec<DMatrix<f64>>,
    soc_winv: Vec<DMatrix<f64>>,
    lambda: DVector<f64>,
}

impl Scaling {
    fn new(cone: &ConeSpec, s: &DVector<f64>, z: &DVector<f64>) -> Option<Self> {
        let n = s.len();
        let mut lambda = DVector::zeros(n);
        let mut lp = Vec::with_capacity(cone.lp);
        for i in 0..cone.lp {
            if !(s[i] > 0.0 && z[i] > 0.0) {
                return None;
            }
            lp.push((s[i] / z[i]).sqrt());
            lambda[i] = (s[i] * z[i]).sqrt();
        }
        let mut soc_w = Vec::new();
        let mut soc_winv = Vec::new();
        for (off, q) in cone.soc_blocks() {
            let sb = s.rows(off, q);
            let zb = z.rows(off, q);
            let sdet = soc_det(sb);
            let zdet = soc_det(zb);
            if !(sdet > 0.0 && zdet > 0.0 && sb[0] > 0.0 && zb[0] > 0.0) {
                return None;
            }
            let sn = sb / sdet.sqrt();
            let zn = zb / zdet.sqrt();
            let gamma = ((1.0 + sn.dot(&zn)) / 2.0).sqrt();
            let mut wbar = DVector::zeros(q);
            wbar[0] = (sn[0] + zn[0]) / (2.0 * gamma);
            for j in 1..q {
                wbar[j] = (sn[j] - zn[j]) / (2.0 * gamma);
            }
            let beta = (sdet / zdet).powf(0.25);
            // W = beta [[w0, w1ᵀ], [w1, I + w1 w1ᵀ / (1 + w0)]]; the inverse flips w1.
            let mut w = DMatrix::identity(q, q);
            let mut winv = DMatrix::identity(q, q);
            w[(0, 0)] = wbar[0];
            winv[(0, 0)] = wbar[0];
            for a in 1..q {
                w[(0, a)] = wbar[a];
                w[(a, 0)] = wbar[a];
                winv[(0, a)] = -wbar[a];
                winv[(a, 0)] = -wbar[a];
                for b in 1..q {
                    let t = wbar[a] * wbar[b] / (1.0 + wbar[0]);
                    w[(a, b)] += t;
                    winv[(a, b)] += t;
                }
            }
            w *= beta;
            winv /= beta;
            let lb = &w * zb;
            lambda.rows_mut(off, q).copy_from(&lb);
            soc_w.push(w);
            soc_winv.push(winv);
        }
        Some(Scaling {
            lp,
            soc_w,
            soc_winv,
            lambda,
        })
    }

    fn apply(&self, cone: &ConeSpec, v: &DVector<f64>, inverse: bool) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for i in 0..cone.lp {
            out[i] = if inverse { v[i] / self.lp[i] } else { v[i] * self.lp[i] };
        }
        for (b, (off, q)) in cone.soc_blocks().enumerate() {
            let m = if inverse { &self.soc_winv[b] } else { &self.soc_w[b] };
            out.rows_mut(off, q).copy_from(&(m * v.rows(off, q)));
        }
        out
    }

    /// `W² v` (inverse: `W⁻² v`).
    fn apply_sq(&self, cone: &ConeSpec, v: &DVector<f64>, inverse: bool) -> DVector<f64> {
        let once = self.apply(cone, v, inverse);
        self.apply(cone, &once, inverse)
    }

    /// `Gᵀ W⁻² G`.
    fn normal_matrix(&self, cone: &ConeSpec, g: &DMatrix<f64>) -> DMatrix<f64> {
        let k = g.ncols();
        let mut h = DMatrix::zeros(k, k);
        for i in 0..cone.lp {
            let d = 1.0 / (self.lp[i] * self.lp[i]);
            let row = g.row(i);
            h.ger(d, &row.transpose(), &row.transpose(), 1.0);
        }
        for (b, (off, q)) in cone.soc_blocks().enumerate() {
            let gb = g.rows(off, q);
            let winv_g = &self.soc_winv[b] * gb;
            h += winv_g.transpose() * &winv_g;
        }
        h
    }
}

enum Factor {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Lu(LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

/// Solver for `[[0, Gᵀ], [G, -W²]] [dx; dz] = [r1; r2]` via the normal
/// equations with iterative refinement.
struct Kkt<'a> {
    g: &'a DMatrix<f64>,
    cone: &'a ConeSpec,
    scaling: &'a Scaling,
    factor: Factor,
}

impl<'a> Kkt<'a> {
    fn new(g: &'a DMatrix<f64>, cone: &'a ConeSpec, scaling: &'a Scaling) -> Option<Self> {
        let h = scaling.normal_matrix(cone, g);
        let k = h.nrows();
        let diag_max = (0..k).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
        let mut reg = 1e-14 * diag_max;
        for _ in 0..6 {
            let mut hr = h.clone();
            for i in 0..k {
                hr[(i, i)] += reg;
            }
            if let Some(ch) = Cholesky::new(hr) {
                return Some(Kkt {
                    g,
                    cone,
                    scaling,
                    factor: Factor::Chol(ch),
                });
            }
            reg *= 100.0;
        }
        let lu = LU::new(h);
        if lu.is_invertible() {
            return Some(Kkt {
                g,
                cone,
                scaling,
                factor: Factor::Lu(lu),
            });
        }
        None
    }

    fn solve_normal(&self, r: &DVector<f64>) -> Option<DVector<f64>> {
        match &self.factor {
            Factor::Chol(c) => Some(c.solve(r)),
            Factor::Lu(l) => l.solve(r),
        }
    }

    fn solve_once(&self, r1: &DVector<f64>, r2: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let vinv_r2 = self.scaling.apply_sq(self.cone, r2, true);
        let rhs = r1 + self.g.transpose() * &vinv_r2;
        let dx = self.solve_normal(&rhs)?;
        let dz = self.scaling.apply_sq(self.cone, &(self.g * &dx - r2), true);
        Some((dx, dz))
    }

    fn solve(&self, r1: &DVector<f64>, r2: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let (mut dx, mut dz) = self.solve_once(r1, r2)?;
        let scale = 1.0 + r1.amax().max(r2.amax());
        for _ in 0..3 {
            let e1 = r1 - self.g.transpose() * &dz;
            let e2 = r2 - (self.g * &dx - self.scaling.apply_sq(self.cone, &dz, false));
            if e1.amax().max(e2.amax()) <= 1e-15 * scale {
                break;
            }
            let (cx, cz) = self.solve_once(&e1, &e2)?;
            dx += cx;
            dz += cz;
        }
        if dx.iter().chain(dz.iter()).any(|v| !v.is_finite()) {
            return None;
        }
        Some((dx, dz))
    }
}

/// Largest `α` with `u + α d` in the cone (infinite if unrestricted).
fn max_step(cone: &ConeSpec, u: &DVector<f64>, d: &DVector<f64>) -> f64 {
    let mut alpha = f64::INFINITY;
    for i in 0..cone.lp {
        if d[i] < 0.0 {
            alpha = alpha.min(-u[i] / d[i]);
        }
    }
    for (off, q) in cone.soc_blocks() {
        let ub = u.rows(off, q);
        let db = d.rows(off, q);
        let a = db[0] * db[0] - db.rows(1, q - 1).norm_squared();
        let b = ub[0] * db[0] - ub.rows(1, q - 1).dot(&db.rows(1, q - 1));
        let c = soc_det(ub).max(0.0);
        let disc = b * b - a * c;
        let root = if a < 0.0 {
            if b > 0.0 {
                (b + disc.sqrt()) / (-a)
            } else {
                c / (-b + disc.sqrt())
            }
        } else if b < 0.0 && disc >= 0.0 {
            c / (-b + disc.sqrt())
        } else {
            f64::INFINITY
        };
        alpha = alpha.min(root);
    }
    alpha
}

fn strictly_interior(cone: &ConeSpec, u: &DVector<f64>) -> bool {
    if (0..cone.lp).any(|i| !(u[i] > 0.0)) {
        return false;
    }
    cone.soc_blocks().all(|(off, q)| {
        let head = u[off];
        let tail = u.rows(off + 1, q - 1).norm();
        head > 0.0 && head - tail > 1e-14 * head && soc_det(u.rows(off, q)) > 0.0
    })
}

fn shift_into_cone(cone: &ConeSpec, u: &mut DVector<f64>) {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..cone.lp {
        worst = worst.max(-u[i]);
    }
    for (off, q) in cone.soc_blocks() {
        worst = worst.max(u.rows(off + 1, q - 1).norm() - u[off]);
    }
    if worst >= 0.0 {
        *u += identity(cone, u.len()) * (1.0 + worst);
    }
}

/// A stalled solve is accepted when its best iterate meets this multiple of
/// the requested tolerance.
const REDUCED_FACTOR: f64 = 1e3;
/// Iterations without a new best merit, once that merit is acceptable,
/// before the solve stops.
const STALL_ITERS: usize = 8;

pub(super) fn hsde(p: &Standard, tol: f64, max_iter: usize) -> IpmResult {
    let (g, h, c, cone) = (&p.g, &p.h, &p.c, &p.cone);
    let (n, k) = g.shape();
    let degree = cone.degree() as f64;
    let e = identity(cone, n);
    // Best iterate so far as (merit, x, z, tau). When progress stalls near
    // the optimum, rounding can push the residuals back up; a stalled run
    // whose best iterate meets the reduced tolerance is reported optimal.
    let mut best: Option<(f64, DVector<f64>, DVector<f64>, f64)> = None;
    let reduced_tol = REDUCED_FACTOR * tol;
    let h_norm = h.amax();
    let c_norm = c.amax();
    // A failing run is reported infeasible when its last iterate is an
    // approximate certificate at the reduced tolerance, and optimal when its
    // best iterate meets that tolerance.
    let fail = |why: &str, x: DVector<f64>, z: DVector<f64>, tau: f64, it: usize, best: Option<(f64, DVector<f64>, DVector<f64>, f64)>| {
        let hz = h.dot(&z);
        let certificate = hz < 0.0 && (g.transpose() * &z).amax() / (-hz) <= reduced_tol * (1.0 + c_norm);
        match best {
            _ if certificate => IpmResult {
                status: IpmStatus::Infeasible,
                x,
                z,
                tau,
                iterations: it,
            },
            Some((merit, bx, bz, btau)) if merit <= reduced_tol => IpmResult {
                status: IpmStatus::Optimal,
                x: bx,
                z: bz,
                tau: btau,
                iterations: it,
            },
            _ => IpmResult {
                status: IpmStatus::Failure(why.to_string()),
                x,
                z,
                tau,
                iterations: it,
            },
        }
    };
    let mut since_best = 0;

    // Initial point from two least-squares problems with unit scaling.
    let unit = Scaling {
        lp: vec![1.0; cone.lp],
        soc_w: cone.socs.iter().map(|&q| DMatrix::identity(q, q)).collect(),
        soc_winv: cone.socs.iter().map(|&q| DMatrix::identity(q, q)).collect(),
        lambda: e.clone(),
    };
    let Some(kkt0) = Kkt::new(g, cone, &unit) else {
        return fail("singular initial system", DVector::zeros(k), DVector::zeros(n), 1.0, 0, None);
    };
    let Some((mut x, neg_s)) = kkt0.solve(&DVector::zeros(k), h) else {
        return fail("singular initial system", DVector::zeros(k), DVector::zeros(n), 1.0, 0, None);
    };
    let mut s = -neg_s;
    let Some((_, mut z)) = kkt0.solve(&(-c), &DVector::zeros(n)) else {
        return fail("singular initial system", x, DVector::zeros(n), 1.0, 0, None);
    };
    shift_into_cone(cone, &mut s);
    shift_into_cone(cone, &mut z);
    let mut tau = 1.0;
    let mut kappa = 1.0;

    for iter in 0..=max_iter {
        let rx = g.transpose() * &z + c * tau;
        let rz = &s + g * &x - h * tau;
        let cx = c.dot(&x);
        let hz = h.dot(&z);
        let rt = kappa + cx + hz;
        let mu = (s.dot(&z) + tau * kappa) / (degree + 1.0);

        // Row-wise relative residual, so rows with large bounds cannot hide
        // the error of rows with small ones.
        let gx = g * &x;
        let pres = (0..n)
            .map(|i| rz[i].abs() / (tau + gx[i].abs() + (h[i] * tau).abs()))
            .fold(0.0, f64::max);
        let dres = rx.amax() / tau / (1.0 + c_norm);
        let pcost = cx / tau;
        let gap = s.dot(&z) / (tau * tau);
        if pres <= tol && dres <= tol && gap <= tol * pcost.abs().max(1.0) {
            return IpmResult {
                status: IpmStatus::Optimal,
                x,
                z,
                tau,
                iterations: iter,
            };
        }
        let merit = pres.max(dres).max(gap / pcost.abs().max(1.0));
        if merit.is_finite() && best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, x.clone(), z.clone(), tau));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= STALL_ITERS && best.as_ref().is_some_and(|b| b.0 <= reduced_tol) {
                return fail("no progress", x, z, tau, iter, best);
            }
        }
        if hz < 0.0 && tau < kappa {
            let gz = (g.transpose() * &z).amax();
            if gz / (-hz) <= tol * (1.0 + c_norm) {
                return IpmResult {
                    status: IpmStatus::Infeasible,
                    x,
                    z,
                    tau,
                    iterations: iter,
                };
            }
        }
        if cx < 0.0 && tau < kappa {
            let gxs = (g * &x + &s).amax();
            if gxs / (-cx) <= tol * (1.0 + h_norm) {
                return IpmResult {
                    status: IpmStatus::Unbounded,
                    x,
                    z,
                    tau,
                    iterations: iter,
                };
            }
        }
        if iter == max_iter {
            break;
        }
        if !mu.is_finite() || mu <= 0.0 {
            return fail("complementarity lost", x, z, tau, iter, best);
        }

        let Some(scaling) = Scaling::new(cone, &s, &z) else {
            return fail("iterate left the cone", x, z, tau, iter, best);
        };
        let Some(kkt) = Kkt::new(g, cone, &scaling) else {
            return fail("singular Newton system", x, z, tau, iter, best);
        };
        let lambda = &scaling.lambda;
        let Some((x2, z2)) = kkt.solve(&(-c), h) else {
            return fail("singular Newton system", x, z, tau, iter, best);
        };
        let denom = c.dot(&x2) + h.dot(&z2) - kappa / tau;

        let direction = |ds_target: &DVector<f64>, dk_target: f64, factor: f64| {
            let w_div = scaling.apply(cone, &jordan_div(cone, lambda, ds_target), false);
            let r1 = -&rx * factor;
            let r2 = -&rz * factor + &w_div;
            let rhs_t = -rt * factor + dk_target / tau;
            let (x1, z1) = kkt.solve(&r1, &r2)?;
            let dtau = (rhs_t - c.dot(&x1) - h.dot(&z1)) / denom;
            let dx = x1 + &x2 * dtau;
            let dz = z1 + &z2 * dtau;
            let ds = -w_div - scaling.apply_sq(cone, &dz, false);
            let dkappa = -(dk_target + kappa * dtau) / tau;
            Some((dx, dz, ds, dtau, dkappa))
        };
        let step_to_boundary = |dz: &DVector<f64>, ds: &DVector<f64>, dtau: f64, dkappa: f64| {
            let mut a = max_step(cone, &s, ds).min(max_step(cone, &z, dz));
            if dtau < 0.0 {
                a = a.min(-tau / dtau);
            }
            if dkappa < 0.0 {
                a = a.min(-kappa / dkappa);
            }
            a
        };

        // Predictor.
        let ds_aff = jordan(cone, lambda, lambda);
        let Some((_, dz_a, ds_a, dtau_a, dkappa_a)) = direction(&ds_aff, tau * kappa, 1.0) else {
            return fail("singular Newton system", x, z, tau, iter, best);
        };
        let alpha_aff = step_to_boundary(&dz_a, &ds_a, dtau_a, dkappa_a).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        // Corrector.
        let corr = jordan(
            cone,
            &scaling.apply(cone, &ds_a, true),
            &scaling.apply(cone, &dz_a, false),
        );
        let ds_comb = ds_aff + corr - &e * (sigma * mu);
        let dk_comb = tau * kappa + dkappa_a * dtau_a - sigma * mu;
        let Some((dx, dz, ds, dtau, dkappa)) = direction(&ds_comb, dk_comb, 1.0 - sigma) else {
            return fail("singular Newton system", x, z, tau, iter, best);
        };
        let mut alpha = (0.99 * step_to_boundary(&dz, &ds, dtau, dkappa)).min(1.0);
        // Near the boundary the ratio test can overshoot by rounding; back off
        // until both iterates are strictly interior.
        let (s_next, z_next) = loop {
            if !(alpha > 1e-12) {
                return fail("step length collapsed", x, z, tau, iter, best);
            }
            let s_next = &s + &ds * alpha;
            let z_next = &z + &dz * alpha;
            if strictly_interior(cone, &s_next) && strictly_interior(cone, &z_next) {
                break (s_next, z_next);
            }
            alpha *= 0.8;
        };

        x += &dx * alpha;
        z = z_next;
        s = s_next;
        tau += dtau * alpha;
        kappa += dkappa * alpha;

        // Renormalize the embedding to keep magnitudes in range.
        let scale = tau.max(kappa);
        if scale > 1e6 || scale < 1e-6 {
            let f = 1.0 / scale;
            x *= f;
            z *= f;
            s *= f;
            tau *= f;
            kappa *= f;
        }
    }
    fail("iteration limit reached", x, z, tau, max_iter, best)
}
