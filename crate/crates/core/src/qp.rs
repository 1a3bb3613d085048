//! Dense convex QP solver for the simplex/box subproblems.
//!
//! Problems are
//!
//! ```text
//!     minimize    1/2 x' P x + q' x
//!     subject to  A_eq x  = b_eq
//!                 A_in x <= b_in
//! ```
//!
//! with P symmetric PSD. The method is operator splitting (ADMM) on the
//! stacked constraint system with a cached LU factorization of the KKT
//! matrix, followed by an active-set polish step that refines the iterate to
//! the requested KKT tolerance. Consecutive solves that share P and the
//! constraint matrices reuse the factorization, so a caller that only moves
//! the linear term pays one factorization for a whole outer loop.

use std::path::Path;

use nalgebra::linalg::LU;
use nalgebra::{DMatrix, DVector, Dyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Canonical convex QP with equality, box, and general linear inequality
/// constraints (boxes are expressed as rows of `a_in`).
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
}

impl QpProblem {
    pub fn new(
        p: DMatrix<f64>,
        q: DVector<f64>,
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
        a_in: DMatrix<f64>,
        b_in: DVector<f64>,
    ) -> Result<Self> {
        let n = q.len();
        if p.nrows() != n || p.ncols() != n {
            return Err(Error::Dim { what: "P", expected: n, got: p.nrows() });
        }
        if a_eq.ncols() != n && a_eq.nrows() > 0 {
            return Err(Error::Dim { what: "A_eq", expected: n, got: a_eq.ncols() });
        }
        if a_eq.nrows() != b_eq.len() {
            return Err(Error::Dim { what: "b_eq", expected: a_eq.nrows(), got: b_eq.len() });
        }
        if a_in.ncols() != n && a_in.nrows() > 0 {
            return Err(Error::Dim { what: "A_in", expected: n, got: a_in.ncols() });
        }
        if a_in.nrows() != b_in.len() {
            return Err(Error::Dim { what: "b_in", expected: a_in.nrows(), got: b_in.len() });
        }
        let defect = (&p - p.transpose()).amax();
        if defect > 1e-10 * p.amax().max(1.0) {
            return Err(Error::Asymmetric { defect, tol: 1e-10 * p.amax().max(1.0) });
        }
        #[cfg(debug_assertions)]
        {
            let eig = p.clone().symmetric_eigen().eigenvalues;
            let max_eig = eig.amax().max(1e-300);
            debug_assert!(
                eig.min() >= -1e-10 * max_eig,
                "P is not PSD: min eigenvalue {} vs max {}",
                eig.min(),
                max_eig
            );
        }
        Ok(Self { p, q, a_eq, b_eq, a_in, b_in })
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * (x.transpose() * &self.p * x)[(0, 0)] + self.q.dot(x)
    }
}

/// Write a problem to a text file for external cross-checking.
pub fn dump_problem(problem: &QpProblem, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let mat = |out: &mut String, name: &str, m: &DMatrix<f64>| {
        out.push_str(&format!("{name} {}x{}\n", m.nrows(), m.ncols()));
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    };
    let vec = |out: &mut String, name: &str, v: &DVector<f64>| {
        out.push_str(&format!("{name} {}\n", v.len()));
        let row: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    };
    mat(&mut out, "P", &problem.p);
    vec(&mut out, "q", &problem.q);
    mat(&mut out, "A_eq", &problem.a_eq);
    vec(&mut out, "b_eq", &problem.b_eq);
    mat(&mut out, "A_in", &problem.a_in);
    vec(&mut out, "b_in", &problem.b_in);
    std::fs::write(path, out).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

/// Primal infeasibility, dual infeasibility, complementarity gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub comp: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.comp)
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub obj: f64,
    pub kkt_residuals: KktResiduals,
    pub iterations: usize,
    pub status: QpStatus,
    /// Multipliers of the equality constraints.
    pub y_eq: DVector<f64>,
    /// Multipliers of the inequality constraints, nonnegative at optimality.
    pub z_in: DVector<f64>,
}

/// Independent KKT residual check, implemented apart from the solver loop.
///
/// Dual feasibility violations (negative inequality multipliers) are folded
/// into the dual residual.
pub fn kkt_residuals(
    problem: &QpProblem,
    x: &DVector<f64>,
    y_eq: &DVector<f64>,
    z_in: &DVector<f64>,
) -> KktResiduals {
    let eq_resid = if problem.a_eq.nrows() > 0 {
        (&problem.a_eq * x - &problem.b_eq).amax()
    } else {
        0.0
    };
    let slack = &problem.a_in * x - &problem.b_in;
    let in_resid = slack.iter().fold(0.0f64, |acc, s| acc.max(*s));
    let primal = eq_resid.max(in_resid);

    let mut stat = &problem.p * x + &problem.q;
    if problem.a_eq.nrows() > 0 {
        stat += problem.a_eq.transpose() * y_eq;
    }
    if problem.a_in.nrows() > 0 {
        stat += problem.a_in.transpose() * z_in;
    }
    let neg_z = z_in.iter().fold(0.0f64, |acc, z| acc.max(-*z));
    let dual = stat.amax().max(neg_z);

    let comp = z_in.dot(&slack).abs();
    KktResiduals { primal, dual, comp }
}

#[derive(Debug, Clone)]
pub struct QpSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Keep primal/dual iterates from the previous solve as the start.
    pub warm_start: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 20_000, warm_start: false }
    }
}

const ADMM_SIGMA: f64 = 1e-6;
const ADMM_ALPHA: f64 = 1.6;
const RHO_EQ_FACTOR: f64 = 1e3;
const CHECK_INTERVAL: usize = 25;
const RUIZ_ITERS: usize = 10;
const POLISH_DELTA: f64 = 1e-11;
const INFEAS_TOL: f64 = 1e-9;

struct Scaling {
    d: DVector<f64>,
    e: DVector<f64>,
    cost: f64,
}

struct Factorization {
    /// Inputs the factorization depends on.
    p: DMatrix<f64>,
    a_eq: DMatrix<f64>,
    a_in: DMatrix<f64>,
    rho_base: f64,

    scaling: Scaling,
    a_scaled: DMatrix<f64>,
    rho: DVector<f64>,
    lu: LU<f64, Dyn, Dyn>,
}

/// Reusable solver. One instance is single-threaded; distinct instances may
/// run concurrently.
#[derive(Default)]
pub struct QpSolver {
    factorization: Option<Factorization>,
    /// Unscaled (x, y) from the previous solve, used for warm starts.
    warm: Option<(DVector<f64>, DVector<f64>)>,
}

impl QpSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(&mut self, problem: &QpProblem, settings: &QpSettings) -> Result<QpSolution> {
        let n = problem.n();
        let me = problem.a_eq.nrows();
        let mi = problem.a_in.nrows();
        let m = me + mi;
        if !(settings.tol > 0.0) {
            return Err(Error::InvalidArg("QP tolerance must be > 0".into()));
        }
        if settings.max_iter == 0 {
            return Err(Error::InvalidArg("QP max_iter must be positive".into()));
        }

        // constraint stack: equality rows first, then inequalities
        let mut a = DMatrix::zeros(m, n);
        a.rows_mut(0, me).copy_from(&problem.a_eq);
        a.rows_mut(me, mi).copy_from(&problem.a_in);
        let mut lower = DVector::from_element(m, f64::NEG_INFINITY);
        let mut upper = DVector::zeros(m);
        for i in 0..me {
            lower[i] = problem.b_eq[i];
            upper[i] = problem.b_eq[i];
        }
        for i in 0..mi {
            upper[me + i] = problem.b_in[i];
        }

        self.ensure_factorization(problem, &a, None)?;

        // scaled iterates
        let (mut xs, mut ys) = match (&self.warm, settings.warm_start) {
            (Some((wx, wy)), true) if wx.len() == n && wy.len() == m => {
                let fac = self.factorization.as_ref().unwrap();
                let xs = DVector::from_fn(n, |i, _| wx[i] / fac.scaling.d[i]);
                let ys = DVector::from_fn(m, |i, _| {
                    wy[i] * fac.scaling.cost / fac.scaling.e[i]
                });
                (xs, ys)
            }
            _ => (DVector::zeros(n), DVector::zeros(m)),
        };
        let mut zs = {
            let fac = self.factorization.as_ref().unwrap();
            let az = &fac.a_scaled * &xs;
            DVector::from_fn(m, |i, _| {
                let ls = fac.scaling.e[i] * lower[i];
                let us = fac.scaling.e[i] * upper[i];
                az[i].clamp(ls, us)
            })
        };

        let mut y_prev_window = ys.clone();
        let mut best: Option<(QpSolution, f64)> = None;
        let mut iterations = 0;

        while iterations < settings.max_iter {
            {
                let fac = self.factorization.as_ref().unwrap();
                let q_scaled = DVector::from_fn(n, |i, _| {
                    fac.scaling.cost * fac.scaling.d[i] * problem.q[i]
                });
                for _ in 0..CHECK_INTERVAL {
                    if iterations >= settings.max_iter {
                        break;
                    }
                    let mut rhs = DVector::zeros(n + m);
                    for i in 0..n {
                        rhs[i] = ADMM_SIGMA * xs[i] - q_scaled[i];
                    }
                    for i in 0..m {
                        rhs[n + i] = zs[i] - ys[i] / fac.rho[i];
                    }
                    let sol = fac
                        .lu
                        .solve(&rhs)
                        .ok_or_else(|| Error::QpFailure("singular KKT system".into()))?;
                    let xt = sol.rows(0, n).into_owned();
                    let nu = sol.rows(n, m).into_owned();
                    let zt = DVector::from_fn(m, |i, _| zs[i] + (nu[i] - ys[i]) / fac.rho[i]);

                    let x_new = DVector::from_fn(n, |i, _| {
                        ADMM_ALPHA * xt[i] + (1.0 - ADMM_ALPHA) * xs[i]
                    });
                    let mut z_new = DVector::zeros(m);
                    let mut y_new = DVector::zeros(m);
                    for i in 0..m {
                        let relaxed = ADMM_ALPHA * zt[i] + (1.0 - ADMM_ALPHA) * zs[i];
                        let tmp = relaxed + ys[i] / fac.rho[i];
                        let ls = fac.scaling.e[i] * lower[i];
                        let us = fac.scaling.e[i] * upper[i];
                        z_new[i] = tmp.clamp(ls, us);
                        y_new[i] = fac.rho[i] * (tmp - z_new[i]);
                    }
                    xs = x_new;
                    zs = z_new;
                    ys = y_new;
                    iterations += 1;
                }
            }

            // unscale and evaluate in the original problem space
            let (x, y, z) = self.unscale(&xs, &ys, &zs);
            let (y_eq, z_in) = split_duals(&y, me);
            let last_window = iterations + CHECK_INTERVAL >= settings.max_iter;
            let candidate =
                self.finish(problem, &x, &y_eq, &z_in, iterations, settings.tol, last_window)?;
            let score = candidate.kkt_residuals.max();
            if candidate.status == QpStatus::Optimal {
                self.warm = Some((candidate.x.clone(), y));
                return Ok(candidate);
            }
            if best.as_ref().map_or(true, |(_, s)| score < *s) {
                best = Some((candidate, score));
            }

            // primal infeasibility certificate from the dual-variable drift
            let delta_y = &y - &y_prev_window;
            y_prev_window = y.clone();
            if infeasibility_certificate(problem, &a, &delta_y, me) {
                let (mut sol, _) = best.unwrap();
                sol.status = QpStatus::Infeasible;
                return Ok(sol);
            }

            self.adapt_rho(problem, &a, &x, &y, &z)?;
        }

        let (mut sol, _) = best.expect("at least one candidate evaluated");
        sol.status = QpStatus::MaxIter;
        sol.iterations = iterations;
        self.warm = None;
        Ok(sol)
    }

    fn unscale(
        &self,
        xs: &DVector<f64>,
        ys: &DVector<f64>,
        zs: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let fac = self.factorization.as_ref().unwrap();
        let n = xs.len();
        let m = ys.len();
        let x = DVector::from_fn(n, |i, _| fac.scaling.d[i] * xs[i]);
        let y = DVector::from_fn(m, |i, _| fac.scaling.e[i] * ys[i] / fac.scaling.cost);
        let z = DVector::from_fn(m, |i, _| zs[i] / fac.scaling.e[i]);
        (x, y, z)
    }

    /// Polish the current iterate and package a solution candidate.
    fn finish(
        &self,
        problem: &QpProblem,
        x: &DVector<f64>,
        y_eq: &DVector<f64>,
        z_in: &DVector<f64>,
        iterations: usize,
        tol: f64,
        force_polish: bool,
    ) -> Result<QpSolution> {
        let z_clamped = DVector::from_fn(z_in.len(), |i, _| z_in[i].max(0.0));
        let raw = kkt_residuals(problem, x, y_eq, &z_clamped);
        // the active set is only trustworthy once ADMM has made progress
        if raw.max() <= 1e-4 || force_polish {
            if let Some((px, py_eq, pz_in)) = polish(problem, x, z_in) {
                let kkt = kkt_residuals(problem, &px, &py_eq, &pz_in);
                if kkt.max() <= tol {
                    return Ok(QpSolution {
                        obj: problem.objective(&px),
                        x: px,
                        kkt_residuals: kkt,
                        iterations,
                        status: QpStatus::Optimal,
                        y_eq: py_eq,
                        z_in: pz_in,
                    });
                }
            }
        }
        let kkt = raw;
        let status = if kkt.max() <= tol { QpStatus::Optimal } else { QpStatus::MaxIter };
        Ok(QpSolution {
            obj: problem.objective(x),
            x: x.clone(),
            kkt_residuals: kkt,
            iterations,
            status,
            y_eq: y_eq.clone(),
            z_in: z_clamped,
        })
    }

    fn ensure_factorization(
        &mut self,
        problem: &QpProblem,
        a: &DMatrix<f64>,
        rho_override: Option<f64>,
    ) -> Result<()> {
        let reusable = match &self.factorization {
            Some(fac) => {
                fac.p == problem.p
                    && fac.a_eq == problem.a_eq
                    && fac.a_in == problem.a_in
                    && rho_override.map_or(true, |r| r == fac.rho_base)
            }
            None => false,
        };
        if reusable {
            return Ok(());
        }
        let rho_base = rho_override
            .or(self.factorization.as_ref().map(|f| f.rho_base))
            .unwrap_or(0.1);
        let n = problem.n();
        let me = problem.a_eq.nrows();
        let m = a.nrows();

        let scaling = ruiz_equilibrate(&problem.p, a);
        let mut p_scaled = problem.p.clone();
        for i in 0..n {
            for j in 0..n {
                p_scaled[(i, j)] *= scaling.cost * scaling.d[i] * scaling.d[j];
            }
        }
        let mut a_scaled = a.clone();
        for i in 0..m {
            for j in 0..n {
                a_scaled[(i, j)] *= scaling.e[i] * scaling.d[j];
            }
        }
        let rho = DVector::from_fn(m, |i, _| {
            if i < me {
                rho_base * RHO_EQ_FACTOR
            } else {
                rho_base
            }
        });

        let mut kkt = DMatrix::zeros(n + m, n + m);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p_scaled);
        for i in 0..n {
            kkt[(i, i)] += ADMM_SIGMA;
        }
        kkt.view_mut((0, n), (n, m)).copy_from(&a_scaled.transpose());
        kkt.view_mut((n, 0), (m, n)).copy_from(&a_scaled);
        for i in 0..m {
            kkt[(n + i, n + i)] = -1.0 / rho[i];
        }
        let lu = kkt.lu();

        self.factorization = Some(Factorization {
            p: problem.p.clone(),
            a_eq: problem.a_eq.clone(),
            a_in: problem.a_in.clone(),
            rho_base,
            scaling,
            a_scaled,
            rho,
            lu,
        });
        Ok(())
    }

    /// Rebalance the penalty parameter when primal and dual progress diverge.
    fn adapt_rho(
        &mut self,
        problem: &QpProblem,
        a: &DMatrix<f64>,
        x: &DVector<f64>,
        y: &DVector<f64>,
        z: &DVector<f64>,
    ) -> Result<()> {
        let ax = a * x;
        let r_prim = (&ax - z).amax();
        let prim_scale = ax.amax().max(z.amax()).max(1.0);
        let mut dual_vec = &problem.p * x + &problem.q;
        dual_vec += a.transpose() * y;
        let r_dual = dual_vec.amax();
        let dual_scale = (&problem.p * x)
            .amax()
            .max(problem.q.amax())
            .max((a.transpose() * y).amax())
            .max(1.0);

        let ratio = ((r_prim / prim_scale) / (r_dual / dual_scale).max(1e-300)).sqrt();
        let current = self.factorization.as_ref().unwrap().rho_base;
        let proposed = (current * ratio).clamp(1e-6, 1e6);
        if proposed > current * 5.0 || proposed < current / 5.0 {
            self.ensure_factorization(problem, a, Some(proposed))?;
        }
        Ok(())
    }
}

fn split_duals(y: &DVector<f64>, me: usize) -> (DVector<f64>, DVector<f64>) {
    let y_eq = y.rows(0, me).into_owned();
    let z_in = y.rows(me, y.len() - me).into_owned();
    (y_eq, z_in)
}

fn ruiz_equilibrate(p: &DMatrix<f64>, a: &DMatrix<f64>) -> Scaling {
    let n = p.ncols();
    let m = a.nrows();
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(m, 1.0);
    let mut ps = p.clone();
    let mut as_ = a.clone();

    for _ in 0..RUIZ_ITERS {
        for j in 0..n {
            let mut norm = 0.0f64;
            for i in 0..n {
                norm = norm.max(ps[(i, j)].abs());
            }
            for i in 0..m {
                norm = norm.max(as_[(i, j)].abs());
            }
            let delta = if norm > 1e-300 { 1.0 / norm.sqrt() } else { 1.0 };
            d[j] *= delta;
            for i in 0..n {
                ps[(i, j)] *= delta;
                ps[(j, i)] *= delta;
            }
            for i in 0..m {
                as_[(i, j)] *= delta;
            }
        }
        for i in 0..m {
            let mut norm = 0.0f64;
            for j in 0..n {
                norm = norm.max(as_[(i, j)].abs());
            }
            let delta = if norm > 1e-300 { 1.0 / norm.sqrt() } else { 1.0 };
            e[i] *= delta;
            for j in 0..n {
                as_[(i, j)] *= delta;
            }
        }
    }

    // cost normalization from the scaled quadratic term only, so the
    // factorization stays valid when just q changes between solves
    let mut pnorm = 0.0f64;
    for j in 0..n {
        let mut col = 0.0f64;
        for i in 0..n {
            col = col.max(ps[(i, j)].abs());
        }
        pnorm = pnorm.max(col);
    }
    let cost = if pnorm > 1e-300 { 1.0 / pnorm.clamp(1e-12, 1e12) } else { 1.0 };
    Scaling { d, e, cost }
}

/// Solve the equality-constrained KKT system on the detected active set and
/// return the refined primal/dual point, or None when the system is singular.
fn polish(
    problem: &QpProblem,
    x: &DVector<f64>,
    z_in: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let n = problem.n();
    let me = problem.a_eq.nrows();
    let mi = problem.a_in.nrows();

    let slack = &problem.a_in * x - &problem.b_in;
    let z_scale = z_in.amax().max(1.0);
    let active: Vec<usize> = (0..mi)
        .filter(|&i| {
            z_in[i] > 1e-10 * z_scale || slack[i] > -1e-7 * (1.0 + problem.b_in[i].abs())
        })
        .collect();
    let na = active.len();

    let dim = n + me + na;
    let mut k0 = DMatrix::zeros(dim, dim);
    k0.view_mut((0, 0), (n, n)).copy_from(&problem.p);
    if me > 0 {
        k0.view_mut((0, n), (n, me)).copy_from(&problem.a_eq.transpose());
        k0.view_mut((n, 0), (me, n)).copy_from(&problem.a_eq);
    }
    for (row, &ci) in active.iter().enumerate() {
        for j in 0..n {
            k0[(j, n + me + row)] = problem.a_in[(ci, j)];
            k0[(n + me + row, j)] = problem.a_in[(ci, j)];
        }
    }
    let mut rhs = DVector::zeros(dim);
    for i in 0..n {
        rhs[i] = -problem.q[i];
    }
    for i in 0..me {
        rhs[n + i] = problem.b_eq[i];
    }
    for (row, &ci) in active.iter().enumerate() {
        rhs[n + me + row] = problem.b_in[ci];
    }

    let mut kreg = k0.clone();
    for i in 0..n {
        kreg[(i, i)] += POLISH_DELTA;
    }
    for i in n..dim {
        kreg[(i, i)] -= POLISH_DELTA;
    }
    let lu = kreg.lu();
    let mut sol = lu.solve(&rhs)?;
    // iterative refinement against the unregularized system
    for _ in 0..3 {
        let resid = &rhs - &k0 * &sol;
        let corr = lu.solve(&resid)?;
        sol += corr;
    }

    let px = sol.rows(0, n).into_owned();
    let py_eq = sol.rows(n, me).into_owned();
    let mut pz_in = DVector::zeros(mi);
    for (row, &ci) in active.iter().enumerate() {
        // weakly active rows picked up by the slack filter may carry a tiny
        // negative multiplier; clamp it rather than destabilize the solve
        pz_in[ci] = sol[n + me + row].max(0.0);
    }
    Some((px, py_eq, pz_in))
}

fn infeasibility_certificate(
    problem: &QpProblem,
    a: &DMatrix<f64>,
    delta_y: &DVector<f64>,
    me: usize,
) -> bool {
    let norm = delta_y.amax();
    if norm <= 1e-300 {
        return false;
    }
    let dir = delta_y / norm;
    if (a.transpose() * &dir).amax() > INFEAS_TOL {
        return false;
    }
    let mut support = 0.0;
    for i in 0..me {
        support += problem.b_eq[i] * dir[i];
    }
    for i in 0..(dir.len() - me) {
        let v = dir[me + i];
        // inequality rows are one-sided; a certificate needs nonnegative drift
        if v < -INFEAS_TOL {
            return false;
        }
        support += problem.b_in[i] * v.max(0.0);
    }
    support < -INFEAS_TOL
}

/// One-shot convenience wrapper around [`QpSolver`].
pub fn solve_qp(problem: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution> {
    let mut solver = QpSolver::new();
    solver.solve(problem, &QpSettings { tol, max_iter, warm_start: false })
}

/// Seeded feasible point on {1ᵀw = 1, −α ≤ w ≤ α}: draw a random long-only
/// allocation (uniform weights normalized to sum 1), then project in
/// Euclidean norm onto the constraint set to enforce the box.
pub fn build_feasible_init(n: usize, alpha: f64, seed: u64) -> Result<DVector<f64>> {
    if n == 0 || !(alpha > 0.0) {
        return Err(Error::InvalidArg("need n >= 1 and alpha > 0".into()));
    }
    if (n as f64) * alpha < 1.0 {
        return Err(Error::InvalidArg(format!(
            "n*alpha = {} < 1: feasible set is empty",
            n as f64 * alpha
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
    raw /= raw.sum();

    let mut a_in = DMatrix::zeros(2 * n, n);
    let mut b_in = DVector::zeros(2 * n);
    for i in 0..n {
        a_in[(i, i)] = 1.0;
        b_in[i] = alpha;
        a_in[(n + i, i)] = -1.0;
        b_in[n + i] = alpha;
    }
    let problem = QpProblem::new(
        DMatrix::identity(n, n),
        -raw,
        DMatrix::from_element(1, n, 1.0),
        DVector::from_element(1, 1.0),
        a_in,
        b_in,
    )?;
    let sol = solve_qp(&problem, 1e-10, 20_000)?;
    match sol.status {
        QpStatus::Optimal => Ok(sol.x),
        QpStatus::Infeasible => Err(Error::QpInfeasible),
        QpStatus::MaxIter => Err(Error::QpFailure(
            "projection QP did not reach tolerance".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn no_ineq(n: usize) -> (DMatrix<f64>, DVector<f64>) {
        (DMatrix::zeros(0, n), DVector::zeros(0))
    }

    #[test]
    fn symmetric_equality_problem() {
        // min ‖x‖² s.t. x1 + x2 = 1
        let (a_in, b_in) = no_ineq(2);
        let p = QpProblem::new(
            DMatrix::identity(2, 2) * 2.0,
            DVector::zeros(2),
            DMatrix::from_element(1, 2, 1.0),
            DVector::from_element(1, 1.0),
            a_in,
            b_in,
        )
        .unwrap();
        let sol = solve_qp(&p, 1e-10, 20_000).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_relative_eq!(sol.x[0], 0.5, epsilon = 1e-9);
        assert_relative_eq!(sol.x[1], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn box_clipped_unconstrained_optimum() {
        // min ½xᵀx − qᵀx over [−1,1]², q = (2, 0.5) → x = (1, 0.5)
        let mut a_in = DMatrix::zeros(4, 2);
        let mut b_in = DVector::zeros(4);
        for i in 0..2 {
            a_in[(i, i)] = 1.0;
            b_in[i] = 1.0;
            a_in[(2 + i, i)] = -1.0;
            b_in[2 + i] = 1.0;
        }
        let p = QpProblem::new(
            DMatrix::identity(2, 2),
            DVector::from_column_slice(&[-2.0, -0.5]),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
            a_in,
            b_in,
        )
        .unwrap();
        let sol = solve_qp(&p, 1e-10, 20_000).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(sol.x[1], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn optimal_status_implies_certified_residuals() {
        let mut a_in = DMatrix::zeros(4, 2);
        let mut b_in = DVector::zeros(4);
        for i in 0..2 {
            a_in[(i, i)] = 1.0;
            b_in[i] = 0.6;
            a_in[(2 + i, i)] = -1.0;
            b_in[2 + i] = 0.6;
        }
        let p = QpProblem::new(
            DMatrix::from_column_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            DVector::from_column_slice(&[0.1, -0.4]),
            DMatrix::from_element(1, 2, 1.0),
            DVector::from_element(1, 1.0),
            a_in,
            b_in,
        )
        .unwrap();
        let sol = solve_qp(&p, 1e-10, 20_000).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        let kkt = kkt_residuals(&p, &sol.x, &sol.y_eq, &sol.z_in);
        assert!(kkt.max() <= 1e-10, "residuals {kkt:?}");
    }

    #[test]
    fn solver_is_deterministic() {
        let mut a_in = DMatrix::zeros(4, 2);
        let mut b_in = DVector::zeros(4);
        for i in 0..2 {
            a_in[(i, i)] = 1.0;
            b_in[i] = 0.7;
            a_in[(2 + i, i)] = -1.0;
            b_in[2 + i] = 0.7;
        }
        let p = QpProblem::new(
            DMatrix::from_column_slice(2, 2, &[3.0, 0.5, 0.5, 2.0]),
            DVector::from_column_slice(&[-1.0, 0.3]),
            DMatrix::from_element(1, 2, 1.0),
            DVector::from_element(1, 1.0),
            a_in,
            b_in,
        )
        .unwrap();
        let s1 = solve_qp(&p, 1e-10, 20_000).unwrap();
        let s2 = solve_qp(&p, 1e-10, 20_000).unwrap();
        assert_eq!(s1.x, s2.x, "same problem and settings must be bit-identical");
    }

    #[test]
    fn infeasible_problem_detected() {
        // x <= 0 and -x <= -1 cannot both hold
        let p = QpProblem::new(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
            DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
            DVector::from_column_slice(&[0.0, -1.0]),
        )
        .unwrap();
        let sol = solve_qp(&p, 1e-10, 20_000).unwrap();
        assert_eq!(sol.status, QpStatus::Infeasible);
    }

    #[test]
    fn feasible_init_forced_points() {
        for seed in [0u64, 1, 99] {
            let w = build_feasible_init(2, 0.5, seed).unwrap();
            assert_relative_eq!(w[0], 0.5, epsilon = 1e-9);
            assert_relative_eq!(w[1], 0.5, epsilon = 1e-9);
        }
        let w = build_feasible_init(5, 0.2, 7).unwrap();
        for i in 0..5 {
            assert_relative_eq!(w[i], 0.2, epsilon = 1e-9);
        }
    }

    #[test]
    fn feasible_init_deterministic_and_feasible() {
        let a = build_feasible_init(50, 0.2, 5).unwrap();
        let b = build_feasible_init(50, 0.2, 5).unwrap();
        assert_eq!(a, b);
        assert!((a.sum() - 1.0).abs() <= 1e-10);
        assert!(a.iter().all(|v| v.abs() <= 0.2 + 1e-10));
    }

    #[test]
    fn feasible_init_rejects_empty_set() {
        assert!(build_feasible_init(4, 0.2, 0).is_err());
    }

    #[test]
    fn warm_started_resolve_matches_cold() {
        let mut a_in = DMatrix::zeros(4, 2);
        let mut b_in = DVector::zeros(4);
        for i in 0..2 {
            a_in[(i, i)] = 1.0;
            b_in[i] = 0.8;
            a_in[(2 + i, i)] = -1.0;
            b_in[2 + i] = 0.8;
        }
        let base = QpProblem::new(
            DMatrix::from_column_slice(2, 2, &[2.0, 0.2, 0.2, 1.5]),
            DVector::from_column_slice(&[-0.3, 0.1]),
            DMatrix::from_element(1, 2, 1.0),
            DVector::from_element(1, 1.0),
            a_in,
            b_in,
        )
        .unwrap();
        let mut solver = QpSolver::new();
        let settings = QpSettings { warm_start: true, ..Default::default() };
        let s1 = solver.solve(&base, &settings).unwrap();
        // shift the linear term; matrices unchanged so the factorization is reused
        let mut shifted = base.clone();
        shifted.q = DVector::from_column_slice(&[-0.31, 0.09]);
        let s2 = solver.solve(&shifted, &settings).unwrap();
        let cold = solve_qp(&shifted, 1e-10, 20_000).unwrap();
        assert_eq!(s1.status, QpStatus::Optimal);
        assert_eq!(s2.status, QpStatus::Optimal);
        assert_relative_eq!(s2.obj, cold.obj, epsilon = 1e-9);
    }
}
