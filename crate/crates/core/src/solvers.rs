//! The three outer methods: proximal DC (pdca), proximal DC with
//! extrapolation (pdcae), and successive convex approximation (sca).
//!
//! All three minimize the penalized four-moment objective over
//! {1ᵀw = 1, −α ≤ w ≤ α} by solving one convex QP per iteration. The ℓ1
//! term is lifted into linear constraints through an auxiliary variable u
//! (−u ≤ w ≤ u), so the QP layer never sees a nonsmooth term. Subproblems
//! share the quadratic term across iterations for pdca/pdcae, which lets
//! the QP solver reuse its factorization; warm starts come from the
//! previous outer iterate.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::data_io::SolverConfig;
use crate::error::{Error, Result};
use crate::moments::MomentModel;
use crate::objective::{eval_f, eval_f_split, eval_fp, grad_f, grad_f_split, hess_ncvx, ModelParams};
use crate::qp::{QpProblem, QpSettings, QpSolver, QpStatus};
use crate::sparsity::{hard_support_count, subgrad_largest_k};

/// Subproblems are solved tighter than the outer tolerance so their error
/// does not pollute the outer termination tests.
pub const QP_TOL: f64 = 1e-10;
pub const QP_MAX_ITER: usize = 20_000;

/// Reporting threshold for the support count of numerical solutions.
pub const SUPPORT_THRESHOLD: f64 = 1e-6;

const LINE_SEARCH_CAP: usize = 60;
const FEAS_TOL: f64 = 1e-8;

/// One row of a solve trace.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub fp: f64,
    pub f: f64,
    pub step_norm: f64,
    /// SCA only: the stationarity-gap value of the stopping test.
    pub stationarity_gap: Option<f64>,
    /// SCA only: accepted step size γ.
    pub gamma: Option<f64>,
    /// pdcae only: extrapolation coefficient β_j.
    pub beta: Option<f64>,
    /// Cumulative wall time in seconds.
    pub elapsed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ToleranceMet,
    MaxIter,
}

/// Final weights plus the full per-iteration trace of a solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub w_star: DVector<f64>,
    pub trace: Vec<IterationRecord>,
    pub termination: Termination,
    pub support_count: usize,
    pub f_final: f64,
    pub fp_final: f64,
}

impl SolveReport {
    /// Total wall time of the solve in seconds.
    pub fn wall_time(&self) -> f64 {
        self.trace.last().map_or(0.0, |r| r.elapsed)
    }

    /// Number of outer iterations performed.
    pub fn iterations(&self) -> usize {
        self.trace.last().map_or(0, |r| r.iter)
    }
}

fn l1(w: &DVector<f64>) -> f64 {
    w.iter().map(|x| x.abs()).sum()
}

fn check_feasible(w: &DVector<f64>, alpha: f64) -> Result<()> {
    let sum_defect = (w.sum() - 1.0).abs();
    let box_defect = w.iter().fold(0.0f64, |acc, x| acc.max(x.abs() - alpha));
    if sum_defect > FEAS_TOL || box_defect > FEAS_TOL {
        return Err(Error::InfeasibleStart(format!(
            "budget defect {sum_defect:.3e}, box defect {box_defect:.3e}"
        )));
    }
    Ok(())
}

/// Constraint matrices shared by all subproblems: budget equality, box on w,
/// and, when `lifted`, the ℓ1 coupling rows −u ≤ w ≤ u.
fn subproblem_constraints(
    n: usize,
    alpha: f64,
    lifted: bool,
) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
    let nv = if lifted { 2 * n } else { n };
    let mut a_eq = DMatrix::zeros(1, nv);
    for j in 0..n {
        a_eq[(0, j)] = 1.0;
    }
    let b_eq = DVector::from_element(1, 1.0);

    let mi = if lifted { 4 * n } else { 2 * n };
    let mut a_in = DMatrix::zeros(mi, nv);
    let mut b_in = DVector::zeros(mi);
    for i in 0..n {
        a_in[(i, i)] = 1.0;
        b_in[i] = alpha;
        a_in[(n + i, i)] = -1.0;
        b_in[n + i] = alpha;
    }
    if lifted {
        for i in 0..n {
            a_in[(2 * n + i, i)] = 1.0;
            a_in[(2 * n + i, n + i)] = -1.0;
            a_in[(3 * n + i, i)] = -1.0;
            a_in[(3 * n + i, n + i)] = -1.0;
        }
    }
    (a_eq, b_eq, a_in, b_in)
}

/// Quadratic block for the lifted variable vector: `p_ww` in the top-left,
/// zeros for u.
fn lift_quadratic(p_ww: DMatrix<f64>, lifted: bool) -> DMatrix<f64> {
    if !lifted {
        return p_ww;
    }
    let n = p_ww.nrows();
    let mut p = DMatrix::zeros(2 * n, 2 * n);
    p.view_mut((0, 0), (n, n)).copy_from(&p_ww);
    p
}

fn lift_linear(q_w: DVector<f64>, rho: f64, lifted: bool) -> DVector<f64> {
    if !lifted {
        return q_w;
    }
    let n = q_w.len();
    let mut q = DVector::zeros(2 * n);
    q.rows_mut(0, n).copy_from(&q_w);
    for i in 0..n {
        q[n + i] = rho;
    }
    q
}

fn solve_subproblem(
    solver: &mut QpSolver,
    problem: &QpProblem,
    outer_iter: usize,
) -> Result<DVector<f64>> {
    let settings = QpSettings { tol: QP_TOL, max_iter: QP_MAX_ITER, warm_start: true };
    let sol = solver.solve(problem, &settings)?;
    match sol.status {
        QpStatus::Optimal => Ok(sol.x),
        QpStatus::Infeasible => Err(Error::QpInfeasible),
        QpStatus::MaxIter => {
            if sol.kkt_residuals.max() <= 1e-6 {
                log::warn!(
                    "subproblem at outer iteration {outer_iter} stopped at residual {:.3e}",
                    sol.kkt_residuals.max()
                );
                Ok(sol.x)
            } else {
                Err(Error::QpNoConvergence { iter: outer_iter })
            }
        }
    }
}

fn finish_report(
    model: &MomentModel,
    params: &ModelParams,
    w_star: DVector<f64>,
    trace: Vec<IterationRecord>,
    termination: Termination,
) -> Result<SolveReport> {
    let f_final = eval_f(model, params, &w_star)?;
    let fp_final = eval_fp(model, params, &w_star)?;
    Ok(SolveReport {
        support_count: hard_support_count(&w_star, SUPPORT_THRESHOLD),
        w_star,
        trace,
        termination,
        f_final,
        fp_final,
    })
}

/// Proximal DC: linearize the concave part and the largest-k norm at the
/// current iterate, solve the resulting QP, repeat.
pub fn pdca(
    model: &MomentModel,
    params: &ModelParams,
    config: &SolverConfig,
    w0: &DVector<f64>,
) -> Result<SolveReport> {
    run_dc(model, params, config, w0, false)
}

/// Proximal DC with extrapolation: the smooth concave part is linearized at
/// the momentum point y^j = w^j + β_j(w^j − w^{j−1}) while the largest-k
/// subgradient stays at w^j.
pub fn pdcae(
    model: &MomentModel,
    params: &ModelParams,
    config: &SolverConfig,
    w0: &DVector<f64>,
) -> Result<SolveReport> {
    run_dc(model, params, config, w0, true)
}

fn run_dc(
    model: &MomentModel,
    params: &ModelParams,
    config: &SolverConfig,
    w0: &DVector<f64>,
    extrapolate: bool,
) -> Result<SolveReport> {
    let n = model.n_assets();
    if w0.len() != n {
        return Err(Error::Dim { what: "w0", expected: n, got: w0.len() });
    }
    check_feasible(w0, params.alpha)?;
    let start = Instant::now();
    let lifted = params.rho > 0.0;
    let [l1w, l2w, ..] = params.lambdas;

    let (a_eq, b_eq, a_in, b_in) = subproblem_constraints(n, params.alpha, lifted);
    let mut p_ww = model.sigma() * (2.0 * l2w);
    for i in 0..n {
        p_ww[(i, i)] += params.tau_dc;
    }
    let p = lift_quadratic(p_ww, lifted);

    let mut solver = QpSolver::new();
    let mut w = w0.clone();
    let mut w_prev = w0.clone();
    let mut fp = eval_fp(model, params, &w)?;
    let mut theta_prev = 1.0f64;
    let mut theta = 1.0f64;

    let mut trace = vec![IterationRecord {
        iter: 0,
        fp,
        f: eval_f(model, params, &w)?,
        step_norm: 0.0,
        stationarity_gap: None,
        gamma: None,
        beta: None,
        elapsed: start.elapsed().as_secs_f64(),
    }];

    let mut termination = Termination::MaxIter;
    let mut w_star = w.clone();
    for j in 0..config.max_iters {
        let beta_j = if extrapolate { (theta_prev - 1.0) / theta } else { 0.0 };
        let lin_point = if extrapolate {
            &w + (&w - &w_prev) * beta_j
        } else {
            w.clone()
        };
        let sub = subgrad_largest_k(&w, params.k)?;
        let (_, g_ncvx) = grad_f_split(model, params, &lin_point)?;

        // linear term of the subproblem:
        //   -λ1 μ  -  (τ_dc·lin - ∇f_ncvx(lin) + ρ s)
        let q_w = model.mu() * (-l1w)
            - (&lin_point * params.tau_dc - &g_ncvx + &sub.s * params.rho);
        let q = lift_linear(q_w, params.rho, lifted);

        // constructed symmetric PSD by assembly; skip the validating ctor
        let problem = QpProblem {
            p: p.clone(),
            q,
            a_eq: a_eq.clone(),
            b_eq: b_eq.clone(),
            a_in: a_in.clone(),
            b_in: b_in.clone(),
        };
        let x = solve_subproblem(&mut solver, &problem, j)?;
        let w_next = x.rows(0, n).into_owned();

        let fp_next = eval_fp(model, params, &w_next)?;
        let f_next = eval_f(model, params, &w_next)?;
        let step = (&w_next - &w).norm();
        trace.push(IterationRecord {
            iter: j + 1,
            fp: fp_next,
            f: f_next,
            step_norm: step,
            stationarity_gap: None,
            gamma: None,
            beta: extrapolate.then_some(beta_j),
            elapsed: start.elapsed().as_secs_f64(),
        });

        let iter_ok = step / (1.0 + w.norm()) < config.epsilon;
        let obj_ok = (fp_next - fp).abs() / (1.0 + fp_next.abs()) < config.epsilon;

        if extrapolate {
            theta_prev = theta;
            theta = (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0;
        }
        w_prev = std::mem::replace(&mut w, w_next);
        fp = fp_next;

        if iter_ok && obj_ok {
            termination = Termination::ToleranceMet;
            w_star = w.clone();
            break;
        }
        w_star = w.clone();
    }

    finish_report(model, params, w_star, trace, termination)
}

/// Frobenius-nearest symmetric PSD matrix: clip negative eigenvalues of the
/// symmetrized input to zero.
pub fn nearest_psd(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::Dim { what: "nearest_psd input", expected: n, got: h.ncols() });
    }
    let defect = (h - h.transpose()).amax();
    let tol = 1e-10 * h.amax().max(1.0);
    if defect > tol {
        return Err(Error::Asymmetric { defect, tol });
    }
    let sym = (h + h.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|v| *v >= 0.0) {
        return Ok(sym);
    }
    let clipped = DVector::from_fn(n, |i, _| eig.eigenvalues[i].max(0.0));
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for j in 0..n {
        scaled.column_mut(j).scale_mut(clipped[j]);
    }
    let rec = &scaled * u.transpose();
    Ok((&rec + rec.transpose()) * 0.5)
}

/// The strongly convex quadratic model of the non-convex part at `w_j`:
/// value and gradient match f_ncvx at w_j, curvature is the PSD-projected
/// Hessian plus τ_w·I.
#[derive(Debug, Clone)]
pub struct ScaSurrogate {
    pub w_j: DVector<f64>,
    pub value_at_wj: f64,
    pub grad_at_wj: DVector<f64>,
    pub h: DMatrix<f64>,
    pub tau_w: f64,
}

impl ScaSurrogate {
    pub fn value(&self, w: &DVector<f64>) -> f64 {
        let d = w - &self.w_j;
        self.value_at_wj
            + self.grad_at_wj.dot(&d)
            + 0.5 * (d.transpose() * &self.h * &d)[(0, 0)]
            + 0.5 * self.tau_w * d.norm_squared()
    }

    pub fn grad(&self, w: &DVector<f64>) -> DVector<f64> {
        let d = w - &self.w_j;
        &self.grad_at_wj + &self.h * &d + d * self.tau_w
    }
}

pub fn sca_surrogate(
    model: &MomentModel,
    params: &ModelParams,
    w_j: &DVector<f64>,
) -> Result<ScaSurrogate> {
    let h = nearest_psd(&hess_ncvx(model, params, w_j)?)?;
    let (_, value_at_wj) = eval_f_split(model, params, w_j)?;
    let (_, grad_at_wj) = grad_f_split(model, params, w_j)?;
    Ok(ScaSurrogate {
        w_j: w_j.clone(),
        value_at_wj,
        grad_at_wj,
        h,
        tau_w: params.tau_w,
    })
}

/// Backtracking line search along d = ŵ − w^j: γ = β^m with the smallest
/// nonnegative m such that
///
/// ```text
/// f(w+β^m d) − β^m ρ dᵀs + β^m ρ(‖ŵ‖₁−‖w‖₁)
///     ≤ f(w) + c β^m [dᵀ(∇f(w) − ρ s) + ρ(‖ŵ‖₁−‖w‖₁)]
/// ```
pub fn sca_line_search(
    model: &MomentModel,
    params: &ModelParams,
    w_j: &DVector<f64>,
    w_hat: &DVector<f64>,
    s: &DVector<f64>,
    c: f64,
    beta: f64,
) -> Result<(f64, usize)> {
    if !(c > 0.0 && c < 1.0 && beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidArg("line search needs 0 < c, beta < 1".into()));
    }
    let d = w_hat - w_j;
    let f_j = eval_f(model, params, w_j)?;
    let grad_j = grad_f(model, params, w_j)?;
    let l1_diff = l1(w_hat) - l1(w_j);
    let descent = d.dot(&(&grad_j - s * params.rho)) + params.rho * l1_diff;
    let d_dot_s = d.dot(s);

    let mut gamma = 1.0;
    for m in 0..=LINE_SEARCH_CAP {
        let trial = w_j + &d * gamma;
        let lhs = eval_f(model, params, &trial)? - gamma * params.rho * d_dot_s
            + gamma * params.rho * l1_diff;
        let rhs = f_j + c * gamma * descent;
        if lhs <= rhs {
            return Ok((gamma, m));
        }
        gamma *= beta;
    }
    Err(Error::LineSearchCap { cap: LINE_SEARCH_CAP })
}

struct ScaStep {
    w_hat: DVector<f64>,
    gap: f64,
}

fn sca_subproblem(
    model: &MomentModel,
    params: &ModelParams,
    solver: &mut QpSolver,
    w: &DVector<f64>,
    outer_iter: usize,
) -> Result<ScaStep> {
    let n = model.n_assets();
    let lifted = params.rho > 0.0;
    let [l1w, l2w, ..] = params.lambdas;
    let sub = subgrad_largest_k(w, params.k)?;
    let surrogate = sca_surrogate(model, params, w)?;

    let (a_eq, b_eq, a_in, b_in) = subproblem_constraints(n, params.alpha, lifted);
    let mut p_ww = model.sigma() * (2.0 * l2w) + &surrogate.h;
    for i in 0..n {
        p_ww[(i, i)] += params.tau_w;
    }
    // ∇ of the smooth subproblem objective at 0 w.r.t. w:
    //   -λ1 μ + ∇f_ncvx(w) - (H + τ_w I)·w - ρ s
    let hw = &surrogate.h * w + w * params.tau_w;
    let q_w = model.mu() * (-l1w) + &surrogate.grad_at_wj - hw - &sub.s * params.rho;

    let problem = QpProblem {
        p: lift_quadratic(p_ww, lifted),
        q: lift_linear(q_w, params.rho, lifted),
        a_eq,
        b_eq,
        a_in,
        b_in,
    };
    let x = solve_subproblem(solver, &problem, outer_iter)?;
    let w_hat = x.rows(0, n).into_owned();

    let d = &w_hat - w;
    let grad = grad_f(model, params, w)?;
    let gap = d.dot(&(&grad - &sub.s * params.rho)) + params.rho * (l1(&w_hat) - l1(w));
    Ok(ScaStep { w_hat, gap })
}

/// Successive convex approximation with backtracking line search.
pub fn sca(
    model: &MomentModel,
    params: &ModelParams,
    config: &SolverConfig,
    w0: &DVector<f64>,
) -> Result<SolveReport> {
    let n = model.n_assets();
    if w0.len() != n {
        return Err(Error::Dim { what: "w0", expected: n, got: w0.len() });
    }
    check_feasible(w0, params.alpha)?;
    let start = Instant::now();

    let mut solver = QpSolver::new();
    let mut w = w0.clone();
    let mut trace = vec![IterationRecord {
        iter: 0,
        fp: eval_fp(model, params, &w)?,
        f: eval_f(model, params, &w)?,
        step_norm: 0.0,
        stationarity_gap: None,
        gamma: None,
        beta: None,
        elapsed: start.elapsed().as_secs_f64(),
    }];

    let mut termination = Termination::MaxIter;
    for j in 0..config.max_iters {
        let step = sca_subproblem(model, params, &mut solver, &w, j)?;
        if step.gap.abs() < config.epsilon {
            // stop before stepping: w is the certified point, so record the
            // sub-tolerance gap as a terminal no-op row
            let last = trace.last().unwrap();
            trace.push(IterationRecord {
                iter: j + 1,
                fp: last.fp,
                f: last.f,
                step_norm: 0.0,
                stationarity_gap: Some(step.gap.abs()),
                gamma: None,
                beta: None,
                elapsed: start.elapsed().as_secs_f64(),
            });
            termination = Termination::ToleranceMet;
            break;
        }
        let sub = subgrad_largest_k(&w, params.k)?;
        let (gamma, _m) = sca_line_search(
            model,
            params,
            &w,
            &step.w_hat,
            &sub.s,
            config.line_search_c,
            config.line_search_beta,
        )?;
        let w_next = &w + (&step.w_hat - &w) * gamma;

        trace.push(IterationRecord {
            iter: j + 1,
            fp: eval_fp(model, params, &w_next)?,
            f: eval_f(model, params, &w_next)?,
            step_norm: (&w_next - &w).norm(),
            stationarity_gap: Some(step.gap.abs()),
            gamma: Some(gamma),
            beta: None,
            elapsed: start.elapsed().as_secs_f64(),
        });
        w = w_next;
    }

    finish_report(model, params, w, trace, termination)
}

/// Stationarity residual of a feasible point: the stopping-gap value of one
/// SCA subproblem solved at `w`. Near-zero means approximately stationary
/// for the penalized problem.
pub fn stationarity_residual(
    model: &MomentModel,
    params: &ModelParams,
    w: &DVector<f64>,
) -> Result<f64> {
    check_feasible(w, params.alpha)?;
    let mut solver = QpSolver::new();
    let step = sca_subproblem(model, params, &mut solver, w, 0)?;
    Ok(step.gap.abs())
}

/// Trace file header; one record per iteration, comma-separated, fields
/// absent for a given algorithm left empty.
pub const TRACE_HEADER: &str = "iter,f_p,f,step_norm,stationarity_gap,gamma,beta,elapsed_seconds";

pub fn write_trace(report: &SolveReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for r in &report.trace {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.iter,
            r.fp,
            r.f,
            r.step_norm,
            opt(r.stationarity_gap),
            opt(r.gamma),
            opt(r.beta),
            r.elapsed
        ));
    }
    std::fs::write(path, out).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<IterationRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let fmt_err = |msg: String| Error::Format { path: path.to_path_buf(), msg };
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Err(fmt_err("bad trace header".into()));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 8 {
            return Err(fmt_err(format!("record {i} has {} fields", cells.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| fmt_err(format!("bad number {s:?} in record {i}")))
        };
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() { Ok(None) } else { num(s).map(Some) }
        };
        records.push(IterationRecord {
            iter: cells[0]
                .parse()
                .map_err(|_| fmt_err(format!("bad iteration index in record {i}")))?,
            fp: num(cells[1])?,
            f: num(cells[2])?,
            step_norm: num(cells[3])?,
            stationarity_gap: opt(cells[4])?,
            gamma: opt(cells[5])?,
            beta: opt(cells[6])?,
            elapsed: num(cells[7])?,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::{Algorithm, LambdaMode, ReturnPanel, SolverConfig};
    use crate::moments::estimate_moments;
    use crate::objective::tau_dc_bound;
    use crate::qp::build_feasible_init;
    use crate::sparsity::cardinality_gap;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_model(n: usize, t: usize, seed: u64) -> MomentModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(t, n, |_, _| rng.random_range(-0.05..0.05));
        let ids = (0..n).map(|j| format!("A{j}")).collect();
        estimate_moments(&ReturnPanel::new(m, ids).unwrap()).unwrap()
    }

    fn config(algorithm: Algorithm) -> SolverConfig {
        let mut cfg = SolverConfig::default_for(algorithm, LambdaMode::RiskAversion(5.0));
        cfg.alpha = 0.6;
        cfg.k = 2;
        cfg
    }

    fn params_for(model: &MomentModel, cfg: &SolverConfig) -> ModelParams {
        ModelParams::from_config(cfg, model).unwrap()
    }

    /// λ3 = λ4 = 0-like instance with identity covariance: the minimizer of
    /// the penalized problem with ρ=0 is the uniform portfolio.
    fn variance_only(n: usize) -> (MomentModel, ModelParams) {
        // symmetric two-point returns per asset, scaled to give Σ ≈ I
        let mut rows = DMatrix::zeros(2 * n, n);
        for j in 0..n {
            rows[(2 * j, j)] = 1.0;
            rows[(2 * j + 1, j)] = -1.0;
        }
        let scale = (2.0 * n as f64).sqrt();
        let rows = rows * scale;
        let ids = (0..n).map(|j| format!("A{j}")).collect();
        let model = estimate_moments(&ReturnPanel::new(rows, ids).unwrap()).unwrap();
        let params = ModelParams {
            lambdas: [1e-12, 1.0, 1e-12, 1e-12],
            alpha: 1.0,
            k: 1,
            rho: 0.0,
            tau_dc: 0.0,
            tau_w: 1e-10,
        };
        (model, params)
    }

    #[test]
    fn pdca_variance_only_reaches_uniform_in_one_iteration() {
        let n = 4;
        let (model, params) = variance_only(n);
        let mut cfg = config(Algorithm::Pdca);
        cfg.alpha = 1.0;
        let w0 = build_feasible_init(n, 1.0, 3).unwrap();
        let report = pdca(&model, &params, &cfg, &w0).unwrap();
        let first = &report.trace[1];
        assert!(first.iter == 1);
        // the first subproblem already lands on the uniform portfolio
        let w1_fp = first.fp;
        let uniform = DVector::from_element(n, 1.0 / n as f64);
        let fp_uniform = eval_fp(&model, &params, &uniform).unwrap();
        assert_relative_eq!(w1_fp, fp_uniform, epsilon = 1e-9);
        for i in 0..n {
            assert_relative_eq!(report.w_star[i], 1.0 / n as f64, epsilon = 1e-7);
        }
    }

    #[test]
    fn sca_variance_only_reaches_uniform() {
        let n = 5;
        let (model, params) = variance_only(n);
        let mut cfg = config(Algorithm::Sca);
        cfg.alpha = 1.0;
        let w0 = build_feasible_init(n, 1.0, 11).unwrap();
        let report = sca(&model, &params, &cfg, &w0).unwrap();
        assert_eq!(report.termination, Termination::ToleranceMet);
        for i in 0..n {
            assert_relative_eq!(report.w_star[i], 1.0 / n as f64, epsilon = 1e-6);
        }
    }

    #[test]
    fn stationarity_residual_at_variance_optimum() {
        let n = 4;
        let (model, params) = variance_only(n);
        let uniform = DVector::from_element(n, 1.0 / n as f64);
        let resid = stationarity_residual(&model, &params, &uniform).unwrap();
        assert!(resid <= 1e-8, "residual {resid}");
        // a random feasible non-optimal point has a visible gap
        let mut off = uniform.clone();
        off[0] += 0.3;
        off[1] -= 0.3;
        let resid_off = stationarity_residual(&model, &params, &off).unwrap();
        assert!(resid_off > 1e-4, "residual {resid_off}");
    }

    #[test]
    fn pdca_descends_monotonically() {
        let model = random_model(6, 60, 15);
        let cfg = config(Algorithm::Pdca);
        let params = params_for(&model, &cfg);
        let w0 = build_feasible_init(6, cfg.alpha, 2).unwrap();
        let report = pdca(&model, &params, &cfg, &w0).unwrap();
        assert_eq!(report.termination, Termination::ToleranceMet);
        for pair in report.trace.windows(2) {
            assert!(
                pair[1].fp <= pair[0].fp + 1e-10,
                "fp rose from {} to {}",
                pair[0].fp,
                pair[1].fp
            );
        }
    }

    #[test]
    fn pdcae_first_iteration_matches_pdca_exactly() {
        let model = random_model(5, 50, 23);
        let mut cfg = config(Algorithm::Pdca);
        cfg.max_iters = 1;
        let params = params_for(&model, &cfg);
        let w0 = build_feasible_init(5, cfg.alpha, 9).unwrap();
        let a = pdca(&model, &params, &cfg, &w0).unwrap();
        let b = pdcae(&model, &params, &cfg, &w0).unwrap();
        assert_eq!(a.w_star, b.w_star, "beta_0 = 0 forces identical first steps");
    }

    #[test]
    fn pdcae_theta_sequence_prefix() {
        // θ_{-1} = θ_0 = 1, θ_{j+1} = (1 + sqrt(1+4θ_j²))/2
        let mut theta_prev = 1.0f64;
        let mut theta = 1.0f64;
        let mut betas = Vec::new();
        let mut thetas = Vec::new();
        for _ in 0..3 {
            betas.push((theta_prev - 1.0) / theta);
            theta_prev = theta;
            theta = (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0;
            thetas.push(theta);
        }
        assert_eq!(betas[0], 0.0);
        assert_relative_eq!(thetas[0], (1.0 + 5.0f64.sqrt()) / 2.0, epsilon = 1e-12);
        let t1 = (1.0 + 5.0f64.sqrt()) / 2.0;
        assert_relative_eq!(
            thetas[1],
            (1.0 + (1.0 + 4.0 * t1 * t1).sqrt()) / 2.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(thetas[1], 2.19353, epsilon = 1e-5);
    }

    #[test]
    fn sca_strictly_descends_until_termination() {
        let model = random_model(6, 60, 27);
        let cfg = config(Algorithm::Sca);
        let params = params_for(&model, &cfg);
        let w0 = build_feasible_init(6, cfg.alpha, 4).unwrap();
        let report = sca(&model, &params, &cfg, &w0).unwrap();
        assert_eq!(report.termination, Termination::ToleranceMet);
        // strict decrease on every iteration before the stopping test fires
        for pair in report.trace.windows(2) {
            if pair[1].iter < report.trace.len() - 1 {
                assert!(pair[1].fp < pair[0].fp, "no strict decrease at {}", pair[1].iter);
            }
        }
        let resid = stationarity_residual(&model, &params, &report.w_star).unwrap();
        assert!(resid <= 10.0 * cfg.epsilon, "residual {resid}");
    }

    #[test]
    fn iterates_stay_feasible() {
        let model = random_model(5, 50, 31);
        for algo in [Algorithm::Pdca, Algorithm::Pdcae, Algorithm::Sca] {
            let cfg = config(algo);
            let params = params_for(&model, &cfg);
            let w0 = build_feasible_init(5, cfg.alpha, 6).unwrap();
            let report = match algo {
                Algorithm::Pdca => pdca(&model, &params, &cfg, &w0).unwrap(),
                Algorithm::Pdcae => pdcae(&model, &params, &cfg, &w0).unwrap(),
                _ => sca(&model, &params, &cfg, &w0).unwrap(),
            };
            assert!((report.w_star.sum() - 1.0).abs() <= 1e-8);
            assert!(report.w_star.iter().all(|v| v.abs() <= cfg.alpha + 1e-8));
        }
    }

    #[test]
    fn solves_are_deterministic() {
        let model = random_model(5, 50, 35);
        let cfg = config(Algorithm::Pdcae);
        let params = params_for(&model, &cfg);
        let w0 = build_feasible_init(5, cfg.alpha, 8).unwrap();
        let a = pdcae(&model, &params, &cfg, &w0).unwrap();
        let b = pdcae(&model, &params, &cfg, &w0).unwrap();
        assert_eq!(a.w_star, b.w_star);
        assert_eq!(a.fp_final, b.fp_final);
    }

    #[test]
    fn large_rho_enforces_sparsity() {
        let model = random_model(5, 50, 39);
        let mut cfg = config(Algorithm::Pdca);
        cfg.k = 2;
        cfg.alpha = 0.6;
        let w0 = build_feasible_init(5, cfg.alpha, 10).unwrap();
        let mut achieved = false;
        let mut rho = cfg.rho.max(1e-4);
        for _ in 0..8 {
            cfg.rho = rho;
            let params = params_for(&model, &cfg);
            let report = pdca(&model, &params, &cfg, &w0).unwrap();
            let gap = cardinality_gap(&report.w_star, cfg.k).unwrap();
            if gap <= 1e-8 {
                assert!(report.support_count <= cfg.k);
                achieved = true;
                break;
            }
            rho *= 4.0;
        }
        assert!(achieved, "no rho in the sweep produced a k-sparse solution");
    }

    #[test]
    fn nearest_psd_fixes_psd_points() {
        let m = DMatrix::from_column_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let out = nearest_psd(&m).unwrap();
        assert!((out - m).amax() <= 1e-12);
    }

    #[test]
    fn nearest_psd_clips_diagonal() {
        let m = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        let out = nearest_psd(&m).unwrap();
        assert_relative_eq!(out[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(out[(1, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn nearest_psd_rejects_asymmetric() {
        let m = DMatrix::from_column_slice(2, 2, &[1.0, 0.5, -0.5, 1.0]);
        assert!(nearest_psd(&m).is_err());
    }

    #[test]
    fn nearest_psd_beats_random_psd_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for _ in 0..5 {
            let n = 4;
            let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let sym = (&raw + raw.transpose()) * 0.5;
            let proj = nearest_psd(&sym).unwrap();
            let d_proj = (&proj - &sym).norm();
            for _ in 0..1000 {
                let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                let cand = &g * g.transpose();
                assert!((cand - &sym).norm() >= d_proj - 1e-12);
            }
        }
    }

    #[test]
    fn surrogate_matches_value_and_gradient_at_expansion_point() {
        let model = random_model(4, 40, 43);
        let cfg = config(Algorithm::Sca);
        let params = params_for(&model, &cfg);
        let w = build_feasible_init(4, cfg.alpha, 12).unwrap();
        let sur = sca_surrogate(&model, &params, &w).unwrap();
        let (_, f_ncvx) = eval_f_split(&model, &params, &w).unwrap();
        assert_eq!(sur.value(&w), f_ncvx);
        let (_, g_ncvx) = grad_f_split(&model, &params, &w).unwrap();
        assert!((sur.grad(&w) - g_ncvx).amax() <= 1e-15);
        // strong convexity modulus at least tau_w
        let mut shifted = sur.h.clone();
        for i in 0..4 {
            shifted[(i, i)] += params.tau_w;
        }
        let min_eig = shifted.symmetric_eigen().eigenvalues.min();
        assert!(min_eig >= params.tau_w - 1e-12);
    }

    #[test]
    fn line_search_full_step_on_zero_direction() {
        let model = random_model(4, 40, 47);
        let cfg = config(Algorithm::Sca);
        let params = params_for(&model, &cfg);
        let w = build_feasible_init(4, cfg.alpha, 14).unwrap();
        let sub = subgrad_largest_k(&w, params.k).unwrap();
        let (gamma, m) =
            sca_line_search(&model, &params, &w, &w, &sub.s, 1e-4, 0.5).unwrap();
        assert_eq!((gamma, m), (1.0, 0));
    }

    #[test]
    fn line_search_full_step_on_quadratic_objective() {
        // with λ3 = λ4 ≈ 0 and an exact subproblem solve, m = 0 for c <= 0.5
        let n = 4;
        let (model, params) = variance_only(n);
        let w = build_feasible_init(n, 1.0, 16).unwrap();
        let mut solver = QpSolver::new();
        let step = sca_subproblem(&model, &params, &mut solver, &w, 0).unwrap();
        let sub = subgrad_largest_k(&w, params.k).unwrap();
        let (gamma, m) =
            sca_line_search(&model, &params, &w, &step.w_hat, &sub.s, 0.5, 0.5).unwrap();
        assert_eq!((gamma, m), (1.0, 0));
    }

    #[test]
    fn trace_round_trips_through_file() {
        let model = random_model(4, 40, 53);
        let cfg = config(Algorithm::Sca);
        let params = params_for(&model, &cfg);
        let w0 = build_feasible_init(4, cfg.alpha, 18).unwrap();
        let report = sca(&model, &params, &cfg, &w0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trace.csv");
        write_trace(&report, &p).unwrap();
        let records = read_trace(&p).unwrap();
        assert_eq!(records, report.trace);
    }

    #[test]
    fn infeasible_start_rejected() {
        let model = random_model(4, 40, 57);
        let cfg = config(Algorithm::Pdca);
        let params = params_for(&model, &cfg);
        let w0 = DVector::from_element(4, 1.0); // sums to 4
        assert!(matches!(
            pdca(&model, &params, &cfg, &w0),
            Err(Error::InfeasibleStart(_))
        ));
    }

    #[test]
    fn tau_dc_is_wired_through_params() {
        let model = random_model(4, 40, 61);
        let cfg = config(Algorithm::Pdca);
        let params = params_for(&model, &cfg);
        assert_eq!(params.tau_dc, tau_dc_bound(&model, &params));
        assert!(params.tau_dc > 0.0);
    }
}
