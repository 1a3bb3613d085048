//! Benchmark harness: repeated solves from seeded initializations, the
//! relax-and-project baseline, and the ρ sweep, with comma-separated
//! summary/sweep outputs that round-trip through the readers in this
//! module.

use std::path::{Path, PathBuf};

use nalgebra::DVector;

use crate::data_io::{
    generate_synthetic_panel, load_return_panel, Algorithm, ReturnPanel, SolverConfig,
};
use crate::error::{Error, Result};
use crate::moments::{estimate_moments, MomentModel};
use crate::objective::{eval_f, eval_fp, ModelParams};
use crate::qp::{solve_qp, QpProblem, QpStatus};
use crate::solvers::{
    pdca, pdcae, sca, write_trace, IterationRecord, SolveReport, Termination, SUPPORT_THRESHOLD,
};
use crate::sparsity::{cardinality_gap, subgrad_largest_k};

const QP_TOL: f64 = 1e-10;
const QP_MAX_ITER: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File(PathBuf),
    Synthetic { n_assets: usize, n_periods: usize, seed: u64 },
}

/// One benchmark campaign: a data source, a solver configuration shared by
/// all runs, and the number of seeded repetitions.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub data: DataSource,
    pub config: SolverConfig,
    pub repetitions: usize,
    pub out_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 1 {
            return Err(Error::InvalidArg("repetitions must be at least 1".into()));
        }
        if let DataSource::Synthetic { n_assets, n_periods, .. } = self.data {
            if n_assets < 1 || n_periods < 2 {
                return Err(Error::InvalidArg(
                    "synthetic data needs n_assets >= 1 and n_periods >= 2".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn load_panel(&self) -> Result<ReturnPanel> {
        match &self.data {
            DataSource::File(path) => load_return_panel(path),
            DataSource::Synthetic { n_assets, n_periods, seed } => {
                generate_synthetic_panel(*n_assets, *n_periods, *seed)
            }
        }
    }
}

/// One completed run inside an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub algorithm: Algorithm,
    pub rep: usize,
    pub f: f64,
    pub fp: f64,
    pub support_count: usize,
    pub iterations: usize,
    pub cpu_seconds: f64,
    pub tolerance_met: bool,
}

/// Per-algorithm means across repetitions; one summary-file row.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub mean_f: f64,
    pub mean_fp: f64,
    pub mean_cpu_seconds: f64,
    pub mean_iterations: f64,
    pub mean_support_count: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub runs: Vec<RunResult>,
    pub rows: Vec<SummaryRow>,
    pub all_tolerance_met: bool,
    pub summary_path: PathBuf,
}

/// Dispatch one solve of the named algorithm.
pub fn run_single(
    algorithm: Algorithm,
    model: &MomentModel,
    params: &ModelParams,
    config: &SolverConfig,
    w0: &DVector<f64>,
) -> Result<SolveReport> {
    match algorithm {
        Algorithm::Pdca => pdca(model, params, config, w0),
        Algorithm::Pdcae => pdcae(model, params, config, w0),
        Algorithm::Sca => sca(model, params, config, w0),
        Algorithm::RelaxProject => relax_and_project(model, params, config, w0),
    }
}

fn run_to_result(algorithm: Algorithm, rep: usize, report: &SolveReport) -> RunResult {
    RunResult {
        algorithm,
        rep,
        f: report.f_final,
        fp: report.fp_final,
        support_count: report.support_count,
        iterations: report.iterations(),
        cpu_seconds: report.wall_time(),
        tolerance_met: report.termination == Termination::ToleranceMet,
    }
}

fn summarize(algorithm: Algorithm, runs: &[RunResult]) -> SummaryRow {
    let rows: Vec<&RunResult> = runs.iter().filter(|r| r.algorithm == algorithm).collect();
    let n = rows.len() as f64;
    let mean = |f: &dyn Fn(&RunResult) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
    SummaryRow {
        algorithm,
        mean_f: mean(&|r| r.f),
        mean_fp: mean(&|r| r.fp),
        mean_cpu_seconds: mean(&|r| r.cpu_seconds),
        mean_iterations: mean(&|r| r.iterations as f64),
        mean_support_count: mean(&|r| r.support_count as f64),
    }
}

pub const SUMMARY_HEADER: &str =
    "algorithm,mean_f,mean_f_p,mean_cpu_seconds,mean_iterations,mean_support_count";

pub fn write_summary(rows: &[SummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.algorithm.name(),
            r.mean_f,
            r.mean_fp,
            r.mean_cpu_seconds,
            r.mean_iterations,
            r.mean_support_count
        ));
    }
    std::fs::write(path, out).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let fmt_err = |msg: String| Error::Format { path: path.to_path_buf(), msg };
    let mut lines = text.lines();
    if lines.next() != Some(SUMMARY_HEADER) {
        return Err(fmt_err("bad summary header".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 6 {
            return Err(fmt_err(format!("summary row {i} has {} fields", cells.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| fmt_err(format!("bad number {s:?} in summary row {i}")))
        };
        rows.push(SummaryRow {
            algorithm: cells[0]
                .parse()
                .map_err(|_| fmt_err(format!("unknown algorithm {:?}", cells[0])))?,
            mean_f: num(cells[1])?,
            mean_fp: num(cells[2])?,
            mean_cpu_seconds: num(cells[3])?,
            mean_iterations: num(cells[4])?,
            mean_support_count: num(cells[5])?,
        });
    }
    Ok(rows)
}

/// Run all four methods `repetitions` times from shared seeded starting
/// points, writing one trace file per run plus a summary of per-algorithm
/// means. Trace files are flushed as runs finish, so partial output
/// survives a failure.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let panel = spec.load_panel()?;
    let model = estimate_moments(&panel)?;
    let params = ModelParams::from_config(&spec.config, &model)?;
    std::fs::create_dir_all(&spec.out_dir).map_err(|source| Error::Io {
        path: spec.out_dir.clone(),
        source,
    })?;

    let n = model.n_assets();
    let mut runs = Vec::new();
    for rep in 0..spec.repetitions {
        let w0 = crate::qp::build_feasible_init(
            n,
            spec.config.alpha,
            spec.config.seed.wrapping_add(rep as u64),
        )?;
        for algorithm in Algorithm::ALL {
            let report = run_single(algorithm, &model, &params, &spec.config, &w0)?;
            let trace_path = spec
                .out_dir
                .join(format!("trace_{}_rep{rep}.csv", algorithm.name()));
            write_trace(&report, trace_path)?;
            runs.push(run_to_result(algorithm, rep, &report));
        }
    }

    let rows: Vec<SummaryRow> =
        Algorithm::ALL.iter().map(|&a| summarize(a, &runs)).collect();
    let summary_path = spec.out_dir.join("summary.csv");
    write_summary(&rows, &summary_path)?;
    let all_tolerance_met = runs.iter().all(|r| r.tolerance_met);
    Ok(ExperimentReport { runs, rows, all_tolerance_met, summary_path })
}

/// Stage 2 of relax-and-project: fix the support to the k largest |w̃_i|
/// (lower index on ties) and solve min ½‖w − w̃‖² over the budget, box and
/// zero-off-support constraints.
pub fn project_top_k(w_tilde: &DVector<f64>, params: &ModelParams) -> Result<DVector<f64>> {
    let support = {
        let mut s = subgrad_largest_k(w_tilde, params.k)?.support;
        s.sort_unstable();
        s
    };
    project_onto_support(w_tilde, &support, params.alpha)
}

/// Projection of `w_tilde` onto {1ᵀw = 1, |w_i| ≤ α, w_i = 0 for i ∉ S},
/// solved as a QP in the |S| free coordinates.
pub fn project_onto_support(
    w_tilde: &DVector<f64>,
    support: &[usize],
    alpha: f64,
) -> Result<DVector<f64>> {
    let k = support.len();
    if k == 0 || k as f64 * alpha < 1.0 {
        return Err(Error::InvalidArg(format!(
            "support of size {k} with alpha {alpha} cannot meet the budget"
        )));
    }
    let (a_eq, b_eq, a_in, b_in) = {
        use nalgebra::DMatrix;
        let a_eq = DMatrix::from_element(1, k, 1.0);
        let b_eq = DVector::from_element(1, 1.0);
        let mut a_in = DMatrix::zeros(2 * k, k);
        let mut b_in = DVector::zeros(2 * k);
        for i in 0..k {
            a_in[(i, i)] = 1.0;
            b_in[i] = alpha;
            a_in[(k + i, i)] = -1.0;
            b_in[k + i] = alpha;
        }
        (a_eq, b_eq, a_in, b_in)
    };
    let p = nalgebra::DMatrix::identity(k, k);
    let q = DVector::from_fn(k, |i, _| -w_tilde[support[i]]);
    let problem = QpProblem::new(p, q, a_eq, b_eq, a_in, b_in)?;
    let sol = solve_qp(&problem, QP_TOL, QP_MAX_ITER)?;
    if sol.status != QpStatus::Optimal {
        return Err(Error::QpFailure("projection QP did not converge".into()));
    }
    let mut w = DVector::zeros(w_tilde.len());
    for (i, &idx) in support.iter().enumerate() {
        w[idx] = sol.x[i];
    }
    Ok(w)
}

/// Baseline heuristic: solve the relaxed problem (ρ = 0) with SCA, then
/// project the solution onto the k-sparse feasible set by top-k support
/// fixing.
pub fn relax_and_project(
    model: &MomentModel,
    params: &ModelParams,
    config: &SolverConfig,
    w0: &DVector<f64>,
) -> Result<SolveReport> {
    let relaxed = params.without_penalty();
    let stage1 = sca(model, &relaxed, config, w0)?;
    let w_star = project_top_k(&stage1.w_star, params)?;

    let f_final = eval_f(model, params, &w_star)?;
    let fp_final = eval_fp(model, params, &w_star)?;
    let mut trace = stage1.trace;
    let last = trace.last().cloned().unwrap();
    trace.push(IterationRecord {
        iter: last.iter + 1,
        fp: fp_final,
        f: f_final,
        step_norm: (&w_star - &stage1.w_star).norm(),
        stationarity_gap: None,
        gamma: None,
        beta: None,
        elapsed: last.elapsed,
    });
    Ok(SolveReport {
        support_count: crate::sparsity::hard_support_count(&w_star, SUPPORT_THRESHOLD),
        w_star,
        trace,
        termination: stage1.termination,
        f_final,
        fp_final,
    })
}

/// One ρ-sweep grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rho: f64,
    pub f: f64,
    pub fp: f64,
    pub cardinality_gap: f64,
    pub support_count: usize,
    pub tolerance_met: bool,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Smallest grid ρ with cardinality_gap ≤ 1e-8, if any.
    pub best_rho: Option<f64>,
    pub sweep_path: PathBuf,
}

pub const SWEEP_HEADER: &str = "rho,f,f_p,cardinality_gap,support_count,tolerance_met";
const SWEEP_GAP_TOL: f64 = 1e-8;

pub fn write_sweep(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.rho, r.f, r.fp, r.cardinality_gap, r.support_count, r.tolerance_met
        ));
    }
    std::fs::write(path, out).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn read_sweep(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let fmt_err = |msg: String| Error::Format { path: path.to_path_buf(), msg };
    let mut lines = text.lines();
    if lines.next() != Some(SWEEP_HEADER) {
        return Err(fmt_err("bad sweep header".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 6 {
            return Err(fmt_err(format!("sweep row {i} has {} fields", cells.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| fmt_err(format!("bad number {s:?} in sweep row {i}")))
        };
        rows.push(SweepRow {
            rho: num(cells[0])?,
            f: num(cells[1])?,
            fp: num(cells[2])?,
            cardinality_gap: num(cells[3])?,
            support_count: cells[4]
                .parse()
                .map_err(|_| fmt_err(format!("bad support count in sweep row {i}")))?,
            tolerance_met: cells[5]
                .parse()
                .map_err(|_| fmt_err(format!("bad flag in sweep row {i}")))?,
        });
    }
    Ok(rows)
}

/// Run the configured algorithm once per grid ρ (sorted ascending, first
/// repetition's starting point) and report sparsity against ρ.
pub fn rho_sweep(spec: &ExperimentSpec, rho_grid: &[f64]) -> Result<SweepReport> {
    spec.validate()?;
    if rho_grid.is_empty() {
        return Err(Error::InvalidArg("rho grid must be nonempty".into()));
    }
    if rho_grid.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::InvalidArg("rho grid entries must be finite and >= 0".into()));
    }
    let mut grid = rho_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();

    let panel = spec.load_panel()?;
    let model = estimate_moments(&panel)?;
    std::fs::create_dir_all(&spec.out_dir).map_err(|source| Error::Io {
        path: spec.out_dir.clone(),
        source,
    })?;
    let w0 = crate::qp::build_feasible_init(model.n_assets(), spec.config.alpha, spec.config.seed)?;

    let mut rows = Vec::new();
    for &rho in &grid {
        let mut config = spec.config.clone();
        config.rho = rho;
        let params = ModelParams::from_config(&config, &model)?;
        let report = run_single(config.algorithm, &model, &params, &config, &w0)?;
        rows.push(SweepRow {
            rho,
            f: report.f_final,
            fp: report.fp_final,
            cardinality_gap: cardinality_gap(&report.w_star, params.k)?,
            support_count: report.support_count,
            tolerance_met: report.termination == Termination::ToleranceMet,
        });
    }
    let best_rho = rows.iter().find(|r| r.cardinality_gap <= SWEEP_GAP_TOL).map(|r| r.rho);
    let sweep_path = spec.out_dir.join("sweep.csv");
    write_sweep(&rows, &sweep_path)?;
    Ok(SweepReport { rows, best_rho, sweep_path })
}
