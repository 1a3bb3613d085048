//! Cardinality-penalized mean-variance-skewness-kurtosis portfolio
//! selection.
//!
//! The pipeline: estimate sample moment tensors from a return panel
//! ([`moments`]), assemble the penalized four-moment objective
//! ([`objective`], [`sparsity`]), and minimize it over the budget and box
//! constraints with one of three QP-per-iteration methods ([`solvers`])
//! built on an internal convex QP solver ([`qp`]). [`experiment`] adds the
//! relax-and-project baseline and the benchmark harness.

pub mod data_io;
pub mod error;
pub mod experiment;
pub mod moments;
pub mod objective;
pub mod qp;
pub mod solvers;
pub mod sparsity;

pub use data_io::{
    generate_synthetic_panel, load_return_panel, load_solver_config, resolve_lambdas,
    write_return_panel, Algorithm, LambdaMode, ReturnPanel, SolverConfig,
};
pub use error::{Error, Result};
pub use experiment::{relax_and_project, rho_sweep, run_experiment, ExperimentSpec};
pub use moments::{estimate_moments, load_moment_model, save_moment_model, MomentModel};
pub use objective::{
    eval_f, eval_f_split, eval_fp, grad_f, grad_f_split, hess_ncvx, tau_dc_bound, ModelParams,
};
pub use qp::{
    build_feasible_init, kkt_residuals, solve_qp, QpProblem, QpSettings, QpSolution, QpSolver,
    QpStatus,
};
pub use solvers::{
    nearest_psd, pdca, pdcae, read_trace, sca, sca_line_search, sca_surrogate,
    stationarity_residual, write_trace, IterationRecord, SolveReport, Termination,
};
pub use sparsity::{
    cardinality_gap, hard_support_count, largest_k_norm, subgrad_largest_k, SubgradientResult,
};
