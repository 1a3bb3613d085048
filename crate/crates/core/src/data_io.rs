//! Return-panel ingestion, synthetic data generation, and solver configuration.
//!
//! Panel file format: UTF-8 text, first line is a comma-separated header of
//! asset ids, each subsequent line is one period of simple returns with `.`
//! as the decimal separator and no thousands separators.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Deserialize;

use crate::error::{Error, Result};

/// A T×N matrix of per-period simple returns with asset labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    returns: DMatrix<f64>,
    asset_ids: Vec<String>,
}

impl ReturnPanel {
    pub fn new(returns: DMatrix<f64>, asset_ids: Vec<String>) -> Result<Self> {
        let (t, n) = returns.shape();
        if t == 0 || n == 0 {
            return Err(Error::InvalidArg(format!(
                "panel must have at least one period and one asset, got {t}x{n}"
            )));
        }
        if asset_ids.len() != n {
            return Err(Error::Dim {
                what: "asset_ids",
                expected: n,
                got: asset_ids.len(),
            });
        }
        let mut seen = HashSet::new();
        for id in &asset_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateAssetId { id: id.clone() });
            }
        }
        if returns.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("return panel"));
        }
        Ok(Self { returns, asset_ids })
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    /// Number of periods T.
    pub fn period_count(&self) -> usize {
        self.returns.nrows()
    }

    /// Number of assets N.
    pub fn asset_count(&self) -> usize {
        self.returns.ncols()
    }
}

/// Read a return panel from a file in the documented comma-separated format.
///
/// Row/column positions in errors are 1-based; the header counts as row 1.
pub fn load_return_panel(path: impl AsRef<Path>) -> Result<ReturnPanel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format {
        path: path.to_path_buf(),
        msg: "empty file".into(),
    })?;
    let asset_ids: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let n = asset_ids.len();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2; // header is line 1
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n {
            return Err(Error::RaggedRow {
                path: path.to_path_buf(),
                line: lineno,
                expected: n,
                got: cells.len(),
            });
        }
        let mut row = Vec::with_capacity(n);
        for (col, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::NonNumeric {
                path: path.to_path_buf(),
                row: lineno,
                col: col + 1,
                token: cell.trim().to_string(),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "no data rows".into(),
        });
    }
    let t = rows.len();
    let returns = DMatrix::from_fn(t, n, |i, j| rows[i][j]);
    ReturnPanel::new(returns, asset_ids)
}

/// Write a panel in the canonical format read back by [`load_return_panel`].
///
/// Values are printed with the shortest representation that round-trips,
/// so a write/read cycle reproduces entries bit-identically.
pub fn write_return_panel(panel: &ReturnPanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&panel.asset_ids.join(","));
    out.push('\n');
    for i in 0..panel.period_count() {
        for j in 0..panel.asset_count() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", panel.returns[(i, j)]));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Generate a deterministic synthetic return panel with asymmetric,
/// heavy-tailed returns.
///
/// Each asset's return is `drift + loading * common_factor +
/// idiosyncratic`, where drifts, loadings, and crash sensitivities vary
/// across assets and the idiosyncratic shock is a two-component Gaussian
/// mixture: a calm component most days, and an occasional negative-mean,
/// high-variance crash scaled by the asset's crash sensitivity. The
/// mixture gives returns the negative skewness and excess kurtosis of
/// daily equity data, with enough cross-sectional dispersion that the
/// choice of support matters. All parameters derive from `seed`, so the
/// output is a pure function of the arguments.
pub fn generate_synthetic_panel(
    n_assets: usize,
    n_periods: usize,
    seed: u64,
) -> Result<ReturnPanel> {
    if n_assets == 0 || n_periods == 0 {
        return Err(Error::InvalidArg(
            "n_assets and n_periods must be positive".into(),
        ));
    }
    if n_periods < 5 * n_assets {
        log::warn!(
            "synthetic panel has {n_periods} periods for {n_assets} assets; \
             at least {} recommended",
            5 * n_assets
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let drifts: Vec<f64> = (0..n_assets)
        .map(|_| rng.random_range(-0.0015..0.0025))
        .collect();
    let loadings: Vec<f64> = (0..n_assets)
        .map(|_| rng.random_range(0.4..1.4))
        .collect();
    let idio_scales: Vec<f64> = (0..n_assets)
        .map(|_| rng.random_range(0.5..1.5))
        .collect();
    let crash_sens: Vec<f64> = (0..n_assets)
        .map(|_| rng.random_range(0.2..2.0))
        .collect();

    let factor = Normal::new(0.0003, 0.009).unwrap();
    let unit = Normal::new(0.0, 1.0).unwrap();

    let mut returns = DMatrix::zeros(n_periods, n_assets);
    for t in 0..n_periods {
        let f = factor.sample(&mut rng);
        for a in 0..n_assets {
            let z = unit.sample(&mut rng);
            let idio = if rng.random_range(0.0..1.0) < 0.95 {
                0.012 * idio_scales[a] * z
            } else {
                crash_sens[a] * (-0.02 + 0.018 * idio_scales[a] * z)
            };
            returns[(t, a)] = drifts[a] + loadings[a] * f + idio;
        }
    }
    let asset_ids = (1..=n_assets).map(|i| format!("A{i:03}")).collect();
    ReturnPanel::new(returns, asset_ids)
}

/// How the four moment weights are specified.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaMode {
    /// λ1..λ4 given directly, all strictly positive.
    Explicit([f64; 4]),
    /// Risk-aversion parameter ξ > 0; λ1 = 1, λ2 = ξ/2, λ3 = ξ(ξ+1)/6,
    /// λ4 = ξ(ξ+1)(ξ+2)/24.
    RiskAversion(f64),
}

/// Resolve the moment weights from the configured mode.
pub fn resolve_lambdas(mode: &LambdaMode) -> Result<[f64; 4]> {
    let lambdas = match mode {
        LambdaMode::Explicit(l) => *l,
        LambdaMode::RiskAversion(xi) => {
            let xi = *xi;
            [
                1.0,
                xi / 2.0,
                xi * (xi + 1.0) / 6.0,
                xi * (xi + 1.0) * (xi + 2.0) / 24.0,
            ]
        }
    };
    if lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Config(format!(
            "all moment weights must be strictly positive, got {lambdas:?}"
        )));
    }
    Ok(lambdas)
}

/// Which outer method to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Pdca,
    Pdcae,
    Sca,
    RelaxProject,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Pdca,
        Algorithm::Pdcae,
        Algorithm::Sca,
        Algorithm::RelaxProject,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Pdca => "pdca",
            Algorithm::Pdcae => "pdcae",
            Algorithm::Sca => "sca",
            Algorithm::RelaxProject => "relax_project",
        }
    }

    /// Default outer-iteration cap for the method.
    pub fn default_max_iters(&self) -> usize {
        match self {
            Algorithm::Pdca | Algorithm::Pdcae => 5000,
            Algorithm::Sca | Algorithm::RelaxProject => 1000,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pdca" => Ok(Algorithm::Pdca),
            "pdcae" => Ok(Algorithm::Pdcae),
            "sca" => Ok(Algorithm::Sca),
            "relax_project" | "relax-project" => Ok(Algorithm::RelaxProject),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Every scalar knob of a solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub lambda_mode: LambdaMode,
    pub alpha: f64,
    pub k: usize,
    pub rho: f64,
    pub epsilon: f64,
    pub tau_w: f64,
    pub max_iters: usize,
    pub line_search_c: f64,
    pub line_search_beta: f64,
    pub seed: u64,
    pub algorithm: Algorithm,
}

impl SolverConfig {
    /// Configuration with the default experiment knobs for `algorithm`:
    /// α = 0.2, k = 10, ρ = 4e-3, ε = 1e-8, τ_w = 1e-10, c = 1e-4, β = 0.5.
    pub fn default_for(algorithm: Algorithm, lambda_mode: LambdaMode) -> Self {
        Self {
            lambda_mode,
            alpha: 0.2,
            k: 10,
            rho: 4e-3,
            epsilon: 1e-8,
            tau_w: 1e-10,
            max_iters: algorithm.default_max_iters(),
            line_search_c: 1e-4,
            line_search_beta: 0.5,
            seed: 0,
            algorithm,
        }
    }

    /// Check scalar ranges plus the feasibility couplings against the asset
    /// count: k·α ≥ 1 (a k-sparse point exists on the simplex slab) and
    /// N·α ≥ 1 (the relaxed feasible set is nonempty).
    pub fn validate(&self, n_assets: usize) -> Result<()> {
        resolve_lambdas(&self.lambda_mode)?;
        if !(self.alpha > 0.0) {
            return Err(Error::Config("alpha must be > 0".into()));
        }
        if self.k < 1 || self.k >= n_assets {
            return Err(Error::Config(format!(
                "k must satisfy 1 <= k < N, got k={} with N={n_assets}",
                self.k
            )));
        }
        if !(self.rho >= 0.0) {
            return Err(Error::Config("rho must be >= 0".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        if !(self.tau_w > 0.0) {
            return Err(Error::Config("tau_w must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        for (name, v) in [
            ("line_search_c", self.line_search_c),
            ("line_search_beta", self.line_search_beta),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must be in (0,1), got {v}")));
            }
        }
        if (self.k as f64) * self.alpha < 1.0 {
            return Err(Error::Config(format!(
                "k*alpha = {} < 1: no k-sparse point on the simplex slab exists",
                self.k as f64 * self.alpha
            )));
        }
        if (n_assets as f64) * self.alpha < 1.0 {
            return Err(Error::Config(format!(
                "N*alpha = {} < 1: the relaxed feasible set is empty",
                n_assets as f64 * self.alpha
            )));
        }
        Ok(())
    }
}

/// On-disk mirror of [`SolverConfig`]: a flat key-value TOML file. Unknown
/// keys are an error; exactly one of `xi` / `lambdas` must be present.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    algorithm: String,
    xi: Option<f64>,
    lambdas: Option<[f64; 4]>,
    alpha: f64,
    k: usize,
    rho: f64,
    epsilon: f64,
    tau_w: f64,
    max_iters: Option<usize>,
    line_search_c: Option<f64>,
    line_search_beta: Option<f64>,
    seed: u64,
}

/// Load a [`SolverConfig`] from a flat key-value file.
pub fn load_solver_config(path: impl AsRef<Path>) -> Result<SolverConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: RawConfig = toml::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let lambda_mode = match (raw.xi, raw.lambdas) {
        (Some(xi), None) => LambdaMode::RiskAversion(xi),
        (None, Some(l)) => LambdaMode::Explicit(l),
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "both xi and lambdas supplied; pick exactly one".into(),
            ))
        }
        (None, None) => {
            return Err(Error::Config(
                "neither xi nor lambdas supplied; pick exactly one".into(),
            ))
        }
    };
    let algorithm: Algorithm = raw.algorithm.parse()?;
    Ok(SolverConfig {
        lambda_mode,
        alpha: raw.alpha,
        k: raw.k,
        rho: raw.rho,
        epsilon: raw.epsilon,
        tau_w: raw.tau_w,
        max_iters: raw.max_iters.unwrap_or_else(|| algorithm.default_max_iters()),
        line_search_c: raw.line_search_c.unwrap_or(1e-4),
        line_search_beta: raw.line_search_beta.unwrap_or(0.5),
        seed: raw.seed,
        algorithm,
    })
}
