//! Sample moment estimation and portfolio-moment evaluation.
//!
//! The co-skewness tensor Φ is stored dense as an N×N² matrix and the
//! co-kurtosis tensor Ψ as N×N³, flattened by the convention frozen in
//! [`col_index2`] / [`col_index3`]. Every consumer of these tensors must use
//! the same convention. Moments use the 1/T divisor throughout.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::data_io::ReturnPanel;
use crate::error::{Error, Result};

/// Mean vector and second/third/fourth co-moment tensors of a return panel.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentModel {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    /// N×N² co-skewness, column (j,l) flattened as j·N + l (0-based).
    phi: DMatrix<f64>,
    /// N×N³ co-kurtosis, column (j,l,m) flattened as j·N² + l·N + m (0-based).
    psi: DMatrix<f64>,
}

impl MomentModel {
    pub fn n_assets(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }
}

/// Documented 1-based flattening of a co-skewness column index:
/// (j, l) ↦ (j−1)·N + l.
pub fn col_index2(j: usize, l: usize, n: usize) -> Result<usize> {
    for idx in [j, l] {
        if idx < 1 || idx > n {
            return Err(Error::InvalidArg(format!(
                "index {idx} out of range [1, {n}]"
            )));
        }
    }
    Ok((j - 1) * n + l)
}

/// Documented 1-based flattening of a co-kurtosis column index:
/// (j, l, m) ↦ (j−1)·N² + (l−1)·N + m.
pub fn col_index3(j: usize, l: usize, m: usize, n: usize) -> Result<usize> {
    for idx in [j, l, m] {
        if idx < 1 || idx > n {
            return Err(Error::InvalidArg(format!(
                "index {idx} out of range [1, {n}]"
            )));
        }
    }
    Ok((j - 1) * n * n + (l - 1) * n + m)
}

/// w ⊗ w, length N².
pub fn kron2(w: &DVector<f64>) -> DVector<f64> {
    let n = w.len();
    DVector::from_fn(n * n, |idx, _| w[idx / n] * w[idx % n])
}

/// w ⊗ w ⊗ w, length N³.
pub fn kron3(w: &DVector<f64>) -> DVector<f64> {
    let n = w.len();
    DVector::from_fn(n * n * n, |idx, _| {
        w[idx / (n * n)] * w[(idx / n) % n] * w[idx % n]
    })
}

/// Estimate μ, Σ, Φ, Ψ from a return panel with the 1/T divisor.
///
/// With `r_t` the centered rows: Σ = (1/T)·Σ_t r_t r_tᵀ,
/// Φ = (1/T)·Σ_t r_t (r_tᵀ ⊗ r_tᵀ), Ψ = (1/T)·Σ_t r_t (r_tᵀ ⊗ r_tᵀ ⊗ r_tᵀ).
/// The accumulation runs over t in panel order.
pub fn estimate_moments(panel: &ReturnPanel) -> Result<MomentModel> {
    let t = panel.period_count();
    let n = panel.asset_count();
    if t < 2 {
        return Err(Error::InvalidArg(format!(
            "need at least 2 periods to estimate moments, got {t}"
        )));
    }
    let returns = panel.returns();

    let mut mu = DVector::zeros(n);
    for i in 0..t {
        mu += returns.row(i).transpose();
    }
    mu /= t as f64;

    let mut sigma = DMatrix::zeros(n, n);
    let mut phi = DMatrix::zeros(n, n * n);
    let mut psi = DMatrix::zeros(n, n * n * n);
    for i in 0..t {
        let r = returns.row(i).transpose() - &mu;
        let rr = kron2(&r);
        let rrr = kron3(&r);
        sigma.ger(1.0, &r, &r, 1.0);
        phi.ger(1.0, &r, &rr, 1.0);
        psi.ger(1.0, &r, &rrr, 1.0);
    }
    let inv_t = 1.0 / t as f64;
    sigma *= inv_t;
    phi *= inv_t;
    psi *= inv_t;

    // exact symmetry of the rank-one accumulation can be lost to rounding
    let sym = (&sigma + sigma.transpose()) * 0.5;
    sigma = sym;

    Ok(MomentModel { mu, sigma, phi, psi })
}

/// Evaluate (φ1, φ2, φ3, φ4) = (wᵀμ, wᵀΣw, wᵀΦ(w⊗w), wᵀΨ(w⊗w⊗w)).
pub fn portfolio_moments(model: &MomentModel, w: &DVector<f64>) -> Result<(f64, f64, f64, f64)> {
    let n = model.n_assets();
    if w.len() != n {
        return Err(Error::Dim {
            what: "portfolio weights",
            expected: n,
            got: w.len(),
        });
    }
    let phi1 = model.mu.dot(w);
    let phi2 = (w.transpose() * &model.sigma * w)[(0, 0)];
    let ww = kron2(w);
    let phi3 = w.dot(&(&model.phi * &ww));
    let www = kron3(w);
    let phi4 = w.dot(&(&model.psi * &www));
    Ok((phi1, phi2, phi3, phi4))
}

/// Write a moment model to a text artifact for caching between runs.
///
/// Layout: a `hmfolio-moments v1` magic line, `n = <N>`, then four sections
/// (`mu`, `sigma`, `phi`, `psi`) each holding row-major entries, one matrix
/// row per line, space-separated, shortest round-tripping decimal form.
pub fn save_moment_model(model: &MomentModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str("hmfolio-moments v1\n");
    out.push_str(&format!("n = {}\n", model.n_assets()));
    let write_matrix = |out: &mut String, name: &str, m: &DMatrix<f64>| {
        out.push_str(name);
        out.push('\n');
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    };
    let mu_mat = DMatrix::from_fn(1, model.mu.len(), |_, j| model.mu[j]);
    write_matrix(&mut out, "mu", &mu_mat);
    write_matrix(&mut out, "sigma", &model.sigma);
    write_matrix(&mut out, "phi", &model.phi);
    write_matrix(&mut out, "psi", &model.psi);
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Read back an artifact produced by [`save_moment_model`].
pub fn load_moment_model(path: impl AsRef<Path>) -> Result<MomentModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let fmt_err = |msg: &str| Error::Format {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    let mut lines = text.lines();
    if lines.next() != Some("hmfolio-moments v1") {
        return Err(fmt_err("bad magic line"));
    }
    let n: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("n = "))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| fmt_err("bad dimension line"))?;
    let mut read_matrix = |name: &str, rows: usize, cols: usize| -> Result<DMatrix<f64>> {
        if lines.next() != Some(name) {
            return Err(fmt_err(&format!("missing section {name}")));
        }
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            let line = lines
                .next()
                .ok_or_else(|| fmt_err(&format!("truncated section {name}")))?;
            let mut count = 0;
            for (j, tok) in line.split_whitespace().enumerate() {
                if j >= cols {
                    return Err(fmt_err(&format!("row too long in section {name}")));
                }
                m[(i, j)] = tok
                    .parse()
                    .map_err(|_| fmt_err(&format!("bad number in section {name}")))?;
                count += 1;
            }
            if count != cols {
                return Err(fmt_err(&format!("row too short in section {name}")));
            }
        }
        Ok(m)
    };
    let mu_mat = read_matrix("mu", 1, n)?;
    let sigma = read_matrix("sigma", n, n)?;
    let phi = read_matrix("phi", n, n * n)?;
    let psi = read_matrix("psi", n, n * n * n)?;
    Ok(MomentModel {
        mu: DVector::from_fn(n, |j, _| mu_mat[(0, j)]),
        sigma,
        phi,
        psi,
    })
}
