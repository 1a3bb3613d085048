//! Largest-k norm, its subgradient, and the cardinality gap driving the
//! sparsity penalty.
//!
//! Tie-breaking at the k-th boundary always selects the lower index, so
//! every function here is deterministic. Zero entries are never selected
//! ahead of nonzeros; a zero that is forced into the top-k (fewer than k
//! nonzeros) contributes 0 to the subgradient.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Sign vector and selected support of the largest-k norm at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgradientResult {
    /// Entries in {−1, 0, +1}; at most k nonzero.
    pub s: DVector<f64>,
    /// The k selected indices (0-based), in selection order.
    pub support: Vec<usize>,
}

fn check_k(w: &DVector<f64>, k: usize) -> Result<()> {
    if k < 1 || k > w.len() {
        return Err(Error::InvalidArg(format!(
            "k must satisfy 1 <= k <= {}, got {k}",
            w.len()
        )));
    }
    Ok(())
}

/// Indices ordered by decreasing |w_i|, lower index first on ties.
fn indices_by_magnitude(w: &DVector<f64>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..w.len()).collect();
    idx.sort_by(|&a, &b| {
        w[b].abs()
            .partial_cmp(&w[a].abs())
            .unwrap()
            .then(a.cmp(&b))
    });
    idx
}

/// Sum of the k largest |w_i|.
///
/// The selected magnitudes are summed in increasing index order, which makes
/// `largest_k_norm(w, k)` bit-identical to `sᵀw` for the subgradient at `w`
/// and to `‖w‖₁` when k = N.
pub fn largest_k_norm(w: &DVector<f64>, k: usize) -> Result<f64> {
    check_k(w, k)?;
    let mut selected: Vec<usize> = indices_by_magnitude(w)[..k].to_vec();
    selected.sort_unstable();
    Ok(selected.iter().map(|&i| w[i].abs()).sum())
}

/// The two-step subgradient of the largest-k norm: sort by magnitude, then
/// take sign(w_i) on the k selected entries and 0 elsewhere.
pub fn subgrad_largest_k(w: &DVector<f64>, k: usize) -> Result<SubgradientResult> {
    check_k(w, k)?;
    let order = indices_by_magnitude(w);
    let mut s = DVector::zeros(w.len());
    let support: Vec<usize> = order[..k].to_vec();
    for &i in &support {
        // sign(0) = 0 keeps sᵀw = ‖w‖_[k] and stays in the subdifferential
        s[i] = if w[i] > 0.0 {
            1.0
        } else if w[i] < 0.0 {
            -1.0
        } else {
            0.0
        };
    }
    Ok(SubgradientResult { s, support })
}

/// ‖w‖₁ − ‖w‖_[k], computed as the sum of |w_i| over the non-selected
/// indices so that it is exactly 0 whenever ‖w‖₀ ≤ k.
pub fn cardinality_gap(w: &DVector<f64>, k: usize) -> Result<f64> {
    check_k(w, k)?;
    let order = indices_by_magnitude(w);
    let mut tail: Vec<usize> = order[k..].to_vec();
    tail.sort_unstable();
    Ok(tail.iter().map(|&i| w[i].abs()).sum())
}

/// Count of entries with |w_i| > threshold.
pub fn hard_support_count(w: &DVector<f64>, threshold: f64) -> usize {
    w.iter().filter(|v| v.abs() > threshold).count()
}
