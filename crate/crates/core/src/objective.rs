//! The four-moment objective, its convex/non-convex split, analytic
//! derivatives, the curvature bound for the DC decomposition, and the
//! penalized objective.
//!
//! Summation order is fixed: f_cvx = (−λ1)·φ1 + λ2·φ2, f_ncvx = (−λ3)·φ3 +
//! λ4·φ4, and f = f_cvx + f_ncvx, so the split always recombines exactly.

use nalgebra::{DMatrix, DVector};

use crate::data_io::{resolve_lambdas, SolverConfig};
use crate::error::{Error, Result};
use crate::moments::{kron2, kron3, MomentModel};
use crate::sparsity::cardinality_gap;

/// Resolved numeric parameters of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// (λ1, λ2, λ3, λ4), all strictly positive.
    pub lambdas: [f64; 4],
    /// Box bound α > 0.
    pub alpha: f64,
    /// Cardinality target, 1 ≤ k < N.
    pub k: usize,
    /// Penalty coefficient ρ ≥ 0.
    pub rho: f64,
    /// Curvature constant of the DC decomposition; an upper bound on the
    /// spectral radius of ∇²f_ncvx over the box, certified by construction
    /// via [`tau_dc_bound`].
    pub tau_dc: f64,
    /// Strong-convexity modulus of the quadratic surrogate.
    pub tau_w: f64,
}

impl ModelParams {
    /// Resolve a configuration against a moment model: expand the moment
    /// weights and compute τ_dc from the curvature bound.
    pub fn from_config(config: &SolverConfig, model: &MomentModel) -> Result<Self> {
        config.validate(model.n_assets())?;
        let lambdas = resolve_lambdas(&config.lambda_mode)?;
        let mut params = Self {
            lambdas,
            alpha: config.alpha,
            k: config.k,
            rho: config.rho,
            tau_dc: 0.0,
            tau_w: config.tau_w,
        };
        params.tau_dc = tau_dc_bound(model, &params);
        Ok(params)
    }

    /// Same parameters with the sparsity penalty turned off.
    pub fn without_penalty(&self) -> Self {
        Self { rho: 0.0, ..self.clone() }
    }
}

fn check_dim(model: &MomentModel, w: &DVector<f64>) -> Result<()> {
    if w.len() != model.n_assets() {
        return Err(Error::Dim {
            what: "portfolio weights",
            expected: model.n_assets(),
            got: w.len(),
        });
    }
    Ok(())
}

/// (f_cvx, f_ncvx) with f_cvx = −λ1φ1 + λ2φ2 and f_ncvx = −λ3φ3 + λ4φ4.
pub fn eval_f_split(
    model: &MomentModel,
    params: &ModelParams,
    w: &DVector<f64>,
) -> Result<(f64, f64)> {
    check_dim(model, w)?;
    let [l1, l2, l3, l4] = params.lambdas;
    let phi1 = model.mu().dot(w);
    let phi2 = (w.transpose() * model.sigma() * w)[(0, 0)];
    let ww = kron2(w);
    let phi3 = w.dot(&(model.phi() * &ww));
    let www = kron3(w);
    let phi4 = w.dot(&(model.psi() * &www));
    Ok(((-l1) * phi1 + l2 * phi2, (-l3) * phi3 + l4 * phi4))
}

/// f(w) = −λ1φ1 + λ2φ2 − λ3φ3 + λ4φ4.
pub fn eval_f(model: &MomentModel, params: &ModelParams, w: &DVector<f64>) -> Result<f64> {
    let (cvx, ncvx) = eval_f_split(model, params, w)?;
    Ok(cvx + ncvx)
}

/// (∇f_cvx, ∇f_ncvx) = (−λ1μ + 2λ2Σw, −3λ3Φ(w⊗w) + 4λ4Ψ(w⊗w⊗w)).
pub fn grad_f_split(
    model: &MomentModel,
    params: &ModelParams,
    w: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dim(model, w)?;
    let [l1, l2, l3, l4] = params.lambdas;
    let g_cvx = model.mu() * (-l1) + (model.sigma() * w) * (2.0 * l2);
    let ww = kron2(w);
    let www = kron3(w);
    let g_ncvx = (model.phi() * ww) * (-3.0 * l3) + (model.psi() * www) * (4.0 * l4);
    Ok((g_cvx, g_ncvx))
}

/// ∇f = ∇f_cvx + ∇f_ncvx.
pub fn grad_f(model: &MomentModel, params: &ModelParams, w: &DVector<f64>) -> Result<DVector<f64>> {
    let (g_cvx, g_ncvx) = grad_f_split(model, params, w)?;
    Ok(g_cvx + g_ncvx)
}

/// Relative symmetry tolerance for the assembled non-convex Hessian. A
/// defect above this signals a flattening-convention bug somewhere.
const HESS_SYM_TOL: f64 = 1e-10;

/// ∇²f_ncvx(w) = −6λ3·Φ(I⊗w) + 12λ4·Ψ(I⊗w⊗w), symmetrized after assembly.
///
/// Errors if the pre-symmetrization defect exceeds the relative tolerance.
pub fn hess_ncvx(
    model: &MomentModel,
    params: &ModelParams,
    w: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    check_dim(model, w)?;
    let n = model.n_assets();
    let [_, _, l3, l4] = params.lambdas;
    let ww = kron2(w);
    let phi = model.phi();
    let psi = model.psi();

    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            // column j of Φ(I⊗w): Σ_l Φ[i, j·N + l]·w_l
            let mut a = 0.0;
            for l in 0..n {
                a += phi[(i, j * n + l)] * w[l];
            }
            // column j of Ψ(I⊗w⊗w): Σ_c Ψ[i, j·N² + c]·(w⊗w)_c
            let mut b = 0.0;
            let base = j * n * n;
            for c in 0..n * n {
                b += psi[(i, base + c)] * ww[c];
            }
            h[(i, j)] = -6.0 * l3 * a + 12.0 * l4 * b;
        }
    }

    let defect = (&h - h.transpose()).amax();
    let tol = HESS_SYM_TOL * h.amax().max(1.0);
    if defect > tol {
        return Err(Error::Asymmetric { defect, tol });
    }
    let sym = (&h + h.transpose()) * 0.5;
    Ok(sym)
}

/// Right-hand side of the curvature bound:
/// 6αλ3·max_i Σ_j |Φ_ij| + 12α²λ4·max_i Σ_j |Ψ_ij|.
pub fn tau_dc_bound(model: &MomentModel, params: &ModelParams) -> f64 {
    let [_, _, l3, l4] = params.lambdas;
    let alpha = params.alpha;
    let row_abs_sum_max = |m: &DMatrix<f64>| {
        (0..m.nrows())
            .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0f64, f64::max)
    };
    6.0 * alpha * l3 * row_abs_sum_max(model.phi())
        + 12.0 * alpha * alpha * l4 * row_abs_sum_max(model.psi())
}

/// f_p(w) = f(w) + ρ(‖w‖₁ − ‖w‖_[k]); equals f exactly on k-sparse points.
pub fn eval_fp(model: &MomentModel, params: &ModelParams, w: &DVector<f64>) -> Result<f64> {
    let f = eval_f(model, params, w)?;
    let gap = cardinality_gap(w, params.k)?;
    Ok(f + params.rho * gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::ReturnPanel;
    use crate::moments::estimate_moments;
    use crate::sparsity::largest_k_norm;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_params(k: usize, rho: f64, alpha: f64) -> ModelParams {
        ModelParams {
            lambdas: [1.0, 1.0, 1.0, 1.0],
            alpha,
            k,
            rho,
            tau_dc: 0.0,
            tau_w: 1e-10,
        }
    }

    fn two_point_model() -> MomentModel {
        let m = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let panel = ReturnPanel::new(m, vec!["A".into()]).unwrap();
        estimate_moments(&panel).unwrap()
    }

    fn random_model(n: usize, t: usize, seed: u64) -> MomentModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(t, n, |_, _| rng.random_range(-0.5..0.5));
        let ids = (0..n).map(|j| format!("A{j}")).collect();
        estimate_moments(&ReturnPanel::new(m, ids).unwrap()).unwrap()
    }

    fn fd_grad(
        model: &MomentModel,
        params: &ModelParams,
        w: &DVector<f64>,
        h: f64,
    ) -> DVector<f64> {
        DVector::from_fn(w.len(), |i, _| {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[i] += h;
            wm[i] -= h;
            (eval_f(model, params, &wp).unwrap() - eval_f(model, params, &wm).unwrap()) / (2.0 * h)
        })
    }

    #[test]
    fn zero_point_values() {
        let model = random_model(3, 30, 2);
        let params = unit_params(1, 0.0, 1.0);
        let w = DVector::zeros(3);
        assert_eq!(eval_f(&model, &params, &w).unwrap(), 0.0);
        let g = grad_f(&model, &params, &w).unwrap();
        assert_eq!(g, -model.mu().clone());
        let h = hess_ncvx(&model, &params, &w).unwrap();
        assert_eq!(h.amax(), 0.0);
    }

    #[test]
    fn scalar_two_point_instance() {
        // μ=0, Σ=1, Φ=0, Ψ=1 at w=1: f = 0 + 1 − 0 + 1 = 2,
        // ∇f = 0 + 2 − 0 + 4 = 6, ∇²f_ncvx = −0 + 12, τ_dc = 0 + 12.
        let model = two_point_model();
        let params = unit_params(1, 0.0, 1.0);
        let w = DVector::from_column_slice(&[1.0]);
        assert_relative_eq!(eval_f(&model, &params, &w).unwrap(), 2.0);
        assert_relative_eq!(grad_f(&model, &params, &w).unwrap()[0], 6.0);
        assert_relative_eq!(hess_ncvx(&model, &params, &w).unwrap()[(0, 0)], 12.0);
        assert_relative_eq!(tau_dc_bound(&model, &params), 12.0);
    }

    #[test]
    fn split_recombines_exactly() {
        let model = random_model(4, 40, 9);
        let params = unit_params(2, 0.0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let w = DVector::from_fn(4, |_, _| rng.random_range(-0.5..0.5));
            let (cvx, ncvx) = eval_f_split(&model, &params, &w).unwrap();
            assert_eq!(eval_f(&model, &params, &w).unwrap(), cvx + ncvx);
            let (gc, gn) = grad_f_split(&model, &params, &w).unwrap();
            assert_eq!(grad_f(&model, &params, &w).unwrap(), gc + gn);
        }
    }

    #[test]
    fn f_matches_panel_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let t = 25;
        let n = 3;
        let m = DMatrix::from_fn(t, n, |_, _| rng.random_range(-0.5..0.5));
        let ids = (0..n).map(|j| format!("A{j}")).collect();
        let panel = ReturnPanel::new(m.clone(), ids).unwrap();
        let model = estimate_moments(&panel).unwrap();
        let params = ModelParams {
            lambdas: [1.0, 2.0, 0.5, 1.5],
            ..unit_params(1, 0.0, 1.0)
        };
        let w = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));

        let mut mu = DVector::zeros(n);
        for i in 0..t {
            mu += m.row(i).transpose();
        }
        mu /= t as f64;
        let port: Vec<f64> = (0..t).map(|i| w.dot(&(m.row(i).transpose() - &mu))).collect();
        let moment = |q: i32| port.iter().map(|x| x.powi(q)).sum::<f64>() / t as f64;
        let want = -1.0 * w.dot(&mu) + 2.0 * moment(2) - 0.5 * moment(3) + 1.5 * moment(4);
        assert_relative_eq!(
            eval_f(&model, &params, &w).unwrap(),
            want,
            max_relative = 1e-10
        );
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let model = random_model(4, 40, 7);
        let params = ModelParams {
            lambdas: [1.0, 1.5, 0.8, 1.2],
            ..unit_params(2, 0.0, 1.0)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let w = DVector::from_fn(4, |_, _| rng.random_range(-0.5..0.5));
            let g = grad_f(&model, &params, &w).unwrap();
            let fd = fd_grad(&model, &params, &w, 1e-5);
            let err = (&g - &fd).amax();
            assert!(err <= 1e-6 * (1.0 + g.amax()), "err={err}");
        }
    }

    #[test]
    fn hessian_matches_finite_differences_of_ncvx_grad() {
        let model = random_model(4, 40, 13);
        let params = unit_params(2, 0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = 1e-5;
        for _ in 0..5 {
            let w = DVector::from_fn(4, |_, _| rng.random_range(-0.5..0.5));
            let hess = hess_ncvx(&model, &params, &w).unwrap();
            for i in 0..4 {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[i] += h;
                wm[i] -= h;
                let (_, gp) = grad_f_split(&model, &params, &wp).unwrap();
                let (_, gm) = grad_f_split(&model, &params, &wm).unwrap();
                let col = (gp - gm) / (2.0 * h);
                let err = (hess.column(i) - col).amax();
                assert!(err <= 1e-5 * (1.0 + hess.amax()), "err={err}");
            }
        }
    }

    #[test]
    fn tau_dc_zero_without_higher_moments() {
        let model = random_model(3, 20, 3);
        let params = ModelParams {
            lambdas: [1.0, 1.0, 1e-300, 1e-300],
            ..unit_params(1, 0.0, 1.0)
        };
        assert!(tau_dc_bound(&model, &params) < 1e-290);
    }

    #[test]
    fn tau_dc_dominates_sampled_spectral_radii() {
        let model = random_model(5, 60, 19);
        let params = unit_params(2, 0.0, 0.4);
        let tau = tau_dc_bound(&model, &params);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..1000 {
            let w = DVector::from_fn(5, |_, _| rng.random_range(-params.alpha..params.alpha));
            let h = hess_ncvx(&model, &params, &w).unwrap();
            let spectral = h.symmetric_eigen().eigenvalues.amax();
            assert!(spectral <= tau * (1.0 + 1e-12), "{spectral} > {tau}");
        }
    }

    #[test]
    fn dc_shift_makes_hessian_psd() {
        let model = random_model(4, 50, 23);
        let mut params = unit_params(2, 0.0, 0.5);
        params.tau_dc = tau_dc_bound(&model, &params);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let w = DVector::from_fn(4, |_, _| rng.random_range(-params.alpha..params.alpha));
            let h = hess_ncvx(&model, &params, &w).unwrap();
            let shifted = DMatrix::identity(4, 4) * params.tau_dc - h;
            let min_eig = shifted.symmetric_eigen().eigenvalues.min();
            assert!(min_eig >= -1e-8 * params.tau_dc);
        }
    }

    #[test]
    fn fp_equals_f_on_sparse_points() {
        let model = random_model(4, 30, 29);
        let params = unit_params(2, 0.7, 1.0);
        let w = DVector::from_column_slice(&[0.6, 0.4, 0.0, 0.0]);
        assert_eq!(
            eval_fp(&model, &params, &w).unwrap(),
            eval_f(&model, &params, &w).unwrap()
        );
    }

    #[test]
    fn fp_uniform_weights() {
        let n = 4;
        let model = random_model(n, 30, 33);
        let params = unit_params(2, 0.8, 1.0);
        let w = DVector::from_element(n, 1.0 / n as f64);
        let fp = eval_fp(&model, &params, &w).unwrap();
        let f = eval_f(&model, &params, &w).unwrap();
        assert_relative_eq!(fp, f + 0.8 * 0.5, max_relative = 1e-14);
    }

    #[test]
    fn fp_matches_independent_sort() {
        let model = random_model(5, 40, 37);
        let params = unit_params(3, 0.4, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let w = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
            let fp = eval_fp(&model, &params, &w).unwrap();
            let f = eval_f(&model, &params, &w).unwrap();
            let l1: f64 = w.iter().map(|x| x.abs()).sum();
            let topk = largest_k_norm(&w, 3).unwrap();
            assert_relative_eq!(fp, f + 0.4 * (l1 - topk), max_relative = 1e-12, epsilon = 1e-14);
            assert!(fp >= f);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let model = random_model(3, 20, 41);
        let params = unit_params(1, 0.0, 1.0);
        let w = DVector::zeros(4);
        assert!(eval_f(&model, &params, &w).is_err());
        assert!(grad_f(&model, &params, &w).is_err());
        assert!(hess_ncvx(&model, &params, &w).is_err());
    }
}
