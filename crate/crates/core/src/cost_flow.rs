//! LQR cost `f_K = tr(P_K Σ₀)` and its (natural) gradient, used as the
//! baseline against the Bellman-error flow.

use crate::bellman::stabilizing_closed_loop;
use crate::error::{Error, Result};
use crate::lqr_core::{solve_lyapunov, solve_value_lyapunov, Gain, SystemInstance, ValueSolution};
use crate::matlin::{self, Mat, TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct CostEval {
    pub f: f64,
    pub p: ValueSolution,
    /// Solution of `A_K Y + Y A_Kᵀ + Σ₀ = 0`.
    pub y_matrix: Mat,
    pub y_residual: f64,
    pub sigma0: Mat,
}

fn check_sigma0(sys: &SystemInstance, sigma0: &Mat) -> Result<()> {
    let n = sys.n();
    if sigma0.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!("sigma0 must be {n}x{n}")));
    }
    matlin::ensure_finite(sigma0, "sigma0")?;
    let min = matlin::min_eig_sym(sigma0)?;
    if min < -TOL.symmetry * (1.0 + sigma0.norm()) {
        return Err(Error::InvalidConfig(format!(
            "sigma0 is not positive semidefinite (min eigenvalue {min:e})"
        )));
    }
    Ok(())
}

/// Cost of a stabilizing gain averaged over initial states with second
/// moment `sigma0` (pass `I` for the state-independent form).
pub fn lqr_cost(sys: &SystemInstance, k: &Gain, sigma0: &Mat) -> Result<CostEval> {
    check_sigma0(sys, sigma0)?;
    let ak = stabilizing_closed_loop(sys, k)?;
    let p = solve_value_lyapunov(sys, k)?;
    let y = solve_lyapunov(&ak, &matlin::sym_part(sigma0))?;
    Ok(CostEval {
        f: (&p.p * sigma0).trace(),
        p,
        y_matrix: y.x,
        y_residual: y.residual,
        sigma0: sigma0.clone(),
    })
}

fn gradient_from_eval(sys: &SystemInstance, k: &Gain, eval: &CostEval) -> Mat {
    let km = k.as_mat();
    (sys.r() * km - sys.b().transpose() * &eval.p.p) * &eval.y_matrix * 2.0
}

/// `∇f_K = 2 (RK − BᵀP_K) Y_K`.
pub fn lqr_gradient(sys: &SystemInstance, k: &Gain, sigma0: &Mat) -> Result<Mat> {
    let eval = lqr_cost(sys, k, sigma0)?;
    Ok(gradient_from_eval(sys, k, &eval))
}

/// Cost, plain gradient, and the natural direction `∇f_K · Y_K^{−γ}` from a
/// single pair of Lyapunov solves.
pub fn lqr_cost_with_gradients(
    sys: &SystemInstance,
    k: &Gain,
    sigma0: &Mat,
    gamma: Option<f64>,
) -> Result<(CostEval, Mat, Option<Mat>)> {
    let eval = lqr_cost(sys, k, sigma0)?;
    let grad = gradient_from_eval(sys, k, &eval);
    let natural = match gamma {
        Some(g) => Some(precondition(&grad, &eval.y_matrix, g)?),
        None => None,
    };
    Ok((eval, grad, natural))
}

/// `∇f_K · Y_K^{−γ}`.
///
/// `γ = 1` solves `G Y = ∇f` directly; other exponents go through the
/// eigendecomposition of `Y`. `γ = 0` returns the plain gradient.
pub fn natural_gradient(sys: &SystemInstance, k: &Gain, sigma0: &Mat, gamma: f64) -> Result<Mat> {
    let eval = lqr_cost(sys, k, sigma0)?;
    let grad = gradient_from_eval(sys, k, &eval);
    precondition(&grad, &eval.y_matrix, gamma)
}

/// General-exponent path of [`natural_gradient`], also for `γ = 1`.
pub fn natural_gradient_eig(
    sys: &SystemInstance,
    k: &Gain,
    sigma0: &Mat,
    gamma: f64,
) -> Result<Mat> {
    let eval = lqr_cost(sys, k, sigma0)?;
    let grad = gradient_from_eval(sys, k, &eval);
    check_gamma(gamma)?;
    ensure_pd(&eval.y_matrix)?;
    Ok(grad * matlin::spd_power(&eval.y_matrix, -gamma)?)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "gamma must be finite and non-negative, got {gamma}"
        )))
    }
}

fn ensure_pd(y: &Mat) -> Result<()> {
    let min = matlin::min_eig_sym(y)?;
    if min > TOL.pd_floor {
        Ok(())
    } else {
        Err(Error::NotPositiveDefinite(min))
    }
}

fn precondition(grad: &Mat, y: &Mat, gamma: f64) -> Result<Mat> {
    check_gamma(gamma)?;
    ensure_pd(y)?;
    if gamma == 1.0 {
        // G Y = ∇f  <=>  Yᵀ Gᵀ = ∇fᵀ
        Ok(matlin::solve_linear(&y.transpose(), &grad.transpose())?.transpose())
    } else if gamma == 0.0 {
        Ok(grad.clone())
    } else {
        Ok(grad * matlin::spd_power(y, -gamma)?)
    }
}

fn two_state_denominator(k1: f64, k2: f64) -> f64 {
    k1 * k1 + 2.0 * k1 * k2 + 4.0 * k1 + k2 * k2 + 4.0 * k2 + 3.0
}

/// Exact `tr(P_K)` (i.e. `f_K` with `Σ₀ = I`) for
/// [`crate::examples::two_state_example`]; `None` on the singular lines
/// `k₁ + k₂ + 1 = 0` and `k₁ + k₂ + 3 = 0`.
pub fn lqr_cost_closed_form_2d(k1: f64, k2: f64) -> Option<f64> {
    let den = two_state_denominator(k1, k2);
    if den == 0.0 {
        return None;
    }
    Some((2.0 * k1.powi(3) + two_state_cost_tail(k1, k2)) / (2.0 * den))
}

/// Variant of [`lqr_cost_closed_form_2d`] whose numerator is
/// `2·(k₁³ + tail)` instead of `2k₁³ + tail`. It equals `2·tr(P_K)` at the
/// origin but is not proportional to `tr(P_K)` elsewhere.
pub fn lqr_cost_doubled_form_2d(k1: f64, k2: f64) -> Option<f64> {
    let den = two_state_denominator(k1, k2);
    if den == 0.0 {
        return None;
    }
    Some(2.0 * (k1.powi(3) + two_state_cost_tail(k1, k2)) / (2.0 * den))
}

fn two_state_cost_tail(k1: f64, k2: f64) -> f64 {
    2.0 * k1 * k1 * k2 + 5.0 * k1 * k1 + 2.0 * k1 * k2 * k2 + 4.0 * k1 * k2 + 4.0 * k1
        + 2.0 * k2.powi(3)
        + 7.0 * k2 * k2
        + 2.0 * k2
        + 5.0
}
