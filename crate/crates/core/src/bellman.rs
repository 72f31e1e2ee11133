//! The gain-parametrized Bellman error.
//!
//! For a gain `K` with value matrix `P_K` (from `A_KᵀP + PA_K + Q + KᵀRK = 0`)
//! the CARE residual
//!
//! ```text
//! M_K = AᵀP_K + P_K A − P_K B R⁻¹ Bᵀ P_K + Q
//! ```
//!
//! measures how far `P_K` is from satisfying the HJB optimality condition,
//! and the Bellman error is `e_K = −tr(M_K)`. Substituting the Lyapunov
//! equation gives the factored form `M_K = −(K − R⁻¹BᵀP_K)ᵀ R (K − R⁻¹BᵀP_K)`,
//! so `M_K ⪯ 0` and `e_K ≥ 0` wherever `P_K` exists, with equality only at
//! the optimal gain.
//!
//! The gradient on the stabilizing set is
//!
//! ```text
//! ∇e_K = −4 (RK − BᵀP_K) X_K,   A_K X_K + X_K A_Kᵀ + ½(Ã_K + Ã_Kᵀ) = 0,
//! Ã_K = A − B R⁻¹ Bᵀ P_K.
//! ```

use crate::error::{Error, Result};
use crate::lqr_core::{
    care_residual, closed_loop, solve_lyapunov, solve_value_lyapunov, Gain, SystemInstance,
    ValueSolution,
};
use crate::matlin::{self, Mat, TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct BellmanEval {
    pub e: f64,
    /// Symmetrized CARE residual `M_K` in its direct form.
    pub m_matrix: Mat,
    /// `‖M_direct − M_factored‖_F`.
    pub form_gap: f64,
    pub p: ValueSolution,
    pub k: Gain,
}

impl BellmanEval {
    pub fn m_factored(&self, sys: &SystemInstance) -> Mat {
        factored_residual(sys, self.k.as_mat(), &self.p.p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BellmanGradient {
    pub grad: Mat,
    pub x_matrix: Mat,
    pub a_tilde: Mat,
    pub x_residual: f64,
}

fn factored_residual(sys: &SystemInstance, k: &Mat, p: &Mat) -> Mat {
    let gap = k - sys.greedy_gain(p);
    -(gap.transpose() * sys.r() * &gap)
}

/// Evaluates `e_K` anywhere `P_K` is uniquely defined, including
/// destabilizing gains.
pub fn bellman_error(sys: &SystemInstance, k: &Gain) -> Result<BellmanEval> {
    let p = solve_value_lyapunov(sys, k)?;
    Ok(eval_from_value(sys, k, p))
}

fn eval_from_value(sys: &SystemInstance, k: &Gain, p: ValueSolution) -> BellmanEval {
    let m_matrix = matlin::sym_part(&care_residual(sys, &p.p));
    let form_gap = (&m_matrix - factored_residual(sys, k.as_mat(), &p.p)).norm();
    BellmanEval {
        e: -m_matrix.trace(),
        m_matrix,
        form_gap,
        p,
        k: k.clone(),
    }
}

/// `∇e_K`, defined only for stabilizing `K`.
pub fn bellman_gradient(sys: &SystemInstance, k: &Gain) -> Result<BellmanGradient> {
    let ak = stabilizing_closed_loop(sys, k)?;
    let p = solve_value_lyapunov(sys, k)?;
    gradient_from_value(sys, k, &ak, &p.p)
}

/// Error and gradient sharing one value solve.
pub fn bellman_error_and_gradient(
    sys: &SystemInstance,
    k: &Gain,
) -> Result<(BellmanEval, BellmanGradient)> {
    let ak = stabilizing_closed_loop(sys, k)?;
    let p = solve_value_lyapunov(sys, k)?;
    let grad = gradient_from_value(sys, k, &ak, &p.p)?;
    Ok((eval_from_value(sys, k, p), grad))
}

pub(crate) fn stabilizing_closed_loop(sys: &SystemInstance, k: &Gain) -> Result<Mat> {
    let ak = closed_loop(sys, k)?;
    let abscissa = matlin::spectral_abscissa(&ak)?;
    if abscissa < -TOL.stability_margin {
        Ok(ak)
    } else {
        Err(Error::NotStabilizing { abscissa })
    }
}

fn gradient_from_value(
    sys: &SystemInstance,
    k: &Gain,
    ak: &Mat,
    p: &Mat,
) -> Result<BellmanGradient> {
    let b = sys.b();
    let a_tilde = sys.a() - b * sys.r_inv() * b.transpose() * p;
    // A_K multiplies from the left here, unlike the value equation.
    let x = solve_lyapunov(ak, &matlin::sym_part(&a_tilde))?;
    let km = k.as_mat();
    let grad = (sys.r() * km - b.transpose() * p) * &x.x * -4.0;
    Ok(BellmanGradient {
        grad,
        x_matrix: x.x,
        a_tilde,
        x_residual: x.residual,
    })
}

fn two_state_denominator(k1: f64, k2: f64) -> f64 {
    k1 * k1 + 2.0 * k1 * k2 + 4.0 * k1 + k2 * k2 + 4.0 * k2 + 3.0
}

/// Explicit rational form of `e_K` for [`crate::examples::two_state_example`].
///
/// Returns `None` where the denominator `(k₁ + k₂ + 1)(k₁ + k₂ + 3)` vanishes.
pub fn bellman_error_closed_form_2d(k1: f64, k2: f64) -> Option<f64> {
    let den = two_state_denominator(k1, k2);
    if den == 0.0 {
        return None;
    }
    let (a, b) = (k1, k2);
    let num = a.powi(6) + 4.0 * a.powi(5) * b + 12.0 * a.powi(5)
        + 7.0 * a.powi(4) * b * b + 34.0 * a.powi(4) * b + 49.0 * a.powi(4)
        + 8.0 * a.powi(3) * b.powi(3) + 40.0 * a.powi(3) * b * b + 84.0 * a.powi(3) * b
        + 72.0 * a.powi(3)
        + 7.0 * a * a * b.powi(4) + 36.0 * a * a * b.powi(3) + 58.0 * a * a * b * b
        + 32.0 * a * a * b + 29.0 * a * a
        + 4.0 * a * b.powi(5) + 28.0 * a * b.powi(4) + 60.0 * a * b.powi(3)
        + 16.0 * a * b * b - 52.0 * a * b - 8.0 * a
        + b.powi(6) + 10.0 * b.powi(5) + 37.0 * b.powi(4) + 56.0 * b.powi(3)
        + 17.0 * b * b - 22.0 * b + 5.0;
    Some(num / (2.0 * den * den))
}
