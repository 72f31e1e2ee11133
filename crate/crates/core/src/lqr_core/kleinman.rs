use crate::error::{Error, Result};
use crate::matlin::{self, Mat};

use super::{in_stabilizing_set, solve_value_lyapunov, Gain, SystemInstance};

pub const DEFAULT_KLEINMAN_TOL: f64 = 1e-10;
pub const DEFAULT_KLEINMAN_MAX_ITER: usize = 100;

/// `AᵀP + PA − PBR⁻¹BᵀP + Q`.
pub fn care_residual(sys: &SystemInstance, p: &Mat) -> Mat {
    let a = sys.a();
    let pb = p * sys.b();
    a.transpose() * p + p * a - &pb * sys.r_inv() * pb.transpose() + sys.q()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KleinmanResult {
    pub p_star: Mat,
    pub k_star: Gain,
    pub iterations: usize,
    /// `‖care_residual(P_i)‖_F` for every evaluated iterate.
    pub residual_history: Vec<f64>,
    /// Every evaluated value matrix `P_0, P_1, …`.
    pub value_history: Vec<Mat>,
}

/// Policy iteration for the continuous-time LQR: evaluate `P_i` from the
/// Lyapunov equation of `K_i`, then improve with `K_{i+1} = R⁻¹BᵀP_i`.
///
/// Stops once the CARE residual of `P_i` falls to `tol`, the gain update to
/// `tol·max(1, ‖K_i‖_F)`, or the residual is below `tol·max(1, ‖P_i‖_F)`
/// and no longer halving. Badly conditioned instances reach a round-off
/// floor that grows with `‖P‖`, so a fixed absolute threshold alone would
/// never trigger there.
pub fn kleinman(
    sys: &SystemInstance,
    k0: &Gain,
    tol: f64,
    max_iter: usize,
) -> Result<KleinmanResult> {
    let mut k = k0.clone();
    let mut residual_history = Vec::new();
    let mut value_history = Vec::new();
    for it in 0..max_iter {
        if !in_stabilizing_set(sys, &k)? {
            let abscissa = matlin::spectral_abscissa(&super::closed_loop(sys, &k)?)?;
            return Err(Error::NotStabilizing { abscissa });
        }
        let p = solve_value_lyapunov(sys, &k)?.p;
        let residual = care_residual(sys, &p).norm();
        residual_history.push(residual);
        let next = Gain::new(sys.greedy_gain(&p))?;
        let step = next.distance(&k);
        value_history.push(p);
        let p_scale = value_history.last().expect("just pushed").norm().max(1.0);
        let n_res = residual_history.len();
        let stalled = n_res >= 2 && residual > 0.5 * residual_history[n_res - 2];
        if residual <= tol
            || step <= tol * k.as_mat().norm().max(1.0)
            || (residual <= tol * p_scale && stalled)
        {
            return Ok(KleinmanResult {
                p_star: value_history.last().cloned().expect("non-empty"),
                k_star: next,
                iterations: it + 1,
                residual_history,
                value_history,
            });
        }
        k = next;
    }
    Err(Error::MaxIterExceeded(max_iter))
}
