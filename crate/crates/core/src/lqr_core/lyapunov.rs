use crate::error::{Error, Result};
use crate::matlin::{self, Mat};

use super::{closed_loop, in_sigma_set, Gain, SystemInstance};

const REFINEMENT_STEPS: usize = 2;

/// Solution of `a X + X aᵀ + l = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSolution {
    /// Symmetrized solution.
    pub x: Mat,
    /// `‖a X + X aᵀ + l‖_F` evaluated at the symmetrized `x`.
    pub residual: f64,
    /// `‖X − Xᵀ‖_F` of the raw solve, before symmetrization.
    pub raw_asymmetry: f64,
}

/// Solves `a X + X aᵀ + l = 0` for symmetric `l` through the `n² × n²`
/// Kronecker system `(I ⊗ a + a ⊗ I) vec X = −vec l`.
pub fn solve_lyapunov(a: &Mat, l: &Mat) -> Result<LyapunovSolution> {
    matlin::ensure_square(a, "Lyapunov coefficient")?;
    let n = a.nrows();
    if l.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "Lyapunov constant term must be {n}x{n}"
        )));
    }
    let eye = Mat::identity(n, n);
    let op = matlin::kron(&eye, a) + matlin::kron(a, &eye);
    let solver = matlin::LinearSolver::new(&op)?;
    let residual_of = |x: &Mat| a * x + x * a.transpose() + l;
    let raw = matlin::unvec(&solver.solve(&(-matlin::vec(l)))?, n, n)?;
    let raw_asymmetry = matlin::asymmetry(&raw);
    let mut x = matlin::sym_part(&raw);
    let mut r = residual_of(&x);
    let mut residual = r.norm();
    // iterative refinement, kept only while it helps
    for _ in 0..REFINEMENT_STEPS {
        let dx = matlin::unvec(&solver.solve(&(-matlin::vec(&r)))?, n, n)?;
        let candidate = matlin::sym_part(&(&x + dx));
        let r_new = residual_of(&candidate);
        if !(r_new.norm() < residual) {
            break;
        }
        x = candidate;
        r = r_new;
        residual = r.norm();
    }
    Ok(LyapunovSolution {
        x,
        residual,
        raw_asymmetry,
    })
}

/// Value matrix `P_K` of a gain, with solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSolution {
    pub p: Mat,
    pub lyap_residual: f64,
    /// Asymmetry of the returned `p`; zero by construction.
    pub symmetry_defect: f64,
    /// Asymmetry of the raw Kronecker solve.
    pub raw_asymmetry: f64,
}

/// Solves `A_Kᵀ P + P A_K + Q + KᵀRK = 0`.
///
/// Requires `K` in the set where `σ(A_K) ∩ σ(−A_K) = ∅`; stability is not
/// required, so `P` may be indefinite for destabilizing gains.
pub fn solve_value_lyapunov(sys: &SystemInstance, k: &Gain) -> Result<ValueSolution> {
    if !in_sigma_set(sys, k)? {
        return Err(Error::NotInSigmaSet);
    }
    let ak = closed_loop(sys, k)?;
    let km = k.as_mat();
    let l = sys.q() + km.transpose() * sys.r() * km;
    let sol = solve_lyapunov(&ak.transpose(), &matlin::sym_part(&l))?;
    Ok(ValueSolution {
        symmetry_defect: matlin::asymmetry(&sol.x),
        p: sol.x,
        lyap_residual: sol.residual,
        raw_asymmetry: sol.raw_asymmetry,
    })
}
