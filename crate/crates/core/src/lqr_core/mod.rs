//! LQR problem data, stability predicates, the Kronecker Lyapunov solver
//! and the Kleinman policy-iteration oracle.

mod kleinman;
mod lyapunov;

pub use kleinman::{
    care_residual, kleinman, KleinmanResult, DEFAULT_KLEINMAN_MAX_ITER, DEFAULT_KLEINMAN_TOL,
};
pub use lyapunov::{solve_lyapunov, solve_value_lyapunov, LyapunovSolution, ValueSolution};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matlin::{self, Mat, TOL};

/// One LQR problem: dynamics `ẋ = Ax + Bu`, stage cost `xᵀQx + uᵀRu`.
///
/// Construction checks shapes, finiteness and the definiteness of `Q` and
/// `R`. The remaining standing assumptions (nonzero `B`/`Q`,
/// stabilizability, detectability) are reported by [`check_assumptions`]
/// and enforced by [`SystemInstance::validate_assumptions`].
#[derive(Debug, Clone, PartialEq)]
pub struct SystemInstance {
    a: Mat,
    b: Mat,
    q: Mat,
    r: Mat,
    r_inv: Mat,
}

impl SystemInstance {
    pub fn new(a: Mat, b: Mat, q: Mat, r: Mat) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        if n == 0 || m == 0 {
            return Err(Error::InvalidInstance("n and m must be positive".into()));
        }
        matlin::ensure_square(&a, "A")?;
        if b.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows, A is {n}x{n}",
                b.nrows()
            )));
        }
        if q.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!("Q must be {n}x{n}")));
        }
        if r.shape() != (m, m) {
            return Err(Error::DimensionMismatch(format!("R must be {m}x{m}")));
        }
        for (mat, name) in [(&a, "A"), (&b, "B"), (&q, "Q"), (&r, "R")] {
            matlin::ensure_finite(mat, name)?;
        }
        for (mat, name) in [(&q, "Q"), (&r, "R")] {
            let defect = (mat - mat.transpose()).amax();
            if defect > TOL.symmetry {
                return Err(Error::InvalidInstance(format!(
                    "{name} is not symmetric (defect {defect:e})"
                )));
            }
        }
        let q = matlin::sym_part(&q);
        let r = matlin::sym_part(&r);
        let q_min = matlin::min_eig_sym(&q)?;
        if q_min < -TOL.symmetry {
            return Err(Error::InvalidInstance(format!(
                "Q is not positive semidefinite (min eigenvalue {q_min:e})"
            )));
        }
        let r_min = matlin::min_eig_sym(&r)?;
        if !(r_min > 0.0) {
            return Err(Error::InvalidInstance(format!(
                "R is not positive definite (min eigenvalue {r_min:e})"
            )));
        }
        let r_inv = matlin::sym_part(&matlin::solve_linear(&r, &Mat::identity(m, m))?);
        Ok(SystemInstance { a, b, q, r, r_inv })
    }

    /// Builds an instance from row-major arrays.
    pub fn from_row_major(
        n: usize,
        m: usize,
        a: &[f64],
        b: &[f64],
        q: &[f64],
        r: &[f64],
    ) -> Result<Self> {
        Self::new(
            matlin::from_row_major(n, n, a)?,
            matlin::from_row_major(n, m, b)?,
            matlin::from_row_major(n, n, q)?,
            matlin::from_row_major(m, m, r)?,
        )
    }

    /// Fails unless every standing assumption holds.
    pub fn validate_assumptions(&self) -> Result<AssumptionReport> {
        let report = check_assumptions(self)?;
        if report.holds() {
            Ok(report)
        } else {
            Err(Error::InvalidInstance(format!(
                "standing assumptions violated: {report:?}"
            )))
        }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn r(&self) -> &Mat {
        &self.r
    }

    pub fn r_inv(&self) -> &Mat {
        &self.r_inv
    }

    /// `R⁻¹Bᵀ P`, the gain induced by a value matrix.
    pub fn greedy_gain(&self, p: &Mat) -> Mat {
        &self.r_inv * self.b.transpose() * p
    }
}

/// A state-feedback gain `K` (`m × n`), control law `u = -Kx`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gain {
    k: Mat,
}

impl Gain {
    pub fn new(k: Mat) -> Result<Self> {
        matlin::ensure_finite(&k, "gain")?;
        Ok(Gain { k })
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Gain { k: Mat::zeros(m, n) }
    }

    pub fn from_row_major(m: usize, n: usize, entries: &[f64]) -> Result<Self> {
        Ok(Gain {
            k: matlin::from_row_major(m, n, entries)?,
        })
    }

    pub fn as_mat(&self) -> &Mat {
        &self.k
    }

    pub fn into_mat(self) -> Mat {
        self.k
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        matlin::to_row_major(&self.k)
    }

    pub fn distance(&self, other: &Gain) -> f64 {
        (&self.k - &other.k).norm()
    }

    fn check_shape(&self, sys: &SystemInstance) -> Result<()> {
        if self.k.shape() != (sys.m(), sys.n()) {
            return Err(Error::DimensionMismatch(format!(
                "gain is {}x{}, expected {}x{}",
                self.k.nrows(),
                self.k.ncols(),
                sys.m(),
                sys.n()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssumptionReport {
    pub stabilizable: bool,
    pub detectable: bool,
    pub b_nonzero: bool,
    pub q_nonzero: bool,
}

impl AssumptionReport {
    pub fn holds(&self) -> bool {
        self.stabilizable && self.detectable && self.b_nonzero && self.q_nonzero
    }
}

/// PBH tests at every eigenvalue of `A` with non-negative real part (up to
/// `pbh_real_part`): `[λI − A, B]` and `[λI − Aᵀ, √Q]` must have full row rank.
pub fn check_assumptions(sys: &SystemInstance) -> Result<AssumptionReport> {
    let n = sys.n();
    let sqrt_q = matlin::sqrt_psd(sys.q())?;
    let a_c = matlin::to_complex(sys.a());
    let at_c = matlin::to_complex(&sys.a().transpose());
    let b_c = matlin::to_complex(sys.b());
    let c_c = matlin::to_complex(&sqrt_q);

    let pbh_rank = |lam: Complex64, a: &DMatrix<Complex64>, other: &DMatrix<Complex64>| {
        let shifted = DMatrix::<Complex64>::identity(n, n) * lam - a;
        let mut block = DMatrix::<Complex64>::zeros(n, n + other.ncols());
        block.columns_mut(0, n).copy_from(&shifted);
        block.columns_mut(n, other.ncols()).copy_from(other);
        matlin::rank_complex(&block)
    };

    let mut stabilizable = true;
    let mut detectable = true;
    for lam in matlin::spectrum(sys.a())?.eigenvalues {
        if lam.re < TOL.pbh_real_part {
            continue;
        }
        stabilizable &= pbh_rank(lam, &a_c, &b_c) == n;
        detectable &= pbh_rank(lam, &at_c, &c_c) == n;
    }
    Ok(AssumptionReport {
        stabilizable,
        detectable,
        b_nonzero: sys.b().amax() > 0.0,
        q_nonzero: sys.q().amax() > 0.0,
    })
}

/// `A − BK`.
pub fn closed_loop(sys: &SystemInstance, k: &Gain) -> Result<Mat> {
    k.check_shape(sys)?;
    Ok(sys.a() - sys.b() * k.as_mat())
}

/// Deterministic stabilizing gain for a controllable pair (Bass's method).
///
/// With `β > −min Re λ(A)`, `W` solving `(A+βI)W + W(A+βI)ᵀ = 2BBᵀ` is
/// positive definite and `K = BᵀW⁻¹` places the spectrum of `A − BK`
/// left of `−β`.
pub fn bass_gain(sys: &SystemInstance) -> Result<Gain> {
    let n = sys.n();
    let spec = matlin::spectrum(sys.a())?;
    let min_re = spec
        .eigenvalues
        .iter()
        .map(|l| l.re)
        .fold(f64::INFINITY, f64::min);
    let beta = 1.0 + (-min_re).max(0.0);
    let shifted = sys.a() + Mat::identity(n, n) * beta;
    let bbt = sys.b() * sys.b().transpose();
    let w = solve_lyapunov(&shifted, &(bbt * -2.0))?.x;
    let min_w = matlin::min_eig_sym(&w)?;
    if min_w <= TOL.pd_floor * w.norm().max(1.0) {
        return Err(Error::NotPositiveDefinite(min_w));
    }
    let k = Gain::new(matlin::solve_linear(&w, sys.b())?.transpose())?;
    let abscissa = matlin::spectral_abscissa(&closed_loop(sys, &k)?)?;
    if abscissa < -TOL.stability_margin {
        Ok(k)
    } else {
        Err(Error::NotStabilizing { abscissa })
    }
}

/// `A − BK` is Hurwitz with margin `stability_margin`.
pub fn in_stabilizing_set(sys: &SystemInstance, k: &Gain) -> Result<bool> {
    let abscissa = matlin::spectral_abscissa(&closed_loop(sys, k)?)?;
    Ok(abscissa < -TOL.stability_margin)
}

/// No eigenvalue of `A − BK` is mirrored by an eigenvalue of `−(A − BK)`,
/// i.e. `|λ_i + λ_j| > sigma_gap` for all pairs (including `i = j`).
pub fn in_sigma_set(sys: &SystemInstance, k: &Gain) -> Result<bool> {
    let spec = matlin::spectrum(&closed_loop(sys, k)?)?;
    Ok(sigma_gap(&spec.eigenvalues) > TOL.sigma_gap)
}

pub(crate) fn sigma_gap(eigs: &[Complex64]) -> f64 {
    let mut gap = f64::INFINITY;
    for (i, a) in eigs.iter().enumerate() {
        for b in &eigs[i..] {
            gap = gap.min((a + b).norm());
        }
    }
    gap
}
