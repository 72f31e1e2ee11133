//! Dense real-matrix kernel.
//!
//! Every other module works in terms of [`Mat`], a dynamically sized
//! column-major `f64` matrix. Vectorization follows the column-stacking
//! convention, so `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.

use nalgebra::{DMatrix, Schur, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Numerical thresholds shared by the whole crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// LU pivots below `singular_pivot * max|m_ij|` are treated as zero.
    pub singular_pivot: f64,
    /// Relative asymmetry admitted by symmetric-only routines.
    pub symmetry: f64,
    /// A gain is stabilizing when the closed-loop abscissa is below `-stability_margin`.
    pub stability_margin: f64,
    /// Minimum `|λ_i + λ_j|` for the value Lyapunov operator to count as invertible.
    pub sigma_gap: f64,
    /// Singular values below `rank_relative * σ_max` do not count towards rank.
    pub rank_relative: f64,
    /// Eigenvalues with real part at or above this are checked by the PBH tests.
    pub pbh_real_part: f64,
    /// QR sweeps allowed per unit of matrix order.
    pub eig_sweeps_per_dim: usize,
    /// Imaginary parts smaller than this are treated as real when pairing conjugates.
    pub conjugate_pairing: f64,
    /// Smallest eigenvalue admitted for a positive definite matrix.
    pub pd_floor: f64,
    /// Semidefiniteness slack on eigenvalues of norm-scaled matrices.
    pub semidefinite: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        singular_pivot: 1e-13,
        symmetry: 1e-10,
        stability_margin: 1e-9,
        sigma_gap: 1e-9,
        rank_relative: 1e-9,
        pbh_real_part: -1e-9,
        eig_sweeps_per_dim: 100,
        conjugate_pairing: 1e-9,
        pd_floor: 1e-12,
        semidefinite: 1e-8,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}

pub const TOL: Tolerances = Tolerances::DEFAULT;

/// Eigenvalues of a square real matrix together with its spectral abscissa.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    pub abscissa: f64,
}

/// Builds a matrix from row-major entries, rejecting non-finite values.
pub fn from_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Mat> {
    if rows == 0 || cols == 0 {
        return Err(Error::DimensionMismatch(format!(
            "matrix must be non-empty, got {rows}x{cols}"
        )));
    }
    if entries.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "expected {} entries for a {rows}x{cols} matrix, got {}",
            rows * cols,
            entries.len()
        )));
    }
    let m = Mat::from_row_slice(rows, cols, entries);
    ensure_finite(&m, "matrix")?;
    Ok(m)
}

/// Row-major copy of the entries.
pub fn to_row_major(a: &Mat) -> Vec<f64> {
    a.transpose().as_slice().to_vec()
}

pub fn ensure_finite(a: &Mat, what: &'static str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn ensure_square(a: &Mat, what: &str) -> Result<()> {
    if a.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )))
    }
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// Column-stacking vectorization.
pub fn vec(a: &Mat) -> Mat {
    Mat::from_column_slice(a.len(), 1, a.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &Mat, rows: usize, cols: usize) -> Result<Mat> {
    if v.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "cannot reshape {} entries into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(Mat::from_column_slice(rows, cols, v.as_slice()))
}

/// LU factorization with partial pivoting, reusable across right-hand sides.
pub struct LinearSolver {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    pivot: f64,
    threshold: f64,
}

impl LinearSolver {
    /// Fails when a pivot is negligible relative to the largest entry of `m`.
    pub fn new(m: &Mat) -> Result<Self> {
        ensure_square(m, "system matrix")?;
        let scale = m.amax();
        let threshold = TOL.singular_pivot * scale;
        let lu = m.clone().lu();
        let pivot = lu.u().diagonal().amin();
        if scale == 0.0 || !(pivot > threshold) {
            return Err(Error::SingularMatrix { pivot, threshold });
        }
        Ok(LinearSolver {
            lu,
            pivot,
            threshold,
        })
    }

    pub fn solve(&self, rhs: &Mat) -> Result<Mat> {
        let n = self.lu.u().nrows();
        if rhs.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "rhs has {} rows, system has {n}",
                rhs.nrows()
            )));
        }
        self.lu.solve(rhs).ok_or(Error::SingularMatrix {
            pivot: self.pivot,
            threshold: self.threshold,
        })
    }
}

/// Solves `m x = rhs` by [`LinearSolver`].
pub fn solve_linear(m: &Mat, rhs: &Mat) -> Result<Mat> {
    LinearSolver::new(m)?.solve(rhs)
}

/// Full complex spectrum via Hessenberg reduction and shifted QR.
///
/// Eigenvalues are sorted by decreasing real part, then decreasing
/// imaginary part, so the output is deterministic for a fixed input.
pub fn spectrum(a: &Mat) -> Result<Spectrum> {
    ensure_square(a, "matrix")?;
    ensure_finite(a, "matrix")?;
    let n = a.nrows();
    let schur = Schur::try_new(a.clone(), f64::EPSILON, TOL.eig_sweeps_per_dim * n.max(1))
        .ok_or(Error::NoConvergence)?;
    let mut eigenvalues: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    let abscissa = eigenvalues
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Spectrum {
        eigenvalues,
        abscissa,
    })
}

pub fn spectral_abscissa(a: &Mat) -> Result<f64> {
    spectrum(a).map(|s| s.abscissa)
}

pub fn sym_part(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

pub fn asymmetry(a: &Mat) -> f64 {
    (a - a.transpose()).norm()
}

fn ensure_symmetric(a: &Mat) -> Result<()> {
    ensure_square(a, "matrix")?;
    let defect = asymmetry(a);
    if defect > TOL.symmetry * a.norm() {
        return Err(Error::NotSymmetric(defect));
    }
    Ok(())
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(a: &Mat) -> Result<Vec<f64>> {
    ensure_symmetric(a)?;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym_part(a)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

pub fn min_eig_sym(a: &Mat) -> Result<f64> {
    Ok(sym_eigenvalues(a)?[0])
}

pub fn max_eig_sym(a: &Mat) -> Result<f64> {
    Ok(*sym_eigenvalues(a)?.last().expect("non-empty"))
}

pub fn is_psd(a: &Mat, tol: f64) -> Result<bool> {
    Ok(min_eig_sym(a)? >= -tol)
}

/// Symmetric PSD square root; negative eigenvalues are clipped to zero.
pub fn sqrt_psd(a: &Mat) -> Result<Mat> {
    ensure_symmetric(a)?;
    let eig = SymmetricEigen::new(sym_part(a));
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(sym_part(&(v * Mat::from_diagonal(&roots) * v.transpose())))
}

/// `a^p` for symmetric positive definite `a`, through its eigendecomposition.
pub fn spd_power(a: &Mat, p: f64) -> Result<Mat> {
    ensure_symmetric(a)?;
    let eig = SymmetricEigen::new(sym_part(a));
    let min = eig.eigenvalues.min();
    if !(min > TOL.pd_floor) {
        return Err(Error::NotPositiveDefinite(min));
    }
    let powered = eig.eigenvalues.map(|l| l.powf(p));
    let v = &eig.eigenvectors;
    Ok(sym_part(&(v * Mat::from_diagonal(&powered) * v.transpose())))
}

/// Numerical rank of a complex matrix: singular values above
/// `rank_relative * σ_max`.
pub fn rank_complex(m: &DMatrix<Complex64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > TOL.rank_relative * smax).count()
}

pub fn to_complex(a: &Mat) -> DMatrix<Complex64> {
    a.map(|x| Complex64::new(x, 0.0))
}
