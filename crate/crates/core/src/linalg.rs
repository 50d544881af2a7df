//! Small dense complex linear algebra on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Largest accepted condition estimate for a Hermitian system.
pub const MAX_CONDITION: f64 = 1e12;

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = Complex64::new(0.0, 0.0);
    for n in 0..a.ncols() {
        for m in 0..a.nrows() {
            acc += a[(m, n)] * b[(n, m)];
        }
    }
    acc
}

/// Real trace.
pub fn trace_re(a: &CMatrix) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

/// Largest absolute entry of `A - A^H`.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for m in 0..a.nrows() {
        for n in 0..a.ncols() {
            worst = worst.max((a[(m, n)] - a[(n, m)].conj()).norm());
        }
    }
    worst
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let mut values: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Cholesky factorization of a Hermitian positive-definite matrix.
#[derive(Clone, Debug)]
pub struct HermitianFactor {
    chol: Cholesky<Complex64, Dyn>,
    condition: f64,
}

impl HermitianFactor {
    /// Factorizes `a`; `user` only labels the error.
    pub fn new(a: &CMatrix, user: usize) -> Result<Self> {
        let chol = Cholesky::new(a.clone()).ok_or(Error::IllConditioned {
            user,
            condition: f64::INFINITY,
        })?;
        // (max L_ii / min L_ii)^2 is a lower bound on the 2-norm condition number.
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .map(|z| z.re)
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
        let condition = (hi / lo).powi(2);
        if !(condition <= MAX_CONDITION) {
            return Err(Error::IllConditioned { user, condition });
        }
        Ok(Self { chol, condition })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// `A^{-1} B`.
    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        self.chol.solve(b)
    }

    pub fn solve_vector(&self, b: &CVector) -> CVector {
        self.chol.solve(b)
    }
}

/// A factor `A` with `A A^H = R` for a Hermitian PSD `R`, via eigendecomposition
/// with eigenvalues above `-tol * scale` clipped to zero.
pub fn psd_factor(r: &CMatrix, tol: f64) -> Result<CMatrix> {
    let scale = r.diagonal().iter().map(|z| z.re.abs()).fold(0.0f64, f64::max);
    let eig = SymmetricEigen::new(r.clone());
    let floor = -tol * scale.max(f64::MIN_POSITIVE);
    let mut factor = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < floor {
            return Err(Error::Factorization(format!(
                "matrix is not positive semi-definite (eigenvalue {lambda:.3e}, scale {scale:.3e})"
            )));
        }
        let s = lambda.max(0.0).sqrt();
        factor.column_mut(j).scale_mut(s);
    }
    Ok(factor)
}
