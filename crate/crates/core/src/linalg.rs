//! Small dense linear-algebra helpers shared by the tuning pipeline.
//!
//! Everything here works on `nalgebra` dynamic matrices. Symmetric
//! eigenvalues come from `SymmetricEigen`; the Cholesky factorization is
//! hand-rolled so a failure can report the offending pivot.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance used to decide whether a matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

pub fn is_square(a: &DMatrix<f64>) -> bool {
    a.nrows() == a.ncols()
}

pub fn is_symmetric(a: &DMatrix<f64>) -> bool {
    if !is_square(a) {
        return false;
    }
    let scale = a.amax().max(1.0);
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return false;
            }
        }
    }
    true
}

/// `(A + Aᵀ)/2`; removes round-off asymmetry before a symmetric solver.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let mut vals: Vec<f64> = SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    vals.sort_by(f64::total_cmp);
    vals
}

pub fn lambda_min(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).first().copied().unwrap_or(f64::NAN)
}

pub fn lambda_max(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).last().copied().unwrap_or(f64::NAN)
}

/// Fails with [`Error::AssumptionFailure`] unless `a` is symmetric positive definite.
pub fn require_pd(a: &DMatrix<f64>, name: &'static str) -> Result<()> {
    if !is_symmetric(a) {
        return Err(Error::InvalidArgument(format!("{name} is not symmetric")));
    }
    let lo = lambda_min(a);
    if !(lo > 0.0) {
        return Err(Error::AssumptionFailure {
            matrix: name,
            eigenvalue: lo,
        });
    }
    Ok(())
}

/// Upper-triangular Cholesky factor `U` with `UᵀU = A`.
///
/// Only the upper triangle of `a` is read.
pub fn cholesky_upper(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !is_square(a) {
        return Err(Error::Shape(format!(
            "Cholesky needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    let mut u = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= u[(k, j)] * u[(k, j)];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::Decomposition {
                pivot: j,
                value: diag,
            });
        }
        let ujj = diag.sqrt();
        u[(j, j)] = ujj;
        for i in (j + 1)..n {
            let mut s = a[(j, i)];
            for k in 0..j {
                s -= u[(k, j)] * u[(k, i)];
            }
            u[(j, i)] = s / ujj;
        }
    }
    Ok(u)
}

/// Inverse of a non-singular upper-triangular matrix by back substitution.
pub fn upper_triangular_inverse(u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = u.nrows();
    let mut inv = DMatrix::<f64>::zeros(n, n);
    for col in 0..n {
        for i in (0..=col).rev() {
            let rhs = if i == col { 1.0 } else { 0.0 };
            let mut s = rhs;
            for k in (i + 1)..=col {
                s -= u[(i, k)] * inv[(k, col)];
            }
            if u[(i, i)] == 0.0 {
                return Err(Error::Singular("triangular factor"));
            }
            inv[(i, col)] = s / u[(i, i)];
        }
    }
    Ok(inv)
}

/// Eigenvalues of `A⁻¹B` for symmetric `B` and symmetric positive definite `A`,
/// ascending, via the congruence `U⁻ᵀ B U⁻¹` where `A = UᵀU`.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "pencil members differ in shape: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let u = cholesky_upper(a)?;
    let u_inv = upper_triangular_inverse(&u)?;
    let c = u_inv.transpose() * b * &u_inv;
    Ok(sym_eigenvalues(&c))
}

pub fn frobenius_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let denom = b.norm().max(f64::MIN_POSITIVE);
    (a - b).norm() / denom
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.amax()
}

pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DMatrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

pub fn diag(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_row_slice(values))
}
