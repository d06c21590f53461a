//! Dense matrix primitives and the least squares solve used by every classifier.
//!
//! Matrices and vectors are plain `nalgebra` dense types. The functions here add
//! the checks the rest of the crate relies on (conforming shapes, finite
//! entries) and the eigendecomposition-based pseudo-inverse that makes the
//! normal equations solvable for rank-deficient designs.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest tolerated asymmetry, relative to the largest entry, before
/// [`pseudo_inverse`] refuses a matrix as non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Numerical-rank threshold used when none is given: `1e-12 * max(rows, cols)`
/// of the matrix whose normal equations are being solved.
pub fn default_tol_rel(rows: usize, cols: usize) -> f64 {
    1e-12 * rows.max(cols).max(1) as f64
}

pub fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::input(format!("{what} contains non-finite entries")))
    }
}

pub fn ensure_finite_vec(v: &Vector, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::input(format!("{what} contains non-finite entries")))
    }
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.ncols() != b.nrows() {
        return Err(Error::dim(format!(
            "cannot multiply {}x{} by {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(a * b)
}

pub fn matvec(a: &Matrix, x: &Vector) -> Result<Vector> {
    if a.ncols() != x.len() {
        return Err(Error::dim(format!(
            "cannot multiply {}x{} by vector of length {}",
            a.nrows(),
            a.ncols(),
            x.len()
        )));
    }
    Ok(a * x)
}

pub fn transpose(a: &Matrix) -> Matrix {
    a.transpose()
}

/// Stacks `top` above `bottom`. Both must have the same column count.
pub fn vstack(top: &Matrix, bottom: &Matrix) -> Result<Matrix> {
    if top.ncols() != bottom.ncols() {
        return Err(Error::dim(format!(
            "cannot stack {} columns on {} columns",
            top.ncols(),
            bottom.ncols()
        )));
    }
    let cols = top.ncols();
    let rows = top.nrows() + bottom.nrows();
    Ok(Matrix::from_fn(rows, cols, |i, j| {
        if i < top.nrows() {
            top[(i, j)]
        } else {
            bottom[(i - top.nrows(), j)]
        }
    }))
}

/// Copies the given rows of `m`, in order.
pub fn select_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub fn select_entries(v: &Vector, idx: &[usize]) -> Vector {
    Vector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Moore-Penrose pseudo-inverse of a symmetric positive semi-definite matrix.
///
/// The input is symmetrized as `(M + Mᵀ)/2` and eigendecomposed. Eigenvalues
/// at or below `tol_rel` times the largest eigenvalue (and any negative
/// round-off eigenvalues) are treated as exact zeros.
pub fn pseudo_inverse(square_sym: &Matrix, tol_rel: f64) -> Result<Matrix> {
    let n = square_sym.nrows();
    if n != square_sym.ncols() {
        return Err(Error::dim(format!(
            "pseudo-inverse needs a square matrix, got {}x{}",
            n,
            square_sym.ncols()
        )));
    }
    ensure_finite(square_sym, "matrix")?;
    if !(tol_rel >= 0.0) {
        return Err(Error::input("tol_rel must be non-negative"));
    }
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }

    let scale = square_sym.amax().max(1.0);
    let asym = (square_sym - square_sym.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::input(format!(
            "matrix is not symmetric (max |M - Mᵀ| = {asym:e})"
        )));
    }

    let sym = (square_sym + square_sym.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lambda_max = eig.eigenvalues.max();
    if lambda_max <= 0.0 {
        return Ok(Matrix::zeros(n, n));
    }
    let cutoff = tol_rel * lambda_max;

    let q = &eig.eigenvectors;
    let mut scaled = q.clone();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        let inv = if lambda > cutoff { 1.0 / lambda } else { 0.0 };
        scaled.column_mut(k).scale_mut(inv);
    }
    Ok(scaled * q.transpose())
}

/// The least squares operator `pinv(XᵀX) Xᵀ` for a design `X`.
///
/// Applying it to a target vector yields the minimum-norm least squares
/// coefficients. ICLS reuses it as a fixed linear map from stacked labels to
/// coefficients, so it is exposed on its own.
pub fn least_squares_projector(design: &Matrix) -> Result<Matrix> {
    if design.nrows() == 0 {
        return Err(Error::input("design has no rows"));
    }
    ensure_finite(design, "design")?;
    let gram = design.transpose() * design;
    let pinv = pseudo_inverse(&gram, default_tol_rel(design.nrows(), design.ncols()))?;
    Ok(pinv * design.transpose())
}

/// Minimizes `||design·β − targets||²`, returning the minimum-norm solution when
/// the normal equations are singular.
pub fn solve_normal_equations(design: &Matrix, targets: &Vector) -> Result<Vector> {
    if design.nrows() != targets.len() {
        return Err(Error::dim(format!(
            "design has {} rows but targets has {} entries",
            design.nrows(),
            targets.len()
        )));
    }
    ensure_finite_vec(targets, "targets")?;
    let projector = least_squares_projector(design)?;
    Ok(projector * targets)
}
