//! Dense symmetric kernels shared by the solver and the formulations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const EIGEN_MAX_SWEEPS: usize = 10_000;

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
///
/// The input is symmetrized before factorization. Columns of the returned
/// matrix are the matching orthonormal eigenvectors.
pub fn eigendecompose(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "eigendecompose expects a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let sym = symmetrize(m);
    let eig = sym
        .try_symmetric_eigen(f64::EPSILON, EIGEN_MAX_SWEEPS)
        .ok_or_else(|| Error::Numerical("symmetric eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Euclidean projection of a symmetric matrix onto the PSD cone.
pub fn psd_project(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (values, vectors) = eigendecompose(m)?;
    let n = values.len();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let lam = values[k];
        if lam <= 0.0 {
            continue;
        }
        let q = vectors.column(k);
        out.ger(lam, &q, &q, 1.0);
    }
    Ok(symmetrize(&out))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    let (values, _) = eigendecompose(m)?;
    Ok(values.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.l())
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Number of entries stored for a symmetric matrix of order `n`.
pub const fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Position of entry `(i, j)` with `i >= j` in the column-major lower triangle.
pub fn svec_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i >= j && i < n);
    j * n - j * (j + 1) / 2 + i
}

/// Matrix order for an svec of the given length.
pub fn svec_order(len: usize) -> Option<usize> {
    let n = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    (svec_len(n) == len).then_some(n)
}

/// Column-major lower triangle with off-diagonal entries scaled by √2.
pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(svec_len(n));
    for j in 0..n {
        for i in j..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out.push(if i == j { v } else { v * std::f64::consts::SQRT_2 });
        }
    }
    out
}

/// Inverse of [`svec`].
pub fn smat(v: &[f64], n: usize) -> DMatrix<f64> {
    debug_assert_eq!(v.len(), svec_len(n));
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            if i == j {
                m[(i, i)] = v[k];
            } else {
                let x = v[k] * std::f64::consts::FRAC_1_SQRT_2;
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
            k += 1;
        }
    }
    m
}
