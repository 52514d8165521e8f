//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num::complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Largest `|a_ij - a_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn require_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidParameter(format!("expected a square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    let a = asymmetry(m);
    let scale = m.amax().max(1.0);
    if a > tol * scale {
        return Err(Error::NotSymmetric(a));
    }
    Ok(())
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// decreasing order; column `i` of the returned matrix pairs with value `i`.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).0.last().copied().unwrap_or(0.0)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).0.first().copied().unwrap_or(0.0)
}

/// Symmetric square root of a PSD matrix. Eigenvalues in `[-tol * scale, 0)`
/// are clamped to zero; anything more negative is rejected.
pub fn psd_sqrt(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    require_symmetric(m, 1e-10)?;
    let (values, vectors) = sym_eigen(m);
    let scale = values.first().map(|v| v.abs()).unwrap_or(0.0).max(1.0);
    let mut roots = Vec::with_capacity(values.len());
    for &v in &values {
        if v < -tol * scale {
            return Err(Error::NotPsd(v));
        }
        roots.push(v.max(0.0).sqrt());
    }
    let diag = DMatrix::from_diagonal(&DVector::from_vec(roots));
    Ok(&vectors * diag * vectors.transpose())
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

pub fn spectral_norm_real(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Spectral norm of a symmetric matrix, i.e. its largest absolute eigenvalue.
pub fn sym_norm(m: &DMatrix<f64>) -> f64 {
    let (values, _) = sym_eigen(m);
    values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Bilinear pairing `sum_i a_i b_i`, no conjugation.
pub fn pairing(a: &CVector, b: &CVector) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Draw `N(0, root * root^T)` given a square root of the covariance.
pub fn gaussian_from_root<R: Rng + ?Sized>(root: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_fn(root.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    root * z
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn psd_sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = psd_sqrt(&m, 1e-12).unwrap();
        assert_abs_diff_eq!((&r * &r - &m).amax(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn psd_sqrt_handles_singular_and_rejects_indefinite() {
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let r = psd_sqrt(&singular, 1e-12).unwrap();
        assert_abs_diff_eq!((&r * &r - &singular).amax(), 0.0, epsilon = 1e-12);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(psd_sqrt(&bad, 1e-12), Err(Error::NotPsd(_))));
    }

    #[test]
    fn eigen_sorted_descending() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let (v, _) = sym_eigen(&m);
        assert_eq!(v, vec![3.0, 2.0, 1.0]);
    }
}
