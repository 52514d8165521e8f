use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{gaussian_from_root, min_eigenvalue, psd_sqrt, require_symmetric, sym_norm};

/// Slack added to the minimal inflation making `M` positive semidefinite.
pub const DEFAULT_DELTA_SLACK: f64 = 1e-9;

/// Joint gaussian law of `(S, Z)` built by inflating `S` with an independent
/// `W ~ N(0, M)`, `M = cov_Z + delta I - cov_S`, and conditioning back down:
/// `E = S + W`, `Z = A E + R` with `A = cov_Z (cov_Z + delta I)^{-1}` and `R`
/// an independent gaussian with the Schur-complement covariance.
#[derive(Debug, Clone)]
pub struct VarianceMatching {
    pub cov_s: DMatrix<f64>,
    pub cov_z: DMatrix<f64>,
    pub delta: f64,
    pub inflation: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub residual: DMatrix<f64>,
    root_s: DMatrix<f64>,
    root_w: DMatrix<f64>,
    root_r: DMatrix<f64>,
}

/// `delta = max(0, -lambda_min(cov_Z - cov_S)) + 1e-9`.
pub fn default_delta(cov_s: &DMatrix<f64>, cov_z: &DMatrix<f64>) -> f64 {
    (-min_eigenvalue(&(cov_z - cov_s))).max(0.0) + DEFAULT_DELTA_SLACK
}

pub fn variance_matching_coupling(cov_s: &DMatrix<f64>, cov_z: &DMatrix<f64>, delta: f64) -> Result<VarianceMatching> {
    let d = cov_s.nrows();
    if cov_s.ncols() != d || cov_z.nrows() != d || cov_z.ncols() != d || d == 0 {
        return Err(Error::InvalidParameter("covariances must be square and of one size".into()));
    }
    if !(delta >= 0.0) {
        return Err(Error::InvalidParameter("delta must be nonnegative".into()));
    }
    require_symmetric(cov_s, 1e-10)?;
    require_symmetric(cov_z, 1e-10)?;
    let scale = sym_norm(cov_s).max(sym_norm(cov_z)).max(1.0);
    let tol = 1e-12 * scale;
    let root_s = psd_sqrt(cov_s, tol)?;
    psd_sqrt(cov_z, tol)?;
    let ident = DMatrix::<f64>::identity(d, d);
    let inflation = cov_z + &ident * delta - cov_s;
    let root_w = psd_sqrt(&inflation, tol)?;
    let k = cov_z + &ident * delta;
    let k_inv = k.clone().try_inverse().ok_or(Error::Singular)?;
    if min_eigenvalue(&k) <= tol {
        return Err(Error::Singular);
    }
    let gain = cov_z * &k_inv;
    let mut residual = cov_z - &gain * cov_z;
    residual = (&residual + residual.transpose()) * 0.5;
    let root_r = psd_sqrt(&residual, tol)?;
    Ok(VarianceMatching { cov_s: cov_s.clone(), cov_z: cov_z.clone(), delta, inflation, gain, residual, root_s, root_w, root_r })
}

impl VarianceMatching {
    pub fn dim(&self) -> usize {
        self.cov_s.nrows()
    }

    /// `cov(S, Z) = cov_S A^T`.
    pub fn cross_covariance(&self) -> DMatrix<f64> {
        &self.cov_s * self.gain.transpose()
    }

    /// `cov(Z) = A (cov_S + M) A^T + R`, which equals `cov_Z` algebraically.
    pub fn z_covariance(&self) -> DMatrix<f64> {
        &self.gain * (&self.cov_s + &self.inflation) * self.gain.transpose() + &self.residual
    }

    /// Covariance of `(S, Z)` as a `2d x 2d` block matrix.
    pub fn joint_covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut j = DMatrix::zeros(2 * d, 2 * d);
        let cross = self.cross_covariance();
        j.view_mut((0, 0), (d, d)).copy_from(&self.cov_s);
        j.view_mut((d, d), (d, d)).copy_from(&self.z_covariance());
        j.view_mut((0, d), (d, d)).copy_from(&cross);
        j.view_mut((d, 0), (d, d)).copy_from(&cross.transpose());
        j
    }

    /// `E|S - Z|^2 = tr cov_S + tr cov_Z - 2 tr cov(S, Z)`.
    pub fn mean_square_gap(&self) -> f64 {
        self.cov_s.trace() + self.z_covariance().trace() - 2.0 * self.cross_covariance().trace()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (DVector<f64>, DVector<f64>) {
        let s = gaussian_from_root(&self.root_s, rng);
        let e = &s + gaussian_from_root(&self.root_w, rng);
        let z = &self.gain * e + gaussian_from_root(&self.root_r, rng);
        (s, z)
    }

    /// `Z` for a given `S` (any law with covariance `cov_S`).
    pub fn couple<R: Rng + ?Sized>(&self, s: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let e = s + gaussian_from_root(&self.root_w, rng);
        &self.gain * e + gaussian_from_root(&self.root_r, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Purpose};

    fn one(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    #[test]
    fn scalar_examples() {
        let vm = variance_matching_coupling(&one(1.0), &one(1.0), 0.0).unwrap();
        assert!(vm.mean_square_gap().abs() < 1e-15);
        let vm = variance_matching_coupling(&one(1.0), &one(1.2), 0.0).unwrap();
        assert!((vm.inflation[(0, 0)] - 0.2).abs() < 1e-15);
        assert!((vm.gain[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((vm.mean_square_gap() - 0.2).abs() < 1e-12);
        let vm = variance_matching_coupling(&one(1.0), &one(0.9), 0.2).unwrap();
        assert!((vm.inflation[(0, 0)] - 0.1).abs() < 1e-15);
        assert!((vm.mean_square_gap() - (1.9 - 1.8 / 1.1)).abs() < 1e-12);
        let mut rng = stream_rng(11, Purpose::Coupling, 0);
        let n = 400_000;
        let mc = (0..n)
            .map(|_| {
                let (s, z) = vm.sample(&mut rng);
                (s - z).norm_squared()
            })
            .sum::<f64>()
            / n as f64;
        assert!((mc / vm.mean_square_gap() - 1.0).abs() < 0.03);
    }

    #[test]
    fn marginals_reproduced() {
        let cs = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let cz = DMatrix::from_row_slice(2, 2, &[1.0, -0.3, -0.3, 1.5]);
        let vm = variance_matching_coupling(&cs, &cz, default_delta(&cs, &cz)).unwrap();
        assert!((vm.z_covariance() - &cz).amax() < 1e-10);
        assert!(min_eigenvalue(&vm.joint_covariance()) > -1e-10);
    }

    #[test]
    fn errors() {
        assert!(matches!(variance_matching_coupling(&one(1.0), &one(0.5), 0.0), Err(Error::NotPsd(_))));
        assert!(matches!(variance_matching_coupling(&one(0.0), &one(0.0), 0.0), Err(Error::Singular)));
    }
}
