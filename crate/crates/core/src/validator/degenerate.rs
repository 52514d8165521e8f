use nalgebra::DMatrix;
use rayon::prelude::*;

use super::TestReport;
use crate::covariance::{spectral_sigma2, TailPolicy};
use crate::error::{Error, Result};
use crate::linalg::{require_symmetric, sym_eigen, sym_norm};
use crate::models::{orbit_windows, ProcessModel};
use crate::rng::path_rng;

/// Orthogonal splitting `R^d = E + F` with `Sigma^2` nondegenerate on `E`
/// and zero on `F`. Bases are stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DegenerateSplit {
    pub e_basis: DMatrix<f64>,
    pub f_basis: DMatrix<f64>,
    pub rank: usize,
    pub eigenvalues: Vec<f64>,
    /// `|E diag(lambda) E^T - Sigma^2|_max`.
    pub reconstruction_error: f64,
}

impl DegenerateSplit {
    /// Coordinates of `x` in the `E` basis.
    pub fn project_e(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rank).map(|c| self.e_basis.column(c).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn project_f(&self, x: &[f64]) -> Vec<f64> {
        (0..self.f_basis.ncols()).map(|c| self.f_basis.column(c).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }
}

/// Eigenvalues above `tol` span `E`, the rest span `F`.
pub fn degenerate_split(sigma2: &DMatrix<f64>, tol: f64) -> Result<DegenerateSplit> {
    require_symmetric(sigma2, 1e-10)?;
    let d = sigma2.nrows();
    let (values, vectors) = sym_eigen(sigma2);
    let rank = values.iter().filter(|&&v| v > tol).count();
    let e_basis = vectors.columns(0, rank).into_owned();
    let f_basis = vectors.columns(rank, d - rank).into_owned();
    let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(rank, values[..rank].iter().copied()));
    let rebuilt = &e_basis * diag * e_basis.transpose();
    let reconstruction_error = (rebuilt - sigma2).amax();
    Ok(DegenerateSplit { e_basis, f_basis, rank, eigenvalues: values, reconstruction_error })
}

/// For `f = g - g o T` under the doubling map: checks `f` against the
/// transfer function along each path, the telescoping bound
/// `sup_k |S_k| <= 2 sup|g|` and `Sigma^2 ~ 0`.
pub fn coboundary_probe(model: &ProcessModel, n: usize, replicas: usize, seed: u64, sigma2_tol: f64) -> Result<TestReport> {
    let ProcessModel::Doubling(map) = model else {
        return Err(Error::InvalidModel("the coboundary probe needs a doubling model with a transfer function".into()));
    };
    let g = map.transfer().ok_or_else(|| Error::InvalidModel("no transfer function g supplied with f".into()))?;
    let f = map.observable();
    let d = f.dim();
    let start = std::time::Instant::now();
    let bound = 2.0 * g.sup_bound().iter().map(|b| b * b).sum::<f64>().sqrt();
    let per_path: Vec<(f64, f64)> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let w = orbit_windows(n + 1, &mut path_rng(seed, r));
            let mut fv = vec![0.0; d];
            let mut g0 = vec![0.0; d];
            let mut g1 = vec![0.0; d];
            let mut s = vec![0.0; d];
            let (mut mismatch, mut sup) = (0.0f64, 0.0f64);
            for k in 0..n {
                f.eval_phase(w[k], &mut fv);
                g.eval_phase(w[k], &mut g0);
                g.eval_phase(w[k + 1], &mut g1);
                for c in 0..d {
                    mismatch = mismatch.max((fv[c] - (g0[c] - g1[c])).abs());
                    s[c] += fv[c];
                }
                sup = sup.max(s.iter().map(|x| x * x).sum::<f64>().sqrt());
            }
            (mismatch, sup)
        })
        .collect();
    let mismatch = per_path.iter().map(|p| p.0).fold(0.0, f64::max);
    let sup = per_path.iter().map(|p| p.1).fold(0.0, f64::max);
    let series = spectral_sigma2(model, TailPolicy::default())?;
    let sigma2_norm = sym_norm(&series.sigma2);

    let mut report = TestReport::new("coboundary_probe", model.kind_name(), replicas, seed);
    report.stat("n", n as f64);
    report.stat("sup_abs_partial_sum", sup);
    report.stat("telescoping_bound", bound);
    report.stat("transfer_mismatch", mismatch);
    report.stat("sigma2_norm", sigma2_norm);
    report.stat("sigma2_tol", sigma2_tol);
    report.statistic = sup;
    report.threshold = bound;
    let identity_ok = mismatch <= 1e-9;
    if !identity_ok {
        report.notes.push(format!("f differs from g - g o T by up to {mismatch:.3e} on sampled points"));
    }
    report.pass = identity_ok && sup <= bound + 1e-9 && sigma2_norm <= sigma2_tol;
    report.runtime = start.elapsed();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::catalog;

    #[test]
    fn split_examples() {
        let s = degenerate_split(&DMatrix::zeros(2, 2), 1e-12).unwrap();
        assert_eq!((s.rank, s.f_basis.ncols()), (0, 2));
        let s = degenerate_split(&DMatrix::identity(3, 3), 1e-12).unwrap();
        assert_eq!((s.rank, s.f_basis.ncols()), (3, 0));
        let s = degenerate_split(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), 1e-12).unwrap();
        assert_eq!(s.rank, 1);
        assert!((s.e_basis[(0, 0)].abs() - 1.0).abs() < 1e-12 && (s.f_basis[(1, 0)].abs() - 1.0).abs() < 1e-12);
        assert!(s.reconstruction_error <= 1e-10);
        assert!(degenerate_split(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]), 1e-12).is_err());
    }

    #[test]
    fn coboundary_telescopes() {
        let r = coboundary_probe(&catalog::doubling_coboundary(16), 1 << 12, 8, 3, 1e-8).unwrap();
        assert!(r.pass, "{:?}", r.statistics);
        assert!(r.statistics["sup_abs_partial_sum"] <= 2.0 + 1e-9);
        assert!(coboundary_probe(&catalog::doubling_cos(16), 16, 2, 3, 1e-8).is_err());
    }
}
