use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{max_eigenvalue, min_eigenvalue, require_symmetric};

/// Both bracketed terms of the Rosenthal bound scaled by `constant`, which is
/// a placeholder and not the sharp `C(p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RosenthalTerms {
    pub l2: f64,
    pub lp: f64,
    pub p: f64,
    pub constant: f64,
}

impl RosenthalTerms {
    /// `C(p) (l2 + lp)`.
    pub fn bound(&self) -> f64 {
        self.constant * (self.l2 + self.lp)
    }
}

/// `((sum E X_j^2)^{1/2}, (sum E|X_j|^p)^{1/p})` with `C(p) = 1`.
pub fn rosenthal_terms(second_moments: &[f64], p_moments: &[f64], p: f64) -> Result<RosenthalTerms> {
    rosenthal_terms_with(second_moments, p_moments, p, 1.0)
}

pub fn rosenthal_terms_with(second_moments: &[f64], p_moments: &[f64], p: f64, constant: f64) -> Result<RosenthalTerms> {
    if !(p > 2.0) {
        return Err(Error::InvalidParameter(format!("Rosenthal needs p > 2, got {p}")));
    }
    if second_moments.iter().chain(p_moments).any(|m| !(*m >= 0.0)) {
        return Err(Error::InvalidParameter("moments must be nonnegative".into()));
    }
    if !(constant > 0.0) {
        return Err(Error::InvalidParameter("the constant must be positive".into()));
    }
    Ok(RosenthalTerms { l2: second_moments.iter().sum::<f64>().sqrt(), lp: p_moments.iter().sum::<f64>().powf(1.0 / p), p, constant })
}

/// Greedy grouping of consecutive covariance matrices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grouping {
    /// `0 = m_0 < m_1 < ... < m_s = b`.
    pub boundaries: Vec<usize>,
    pub block_min_eigen: Vec<f64>,
    pub block_max_eigen: Vec<f64>,
    /// `max_k lambda_max(B_k) / (100 M^2)`.
    pub c_eff: f64,
    pub c: f64,
    pub upper_ok: bool,
    /// Largest `lambda_max(cov_i) / M^2` among the inputs.
    pub max_item_ratio: f64,
}

/// Close a block as soon as the smallest eigenvalue of its accumulated
/// covariance reaches `100 M^2`; a short remainder joins the last block.
pub fn zaitsev_block_grouping(covariances: &[DMatrix<f64>], m: f64, c: f64) -> Result<Grouping> {
    if covariances.is_empty() || !(m > 0.0) || !(c >= 1.0) {
        return Err(Error::InvalidParameter("need covariances, M > 0 and C >= 1".into()));
    }
    let d = covariances[0].nrows();
    for cov in covariances {
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::InvalidParameter("covariances must share one dimension".into()));
        }
        require_symmetric(cov, 1e-10)?;
    }
    let target = 100.0 * m * m;
    let mut boundaries = vec![0];
    let mut acc = DMatrix::<f64>::zeros(d, d);
    for (i, cov) in covariances.iter().enumerate() {
        acc += cov;
        if min_eigenvalue(&acc) >= target * (1.0 - 1e-12) {
            boundaries.push(i + 1);
            acc.fill(0.0);
        }
    }
    if boundaries.len() == 1 {
        return Err(Error::Infeasible(format!("total covariance never reaches 100 M^2 = {target} in every direction")));
    }
    let b = covariances.len();
    if *boundaries.last().expect("non-empty") != b {
        *boundaries.last_mut().expect("non-empty") = b;
    }
    let mut block_min_eigen = Vec::new();
    let mut block_max_eigen = Vec::new();
    for w in boundaries.windows(2) {
        let sum = covariances[w[0]..w[1]].iter().fold(DMatrix::<f64>::zeros(d, d), |s, c| s + c);
        block_min_eigen.push(min_eigenvalue(&sum));
        block_max_eigen.push(max_eigenvalue(&sum));
    }
    let c_eff = block_max_eigen.iter().fold(0.0f64, |a, &x| a.max(x)) / target;
    let max_item_ratio = covariances.iter().map(|c| max_eigenvalue(c) / (m * m)).fold(0.0, f64::max);
    Ok(Grouping { boundaries, block_min_eigen, block_max_eigen, c_eff, c, upper_ok: c_eff <= c * (1.0 + 1e-12), max_item_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalars(v: &[f64]) -> Vec<DMatrix<f64>> {
        v.iter().map(|&x| DMatrix::from_element(1, 1, x)).collect()
    }

    #[test]
    fn rosenthal_substitution() {
        let n = 50;
        let t = rosenthal_terms(&vec![1.0; n], &vec![1.0; n], 4.0).unwrap();
        assert!((t.l2 - (n as f64).sqrt()).abs() < 1e-12);
        assert!((t.lp - (n as f64).powf(0.25)).abs() < 1e-12);
        let t = rosenthal_terms(&[4.0], &[81.0], 4.0).unwrap();
        assert!((t.l2 - 2.0).abs() < 1e-15 && (t.lp - 3.0).abs() < 1e-12);
        assert!(rosenthal_terms(&[-1.0], &[1.0], 4.0).is_err());
        assert!(rosenthal_terms(&[1.0], &[1.0], 2.0).is_err());
    }

    #[test]
    fn grouping_examples() {
        let m = 1.5;
        let g = zaitsev_block_grouping(&scalars(&[100.0 * m * m; 4]), m, 1.0).unwrap();
        assert_eq!(g.boundaries, vec![0, 1, 2, 3, 4]);
        assert!((g.c_eff - 1.0).abs() < 1e-12 && g.upper_ok);

        let g = zaitsev_block_grouping(&scalars(&[25.0 * m * m; 12]), m, 1.0).unwrap();
        assert_eq!(g.boundaries, vec![0, 4, 8, 12]);

        let mut v = vec![0.0];
        v.extend([25.0 * m * m; 8]);
        let g = zaitsev_block_grouping(&scalars(&v), m, 2.0).unwrap();
        assert_eq!(g.boundaries, vec![0, 5, 9]);

        assert!(matches!(zaitsev_block_grouping(&scalars(&[1.0, 1.0]), 1.0, 1.0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn remainder_joins_last_block() {
        let g = zaitsev_block_grouping(&scalars(&[60.0, 60.0, 60.0]), 1.0, 2.0).unwrap();
        assert_eq!(g.boundaries, vec![0, 3]);
        assert!((g.c_eff - 1.8).abs() < 1e-12 && g.upper_ok);
    }
}
