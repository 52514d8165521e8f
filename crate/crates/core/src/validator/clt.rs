use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use super::TestReport;
use crate::error::{Error, Result};
use crate::linalg::{gaussian_from_root, psd_sqrt, require_symmetric};
use crate::models::ProcessModel;
use crate::rng::{path_rng, stream_rng, Purpose};

#[derive(Debug, Clone)]
pub struct CltConfig {
    pub alpha: f64,
    /// Projection directions; the defaults are the coordinate axes plus
    /// diagonal directions, at least three once `d >= 2`.
    pub directions: Option<Vec<Vec<f64>>>,
    pub permutations: usize,
    /// Sample size per side in the energy-distance test.
    pub energy_points: usize,
    /// Directions with `v^T Sigma^2 v` at or below this are degenerate.
    pub kernel_tol: f64,
}

impl Default for CltConfig {
    fn default() -> Self {
        Self { alpha: 0.01, directions: None, permutations: 200, energy_points: 500, kernel_tol: 1e-10 }
    }
}

/// Asymptotic Kolmogorov tail `P(sqrt(n) D_n > x)` with Stephens' correction.
pub fn kolmogorov_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_statistic(sorted: &[f64], sd: f64) -> f64 {
    let normal = Normal::new(0.0, sd).expect("positive sd");
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = normal.cdf(x);
            (c - i as f64 / n).max((i + 1) as f64 / n - c)
        })
        .fold(0.0, f64::max)
}

fn default_directions(d: usize) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    if d >= 2 {
        let s = (d as f64).sqrt();
        dirs.push(vec![1.0 / s; d]);
        let mut anti = vec![0.0; d];
        anti[0] = std::f64::consts::FRAC_1_SQRT_2;
        anti[1] = -std::f64::consts::FRAC_1_SQRT_2;
        dirs.push(anti);
    }
    dirs
}

fn energy_test(x: &[Vec<f64>], y: &[Vec<f64>], permutations: usize, seed: u64) -> f64 {
    let m = x.len();
    let pooled: Vec<&Vec<f64>> = x.iter().chain(y).collect();
    let n = pooled.len();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let d: f64 = pooled[i].iter().zip(pooled[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let total: f64 = dist.iter().sum();
    let energy = |labels: &[usize]| -> f64 {
        let (a, b) = labels.split_at(m);
        let within = |s: &[usize]| -> f64 { s.iter().map(|&i| s.iter().map(|&j| dist[i * n + j]).sum::<f64>()).sum() };
        (total - 2.0 * within(a) - 2.0 * within(b)) / (m * m) as f64
    };
    let mut labels: Vec<usize> = (0..n).collect();
    let observed = energy(&labels);
    let mut rng = stream_rng(seed, Purpose::Permutation, 0);
    let mut exceed = 0usize;
    for _ in 0..permutations {
        labels.shuffle(&mut rng);
        if energy(&labels) >= observed {
            exceed += 1;
        }
    }
    (1 + exceed) as f64 / (1 + permutations) as f64
}

/// Compare `(S_n - n a) / sqrt(n)` over `replicas` paths with `N(0, Sigma^2)`:
/// Kolmogorov-Smirnov on each direction, plus an energy-distance permutation
/// test against a reference gaussian sample when `d >= 2`.
pub fn clt_test(
    model: &ProcessModel,
    n: usize,
    replicas: usize,
    sigma2: &DMatrix<f64>,
    a: &[f64],
    seed: u64,
    cfg: &CltConfig,
) -> Result<TestReport> {
    let d = model.dim();
    if !n.is_power_of_two() {
        return Err(Error::InvalidParameter(format!("n = {n} must be a power of 2")));
    }
    if replicas < 10 || sigma2.nrows() != d || a.len() != d {
        return Err(Error::InvalidParameter("need >= 10 replicas and Sigma^2, a matching the model dimension".into()));
    }
    require_symmetric(sigma2, 1e-10)?;
    let directions = cfg.directions.clone().unwrap_or_else(|| default_directions(d));
    let mut variances = Vec::new();
    for v in &directions {
        if v.len() != d {
            return Err(Error::InvalidParameter("direction of wrong dimension".into()));
        }
        let var: f64 = (0..d).map(|i| (0..d).map(|j| v[i] * sigma2[(i, j)] * v[j]).sum::<f64>()).sum();
        if var <= cfg.kernel_tol {
            return Err(Error::InvalidParameter(format!(
                "Sigma^2 vanishes along {v:?}; split off the degenerate directions and pass directions spanning E"
            )));
        }
        variances.push(var);
    }
    let start = std::time::Instant::now();
    let scale = (n as f64).sqrt();
    let ys: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let values = model.sample_values(n, &mut path_rng(seed, r))?;
            let mut s = vec![0.0; d];
            for row in values.chunks_exact(d) {
                for (acc, x) in s.iter_mut().zip(row) {
                    *acc += x;
                }
            }
            Ok(s.iter().zip(a).map(|(x, m)| (x - n as f64 * m) / scale).collect())
        })
        .collect::<Result<_>>()?;

    let mut report = TestReport::new("clt", model.kind_name(), replicas, seed);
    let mut min_p = 1.0f64;
    for (k, (v, var)) in directions.iter().zip(&variances).enumerate() {
        let mut proj: Vec<f64> = ys.iter().map(|y| y.iter().zip(v).map(|(a, b)| a * b).sum()).collect();
        proj.sort_by(f64::total_cmp);
        let dstat = ks_statistic(&proj, var.sqrt());
        let p = kolmogorov_pvalue(dstat, replicas);
        report.stat(format!("ks_d_{k}"), dstat);
        report.stat(format!("ks_p_{k}"), p);
        min_p = min_p.min(p);
    }
    if d >= 2 && cfg.directions.is_none() {
        let m = cfg.energy_points.min(replicas);
        let root = psd_sqrt(sigma2, 1e-12)?;
        let mut rng = stream_rng(seed, Purpose::Reference, 0);
        let reference: Vec<Vec<f64>> = (0..m).map(|_| gaussian_from_root(&root, &mut rng).as_slice().to_vec()).collect();
        let p = energy_test(&ys[..m], &reference, cfg.permutations, seed);
        report.stat("energy_p", p);
        min_p = min_p.min(p);
    }
    report.stat("n", n as f64);
    report.statistic = min_p;
    report.threshold = cfg.alpha;
    report.pass = min_p > cfg.alpha;
    report.runtime = start.elapsed();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::catalog;

    #[test]
    fn kolmogorov_tail_values() {
        // P(K > 1.36) ~ 0.049, P(K > 1.63) ~ 0.01
        assert!((kolmogorov_pvalue(1.358 / 1e3, 1_000_000) - 0.05).abs() < 2e-3);
        assert!((kolmogorov_pvalue(1.628 / 1e3, 1_000_000) - 0.01).abs() < 1e-3);
        assert_eq!(kolmogorov_pvalue(0.0, 100), 1.0);
    }

    #[test]
    fn gaussian_null_passes() {
        let model = catalog::iid_standard(2);
        let cfg = CltConfig { energy_points: 200, permutations: 99, ..Default::default() };
        let r = clt_test(&model, 4, 2000, &DMatrix::identity(2, 2), &[0.0, 0.0], 5, &cfg).unwrap();
        assert!(r.pass, "{:?}", r.statistics);
        assert!(r.statistics.contains_key("energy_p"));
        let wrong = DMatrix::identity(2, 2) * 2.0;
        let r = clt_test(&model, 4, 2000, &wrong, &[0.0, 0.0], 5, &cfg).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn degenerate_direction_rejected() {
        let model = catalog::iid_standard(2);
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(clt_test(&model, 4, 100, &s, &[0.0, 0.0], 1, &CltConfig::default()).is_err());
        let cfg = CltConfig { directions: Some(vec![vec![1.0, 0.0]]), ..Default::default() };
        assert!(clt_test(&model, 4, 100, &s, &[0.0, 0.0], 1, &cfg).is_ok());
    }
}
