use rayon::prelude::*;

use super::{non_increasing_tail, TestReport};
use crate::error::{Error, Result};
use crate::models::{partial_sums, ProcessModel, SamplePath};
use crate::rng::path_rng;
use crate::scheduler::{decompose_level, level_blocks, level_layout, BlockKind, SchedulerParams};

#[derive(Debug, Clone, Copy)]
pub struct NegligibilityConfig {
    pub quantile: f64,
    /// Number of trailing points that must be non-increasing.
    pub top: usize,
    /// Largest allowed max/min of `|S_n|_q / sqrt(n)`.
    pub max_ratio: f64,
}

impl Default for NegligibilityConfig {
    fn default() -> Self {
        Self { quantile: 0.95, top: 3, max_ratio: 2.0 }
    }
}

/// Nearest-rank quantile.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[idx]
}

fn centered_path(model: &ProcessModel, len: usize, seed: u64, r: u64) -> Result<SamplePath> {
    let a = model.stationary_mean();
    let d = model.dim();
    let mut values = model.sample_values(len, &mut path_rng(seed, r))?;
    for row in values.chunks_exact_mut(d) {
        for (x, m) in row.iter_mut().zip(&a) {
            *x -= m;
        }
    }
    SamplePath::from_values(d, values)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `|S_n - n a|_q / sqrt(n)` over the dyadic `ns`, one path of length
/// `max(ns)` per replica; passes when max/min of those ratios is at most
/// `cfg.max_ratio`.
pub fn lp_scaling_test(
    model: &ProcessModel,
    q: f64,
    ns: &[usize],
    replicas: usize,
    seed: u64,
    cfg: &NegligibilityConfig,
) -> Result<TestReport> {
    if !(q > 2.0) {
        return Err(Error::InvalidParameter(format!("q must exceed 2, got {q}")));
    }
    if ns.is_empty() || replicas == 0 || ns.iter().any(|n| !n.is_power_of_two()) {
        return Err(Error::InvalidParameter("need dyadic n values and at least one replica".into()));
    }
    let start = std::time::Instant::now();
    let len = *ns.iter().max().expect("non-empty");
    let moments: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let s = partial_sums(&centered_path(model, len, seed, r)?);
            Ok(ns.iter().map(|&n| norm(s.get(n)).powf(q)).collect())
        })
        .collect::<Result<_>>()?;
    let mut report = TestReport::new("lp_scaling", model.kind_name(), replicas, seed);
    let mut ratios = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let m = moments.iter().map(|row| row[i]).sum::<f64>() / replicas as f64;
        let ratio = m.powf(1.0 / q) / (n as f64).sqrt();
        report.curve.push((n as f64, ratio));
        ratios.push(ratio);
    }
    let max = ratios.iter().copied().fold(0.0, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if min > 0.0 { max / min } else { f64::INFINITY };
    report.stat("q", q);
    report.stat("max_ratio", max);
    report.stat("min_ratio", min);
    report.stat("last_over_first", ratios[ratios.len() - 1] / ratios[0]);
    report.statistic = spread;
    report.threshold = cfg.max_ratio;
    report.pass = spread <= cfg.max_ratio;
    report.runtime = start.elapsed();
    Ok(report)
}

/// Indicator of `l in J` for `0 <= l < len`, over all levels that start
/// before `len`.
pub fn gap_mask(params: &SchedulerParams, len: usize) -> Result<Vec<bool>> {
    let mut mask = vec![false; len];
    let mut n = 0u32;
    while (1usize << n) < len {
        for b in level_blocks(&level_layout(n, params)?) {
            if b.kind == BlockKind::Gap {
                for l in b.start as usize..(b.end() as usize).min(len) {
                    mask[l] = true;
                }
            }
        }
        n += 1;
    }
    Ok(mask)
}

/// `|sum_{l < k, l in J} (A_l - a)|` at each `k`.
fn gap_sums(path: &SamplePath, mask: &[bool], ks: &[u64]) -> Result<Vec<f64>> {
    let kmax = *ks.iter().max().unwrap_or(&0) as usize;
    if path.len() < kmax {
        return Err(Error::PathTooShort { len: path.len(), needed: kmax });
    }
    let d = path.dim;
    let mut acc = vec![0.0; d];
    let mut next = 0;
    let mut sorted: Vec<(usize, u64)> = ks.iter().copied().enumerate().collect();
    sorted.sort_by_key(|p| p.1);
    let mut result = vec![0.0; ks.len()];
    for l in 0..=kmax {
        while next < sorted.len() && sorted[next].1 as usize == l {
            result[sorted[next].0] = norm(&acc);
            next += 1;
        }
        if l < kmax && mask[l] {
            for (a, x) in acc.iter_mut().zip(path.row(l)) {
                *a += x;
            }
        }
    }
    Ok(result)
}

/// Quantiles of `|sum_{l<k, l in J} (A_l - a)| / k^{beta/2 + eps}` over the
/// dyadic `ks`; passes when the last `cfg.top` of them are non-increasing.
pub fn gap_sum_test(
    model: &ProcessModel,
    params: &SchedulerParams,
    ks: &[u64],
    replicas: usize,
    seed: u64,
    cfg: &NegligibilityConfig,
) -> Result<TestReport> {
    if ks.len() < cfg.top || replicas == 0 || ks.iter().any(|k| !k.is_power_of_two()) || ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(format!("need at least {} increasing dyadic k values", cfg.top)));
    }
    let start = std::time::Instant::now();
    let kmax = *ks.last().expect("non-empty") as usize;
    let mask = gap_mask(params, kmax)?;
    let sums: Vec<Vec<f64>> =
        (0..replicas as u64).into_par_iter().map(|r| gap_sums(&centered_path(model, kmax, seed, r)?, &mask, ks)).collect::<Result<_>>()?;
    let expo = params.beta_f64() / 2.0 + params.eps_f64();
    let mut report = TestReport::new("gap_sum", model.kind_name(), replicas, seed);
    let mut qs = Vec::new();
    for (i, &k) in ks.iter().enumerate() {
        let normalized: Vec<f64> = sums.iter().map(|row| row[i] / (k as f64).powf(expo)).collect();
        let qv = quantile(&normalized, cfg.quantile);
        report.curve.push((k as f64, qv));
        qs.push(qv);
    }
    let tail = &qs[qs.len() - cfg.top..];
    report.stat("exponent", expo);
    report.stat("largest_rise", tail.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max));
    report.statistic = tail.windows(2).map(|w| w[1] / w[0]).fold(0.0, |a: f64, b| if b.is_nan() { a } else { a.max(b) });
    report.threshold = 1.0;
    report.pass = non_increasing_tail(&qs, cfg.top);
    report.runtime = start.elapsed();
    Ok(report)
}

/// Per-level `max_j max_{m <= |I_{n,j}|} |sum of the first m centered terms
/// of I_{n,j}|`, normalized by `2^{((1-beta)/2 + beta/p + eps) n}`; passes when
/// the quantiles over the last `cfg.top` levels are non-increasing.
pub fn block_maxima_test(
    model: &ProcessModel,
    params: &SchedulerParams,
    levels: &[u32],
    replicas: usize,
    seed: u64,
    cfg: &NegligibilityConfig,
) -> Result<TestReport> {
    if levels.len() < cfg.top || replicas == 0 || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(format!("need at least {} increasing levels", cfg.top)));
    }
    let start = std::time::Instant::now();
    let schedules: Vec<_> = levels.iter().map(|&n| decompose_level(n, params)).collect::<Result<_>>()?;
    let len = 1usize << (levels.last().expect("non-empty") + 1);
    let d = model.dim();
    let maxima: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let path = centered_path(model, len, seed, r)?;
            Ok(schedules
                .iter()
                .map(|blocks| {
                    let mut best = 0.0f64;
                    for b in blocks.iter().filter(|b| b.kind == BlockKind::Interval) {
                        let mut acc = vec![0.0; d];
                        for l in b.start as usize..b.end() as usize {
                            for (a, x) in acc.iter_mut().zip(path.row(l)) {
                                *a += x;
                            }
                            best = best.max(norm(&acc));
                        }
                    }
                    best
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let beta = params.beta_f64();
    let inv_p = num::ToPrimitive::to_f64(&params.p.reciprocal()).unwrap_or(0.0);
    let expo = (1.0 - beta) / 2.0 + beta * inv_p + params.eps_f64();
    let mut report = TestReport::new("block_maxima", model.kind_name(), replicas, seed);
    let mut qs = Vec::new();
    for (i, &n) in levels.iter().enumerate() {
        let normalized: Vec<f64> = maxima.iter().map(|row| row[i] / (expo * n as f64).exp2()).collect();
        let qv = quantile(&normalized, cfg.quantile);
        report.curve.push((n as f64, qv));
        qs.push(qv);
    }
    let tail = &qs[qs.len() - cfg.top..];
    report.stat("exponent", expo);
    report.stat("largest_rise", tail.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max));
    report.statistic = tail.windows(2).map(|w| w[1] / w[0]).fold(0.0, |a: f64, b| if b.is_nan() { a } else { a.max(b) });
    report.threshold = 1.0;
    report.pass = non_increasing_tail(&qs, cfg.top);
    report.runtime = start.elapsed();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::catalog;
    use crate::scheduler::{gap_mass, Rational};

    #[test]
    fn mask_matches_gap_mass() {
        let params = SchedulerParams::new(Rational::new(1, 2), Rational::new(1, 5)).unwrap();
        let mask = gap_mask(&params, 1 << 12).unwrap();
        for k in [1u64, 17, 300, 1023, 1024, 4000] {
            let count = mask[..=k as usize].iter().filter(|&&b| b).count() as u64;
            assert_eq!(count, gap_mass(k, &params).unwrap(), "k = {k}");
        }
    }

    #[test]
    fn iid_scaling() {
        let model = catalog::iid_standard(1);
        let ns: Vec<usize> = (4..=10).map(|j| 1 << j).collect();
        let r = lp_scaling_test(&model, 4.0, &ns, 400, 2, &NegligibilityConfig::default()).unwrap();
        assert!(r.pass && r.statistic < 1.2, "{}", r.statistic);
        let r = lp_scaling_test(&catalog::doubling_coboundary(8), 4.0, &ns, 50, 2, &NegligibilityConfig::default()).unwrap();
        assert!(r.statistics["last_over_first"] < 0.3);
    }

    #[test]
    fn zero_observable_is_negligible() {
        let zero = crate::models::FourierObservable::new(1, vec![]).unwrap();
        let model = ProcessModel::Doubling(crate::models::DoublingMap::new(zero, 4).unwrap());
        let params = SchedulerParams::new(Rational::new(2, 3), Rational::new(1, 20)).unwrap();
        let cfg = NegligibilityConfig::default();
        let r = gap_sum_test(&model, &params, &[256, 512, 1024], 4, 1, &cfg).unwrap();
        assert!(r.pass && r.curve.iter().all(|p| p.1 == 0.0));
        let r = block_maxima_test(&model, &params, &[9, 10, 12], 4, 1, &cfg).unwrap();
        assert!(r.pass && r.curve.iter().all(|p| p.1 == 0.0));
    }

    #[test]
    fn short_path_rejected() {
        let p = SamplePath::from_values(1, vec![0.0; 10]).unwrap();
        assert!(matches!(gap_sums(&p, &[false; 10], &[64]), Err(Error::PathTooShort { .. })));
    }
}
