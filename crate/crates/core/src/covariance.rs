//! Autocovariances `s_m = E[A_0 A_m^T] - a a^T`, the limiting covariance
//! `Sigma^2 = s_0 + sum_{m >= 1} (s_m + s_m^T)` and the bounded-deviation
//! law `|cov(S_n) - n Sigma^2| = O(1)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::models::{partial_sums, FiniteMarkovChain, ProcessModel, SamplePath};
use crate::rng::path_rng;

/// Relative floor below which a lag is treated as exactly zero.
const LAG_FLOOR: f64 = 1e-13;
const CLIFF: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecayFit {
    /// `|x_m| <= c e^{-delta m}` fitted on the tail of the sequence.
    Exponential { c: f64, delta: f64, r_squared: f64 },
    /// Every term after `last` is zero to working precision.
    FiniteSupport { last: usize },
}

impl DecayFit {
    /// `+inf` for finitely supported sequences.
    pub fn rate(&self) -> f64 {
        match *self {
            DecayFit::Exponential { delta, .. } => delta,
            DecayFit::FiniteSupport { .. } => f64::INFINITY,
        }
    }
}

/// Least squares of `ln y` against `x`: returns `(intercept, slope, r^2)`.
pub fn log_linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(_, y)| *y > 0.0).map(|&(x, y)| (x, y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Some((my - slope * mx, slope, r2))
}

/// Classify the decay of a nonnegative sequence `x_0, x_1, ...`.
///
/// Terms below `LAG_FLOOR * scale` are zero. If the last nonzero term is
/// followed by a sudden collapse (or nothing at all) the sequence is treated
/// as finitely supported; otherwise `ln x_m` is fitted over the upper half of
/// the nonzero range, starting at `m = 1`.
pub fn fit_decay(norms: &[f64], scale: f64) -> Result<DecayFit> {
    let floor = LAG_FLOOR * scale.max(f64::MIN_POSITIVE);
    let last = match norms.iter().rposition(|&v| v > floor) {
        None => return Ok(DecayFit::FiniteSupport { last: 0 }),
        Some(i) => i,
    };
    let next = norms.get(last + 1).copied().unwrap_or(0.0);
    let reaches_end = last + 1 == norms.len();
    if last == 0 || (!reaches_end && next <= CLIFF * norms[last]) {
        return Ok(DecayFit::FiniteSupport { last });
    }
    let lo = (last / 2).max(1);
    let pts: Vec<(f64, f64)> = (lo..=last).map(|m| (m as f64, norms[m])).collect();
    let (intercept, slope, r2) = log_linear_fit(&pts).ok_or_else(|| Error::DecayFitFailed("not enough nonzero terms to fit".into()))?;
    let delta = -slope;
    if !(delta > 0.0) {
        return Err(Error::DecayFitFailed(format!("fitted rate {delta} is not positive")));
    }
    // the fitted line may undercut the data; lift it over every fitted point
    let lift = pts.iter().map(|&(m, v)| v / (intercept + slope * m).exp()).fold(1.0, f64::max);
    Ok(DecayFit::Exponential { c: intercept.exp() * lift, delta, r_squared: r2 })
}

/// Lag-`m` autocovariance of the stationary process, computed exactly from
/// operator powers. Chains must be started from their stationary law.
pub fn autocovariance_spectral(model: &ProcessModel, m: usize) -> Result<DMatrix<f64>> {
    Ok(spectral_lags(model, m)?.pop().expect("at least one lag"))
}

/// `s_0, ..., s_max_lag`.
pub fn spectral_lags(model: &ProcessModel, max_lag: usize) -> Result<Vec<DMatrix<f64>>> {
    match model {
        ProcessModel::Markov(chain) if !chain.is_stationary_start() => {
            Err(Error::InvalidModel("spectral autocovariances need a chain started from its stationary law".into()))
        }
        _ => Ok(lag_generator(model).take(max_lag + 1).collect()),
    }
}

/// Lazily produces `s_0, s_1, ...` under the stationary law.
fn lag_generator(model: &ProcessModel) -> Box<dyn Iterator<Item = DMatrix<f64>> + '_> {
    match model {
        ProcessModel::Gaussian(g) => {
            let d = g.covariance().nrows();
            let s0 = g.covariance().clone();
            Box::new(std::iter::once(s0).chain(std::iter::repeat(DMatrix::zeros(d, d))))
        }
        ProcessModel::Markov(chain) => Box::new(ChainLags::new(chain)),
        ProcessModel::Doubling(map) => {
            // coefficient vectors of f_i on modes -B..B; L_0 sends mode k to k/2
            let f = map.observable();
            let d = f.dim();
            let b = f.bandwidth() as i64;
            let size = (2 * b + 1) as usize;
            let mut coeffs = vec![vec![num::complex::Complex64::new(0.0, 0.0); size]; d];
            for (k, c) in f.terms() {
                for i in 0..d {
                    coeffs[i][(k + b) as usize] = c[i];
                }
            }
            let mean = f.mean();
            let conj: Vec<Vec<_>> = coeffs.iter().map(|v| v.iter().map(|z| z.conj()).collect()).collect();
            let mut current = coeffs;
            let mut first = true;
            Box::new(std::iter::from_fn(move || {
                if !first {
                    for v in current.iter_mut() {
                        let mut next = vec![num::complex::Complex64::new(0.0, 0.0); size];
                        for k in -b..=b {
                            if k % 2 == 0 {
                                next[(k / 2 + b) as usize] += v[(k + b) as usize];
                            }
                        }
                        *v = next;
                    }
                }
                first = false;
                let s = DMatrix::from_fn(d, d, |i, j| {
                    let dot: num::complex::Complex64 = current[i].iter().zip(&conj[j]).map(|(x, y)| x * y).sum();
                    dot.re - mean[i] * mean[j]
                });
                Some(s)
            }))
        }
    }
}

struct ChainLags<'a> {
    chain: &'a FiniteMarkovChain,
    /// Column `j` holds `P^m f_j`.
    propagated: DMatrix<f64>,
    values: DMatrix<f64>,
    mean: DVector<f64>,
    first: bool,
}

impl<'a> ChainLags<'a> {
    fn new(chain: &'a FiniteMarkovChain) -> Self {
        let s = chain.states();
        let d = chain.observable().dim();
        let values = DMatrix::from_fn(s, d, |st, i| chain.observable().value(st)[i]);
        let mean = DVector::from_vec(chain.stationary_mean());
        Self { chain, propagated: values.clone(), values, mean, first: true }
    }
}

impl Iterator for ChainLags<'_> {
    type Item = DMatrix<f64>;

    fn next(&mut self) -> Option<DMatrix<f64>> {
        if !self.first {
            self.propagated = self.chain.transition() * &self.propagated;
        }
        self.first = false;
        let m = DMatrix::from_diagonal(&DVector::from_column_slice(self.chain.stationary()));
        let raw = self.values.transpose() * m * &self.propagated;
        Some(raw - &self.mean * self.mean.transpose())
    }
}

/// Empirical lag-`m` covariance `(1/n) sum_{l < n-m} (A_l - mean)(A_{l+m} - mean)^T`
/// and the entrywise standard error of the summed products.
pub fn autocovariance_empirical(path: &SamplePath, m: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = path.len();
    if m >= n {
        return Err(Error::InvalidParameter(format!("lag {m} is not below the path length {n}")));
    }
    let d = path.dim;
    let mut mean = vec![0.0; d];
    for k in 0..n {
        for (mi, v) in mean.iter_mut().zip(path.row(k)) {
            *mi += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let count = n - m;
    let mut sum = DMatrix::<f64>::zeros(d, d);
    let mut sumsq = DMatrix::<f64>::zeros(d, d);
    for l in 0..count {
        let (x, y) = (path.row(l), path.row(l + m));
        for i in 0..d {
            for j in 0..d {
                let p = (x[i] - mean[i]) * (y[j] - mean[j]);
                sum[(i, j)] += p;
                sumsq[(i, j)] += p * p;
            }
        }
    }
    let est = &sum / n as f64;
    let se = DMatrix::from_fn(d, d, |i, j| {
        let mu = sum[(i, j)] / count as f64;
        let var = (sumsq[(i, j)] / count as f64 - mu * mu).max(0.0);
        (var / count as f64).sqrt() * count as f64 / n as f64
    });
    Ok((est, se))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailPolicy {
    /// Target for the certified tail bound.
    pub tol: f64,
    pub max_lag: usize,
}

impl Default for TailPolicy {
    fn default() -> Self {
        Self { tol: 1e-10, max_lag: 100_000 }
    }
}

/// `Sigma^2` with its truncation lag and tail certificate.
#[derive(Debug, Clone, Serialize)]
pub struct CovarianceSeries {
    #[serde(skip)]
    pub lags: Vec<DMatrix<f64>>,
    #[serde(serialize_with = "serialize_matrix", rename = "Sigma2")]
    pub sigma2: DMatrix<f64>,
    pub truncation_lag: usize,
    pub tail_bound: f64,
    pub decay: DecayFit,
    pub delta: f64,
    pub a: Vec<f64>,
}

pub(crate) fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for i in 0..m.nrows() {
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

fn lag_norm(m: &DMatrix<f64>) -> f64 {
    linalg::spectral_norm_real(m)
}

/// `2 c e^{-delta (M+1)} / (1 - e^{-delta})`: `s_m` and `s_m^T` each
/// contribute one geometric tail.
pub fn geometric_tail(c: f64, delta: f64, m: usize) -> f64 {
    2.0 * c * (-delta * (m as f64 + 1.0)).exp() / (1.0 - (-delta).exp())
}

fn sum_series(s: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut sigma = s[0].clone();
    for m in &s[1..] {
        sigma += m + m.transpose();
    }
    // exact symmetrization removes rounding asymmetry from s_0
    (&sigma + sigma.transpose()) * 0.5
}

/// Sum a given autocovariance list, `Sigma^2 = s_0 + sum_{m=1}^{M} (s_m + s_m^T)`,
/// with the geometric tail bound from the fitted decay.
pub fn sigma2_series(s: &[DMatrix<f64>]) -> Result<(DMatrix<f64>, DecayFit, f64)> {
    if s.is_empty() {
        return Err(Error::InvalidParameter("empty autocovariance list".into()));
    }
    let norms: Vec<f64> = s.iter().map(lag_norm).collect();
    let fit = fit_decay(&norms, norms[0].max(norms.iter().copied().fold(0.0, f64::max)))?;
    let sigma = sum_series(s);
    let tail = match fit {
        DecayFit::Exponential { c, delta, .. } => geometric_tail(c, delta, s.len() - 1),
        DecayFit::FiniteSupport { .. } => 0.0,
    };
    Ok((sigma, fit, tail))
}

/// Spectral `Sigma^2` with the truncation lag chosen adaptively: the smallest
/// `M` whose certified tail is below `policy.tol`.
pub fn spectral_sigma2(model: &ProcessModel, policy: TailPolicy) -> Result<CovarianceSeries> {
    let stationary;
    let model = match model {
        // Sigma^2 does not depend on the initial law
        ProcessModel::Markov(chain) if !chain.is_stationary_start() => {
            let mut c = chain.clone();
            c = c.with_initial(chain.stationary().to_vec())?;
            stationary = ProcessModel::Markov(c);
            &stationary
        }
        _ => model,
    };
    let mut gen = lag_generator(model);
    let mut lags: Vec<DMatrix<f64>> = (&mut gen).take(65).collect();
    loop {
        let norms: Vec<f64> = lags.iter().map(lag_norm).collect();
        let scale = norms.iter().copied().fold(0.0, f64::max);
        let fit = fit_decay(&norms, scale)?;
        let target = match fit {
            DecayFit::FiniteSupport { last } => last,
            DecayFit::Exponential { c, delta, .. } => {
                let need = ((2.0 * c / ((1.0 - (-delta).exp()) * policy.tol)).ln() / delta).ceil() - 1.0;
                need.max(1.0) as usize
            }
        };
        if target > policy.max_lag {
            return Err(Error::DecayFitFailed(format!(
                "tail below {:e} needs lag {target}, above the limit {}",
                policy.tol, policy.max_lag
            )));
        }
        if target < lags.len() {
            let used = &lags[..=target];
            let sigma2 = sum_series(used);
            let tail = match fit {
                DecayFit::Exponential { c, delta, .. } => geometric_tail(c, delta, target),
                DecayFit::FiniteSupport { .. } => 0.0,
            };
            linalg::require_symmetric(&sigma2, 1e-12)?;
            let min_eig = linalg::min_eigenvalue(&sigma2);
            if min_eig < -1e-10 {
                return Err(Error::NotPsd(min_eig));
            }
            return Ok(CovarianceSeries {
                lags: used.to_vec(),
                sigma2,
                truncation_lag: target,
                tail_bound: tail,
                decay: fit,
                delta: fit.rate(),
                a: model.stationary_mean(),
            });
        }
        let more = target + 1 - lags.len();
        lags.extend((&mut gen).take(more));
    }
}

/// Drift `a` and the relaxation of `E(A_l)` toward it.
#[derive(Debug, Clone, Serialize)]
pub struct Centering {
    pub a: Vec<f64>,
    /// `|E(A_l) - a|` for `l = 0..=horizon`.
    pub deviations: Vec<f64>,
    pub decay: DecayFit,
    pub delta: f64,
}

/// `a` = stationary mean, with exact `E(A_l)` from operator powers.
pub fn estimate_centering(model: &ProcessModel, horizon: usize) -> Result<Centering> {
    let a = model.stationary_mean();
    let deviations = match model {
        ProcessModel::Markov(chain) => {
            let l0 = crate::spectral::build_operator(model, &vec![0.0; model.dim()], None)?;
            let spec = crate::spectral::spectral_decompose(&l0)?;
            if !(spec.kappa < 1.0) {
                return Err(Error::InvalidModel("chain has no spectral gap".into()));
            }
            let s = chain.states();
            let mut dist = DVector::from_column_slice(chain.initial());
            let values = DMatrix::from_fn(s, model.dim(), |st, i| chain.observable().value(st)[i]);
            let pt = chain.transition().transpose();
            let av = DVector::from_column_slice(&a);
            let mut out = Vec::with_capacity(horizon + 1);
            for _ in 0..=horizon {
                let mean = values.transpose() * &dist;
                out.push((mean - &av).norm());
                dist = &pt * dist;
            }
            out
        }
        // Lebesgue is invariant for doubling and i.i.d. draws are stationary
        _ => vec![0.0; horizon + 1],
    };
    let scale = a.iter().map(|x| x.abs()).fold(deviations[0], f64::max).max(1.0);
    let decay = fit_decay(&deviations, scale)?;
    Ok(Centering { a, delta: decay.rate(), deviations, decay })
}

/// One grid point of [`check_cov_growth`].
#[derive(Debug, Clone, Serialize)]
pub struct GrowthRow {
    pub m: usize,
    pub n: usize,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub rows: Vec<GrowthRow>,
    pub sup: f64,
    /// Largest deviation over the upper half of the `n` grid divided by the
    /// largest over the lower half; `<= 1` (up to rounding) means no trend.
    pub trend_ratio: f64,
    pub bounded: bool,
}

/// `cov(sum_{l=m}^{m+n-1} A_l)` computed exactly.
///
/// Chains use a forward recursion over `(P(X_l = s), E[W_{<l}; X_l = s])`,
/// exact for any initial law; stationary models use
/// `n s_0 + sum_{k<n} (n-k)(s_k + s_k^T)`.
pub fn window_covariance(model: &ProcessModel, m: usize, n: usize) -> Result<DMatrix<f64>> {
    let d = model.dim();
    match model {
        ProcessModel::Markov(chain) => {
            let s = chain.states();
            let p = chain.transition();
            let f: Vec<DVector<f64>> = (0..s).map(|st| DVector::from_column_slice(chain.observable().value(st))).collect();
            let mut alpha = DVector::from_column_slice(chain.initial());
            let pt = p.transpose();
            for _ in 0..m {
                alpha = &pt * alpha;
            }
            let mut beta: Vec<DVector<f64>> = vec![DVector::zeros(d); s];
            let mut second = DMatrix::zeros(d, d);
            for step in 0..n {
                for st in 0..s {
                    let fv = &f[st];
                    second += &beta[st] * fv.transpose() + fv * beta[st].transpose() + fv * fv.transpose() * alpha[st];
                }
                // carry W_{<=l} forward on the event X_l = st
                let carried: Vec<DVector<f64>> = (0..s).map(|st| &beta[st] + &f[st] * alpha[st]).collect();
                if step + 1 == n {
                    beta = carried;
                    break;
                }
                let mut next = vec![DVector::zeros(d); s];
                for (i, c) in carried.iter().enumerate() {
                    for (j, nx) in next.iter_mut().enumerate() {
                        *nx += c * p[(i, j)];
                    }
                }
                beta = next;
                alpha = &pt * alpha;
            }
            let mean: DVector<f64> = beta.iter().fold(DVector::zeros(d), |acc, b| acc + b);
            Ok(second - &mean * mean.transpose())
        }
        _ => {
            let mut cov = DMatrix::zeros(d, d);
            for (k, s) in lag_generator(model).take(n).enumerate() {
                if k == 0 {
                    cov += &s * n as f64;
                } else {
                    cov += (&s + s.transpose()) * (n - k) as f64;
                }
            }
            Ok(cov)
        }
    }
}

/// `sup |cov(S_{m..m+n-1}) - n Sigma^2|` over the grid.
pub fn check_cov_growth(model: &ProcessModel, sigma2: &DMatrix<f64>, m_range: &[usize], n_range: &[usize]) -> Result<GrowthReport> {
    let mut rows = Vec::new();
    for &m in m_range {
        for &n in n_range {
            let cov = window_covariance(model, m, n)?;
            let deviation = linalg::spectral_norm_real(&(cov - sigma2 * n as f64));
            rows.push(GrowthRow { m, n, deviation });
        }
    }
    let sup = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    let mut ns: Vec<usize> = n_range.to_vec();
    ns.sort_unstable();
    let split = ns.get(ns.len() / 2).copied().unwrap_or(0);
    let low = rows.iter().filter(|r| r.n < split).map(|r| r.deviation).fold(0.0, f64::max);
    let high = rows.iter().filter(|r| r.n >= split).map(|r| r.deviation).fold(0.0, f64::max);
    // relative slack for rounding in n Sigma^2, which grows with n
    let slack = 1e-9 * ns.last().copied().unwrap_or(1) as f64 * linalg::spectral_norm_real(sigma2).max(1.0);
    let trend_ratio = if low > 0.0 {
        high / low
    } else if high <= slack {
        1.0
    } else {
        f64::INFINITY
    };
    let bounded = high <= low * (1.0 + 1e-6) + slack;
    Ok(GrowthReport { rows, sup, trend_ratio, bounded })
}

/// Monte Carlo estimate of `cov(S_n)/n` with entrywise standard errors.
#[derive(Debug, Clone)]
pub struct EmpiricalSigma2 {
    pub estimate: DMatrix<f64>,
    pub std_error: DMatrix<f64>,
    pub replicas: usize,
    pub n: usize,
}

/// `(1/R) sum Y_r Y_r^T` with `Y_r = (S_n - n a)/sqrt(n)` over `R` replicas,
/// `a` the stationary mean.
pub fn empirical_sigma2(model: &ProcessModel, n: usize, replicas: usize, seed: u64) -> Result<EmpiricalSigma2> {
    if replicas < 2 {
        return Err(Error::InvalidParameter("need at least two replicas".into()));
    }
    let d = model.dim();
    let a = model.stationary_mean();
    let ys: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let values = model.sample_values(n, &mut path_rng(seed, r))?;
            let path = SamplePath::from_values(d, values)?;
            let s = partial_sums(&path);
            Ok(s.get(n).iter().zip(&a).map(|(x, ai)| (x - n as f64 * ai) / (n as f64).sqrt()).collect())
        })
        .collect::<Result<_>>()?;
    let r = replicas as f64;
    let mut est = DMatrix::<f64>::zeros(d, d);
    let mut sq = DMatrix::<f64>::zeros(d, d);
    for y in &ys {
        for i in 0..d {
            for j in 0..d {
                let p = y[i] * y[j];
                est[(i, j)] += p;
                sq[(i, j)] += p * p;
            }
        }
    }
    est /= r;
    let se = DMatrix::from_fn(d, d, |i, j| {
        let var = (sq[(i, j)] / r - est[(i, j)].powi(2)).max(0.0) * r / (r - 1.0);
        (var / r).sqrt()
    });
    Ok(EmpiricalSigma2 { estimate: est, std_error: se, replicas, n })
}

pub fn write_lags_csv<W: std::io::Write>(lags: &[DMatrix<f64>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let d = lags.first().map(|m| m.nrows()).unwrap_or(0);
    let mut header = vec!["m".to_string()];
    for i in 0..d {
        for j in 0..d {
            header.push(format!("s{i}{j}"));
        }
    }
    w.write_record(&header)?;
    for (m, s) in lags.iter().enumerate() {
        let mut row = vec![m.to_string()];
        for i in 0..d {
            for j in 0..d {
                row.push(format!("{:?}", s[(i, j)]));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
