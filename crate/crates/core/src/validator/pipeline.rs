use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::degenerate::degenerate_split;
use super::TestReport;
use crate::coupling::{default_delta, total_variation, variance_matching_coupling, Histogram};
use crate::covariance::{log_linear_fit, spectral_sigma2, window_covariance, TailPolicy};
use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, sym_norm};
use crate::models::{partial_sums, ProcessModel, SamplePath};
use crate::rng::{path_rng, stream_rng, Purpose};
use crate::scheduler::{decompose_level, level_layout, optimal_beta, BlockKind, SchedulerParams};

#[derive(Debug, Clone, Copy)]
pub struct PipelineConfig {
    pub min_level: u32,
    pub max_level: u32,
    pub replicas: usize,
    /// Histogram bins per dimension.
    pub bins: usize,
    /// Allowed excess of the fitted exponent over `lambda`.
    pub slack: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { min_level: 6, max_level: 16, replicas: 100, bins: 32, slack: 0.1 }
    }
}

/// Stage errors for one level.
#[derive(Debug, Clone, Serialize)]
pub struct LevelDiagnostics {
    pub level: u32,
    pub blocks: usize,
    pub interval_len: u64,
    pub bin_width: f64,
    /// TV between the adjacent-pair histogram and the product of its marginals.
    pub independence_tv: f64,
    /// Mean `|X - G|` of the quantile gaussianization.
    pub gaussianization_error: f64,
    /// `sqrt(E|G - Z|^2)` from the variance-matching law.
    pub variance_matching_rms: f64,
    pub variance_matching_delta: f64,
    /// Mean `|X - Z|` over blocks and replicas.
    pub stage_discrepancy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineOutcome {
    pub levels: Vec<LevelDiagnostics>,
    /// `(k, exp(mean ln sup_{j <= k} |D_j|))` at the end of each level.
    pub curve: Vec<(f64, f64)>,
    pub exponent: f64,
    pub r_squared: f64,
    pub lambda: f64,
    pub rank: usize,
    /// Growth exponent of the partial sums projected on the kernel of Sigma^2.
    pub kernel_exponent: Option<f64>,
}

struct ReplicaBlocks {
    /// `[level][block]` centered block sums in `E` coordinates.
    sums: Vec<Vec<Vec<f64>>>,
    /// `sup_{k <= 2^{n+1}} |P_F (S_k - k a)|` at each level end.
    kernel_sup: Vec<f64>,
}

const ATOM_LIMIT: usize = 200_000;
const ATOM_SCALE: f64 = 1e9;

/// Law of a centered block sum.
enum BlockLaw {
    /// Already gaussian with the target covariance.
    Gaussian,
    /// Finite atoms `(value, P(X < value), P(X = value))`, ascending.
    Atoms(Vec<(f64, f64, f64)>),
    /// Unknown; gaussianize by pooled ranks.
    Empirical,
}

impl BlockLaw {
    fn label(&self) -> &'static str {
        match self {
            BlockLaw::Gaussian => "gaussian",
            BlockLaw::Atoms(_) => "exact",
            BlockLaw::Empirical => "empirical",
        }
    }
}

/// Exact law of `sum_{l=start}^{start+len-1} (A_l - a)` for a scalar chain,
/// by forward recursion over `(state, sum)`; `None` once the number of
/// distinct sums passes `ATOM_LIMIT`.
fn chain_block_law(chain: &crate::models::FiniteMarkovChain, a: f64, start: usize, len: usize) -> Option<Vec<(f64, f64, f64)>> {
    use std::collections::BTreeMap;
    let s = chain.states();
    let p = chain.transition();
    let pt = p.transpose();
    let mut alpha = DVector::from_column_slice(chain.initial());
    for _ in 0..start {
        alpha = &pt * alpha;
    }
    let value = |st: usize| chain.observable().value(st)[0] - a;
    let key = |v: f64| (v * ATOM_SCALE).round() as i64;
    // (state, key) -> (sum, prob)
    let mut cur: BTreeMap<(usize, i64), (f64, f64)> = BTreeMap::new();
    for st in 0..s {
        if alpha[st] > 0.0 {
            let v = value(st);
            cur.insert((st, key(v)), (v, alpha[st]));
        }
    }
    for _ in 1..len {
        let mut next: BTreeMap<(usize, i64), (f64, f64)> = BTreeMap::new();
        for (&(st, _), &(v, pr)) in &cur {
            for nx in 0..s {
                let w = p[(st, nx)];
                if w > 0.0 {
                    let nv = v + value(nx);
                    let e = next.entry((nx, key(nv))).or_insert((nv, 0.0));
                    e.1 += pr * w;
                }
            }
        }
        if next.len() > ATOM_LIMIT {
            return None;
        }
        cur = next;
    }
    let mut merged: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    for (&(_, k), &(v, pr)) in &cur {
        let e = merged.entry(k).or_insert((v, 0.0));
        e.1 += pr;
    }
    let total: f64 = merged.values().map(|e| e.1).sum();
    let mut below = 0.0;
    Some(
        merged
            .into_values()
            .map(|(v, pr)| {
                let atom = (v, below / total, pr / total);
                below += pr;
                atom
            })
            .collect(),
    )
}

fn block_law(model: &ProcessModel, a: &[f64], start: usize, len: usize) -> BlockLaw {
    match model {
        ProcessModel::Gaussian(_) => BlockLaw::Gaussian,
        ProcessModel::Markov(chain) if chain.observable().dim() == 1 => {
            chain_block_law(chain, a[0], start, len).map_or(BlockLaw::Empirical, BlockLaw::Atoms)
        }
        _ => BlockLaw::Empirical,
    }
}

/// Randomized quantile transform of an atom to `N(0, var)`.
fn atom_gaussianize<R: rand::Rng + ?Sized>(atoms: &[(f64, f64, f64)], x: f64, sd: f64, rng: &mut R) -> f64 {
    let hi = atoms.partition_point(|at| at.0 < x).min(atoms.len() - 1);
    let idx = if hi > 0 && (x - atoms[hi - 1].0).abs() < (atoms[hi].0 - x).abs() { hi - 1 } else { hi };
    let (_, below, mass) = atoms[idx];
    let u: f64 = rng.random();
    let q = (below + u * mass).clamp(1e-300, 1.0 - 1e-16);
    sd * Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(q)
}

fn rank_gaussianize(points: &[Vec<f64>], cov: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
    let r = cov.nrows();
    let root = psd_sqrt(cov, 1e-12 * sym_norm(cov).max(1.0))?;
    let inv = root.clone().try_inverse().ok_or(Error::Singular)?;
    let white: Vec<DVector<f64>> = points.iter().map(|p| &inv * DVector::from_column_slice(p)).collect();
    let n = points.len();
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = vec![DVector::<f64>::zeros(r); n];
    for c in 0..r {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| white[a][c].total_cmp(&white[b][c]).then(a.cmp(&b)));
        for (rank, &i) in order.iter().enumerate() {
            out[i][c] = std.inverse_cdf((rank as f64 + 0.5) / n as f64);
        }
    }
    Ok(out.into_iter().map(|g| (&root * g).as_slice().to_vec()).collect())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// End-to-end diagnostic of the blocking argument on simulated paths:
///
/// 1. triadic block schedule on the valid levels of `[min_level, max_level]`;
/// 2. centered block sums `X_{n,j}` on `E`, the range of `Sigma^2`;
/// 3. TV between the histogram of adjacent pairs and the product of marginals
///    (the surrogates keep `Y = X`, so this is an error record only);
/// 4. quantile coupling of each block sum with `N(0, cov X_{n,j})`: through
///    the exact block law for gaussian models and scalar chains, otherwise
///    through ranks in the pooled level sample (after whitening when `d = 2`);
/// 5. variance matching toward `N(0, |I_{n,j}| Sigma^2)`;
/// 6. `D = sum (X - Z)` over blocks in order and a log-log fit of
///    `sup |D|` against `k`.
///
/// This measures one realization of the construction; it does not certify
/// the rate.
pub fn asip_pipeline_demo(
    model: &ProcessModel,
    params: &SchedulerParams,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<(TestReport, PipelineOutcome)> {
    let d = model.dim();
    if d > 2 {
        return Err(Error::Infeasible(format!("histogram couplings are limited to d <= 2, model has d = {d}")));
    }
    if cfg.replicas < 2 || cfg.bins < 2 || cfg.min_level > cfg.max_level || cfg.max_level > 24 {
        return Err(Error::InvalidParameter("need replicas >= 2, bins >= 2 and min_level <= max_level <= 24".into()));
    }
    let start = std::time::Instant::now();
    let sigma2 = spectral_sigma2(model, TailPolicy::default())?.sigma2;
    let split = degenerate_split(&sigma2, 1e-10 * sym_norm(&sigma2).max(1.0))?;
    if split.rank == 0 {
        return Err(Error::Infeasible("Sigma^2 vanishes; the partial sums have no gaussian part".into()));
    }
    let r = split.rank;
    let e_t = split.e_basis.transpose();
    let sigma_e = &e_t * &sigma2 * &split.e_basis;

    let levels: Vec<u32> = (cfg.min_level..=cfg.max_level).filter(|&n| level_layout(n, params).map(|l| l.valid).unwrap_or(false)).collect();
    if levels.len() < 2 {
        return Err(Error::Infeasible("fewer than two valid levels in the requested range".into()));
    }
    let schedules: Vec<Vec<_>> = levels
        .iter()
        .map(|&n| decompose_level(n, params).map(|b| b.into_iter().filter(|b| b.kind == BlockKind::Interval).collect()))
        .collect::<Result<_>>()?;
    let len = 1usize << (cfg.max_level + 1);
    let a = model.stationary_mean();

    let replicas: Vec<ReplicaBlocks> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|rep| -> Result<ReplicaBlocks> {
            let values = model.sample_values(len, &mut path_rng(seed, rep))?;
            let path = SamplePath::from_values(d, values)?;
            let s = partial_sums(&path);
            let centered = |k: usize| -> Vec<f64> { s.get(k).iter().zip(&a).map(|(x, m)| x - k as f64 * m).collect() };
            let sums = schedules
                .iter()
                .map(|blocks| {
                    blocks
                        .iter()
                        .map(|b| {
                            let hi = centered(b.end() as usize);
                            let lo = centered(b.start as usize);
                            let diff: Vec<f64> = hi.iter().zip(&lo).map(|(x, y)| x - y).collect();
                            split.project_e(&diff)
                        })
                        .collect()
                })
                .collect();
            let mut kernel_sup = Vec::new();
            if r < d {
                let mut sup = 0.0f64;
                let mut k = 1;
                for &n in &levels {
                    let end = 1usize << (n + 1);
                    while k <= end {
                        let f = split.project_f(&centered(k));
                        sup = sup.max(f.iter().map(|x| x * x).sum::<f64>().sqrt());
                        k += 1;
                    }
                    kernel_sup.push(sup);
                }
            }
            Ok(ReplicaBlocks { sums, kernel_sup })
        })
        .collect::<Result<_>>()?;

    let mut diagnostics = Vec::new();
    // z[level][replica][block]
    let mut z_all: Vec<Vec<Vec<Vec<f64>>>> = Vec::new();
    let mut laws = Vec::new();
    for (li, (&n, blocks)) in levels.iter().zip(&schedules).enumerate() {
        let first = blocks[0];
        let cov_full = window_covariance(model, first.start as usize, first.length as usize)?;
        let cov_s = &e_t * cov_full * &split.e_basis;
        let cov_z = &sigma_e * first.length as f64;
        let sd = (0..r).map(|c| cov_s[(c, c)]).fold(0.0, f64::max).sqrt();
        if !(sd > 0.0) {
            return Err(Error::Infeasible(format!("block covariance at level {n} is degenerate")));
        }
        let half = 4.0 * sd;
        let bin_width = 2.0 * half / cfg.bins as f64;

        let mut tv = 0.0f64;
        for c in 0..r {
            let pairs: Vec<Vec<f64>> = replicas.iter().flat_map(|rb| rb.sums[li].windows(2).map(move |w| vec![w[0][c], w[1][c]])).collect();
            if pairs.is_empty() {
                continue;
            }
            let h = Histogram::build(&pairs, &[-half, -half], &[half, half], cfg.bins)?;
            tv = tv.max(total_variation(&h.masses, &h.product_of_marginals()?)?);
        }

        let pooled: Vec<Vec<f64>> = replicas.iter().flat_map(|rb| rb.sums[li].iter().cloned()).collect();
        let law = if r == d { block_law(model, &a, first.start as usize, first.length as usize) } else { BlockLaw::Empirical };
        let gauss = match &law {
            BlockLaw::Gaussian => pooled.clone(),
            BlockLaw::Atoms(atoms) => {
                let sd = cov_s[(0, 0)].sqrt();
                let mut rng = stream_rng(seed, Purpose::Misc, li as u64);
                pooled.iter().map(|x| vec![atom_gaussianize(atoms, x[0], sd, &mut rng)]).collect()
            }
            BlockLaw::Empirical => rank_gaussianize(&pooled, &cov_s)?,
        };
        laws.push(law.label());
        let delta = default_delta(&cov_s, &cov_z);
        let vm = variance_matching_coupling(&cov_s, &cov_z, delta)?;
        let per_rep = blocks.len();
        let z_level: Vec<Vec<Vec<f64>>> = (0..cfg.replicas)
            .map(|rep| {
                let mut rng = stream_rng(seed, Purpose::Coupling, (rep as u64) << 8 | li as u64);
                (0..per_rep)
                    .map(|j| vm.couple(&DVector::from_column_slice(&gauss[rep * per_rep + j]), &mut rng).as_slice().to_vec())
                    .collect()
            })
            .collect();
        let count = pooled.len() as f64;
        let gauss_err = pooled.iter().zip(&gauss).map(|(x, g)| dist(x, g)).sum::<f64>() / count;
        let stage = pooled.iter().zip(z_level.iter().flatten()).map(|(x, z)| dist(x, z)).sum::<f64>() / count;
        diagnostics.push(LevelDiagnostics {
            level: n,
            blocks: per_rep,
            interval_len: first.length,
            bin_width,
            independence_tv: tv,
            gaussianization_error: gauss_err,
            variance_matching_rms: vm.mean_square_gap().max(0.0).sqrt(),
            variance_matching_delta: delta,
            stage_discrepancy: stage,
        });
        z_all.push(z_level);
    }

    // reassemble D over blocks in path order
    let mut log_sup = vec![0.0; levels.len()];
    for (rep, rb) in replicas.iter().enumerate() {
        let mut dsum = vec![0.0; r];
        let mut sup = 0.0f64;
        for li in 0..levels.len() {
            for (x, z) in rb.sums[li].iter().zip(&z_all[li][rep]) {
                for c in 0..r {
                    dsum[c] += x[c] - z[c];
                }
                sup = sup.max(dsum.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
            log_sup[li] += sup.max(f64::MIN_POSITIVE).ln() / cfg.replicas as f64;
        }
    }
    let curve: Vec<(f64, f64)> = levels.iter().zip(&log_sup).map(|(&n, l)| (((n + 1) as f64).exp2(), l.exp())).collect();
    let fit_pts: Vec<(f64, f64)> = curve.iter().map(|&(k, y)| (k.ln(), y)).collect();
    let (_, exponent, r_squared) =
        log_linear_fit(&fit_pts).ok_or_else(|| Error::Infeasible("discrepancy curve is identically zero".into()))?;

    let kernel_exponent = if r < d {
        let pts: Vec<(f64, f64)> = levels
            .iter()
            .enumerate()
            .map(|(li, &n)| {
                let mean = replicas.iter().map(|rb| rb.kernel_sup[li]).sum::<f64>() / cfg.replicas as f64;
                (((n + 1) as f64).exp2().ln(), mean)
            })
            .collect();
        log_linear_fit(&pts).map(|f| f.1)
    } else {
        None
    };

    let lambda_base = num::ToPrimitive::to_f64(&optimal_beta(params.p)?.1).unwrap_or(f64::NAN);
    let lambda = lambda_base + params.eps_f64();
    let mut report = TestReport::new("asip_pipeline", model.kind_name(), cfg.replicas, seed);
    report.stat("exponent", exponent);
    report.stat("r_squared", r_squared);
    report.stat("lambda", lambda);
    report.stat("rank", r as f64);
    let worst_ratio = diagnostics.iter().map(|l| l.stage_discrepancy / l.bin_width).fold(0.0, f64::max);
    report.stat("max_stage_discrepancy_over_bin_width", worst_ratio);
    for l in &diagnostics {
        report.stat(format!("level_{:02}_independence_tv", l.level), l.independence_tv);
        report.stat(format!("level_{:02}_gaussianization_error", l.level), l.gaussianization_error);
        report.stat(format!("level_{:02}_variance_matching_rms", l.level), l.variance_matching_rms);
        report.stat(format!("level_{:02}_stage_discrepancy", l.level), l.stage_discrepancy);
        report.stat(format!("level_{:02}_bin_width", l.level), l.bin_width);
    }
    if let Some(k) = kernel_exponent {
        report.stat("kernel_exponent", k);
    }
    laws.dedup();
    report.notes.push(format!("gaussianization by {} block laws", laws.join("/")));
    report.notes.push("diagnostic run: the fitted exponent is a measurement, not a certificate".into());
    report.curve = curve.clone();
    report.statistic = exponent;
    report.threshold = lambda + cfg.slack;
    report.pass = exponent <= lambda + cfg.slack;
    report.runtime = start.elapsed();
    let outcome = PipelineOutcome { levels: diagnostics, curve, exponent, r_squared, lambda, rank: r, kernel_exponent };
    Ok((report, outcome))
}
