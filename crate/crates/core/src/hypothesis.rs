//! Both sides of the block-decorrelation hypothesis (H), evaluated exactly
//! through operator products.
//!
//! Blocks `[b_j, b_{j+1})` for `j < split` are observed at their own
//! positions; blocks `j >= split` are shifted right by the gap `k`. The
//! discrepancy is
//! `|E e^{i(first + second)} - E e^{i first} E e^{i second}|`.

use rand::Rng;
use serde::Serialize;

use crate::covariance::log_linear_fit;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Purpose};
use crate::spectral::{coding_char_fn_runs, spectral_decompose, OperatorFamily};

const EXACT_FLOOR: f64 = 1e-14;
const NILPOTENT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockConfig {
    /// `b_1 < ... < b_{n+m+1}`.
    pub boundaries: Vec<usize>,
    /// Number `n` of blocks before the gap.
    pub split: usize,
    pub gap: usize,
    /// One frequency per block.
    pub freqs: Vec<Vec<f64>>,
}

impl BlockConfig {
    pub fn new(boundaries: Vec<usize>, split: usize, gap: usize, freqs: Vec<Vec<f64>>) -> Result<Self> {
        let cfg = Self { boundaries, split, gap, freqs };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn blocks(&self) -> usize {
        self.boundaries.len().saturating_sub(1)
    }

    fn validate(&self) -> Result<()> {
        if self.boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("block boundaries must be strictly increasing".into()));
        }
        let blocks = self.blocks();
        if self.split == 0 || self.split >= blocks {
            return Err(Error::InvalidParameter(format!(
                "need at least one block on each side of the gap (split {}, {blocks} blocks)",
                self.split
            )));
        }
        if self.freqs.len() != blocks {
            return Err(Error::InvalidParameter(format!("{} frequencies for {blocks} blocks", self.freqs.len())));
        }
        if self.gap == 0 {
            return Err(Error::InvalidParameter("gap k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_gap(&self, gap: usize) -> Self {
        Self { gap, ..self.clone() }
    }

    pub fn negated(&self) -> Self {
        Self { freqs: self.freqs.iter().map(|t| t.iter().map(|x| -x).collect()).collect(), ..self.clone() }
    }

    pub fn max_block_len(&self) -> usize {
        self.boundaries.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    /// Random configuration with `n + m <= max_blocks` and block lengths
    /// `<= max_len`, frequencies uniform in the ball of radius `eps0`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, dim: usize, eps0: f64, max_blocks: usize, max_len: usize, gap: usize) -> Self {
        let blocks = rng.random_range(2..=max_blocks.max(2));
        let split = rng.random_range(1..blocks);
        let mut boundaries = vec![rng.random_range(0..=max_len)];
        for _ in 0..blocks {
            let last = *boundaries.last().expect("non-empty");
            boundaries.push(last + rng.random_range(1..=max_len));
        }
        let freqs = (0..blocks)
            .map(|_| loop {
                let t: Vec<f64> = (0..dim).map(|_| eps0 * (2.0 * rng.random::<f64>() - 1.0)).collect();
                if t.iter().map(|x| x * x).sum::<f64>() <= eps0 * eps0 {
                    break t;
                }
            })
            .collect();
        Self { boundaries, split, gap, freqs }
    }
}

/// The two sides of (H) and their difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HSides {
    pub joint_re: f64,
    pub joint_im: f64,
    pub product_re: f64,
    pub product_im: f64,
    pub discrepancy: f64,
}

pub fn h_sides(family: &OperatorFamily, cfg: &BlockConfig) -> Result<HSides> {
    cfg.validate()?;
    let zero = vec![0.0; family.dim()];
    let lens: Vec<usize> = cfg.boundaries.windows(2).map(|w| w[1] - w[0]).collect();
    let lead = cfg.boundaries[0];
    let mut joint: Vec<(&[f64], usize)> = vec![(zero.as_slice(), lead)];
    let mut first: Vec<(&[f64], usize)> = vec![(zero.as_slice(), lead)];
    let mut second: Vec<(&[f64], usize)> = vec![(zero.as_slice(), cfg.boundaries[cfg.split] + cfg.gap)];
    for (j, (t, &len)) in cfg.freqs.iter().zip(&lens).enumerate() {
        if j == cfg.split {
            joint.push((zero.as_slice(), cfg.gap));
        }
        joint.push((t.as_slice(), len));
        if j < cfg.split {
            first.push((t.as_slice(), len));
        } else {
            second.push((t.as_slice(), len));
        }
    }
    let j = coding_char_fn_runs(family, &joint)?;
    let p = coding_char_fn_runs(family, &first)? * coding_char_fn_runs(family, &second)?;
    Ok(HSides { joint_re: j.re, joint_im: j.im, product_re: p.re, product_im: p.im, discrepancy: (j - p).norm() })
}

pub fn h_discrepancy(family: &OperatorFamily, cfg: &BlockConfig) -> Result<f64> {
    Ok(h_sides(family, cfg)?.discrepancy)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum HFit {
    /// Every discrepancy on the grid is below the floor.
    ExactFactorization,
    /// `discrepancy ~ C e^{-c k}`; `C` absorbs the polynomial prefactor at
    /// the fixed block sizes of the template.
    Fitted { big_c: f64, c: f64, r_squared: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct HPoint {
    pub k: usize,
    pub discrepancy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HReport {
    pub points: Vec<HPoint>,
    pub fit: HFit,
    /// `-ln kappa` from the unperturbed operator (`inf` when nilpotent).
    pub spectral_rate: f64,
    pub max_block_len: usize,
    pub blocks: usize,
    pub pass: bool,
}

impl HReport {
    /// Right-hand side `C e^{-c k}` of the fitted bound.
    pub fn rhs(&self, k: usize) -> f64 {
        match self.fit {
            HFit::ExactFactorization => 0.0,
            HFit::Fitted { big_c, c, .. } => big_c * (-c * k as f64).exp(),
        }
    }
}

/// Fit `ln discrepancy` against `k` over the grid. Passes when the fitted
/// rate is at least `0.9 (-ln kappa)`, or when factorization is exact at
/// every grid point. A nilpotent `Q` passes when every gap past its index
/// factorizes up to `1e-12`.
pub fn h_decay_fit(family: &OperatorFamily, template: &BlockConfig, k_grid: &[usize]) -> Result<HReport> {
    if k_grid.len() < 5 {
        return Err(Error::InvalidParameter("the k grid needs at least 5 points".into()));
    }
    let points: Vec<HPoint> =
        k_grid.iter().map(|&k| Ok(HPoint { k, discrepancy: h_discrepancy(family, &template.with_gap(k))? })).collect::<Result<_>>()?;
    let spec = spectral_decompose(&family.unperturbed())?;
    let spectral_rate = if spec.kappa > 0.0 { -spec.kappa.ln() } else { f64::INFINITY };
    let above: Vec<(f64, f64)> = points.iter().filter(|p| p.discrepancy > EXACT_FLOOR).map(|p| (p.k as f64, p.discrepancy)).collect();
    let (fit, pass) = if above.is_empty() {
        (HFit::ExactFactorization, true)
    } else {
        let (intercept, slope, r2) =
            log_linear_fit(&above).ok_or_else(|| Error::DecayFitFailed("fewer than two discrepancies above the floor".into()))?;
        let c = -slope;
        let pass = match spec.nilpotency_index {
            // Q^j = 0: past j the discrepancy is rounding only
            Some(j) => points.iter().filter(|p| p.k >= j).all(|p| p.discrepancy <= NILPOTENT_FLOOR),
            None => c >= 0.9 * spectral_rate,
        };
        (HFit::Fitted { big_c: intercept.exp(), c, r_squared: r2 }, pass)
    };
    Ok(HReport { points, fit, spectral_rate, max_block_len: template.max_block_len(), blocks: template.blocks(), pass })
}

/// `count` random configurations with the suite's size limits
/// (`n + m <= 6`, block lengths `<= 64`).
pub fn random_configs(seed: u64, dim: usize, eps0: f64, count: usize, gap: usize) -> Vec<BlockConfig> {
    let mut rng = stream_rng(seed, Purpose::Misc, 0);
    (0..count).map(|_| BlockConfig::random(&mut rng, dim, eps0, 6, 64, gap)).collect()
}
