use num::complex::Complex64;
use std::f64::consts::PI;

use super::discrete::DiscreteDistribution;
use super::smoothing::SmoothingSpec;
use crate::error::{Error, Result};

pub const BRUTE_FORCE_LIMIT: usize = 12;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Smallest `eps` with `F(B) <= G(B^eps) + eps` for every Borel `B`, where
/// `B^eps` is the open `eps`-neighborhood.
///
/// Only subsets of `supp F` matter. For a fixed `B`, `G(B^eps)` is a step
/// function of `eps` that is constant on each `(d_k, d_{k+1}]` between
/// consecutive distances from `supp G` to `B`, so the threshold for `B` is
/// found exactly by scanning those intervals.
pub fn prokhorov_exact_small(f: &DiscreteDistribution, g: &DiscreteDistribution) -> Result<f64> {
    if f.dim() != g.dim() {
        return Err(Error::MismatchedSupports);
    }
    let (union, _, _) = f.aligned(g)?;
    if union.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::SupportTooLarge { size: union.len(), limit: BRUTE_FORCE_LIMIT });
    }
    let nf = f.len();
    let mut worst = 0.0f64;
    for mask in 1u32..(1 << nf) {
        let members: Vec<usize> = (0..nf).filter(|i| mask >> i & 1 == 1).collect();
        let fb: f64 = members.iter().map(|&i| f.masses()[i]).sum();
        let mut near: Vec<(f64, f64)> = g
            .points()
            .iter()
            .zip(g.masses())
            .map(|(y, &m)| (members.iter().map(|&i| dist(y, &f.points()[i])).fold(f64::INFINITY, f64::min), m))
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut breaks = vec![0.0];
        for &(d, _) in &near {
            if d > *breaks.last().expect("non-empty") {
                breaks.push(d);
            }
        }
        breaks.push(f64::INFINITY);
        let mut threshold = f64::INFINITY;
        for k in 0..breaks.len() - 1 {
            let (a, b) = (breaks[k], breaks[k + 1]);
            let covered: f64 = near.iter().filter(|(d, _)| *d <= a).map(|&(_, m)| m).sum();
            let candidate = (fb - covered).max(a);
            if candidate <= b {
                threshold = candidate;
                break;
            }
        }
        worst = worst.max(threshold.max(0.0));
    }
    Ok(worst.min(1.0))
}

/// Characteristic function tabulated on the tensor grid
/// `[-half_width, half_width]^axes` with `nodes` points per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct CharGrid {
    pub axes: usize,
    pub half_width: f64,
    pub nodes: usize,
    pub values: Vec<Complex64>,
}

impl CharGrid {
    pub fn tabulate(axes: usize, half_width: f64, nodes: usize, mut phi: impl FnMut(&[f64]) -> Complex64) -> Result<Self> {
        if axes == 0 || nodes < 2 || !(half_width > 0.0) {
            return Err(Error::InvalidParameter("grid needs axes >= 1, nodes >= 2 and a positive width".into()));
        }
        let total = nodes.checked_pow(axes as u32).ok_or_else(|| Error::InvalidParameter("grid too large".into()))?;
        let step = 2.0 * half_width / (nodes - 1) as f64;
        let mut t = vec![0.0; axes];
        let values = (0..total)
            .map(|mut idx| {
                for a in (0..axes).rev() {
                    t[a] = -half_width + step * (idx % nodes) as f64;
                    idx /= nodes;
                }
                phi(&t)
            })
            .collect();
        Ok(Self { axes, half_width, nodes, values })
    }

    fn step(&self) -> f64 {
        2.0 * self.half_width / (self.nodes - 1) as f64
    }

    /// Trapezoidal `int |self - other|^2` over the grid box.
    pub fn l2_distance_sq(&self, other: &Self) -> Result<f64> {
        if self.axes != other.axes || self.nodes != other.nodes || self.half_width != other.half_width {
            return Err(Error::GridMismatch);
        }
        let n = self.nodes;
        let mut sum = 0.0;
        for (idx, (a, b)) in self.values.iter().zip(&other.values).enumerate() {
            let mut w = 1.0;
            let mut i = idx;
            for _ in 0..self.axes {
                let k = i % n;
                if k == 0 || k == n - 1 {
                    w *= 0.5;
                }
                i /= n;
            }
            sum += w * (a - b).norm_sqr();
        }
        Ok(sum * self.step().powi(self.axes as i32))
    }
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    PI.powf(half) / gamma(half + 1.0)
}

fn gamma(x: f64) -> f64 {
    // exact for the integers and half-integers that unit_ball_volume needs
    if (x - x.round()).abs() < 1e-12 {
        (1..x.round() as u64).map(|k| k as f64).product()
    } else {
        let mut v = PI.sqrt();
        let mut y = 0.5;
        while y < x - 1e-12 {
            v *= y;
            y += 1.0;
        }
        v
    }
}

/// `C(d) = sqrt(V_d / (2 pi)^d)`: Cauchy-Schwarz on a ball of radius `T'`
/// combined with Plancherel.
pub fn smoothing_constant(d: usize) -> f64 {
    (unit_ball_volume(d) / (2.0 * PI).powi(d as i32)).sqrt()
}

/// `sum_j F(|x_j| >= T') + (C(d) T'^{d/2})^N [int |phi - gamma|^2]^{1/2}`.
pub fn prokhorov_upper_bound(phi: &CharGrid, gamma: &CharGrid, t_prime: f64, d: usize, n_blocks: usize, tails: &[f64]) -> Result<f64> {
    if d * n_blocks != phi.axes || tails.len() != n_blocks {
        return Err(Error::GridMismatch);
    }
    if !(t_prime > 0.0) {
        return Err(Error::InvalidParameter("T' must be positive".into()));
    }
    let l2 = phi.l2_distance_sq(gamma)?.sqrt();
    let factor = (smoothing_constant(d) * t_prime.powf(d as f64 / 2.0)).powi(n_blocks as i32);
    Ok(tails.iter().sum::<f64>() + factor * l2)
}

/// Upper bound on `pi(F, G)` for discrete laws on the line:
/// `pi(F, G) <= 2 eta_V + pi(F * V, G * V)`, the middle term bounded by the
/// smoothing inequality with the best `T'` on a scan. Tails of `F * V` use
/// the moment bound on `|V|`.
pub fn smoothed_discrete_bound(f: &DiscreteDistribution, g: &DiscreteDistribution, v: &SmoothingSpec, nodes: usize) -> Result<f64> {
    if f.dim() != 1 || g.dim() != 1 {
        return Err(Error::InvalidParameter("the smoothed bound is implemented on the line".into()));
    }
    let eps0 = v.eps0();
    let phi = CharGrid::tabulate(1, eps0, nodes, |t| f.char_fn(t) * v.char_fn_v(t[0]))?;
    let gam = CharGrid::tabulate(1, eps0, nodes, |t| g.char_fn(t) * v.char_fn_v(t[0]))?;
    let tail_at = |t_prime: f64| -> f64 { f.points().iter().zip(f.masses()).map(|(x, &m)| m * v.v_tail_bound(t_prime - x[0].abs())).sum() };
    let reach = f.points().iter().chain(g.points()).map(|x| x[0].abs()).fold(0.0, f64::max);
    let mut best = f64::INFINITY;
    for i in 1..=200 {
        let t_prime = (reach + 0.05 * i as f64 * (1.0 + reach)).max(1e-3);
        best = best.min(prokhorov_upper_bound(&phi, &gam, t_prime, 1, 1, &[tail_at(t_prime)])?);
    }
    Ok((2.0 * v.eta() + best).min(1.0))
}
