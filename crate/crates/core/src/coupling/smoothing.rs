use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Leakage tolerance for the characteristic function just beyond its support.
pub const LEAKAGE_TOL: f64 = 1e-6;
/// Default lattice points per unit length `1 / eps0`.
pub const DEFAULT_RESOLUTION: f64 = 2.0;
const RANGE: f64 = 400.0;
const BUMP_NODES: usize = 4000;

/// `exp(-1 / (1 - (2t/eps0)^2))` on `|t| < eps0 / 2`.
pub fn bump(t: f64, eps0: f64) -> f64 {
    let s = 2.0 * t / eps0;
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

/// Smoothing variable `V = W - W'`, `W, W'` i.i.d. with density
/// `h = |F^{-1} bump|^2 / int`. The characteristic function of `W` is the
/// normalized autocorrelation of the bump, supported in `|t| <= eps0`; so is
/// that of `V`, which is its square.
///
/// `h` is stored on the lattice `x_k = k * step`. Because `h` is band-limited,
/// lattice sums reproduce its integrals against `e^{itx}` and `x^k` exactly
/// below the aliasing frequency `2 pi / step - eps0`. The sampler draws `W`
/// from that lattice, which has the same characteristic function on that band.
#[derive(Debug, Clone, Serialize)]
pub struct SmoothingSpec {
    eps0: f64,
    step: f64,
    grid: Vec<f64>,
    density: Vec<f64>,
    #[serde(skip)]
    cdf: Vec<f64>,
    moments_w: [f64; 7],
    moments_v: [f64; 7],
    leakage: f64,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Build `V` for `eps0 > 0` with `resolution` lattice points per `1 / eps0`.
pub fn build_smoothing_v(eps0: f64, resolution: f64) -> Result<SmoothingSpec> {
    if !(eps0 > 0.0 && eps0.is_finite()) || !(resolution > 0.0) {
        return Err(Error::InvalidParameter("eps0 and resolution must be positive".into()));
    }
    let step = 1.0 / (resolution * eps0);
    let half = (RANGE / eps0 / step).ceil() as i64;
    let grid: Vec<f64> = (-half..=half).map(|k| k as f64 * step).collect();

    let a = eps0 / 2.0;
    let dt = a / BUMP_NODES as f64;
    let bumps: Vec<f64> = (0..=BUMP_NODES).map(|i| bump(i as f64 * dt, eps0)).collect();
    let mut density: Vec<f64> = grid
        .iter()
        .map(|&x| {
            // f(x) = (1/pi) int_0^a bump(t) cos(tx) dt; the bump vanishes at a
            let f: f64 = bumps.iter().enumerate().map(|(i, b)| b * (i as f64 * dt * x).cos()).sum::<f64>() * dt - 0.5 * bumps[0] * dt;
            f * f / std::f64::consts::PI.powi(2)
        })
        .collect();
    let total: f64 = density.iter().sum::<f64>() * step;
    for h in &mut density {
        *h /= total;
    }

    let mut cdf = Vec::with_capacity(density.len());
    let mut acc = 0.0;
    for h in &density {
        acc += h * step;
        cdf.push(acc);
    }
    let last = acc;
    for c in &mut cdf {
        *c /= last;
    }

    let mut moments_w = [0.0; 7];
    for (x, h) in grid.iter().zip(&density) {
        let mut p = h * step;
        for m in moments_w.iter_mut() {
            *m += p;
            p *= x;
        }
    }
    let mut moments_v = [0.0; 7];
    for (n, mv) in moments_v.iter_mut().enumerate() {
        *mv = (0..=n).map(|j| binomial(n, j) * moments_w[j] * moments_w[n - j] * if (n - j) % 2 == 1 { -1.0 } else { 1.0 }).sum();
    }

    let mut spec = SmoothingSpec { eps0, step, grid, density, cdf, moments_w, moments_v, leakage: 0.0 };
    spec.leakage = [1.2 * eps0, 1.5 * eps0, 2.0 * eps0].iter().map(|&t| spec.char_fn_v(t).abs()).fold(0.0, f64::max);
    if spec.leakage > LEAKAGE_TOL {
        return Err(Error::InvalidParameter(format!(
            "grid too coarse: characteristic function leaks {:.3e} beyond eps0; raise the resolution",
            spec.leakage
        )));
    }
    Ok(spec)
}

impl SmoothingSpec {
    /// Each coordinate built with `eps0 / sqrt(d)`, so the product law has its
    /// characteristic function inside the ball of radius `eps0` in `R^d`.
    pub fn for_dimension(eps0: f64, d: usize, resolution: f64) -> Result<Self> {
        build_smoothing_v(eps0 / (d.max(1) as f64).sqrt(), resolution)
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    /// Radius of the support of the characteristic function of `V`.
    pub fn support_radius(&self) -> f64 {
        self.eps0
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn leakage(&self) -> f64 {
        self.leakage
    }

    /// `E W^k` for `k = 0..=6`.
    pub fn moments_w(&self) -> [f64; 7] {
        self.moments_w
    }

    /// `E V^k` for `k = 0..=6`.
    pub fn moments_v(&self) -> [f64; 7] {
        self.moments_v
    }

    pub fn char_fn_w(&self, t: f64) -> f64 {
        // h is even, so the transform is real
        self.grid.iter().zip(&self.density).map(|(x, h)| h * (t * x).cos()).sum::<f64>() * self.step
    }

    pub fn char_fn_v(&self, t: f64) -> f64 {
        self.char_fn_w(t).powi(2)
    }

    /// Markov bound on `P(|V| >= r)` from the even moments up to order 6.
    pub fn v_tail_bound(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 1.0;
        }
        [2, 4, 6].iter().map(|&k| self.moments_v[k] / r.powi(k as i32)).fold(1.0, f64::min)
    }

    /// Smallest `eta` with `v_tail_bound(eta) <= eta`, which bounds
    /// the Prokhorov distance between `F` and `F * V`.
    pub fn eta(&self) -> f64 {
        [2usize, 4, 6].iter().map(|&k| self.moments_v[k].powf(1.0 / (k as f64 + 1.0))).fold(1.0, f64::min)
    }

    pub fn sample_w<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let idx = self.cdf.partition_point(|&c| c < u).min(self.grid.len() - 1);
        self.grid[idx]
    }

    pub fn sample_v<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_w(rng) - self.sample_w(rng)
    }

    pub fn sample_v_vector<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Vec<f64> {
        (0..d).map(|_| self.sample_v(rng)).collect()
    }

    pub fn write_density_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "h"])?;
        for (x, h) in self.grid.iter().zip(&self.density) {
            w.write_record([format!("{x:?}"), format!("{h:?}")])?;
        }
        w.flush()?;
        Ok(())
    }
}
