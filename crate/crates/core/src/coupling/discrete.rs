use std::ops::{Add, Div, Mul, Sub};

use num::rational::BigRational;
use num::Zero;
use serde::Serialize;

use crate::error::{Error, Result};

const NORMALIZATION_TOL: f64 = 1e-12;

/// Scalar type for probability masses: `f64` or exact rationals.
pub trait Mass: Clone + PartialOrd + Zero + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> {
    fn one() -> Self;
    /// Distance from 1 allowed for a total mass.
    fn normalization_ok(total: &Self) -> bool;
}

impl Mass for f64 {
    fn one() -> Self {
        1.0
    }
    fn normalization_ok(total: &Self) -> bool {
        (total - 1.0).abs() <= NORMALIZATION_TOL
    }
}

impl Mass for BigRational {
    fn one() -> Self {
        num::One::one()
    }
    fn normalization_ok(total: &Self) -> bool {
        (total.clone() - <Self as Mass>::one()).is_zero()
    }
}

fn min_of<T: Mass>(a: &T, b: &T) -> T {
    if a <= b {
        a.clone()
    } else {
        b.clone()
    }
}

fn check_masses<T: Mass>(masses: &[T]) -> Result<()> {
    if masses.iter().any(|m| *m < T::zero()) {
        return Err(Error::InvalidParameter("masses must be nonnegative".into()));
    }
    let total = masses.iter().cloned().fold(T::zero(), |a, b| a + b);
    if !T::normalization_ok(&total) {
        return Err(Error::InvalidParameter("masses must sum to 1".into()));
    }
    Ok(())
}

/// Finite-support law on `R^d` with distinct support points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteDistribution {
    points: Vec<Vec<f64>>,
    masses: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(points: Vec<Vec<f64>>, masses: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != masses.len() {
            return Err(Error::InvalidParameter("need one mass per support point".into()));
        }
        let d = points[0].len();
        if d == 0 || points.iter().any(|p| p.len() != d || p.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidParameter("support points must be finite and share one dimension".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if points[..i].contains(p) {
                return Err(Error::InvalidParameter("support points must be distinct".into()));
            }
        }
        check_masses(&masses)?;
        Ok(Self { points, masses })
    }

    /// Point masses on the real line.
    pub fn on_line(points: &[f64], masses: &[f64]) -> Result<Self> {
        Self::new(points.iter().map(|&x| vec![x]).collect(), masses.to_vec())
    }

    pub fn dirac(point: Vec<f64>) -> Self {
        Self { points: vec![point], masses: vec![1.0] }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Masses of `self` and `other` on the union of both supports.
    pub fn aligned(&self, other: &Self) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
        if self.dim() != other.dim() {
            return Err(Error::MismatchedSupports);
        }
        let mut union = self.points.clone();
        for p in &other.points {
            if !union.contains(p) {
                union.push(p.clone());
            }
        }
        let spread =
            |d: &Self| -> Vec<f64> { union.iter().map(|u| d.points.iter().position(|p| p == u).map_or(0.0, |i| d.masses[i])).collect() };
        let (a, b) = (spread(self), spread(other));
        Ok((union, a, b))
    }

    /// Characteristic function `sum_i m_i e^{i<t, x_i>}`.
    pub fn char_fn(&self, t: &[f64]) -> num::complex::Complex64 {
        self.points
            .iter()
            .zip(&self.masses)
            .map(|(p, &m)| num::complex::Complex64::from_polar(m, p.iter().zip(t).map(|(x, s)| x * s).sum()))
            .sum()
    }
}

/// `sum |F_i - G_i| / 2`.
pub fn total_variation<T: Mass>(f: &[T], g: &[T]) -> Result<T> {
    if f.len() != g.len() {
        return Err(Error::MismatchedSupports);
    }
    let mut tv = T::zero();
    for (a, b) in f.iter().zip(g) {
        if a > b {
            tv = tv + (a.clone() - b.clone());
        }
    }
    Ok(tv)
}

/// Joint mass matrix with prescribed marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingPlan<T> {
    pub joint: Vec<Vec<T>>,
    /// `F - diag` and `G - diag`, the parts moved off the diagonal.
    pub residual_f: Vec<T>,
    pub residual_g: Vec<T>,
}

impl<T: Mass> CouplingPlan<T> {
    pub fn row_sums(&self) -> Vec<T> {
        self.joint.iter().map(|r| r.iter().cloned().fold(T::zero(), |a, b| a + b)).collect()
    }

    pub fn column_sums(&self) -> Vec<T> {
        let n = self.joint.len();
        (0..n).map(|j| self.joint.iter().map(|r| r[j].clone()).fold(T::zero(), |a, b| a + b)).collect()
    }

    /// `P(X != Y)`.
    pub fn mismatch(&self) -> T {
        let mut total = T::zero();
        for (i, row) in self.joint.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if i != j {
                    total = total + v.clone();
                }
            }
        }
        total
    }
}

/// Keep `min(F_i, G_i)` on the diagonal and spread the residuals as a
/// product measure; `P(X != Y)` is then exactly `TV(F, G)`.
pub fn maximal_coupling<T: Mass>(f: &[T], g: &[T]) -> Result<CouplingPlan<T>> {
    if f.len() != g.len() || f.is_empty() {
        return Err(Error::MismatchedSupports);
    }
    check_masses(f)?;
    check_masses(g)?;
    let n = f.len();
    let diag: Vec<T> = f.iter().zip(g).map(|(a, b)| min_of(a, b)).collect();
    let rf: Vec<T> = f.iter().zip(&diag).map(|(a, m)| a.clone() - m.clone()).collect();
    let rg: Vec<T> = g.iter().zip(&diag).map(|(b, m)| b.clone() - m.clone()).collect();
    let tv = rf.iter().cloned().fold(T::zero(), |a, b| a + b);
    let mut joint = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        joint[i][i] = diag[i].clone();
    }
    if tv > T::zero() {
        for i in 0..n {
            if rf[i].is_zero() {
                continue;
            }
            for j in 0..n {
                if !rg[j].is_zero() {
                    joint[i][j] = joint[i][j].clone() + rf[i].clone() * rg[j].clone() / tv.clone();
                }
            }
        }
    }
    Ok(CouplingPlan { joint, residual_f: rf, residual_g: rg })
}

/// Maximal coupling of two laws after aligning them on the union of supports.
pub fn maximal_coupling_of(f: &DiscreteDistribution, g: &DiscreteDistribution) -> Result<(Vec<Vec<f64>>, CouplingPlan<f64>)> {
    let (support, a, b) = f.aligned(g)?;
    Ok((support, maximal_coupling(&a, &b)?))
}

pub fn write_plan_csv<W: std::io::Write>(plan: &CouplingPlan<f64>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in &plan.joint {
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Equal-width histogram of samples in `R^1` or `R^2` on a fixed box.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub bins: usize,
    pub lo: Vec<f64>,
    pub width: Vec<f64>,
    pub masses: Vec<f64>,
}

impl Histogram {
    /// Out-of-box samples are clamped into the edge bins.
    pub fn build(samples: &[Vec<f64>], lo: &[f64], hi: &[f64], bins: usize) -> Result<Self> {
        let d = lo.len();
        if !(1..=2).contains(&d) || hi.len() != d || bins == 0 || samples.is_empty() {
            return Err(Error::Infeasible("histograms are limited to d <= 2 and need samples".into()));
        }
        let width: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| (b - a) / bins as f64).collect();
        if width.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidParameter("histogram box is empty".into()));
        }
        let mut masses = vec![0.0; bins.pow(d as u32)];
        let w = 1.0 / samples.len() as f64;
        for s in samples {
            masses[Self::index_of(s, lo, &width, bins)] += w;
        }
        Ok(Self { bins, lo: lo.to_vec(), width, masses })
    }

    fn index_of(s: &[f64], lo: &[f64], width: &[f64], bins: usize) -> usize {
        let mut idx = 0;
        for k in 0..lo.len() {
            let b = ((s[k] - lo[k]) / width[k]).floor().clamp(0.0, (bins - 1) as f64) as usize;
            idx = idx * bins + b;
        }
        idx
    }

    pub fn bin_of(&self, s: &[f64]) -> usize {
        Self::index_of(s, &self.lo, &self.width, self.bins)
    }

    /// Product of the two coordinate marginals of a 2-d histogram.
    pub fn product_of_marginals(&self) -> Result<Vec<f64>> {
        if self.lo.len() != 2 {
            return Err(Error::InvalidParameter("marginal product needs a 2-d histogram".into()));
        }
        let b = self.bins;
        let mut row = vec![0.0; b];
        let mut col = vec![0.0; b];
        for i in 0..b {
            for j in 0..b {
                row[i] += self.masses[i * b + j];
                col[j] += self.masses[i * b + j];
            }
        }
        Ok((0..b * b).map(|k| row[k / b] * col[k % b]).collect())
    }
}
