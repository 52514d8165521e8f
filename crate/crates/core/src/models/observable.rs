use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num::complex::Complex64;

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// A band-limited function on the circle `R/Z` with values in `R^d`,
/// `f(x) = sum_k c_k exp(2 pi i k x)` with `c_{-k} = conj(c_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierObservable {
    dim: usize,
    coeffs: BTreeMap<i64, Vec<Complex64>>,
}

impl FourierObservable {
    /// Build from explicit coefficients. Every `k` with a nonzero coefficient
    /// must appear together with `-k` carrying the conjugate.
    pub fn new(dim: usize, terms: impl IntoIterator<Item = (i64, Vec<Complex64>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidModel("observable dimension must be positive".into()));
        }
        let mut coeffs: BTreeMap<i64, Vec<Complex64>> = BTreeMap::new();
        for (k, c) in terms {
            if c.len() != dim {
                return Err(Error::InvalidModel(format!("coefficient at k = {k} has {} components, expected {dim}", c.len())));
            }
            if c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidModel(format!("non-finite coefficient at k = {k}")));
            }
            let slot = coeffs.entry(k).or_insert_with(|| vec![Complex64::new(0.0, 0.0); dim]);
            for (s, z) in slot.iter_mut().zip(c) {
                *s += z;
            }
        }
        coeffs.retain(|_, c| c.iter().any(|z| z.norm() > 0.0));
        let obs = Self { dim, coeffs };
        obs.check_symmetry()?;
        Ok(obs)
    }

    /// Real trigonometric form `sum a_k cos(2 pi k x) + b_k sin(2 pi k x)` with
    /// `k >= 1` for the oscillating terms; `k = 0` in `cos` sets the mean.
    pub fn trig(dim: usize, cos: &[(i64, Vec<f64>)], sin: &[(i64, Vec<f64>)]) -> Result<Self> {
        let mut terms = Vec::new();
        for (k, a) in cos {
            if *k < 0 {
                return Err(Error::InvalidModel("trigonometric frequencies must be >= 0".into()));
            }
            if *k == 0 {
                terms.push((0, a.iter().map(|&x| Complex64::new(x, 0.0)).collect()));
            } else {
                let half: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x / 2.0, 0.0)).collect();
                terms.push((*k, half.clone()));
                terms.push((-*k, half));
            }
        }
        for (k, b) in sin {
            if *k <= 0 {
                return Err(Error::InvalidModel("sine frequencies must be >= 1".into()));
            }
            // sin(2 pi k x) = (e_k - e_{-k}) / (2i)
            terms.push((*k, b.iter().map(|&x| Complex64::new(0.0, -x / 2.0)).collect()));
            terms.push((-*k, b.iter().map(|&x| Complex64::new(0.0, x / 2.0)).collect()));
        }
        Self::new(dim, terms)
    }

    /// `cos(2 pi k x)` scaled by `amplitude`, one-dimensional.
    pub fn cosine(k: i64, amplitude: f64) -> Self {
        Self::trig(1, &[(k, vec![amplitude])], &[]).expect("valid cosine")
    }

    /// The observable `g - g o T` for the doubling map `T(x) = 2x mod 1`.
    pub fn coboundary_of(g: &FourierObservable) -> Self {
        let mut terms: Vec<(i64, Vec<Complex64>)> = g.coeffs.iter().map(|(&k, c)| (k, c.clone())).collect();
        for (&k, c) in &g.coeffs {
            terms.push((2 * k, c.iter().map(|z| -z).collect()));
        }
        Self::new(g.dim, terms).expect("coboundary of a valid observable is valid")
    }

    fn check_symmetry(&self) -> Result<()> {
        for (&k, c) in &self.coeffs {
            let zero = vec![Complex64::new(0.0, 0.0); self.dim];
            let mirror = self.coeffs.get(&-k).unwrap_or(&zero);
            for (a, b) in c.iter().zip(mirror) {
                if (a - b.conj()).norm() > SYMMETRY_TOL * (1.0 + a.norm()) {
                    return Err(Error::InvalidModel(format!("Fourier table is not conjugate-symmetric at k = {k}")));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest `|k|` carrying a nonzero coefficient.
    pub fn bandwidth(&self) -> usize {
        self.coeffs.keys().map(|k| k.unsigned_abs() as usize).max().unwrap_or(0)
    }

    pub fn coefficient(&self, k: i64) -> Option<&[Complex64]> {
        self.coeffs.get(&k).map(|c| c.as_slice())
    }

    pub fn terms(&self) -> impl Iterator<Item = (i64, &[Complex64])> {
        self.coeffs.iter().map(|(&k, c)| (k, c.as_slice()))
    }

    /// Lebesgue average `c_0`.
    pub fn mean(&self) -> Vec<f64> {
        match self.coeffs.get(&0) {
            Some(c) => c.iter().map(|z| z.re).collect(),
            None => vec![0.0; self.dim],
        }
    }

    /// Per-component bound `sum_k |c_k|` on `sup |f_i|` (attained for cosines).
    pub fn sup_bound(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for c in self.coeffs.values() {
            for (o, z) in out.iter_mut().zip(c) {
                *o += z.norm();
            }
        }
        out
    }

    /// Evaluate at the dyadic point `phase / 2^64`. Phases `k x mod 1` are
    /// reduced exactly in integer arithmetic before the trigonometric call.
    pub fn eval_phase(&self, phase: u64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&k, c) in &self.coeffs {
            if k < 0 {
                continue;
            }
            let reduced = phase.wrapping_mul(k as u64);
            let angle = TAU * ((reduced >> 11) as f64) * (1.0 / (1u64 << 53) as f64);
            let (s, co) = angle.sin_cos();
            let factor = if k == 0 { 1.0 } else { 2.0 };
            for (o, z) in out.iter_mut().zip(c) {
                // 2 Re(c e^{i angle})
                *o += factor * (z.re * co - z.im * s);
            }
        }
    }

    /// Evaluate at a real point `x` (used by quadrature).
    pub fn eval(&self, x: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&k, c) in &self.coeffs {
            if k < 0 {
                continue;
            }
            let (s, co) = (TAU * k as f64 * x).sin_cos();
            let factor = if k == 0 { 1.0 } else { 2.0 };
            for (o, z) in out.iter_mut().zip(c) {
                *o += factor * (z.re * co - z.im * s);
            }
        }
    }
}

/// Values `f(s) in R^d` for the states of a finite chain.
#[derive(Debug, Clone, PartialEq)]
pub struct StateObservable {
    dim: usize,
    values: Vec<Vec<f64>>,
}

impl StateObservable {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        let dim = values.first().map(|v| v.len()).unwrap_or(0);
        if dim == 0 {
            return Err(Error::InvalidModel("state observable needs at least one state and one component".into()));
        }
        for (s, v) in values.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::InvalidModel(format!("state {s} has {} components, expected {dim}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidModel(format!("non-finite value at state {s}")));
            }
        }
        Ok(Self { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn states(&self) -> usize {
        self.values.len()
    }

    pub fn value(&self, state: usize) -> &[f64] {
        &self.values[state]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rejects_asymmetric_table() {
        let err = FourierObservable::new(1, vec![(1, vec![Complex64::new(0.5, 0.0)])]);
        assert!(matches!(err, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn trig_matches_direct_evaluation() {
        let f = FourierObservable::trig(1, &[(0, vec![0.25]), (3, vec![1.5])], &[(2, vec![-0.75])]).unwrap();
        let mut out = [0.0];
        for i in 0..50 {
            let x = i as f64 / 50.0 + 0.003;
            f.eval(x, &mut out);
            let direct = 0.25 + 1.5 * (TAU * 3.0 * x).cos() - 0.75 * (TAU * 2.0 * x).sin();
            assert_abs_diff_eq!(out[0], direct, epsilon = 1e-12);
        }
        assert_eq!(f.bandwidth(), 3);
        assert_eq!(f.mean(), vec![0.25]);
    }

    #[test]
    fn phase_evaluation_agrees_with_real_point() {
        let f = FourierObservable::trig(2, &[(1, vec![1.0, 0.0]), (5, vec![0.0, 2.0])], &[(1, vec![0.0, 1.0])]).unwrap();
        let phase: u64 = 0x9E37_79B9_7F4A_7C15;
        let x = phase as f64 / 2f64.powi(64);
        let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
        f.eval_phase(phase, &mut a);
        f.eval(x, &mut b);
        assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-9);
        assert_abs_diff_eq!(a[1], b[1], epsilon = 1e-9);
    }

    #[test]
    fn coboundary_coefficients() {
        let g = FourierObservable::cosine(1, 1.0);
        let f = FourierObservable::coboundary_of(&g);
        assert_abs_diff_eq!(f.coefficient(1).unwrap()[0].re, 0.5);
        assert_abs_diff_eq!(f.coefficient(2).unwrap()[0].re, -0.5);
        assert_eq!(f.bandwidth(), 2);
    }
}
