//! Perturbed operators `t -> L_t` whose products code characteristic
//! functions, and the spectral decomposition `L_0 = lambda Pi + Q`.
//!
//! Conventions by model:
//!
//! * doubling map: `L_t` acts on the Fourier modes `e_k`, `|k| <= K`, as the
//!   twisted transfer operator `u -> sum_{Ty = x} e^{i<t, f(y)>} u(y) / 2`.
//!   `u_0 = e_0` and `xi_0` reads the `e_0` coefficient (Lebesgue integral).
//!   Products compose to the left.
//! * finite chains: `L_t = diag(e^{i<t, f(s)>}) P`, `xi_0 = mu`, `u_0 = 1`,
//!   products compose to the right: `mu L_{t_0} ... L_{t_{n-1}} 1`.
//! * i.i.d. gaussian: the scalar `exp(-t^T Sigma^2 t / 2)`.
//!
//! All pairings are bilinear (no conjugation).

use std::f64::consts::TAU;

use nalgebra::DVector;
use num::complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, spectral_norm, CMatrix, CVector};
use crate::models::{DoublingMap, FiniteMarkovChain, IidGaussian, ProcessModel};

pub const DEFAULT_EPS0: f64 = 0.5;

const PAIRING_TOL: f64 = 1e-10;
const GAP_TOL: f64 = 1e-6;
const POWER_HORIZON: usize = 100;
const NILPOTENT_FLOOR: f64 = 1e-13;
const NILPOTENT_CLIFF: f64 = 1e-6;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompositionOrder {
    /// `<xi_0, L_{t_{n-1}} ... L_{t_0} u_0>`
    Left,
    /// `xi_0 L_{t_0} ... L_{t_{n-1}} u_0`
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    Fourier { truncation: usize },
    States { count: usize },
    Scalar,
}

impl Basis {
    pub fn len(&self) -> usize {
        match *self {
            Basis::Fourier { truncation } => 2 * truncation + 1,
            Basis::States { count } => count,
            Basis::Scalar => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The family `(L_t)_{|t| <= eps0}` together with `u_0`, `xi_0`.
#[derive(Debug, Clone)]
pub struct OperatorFamily {
    model: ProcessModel,
    basis: Basis,
    eps0: f64,
    u0: CVector,
    xi0: CVector,
    order: CompositionOrder,
}

impl OperatorFamily {
    /// Family with the model's own truncation and `eps0 = 0.5`.
    pub fn new(model: &ProcessModel) -> Result<Self> {
        Self::with_options(model, None, DEFAULT_EPS0)
    }

    /// Override the Fourier truncation (doubling models only) and `eps0`.
    pub fn with_options(model: &ProcessModel, truncation: Option<usize>, eps0: f64) -> Result<Self> {
        if !(eps0 > 0.0) || !eps0.is_finite() {
            return Err(Error::InvalidParameter(format!("eps0 must be positive, got {eps0}")));
        }
        let model = match (model, truncation) {
            (ProcessModel::Doubling(m), Some(k)) => {
                let mut rebuilt = DoublingMap::new(m.observable().clone(), k)?;
                if let Some(g) = m.transfer() {
                    rebuilt = rebuilt.with_transfer(g.clone())?;
                }
                ProcessModel::Doubling(rebuilt)
            }
            (ProcessModel::Markov(m), Some(s)) if s != m.states() => {
                return Err(Error::InvalidParameter(format!("chain has {} states, truncation {s} requested", m.states())))
            }
            (other, _) => other.clone(),
        };
        let (basis, u0, xi0, order) = match &model {
            ProcessModel::Doubling(m) => {
                let k = m.truncation();
                let mut e0 = CVector::zeros(2 * k + 1);
                e0[k] = c(1.0);
                (Basis::Fourier { truncation: k }, e0.clone(), e0, CompositionOrder::Left)
            }
            ProcessModel::Markov(m) => {
                let s = m.states();
                let mu = CVector::from_iterator(s, m.initial().iter().map(|&p| c(p)));
                (Basis::States { count: s }, CVector::from_element(s, c(1.0)), mu, CompositionOrder::Right)
            }
            ProcessModel::Gaussian(_) => {
                let one = CVector::from_element(1, c(1.0));
                (Basis::Scalar, one.clone(), one, CompositionOrder::Left)
            }
        };
        let family = Self { model, basis, eps0, u0, xi0, order };
        let norm = linalg::pairing(&family.xi0, &family.u0);
        if (norm - c(1.0)).norm() > PAIRING_TOL {
            return Err(Error::InvalidModel(format!("<xi0, u0> = {norm}, expected 1")));
        }
        Ok(family)
    }

    pub fn model(&self) -> &ProcessModel {
        &self.model
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn u0(&self) -> &CVector {
        &self.u0
    }

    pub fn xi0(&self) -> &CVector {
        &self.xi0
    }

    pub fn order(&self) -> CompositionOrder {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Reject `t` outside the ball of radius `eps0` or of the wrong length.
    pub fn check_frequency(&self, t: &[f64]) -> Result<()> {
        if t.len() != self.dim() {
            return Err(Error::InvalidParameter(format!(
                "frequency has {} components, the process is {}-dimensional",
                t.len(),
                self.dim()
            )));
        }
        let norm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm <= self.eps0 * (1.0 + 1e-12)) {
            return Err(Error::FrequencyOutOfRange { norm, eps0: self.eps0 });
        }
        Ok(())
    }

    /// The matrix of `L_t`.
    pub fn operator(&self, t: &[f64]) -> Result<CMatrix> {
        self.check_frequency(t)?;
        Ok(match &self.model {
            ProcessModel::Doubling(m) => doubling_matrix(m, t),
            ProcessModel::Markov(m) => markov_matrix(m, t),
            ProcessModel::Gaussian(m) => gaussian_matrix(m, t),
        })
    }

    pub fn unperturbed(&self) -> CMatrix {
        self.operator(&vec![0.0; self.dim()]).expect("t = 0 is always admissible")
    }

    /// `<xi_0, v>` for a vector produced by left composition, or
    /// `<w, u_0>` for a covector produced by right composition.
    fn contract(&self, v: &CVector) -> Complex64 {
        match self.order {
            CompositionOrder::Left => linalg::pairing(&self.xi0, v),
            CompositionOrder::Right => linalg::pairing(v, &self.u0),
        }
    }

    fn seed_vector(&self) -> CVector {
        match self.order {
            CompositionOrder::Left => self.u0.clone(),
            CompositionOrder::Right => self.xi0.clone(),
        }
    }

    fn apply(&self, l: &CMatrix, v: &CVector) -> CVector {
        match self.order {
            CompositionOrder::Left => l * v,
            CompositionOrder::Right => l.transpose() * v,
        }
    }
}

/// One-off assembly of `L_t` with the default `eps0`.
pub fn build_operator(model: &ProcessModel, t: &[f64], truncation: Option<usize>) -> Result<CMatrix> {
    OperatorFamily::with_options(model, truncation, DEFAULT_EPS0)?.operator(t)
}

fn markov_matrix(m: &FiniteMarkovChain, t: &[f64]) -> CMatrix {
    let s = m.states();
    let p = m.transition();
    CMatrix::from_fn(s, s, |i, j| {
        let phase: f64 = t.iter().zip(m.observable().value(i)).map(|(a, b)| a * b).sum();
        Complex64::from_polar(1.0, phase) * p[(i, j)]
    })
}

fn gaussian_matrix(m: &IidGaussian, t: &[f64]) -> CMatrix {
    let tv = DVector::from_column_slice(t);
    let q = (tv.transpose() * m.covariance() * &tv)[(0, 0)];
    CMatrix::from_element(1, 1, c((-0.5 * q).exp()))
}

/// `L[j, k] = G(k - 2j)` with `G(q) = int e^{i<t, f(y)>} e^{2 pi i q y} dy`,
/// computed on `M = 8K` equispaced nodes. At `t = 0` the matrix is assembled
/// exactly: `e_k -> e_{k/2}` for even `k`, odd modes vanish.
fn doubling_matrix(m: &DoublingMap, t: &[f64]) -> CMatrix {
    let k = m.truncation() as i64;
    let size = (2 * k + 1) as usize;
    let mut l = CMatrix::zeros(size, size);
    if t.iter().all(|&x| x == 0.0) {
        for kk in (-k..=k).filter(|kk| kk % 2 == 0) {
            l[((kk / 2 + k) as usize, (kk + k) as usize)] = c(1.0);
        }
        return l;
    }
    let nodes = 8 * k as usize;
    let d = m.observable().dim();
    let mut value = vec![0.0; d];
    let weights: Vec<Complex64> = (0..nodes)
        .map(|i| {
            m.observable().eval(i as f64 / nodes as f64, &mut value);
            let phase: f64 = t.iter().zip(&value).map(|(a, b)| a * b).sum();
            Complex64::from_polar(1.0 / nodes as f64, phase)
        })
        .collect();
    let twiddle: Vec<Complex64> = (0..nodes).map(|i| Complex64::from_polar(1.0, TAU * i as f64 / nodes as f64)).collect();
    let g = |q: i64| -> Complex64 {
        let step = q.rem_euclid(nodes as i64) as usize;
        weights.iter().enumerate().map(|(i, w)| w * twiddle[(i * step) % nodes]).sum()
    };
    let table: Vec<Complex64> = (-3 * k..=3 * k).map(g).collect();
    for j in -k..=k {
        for kk in -k..=k {
            l[((j + k) as usize, (kk + k) as usize)] = table[(kk - 2 * j + 3 * k) as usize];
        }
    }
    l
}

/// `lambda Pi + Q` with the fitted bound `|Q^n| <= C_Q kappa^n`.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub lambda: Complex64,
    pub pi: CMatrix,
    pub q: CMatrix,
    /// Modulus of the second eigenvalue; 0 when `Q` is numerically nilpotent.
    pub kappa: f64,
    pub c_q: f64,
    /// Smallest `n` with `Q^n = 0` to working precision, when it exists.
    pub nilpotency_index: Option<usize>,
    pub right: CVector,
    pub left: CVector,
    /// All eigenvalue moduli in decreasing order.
    pub moduli: Vec<f64>,
}

impl SpectralData {
    /// `max(|Pi Q|, |Q Pi|, |Pi^2 - Pi|, |L - lambda Pi - Q|)` against `l0`.
    pub fn invariant_residual(&self, l0: &CMatrix) -> f64 {
        let pq = spectral_norm(&(&self.pi * &self.q));
        let qp = spectral_norm(&(&self.q * &self.pi));
        let idem = spectral_norm(&(&self.pi * &self.pi - &self.pi));
        let recon = spectral_norm(&(l0 - self.pi.map(|z| z * self.lambda) - &self.q));
        pq.max(qp).max(idem).max(recon)
    }
}

fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    if m.nrows() == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 1_000_000)
        .ok_or_else(|| Error::InvalidParameter("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok(t.diagonal().iter().copied().collect())
}

/// Eigenvector of `m` at `lambda` by inverse iteration with a tiny shift.
fn inverse_iteration(m: &CMatrix, lambda: Complex64) -> Result<CVector> {
    let n = m.nrows();
    let shift = lambda + Complex64::new(1e-10 * lambda.norm().max(1.0), 0.0);
    let lu = (m - CMatrix::identity(n, n) * shift).lu();
    let mut v = CVector::from_fn(n, |i, _| Complex64::new(1.0 + 0.1 * (i as f64).sin(), 0.05 * (i as f64).cos()));
    for _ in 0..3 {
        v = lu.solve(&v).ok_or(Error::Singular)?;
        let norm = v.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Singular);
        }
        v /= c(norm);
    }
    Ok(v)
}

/// Split `L_0` into its dominant rank-one part and the remainder.
pub fn spectral_decompose(l0: &CMatrix) -> Result<SpectralData> {
    if !l0.is_square() || l0.is_empty() {
        return Err(Error::InvalidParameter("operator must be a non-empty square matrix".into()));
    }
    if l0.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidParameter("operator has non-finite entries".into()));
    }
    let n = l0.nrows();
    let mut eig = eigenvalues(l0)?;
    eig.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let moduli: Vec<f64> = eig.iter().map(|z| z.norm()).collect();
    let first = moduli[0];
    let second = moduli.get(1).copied().unwrap_or(0.0);
    if first == 0.0 || (first - second) / first < GAP_TOL {
        return Err(Error::DegenerateTopEigenvalue { first, second });
    }

    let (right, left) = if n == 1 {
        (CVector::from_element(1, c(1.0)), CVector::from_element(1, c(1.0)))
    } else {
        (inverse_iteration(l0, eig[0])?, inverse_iteration(&l0.transpose(), eig[0])?)
    };
    let norm = linalg::pairing(&left, &right);
    if norm.norm() < 1e-14 {
        return Err(Error::DegenerateTopEigenvalue { first, second });
    }
    let pi = (&right * left.transpose()).map(|z| z / norm);
    let lambda = linalg::pairing(&left, &(l0 * &right)) / norm;
    let q = l0 - pi.map(|z| z * lambda);

    let scale = spectral_norm(l0).max(1.0);
    let mut power = CMatrix::identity(n, n);
    let mut norms = vec![1.0];
    let mut nilpotency_index = None;
    for k in 1..=POWER_HORIZON {
        power = &power * &q;
        let nk = spectral_norm(&power);
        let prev = norms[k - 1];
        norms.push(nk);
        if nk <= NILPOTENT_FLOOR * scale && nk <= NILPOTENT_CLIFF * prev {
            nilpotency_index = Some(k);
            break;
        }
    }
    let (kappa, c_q) = match nilpotency_index {
        Some(idx) => (0.0, norms[..idx].iter().copied().fold(0.0, f64::max)),
        None => {
            let kappa = second;
            let c_q = norms
                .iter()
                .enumerate()
                .filter(|&(_, &v)| v > 1e-250)
                .map(|(k, &v)| v / kappa.powi(k as i32))
                .filter(|r| r.is_finite())
                .fold(0.0, f64::max);
            (kappa, c_q)
        }
    };
    Ok(SpectralData { lambda, pi, q, kappa, c_q, nilpotency_index, right, left, moduli })
}

/// `u_1 = u_2 / <xi_0, u_2>` where `Pi = u_2 xi_2^T` is the spectral projector.
pub fn compute_u1(spec: &SpectralData, family: &OperatorFamily) -> Result<CVector> {
    let pairing = linalg::pairing(family.xi0(), &spec.right);
    if pairing.norm() < PAIRING_TOL * spec.right.norm() {
        return Err(Error::VanishingPairing(pairing.norm()));
    }
    Ok(spec.right.map(|z| z / pairing))
}

/// `E exp(i sum_l <t_l, A_l>)` from the operator product.
pub fn coding_char_fn(family: &OperatorFamily, t_seq: &[Vec<f64>]) -> Result<Complex64> {
    let runs: Vec<(&[f64], usize)> = t_seq.iter().map(|t| (t.as_slice(), 1)).collect();
    coding_char_fn_runs(family, &runs)
}

/// Same as [`coding_char_fn`] for run-length encoded frequencies: each
/// `(t, len)` applies `L_t` to `len` consecutive times.
pub fn coding_char_fn_runs(family: &OperatorFamily, runs: &[(&[f64], usize)]) -> Result<Complex64> {
    for (t, _) in runs {
        family.check_frequency(t)?;
    }
    let mut v = family.seed_vector();
    let mut cache: Vec<(Vec<f64>, CMatrix)> = Vec::new();
    for &(t, len) in runs {
        if len == 0 {
            continue;
        }
        let l = match cache.iter().position(|(key, _)| key.as_slice() == t) {
            Some(i) => &cache[i].1,
            None => {
                cache.push((t.to_vec(), family.operator(t)?));
                &cache.last().expect("just pushed").1
            }
        };
        for _ in 0..len {
            v = family.apply(l, &v);
        }
    }
    Ok(family.contract(&v))
}

/// Result of the (I1)/(I2) sweep.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionsReport {
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub kappa: f64,
    pub c_q: f64,
    pub nilpotency_index: Option<usize>,
    /// `sup_{t, n <= n_max} |L_t^n|`.
    pub sup_norm: f64,
    pub n_max: usize,
    pub records: Vec<SpectralRecord>,
    pub pass: bool,
}

/// One line of the spectral JSONL output.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SpectralRecord {
    pub model: String,
    pub t: Vec<f64>,
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub kappa: f64,
    pub sup_norm: f64,
}

/// Sup of `|L_t^n|` over `n <= n_max`.
pub fn power_norm_sup(l: &CMatrix, n_max: usize) -> f64 {
    let mut power = l.clone();
    let mut sup = spectral_norm(&power);
    for _ in 1..n_max {
        power = &power * l;
        sup = sup.max(spectral_norm(&power));
        if !sup.is_finite() {
            break;
        }
    }
    sup
}

pub fn check_conditions_i(family: &OperatorFamily, t_grid: &[Vec<f64>], n_max: usize) -> ConditionsReport {
    let name = family.model().kind_name().to_string();
    let spec = spectral_decompose(&family.unperturbed());
    let mut sup = 0.0f64;
    let mut records = Vec::new();
    let mut grid_ok = true;
    for t in t_grid {
        let (l, s) = match family.operator(t) {
            Ok(l) => {
                let s = power_norm_sup(&l, n_max);
                (Some(l), s)
            }
            Err(_) => (None, f64::INFINITY),
        };
        grid_ok &= l.is_some();
        sup = sup.max(s);
        let (lambda, kappa) = match l.as_ref().map(spectral_decompose) {
            Some(Ok(d)) => (d.lambda, d.kappa),
            _ => (Complex64::new(f64::NAN, f64::NAN), f64::NAN),
        };
        records.push(SpectralRecord { model: name.clone(), t: t.clone(), lambda_re: lambda.re, lambda_im: lambda.im, kappa, sup_norm: s });
    }
    match spec {
        Ok(d) => ConditionsReport {
            lambda_re: d.lambda.re,
            lambda_im: d.lambda.im,
            kappa: d.kappa,
            c_q: d.c_q,
            nilpotency_index: d.nilpotency_index,
            sup_norm: sup,
            n_max,
            records,
            pass: grid_ok && sup.is_finite() && d.kappa < 1.0,
        },
        Err(_) => ConditionsReport {
            lambda_re: f64::NAN,
            lambda_im: f64::NAN,
            kappa: f64::NAN,
            c_q: f64::NAN,
            nilpotency_index: None,
            sup_norm: sup,
            n_max,
            records,
            pass: false,
        },
    }
}

/// Real and imaginary parts interleaved, one matrix row per CSV row.
pub fn write_matrix_csv<W: std::io::Write>(m: &CMatrix, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = (0..m.ncols()).flat_map(|j| [format!("re{j}"), format!("im{j}")]).collect();
    w.write_record(&header)?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).flat_map(|j| [format!("{:?}", m[(i, j)].re), format!("{:?}", m[(i, j)].im)]).collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::catalog;
    use crate::models::{FourierObservable, StateObservable};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn chain() -> ProcessModel {
        catalog::two_state()
    }

    #[test]
    fn doubling_unperturbed_halves_even_modes() {
        let l = build_operator(&catalog::doubling_cos(4), &[0.0], None).unwrap();
        let idx = |k: i64| (k + 4) as usize;
        for j in -4..=4 {
            assert_eq!(l[(idx(j), idx(2))], c(if j == 1 { 1.0 } else { 0.0 }));
            assert_eq!(l[(idx(j), idx(1))], c(0.0));
        }
    }

    #[test]
    fn doubling_quadrature_agrees_with_exact_at_zero() {
        // a vanishingly small frequency goes through the quadrature path
        let l = build_operator(&catalog::doubling_cos(8), &[1e-300], None).unwrap();
        let exact = build_operator(&catalog::doubling_cos(8), &[0.0], None).unwrap();
        assert!((l - exact).camax() <= 1e-12);
    }

    #[test]
    fn chain_operator() {
        let l = build_operator(&chain(), &[0.0], None).unwrap();
        assert_eq!(l, linalg::to_complex(&DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.2, 0.8])));

        let f = StateObservable::new(vec![vec![1.0], vec![0.0]]).unwrap();
        let p = DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.2, 0.8]);
        let model = ProcessModel::Markov(FiniteMarkovChain::new(p, f, None).unwrap());
        let t = 0.3;
        let l = build_operator(&model, &[t], None).unwrap();
        let e = Complex64::from_polar(1.0, t);
        let hand = CMatrix::from_row_slice(2, 2, &[e * 0.7, e * 0.3, c(0.2), c(0.8)]);
        assert!((l - hand).camax() < 1e-15);
    }

    #[test]
    fn frequency_out_of_range() {
        assert!(matches!(build_operator(&chain(), &[0.6], None), Err(Error::FrequencyOutOfRange { .. })));
        assert!(matches!(
            OperatorFamily::with_options(&catalog::doubling_coboundary(4), Some(1), 0.5),
            Err(Error::TruncationTooSmall { .. })
        ));
    }

    #[test]
    fn decompose_two_state() {
        let l0 = build_operator(&chain(), &[0.0], None).unwrap();
        let d = spectral_decompose(&l0).unwrap();
        assert_abs_diff_eq!(d.lambda.re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.kappa, 0.5, epsilon = 1e-12);
        assert!(d.invariant_residual(&l0) < 1e-8);
        assert_abs_diff_eq!(d.pi.trace().re, 1.0, epsilon = 1e-12);
        assert!(d.nilpotency_index.is_none());
    }

    #[test]
    fn identity_is_degenerate() {
        let id = CMatrix::identity(3, 3);
        assert!(matches!(spectral_decompose(&id), Err(Error::DegenerateTopEigenvalue { .. })));
    }

    #[test]
    fn doubling_remainder_is_nilpotent() {
        let l0 = build_operator(&catalog::doubling_cos(8), &[0.0], None).unwrap();
        let d = spectral_decompose(&l0).unwrap();
        assert_abs_diff_eq!(d.lambda.re, 1.0, epsilon = 1e-12);
        assert_eq!(d.kappa, 0.0);
        assert_eq!(d.nilpotency_index, Some(4));
        assert!(d.invariant_residual(&l0) < 1e-8);
    }

    #[test]
    fn u1_for_chain_and_doubling() {
        let fam = OperatorFamily::new(&chain()).unwrap();
        let d = spectral_decompose(&fam.unperturbed()).unwrap();
        let u1 = compute_u1(&d, &fam).unwrap();
        for z in u1.iter() {
            assert_abs_diff_eq!(z.re, 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-10);
        }
        let fam = OperatorFamily::new(&catalog::doubling_cos(8)).unwrap();
        let d = spectral_decompose(&fam.unperturbed()).unwrap();
        let u1 = compute_u1(&d, &fam).unwrap();
        for (i, z) in u1.iter().enumerate() {
            assert_abs_diff_eq!(z.re, if i == 8 { 1.0 } else { 0.0 }, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_frequencies_code_one() {
        for model in [chain(), catalog::doubling_cos(8), catalog::iid_standard(2)] {
            let fam = OperatorFamily::new(&model).unwrap();
            let z = coding_char_fn(&fam, &vec![vec![0.0; model.dim()]; 5]).unwrap();
            assert_abs_diff_eq!(z.re, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn chain_single_step_matches_enumeration() {
        let m = chain();
        let fam = OperatorFamily::new(&m).unwrap();
        let t = 0.37;
        let got = coding_char_fn(&fam, &[vec![t]]).unwrap();
        let expect = Complex64::from_polar(0.4, t * 0.6) + Complex64::from_polar(0.6, -t * 0.4);
        assert!((got - expect).norm() < 1e-14);
    }

    #[test]
    fn chain_two_steps_from_nonstationary_start() {
        // E e^{i(s A_0 + t A_1)} by enumerating the four state pairs
        let ProcessModel::Markov(chain) = chain() else { unreachable!() };
        let chain = chain.with_initial(vec![1.0, 0.0]).unwrap();
        let m = ProcessModel::Markov(chain.clone());
        let fam = OperatorFamily::new(&m).unwrap();
        let (s, t) = (0.2, -0.45);
        let f = [0.6, -0.4];
        let p = chain.transition();
        let mut expect = Complex64::new(0.0, 0.0);
        for i in 0..2 {
            for j in 0..2 {
                expect += Complex64::from_polar(chain.initial()[i] * p[(i, j)], s * f[i] + t * f[j]);
            }
        }
        let got = coding_char_fn(&fam, &[vec![s], vec![t]]).unwrap();
        assert!((got - expect).norm() < 1e-14);
    }

    #[test]
    fn doubling_two_steps_matches_quadrature() {
        let g = FourierObservable::trig(1, &[(1, vec![1.0])], &[(2, vec![0.5])]).unwrap();
        let m = ProcessModel::Doubling(DoublingMap::new(g.clone(), 16).unwrap());
        let fam = OperatorFamily::new(&m).unwrap();
        let ts = [0.3, -0.2, 0.4];
        let got = coding_char_fn(&fam, &ts.iter().map(|&t| vec![t]).collect::<Vec<_>>()).unwrap();
        // the integrand depends on x through 2^3 x, so a fine grid is exact
        let n = 1 << 14;
        let mut sum = Complex64::new(0.0, 0.0);
        let mut v = [0.0];
        for i in 0..n {
            let mut x = (i as f64 + 0.5) / n as f64;
            let mut phase = 0.0;
            for &t in &ts {
                g.eval(x, &mut v);
                phase += t * v[0];
                x = (2.0 * x).fract();
            }
            sum += Complex64::from_polar(1.0 / n as f64, phase);
        }
        assert!((got - sum).norm() < 1e-10, "{got} vs {sum}");
    }

    #[test]
    fn truncation_stability() {
        let m = catalog::doubling_cos(8);
        let a = OperatorFamily::with_options(&m, Some(32), 0.5).unwrap();
        let b = OperatorFamily::with_options(&m, Some(64), 0.5).unwrap();
        let ts: Vec<Vec<f64>> = [0.5, -0.1, 0.3, 0.45, -0.5].iter().map(|&t| vec![t]).collect();
        let za = coding_char_fn(&a, &ts).unwrap();
        let zb = coding_char_fn(&b, &ts).unwrap();
        assert!((za - zb).norm() <= 1e-10);
    }

    #[test]
    fn conditions_pass_on_shipped_models() {
        let fam = OperatorFamily::new(&chain()).unwrap();
        let grid: Vec<Vec<f64>> = (-5..=5).map(|i| vec![0.1 * i as f64]).collect();
        let r = check_conditions_i(&fam, &grid, 200);
        assert!(r.pass);
        assert!(r.sup_norm <= 2.0 + 1e-9);

        let fam = OperatorFamily::new(&catalog::iid_standard(1)).unwrap();
        let r = check_conditions_i(&fam, &[vec![0.0]], 50);
        assert!(r.pass);
        assert_abs_diff_eq!(r.sup_norm, 1.0);

        let fam = OperatorFamily::with_options(&catalog::doubling_cos(8), Some(32), 0.5).unwrap();
        let grid: Vec<Vec<f64>> = [-0.5, 0.0, 0.25, 0.5].iter().map(|&t| vec![t]).collect();
        let r = check_conditions_i(&fam, &grid, 200);
        assert!(r.pass, "{r:?}");
        assert!(r.sup_norm.is_finite());
    }

    #[test]
    fn pi_reproduces_xi0_pairing() {
        let fam = OperatorFamily::new(&chain()).unwrap();
        let d = spectral_decompose(&fam.unperturbed()).unwrap();
        let u1 = compute_u1(&d, &fam).unwrap();
        let mut rng = crate::rng::stream_rng(1, crate::rng::Purpose::Misc, 0);
        for _ in 0..100 {
            use rand::Rng;
            let v = CVector::from_fn(2, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let proj = &d.pi * &v;
            let expect = u1.map(|z| z * linalg::pairing(fam.xi0(), &v));
            assert!((proj - expect).norm() < 1e-8);
            let lhs = linalg::pairing(fam.xi0(), &(&d.pi * &v));
            assert!((lhs - linalg::pairing(fam.xi0(), &v)).norm() < 1e-10);
        }
    }
}
