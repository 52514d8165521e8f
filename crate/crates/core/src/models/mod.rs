//! Generative models of `R^d`-valued processes `(A_0, A_1, ...)`.
//!
//! Three families are supported:
//!
//! * [`DoublingMap`]: `A_l = f(T^l x)` for `T(x) = 2x mod 1` with `x` uniform
//!   and `f` a band-limited Fourier observable. Orbits are read off a random
//!   bit stream: the point `x_k` is the 64-bit window `0.b_{k+1} ... b_{k+64}`,
//!   so doubling is a left shift and no precision is lost along the orbit.
//! * [`FiniteMarkovChain`]: `A_l = f(X_l)` for a chain on `S` states with
//!   initial law `mu` and stationary law `m`.
//! * [`IidGaussian`]: independent `N(0, Sigma^2)` vectors.
//!
//! All simulation is reproducible from `(seed, replica)` through
//! [`crate::rng::path_rng`].

mod file;
mod observable;

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::path_rng;

pub use file::{load_model_file, parse_model, ModelFile};
pub use observable::{FourierObservable, StateObservable};

const ROW_SUM_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;

/// `x -> 2x mod 1` on the circle with a Fourier observable.
#[derive(Debug, Clone, PartialEq)]
pub struct DoublingMap {
    observable: FourierObservable,
    truncation: usize,
    /// `g` with `f = g - g o T`, when the observable is a known coboundary.
    transfer: Option<FourierObservable>,
}

impl DoublingMap {
    /// `truncation` is the Fourier cutoff `K` used by the operator builders.
    pub fn new(observable: FourierObservable, truncation: usize) -> Result<Self> {
        if truncation < observable.bandwidth() || truncation == 0 {
            return Err(Error::TruncationTooSmall { truncation, bandwidth: observable.bandwidth() });
        }
        Ok(Self { observable, truncation, transfer: None })
    }

    /// Record `g` such that the observable equals `g - g o T`.
    pub fn with_transfer(mut self, g: FourierObservable) -> Result<Self> {
        if g.dim() != self.observable.dim() {
            return Err(Error::InvalidModel("coboundary transfer function has the wrong dimension".into()));
        }
        self.transfer = Some(g);
        Ok(self)
    }

    pub fn observable(&self) -> &FourierObservable {
        &self.observable
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn transfer(&self) -> Option<&FourierObservable> {
        self.transfer.as_ref()
    }

    /// Orbit points `x_0, ..., x_{n-1}` as 64-bit binary fractions drawn from a
    /// stream of `n + 63` fresh bits; `x_{k+1}` is `x_k` shifted left by one
    /// with the next stream bit appended.
    pub fn orbit<R: RngCore + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<u64> {
        orbit_windows(n, rng)
    }
}

pub(crate) fn orbit_windows<R: RngCore + ?Sized>(n: usize, rng: &mut R) -> Vec<u64> {
    if n == 0 {
        return Vec::new();
    }
    let total_bits = n + 63;
    let words: Vec<u64> = (0..total_bits.div_ceil(64)).map(|_| rng.next_u64()).collect();
    let bit = |i: usize| (words[i / 64] >> (63 - i % 64)) & 1;
    let mut out = Vec::with_capacity(n);
    let mut w = words[0];
    out.push(w);
    for k in 1..n {
        w = (w << 1) | bit(63 + k);
        out.push(w);
    }
    out
}

/// Finite-state Markov chain with an observable on states.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMarkovChain {
    transition: DMatrix<f64>,
    observable: StateObservable,
    initial: Vec<f64>,
    stationary: Vec<f64>,
    cumulative: Vec<Vec<f64>>,
}

impl FiniteMarkovChain {
    /// `initial = None` starts the chain from its stationary law.
    pub fn new(transition: DMatrix<f64>, observable: StateObservable, initial: Option<Vec<f64>>) -> Result<Self> {
        let s = transition.nrows();
        if s == 0 || !transition.is_square() {
            return Err(Error::InvalidModel("transition matrix must be square and non-empty".into()));
        }
        if observable.states() != s {
            return Err(Error::InvalidModel(format!("observable has {} states, transition matrix has {s}", observable.states())));
        }
        for i in 0..s {
            let row = transition.row(i);
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidModel(format!("row {i} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidModel(format!("row {i} sums to {sum}, not 1")));
            }
        }
        let stationary = stationary_distribution(&transition)?;
        let initial = match initial {
            Some(mu) => {
                check_probability_vector(&mu, s, "initial distribution")?;
                mu
            }
            None => stationary.clone(),
        };
        let cumulative = (0..s)
            .map(|i| {
                let mut acc = 0.0;
                transition
                    .row(i)
                    .iter()
                    .map(|&p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Ok(Self { transition, observable, initial, stationary, cumulative })
    }

    /// Two-state chain `[[1-a, a], [b, 1-b]]` observed through
    /// `f = 1{state 0} - b/(a+b)`, started from stationarity.
    pub fn two_state(a: f64, b: f64) -> Result<Self> {
        let p = DMatrix::from_row_slice(2, 2, &[1.0 - a, a, b, 1.0 - b]);
        let pi0 = b / (a + b);
        let f = StateObservable::new(vec![vec![1.0 - pi0], vec![-pi0]])?;
        Self::new(p, f, None)
    }

    pub fn with_initial(mut self, initial: Vec<f64>) -> Result<Self> {
        check_probability_vector(&initial, self.states(), "initial distribution")?;
        self.initial = initial;
        Ok(self)
    }

    pub fn states(&self) -> usize {
        self.transition.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn observable(&self) -> &StateObservable {
        &self.observable
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn is_stationary_start(&self) -> bool {
        self.initial.iter().zip(&self.stationary).all(|(a, b)| (a - b).abs() <= STATIONARY_TOL)
    }

    /// Stationary mean `sum_s m_s f(s)`.
    pub fn stationary_mean(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.observable.dim()];
        for (s, &w) in self.stationary.iter().enumerate() {
            for (ai, v) in a.iter_mut().zip(self.observable.value(s)) {
                *ai += w * v;
            }
        }
        a
    }

    fn draw(cumulative: &[f64], u: f64) -> usize {
        cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1)
    }

    /// States `X_0, ..., X_{n-1}`.
    pub fn states_path<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        if n == 0 {
            return out;
        }
        let mut acc = 0.0;
        let init: Vec<f64> = self
            .initial
            .iter()
            .map(|&p| {
                acc += p;
                acc
            })
            .collect();
        let mut x = Self::draw(&init, rng.random::<f64>());
        out.push(x);
        for _ in 1..n {
            x = Self::draw(&self.cumulative[x], rng.random::<f64>());
            out.push(x);
        }
        out
    }
}

fn check_probability_vector(v: &[f64], len: usize, what: &str) -> Result<()> {
    if v.len() != len {
        return Err(Error::InvalidModel(format!("{what} has length {}, expected {len}", v.len())));
    }
    if v.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidModel(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::InvalidModel(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

/// Solve `m P = m`, `sum m = 1` by replacing one balance equation with the
/// normalization. A singular system means the stationary law is not unique.
fn stationary_distribution(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let s = p.nrows();
    let mut a = p.transpose() - DMatrix::identity(s, s);
    let mut rhs = nalgebra::DVector::zeros(s);
    for j in 0..s {
        a[(s - 1, j)] = 1.0;
    }
    rhs[s - 1] = 1.0;
    let m = a.lu().solve(&rhs).ok_or_else(|| Error::InvalidModel("stationary distribution is not unique".into()))?;
    let residual = (m.transpose() * p - m.transpose()).amax();
    if residual > STATIONARY_TOL || m.iter().any(|&x| x < -STATIONARY_TOL) {
        return Err(Error::InvalidModel(format!(
            "stationary distribution is not unique or not a probability vector (residual {residual:e})"
        )));
    }
    Ok(m.iter().map(|&x| x.max(0.0)).collect())
}

/// Independent `N(0, Sigma^2)` vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct IidGaussian {
    covariance: DMatrix<f64>,
    root: DMatrix<f64>,
}

impl IidGaussian {
    pub fn new(covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() == 0 {
            return Err(Error::InvalidModel("covariance must be non-empty".into()));
        }
        linalg::require_symmetric(&covariance, 1e-12)?;
        let root = linalg::psd_sqrt(&covariance, 1e-10)?;
        Ok(Self { covariance, root })
    }

    pub fn standard(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim)).expect("identity is PSD")
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn root(&self) -> &DMatrix<f64> {
        &self.root
    }
}

/// A generative specification of an `R^d`-valued process.
#[derive(Debug, Clone, PartialEq)]
pub enum ProcessModel {
    Doubling(DoublingMap),
    Markov(FiniteMarkovChain),
    Gaussian(IidGaussian),
}

impl ProcessModel {
    pub fn dim(&self) -> usize {
        match self {
            ProcessModel::Doubling(m) => m.observable.dim(),
            ProcessModel::Markov(m) => m.observable.dim(),
            ProcessModel::Gaussian(m) => m.covariance.nrows(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ProcessModel::Doubling(_) => "doubling",
            ProcessModel::Markov(_) => "markov",
            ProcessModel::Gaussian(_) => "gaussian",
        }
    }

    /// Short stable hash of the full model description.
    pub fn descriptor_hash(&self) -> String {
        let mut desc = String::new();
        let _ = write!(desc, "{self:?}");
        let digest = Sha256::digest(desc.as_bytes());
        hex::encode(&digest[..8])
    }

    /// Stationary mean of the observable.
    pub fn stationary_mean(&self) -> Vec<f64> {
        match self {
            ProcessModel::Doubling(m) => m.observable.mean(),
            ProcessModel::Markov(m) => m.stationary_mean(),
            ProcessModel::Gaussian(m) => vec![0.0; m.covariance.nrows()],
        }
    }

    /// Sample `(A_0, ..., A_{n-1})` for replica 0 of `seed`.
    pub fn simulate(&self, n: usize, seed: u64) -> Result<SamplePath> {
        self.simulate_replica(n, seed, 0)
    }

    pub fn simulate_replica(&self, n: usize, seed: u64, replica: u64) -> Result<SamplePath> {
        let mut rng = path_rng(seed, replica);
        let values = self.sample_values(n, &mut rng)?;
        Ok(SamplePath { dim: self.dim(), values, seed, replica, model_hash: self.descriptor_hash() })
    }

    /// Raw row-major `n x d` values drawn from `rng`.
    pub fn sample_values(&self, n: usize, rng: &mut ChaCha20Rng) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::InvalidParameter("path length n must be at least 1".into()));
        }
        let d = self.dim();
        let mut values = vec![0.0; n * d];
        match self {
            ProcessModel::Doubling(m) => {
                for (k, w) in orbit_windows(n, rng).into_iter().enumerate() {
                    m.observable.eval_phase(w, &mut values[k * d..(k + 1) * d]);
                }
            }
            ProcessModel::Markov(m) => {
                for (k, s) in m.states_path(n, rng).into_iter().enumerate() {
                    values[k * d..(k + 1) * d].copy_from_slice(m.observable.value(s));
                }
            }
            ProcessModel::Gaussian(m) => {
                for k in 0..n {
                    let z = linalg::gaussian_from_root(&m.root, rng);
                    values[k * d..(k + 1) * d].copy_from_slice(z.as_slice());
                }
            }
        }
        Ok(values)
    }
}

/// A realization `(A_0, ..., A_{n-1})`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub dim: usize,
    pub values: Vec<f64>,
    pub seed: u64,
    pub replica: u64,
    pub model_hash: String,
}

impl SamplePath {
    /// Wrap externally produced values (row-major, `values.len() = n * dim`).
    pub fn from_values(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) || values.is_empty() {
            return Err(Error::InvalidParameter("path values must form a non-empty n x d array".into()));
        }
        Ok(Self { dim, values, seed: 0, replica: 0, model_hash: String::new() })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn scalar(&self) -> Option<&[f64]> {
        (self.dim == 1).then_some(self.values.as_slice())
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = std::iter::once("k".to_string()).chain((0..self.dim).map(|i| format!("a{i}"))).collect();
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut rec = vec![k.to_string()];
            rec.extend(self.row(k).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Prefix sums `S_k = sum_{l < k} A_l` for `k = 0..=n`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixSums {
    pub dim: usize,
    sums: Vec<f64>,
}

impl PrefixSums {
    pub fn len(&self) -> usize {
        self.sums.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.sums.is_empty()
    }

    pub fn get(&self, k: usize) -> &[f64] {
        &self.sums[k * self.dim..(k + 1) * self.dim]
    }

    /// `S_end - S_start = sum_{start <= l < end} A_l`.
    pub fn window(&self, start: usize, end: usize) -> Vec<f64> {
        self.get(end).iter().zip(self.get(start)).map(|(b, a)| b - a).collect()
    }
}

/// Left fold of the path: `S_0 = 0`, `S_{k+1} = S_k + A_k`.
pub fn partial_sums(path: &SamplePath) -> PrefixSums {
    let d = path.dim;
    let n = path.len();
    let mut sums = vec![0.0; (n + 1) * d];
    for k in 0..n {
        for i in 0..d {
            sums[(k + 1) * d + i] = sums[k * d + i] + path.values[k * d + i];
        }
    }
    PrefixSums { dim: d, sums }
}

/// The models used throughout the documentation and the test suites.
pub mod catalog {
    use super::*;

    /// Doubling map with `f(x) = cos(2 pi x)`, truncation `K`.
    pub fn doubling_cos(truncation: usize) -> ProcessModel {
        ProcessModel::Doubling(DoublingMap::new(FourierObservable::cosine(1, 1.0), truncation).expect("K >= 1"))
    }

    /// Doubling map with the coboundary `f = g - g o T`, `g = cos(2 pi x)`.
    pub fn doubling_coboundary(truncation: usize) -> ProcessModel {
        let g = FourierObservable::cosine(1, 1.0);
        let f = FourierObservable::coboundary_of(&g);
        ProcessModel::Doubling(DoublingMap::new(f, truncation).and_then(|m| m.with_transfer(g)).expect("K >= 2"))
    }

    /// Two-state chain with `a = 0.3`, `b = 0.2`, centered indicator of state 0.
    pub fn two_state() -> ProcessModel {
        ProcessModel::Markov(FiniteMarkovChain::two_state(0.3, 0.2).expect("valid chain"))
    }

    /// Standard normal vectors in `R^d`.
    pub fn iid_standard(dim: usize) -> ProcessModel {
        ProcessModel::Gaussian(IidGaussian::standard(dim))
    }
}
