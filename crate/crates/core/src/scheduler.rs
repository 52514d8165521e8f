//! Triadic Cantor-like decomposition of each dyadic level `[2^n, 2^{n+1})`
//! into intervals `I_{n,j}` and gaps `J_{n,j}`, `0 <= j < F = 2^f`,
//! `f = floor(beta n)`, laid out as `J_0 I_0 J_1 I_1 ... J_{F-1} I_{F-1}`.
//!
//! With `e = floor(eps n)`: `|J_0| = 2^e 2^f`, `|J_j| = 2^e 2^r` for `j >= 1`
//! where `r` is the lowest set bit of `j`, and every interval has length
//! `2^{n-f} - (f+2) 2^{e-1}`. The gaps of one level add up to
//! `2^e 2^{f-1} (f+2)`, so the level tiles exactly.
//!
//! When that interval length is not a positive integer the level is kept as a
//! single interval with no gaps, so [`gap_mass`] is defined for every `k`.

use num::rational::Ratio;
use num::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{partial_sums, SamplePath};

pub type Rational = Ratio<i64>;

const MAX_LEVEL: u32 = 62;

/// Integrability exponent `p`; bounded observables use `Infinite`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exponent {
    Finite(Rational),
    Infinite,
}

impl Exponent {
    pub fn to_f64(self) -> f64 {
        match self {
            Exponent::Finite(p) => p.to_f64().unwrap_or(f64::NAN),
            Exponent::Infinite => f64::INFINITY,
        }
    }

    /// `1/p`, zero for `p = inf`.
    pub fn reciprocal(self) -> Rational {
        match self {
            Exponent::Finite(p) => p.recip(),
            Exponent::Infinite => Rational::zero(),
        }
    }
}

impl std::str::FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "Infinity" | "∞" => Ok(Exponent::Infinite),
            other => Ok(Exponent::Finite(parse_rational(other)?)),
        }
    }
}

/// Parse `"2/3"`, `"3"` or a finite decimal such as `"0.05"` exactly.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::InvalidParameter(format!("`{s}` is not a rational number"));
    if let Some((a, b)) = s.split_once('/') {
        let num: i64 = a.trim().parse().map_err(|_| bad())?;
        let den: i64 = b.trim().parse().map_err(|_| bad())?;
        if den == 0 {
            return Err(bad());
        }
        return Ok(Rational::new(num, den));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || frac.len() > 15 || !frac.bytes().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let negative = int.starts_with('-');
        let whole: i64 = if int.is_empty() || int == "-" { 0 } else { int.parse().map_err(|_| bad())? };
        let den = 10i64.pow(frac.len() as u32);
        let f: i64 = frac.parse().map_err(|_| bad())?;
        let magnitude = whole.abs() * den + f;
        return Ok(Rational::new(if negative { -magnitude } else { magnitude }, den));
    }
    Ok(Rational::from_integer(s.parse().map_err(|_| bad())?))
}

/// `beta = p/(2p-2)` and `lambda = p/(4p-4)`; at this `beta` the two error
/// exponents `beta/2` and `(1-beta)/2 + beta/p` coincide.
pub fn optimal_beta(p: Exponent) -> Result<(Rational, Rational)> {
    match p {
        Exponent::Infinite => Ok((Rational::new(1, 2), Rational::new(1, 4))),
        Exponent::Finite(p) => {
            if p <= Rational::from_integer(2) {
                return Err(Error::InvalidParameter(format!("p must exceed 2, got {p}")));
            }
            let one = Rational::one();
            let beta = p / (Rational::from_integer(2) * (p - one));
            let lambda = p / (Rational::from_integer(4) * (p - one));
            Ok((beta, lambda))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchedulerParams {
    pub beta: Rational,
    pub eps: Rational,
    pub p: Exponent,
}

impl SchedulerParams {
    pub fn new(beta: Rational, eps: Rational) -> Result<Self> {
        Self::with_exponent(beta, eps, Exponent::Infinite)
    }

    pub fn with_exponent(beta: Rational, eps: Rational, p: Exponent) -> Result<Self> {
        let zero = Rational::zero();
        let one = Rational::one();
        if !(beta > zero && beta < one) {
            return Err(Error::InvalidParameter(format!("beta must lie in (0, 1), got {beta}")));
        }
        if !(eps > zero && eps < one - beta) {
            return Err(Error::InvalidParameter(format!("eps must lie in (0, 1 - beta) = (0, {}), got {eps}", one - beta)));
        }
        Ok(Self { beta, eps, p })
    }

    /// `beta = p/(2p-2)` for the given `p`.
    pub fn optimal(p: Exponent, eps: Rational) -> Result<Self> {
        let (beta, _) = optimal_beta(p)?;
        Self::with_exponent(beta, eps, p)
    }

    pub fn f(&self, n: u32) -> u32 {
        floor_mul(self.beta, n)
    }

    pub fn e(&self, n: u32) -> u32 {
        floor_mul(self.eps, n)
    }

    pub fn beta_f64(&self) -> f64 {
        self.beta.to_f64().unwrap_or(f64::NAN)
    }

    pub fn eps_f64(&self) -> f64 {
        self.eps.to_f64().unwrap_or(f64::NAN)
    }
}

fn floor_mul(r: Rational, n: u32) -> u32 {
    (r * Rational::from_integer(n as i64)).floor().to_integer() as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Interval,
    Gap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Block {
    pub kind: BlockKind,
    pub level: u32,
    pub index: u64,
    pub start: u64,
    pub length: u64,
    /// Gaps only.
    pub rank: Option<u32>,
}

impl Block {
    pub fn end(&self) -> u64 {
        self.start + self.length
    }
}

/// Closed-form description of one level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LevelLayout {
    pub n: u32,
    pub f: u32,
    pub e: u32,
    /// `F = 2^f` interval/gap pairs when `valid`, otherwise one interval.
    pub pairs: u64,
    pub interval_len: u64,
    pub gap_total: u64,
    pub valid: bool,
    pub reason: Option<String>,
}

pub fn level_layout(n: u32, params: &SchedulerParams) -> Result<LevelLayout> {
    if n > MAX_LEVEL {
        return Err(Error::InvalidParameter(format!("level {n} exceeds the supported maximum {MAX_LEVEL}")));
    }
    let f = params.f(n);
    let e = params.e(n);
    let level_len = 1u64 << n;
    // twice the removed length; odd when e = 0 and f is odd
    let removed_twice = (f as u64 + 2) << e;
    let invalid =
        |reason: String| LevelLayout { n, f, e, pairs: 1, interval_len: level_len, gap_total: 0, valid: false, reason: Some(reason) };
    if !removed_twice.is_multiple_of(2) {
        return Ok(invalid(format!("2^(n-f) - (f+2) 2^(e-1) = 2^{} - {}/2 is not an integer", n - f, f + 2)));
    }
    let removed = removed_twice / 2;
    let block = 1u64 << (n - f);
    if removed >= block {
        return Ok(invalid(format!("2^(n-f) - (f+2) 2^(e-1) = {block} - {removed} < 1")));
    }
    let gap_total = ((f as u64 + 2) << e) << f >> 1;
    Ok(LevelLayout { n, f, e, pairs: 1 << f, interval_len: block - removed, gap_total, valid: true, reason: None })
}

fn gap_len(layout: &LevelLayout, j: u64) -> (u64, u32) {
    let r = if j == 0 { layout.f } else { j.trailing_zeros() };
    ((1u64 << layout.e) << r, r)
}

/// All blocks of a valid level, in left-to-right order.
pub fn decompose_level(n: u32, params: &SchedulerParams) -> Result<Vec<Block>> {
    let layout = level_layout(n, params)?;
    if !layout.valid {
        return Err(Error::LevelTooSmall { n, reason: layout.reason.unwrap_or_default() });
    }
    Ok(level_blocks(&layout))
}

/// Blocks of any level; invalid levels give one interval covering the level.
pub fn level_blocks(layout: &LevelLayout) -> Vec<Block> {
    let n = layout.n;
    let mut start = 1u64 << n;
    if !layout.valid {
        return vec![Block { kind: BlockKind::Interval, level: n, index: 0, start, length: layout.interval_len, rank: None }];
    }
    let mut out = Vec::with_capacity(2 * layout.pairs as usize);
    for j in 0..layout.pairs {
        let (len, r) = gap_len(layout, j);
        out.push(Block { kind: BlockKind::Gap, level: n, index: j, start, length: len, rank: Some(r) });
        start += len;
        out.push(Block { kind: BlockKind::Interval, level: n, index: j, start, length: layout.interval_len, rank: None });
        start += layout.interval_len;
    }
    out
}

/// `sum_{i=1}^{count} 2^{v(i)}`, `v` the lowest set bit.
fn lowbit_sum(count: u64) -> u64 {
    let mut total = 0u64;
    let mut r = 0u32;
    while r < 64 && (count >> r) > 0 {
        let with_r = (count >> r) - (count >> (r + 1));
        total += with_r << r;
        r += 1;
    }
    total
}

/// Gap positions among the first `offset + 1` positions of a level.
fn level_gap_prefix(layout: &LevelLayout, offset: u64) -> u64 {
    if !layout.valid {
        return 0;
    }
    let scale = 1u64 << layout.e;
    let j0 = scale << layout.f;
    let gaps_before = |j: u64| if j == 0 { 0 } else { j0 + scale * lowbit_sum(j - 1) };
    let start_of = |j: u64| gaps_before(j) + j * layout.interval_len;
    // largest pair index whose gap starts at or before the offset
    let (mut lo, mut hi) = (0u64, layout.pairs - 1);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if start_of(mid) <= offset {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let (len, _) = gap_len(layout, lo);
    gaps_before(lo) + (offset - start_of(lo) + 1).min(len)
}

/// `|J cap [0, k]|` where `J` is the union of all gaps of all levels.
pub fn gap_mass(k: u64, params: &SchedulerParams) -> Result<u64> {
    if k == 0 {
        return Ok(0);
    }
    let top = 63 - k.leading_zeros();
    let mut total = 0u64;
    for n in 0..top {
        total += level_layout(n, params)?.gap_total;
    }
    let layout = level_layout(top, params)?;
    Ok(total + level_gap_prefix(&layout, k - (1u64 << top)))
}

/// `C = sup_k gap_mass(k) / k^{beta + 3 eps/2}` over `1 <= k < 2^{max_level+1}`.
/// The ratio peaks at gap ends, so those are the only points visited.
pub fn gap_mass_constant(params: &SchedulerParams, max_level: u32) -> Result<f64> {
    let expo = params.beta_f64() + 1.5 * params.eps_f64();
    let mut c = 0.0f64;
    let mut mass = 0u64;
    for n in 0..=max_level {
        for b in level_blocks(&level_layout(n, params)?) {
            if b.kind == BlockKind::Gap {
                mass += b.length;
                c = c.max(mass as f64 / ((b.end() - 1) as f64).powf(expo));
            }
        }
    }
    Ok(c)
}

/// `X_{n,j} = sum_{l in I_{n,j}} A_l` for every interval block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockSum {
    pub level: u32,
    pub index: u64,
    pub start: u64,
    pub length: u64,
    pub sum: Vec<f64>,
}

pub fn block_sums(path: &SamplePath, schedule: &[Block]) -> Result<Vec<BlockSum>> {
    let sums = partial_sums(path);
    let len = path.len();
    schedule
        .iter()
        .filter(|b| b.kind == BlockKind::Interval)
        .map(|b| {
            let end = b.end() as usize;
            if end > len {
                return Err(Error::PathTooShort { len, needed: end - 1 });
            }
            Ok(BlockSum { level: b.level, index: b.index, start: b.start, length: b.length, sum: sums.window(b.start as usize, end) })
        })
        .collect()
}

/// CSV export `(n, j, kind, rank, start, length, triadic)`; `triadic = false`
/// marks the single-interval convention for levels below the threshold.
pub fn write_schedule_csv<W: std::io::Write>(blocks: &[Block], params: &SchedulerParams, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "j", "kind", "rank", "start", "length", "triadic"])?;
    for b in blocks {
        let triadic = level_layout(b.level, params)?.valid;
        w.write_record([
            b.level.to_string(),
            b.index.to_string(),
            match b.kind {
                BlockKind::Interval => "interval".to_string(),
                BlockKind::Gap => "gap".to_string(),
            },
            b.rank.map(|r| r.to_string()).unwrap_or_default(),
            b.start.to_string(),
            b.length.to_string(),
            triadic.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
