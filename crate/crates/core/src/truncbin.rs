//! Truncated binomial sums and machine checks of their monotonicity,
//! threshold and concentration behaviour.
//!
//! `S(n, j, k) = Pr[j <= I <= k]` for `I ~ Binomial(n, p)`, and
//! `S(n, j) = S(n, 0, j)`. Individual terms are evaluated in log space with
//! the saddle-point decomposition (Stirling remainder plus deviance), which
//! keeps relative accuracy near machine precision for every `n` and `i`.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::em::{flip_probability, PrivacyParams};
use crate::error::{Error, Result};
use crate::numeric::neumaier;

/// Tolerance used when comparing neighbouring values in the scans.
pub const SCAN_TOLERANCE: f64 = 1e-12;
/// Step cap for [`interchange_point`].
pub const INTERCHANGE_CAP: u64 = 100_000;

/// A partial binomial sum `Pr[lower <= I <= upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedSumQuery {
    n: u64,
    lower: u64,
    upper: u64,
    p: f64,
}

impl TruncatedSumQuery {
    pub fn new(n: u64, lower: u64, upper: u64, p: f64) -> Result<Self> {
        if lower > upper || upper > n {
            return Err(Error::InvalidParameter(format!(
                "need 0 <= lower <= upper <= n, got lower={lower} upper={upper} n={n}"
            )));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("p must lie in [0, 1], got {p}")));
        }
        Ok(Self { n, lower, upper, p })
    }

    pub fn n(&self) -> u64 {
        self.n
    }
    pub fn lower(&self) -> u64 {
        self.lower
    }
    pub fn upper(&self) -> u64 {
        self.upper
    }
    pub fn p(&self) -> f64 {
        self.p
    }
}

// Stirling remainder: ln(n!) - (n + 1/2) ln n + n - ln sqrt(2 pi).
fn stirlerr(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
    if n <= 15.0 {
        // n! is exact in f64 up to 22!
        let fact: f64 = (1..=n as u64).map(|i| i as f64).product();
        return fact.ln() - (n + 0.5) * n.ln() + n - LN_SQRT_2PI;
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

// Deviance term x ln(x / m) + m - x, accurate when x is close to m.
fn bd0(x: f64, m: f64) -> f64 {
    if (x - m).abs() < 0.1 * (x + m) {
        let mut v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / m).ln() + m - x
    }
}

/// `ln Pr[I = i]` for `I ~ Binomial(n, p)`.
pub fn ln_pmf(n: u64, i: u64, p: f64) -> f64 {
    if i > n {
        return f64::NEG_INFINITY;
    }
    let q = 1.0 - p;
    if p == 0.0 {
        return if i == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if q == 0.0 {
        return if i == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let nf = n as f64;
    if i == 0 {
        return if p < q { nf * (-p).ln_1p() } else { nf * q.ln() };
    }
    if i == n {
        return if p > q { nf * (-q).ln_1p() } else { nf * p.ln() };
    }
    let x = i as f64;
    let lc = stirlerr(nf) - stirlerr(x) - stirlerr(nf - x) - bd0(x, nf * p) - bd0(nf - x, nf * q);
    let lf = (2.0 * std::f64::consts::PI).ln() + x.ln() + (-x / nf).ln_1p();
    lc - 0.5 * lf
}

/// Exact partial sum `Pr[lower <= I <= upper]`.
///
/// The pmf is unimodal, so terms are summed outward from the largest one in
/// the range and the walk stops once terms fall below `e^-50` of it.
pub fn trunc_binom(q: &TruncatedSumQuery) -> f64 {
    let (n, lo, hi, p) = (q.n, q.lower, q.upper, q.p);
    if p == 0.0 {
        return if lo == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if hi == n { 1.0 } else { 0.0 };
    }
    if lo == 0 && hi == n {
        return 1.0;
    }
    let mode = (((n + 1) as f64) * p).floor().min(n as f64) as u64;
    let start = mode.clamp(lo, hi);
    let peak = ln_pmf(n, start, p);
    const CUTOFF: f64 = 50.0;
    let mut terms = vec![1.0];
    let mut i = start;
    while i > lo {
        i -= 1;
        let t = ln_pmf(n, i, p) - peak;
        if t < -CUTOFF {
            break;
        }
        terms.push(t.exp());
    }
    let mut i = start;
    while i < hi {
        i += 1;
        let t = ln_pmf(n, i, p) - peak;
        if t < -CUTOFF {
            break;
        }
        terms.push(t.exp());
    }
    // add the small terms first
    terms.sort_by(|a, b| a.partial_cmp(b).expect("finite terms"));
    (peak.exp() * neumaier(terms)).clamp(0.0, 1.0)
}

/// `S(n, j) = Pr[I <= j]`.
pub fn upper_trunc(n: u64, j: u64, p: f64) -> Result<f64> {
    Ok(trunc_binom(&TruncatedSumQuery::new(n, 0, j, p)?))
}

/// `S(n, j)` extended to out-of-range `j`: 0 below zero, 1 at or above `n`.
pub fn upper_trunc_ext(n: u64, j: i64, p: f64) -> f64 {
    if j < 0 {
        0.0
    } else if j as u64 >= n {
        1.0
    } else {
        trunc_binom(&TruncatedSumQuery { n, lower: 0, upper: j as u64, p })
    }
}

/// Probability that the EM score is at least half of `n`, i.e.
/// `S(n, floor(n/2))` at the EM flip probability.
pub fn success_probability(n: u64, params: &PrivacyParams) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    upper_trunc(n, n / 2, flip_probability(params).flip_probability())
}

/// Hoeffding lower bound `1 - exp(-2 (j - np)^2 / n)` on `S(n, j)`; zero
/// when `j < np`. `j` may be fractional.
pub fn hoeffding_lower_bound(n: u64, j: f64, p: f64) -> f64 {
    let nf = n as f64;
    let gap = j - nf * p;
    if n == 0 || gap < 0.0 {
        return 0.0;
    }
    -(-2.0 * gap * gap / nf).exp_m1()
}

/// Normal approximation `N(np, np(1-p))` of `Pr[lower <= I <= upper]`,
/// integrated over `[lower - 1/2, upper + 1/2]`.
pub fn normal_approx(q: &TruncatedSumQuery) -> Result<f64> {
    let nf = q.n as f64;
    let var = nf * q.p * (1.0 - q.p);
    if var <= 0.0 {
        return Err(Error::DegenerateVariance(q.p));
    }
    let sd = var.sqrt();
    let mean = nf * q.p;
    let z_hi = (q.upper as f64 + 0.5 - mean) / sd;
    let z_lo = (q.lower as f64 - 0.5 - mean) / sd;
    Ok((std_normal_cdf(z_hi) - std_normal_cdf(z_lo)).clamp(0.0, 1.0))
}

pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Mass of `Pr[n(p - w) <= I <= n(p + w)]`, the window endpoints rounded
/// inward and clamped to `[0, n]`.
pub fn concentration_check(n: u64, p: f64, window: f64) -> Result<f64> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::InvalidParameter(format!("window must lie in (0, 1], got {window}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("p must lie in [0, 1], got {p}")));
    }
    let nf = n as f64;
    let lo = (nf * (p - window)).ceil().max(0.0);
    let hi = (nf * (p + window)).floor().min(nf);
    if lo > hi {
        return Ok(0.0);
    }
    Ok(trunc_binom(&TruncatedSumQuery::new(n, lo as u64, hi as u64, p)?))
}

fn half_index(n: u64, k: i64) -> i64 {
    n.div_ceil(2) as i64 + k
}

/// `S(n, ceil(n/2) + k)`.
pub fn half_trunc(n: u64, k: i64, p: f64) -> f64 {
    upper_trunc_ext(n, half_index(n, k), p)
}

/// Threshold `(n - j) / (n + 1)` with `j = ceil(n/2) + k`.
pub fn parity_threshold(n: u64, k: i64) -> f64 {
    (n as i64 - half_index(n, k)) as f64 / (n + 1) as f64
}

/// Outcome of the interchange-point search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Interchange {
    /// Every `r > r_min` satisfies the inequality.
    Found { r_min: u64 },
    CapExceeded { cap: u64 },
}

/// Smallest `R` such that `S(n0 + r, ceil((n0 + r)/2) + k) >= S(n0, ceil(n0/2) + k)`
/// for all `r > R` when `p < 1/2` (reversed inequality when `p > 1/2`).
///
/// Each parity subsequence is monotone once `p` sits on the right side of
/// [`parity_threshold`], and the threshold only moves further away
/// afterwards, so the search stops as soon as both parities are past that
/// point with the inequality satisfied.
pub fn interchange_point(n0: u64, k: i64, p: f64) -> Result<Interchange> {
    interchange_point_capped(n0, k, p, INTERCHANGE_CAP)
}

pub fn interchange_point_capped(n0: u64, k: i64, p: f64, cap: u64) -> Result<Interchange> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("p must lie in [0, 1], got {p}")));
    }
    if p == 0.5 {
        return Err(Error::InvalidParameter("p = 1/2 has no guaranteed interchange point".into()));
    }
    let increasing = p < 0.5;
    let base = half_trunc(n0, k, p);
    let mut last_fail = 0;
    let mut locked = [false; 2];
    for r in 1..=cap {
        let m = n0 + r;
        let parity = (m % 2) as usize;
        if locked[parity] {
            continue;
        }
        let s = half_trunc(m, k, p);
        let ok = if increasing { s >= base } else { s <= base };
        if !ok {
            last_fail = r;
        }
        let thr = parity_threshold(m, k);
        let settled = if increasing { p <= thr } else { p >= thr };
        locked[parity] = ok && settled;
        if locked[0] && locked[1] {
            return Ok(Interchange::Found { r_min: last_fail });
        }
    }
    Ok(Interchange::CapExceeded { cap })
}

/// Parameter grid for a monotonicity scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub n_min: u64,
    pub n_max: u64,
    pub p_grid: Vec<f64>,
    /// Property 1: the fixed `j` values. Property 2: the fixed `k` in
    /// `S(n, n - k)`. Property 3: the offsets `k` in `S(n, ceil(n/2) + k)`.
    /// Unused by property 4, which scans every `j`.
    pub offsets: Vec<i64>,
}

impl ScanGrid {
    /// `n` in `[1, 200]`, `p` in `{0.1, ..., 0.9}`, offsets `0..=5`.
    pub fn standard() -> Self {
        Self {
            n_min: 1,
            n_max: 200,
            p_grid: (1..=9).map(|i| i as f64 / 10.0).collect(),
            offsets: (0..=5).collect(),
        }
    }
}

/// One comparison that went the wrong way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub n: u64,
    pub n_next: u64,
    pub j: i64,
    pub j_next: i64,
    pub p: f64,
    pub p_next: f64,
    pub value: f64,
    pub value_next: f64,
}

/// A cross-parity step that moved against its same-parity trend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityException {
    pub n: u64,
    pub k: i64,
    pub p: f64,
    pub value: f64,
    pub value_next: f64,
}

/// Result of [`scan_monotonicity`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub property: u8,
    pub grid: ScanGrid,
    pub comparisons: usize,
    pub violations: Vec<Violation>,
    /// Property 3 only: steps between parities that break the trend.
    pub parity_exceptions: Vec<ParityException>,
    pub parity_split: bool,
}

impl MonotonicityReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Scans one of the four monotonicity properties over `grid`, flagging any
/// step that moves the wrong way by more than [`SCAN_TOLERANCE`].
///
/// 1. `S(n + 1, j) <= S(n, j)` for fixed `j`.
/// 2. `S(n + 1, n + 1 - k) >= S(n, n - k)` for fixed `k`.
/// 3. Same-parity steps `S(n + 2, ceil((n+2)/2) + k)` versus
///    `S(n, ceil(n/2) + k)`: up when `p <= (n - j)/(n + 1)`, down otherwise.
///    Steps between parities are recorded as exceptions, not violations.
/// 4. `S(n, j)` decreasing in `p`, including the endpoints `p = 0, 1`.
pub fn scan_monotonicity(property: u8, grid: &ScanGrid) -> Result<MonotonicityReport> {
    if grid.p_grid.is_empty() || grid.n_min > grid.n_max {
        return Err(Error::InvalidParameter("scan grid must be non-empty".into()));
    }
    if grid.p_grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidParameter("scan probabilities must lie in [0, 1]".into()));
    }
    let mut report = MonotonicityReport {
        property,
        grid: grid.clone(),
        comparisons: 0,
        violations: Vec::new(),
        parity_exceptions: Vec::new(),
        parity_split: property == 3,
    };
    match property {
        1 => scan_fixed_j(grid, &mut report),
        2 => scan_fixed_gap(grid, &mut report),
        3 => scan_parity(grid, &mut report),
        4 => scan_probability(grid, &mut report),
        other => return Err(Error::UnknownProperty(other)),
    }
    Ok(report)
}

fn s_at(n: u64, j: i64, p: f64) -> f64 {
    upper_trunc_ext(n, j, p)
}

fn scan_fixed_j(grid: &ScanGrid, report: &mut MonotonicityReport) {
    for &j in &grid.offsets {
        if j < 0 {
            continue;
        }
        for &p in &grid.p_grid {
            let first = grid.n_min.max(j as u64).max(1);
            let mut prev = s_at(first, j, p);
            for n in first..grid.n_max {
                let next = s_at(n + 1, j, p);
                report.comparisons += 1;
                if next > prev + SCAN_TOLERANCE {
                    report.violations.push(Violation {
                        n, n_next: n + 1, j, j_next: j, p, p_next: p, value: prev, value_next: next,
                    });
                }
                prev = next;
            }
        }
    }
}

fn scan_fixed_gap(grid: &ScanGrid, report: &mut MonotonicityReport) {
    for &k in &grid.offsets {
        if k < 0 {
            continue;
        }
        for &p in &grid.p_grid {
            let first = grid.n_min.max(k as u64).max(1);
            let mut prev = s_at(first, first as i64 - k, p);
            for n in first..grid.n_max {
                let j_next = (n + 1) as i64 - k;
                let next = s_at(n + 1, j_next, p);
                report.comparisons += 1;
                if next + SCAN_TOLERANCE < prev {
                    report.violations.push(Violation {
                        n, n_next: n + 1, j: j_next - 1, j_next, p, p_next: p, value: prev, value_next: next,
                    });
                }
                prev = next;
            }
        }
    }
}

fn scan_parity(grid: &ScanGrid, report: &mut MonotonicityReport) {
    for &k in &grid.offsets {
        for &p in &grid.p_grid {
            for n in grid.n_min.max(1)..=grid.n_max {
                let j = half_index(n, k);
                if j < 0 || j as u64 > n {
                    continue;
                }
                let here = s_at(n, j, p);
                let thr = parity_threshold(n, k);
                if n + 2 <= grid.n_max {
                    let next = s_at(n + 2, half_index(n + 2, k), p);
                    report.comparisons += 1;
                    let bad = if p < thr {
                        next + SCAN_TOLERANCE < here
                    } else if p > thr {
                        next > here + SCAN_TOLERANCE
                    } else {
                        (next - here).abs() > SCAN_TOLERANCE
                    };
                    if bad {
                        report.violations.push(Violation {
                            n, n_next: n + 2, j, j_next: half_index(n + 2, k), p, p_next: p,
                            value: here, value_next: next,
                        });
                    }
                }
                if n < grid.n_max {
                    let next = s_at(n + 1, half_index(n + 1, k), p);
                    let against = if p <= thr { next < here } else { next > here };
                    if against && (next - here).abs() > SCAN_TOLERANCE {
                        report.parity_exceptions.push(ParityException { n, k, p, value: here, value_next: next });
                    }
                }
            }
        }
    }
}

fn scan_probability(grid: &ScanGrid, report: &mut MonotonicityReport) {
    let mut ps = grid.p_grid.clone();
    ps.push(0.0);
    ps.push(1.0);
    ps.sort_by(|a, b| a.partial_cmp(b).expect("finite p"));
    ps.dedup();
    for n in grid.n_min.max(1)..=grid.n_max {
        for j in 0..=n as i64 {
            let values: Vec<f64> = ps.iter().map(|&p| s_at(n, j, p)).collect();
            // endpoint values are part of the property
            let end_bad = values[0] != 1.0 || (j < n as i64 && *values.last().unwrap() != 0.0);
            if end_bad {
                report.violations.push(Violation {
                    n, n_next: n, j, j_next: j, p: 0.0, p_next: 1.0,
                    value: values[0], value_next: *values.last().unwrap(),
                });
            }
            for w in 0..values.len() - 1 {
                report.comparisons += 1;
                if values[w + 1] > values[w] + SCAN_TOLERANCE {
                    report.violations.push(Violation {
                        n, n_next: n, j, j_next: j, p: ps[w], p_next: ps[w + 1],
                        value: values[w], value_next: values[w + 1],
                    });
                }
            }
        }
    }
}

/// A row of plot-ready output: `(x, series, value)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub x: f64,
    pub series: String,
    pub value: f64,
}

/// `S(n, ceil(n/2))` over `n` for each `p`, the trend plotted against `n`.
pub fn half_trend_series(n_min: u64, n_max: u64, ps: &[f64]) -> Vec<SeriesPoint> {
    let mut out = Vec::new();
    for &p in ps {
        for n in n_min.max(1)..=n_max {
            out.push(SeriesPoint { x: n as f64, series: format!("p={p}"), value: half_trunc(n, 0, p) });
        }
    }
    out
}
