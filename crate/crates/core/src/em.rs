//! Exponential-mechanism privatization of binary label vectors.
//!
//! The quality score of a released vector is the number of positions on which
//! it agrees with the true labels, so `q = n - hamming(released, true)` and the
//! global sensitivity of the score is 1. Sampling follows the two-step
//! procedure: draw a score from its `n + 1` point distribution, then flip a
//! uniformly random subset of `n - q` positions.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dd::{self, Dd};
use crate::error::{Error, Result};
use crate::rng;

/// Largest `n` accepted by [`score_distribution`] unless overridden.
pub const DEFAULT_MAX_SCORE_N: usize = 10_000_000;
/// Largest `n` for [`exhaustive_output_distribution`].
pub const MAX_EXHAUSTIVE_N: usize = 20;
/// Largest `n` for [`verify_dp`] and [`em_rr_equivalence_check`].
pub const MAX_VERIFY_N: usize = 10;

/// Privacy budget and global sensitivity of the quality score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    epsilon: f64,
    sensitivity: f64,
}

impl PrivacyParams {
    /// `epsilon` must be finite and non-negative (zero gives the uniform
    /// mechanism); `sensitivity` must be finite and positive.
    pub fn new(epsilon: f64, sensitivity: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        if !(sensitivity.is_finite() && sensitivity > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sensitivity must be finite and > 0, got {sensitivity}"
            )));
        }
        Ok(Self { epsilon, sensitivity })
    }

    /// Budget with the Hamming-score sensitivity of 1.
    pub fn with_epsilon(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 1.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    /// Per-unit-score log weight, `epsilon / (2 * sensitivity)`.
    pub fn score_rate(&self) -> f64 {
        self.epsilon / (2.0 * self.sensitivity)
    }
}

/// A vector of binary labels, each `-1` or `+1`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct LabelVector(Vec<i8>);

impl LabelVector {
    pub fn new(labels: Vec<i8>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidParameter("label vector must be non-empty".into()));
        }
        if let Some(pos) = labels.iter().position(|&l| l != 1 && l != -1) {
            return Err(Error::InvalidParameter(format!(
                "label at position {pos} is {}, expected -1 or 1",
                labels[pos]
            )));
        }
        Ok(Self(labels))
    }

    /// Builds a vector from a bit mask: bit `i` set means label `i` is `+1`.
    pub fn from_mask(mask: u64, n: usize) -> Self {
        assert!((1..=64).contains(&n));
        Self((0..n).map(|i| if mask >> i & 1 == 1 { 1 } else { -1 }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = i8> + '_ {
        self.0.iter().copied()
    }

    pub fn positives(&self) -> usize {
        self.0.iter().filter(|&&l| l == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    /// Number of positions where the two vectors differ.
    ///
    /// Panics if the lengths differ.
    pub fn hamming(&self, other: &LabelVector) -> usize {
        assert_eq!(self.len(), other.len(), "hamming distance needs equal lengths");
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    pub fn negated(&self) -> LabelVector {
        Self(self.0.iter().map(|&l| -l).collect())
    }

    fn mask(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .fold(0u64, |m, (i, &l)| if l == 1 { m | 1 << i } else { m })
    }
}

impl TryFrom<Vec<i8>> for LabelVector {
    type Error = Error;
    fn try_from(v: Vec<i8>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LabelVector> for Vec<i8> {
    fn from(v: LabelVector) -> Self {
        v.0
    }
}

/// Log-probabilities of the EM score `q` over `0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDistribution {
    log_probs: Vec<f64>,
}

impl ScoreDistribution {
    pub fn n(&self) -> usize {
        self.log_probs.len() - 1
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn prob(&self, q: usize) -> f64 {
        self.log_probs[q].exp()
    }

    /// `log(sum(exp(log_probs)))`; zero for a normalized distribution.
    pub fn log_sum_exp(&self) -> f64 {
        log_sum_exp(&self.log_probs)
    }

    pub fn mean(&self) -> f64 {
        self.log_probs
            .iter()
            .enumerate()
            .map(|(q, lp)| q as f64 * lp.exp())
            .sum()
    }

    /// `Pr(q >= from)`.
    pub fn tail_mass(&self, from: usize) -> f64 {
        crate::numeric::sum_exp(&self.log_probs[from.min(self.log_probs.len())..])
    }

    /// Precomputes the cumulative table for repeated draws.
    pub fn sampler(&self) -> ScoreSampler {
        let max = self.log_probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut acc = 0.0;
        let cdf = self
            .log_probs
            .iter()
            .map(|lp| {
                acc += (lp - max).exp();
                acc
            })
            .collect();
        ScoreSampler { cdf }
    }
}

/// Inverse-CDF sampler over a score distribution.
#[derive(Debug, Clone)]
pub struct ScoreSampler {
    cdf: Vec<f64>,
}

impl ScoreSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().expect("non-empty cdf");
        let u = rng.random::<f64>() * total;
        let idx = self.cdf.partition_point(|&c| c <= u);
        // u < total always, but guard against zero-weight tail entries.
        idx.min(self.cdf.len() - 1)
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + crate::numeric::neumaier(xs.iter().map(|x| (x - max).exp())).ln()
}

/// Flip probability of the equivalent randomized response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrParams {
    flip_probability: f64,
}

impl RrParams {
    pub fn new(flip_probability: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&flip_probability) {
            return Err(Error::InvalidParameter(format!(
                "flip probability must lie in [0, 1], got {flip_probability}"
            )));
        }
        Ok(Self { flip_probability })
    }

    pub fn flip_probability(&self) -> f64 {
        self.flip_probability
    }
}

/// Result of one EM release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivatizationRecord {
    pub params: PrivacyParams,
    pub seed: u64,
    pub score: usize,
    pub flip_count: usize,
    pub output: LabelVector,
}

/// Which increment the log recursion uses.
///
/// `Misprinted` adds `epsilon / 2` per step regardless of the sensitivity,
/// which only matches the closed form when the sensitivity is 1. It exists
/// only so the self-check can demonstrate that the error is detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Recursion {
    #[default]
    Corrected,
    Misprinted,
}

/// `p = 1 / (1 + exp(epsilon / (2 * sensitivity)))`.
pub fn flip_probability(params: &PrivacyParams) -> RrParams {
    let a = params.score_rate();
    let t = (-a).exp();
    RrParams { flip_probability: t / (1.0 + t) }
}

/// Score distribution by the forward log recursion, with `n <= 10^7`.
pub fn score_distribution(n: usize, params: &PrivacyParams) -> Result<ScoreDistribution> {
    score_distribution_with(n, params, DEFAULT_MAX_SCORE_N, Recursion::Corrected)
}

/// Score distribution with an explicit size limit and recursion variant.
///
/// `log Pr(q = 0) = -n log(1 + e^a)` and
/// `log Pr(q = i) = log(n - i + 1) - log(i) + a + log Pr(q = i - 1)` with
/// `a = epsilon / (2 * sensitivity)`. The running sum is carried in
/// double-double precision so the rounding of the large base term does not
/// leak into the entries near the mode.
pub fn score_distribution_with(
    n: usize,
    params: &PrivacyParams,
    max_n: usize,
    recursion: Recursion,
) -> Result<ScoreDistribution> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    if n > max_n {
        return Err(Error::SizeGuard { what: "score distribution", n, max: max_n });
    }
    let a = params.score_rate();
    let step = match recursion {
        Recursion::Corrected => a,
        Recursion::Misprinted => params.epsilon() / 2.0,
    };
    let mut acc: Dd = dd::softplus(a).mul_f64(-(n as f64));
    let mut log_probs = Vec::with_capacity(n + 1);
    log_probs.push(acc.to_f64());
    for i in 1..=n {
        acc = acc + ((n - i + 1) as f64).ln();
        acc = acc + (-(i as f64).ln());
        acc = acc + step;
        log_probs.push(acc.to_f64());
    }
    Ok(ScoreDistribution { log_probs })
}

/// Draws one score.
pub fn sample_score<R: Rng + ?Sized>(dist: &ScoreDistribution, rng: &mut R) -> usize {
    dist.sampler().sample(rng)
}

/// Flips exactly `k` uniformly chosen positions (partial Fisher-Yates).
pub fn flip_random_subset<R: Rng + ?Sized>(
    input: &LabelVector,
    k: usize,
    rng: &mut R,
) -> LabelVector {
    let n = input.len();
    assert!(k <= n);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let mut out = input.0.clone();
    for &i in &idx[..k] {
        out[i] = -out[i];
    }
    LabelVector(out)
}

/// Two-step EM draw from an arbitrary random source. Returns `(score, output)`.
pub fn apply_em_with<R: Rng + ?Sized>(
    input: &LabelVector,
    params: &PrivacyParams,
    rng: &mut R,
) -> (usize, LabelVector) {
    let dist = score_distribution_with(input.len(), params, usize::MAX, Recursion::Corrected)
        .expect("label vectors are non-empty");
    let q = sample_score(&dist, rng);
    (q, flip_random_subset(input, input.len() - q, rng))
}

/// Privatizes `input` with the stream keyed by `seed`.
pub fn apply_em(input: &LabelVector, params: &PrivacyParams, seed: u64) -> PrivatizationRecord {
    let mut rng = rng::stream(seed, "em", 0);
    let (score, output) = apply_em_with(input, params, &mut rng);
    PrivatizationRecord {
        params: *params,
        seed,
        score,
        flip_count: input.len() - score,
        output,
    }
}

/// Flips each label independently with probability `p`.
pub fn apply_rr<R: Rng + ?Sized>(input: &LabelVector, rr: &RrParams, rng: &mut R) -> LabelVector {
    let p = rr.flip_probability;
    LabelVector(
        input
            .iter()
            .map(|l| if rng.random::<f64>() < p { -l } else { l })
            .collect(),
    )
}

/// Exact output distribution of the mechanism for one input, indexed by
/// output mask (bit `i` set means output label `i` is `+1`).
#[derive(Debug, Clone)]
pub struct OutputDistribution {
    n: usize,
    probs: Vec<f64>,
}

impl OutputDistribution {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, output: &LabelVector) -> f64 {
        assert_eq!(output.len(), self.n);
        self.probs[output.mask() as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (LabelVector, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(|(m, &p)| (LabelVector::from_mask(m as u64, self.n), p))
    }

    pub fn total(&self) -> f64 {
        crate::numeric::neumaier(self.probs.iter().copied())
    }

    fn by_mask(&self) -> &[f64] {
        &self.probs
    }
}

/// Enumerates all `2^n` outputs, weighting each by `exp(q * a)` and
/// normalizing by the explicit sum. `n <= 20`.
pub fn exhaustive_output_distribution(
    input: &LabelVector,
    params: &PrivacyParams,
) -> Result<OutputDistribution> {
    let n = input.len();
    if n > MAX_EXHAUSTIVE_N {
        return Err(Error::SizeGuard { what: "exhaustive output distribution", n, max: MAX_EXHAUSTIVE_N });
    }
    Ok(enumerate_from_mask(input.mask(), n, params.score_rate()))
}

fn enumerate_from_mask(input_mask: u64, n: usize, a: f64) -> OutputDistribution {
    // weights shifted by the maximum score n to stay finite for large a
    let weight: Vec<f64> = (0..=n).map(|d| (-(d as f64) * a).exp()).collect();
    let mut probs: Vec<f64> = (0..1u64 << n)
        .map(|m| weight[(m ^ input_mask).count_ones() as usize])
        .collect();
    let z = crate::numeric::neumaier(probs.iter().copied());
    probs.iter_mut().for_each(|p| *p /= z);
    OutputDistribution { n, probs }
}

/// Largest ratio `Pr[M(D) = o] / Pr[M(D') = o]` over all neighbouring label
/// vectors `D ~ D'` (one label differs) and all outputs `o`. `n <= 10`.
pub fn verify_dp(n: usize, params: &PrivacyParams) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    if n > MAX_VERIFY_N {
        return Err(Error::SizeGuard { what: "DP verification", n, max: MAX_VERIFY_N });
    }
    let a = params.score_rate();
    let tables: Vec<OutputDistribution> =
        (0..1u64 << n).map(|m| enumerate_from_mask(m, n, a)).collect();
    let mut worst = 0.0f64;
    for (d, table) in tables.iter().enumerate() {
        for bit in 0..n {
            let neighbour = &tables[d ^ (1 << bit)];
            for (p, q) in table.by_mask().iter().zip(neighbour.by_mask()) {
                worst = worst.max(p / q);
            }
        }
    }
    Ok(worst)
}

/// Largest per-output gap between the EM and the product-form randomized
/// response `p^d (1 - p)^(n - d)`. Both EM routes are compared: direct
/// enumeration, and the two-step route `Pr(q) / C(n, q)` built from the log
/// recursion. `n <= 10`.
pub fn em_rr_equivalence_check(n: usize, params: &PrivacyParams) -> Result<f64> {
    em_rr_equivalence_check_with(n, params, Recursion::Corrected)
}

pub fn em_rr_equivalence_check_with(
    n: usize,
    params: &PrivacyParams,
    recursion: Recursion,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    if n > MAX_VERIFY_N {
        return Err(Error::SizeGuard { what: "EM/RR equivalence check", n, max: MAX_VERIFY_N });
    }
    let input = LabelVector((0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect());
    let direct = exhaustive_output_distribution(&input, params)?;
    let scores = score_distribution_with(n, params, MAX_VERIFY_N, recursion)?;
    let p = flip_probability(params).flip_probability;
    let mask = input.mask();
    let mut worst = 0.0f64;
    for (m, &em) in direct.by_mask().iter().enumerate() {
        let d = (m as u64 ^ mask).count_ones() as usize;
        let rr = p.powi(d as i32) * (1.0 - p).powi((n - d) as i32);
        let two_step = scores.prob(n - d) / binomial(n, d) as f64;
        worst = worst.max((em - rr).abs()).max((two_step - rr).abs());
    }
    Ok(worst)
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

impl fmt::Display for LabelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|l| l.to_string()).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}
