//! Synthetic two-Gaussian data and the dataset handles used for training and
//! evaluation.
//!
//! Training only accepts a [`TrainingSet`], whose labels have been through a
//! release step, and evaluation only accepts an [`EvaluationSet`], which holds
//! clean labels. Neither type exposes a way to reach the other's labels.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::em::{apply_em_with, apply_rr, flip_probability, LabelVector, PrivacyParams};
use crate::error::{Error, Result};

/// Row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Features {
    d: usize,
    data: Vec<f64>,
}

impl Features {
    pub fn new(d: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 || !data.len().is_multiple_of(d) {
            return Err(Error::InvalidParameter(format!(
                "feature buffer of length {} is not a multiple of d={d}",
                data.len()
            )));
        }
        Ok(Self { d, data })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Features paired with labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    features: Features,
    labels: LabelVector,
}

impl LabeledDataset {
    pub fn new(features: Features, labels: LabelVector) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::InvalidParameter(format!(
                "{} feature rows for {} labels",
                features.len(),
                labels.len()
            )));
        }
        Ok(Self { features, labels })
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn labels(&self) -> &LabelVector {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Row indices labelled `+1`.
    pub fn positive_indices(&self) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, y)| *y == 1).map(|(i, _)| i).collect()
    }

    /// Row indices labelled `-1`.
    pub fn negative_indices(&self) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, y)| *y == -1).map(|(i, _)| i).collect()
    }

    fn require_both_classes(&self) -> Result<()> {
        if self.labels.positives() == 0 {
            return Err(Error::DegenerateClass("positive"));
        }
        if self.labels.negatives() == 0 {
            return Err(Error::DegenerateClass("negative"));
        }
        Ok(())
    }
}

/// How training labels are released.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    /// Exponential mechanism with the Hamming score.
    Em,
    /// Independent flips at the matching probability.
    Rr,
}

impl std::str::FromStr for Mechanism {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "em" => Ok(Mechanism::Em),
            "rr" => Ok(Mechanism::Rr),
            other => Err(Error::InvalidParameter(format!("unknown mechanism '{other}'"))),
        }
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mechanism::Em => "em",
            Mechanism::Rr => "rr",
        })
    }
}

/// Training features with released labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    inner: LabeledDataset,
    flips: usize,
}

impl TrainingSet {
    /// Releases the labels of `clean` through `mechanism`. `None` for the
    /// budget means no privatization.
    pub fn release<R: Rng + ?Sized>(
        clean: &LabeledDataset,
        mechanism: Mechanism,
        params: Option<&PrivacyParams>,
        rng: &mut R,
    ) -> Result<Self> {
        let labels = match params {
            None => clean.labels.clone(),
            Some(params) => match mechanism {
                Mechanism::Em => apply_em_with(&clean.labels, params, rng).1,
                Mechanism::Rr => apply_rr(&clean.labels, &flip_probability(params), rng),
            },
        };
        let flips = labels.hamming(&clean.labels);
        let inner = LabeledDataset::new(clean.features.clone(), labels)?;
        Ok(Self { inner, flips })
    }

    /// Wraps labels that were released elsewhere.
    pub fn from_released(features: Features, released: LabelVector) -> Result<Self> {
        Ok(Self { inner: LabeledDataset::new(features, released)?, flips: 0 })
    }

    pub fn dataset(&self) -> &LabeledDataset {
        &self.inner
    }

    /// Flips relative to the clean labels, when known.
    pub fn flip_count(&self) -> usize {
        self.flips
    }

    pub(crate) fn require_both_classes(&self) -> Result<()> {
        self.inner.require_both_classes()
    }
}

/// Held-out features with clean labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSet {
    inner: LabeledDataset,
}

impl EvaluationSet {
    pub fn new(clean: LabeledDataset) -> Result<Self> {
        clean.require_both_classes()?;
        Ok(Self { inner: clean })
    }

    pub fn dataset(&self) -> &LabeledDataset {
        &self.inner
    }
}

/// Two isotropic Gaussians in `d` dimensions, class means at
/// `+-separation * e_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub d: usize,
    pub separation: f64,
    pub sigma: f64,
    /// Fraction of positive examples.
    pub balance: f64,
    /// Exact class counts instead of Bernoulli labels.
    pub stratified: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { d: 2, separation: 0.5, sigma: 1.0, balance: 0.5, stratified: true }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidParameter("d must be >= 1".into()));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) || !self.separation.is_finite() {
            return Err(Error::InvalidParameter("sigma must be positive and separation finite".into()));
        }
        if !(self.balance > 0.0 && self.balance < 1.0) {
            return Err(Error::InvalidParameter(format!("balance must lie in (0, 1), got {}", self.balance)));
        }
        Ok(())
    }

    /// Draws `n` labelled points.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<LabeledDataset> {
        self.validate()?;
        if n == 0 {
            return Err(Error::InvalidParameter("n must be >= 1".into()));
        }
        let labels: Vec<i8> = if self.stratified {
            let n_pos = (self.balance * n as f64).round() as usize;
            (0..n).map(|i| if i < n_pos { 1 } else { -1 }).collect()
        } else {
            (0..n).map(|_| if rng.random::<f64>() < self.balance { 1 } else { -1 }).collect()
        };
        let noise = Normal::new(0.0, self.sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut data = Vec::with_capacity(n * self.d);
        for &y in &labels {
            for k in 0..self.d {
                let centre = if k == 0 { f64::from(y) * self.separation } else { 0.0 };
                data.push(centre + noise.sample(rng));
            }
        }
        LabeledDataset::new(Features::new(self.d, data)?, LabelVector::new(labels)?)
    }
}

/// A clean train/test pair drawn from one spec.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSplit {
    pub train: LabeledDataset,
    pub test: EvaluationSet,
}

/// Draws independent train and test samples; the two never share rows.
pub fn generate_synthetic<R: Rng + ?Sized>(
    spec: &SyntheticSpec,
    n_train: usize,
    n_test: usize,
    rng: &mut R,
) -> Result<SyntheticSplit> {
    let train = spec.sample(n_train, rng)?;
    let test = EvaluationSet::new(spec.sample(n_test, rng)?)?;
    Ok(SyntheticSplit { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn stratified_counts() {
        let mut rng = stream(1, "t", 0);
        let ds = SyntheticSpec::default().sample(1000, &mut rng).unwrap();
        assert_eq!(ds.labels().positives(), 500);
        assert_eq!(ds.features().dim(), 2);
    }

    #[test]
    fn bernoulli_counts_near_balance() {
        let spec = SyntheticSpec { stratified: false, ..SyntheticSpec::default() };
        let ds = spec.sample(1000, &mut stream(2, "t", 0)).unwrap();
        let p = ds.labels().positives() as i64;
        assert!((p - 500).abs() < 80, "{p}");
    }

    #[test]
    fn deterministic() {
        let a = generate_synthetic(&SyntheticSpec::default(), 50, 20, &mut stream(9, "d", 3)).unwrap();
        let b = generate_synthetic(&SyntheticSpec::default(), 50, 20, &mut stream(9, "d", 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn release_without_budget_keeps_labels() {
        let mut rng = stream(3, "t", 0);
        let ds = SyntheticSpec::default().sample(40, &mut rng).unwrap();
        let ts = TrainingSet::release(&ds, Mechanism::Em, None, &mut rng).unwrap();
        assert_eq!(ts.dataset().labels(), ds.labels());
        assert_eq!(ts.flip_count(), 0);
    }

    #[test]
    fn spec_validation() {
        assert!(SyntheticSpec { balance: 1.0, ..SyntheticSpec::default() }.validate().is_err());
        assert!(SyntheticSpec { sigma: 0.0, ..SyntheticSpec::default() }.validate().is_err());
        assert!(Features::new(2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn evaluation_needs_both_classes() {
        let f = Features::new(1, vec![0.0, 1.0]).unwrap();
        let ds = LabeledDataset::new(f, LabelVector::new(vec![1, 1]).unwrap()).unwrap();
        assert!(matches!(EvaluationSet::new(ds), Err(Error::DegenerateClass(_))));
    }
}
