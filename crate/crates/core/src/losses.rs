//! Surrogate losses on a margin `z`, their derivatives, and the AUC and
//! balanced-error empirical risks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::em::LabelVector;
use crate::error::{Error, Result};
use crate::numeric::neumaier;

/// A loss on the margin. Serialized as a short string such as
/// `barrier:b=200,r=50` or `hinge`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LossSpec {
    /// `max(-b(r + z) + r, max(b(z - r), r - z))`, symmetric on `[-r, r]`.
    Barrier { b: f64, r: f64 },
    /// `1 / (1 + e^z)`
    Sigmoid,
    /// `1 - z`
    Unhinged,
    /// `1 / (1 + e^z)^2`
    Savage,
    /// `ln(1 + e^-z)`
    Logistic,
    /// `(1 - z)^2`
    Squared,
    /// `max(0, 1 - z)`
    Hinge,
    /// 1 when `z <= 0`, else 0.
    ZeroOne,
}

impl LossSpec {
    pub const DEFAULT_BARRIER: LossSpec = LossSpec::Barrier { b: 2.0, r: 1.0 };

    pub fn barrier(b: f64, r: f64) -> Result<Self> {
        if !(b.is_finite() && b > 1.0 && r.is_finite() && r > 0.0) {
            return Err(Error::InvalidParameter(format!("barrier needs b > 1 and r > 0, got b={b} r={r}")));
        }
        Ok(LossSpec::Barrier { b, r })
    }

    /// Every loss usable for gradient training, barrier at its defaults.
    pub fn trainable() -> [LossSpec; 7] {
        [
            Self::DEFAULT_BARRIER,
            LossSpec::Sigmoid,
            LossSpec::Unhinged,
            LossSpec::Savage,
            LossSpec::Logistic,
            LossSpec::Squared,
            LossSpec::Hinge,
        ]
    }

    pub fn is_trainable(&self) -> bool {
        !matches!(self, LossSpec::ZeroOne)
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossSpec::Barrier { .. } => "barrier",
            LossSpec::Sigmoid => "sigmoid",
            LossSpec::Unhinged => "unhinged",
            LossSpec::Savage => "savage",
            LossSpec::Logistic => "logistic",
            LossSpec::Squared => "squared",
            LossSpec::Hinge => "hinge",
            LossSpec::ZeroOne => "zero-one",
        }
    }

    pub fn value(&self, z: f64) -> f64 {
        match *self {
            LossSpec::Barrier { b, r } => (-b * (r + z) + r).max((b * (z - r)).max(r - z)),
            LossSpec::Sigmoid => sigmoid(-z),
            LossSpec::Unhinged => 1.0 - z,
            LossSpec::Savage => {
                let s = sigmoid(-z);
                s * s
            }
            LossSpec::Logistic => (-z).max(0.0) + (-z.abs()).exp().ln_1p(),
            LossSpec::Squared => (1.0 - z) * (1.0 - z),
            LossSpec::Hinge => (1.0 - z).max(0.0),
            LossSpec::ZeroOne => {
                if z <= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative in `z`; at kinks the mean of the one-sided derivatives.
    pub fn grad(&self, z: f64) -> Result<f64> {
        Ok(match *self {
            LossSpec::Barrier { b, r } => {
                let branches = [(-b * (r + z) + r, -b), (b * (z - r), b), (r - z, -1.0)];
                let top = branches.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
                let active: Vec<f64> = branches.iter().filter(|x| x.0 == top).map(|x| x.1).collect();
                active.iter().sum::<f64>() / active.len() as f64
            }
            LossSpec::Sigmoid => -sigmoid(z) * sigmoid(-z),
            LossSpec::Unhinged => -1.0,
            LossSpec::Savage => {
                let s = sigmoid(-z);
                -2.0 * s * s * sigmoid(z)
            }
            LossSpec::Logistic => -sigmoid(-z),
            LossSpec::Squared => -2.0 * (1.0 - z),
            LossSpec::Hinge => {
                if z < 1.0 {
                    -1.0
                } else if z > 1.0 {
                    0.0
                } else {
                    -0.5
                }
            }
            LossSpec::ZeroOne => return Err(Error::NonTrainableLoss(self.to_string())),
        })
    }

    /// Kink locations, where [`LossSpec::grad`] averages.
    pub fn kinks(&self) -> Vec<f64> {
        match *self {
            LossSpec::Barrier { b, r } => vec![-b * r / (b - 1.0), r],
            LossSpec::Hinge => vec![1.0],
            LossSpec::ZeroOne => vec![0.0],
            _ => Vec::new(),
        }
    }
}

/// Logistic function `1 / (1 + e^-x)`, stable for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossSpec::Barrier { b, r } => write!(f, "barrier:b={b},r={r}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for LossSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, tail) = match s.split_once(':') {
            Some((h, t)) => (h, Some(t)),
            None => (s, None),
        };
        let simple = match head.to_ascii_lowercase().as_str() {
            "barrier" => None,
            "sigmoid" => Some(LossSpec::Sigmoid),
            "unhinged" => Some(LossSpec::Unhinged),
            "savage" => Some(LossSpec::Savage),
            "logistic" => Some(LossSpec::Logistic),
            "squared" => Some(LossSpec::Squared),
            "hinge" => Some(LossSpec::Hinge),
            "zero-one" | "zeroone" | "01" => Some(LossSpec::ZeroOne),
            other => return Err(Error::InvalidParameter(format!("unknown loss '{other}'"))),
        };
        if let Some(spec) = simple {
            return match tail {
                None => Ok(spec),
                Some(_) => Err(Error::InvalidParameter(format!("loss '{head}' takes no parameters"))),
            };
        }
        let (mut b, mut r) = (2.0, 1.0);
        for kv in tail.unwrap_or("").split(',').filter(|x| !x.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("expected key=value, got '{kv}'")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad number in '{kv}'")))?;
            match k.trim() {
                "b" => b = v,
                "r" => r = v,
                other => return Err(Error::InvalidParameter(format!("unknown barrier parameter '{other}'"))),
            }
        }
        LossSpec::barrier(b, r)
    }
}

impl TryFrom<String> for LossSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LossSpec> for String {
    fn from(l: LossSpec) -> String {
        l.to_string()
    }
}

/// `max |l(x) + l(-x) - C|` over `samples` evenly spaced points of
/// `[-window, window]`, with `C = 2 l(0)`.
pub fn symmetry_defect(spec: &LossSpec, window: f64, samples: usize) -> Result<f64> {
    if !(window.is_finite() && window >= 0.0) || samples < 2 {
        return Err(Error::InvalidParameter("need a finite window and at least 2 samples".into()));
    }
    let c = 2.0 * spec.value(0.0);
    let mut worst: f64 = 0.0;
    for i in 0..samples {
        let x = -window + 2.0 * window * i as f64 / (samples - 1) as f64;
        worst = worst.max((spec.value(x) + spec.value(-x) - c).abs());
    }
    Ok(worst)
}

/// Mean of `l(f(x_P) - f(x_N))` over all positive/negative pairs.
pub fn auc_risk(scores_pos: &[f64], scores_neg: &[f64], spec: &LossSpec) -> Result<f64> {
    if scores_pos.is_empty() {
        return Err(Error::DegenerateClass("positive"));
    }
    if scores_neg.is_empty() {
        return Err(Error::DegenerateClass("negative"));
    }
    let total = neumaier(
        scores_pos
            .iter()
            .flat_map(|&sp| scores_neg.iter().map(move |&sn| spec.value(sp - sn))),
    );
    Ok(total / (scores_pos.len() as f64 * scores_neg.len() as f64))
}

/// `1/2 (mean_P l(f(x)) + mean_N l(-f(x)))`.
pub fn ber_risk(scores: &[f64], labels: &LabelVector, spec: &LossSpec) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    ber_risk_signed(scores.iter().zip(labels.iter()).map(|(&s, y)| (s, y)), spec)
}

pub(crate) fn ber_risk_signed<I: IntoIterator<Item = (f64, i8)>>(pairs: I, spec: &LossSpec) -> Result<f64> {
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (s, y) in pairs {
        if y > 0 {
            pos.push(spec.value(s));
        } else {
            neg.push(spec.value(-s));
        }
    }
    if pos.is_empty() {
        return Err(Error::DegenerateClass("positive"));
    }
    if neg.is_empty() {
        return Err(Error::DegenerateClass("negative"));
    }
    let mp = neumaier(pos.iter().copied()) / pos.len() as f64;
    let mn = neumaier(neg.iter().copied()) / neg.len() as f64;
    Ok(0.5 * (mp + mn))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(v: &[i8]) -> LabelVector {
        LabelVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn barrier_values() {
        let l = LossSpec::barrier(200.0, 50.0).unwrap();
        assert_eq!(l.value(0.0), 50.0);
        assert_eq!(l.value(50.0), 0.0);
        assert_eq!(LossSpec::barrier(2.0, 1.0).unwrap().value(3.0), 4.0);
        assert!(LossSpec::barrier(1.0, 1.0).is_err());
        assert!(LossSpec::barrier(2.0, 0.0).is_err());
    }

    #[test]
    fn zero_one_ties() {
        let l = LossSpec::ZeroOne;
        assert_eq!(l.value(-0.1), 1.0);
        assert_eq!(l.value(0.1), 0.0);
        assert_eq!(l.value(0.0), 1.0);
        assert!(matches!(l.grad(0.3), Err(Error::NonTrainableLoss(_))));
    }

    #[test]
    fn gradients_by_hand() {
        let bar = LossSpec::barrier(200.0, 50.0).unwrap();
        assert_eq!(bar.grad(10.0).unwrap(), -1.0);
        assert_eq!(bar.grad(60.0).unwrap(), 200.0);
        assert_eq!(bar.grad(-60.0).unwrap(), -200.0);
        assert_eq!(bar.grad(50.0).unwrap(), 99.5);
        assert_eq!(LossSpec::Squared.grad(0.0).unwrap(), -2.0);
        assert_eq!(LossSpec::Sigmoid.grad(0.0).unwrap(), -0.25);
        assert_eq!(LossSpec::Hinge.grad(1.0).unwrap(), -0.5);
        assert_eq!(LossSpec::Logistic.grad(0.0).unwrap(), -0.5);
    }

    #[test]
    fn barrier_left_kink_average() {
        let bar = LossSpec::barrier(3.0, 2.0).unwrap();
        // kink at -3
        assert_eq!(bar.kinks()[0], -3.0);
        assert_eq!(bar.grad(-3.0).unwrap(), -2.0);
    }

    #[test]
    fn logistic_stable() {
        assert!((LossSpec::Logistic.value(-800.0) - 800.0).abs() < 1e-9);
        assert!(LossSpec::Logistic.value(800.0) >= 0.0);
        assert!((LossSpec::Logistic.value(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn symmetry() {
        let bar = LossSpec::barrier(200.0, 50.0).unwrap();
        assert!(symmetry_defect(&bar, 50.0, 1001).unwrap() <= 1e-9);
        assert!(symmetry_defect(&LossSpec::Sigmoid, 10.0, 1001).unwrap() <= 1e-12);
        assert!(symmetry_defect(&LossSpec::Unhinged, 10.0, 1001).unwrap() <= 1e-12);
        assert!(symmetry_defect(&LossSpec::Squared, 1.0, 101).unwrap() > 0.5);
    }

    #[test]
    fn parse_round_trip() {
        for s in ["barrier:b=200,r=50", "sigmoid", "unhinged", "savage", "logistic", "squared", "hinge", "zero-one"] {
            let l: LossSpec = s.parse().unwrap();
            assert_eq!(l.to_string(), s);
        }
        assert_eq!("barrier".parse::<LossSpec>().unwrap(), LossSpec::DEFAULT_BARRIER);
        assert!("barrier:b=0.5".parse::<LossSpec>().is_err());
        assert!("tanh".parse::<LossSpec>().is_err());
        assert!("hinge:b=2".parse::<LossSpec>().is_err());
        let js = serde_json::to_string(&LossSpec::Hinge).unwrap();
        assert_eq!(js, "\"hinge\"");
    }

    #[test]
    fn auc_examples() {
        let l = LossSpec::ZeroOne;
        assert_eq!(auc_risk(&[3.0, 4.0], &[0.0, 1.0], &l).unwrap(), 0.0);
        assert_eq!(auc_risk(&[1.0, 1.0], &[1.0], &l).unwrap(), 1.0);
        assert_eq!(auc_risk(&[2.0, 1.0], &[0.0, 3.0], &l).unwrap(), 0.5);
        assert!(matches!(auc_risk(&[], &[1.0], &l), Err(Error::DegenerateClass(_))));
    }

    #[test]
    fn ber_examples() {
        let l = LossSpec::ZeroOne;
        assert_eq!(ber_risk(&[5.0, 5.0, -5.0], &lv(&[1, 1, -1]), &l).unwrap(), 0.0);
        assert_eq!(ber_risk(&[1.0, 1.0, 1.0], &lv(&[1, 1, -1]), &l).unwrap(), 0.5);
        assert_eq!(ber_risk(&[1.0, -1.0, 1.0], &lv(&[1, 1, -1]), &l).unwrap(), 0.75);
        assert!(matches!(ber_risk(&[1.0], &lv(&[1]), &l), Err(Error::DegenerateClass(_))));
        assert!(ber_risk(&[1.0], &lv(&[1, -1]), &l).is_err());
    }
}
