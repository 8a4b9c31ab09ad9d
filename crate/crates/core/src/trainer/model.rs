//! Scorers `f: R^d -> R`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Architecture {
    /// `w . x + b`
    Linear,
    /// `w2 . tanh(W1 x + b1) + b2`
    Mlp { width: usize },
}

impl Architecture {
    pub const DEFAULT_MLP: Architecture = Architecture::Mlp { width: 16 };

    pub fn param_count(&self, d: usize) -> usize {
        match *self {
            Architecture::Linear => d + 1,
            Architecture::Mlp { width } => width * d + 2 * width + 1,
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Architecture::Linear),
            "mlp" => Ok(Architecture::DEFAULT_MLP),
            other => match other.strip_prefix("mlp:") {
                Some(w) => {
                    let width: usize =
                        w.parse().map_err(|_| Error::InvalidParameter(format!("bad width '{w}'")))?;
                    if width == 0 {
                        return Err(Error::InvalidParameter("width must be >= 1".into()));
                    }
                    Ok(Architecture::Mlp { width })
                }
                None => Err(Error::InvalidParameter(format!("unknown architecture '{s}'"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    arch: Architecture,
    d: usize,
    params: Vec<f64>,
}

impl Model {
    /// Linear models start at zero; hidden layers get scaled Gaussian weights
    /// and a zero output layer.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, d: usize, rng: &mut R) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("d must be >= 1".into()));
        }
        let mut params = vec![0.0; arch.param_count(d)];
        if let Architecture::Mlp { width } = arch {
            if width == 0 {
                return Err(Error::InvalidParameter("width must be >= 1".into()));
            }
            let w1 = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("positive scale");
            for p in params.iter_mut().take(width * d) {
                *p = w1.sample(rng);
            }
            let w2 = Normal::new(0.0, 1.0 / (width as f64).sqrt()).expect("positive scale");
            let off = width * d + width;
            for p in params.iter_mut().skip(off).take(width) {
                *p = w2.sample(rng);
            }
        }
        Ok(Self { arch, d, params })
    }

    pub fn from_params(arch: Architecture, d: usize, params: Vec<f64>) -> Result<Self> {
        if params.len() != arch.param_count(d) {
            return Err(Error::InvalidParameter(format!(
                "expected {} parameters, got {}",
                arch.param_count(d),
                params.len()
            )));
        }
        Ok(Self { arch, d, params })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.d);
        let d = self.d;
        match self.arch {
            Architecture::Linear => dot(&self.params[..d], x) + self.params[d],
            Architecture::Mlp { width } => {
                let (w1, rest) = self.params.split_at(width * d);
                let (b1, rest) = rest.split_at(width);
                let (w2, b2) = rest.split_at(width);
                let mut s = b2[0];
                for h in 0..width {
                    s += w2[h] * (dot(&w1[h * d..(h + 1) * d], x) + b1[h]).tanh();
                }
                s
            }
        }
    }

    /// Adds `scale * d f(x) / d theta` into `out`.
    pub fn accumulate_grad(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let d = self.d;
        match self.arch {
            Architecture::Linear => {
                for k in 0..d {
                    out[k] += scale * x[k];
                }
                out[d] += scale;
            }
            Architecture::Mlp { width } => {
                let (w1, rest) = self.params.split_at(width * d);
                let (b1, rest) = rest.split_at(width);
                let w2 = &rest[..width];
                let off_b1 = width * d;
                let off_w2 = off_b1 + width;
                for h in 0..width {
                    let a = (dot(&w1[h * d..(h + 1) * d], x) + b1[h]).tanh();
                    out[off_w2 + h] += scale * a;
                    let back = scale * w2[h] * (1.0 - a * a);
                    for k in 0..d {
                        out[h * d + k] += back * x[k];
                    }
                    out[off_b1 + h] += back;
                }
                out[off_w2 + width] += scale;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
