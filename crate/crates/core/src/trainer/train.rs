//! Minibatch gradient descent on the balanced-error or pairwise AUC risk.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::{EvaluationSet, TrainingSet};
use super::model::Model;
use crate::error::{Error, Result};
use crate::losses::{auc_risk, ber_risk, LossSpec};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Ber,
    Auc,
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ber" => Ok(Objective::Ber),
            "auc" => Ok(Objective::Auc),
            other => Err(Error::InvalidParameter(format!("unknown objective '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossSpec,
    pub objective: Objective,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Examples drawn from each class per step (balanced-error objective).
    pub batch_per_class: usize,
    /// Positive/negative pairs drawn per step (AUC objective).
    pub pairs_per_step: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossSpec::DEFAULT_BARRIER,
            objective: Objective::Ber,
            learning_rate: 0.1,
            epochs: 50,
            batch_per_class: 64,
            pairs_per_step: 256,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_per_class == 0 || self.pairs_per_step == 0 {
            return Err(Error::InvalidParameter("epochs and batch sizes must be >= 1".into()));
        }
        if !self.loss.is_trainable() {
            return Err(Error::NonTrainableLoss(self.loss.to_string()));
        }
        Ok(())
    }
}

/// The trained model with the training objective before and after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: Model,
    pub initial_objective: f64,
    pub final_objective: f64,
}

/// Full empirical training risk of `model` under `loss`.
pub fn training_objective(model: &Model, set: &TrainingSet, loss: &LossSpec, objective: Objective) -> Result<f64> {
    let ds = set.dataset();
    let scores: Vec<f64> = (0..ds.len()).map(|i| model.score(ds.features().row(i))).collect();
    match objective {
        Objective::Ber => ber_risk(&scores, ds.labels(), loss),
        Objective::Auc => {
            let pos: Vec<f64> = ds.positive_indices().into_iter().map(|i| scores[i]).collect();
            let neg: Vec<f64> = ds.negative_indices().into_iter().map(|i| scores[i]).collect();
            auc_risk(&pos, &neg, loss)
        }
    }
}

/// Trains `model` on released labels. Steps per epoch are
/// `ceil(n / (2 * batch_per_class))`; every step draws its examples with
/// replacement from each class so both class means are estimated without
/// bias.
///
/// The returned model is the epoch-end iterate (or the starting point) with
/// the lowest training objective, so the objective never increases.
pub fn train(set: &TrainingSet, mut model: Model, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    set.require_both_classes()?;
    let ds = set.dataset();
    if ds.features().dim() != model.dim() {
        return Err(Error::InvalidParameter(format!(
            "model expects d={}, data has d={}",
            model.dim(),
            ds.features().dim()
        )));
    }
    let pos = ds.positive_indices();
    let neg = ds.negative_indices();
    let initial = training_objective(&model, set, &cfg.loss, cfg.objective)?;
    let mut rng = stream(cfg.seed, "train", 0);
    let steps = ds.len().div_ceil(2 * cfg.batch_per_class);
    let mut grad = vec![0.0; model.params().len()];
    let mut best = (initial, model.clone());
    for _ in 0..cfg.epochs {
        for _ in 0..steps {
            grad.iter_mut().for_each(|g| *g = 0.0);
            match cfg.objective {
                Objective::Ber => ber_step(&model, set, &pos, &neg, cfg, &mut rng, &mut grad)?,
                Objective::Auc => auc_step(&model, set, &pos, &neg, cfg, &mut rng, &mut grad)?,
            }
            let lr = cfg.learning_rate;
            for (p, g) in model.params_mut().iter_mut().zip(&grad) {
                *p -= lr * g;
            }
        }
        let obj = training_objective(&model, set, &cfg.loss, cfg.objective)?;
        if obj < best.0 {
            best = (obj, model.clone());
        }
    }
    Ok(TrainOutcome { model: best.1, initial_objective: initial, final_objective: best.0 })
}

fn ber_step<R: Rng>(
    model: &Model,
    set: &TrainingSet,
    pos: &[usize],
    neg: &[usize],
    cfg: &TrainConfig,
    rng: &mut R,
    grad: &mut [f64],
) -> Result<()> {
    let feats = set.dataset().features();
    let w = 0.5 / cfg.batch_per_class as f64;
    for _ in 0..cfg.batch_per_class {
        let x = feats.row(pos[rng.random_range(0..pos.len())]);
        let g = cfg.loss.grad(model.score(x))?;
        model.accumulate_grad(x, w * g, grad);
    }
    for _ in 0..cfg.batch_per_class {
        let x = feats.row(neg[rng.random_range(0..neg.len())]);
        // d/dθ l(-f) = -l'(-f) df/dθ
        let g = cfg.loss.grad(-model.score(x))?;
        model.accumulate_grad(x, -w * g, grad);
    }
    Ok(())
}

fn auc_step<R: Rng>(
    model: &Model,
    set: &TrainingSet,
    pos: &[usize],
    neg: &[usize],
    cfg: &TrainConfig,
    rng: &mut R,
    grad: &mut [f64],
) -> Result<()> {
    let feats = set.dataset().features();
    let w = 1.0 / cfg.pairs_per_step as f64;
    for _ in 0..cfg.pairs_per_step {
        let xp = feats.row(pos[rng.random_range(0..pos.len())]);
        let xn = feats.row(neg[rng.random_range(0..neg.len())]);
        let g = cfg.loss.grad(model.score(xp) - model.score(xn))?;
        model.accumulate_grad(xp, w * g, grad);
        model.accumulate_grad(xn, -w * g, grad);
    }
    Ok(())
}

/// Test-set metrics against clean labels, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub auc_percent: f64,
    pub balanced_accuracy_percent: f64,
}

/// AUC% = 100 (1 - AUC risk) and balanced accuracy% = 100 (1 - BER risk),
/// both under the 0-1 loss with ties counted as errors.
pub fn evaluate(model: &Model, test: &EvaluationSet) -> Result<Evaluation> {
    let ds = test.dataset();
    let scores: Vec<f64> = (0..ds.len()).map(|i| model.score(ds.features().row(i))).collect();
    evaluate_scores(&scores, test)
}

/// [`evaluate`] for precomputed scores, one per test row.
pub fn evaluate_scores(scores: &[f64], test: &EvaluationSet) -> Result<Evaluation> {
    let ds = test.dataset();
    let zo = LossSpec::ZeroOne;
    let pos: Vec<f64> = ds.positive_indices().into_iter().map(|i| scores[i]).collect();
    let neg: Vec<f64> = ds.negative_indices().into_iter().map(|i| scores[i]).collect();
    Ok(Evaluation {
        auc_percent: 100.0 * (1.0 - auc_risk(&pos, &neg, &zo)?),
        balanced_accuracy_percent: 100.0 * (1.0 - ber_risk(scores, ds.labels(), &zo)?),
    })
}
