//! Repeated train/evaluate runs over a grid of budgets, losses and sizes.

use std::fmt::Write as _;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{generate_synthetic, Mechanism, SyntheticSpec, SyntheticSplit, TrainingSet};
use super::model::{Architecture, Model};
use super::train::{evaluate, train, Objective, TrainConfig};
use crate::em::PrivacyParams;
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::numeric::mean_std;
use crate::rng::{cell_index, stream, tag_hash};

/// Default budgets.
pub const DEFAULT_EPSILONS: [f64; 7] = [0.1, 0.5, 1.0, 1.5, 3.0, 5.0, 7.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    /// `None` trains on clean labels.
    pub epsilons: Vec<Option<f64>>,
    pub losses: Vec<LossSpec>,
    pub n_list: Vec<usize>,
    pub n_test: usize,
    pub repetitions: usize,
    pub mechanism: Mechanism,
    pub data: SyntheticSpec,
    pub architecture: Architecture,
    pub objective: Objective,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_per_class: usize,
    pub pairs_per_step: usize,
    pub master_seed: u64,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epsilons: DEFAULT_EPSILONS.iter().map(|&e| Some(e)).collect(),
            losses: LossSpec::trainable().to_vec(),
            n_list: vec![1000],
            n_test: 1000,
            repetitions: 10,
            mechanism: Mechanism::Em,
            data: SyntheticSpec::default(),
            architecture: Architecture::Linear,
            objective: t.objective,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_per_class: t.batch_per_class,
            pairs_per_step: t.pairs_per_step,
            master_seed: 0,
        }
    }
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidParameter("repetitions must be >= 1".into()));
        }
        if self.epsilons.is_empty() || self.losses.is_empty() || self.n_list.is_empty() {
            return Err(Error::InvalidParameter("grid lists must be non-empty".into()));
        }
        for e in self.epsilons.iter().flatten() {
            PrivacyParams::with_epsilon(*e)?;
        }
        if self.n_list.iter().any(|&n| n < 2) || self.n_test < 2 {
            return Err(Error::InvalidParameter("sizes must be >= 2".into()));
        }
        self.data.validate()?;
        self.train_config(self.losses[0], 0).validate()
    }

    fn train_config(&self, loss: LossSpec, seed: u64) -> TrainConfig {
        TrainConfig {
            loss,
            objective: self.objective,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_per_class: self.batch_per_class,
            pairs_per_step: self.pairs_per_step,
            seed,
        }
    }
}

fn epsilon_key(e: Option<f64>) -> u64 {
    e.map_or(u64::MAX, f64::to_bits)
}

/// Renders a budget, `inf` for clean labels.
pub fn format_epsilon(e: Option<f64>) -> String {
    match e {
        Some(e) => format!("{e}"),
        None => "inf".to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Auc,
    BalancedAccuracy,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Auc, Metric::BalancedAccuracy];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Auc => "auc",
            Metric::BalancedAccuracy => "balanced_accuracy",
        }
    }
}

/// Per-cell summary over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub epsilon: Option<f64>,
    pub loss: LossSpec,
    pub n: usize,
    pub metric: Metric,
    pub mean: f64,
    /// Sample standard deviation.
    pub std: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResults {
    pub grid: ExperimentGrid,
    /// Ordered by budget, loss, size, then metric, following the grid lists.
    pub cells: Vec<CellSummary>,
}

impl GridResults {
    pub fn cell(&self, epsilon: Option<f64>, loss: &LossSpec, n: usize, metric: Metric) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.epsilon == epsilon && c.loss == *loss && c.n == n && c.metric == metric)
    }

    pub fn mean(&self, epsilon: Option<f64>, loss: &LossSpec, n: usize, metric: Metric) -> Option<f64> {
        self.cell(epsilon, loss, n, metric).map(|c| c.mean)
    }

    /// `epsilon,loss,n,metric,mean,std` with 3-decimal values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,loss,n,metric,mean,std\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},\"{}\",{},{},{:.3},{:.3}",
                format_epsilon(c.epsilon),
                c.loss,
                c.n,
                c.metric.name(),
                c.mean,
                c.std
            );
        }
        out
    }

    /// One block per size and metric: rows are budgets, columns losses,
    /// entries `mean(std)`, the best mean of each row marked with `*`.
    pub fn to_text(&self) -> String {
        let g = &self.grid;
        let names: Vec<String> = g.losses.iter().map(|l| l.name().to_string()).collect();
        let width = 13;
        let mut out = String::new();
        for &n in &g.n_list {
            for metric in Metric::ALL {
                let _ = writeln!(out, "{} (n={n}, {} repetitions)", metric.name(), g.repetitions);
                let _ = write!(out, "{:>8}", "epsilon");
                for name in &names {
                    let _ = write!(out, " {name:>width$}");
                }
                out.push('\n');
                for &e in &g.epsilons {
                    let row: Vec<&CellSummary> =
                        g.losses.iter().filter_map(|l| self.cell(e, l, n, metric)).collect();
                    let best = row.iter().map(|c| round1(c.mean)).fold(f64::NEG_INFINITY, f64::max);
                    let _ = write!(out, "{:>8}", format_epsilon(e));
                    for c in row {
                        let mark = if round1(c.mean) == best { "*" } else { "" };
                        let cell = format!("{:.1}({:.1}){mark}", c.mean, c.std);
                        let _ = write!(out, " {cell:>width$}");
                    }
                    out.push('\n');
                }
                out.push('\n');
            }
        }
        out
    }
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Runs every `(budget, loss, size, repetition)` job and summarizes per
/// cell.
///
/// Data for `(n, rep)` and released labels for `(epsilon, n, rep)` are
/// shared across losses, so losses are compared on identical noisy labels.
/// Every random draw comes from a stream keyed by the cell, so the output is
/// the same for any thread count.
pub fn run_grid(grid: &ExperimentGrid) -> Result<GridResults> {
    grid.validate()?;
    let reps = grid.repetitions;
    let master = grid.master_seed;

    let data_jobs: Vec<(usize, usize)> =
        (0..grid.n_list.len()).flat_map(|i| (0..reps).map(move |r| (i, r))).collect();
    let splits: Vec<SyntheticSplit> = data_jobs
        .par_iter()
        .map(|&(i, r)| {
            let n = grid.n_list[i];
            let mut rng = stream(master, "data", cell_index(&[n as u64, r as u64]));
            generate_synthetic(&grid.data, n, grid.n_test, &mut rng)
        })
        .collect::<Result<_>>()?;
    let split_at = |i: usize, r: usize| &splits[i * reps + r];

    let release_jobs: Vec<(usize, usize, usize)> = (0..grid.epsilons.len())
        .flat_map(|e| data_jobs.iter().map(move |&(i, r)| (e, i, r)))
        .collect();
    let released: Vec<TrainingSet> = release_jobs
        .par_iter()
        .map(|&(e, i, r)| {
            let eps = grid.epsilons[e];
            let n = grid.n_list[i] as u64;
            let mut rng = stream(master, "privatize", cell_index(&[epsilon_key(eps), n, r as u64]));
            let params = eps.map(PrivacyParams::with_epsilon).transpose()?;
            TrainingSet::release(&split_at(i, r).train, grid.mechanism, params.as_ref(), &mut rng)
        })
        .collect::<Result<_>>()?;
    let per_eps = data_jobs.len();

    let train_jobs: Vec<(usize, usize, usize, usize)> = (0..grid.epsilons.len())
        .flat_map(|e| {
            (0..grid.losses.len())
                .flat_map(move |l| (0..grid.n_list.len()).flat_map(move |i| (0..reps).map(move |r| (e, l, i, r))))
        })
        .collect();
    let evals: Vec<[f64; 2]> = train_jobs
        .par_iter()
        .map(|&(e, l, i, r)| {
            let eps = grid.epsilons[e];
            let loss = grid.losses[l];
            let n = grid.n_list[i] as u64;
            let set = &released[e * per_eps + i * reps + r];
            let mut init_rng = stream(master, "init", cell_index(&[n, r as u64]));
            let model = Model::init(grid.architecture, grid.data.d, &mut init_rng)?;
            let seed = stream(
                master,
                "train",
                cell_index(&[epsilon_key(eps), tag_hash(&loss.to_string()), n, r as u64]),
            )
            .next_u64();
            let out = train(set, model, &grid.train_config(loss, seed))?;
            let ev = evaluate(&out.model, &split_at(i, r).test)?;
            Ok([ev.auc_percent, ev.balanced_accuracy_percent])
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for (e, &eps) in grid.epsilons.iter().enumerate() {
        for (l, &loss) in grid.losses.iter().enumerate() {
            for (i, &n) in grid.n_list.iter().enumerate() {
                let base = ((e * grid.losses.len() + l) * grid.n_list.len() + i) * reps;
                for (m, metric) in Metric::ALL.into_iter().enumerate() {
                    let values: Vec<f64> = evals[base..base + reps].iter().map(|v| v[m]).collect();
                    let (mean, std) = mean_std(&values);
                    cells.push(CellSummary { epsilon: eps, loss, n, metric, mean, std, values });
                }
            }
        }
    }
    Ok(GridResults { grid: grid.clone(), cells })
}
