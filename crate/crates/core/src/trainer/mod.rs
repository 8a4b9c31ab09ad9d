//! Desk-scale learning from released labels: synthetic data, scorers,
//! gradient training and repeated grid runs.

pub mod data;
pub mod grid;
pub mod model;
pub mod train;

pub use data::{
    generate_synthetic, EvaluationSet, Features, LabeledDataset, Mechanism, SyntheticSpec, SyntheticSplit,
    TrainingSet,
};
pub use grid::{run_grid, CellSummary, ExperimentGrid, GridResults, Metric};
pub use model::{Architecture, Model};
pub use train::{evaluate, train, Evaluation, Objective, TrainConfig, TrainOutcome};
