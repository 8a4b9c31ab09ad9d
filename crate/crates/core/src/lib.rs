//! Label differential privacy for binary labels.
//!
//! * [`em`]: the exponential mechanism over label vectors with a Hamming
//!   score, its exact score distribution, sampler and brute-force checks.
//! * [`truncbin`]: truncated binomial sums, bounds and monotonicity scans.
//! * [`budget`]: minimum privacy budgets for a target flip rate.
//! * [`losses`]: symmetric and conventional surrogate losses with AUC/BER risks.
//! * [`trainer`]: synthetic data, models and the experiment grid.
//! * [`io`]: label CSV files and release sidecars.

mod dd;

pub mod budget;
pub mod em;
pub mod error;
pub mod io;
pub mod losses;
pub mod numeric;
pub mod rng;
pub mod trainer;
pub mod truncbin;

pub use em::{LabelVector, PrivacyParams, PrivatizationRecord, RrParams, ScoreDistribution};
pub use error::{Error, Result};
pub use losses::LossSpec;
