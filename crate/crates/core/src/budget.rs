//! Minimum privacy budgets that keep the EM flip rate under a tolerance with
//! a given confidence, and regeneration of the reference budget tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::em::{flip_probability, PrivacyParams};
use crate::error::{Error, Result};
use crate::numeric::round_half_up;
use crate::truncbin::{hoeffding_lower_bound, upper_trunc};

/// Reference table at 99.9% confidence.
pub const GOLDEN_BUDGETS_999: &str = include_str!("../data/budgets_999.csv");
/// Reference table at 95% confidence.
pub const GOLDEN_BUDGETS_95: &str = include_str!("../data/budgets_95.csv");

/// Default table rows.
pub const DEFAULT_N_LIST: [u64; 5] = [100, 1_000, 10_000, 100_000, 1_000_000];
/// Default table columns, as flip percentages.
pub const DEFAULT_FLIP_PERCENTS: [u32; 10] = [50, 45, 40, 35, 30, 25, 20, 15, 10, 5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetQuery {
    n: u64,
    flip_fraction: f64,
    confidence: f64,
    sensitivity: f64,
}

impl BudgetQuery {
    pub fn new(n: u64, flip_fraction: f64, confidence: f64, sensitivity: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("n must be >= 1".into()));
        }
        if !(flip_fraction > 0.0 && flip_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "flip fraction must lie in (0, 1], got {flip_fraction}"
            )));
        }
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(Error::InvalidParameter(format!("confidence must lie in (0, 1), got {confidence}")));
        }
        if !(sensitivity.is_finite() && sensitivity > 0.0) {
            return Err(Error::InvalidParameter(format!("sensitivity must be positive, got {sensitivity}")));
        }
        Ok(Self { n, flip_fraction, confidence, sensitivity })
    }

    pub fn n(&self) -> u64 {
        self.n
    }
    pub fn flip_fraction(&self) -> f64 {
        self.flip_fraction
    }
    pub fn confidence(&self) -> f64 {
        self.confidence
    }
    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    /// Tolerated number of flips `j = phi * n`, kept real.
    pub fn tolerated_flips(&self) -> f64 {
        self.flip_fraction * self.n as f64
    }

    /// Hoeffding slack `sqrt(-n ln(1 - P) / 2)`.
    pub fn slack(&self) -> f64 {
        (-(self.n as f64) * (-self.confidence).ln_1p() / 2.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BudgetStatus {
    Applicable,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetResult {
    pub status: BudgetStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_min: Option<f64>,
}

impl BudgetResult {
    fn applicable(eps: f64) -> Self {
        Self { status: BudgetStatus::Applicable, epsilon_min: Some(eps) }
    }

    pub const NOT_APPLICABLE: Self = Self { status: BudgetStatus::NotApplicable, epsilon_min: None };

    pub fn is_applicable(&self) -> bool {
        self.status == BudgetStatus::Applicable
    }
}

/// Smallest `epsilon` for which the Hoeffding bound certifies at most `phi * n`
/// flips with probability `P`:
/// `2 Delta ln((n - j + s) / (j - s))`, applicable iff `j > s`.
///
/// Tolerances above `1/2 + s/n` are met even by a uniform release and give 0.
pub fn min_budget(q: &BudgetQuery) -> BudgetResult {
    let j = q.tolerated_flips();
    let s = q.slack();
    if j <= s {
        return BudgetResult::NOT_APPLICABLE;
    }
    let eps = 2.0 * q.sensitivity * ((q.n as f64 - j + s) / (j - s)).ln();
    BudgetResult::applicable(eps.max(0.0))
}

/// Budget for a 50% flip tolerance at 99.9% confidence, in the closed form
/// `2 Delta ln((1 + c) / (1 - c))` with `c = 2 sqrt(1.5 ln 10 / n)`.
pub fn half_flip_budget(n: u64, sensitivity: f64) -> Result<BudgetResult> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    if !(sensitivity.is_finite() && sensitivity > 0.0) {
        return Err(Error::InvalidParameter(format!("sensitivity must be positive, got {sensitivity}")));
    }
    let c = 2.0 * (1.5 * std::f64::consts::LN_10 / n as f64).sqrt();
    if c >= 1.0 {
        return Ok(BudgetResult::NOT_APPLICABLE);
    }
    Ok(BudgetResult::applicable(2.0 * sensitivity * ((1.0 + c) / (1.0 - c)).ln()))
}

/// One table cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetCell {
    pub n: u64,
    pub flip_percent: u32,
    #[serde(flatten)]
    pub result: BudgetResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetTable {
    pub confidence: f64,
    pub sensitivity: f64,
    pub n_list: Vec<u64>,
    pub flip_percents: Vec<u32>,
    /// Row-major, `n_list.len()` rows of `flip_percents.len()` cells.
    pub cells: Vec<BudgetCell>,
}

impl BudgetTable {
    pub fn row(&self, i: usize) -> &[BudgetCell] {
        let w = self.flip_percents.len();
        &self.cells[i * w..(i + 1) * w]
    }

    pub fn filled(&self) -> usize {
        self.cells.iter().filter(|c| c.result.is_applicable()).count()
    }

    /// CSV in the published layout; budgets rounded half-up to 3 decimals,
    /// empty for non-applicable cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n");
        for f in &self.flip_percents {
            let _ = write!(out, ",{f}%");
        }
        out.push('\n');
        for i in 0..self.n_list.len() {
            out.push_str(&self.n_list[i].to_string());
            for c in self.row(i) {
                out.push(',');
                if let Some(e) = c.result.epsilon_min {
                    let _ = write!(out, "{:.3}", round_half_up(e, 3));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Fixed-width text rendering, `-` for non-applicable cells.
    pub fn to_text(&self) -> String {
        let mut out = format!("{:>8}", "n");
        for f in &self.flip_percents {
            let _ = write!(out, " {:>7}", format!("{f}%"));
        }
        out.push('\n');
        for i in 0..self.n_list.len() {
            let _ = write!(out, "{:>8}", self.n_list[i]);
            for c in self.row(i) {
                match c.result.epsilon_min {
                    Some(e) => {
                        let _ = write!(out, " {:>7.3}", round_half_up(e, 3));
                    }
                    None => {
                        let _ = write!(out, " {:>7}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Budget table over `n_list` x `flip_percents`.
pub fn budget_table(
    confidence: f64,
    n_list: &[u64],
    flip_percents: &[u32],
    sensitivity: f64,
) -> Result<BudgetTable> {
    let mut cells = Vec::with_capacity(n_list.len() * flip_percents.len());
    for &n in n_list {
        for &f in flip_percents {
            if f == 0 || f > 100 {
                return Err(Error::InvalidParameter(format!("flip percent must lie in 1..=100, got {f}")));
            }
            let phi = f as f64 / 100.0;
            let q = BudgetQuery::new(n, phi, confidence, sensitivity)?;
            cells.push(BudgetCell { n, flip_percent: f, result: min_budget(&q) });
        }
    }
    Ok(BudgetTable {
        confidence,
        sensitivity,
        n_list: n_list.to_vec(),
        flip_percents: flip_percents.to_vec(),
        cells,
    })
}

/// Default-layout table at the given confidence with unit sensitivity.
pub fn default_table(confidence: f64) -> Result<BudgetTable> {
    budget_table(confidence, &DEFAULT_N_LIST, &DEFAULT_FLIP_PERCENTS, 1.0)
}

/// Success probability of keeping at most `floor(phi n)` flips.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub exact: f64,
    pub hoeffding: f64,
}

pub fn success_for_budget(n: u64, params: &PrivacyParams, flip_fraction: f64) -> Result<SuccessReport> {
    if !(flip_fraction > 0.0 && flip_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("flip fraction must lie in (0, 1], got {flip_fraction}")));
    }
    let p = flip_probability(params).flip_probability();
    // guard against 0.35 * 100 = 35.000000000000007 style noise
    let j = ((flip_fraction * n as f64) + 1e-9).floor().min(n as f64);
    Ok(SuccessReport {
        exact: upper_trunc(n, j as u64, p)?,
        hoeffding: hoeffding_lower_bound(n, j, p),
    })
}

/// A parsed reference table: per row, `n` and one optional value per column.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldenTable {
    pub flip_percents: Vec<u32>,
    pub rows: Vec<(u64, Vec<Option<f64>>)>,
}

impl GoldenTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        let mut flip_percents = Vec::new();
        for (i, h) in headers.iter().enumerate().skip(1) {
            let v = h.trim().trim_end_matches('%').parse::<u32>().map_err(|e| Error::Parse {
                line: 1,
                msg: format!("column {i}: {e}"),
            })?;
            flip_percents.push(v);
        }
        let mut rows = Vec::new();
        for (idx, rec) in reader.records().enumerate() {
            let rec = rec?;
            let line = idx + 2;
            let n = rec
                .get(0)
                .unwrap_or("")
                .trim()
                .parse::<u64>()
                .map_err(|e| Error::Parse { line, msg: format!("n: {e}") })?;
            let mut vals = Vec::new();
            for field in rec.iter().skip(1) {
                let field = field.trim();
                if field.is_empty() {
                    vals.push(None);
                } else {
                    vals.push(Some(
                        field.parse::<f64>().map_err(|e| Error::Parse { line, msg: format!("{field}: {e}") })?,
                    ));
                }
            }
            if vals.len() != flip_percents.len() {
                return Err(Error::Parse { line, msg: "wrong number of columns".into() });
            }
            rows.push((n, vals));
        }
        Ok(Self { flip_percents, rows })
    }

    pub fn filled(&self) -> usize {
        self.rows.iter().flat_map(|(_, v)| v).filter(|v| v.is_some()).count()
    }
}

/// A cell where the computed table and the reference disagree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMismatch {
    pub n: u64,
    pub flip_percent: u32,
    pub computed: Option<f64>,
    pub reference: Option<f64>,
}

/// Compares the 3-decimal rounding of `table` with `golden`. Filled cells
/// must agree within `tol`; empty cells must coincide.
pub fn golden_diff(table: &BudgetTable, golden: &GoldenTable, tol: f64) -> Vec<CellMismatch> {
    let mut out = Vec::new();
    for (i, &n) in table.n_list.iter().enumerate() {
        let grow = golden.rows.iter().find(|(gn, _)| *gn == n);
        for c in table.row(i) {
            let reference = grow.and_then(|(_, vals)| {
                golden.flip_percents.iter().position(|&f| f == c.flip_percent).and_then(|k| vals[k])
            });
            let computed = c.result.epsilon_min.map(|e| round_half_up(e, 3));
            let ok = match (computed, reference) {
                (Some(a), Some(b)) => (a - b).abs() <= tol + 1e-12,
                (None, None) => true,
                _ => false,
            };
            if !ok {
                out.push(CellMismatch { n, flip_percent: c.flip_percent, computed, reference });
            }
        }
    }
    // reference rows missing from the computed table
    for (gn, vals) in &golden.rows {
        if !table.n_list.contains(gn) {
            for (k, v) in vals.iter().enumerate() {
                if v.is_some() {
                    out.push(CellMismatch { n: *gn, flip_percent: golden.flip_percents[k], computed: None, reference: *v });
                }
            }
        }
    }
    out
}

/// Embedded reference for a supported confidence level.
pub fn golden_for(confidence: f64) -> Option<&'static str> {
    if confidence == 0.999 {
        Some(GOLDEN_BUDGETS_999)
    } else if confidence == 0.95 {
        Some(GOLDEN_BUDGETS_95)
    } else {
        None
    }
}
