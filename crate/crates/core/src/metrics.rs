//! Error metrics and comparison tables.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {pred} predictions vs {target} targets")]
    LengthMismatch { pred: usize, target: usize },
    #[error("cannot compute metrics on empty input")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    /// `None` when some target is exactly zero.
    pub mape_percent: Option<f64>,
    pub max_abs_error: f64,
    /// Population standard deviation of the signed residuals `pred - target`.
    pub std_dev_error: f64,
    pub n: usize,
}

pub fn compute_metrics(pred: &[f64], target: &[f64]) -> Result<MetricsReport, MetricsError> {
    if pred.len() != target.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            target: target.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = pred.len() as f64;
    let residuals: Vec<f64> = pred.iter().zip(target).map(|(p, t)| p - t).collect();
    let mse = residuals.iter().map(|r| r * r).sum::<f64>() / n;
    let max_abs_error = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let mean = residuals.iter().sum::<f64>() / n;
    let var = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let mape_percent = if target.contains(&0.0) {
        None
    } else {
        Some(100.0 / n * residuals.iter().zip(target).map(|(r, t)| (r / t).abs()).sum::<f64>())
    };
    Ok(MetricsReport {
        mse,
        mape_percent,
        max_abs_error,
        std_dev_error: var.sqrt(),
        n: pred.len(),
    })
}

/// Flattens multi-output predictions column-major by sample, for metrics over
/// all outputs at once.
pub fn flatten(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter().flatten().copied().collect()
}

/// One row of a model comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: String,
    pub report: MetricsReport,
}

pub const TABLE_HEADER: &str = "model,mse,mape_percent,max_abs_error,std_dev_error,n";

impl TableRow {
    pub fn to_csv_line(&self) -> String {
        let r = &self.report;
        let mape = r.mape_percent.map_or_else(String::new, |m| format!("{m:?}"));
        format!(
            "{},{:?},{},{:?},{:?},{}",
            self.model, r.mse, mape, r.max_abs_error, r.std_dev_error, r.n
        )
    }
}

/// Comparison table CSV, one line per model in the given order.
pub fn comparison_table(rows: &[TableRow]) -> String {
    let mut s = String::from(TABLE_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv_line());
        s.push('\n');
    }
    s
}
