//! Regression metrics, severity levels with one-vs-rest ROC, and held-out
//! splits along space or time.

mod roc;
mod split;

use serde::{Deserialize, Serialize};

pub use roc::{roc_auc, roc_auc_ovr, roc_curve, roc_csv, ClassAuc, RocPoint};
pub use split::{generalization_split, Axis, GeneralizationSplit};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("metric inputs must be non-empty and of equal length (got {0} and {1})")]
    Metric(usize, usize),
    #[error("severity value {0} is negative or not finite")]
    Domain(f64),
    #[error("split: {0}")]
    Split(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
}

pub fn regression_metrics(y: &[f64], y_hat: &[f64]) -> Result<RegressionMetrics, EvalError> {
    if y.is_empty() || y.len() != y_hat.len() {
        return Err(EvalError::Metric(y.len(), y_hat.len()));
    }
    let n = y.len() as f64;
    let (abs, sq) = y.iter().zip(y_hat).fold((0.0, 0.0), |(a, s), (&t, &p)| {
        let d = p - t;
        (a + d.abs(), s + d * d)
    });
    let mse = sq / n;
    Ok(RegressionMetrics { mae: abs / n, mse, rmse: mse.sqrt() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Healthy,
    Good,
    Severe,
    VerySevere,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::Healthy, Level::Good, Level::Severe, Level::VerySevere];

    /// Half-open `[lo, hi)` value range.
    pub fn bin(self) -> (f64, f64) {
        match self {
            Level::Healthy => (0.0, 1.0),
            Level::Good => (1.0, 5.0),
            Level::Severe => (5.0, 10.0),
            Level::VerySevere => (10.0, f64::INFINITY),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Negated distance from `value` to this level's range; 0 inside it.
    pub fn affinity(self, value: f64) -> f64 {
        let (lo, hi) = self.bin();
        -((lo - value).max(0.0) + (value - hi).max(0.0))
    }
}

pub fn classify_level(value: f64) -> Result<Level, EvalError> {
    if !(value >= 0.0) || !value.is_finite() {
        return Err(EvalError::Domain(value));
    }
    Ok(Level::ALL.into_iter().rev().find(|l| value >= l.bin().0).expect("value >= 0"))
}

/// One held-out prediction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionPair {
    pub node_id: u64,
    pub y: f64,
    pub y_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Free-form split description, e.g. `{"axis": "time", "k": 1600, "s": 0}`.
    pub split: serde_json::Value,
    pub metrics: RegressionMetrics,
    pub auc: Vec<ClassAuc>,
    /// `confusion[true][predicted]`, rows and columns in [`Level::ALL`] order.
    pub confusion: [[usize; 4]; 4],
    pub pairs: Vec<PredictionPair>,
}

impl EvalReport {
    pub fn from_pairs(split: serde_json::Value, pairs: Vec<PredictionPair>) -> Result<Self, EvalError> {
        let y: Vec<f64> = pairs.iter().map(|p| p.y).collect();
        let y_hat: Vec<f64> = pairs.iter().map(|p| p.y_hat).collect();
        let metrics = regression_metrics(&y, &y_hat)?;
        let truth: Vec<Level> = y.iter().map(|&v| classify_level(v)).collect::<Result<_, _>>()?;
        let mut confusion = [[0usize; 4]; 4];
        for (t, &p) in truth.iter().zip(&y_hat) {
            let predicted = classify_level(p.max(0.0)).unwrap_or(Level::Healthy);
            confusion[t.index()][predicted.index()] += 1;
        }
        Ok(Self { split, metrics, auc: roc_auc_ovr(&truth, &y_hat), confusion, pairs })
    }
}
