use serde::{Deserialize, Serialize};

use super::EvalMode;
use crate::error::{Error, Result};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub trial: usize,
    pub message: String,
}

/// One (split, architecture, metric) result aggregated over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// `cv`, `holdout`, or the training size of a learning-curve point.
    pub split: String,
    pub size: Option<usize>,
    pub architecture: String,
    pub metric: String,
    pub trials: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation of the trial values over √n; absent with
    /// fewer than two successful trials.
    pub std_error: Option<f64>,
    /// Indexed by trial; `None` where the trial failed.
    pub values: Vec<Option<f64>>,
    pub failures: Vec<Failure>,
}

impl Cell {
    pub(crate) fn new(
        split: &str,
        size: Option<usize>,
        architecture: &str,
        metric: &str,
        values: Vec<Option<f64>>,
        failures: Vec<Failure>,
    ) -> Self {
        let ok: Vec<f64> = values.iter().flatten().copied().collect();
        let n = ok.len() as f64;
        let mean = (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / n);
        let std_error = match mean {
            Some(m) if ok.len() >= 2 => {
                let var = ok.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
                Some((var / n).sqrt())
            }
            _ => None,
        };
        Self {
            split: split.to_string(),
            size,
            architecture: architecture.to_string(),
            metric: metric.to_string(),
            trials: values.len(),
            mean,
            std_error,
            values,
            failures,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Digest of the row split a trial used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub trial: usize,
    pub digest: String,
}

/// Digest of the training and test rows one architecture actually received.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsumedRows {
    pub trial: usize,
    pub split: String,
    pub architecture: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    /// Set by callers that evaluate from a config file.
    pub fingerprint: Option<String>,
    pub mode: EvalMode,
    pub seed: u64,
    pub scope_tasks: Vec<String>,
    pub architectures: Vec<String>,
    pub metrics: Vec<String>,
    pub splits: Vec<String>,
    pub cells: Vec<Cell>,
    pub plans: Vec<PlanRecord>,
    pub consumed: Vec<ConsumedRows>,
}

impl EvalReport {
    pub fn with_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.fingerprint = Some(fingerprint.into());
        self
    }

    pub fn cell(&self, split: &str, architecture: &str, metric: &str) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.split == split && c.architecture == architecture && c.metric == metric)
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(Cell::is_complete)
    }

    /// Delimited table for one metric: a split (or size) column, then the
    /// mean and standard error of every architecture.
    pub fn table(&self, metric: &str) -> Result<String> {
        if !self.metrics.iter().any(|m| m == metric) {
            return Err(Error::InvalidParam(format!("report has no metric {metric:?}")));
        }
        let first = match self.mode {
            EvalMode::LearningCurve { .. } => "Size",
            _ => "Split",
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![first.to_string()];
        for a in &self.architectures {
            header.push(a.clone());
            header.push(format!("{a}Error"));
        }
        w.write_record(&header)?;
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        for split in &self.splits {
            let mut row = vec![split.clone()];
            for a in &self.architectures {
                let cell = self.cell(split, a, metric);
                row.push(fmt(cell.and_then(|c| c.mean)));
                row.push(fmt(cell.and_then(|c| c.std_error)));
            }
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        if report.version != REPORT_VERSION {
            return Err(Error::Format(format!("unsupported report version {}", report.version)));
        }
        Ok(report)
    }
}
