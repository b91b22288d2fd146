use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How many trees to grow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeCount {
    Fixed(usize),
    /// `k` trees per training row (rows carrying at least one label).
    PerLabel(usize),
}

/// Number of features examined at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubset {
    /// `sqrt(d)` when any classification task is present, `d / 3` otherwise.
    Auto,
    All,
    Sqrt,
    Third,
    Count(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub num_trees: TreeCount,
    pub feature_subset: FeatureSubset,
    /// Nodes with at most this many samples become leaves. 1 grows to full depth.
    pub min_node_size: usize,
    pub seed: u64,
    /// Per-task multipliers on the split criterion; missing tasks weigh 1.0.
    pub task_weights: BTreeMap<String, f64>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            num_trees: TreeCount::PerLabel(1),
            feature_subset: FeatureSubset::Auto,
            min_node_size: 1,
            seed: 0,
            task_weights: BTreeMap::new(),
        }
    }
}

impl ForestParams {
    pub fn with_trees(mut self, n: TreeCount) -> Self {
        self.num_trees = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_feature_subset(mut self, subset: FeatureSubset) -> Self {
        self.feature_subset = subset;
        self
    }

    pub fn with_weight(mut self, task: impl Into<String>, weight: f64) -> Self {
        self.task_weights.insert(task.into(), weight);
        self
    }

    pub fn weight(&self, task: &str) -> f64 {
        self.task_weights.get(task).copied().unwrap_or(1.0)
    }

    pub fn resolve_trees(&self, training_rows: usize) -> Result<usize> {
        let n = match self.num_trees {
            TreeCount::Fixed(n) => n,
            TreeCount::PerLabel(k) => k * training_rows,
        };
        if n == 0 {
            return Err(Error::InvalidParam("forest needs at least one tree".into()));
        }
        Ok(n)
    }

    pub fn resolve_feature_subset(&self, d: usize, any_categorical: bool) -> Result<usize> {
        if d == 0 {
            return Ok(0);
        }
        let k = match self.feature_subset {
            FeatureSubset::Auto if any_categorical => (d as f64).sqrt().floor() as usize,
            FeatureSubset::Auto | FeatureSubset::Third => d / 3,
            FeatureSubset::Sqrt => (d as f64).sqrt().floor() as usize,
            FeatureSubset::All => d,
            FeatureSubset::Count(k) => {
                if k == 0 || k > d {
                    return Err(Error::InvalidParam(format!(
                        "feature subset size {k} outside 1..={d}"
                    )));
                }
                k
            }
        };
        Ok(k.clamp(1, d))
    }

    pub(crate) fn validate_weights(&self) -> Result<()> {
        for (t, w) in &self.task_weights {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::InvalidParam(format!(
                    "task weight for {t:?} must be finite and non-negative, got {w}"
                )));
            }
        }
        Ok(())
    }
}
