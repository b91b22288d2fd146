//! Bagged multi-task CART forests.
//!
//! Every tree is grown to full depth (by default) on a bootstrap resample of
//! the training rows. The split criterion sums, over tasks, the label-count
//! weighted child impurities: variance for real tasks, Gini for categorical
//! ones. Real labels are z-scored before entering the criterion so the two
//! kinds of term are on a comparable scale; leaf means are kept in original
//! units. Per-tree bootstrap membership counts are retained for the jackknife
//! estimators in [`crate::uncertainty`].

mod grow;
pub mod impurity;
mod params;
pub mod reference;

use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label, TaskSpec};
use crate::error::{Error, Result};
use crate::persist;
use crate::seed::{self, Rng};

pub use grow::{LeafValue, Node, Tree};
pub use impurity::{gini_impurity, multitask_split_score, variance_impurity, TaskLabels};
pub use params::{FeatureSubset, ForestParams, TreeCount};

use grow::{Column, GrowParams, TaskColumn, TrainingSet};

const FOREST_FORMAT: &str = "tlforest-forest";
const FOREST_VERSION: u32 = 1;

/// A trained task together with the standardisation used by the criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestTask {
    pub spec: TaskSpec,
    pub weight: f64,
    /// Mean subtracted from real labels (0 for categorical tasks).
    pub center: f64,
    /// Standard deviation dividing real labels (1 for categorical tasks).
    pub scale: f64,
}

impl ForestTask {
    pub fn standardize(&self, y: f64) -> f64 {
        (y - self.center) / self.scale
    }

    pub fn destandardize(&self, z: f64) -> f64 {
        self.center + self.scale * z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    feature_names: Vec<String>,
    tasks: Vec<ForestTask>,
    trees: Vec<Tree>,
    /// `membership[b][i]`: times training row `i` was drawn for tree `b`.
    membership: Vec<Vec<u32>>,
    /// Ids of the training rows, in the order membership counts use.
    training_rows: Vec<String>,
    seed: u64,
}

impl Forest {
    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn tasks(&self) -> &[ForestTask] {
        &self.tasks
    }

    pub fn task_index(&self, name: &str) -> Result<usize> {
        self.tasks
            .iter()
            .position(|t| t.spec.name == name)
            .ok_or_else(|| Error::UnknownTask(name.to_string()))
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn membership(&self) -> &[Vec<u32>] {
        &self.membership
    }

    pub fn training_row_count(&self) -> usize {
        self.training_rows.len()
    }

    pub fn training_rows(&self) -> &[String] {
        &self.training_rows
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Per-tree leaf means for a real task; `None` where the tree abstains.
    pub fn tree_predictions(&self, task: &str, x: &[f64]) -> Result<Vec<Option<f64>>> {
        self.check_dim(x)?;
        let t = self.task_index(task)?;
        if !self.tasks[t].spec.is_real() {
            return Err(Error::TaskKind {
                task: task.to_string(),
                expected: "real-valued",
            });
        }
        Ok(self
            .trees
            .iter()
            .map(|tree| match &tree.leaf(x)[t] {
                LeafValue::Real { count, mean } if *count > 0 => Some(*mean),
                _ => None,
            })
            .collect())
    }

    /// Mean of the per-tree leaf means over non-abstaining trees.
    pub fn predict_real(&self, task: &str, x: &[f64]) -> Result<f64> {
        let values = self.tree_predictions(task, x)?;
        let (sum, n) = values
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        if n == 0 {
            return Err(Error::Abstained {
                task: task.to_string(),
            });
        }
        Ok(sum / n as f64)
    }

    /// Class probabilities averaged over the normalised leaf histograms of
    /// non-abstaining trees; the class is the argmax, lowest index on ties.
    pub fn predict_class(&self, task: &str, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        self.check_dim(x)?;
        let t = self.task_index(task)?;
        let k = self.tasks[t].spec.classes().len();
        if k == 0 {
            return Err(Error::TaskKind {
                task: task.to_string(),
                expected: "categorical",
            });
        }
        let mut probs = vec![0.0; k];
        let mut voters = 0usize;
        for tree in &self.trees {
            if let LeafValue::Class { counts } = &tree.leaf(x)[t] {
                let total: u32 = counts.iter().sum();
                if total == 0 {
                    continue;
                }
                voters += 1;
                for (p, &c) in probs.iter_mut().zip(counts) {
                    *p += f64::from(c) / f64::from(total);
                }
            }
        }
        if voters == 0 {
            return Err(Error::Abstained {
                task: task.to_string(),
            });
        }
        for p in &mut probs {
            *p /= voters as f64;
        }
        let class = argmax(&probs);
        Ok((class, probs))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        persist::save(path, FOREST_FORMAT, FOREST_VERSION, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        persist::load(path, FOREST_FORMAT, FOREST_VERSION)
    }

    #[cfg(test)]
    pub(crate) fn shift_real_task(&mut self, task: &str, offset: f64) {
        let t = self.task_index(task).unwrap();
        for tree in &mut self.trees {
            for node in &mut tree.nodes {
                if let Node::Leaf(values) = node {
                    if let LeafValue::Real { mean, .. } = &mut values[t] {
                        *mean += offset;
                    }
                }
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn duplicate_tree(&mut self, b: usize) {
        self.trees.push(self.trees[b].clone());
        self.membership.push(self.membership[b].clone());
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

pub fn predict_real(forest: &Forest, task: &str, x: &[f64]) -> Result<f64> {
    forest.predict_real(task, x)
}

pub fn predict_class(forest: &Forest, task: &str, x: &[f64]) -> Result<(usize, Vec<f64>)> {
    forest.predict_class(task, x)
}

pub(crate) fn draw_bootstrap(rng: &mut Rng, n: usize) -> Vec<u32> {
    (0..n).map(|_| rng.random_range(0..n as u32)).collect()
}

pub(crate) fn membership_counts(samples: &[u32], n: usize) -> Vec<u32> {
    let mut counts = vec![0u32; n];
    for &s in samples {
        counts[s as usize] += 1;
    }
    counts
}

/// Mean and population standard deviation (1 when degenerate).
pub(crate) fn standardization(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd > 0.0 && sd.is_finite() {
        (mean, sd)
    } else {
        (mean, 1.0)
    }
}

struct Prepared {
    ts: TrainingSet,
    tasks: Vec<ForestTask>,
    rows: Vec<usize>,
    any_categorical: bool,
}

fn prepare(ds: &Dataset, tasks: &[&str], params: &ForestParams) -> Result<Prepared> {
    params.validate_weights()?;
    if tasks.is_empty() {
        return Err(Error::InvalidParam("no tasks selected".into()));
    }
    let mut idx = Vec::with_capacity(tasks.len());
    for name in tasks {
        let t = ds.task_index(name)?;
        if idx.contains(&t) {
            return Err(Error::InvalidParam(format!("task {name:?} selected twice")));
        }
        if ds.label_count(t) == 0 {
            return Err(Error::EmptyTrainingSet(format!("task {name:?} has no labels")));
        }
        idx.push(t);
    }
    let rows: Vec<usize> = (0..ds.n_rows())
        .filter(|&r| idx.iter().any(|&t| ds.label(r, t).is_some()))
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyTrainingSet("no row carries a selected label".into()));
    }

    let d = ds.n_features();
    let mut x = Vec::with_capacity(rows.len() * d);
    for &r in &rows {
        x.extend_from_slice(ds.row(r));
    }

    let mut columns = Vec::with_capacity(idx.len());
    let mut forest_tasks = Vec::with_capacity(idx.len());
    let mut any_categorical = false;
    for &t in &idx {
        let spec = ds.tasks()[t].clone();
        let weight = params.weight(&spec.name);
        if spec.is_real() {
            let raw: Vec<Option<f64>> = rows
                .iter()
                .map(|&r| ds.label(r, t).and_then(Label::as_real))
                .collect();
            let present: Vec<f64> = raw.iter().flatten().copied().collect();
            let (center, scale) = standardization(&present);
            let z = raw.iter().map(|v| v.map(|y| (y - center) / scale)).collect();
            columns.push(TaskColumn {
                column: Column::Real { z, raw },
                weight,
            });
            forest_tasks.push(ForestTask {
                spec,
                weight,
                center,
                scale,
            });
        } else {
            any_categorical = true;
            let k = spec.classes().len();
            let labels = rows
                .iter()
                .map(|&r| ds.label(r, t).and_then(Label::as_class).map(|c| c as u32))
                .collect();
            columns.push(TaskColumn {
                column: Column::Class { labels, k },
                weight,
            });
            forest_tasks.push(ForestTask {
                spec,
                weight,
                center: 0.0,
                scale: 1.0,
            });
        }
    }
    Ok(Prepared {
        ts: TrainingSet {
            n: rows.len(),
            d,
            x,
            tasks: columns,
        },
        tasks: forest_tasks,
        rows,
        any_categorical,
    })
}

fn assemble(
    ds: &Dataset,
    prep: Prepared,
    trees: Vec<(Tree, Vec<u32>)>,
    seed: u64,
) -> Forest {
    let (trees, membership) = trees.into_iter().unzip();
    Forest {
        feature_names: ds.feature_names().to_vec(),
        tasks: prep.tasks,
        trees,
        membership,
        training_rows: prep.rows.iter().map(|&r| ds.row_id(r).to_string()).collect(),
        seed,
    }
}

/// Trains a forest on the selected tasks.
///
/// Rows carrying no label for any selected task are left out. Tree `b` uses
/// its own RNG seeded from `(params.seed, b)`: it first draws the bootstrap
/// resample, then the per-node feature subsets. The result is therefore
/// independent of how trees are scheduled across threads.
pub fn train_forest(ds: &Dataset, tasks: &[&str], params: &ForestParams) -> Result<Forest> {
    let prep = prepare(ds, tasks, params)?;
    let n = prep.ts.n;
    let b = params.resolve_trees(n)?;
    let grow = GrowParams {
        feature_subset: params.resolve_feature_subset(prep.ts.d, prep.any_categorical)?,
        min_node_size: params.min_node_size.max(1),
    };
    let trees: Vec<(Tree, Vec<u32>)> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng(seed::derive(params.seed, i as u64));
            let sample = draw_bootstrap(&mut rng, n);
            let counts = membership_counts(&sample, n);
            (grow::grow_tree(&prep.ts, sample, &mut rng, &grow), counts)
        })
        .collect();
    Ok(assemble(ds, prep, trees, params.seed))
}

/// Trains with caller-supplied resamples instead of drawn ones. Indices refer
/// to training rows (rows with at least one selected label) in dataset order;
/// the number of trees is `resamples.len()`.
pub fn train_forest_with_resamples(
    ds: &Dataset,
    tasks: &[&str],
    params: &ForestParams,
    resamples: &[Vec<usize>],
) -> Result<Forest> {
    let prep = prepare(ds, tasks, params)?;
    let n = prep.ts.n;
    if resamples.is_empty() {
        return Err(Error::InvalidParam("forest needs at least one tree".into()));
    }
    if let Some(bad) = resamples.iter().flatten().find(|&&i| i >= n) {
        return Err(Error::InvalidParam(format!(
            "resample index {bad} out of range for {n} training rows"
        )));
    }
    let grow = GrowParams {
        feature_subset: params.resolve_feature_subset(prep.ts.d, prep.any_categorical)?,
        min_node_size: params.min_node_size.max(1),
    };
    let trees: Vec<(Tree, Vec<u32>)> = resamples
        .par_iter()
        .enumerate()
        .map(|(i, rs)| {
            let mut rng = seed::rng(seed::derive(params.seed, i as u64));
            let sample: Vec<u32> = rs.iter().map(|&s| s as u32).collect();
            let counts = membership_counts(&sample, n);
            (grow::grow_tree(&prep.ts, sample, &mut rng, &grow), counts)
        })
        .collect();
    Ok(assemble(ds, prep, trees, params.seed))
}
