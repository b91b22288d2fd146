//! Cleaning operations. Each returns a new dataset; inputs are untouched.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{Dataset, GroupKey, Label, RowView, TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AveragingReport {
    /// Mean over duplicated groups of the population variance of the task's
    /// labels about their group mean. Zero when nothing was duplicated.
    pub noise_estimate: f64,
    pub groups_merged: usize,
    pub rows_removed: usize,
    /// Categorical labels on other tasks dropped because merged rows disagreed.
    pub conflicting_labels_dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    /// Instance count per class of the new vocabulary, in vocabulary order.
    pub counts: Vec<(String, usize)>,
    /// Classes with fewer than `min_count` instances.
    pub under_populated: Vec<String>,
}

impl CollapseReport {
    pub fn has_violation(&self) -> bool {
        !self.under_populated.is_empty()
    }
}

#[derive(Clone, Copy)]
enum Reduce {
    Mean,
    Min,
    Unanimous,
}

fn merge_groups(
    ds: &Dataset,
    groups: &[Vec<usize>],
    reducers: &[Reduce],
) -> Result<(Dataset, usize)> {
    let n_new = groups.len();
    let d = ds.n_features();
    let mut row_ids = Vec::with_capacity(n_new);
    let mut features = Vec::with_capacity(n_new * d);
    let mut labels: Vec<BTreeMap<usize, Label>> = vec![BTreeMap::new(); ds.tasks().len()];
    let mut dropped = 0;
    for (g, rows) in groups.iter().enumerate() {
        let first = rows[0];
        row_ids.push(ds.row_id(first).to_string());
        features.extend_from_slice(ds.row(first));
        for (t, reduce) in reducers.iter().enumerate() {
            let present: Vec<Label> = rows.iter().filter_map(|&r| ds.label(r, t)).collect();
            if present.is_empty() {
                continue;
            }
            let merged = match reduce {
                Reduce::Mean => {
                    let vals: Vec<f64> = present.iter().filter_map(|l| l.as_real()).collect();
                    Some(Label::Real(vals.iter().sum::<f64>() / vals.len() as f64))
                }
                Reduce::Min => present
                    .iter()
                    .filter_map(|l| l.as_real())
                    .reduce(f64::min)
                    .map(Label::Real),
                Reduce::Unanimous => {
                    if present.iter().all(|l| *l == present[0]) {
                        Some(present[0])
                    } else {
                        dropped += present.len();
                        None
                    }
                }
            };
            if let Some(l) = merged {
                labels[t].insert(g, l);
            }
        }
    }
    let (_, names, _, tasks, _) = ds.clone().into_parts();
    Ok((Dataset::new(row_ids, names, features, tasks, labels)?, dropped))
}

fn default_reducers(ds: &Dataset) -> Vec<Reduce> {
    ds.tasks()
        .iter()
        .map(|t| if t.is_real() { Reduce::Mean } else { Reduce::Unanimous })
        .collect()
}

fn require_real(ds: &Dataset, task: &str) -> Result<usize> {
    let t = ds.task_index(task)?;
    if !ds.tasks()[t].is_real() {
        return Err(Error::TaskKind {
            task: task.to_string(),
            expected: "real-valued",
        });
    }
    Ok(t)
}

fn require_categorical(ds: &Dataset, task: &str) -> Result<usize> {
    let t = ds.task_index(task)?;
    if ds.tasks()[t].is_real() {
        return Err(Error::TaskKind {
            task: task.to_string(),
            expected: "categorical",
        });
    }
    Ok(t)
}

/// Merges rows sharing `key` into one row that carries the mean of `task`.
///
/// The merged row keeps the first row's id and features. Other real tasks are
/// averaged too; other categorical tasks keep their label only when every
/// merged row agrees.
pub fn average_duplicates(
    ds: &Dataset,
    key: &GroupKey,
    task: &str,
) -> Result<(Dataset, AveragingReport)> {
    let t = require_real(ds, task)?;
    let groups = ds.groups(key)?;
    if groups.len() == ds.n_rows() {
        return Ok((ds.clone(), AveragingReport::default()));
    }

    let mut variances = Vec::new();
    for rows in &groups {
        let vals: Vec<f64> = rows
            .iter()
            .filter_map(|&r| ds.label(r, t).and_then(Label::as_real))
            .collect();
        if vals.len() >= 2 {
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            variances.push(var);
        }
    }
    let noise_estimate = if variances.is_empty() {
        0.0
    } else {
        variances.iter().sum::<f64>() / variances.len() as f64
    };

    let (merged, dropped) = merge_groups(ds, &groups, &default_reducers(ds))?;
    let report = AveragingReport {
        noise_estimate,
        groups_merged: groups.iter().filter(|g| g.len() > 1).count(),
        rows_removed: ds.n_rows() - groups.len(),
        conflicting_labels_dropped: dropped,
    };
    Ok((merged, report))
}

/// Merges rows sharing `key`, keeping the minimum label of each listed real
/// task (e.g. the lowest activation energy across binding sites).
pub fn group_min(ds: &Dataset, key: &GroupKey, tasks: &[String]) -> Result<Dataset> {
    let mut reducers = default_reducers(ds);
    for task in tasks {
        reducers[require_real(ds, task)?] = Reduce::Min;
    }
    let groups = ds.groups(key)?;
    if groups.len() == ds.n_rows() {
        return Ok(ds.clone());
    }
    Ok(merge_groups(ds, &groups, &reducers)?.0)
}

/// Remaps a categorical task through `merge_map`. Classes absent from the map
/// keep their name. The new vocabulary lists mapped names in order of first
/// appearance over the old vocabulary.
pub fn collapse_classes(
    ds: &Dataset,
    task: &str,
    merge_map: &BTreeMap<String, String>,
    min_count: usize,
) -> Result<(Dataset, CollapseReport)> {
    let t = require_categorical(ds, task)?;
    let old = ds.tasks()[t].classes();
    for source in merge_map.keys() {
        if !old.contains(source) {
            return Err(Error::Schema(format!(
                "merge map references unknown class {source:?} of task {task:?}"
            )));
        }
    }
    let mut vocab: Vec<String> = Vec::new();
    let remap: Vec<usize> = old
        .iter()
        .map(|c| {
            let target = merge_map.get(c).unwrap_or(c);
            match vocab.iter().position(|v| v == target) {
                Some(i) => i,
                None => {
                    vocab.push(target.clone());
                    vocab.len() - 1
                }
            }
        })
        .collect();

    let mut counts = vec![0usize; vocab.len()];
    let labels: BTreeMap<usize, Label> = ds
        .labels(t)
        .iter()
        .filter_map(|(&r, l)| l.as_class().map(|c| (r, remap[c])))
        .map(|(r, c)| {
            counts[c] += 1;
            (r, Label::Class(c))
        })
        .collect();

    let spec = TaskSpec {
        name: ds.tasks()[t].name.clone(),
        kind: TaskKind::Categorical {
            classes: vocab.clone(),
        },
        units: ds.tasks()[t].units.clone(),
    };
    let out = ds.with_task(spec, labels)?;
    let report = CollapseReport {
        under_populated: vocab
            .iter()
            .zip(&counts)
            .filter(|(_, &n)| n < min_count)
            .map(|(c, _)| c.clone())
            .collect(),
        counts: vocab.into_iter().zip(counts).collect(),
    };
    Ok((out, report))
}

/// Removes every label of `task` in groups whose labels disagree. Rows and
/// other tasks are untouched.
pub fn drop_conflicting_labels(ds: &Dataset, task: &str, key: &GroupKey) -> Result<Dataset> {
    let t = require_categorical(ds, task)?;
    let mut labels = ds.labels(t).clone();
    for rows in ds.groups(key)? {
        let present: BTreeSet<usize> = rows
            .iter()
            .filter_map(|&r| ds.label(r, t).and_then(Label::as_class))
            .collect();
        if present.len() > 1 {
            for r in rows {
                labels.remove(&r);
            }
        }
    }
    ds.with_task(ds.tasks()[t].clone(), labels)
}

/// Rows for which `predicate` holds, in original order.
pub fn filter_rows<F>(ds: &Dataset, predicate: F) -> Dataset
where
    F: Fn(RowView<'_>) -> bool,
{
    let keep: Vec<usize> = (0..ds.n_rows())
        .filter(|&index| predicate(RowView { index, dataset: ds }))
        .collect();
    ds.select_rows(&keep)
        .expect("filtered rows are distinct and in range")
}

/// Uniform sample of `n` rows without replacement, in sampled order.
pub fn subsample(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || n > ds.n_rows() {
        return Err(Error::InvalidParam(format!(
            "subsample size {n} outside 1..={}",
            ds.n_rows()
        )));
    }
    let mut rng = seed::rng(seed);
    let rows = index::sample(&mut rng, ds.n_rows(), n).into_vec();
    ds.select_rows(&rows)
}
