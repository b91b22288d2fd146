//! Tabular data with sparse multi-task labels.
//!
//! A [`Dataset`] holds a complete `n × d` feature matrix and, per task, a
//! sparse map from row index to label. Missing labels are simply absent from
//! the map; there is no sentinel value.

mod clean;
mod io;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use clean::{
    average_duplicates, collapse_classes, drop_conflicting_labels, filter_rows, group_min,
    subsample, AveragingReport, CollapseReport,
};
pub use io::{load_delimited, write_delimited, ColumnRole, ColumnSpec, Schema, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    Real,
    Categorical { classes: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: TaskKind,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub units: String,
}

impl TaskSpec {
    pub fn real(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: TaskKind::Real,
            units: String::new(),
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        classes: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: TaskKind::Categorical {
                classes: classes.into_iter().map(Into::into).collect(),
            },
            units: String::new(),
        }
    }

    pub fn with_units(mut self, units: impl Into<String>) -> Self {
        self.units = units.into();
        self
    }

    pub fn is_real(&self) -> bool {
        matches!(self.kind, TaskKind::Real)
    }

    /// Class vocabulary, empty for real-valued tasks.
    pub fn classes(&self) -> &[String] {
        match &self.kind {
            TaskKind::Real => &[],
            TaskKind::Categorical { classes } => classes,
        }
    }

    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.classes().iter().position(|c| c == class)
    }

    fn validate(&self) -> Result<()> {
        if let TaskKind::Categorical { classes } = &self.kind {
            if classes.len() < 2 {
                return Err(Error::Schema(format!(
                    "categorical task {:?} needs at least 2 classes, has {}",
                    self.name,
                    classes.len()
                )));
            }
            let mut seen = HashSet::new();
            for c in classes {
                if !seen.insert(c.as_str()) {
                    return Err(Error::Schema(format!(
                        "duplicate class {:?} in task {:?}",
                        c, self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A single stored label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Label {
    Real(f64),
    Class(usize),
}

impl Label {
    pub fn as_real(self) -> Option<f64> {
        match self {
            Label::Real(v) => Some(v),
            Label::Class(_) => None,
        }
    }

    pub fn as_class(self) -> Option<usize> {
        match self {
            Label::Class(c) => Some(c),
            Label::Real(_) => None,
        }
    }
}

/// Rows sharing a key are treated as repeated measurements of one material.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    /// Rows with bit-identical feature vectors.
    AllFeatures,
    /// Rows agreeing on the named feature columns.
    Features(Vec<String>),
}

/// Feature matrix plus sparse per-task labels. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    row_ids: Vec<String>,
    feature_names: Vec<String>,
    features: Vec<f64>,
    tasks: Vec<TaskSpec>,
    labels: Vec<BTreeMap<usize, Label>>,
}

impl Dataset {
    /// Builds a dataset from row-major features and per-task label maps.
    ///
    /// Checks dimensions, row-id and task-name uniqueness, finite features and
    /// label/task kind agreement. It does not require every task to carry a
    /// label; see [`Dataset::unlabeled_tasks`].
    pub fn new(
        row_ids: Vec<String>,
        feature_names: Vec<String>,
        features: Vec<f64>,
        tasks: Vec<TaskSpec>,
        labels: Vec<BTreeMap<usize, Label>>,
    ) -> Result<Self> {
        let n = row_ids.len();
        let d = feature_names.len();
        if features.len() != n * d {
            return Err(Error::InvalidDataset(format!(
                "feature buffer has {} values, expected {n} rows x {d} features",
                features.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite feature value at row {}, feature {:?}",
                pos / d.max(1),
                feature_names[pos % d.max(1)]
            )));
        }
        let mut seen = HashSet::new();
        for id in &row_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate row id {id:?}")));
            }
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate feature {name:?}")));
            }
        }
        if labels.len() != tasks.len() {
            return Err(Error::InvalidDataset(format!(
                "{} label maps for {} tasks",
                labels.len(),
                tasks.len()
            )));
        }
        let mut seen = HashSet::new();
        for (task, map) in tasks.iter().zip(&labels) {
            task.validate()?;
            if !seen.insert(task.name.as_str()) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate task {:?}",
                    task.name
                )));
            }
            for (&row, label) in map {
                if row >= n {
                    return Err(Error::InvalidDataset(format!(
                        "label for task {:?} on row {row} out of range",
                        task.name
                    )));
                }
                let ok = match (&task.kind, label) {
                    (TaskKind::Real, Label::Real(v)) => v.is_finite(),
                    (TaskKind::Categorical { classes }, Label::Class(c)) => *c < classes.len(),
                    _ => false,
                };
                if !ok {
                    return Err(Error::InvalidDataset(format!(
                        "invalid label {label:?} for task {:?} on row {row}",
                        task.name
                    )));
                }
            }
        }
        Ok(Self {
            row_ids,
            feature_names,
            features,
            tasks,
            labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_ids.is_empty()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn row_id(&self, row: usize) -> &str {
        &self.row_ids[row]
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.feature_names
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::Schema(format!("unknown feature {name:?}")))
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let d = self.n_features();
        &self.features[row * d..(row + 1) * d]
    }

    pub fn feature(&self, row: usize, feature: usize) -> f64 {
        self.features[row * self.n_features() + feature]
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn task_index(&self, name: &str) -> Result<usize> {
        self.tasks
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::UnknownTask(name.to_string()))
    }

    pub fn task(&self, name: &str) -> Result<&TaskSpec> {
        Ok(&self.tasks[self.task_index(name)?])
    }

    pub fn label(&self, row: usize, task: usize) -> Option<Label> {
        self.labels[task].get(&row).copied()
    }

    /// Sparse labels of one task, keyed by row index.
    pub fn labels(&self, task: usize) -> &BTreeMap<usize, Label> {
        &self.labels[task]
    }

    pub fn label_count(&self, task: usize) -> usize {
        self.labels[task].len()
    }

    /// Real-valued labels of a task as `(row, value)` pairs in row order.
    pub fn real_labels(&self, task: &str) -> Result<Vec<(usize, f64)>> {
        let t = self.task_index(task)?;
        if !self.tasks[t].is_real() {
            return Err(Error::TaskKind {
                task: task.to_string(),
                expected: "real-valued",
            });
        }
        Ok(self.labels[t]
            .iter()
            .filter_map(|(&r, l)| l.as_real().map(|v| (r, v)))
            .collect())
    }

    /// Tasks that currently carry no label at all.
    pub fn unlabeled_tasks(&self) -> Vec<&str> {
        self.tasks
            .iter()
            .zip(&self.labels)
            .filter(|(_, m)| m.is_empty())
            .map(|(t, _)| t.name.as_str())
            .collect()
    }

    /// Fails if any task has no labels.
    pub fn require_labels(&self) -> Result<()> {
        match self.unlabeled_tasks().first() {
            Some(t) => Err(Error::InvalidDataset(format!("task {t:?} has no labels"))),
            None => Ok(()),
        }
    }

    /// New dataset made of the given rows, in the given order. Rows must be
    /// distinct.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        let mut remap = vec![usize::MAX; self.n_rows()];
        for (new, &old) in rows.iter().enumerate() {
            if old >= self.n_rows() {
                return Err(Error::InvalidDataset(format!("row {old} out of range")));
            }
            if remap[old] != usize::MAX {
                return Err(Error::InvalidDataset(format!("row {old} selected twice")));
            }
            remap[old] = new;
        }
        let mut features = Vec::with_capacity(rows.len() * self.n_features());
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        let labels = self
            .labels
            .iter()
            .map(|m| {
                m.iter()
                    .filter(|(&r, _)| remap[r] != usize::MAX)
                    .map(|(&r, &l)| (remap[r], l))
                    .collect()
            })
            .collect();
        Ok(Dataset {
            row_ids: rows.iter().map(|&r| self.row_ids[r].clone()).collect(),
            feature_names: self.feature_names.clone(),
            features,
            tasks: self.tasks.clone(),
            labels,
        })
    }

    /// Appends feature columns (one value per row for each new column).
    pub fn with_features(&self, names: &[String], columns: &[Vec<f64>]) -> Result<Dataset> {
        if names.len() != columns.len() {
            return Err(Error::LengthMismatch(names.len(), columns.len()));
        }
        for c in columns {
            if c.len() != self.n_rows() {
                return Err(Error::LengthMismatch(c.len(), self.n_rows()));
            }
        }
        let d = self.n_features() + names.len();
        let mut features = Vec::with_capacity(self.n_rows() * d);
        for r in 0..self.n_rows() {
            features.extend_from_slice(self.row(r));
            features.extend(columns.iter().map(|c| c[r]));
        }
        let mut feature_names = self.feature_names.clone();
        feature_names.extend(names.iter().cloned());
        Dataset::new(
            self.row_ids.clone(),
            feature_names,
            features,
            self.tasks.clone(),
            self.labels.clone(),
        )
    }

    /// Adds a task, or replaces an existing task of the same name.
    pub fn with_task(&self, spec: TaskSpec, labels: BTreeMap<usize, Label>) -> Result<Dataset> {
        let mut tasks = self.tasks.clone();
        let mut all = self.labels.clone();
        match tasks.iter().position(|t| t.name == spec.name) {
            Some(i) => {
                tasks[i] = spec;
                all[i] = labels;
            }
            None => {
                tasks.push(spec);
                all.push(labels);
            }
        }
        Dataset::new(
            self.row_ids.clone(),
            self.feature_names.clone(),
            self.features.clone(),
            tasks,
            all,
        )
    }

    /// Copy in which the labels of `tasks` survive only on rows where
    /// `keep[row]` is true. Other tasks are untouched.
    pub fn mask_labels(&self, tasks: &[usize], keep: &[bool]) -> Result<Dataset> {
        if keep.len() != self.n_rows() {
            return Err(Error::LengthMismatch(keep.len(), self.n_rows()));
        }
        let mut out = self.clone();
        for &t in tasks {
            if t >= out.labels.len() {
                return Err(Error::UnknownTask(format!("#{t}")));
            }
            out.labels[t].retain(|&r, _| keep[r]);
        }
        Ok(out)
    }

    /// Keeps only the named tasks, in the given order.
    pub fn with_tasks_subset(&self, names: &[&str]) -> Result<Dataset> {
        let mut tasks = Vec::with_capacity(names.len());
        let mut labels = Vec::with_capacity(names.len());
        for name in names {
            let t = self.task_index(name)?;
            tasks.push(self.tasks[t].clone());
            labels.push(self.labels[t].clone());
        }
        Dataset::new(
            self.row_ids.clone(),
            self.feature_names.clone(),
            self.features.clone(),
            tasks,
            labels,
        )
    }

    /// Stacks two datasets with identical feature columns. Tasks are matched
    /// by name; categorical vocabularies are merged in first-appearance order.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.feature_names != other.feature_names {
            return Err(Error::Schema(
                "cannot concatenate datasets with different feature columns".into(),
            ));
        }
        let offset = self.n_rows();
        let mut tasks = self.tasks.clone();
        let mut labels = self.labels.clone();
        for (t, spec) in other.tasks.iter().enumerate() {
            let idx = match tasks.iter().position(|x| x.name == spec.name) {
                Some(i) => i,
                None => {
                    let kind = match &spec.kind {
                        TaskKind::Real => TaskKind::Real,
                        TaskKind::Categorical { .. } => TaskKind::Categorical {
                            classes: Vec::new(),
                        },
                    };
                    tasks.push(TaskSpec {
                        name: spec.name.clone(),
                        kind,
                        units: spec.units.clone(),
                    });
                    labels.push(BTreeMap::new());
                    tasks.len() - 1
                }
            };
            match (&mut tasks[idx].kind, &spec.kind) {
                (TaskKind::Real, TaskKind::Real) => {
                    for (&r, &l) in &other.labels[t] {
                        labels[idx].insert(r + offset, l);
                    }
                }
                (TaskKind::Categorical { classes }, TaskKind::Categorical { classes: theirs }) => {
                    let map: Vec<usize> = theirs
                        .iter()
                        .map(|c| match classes.iter().position(|x| x == c) {
                            Some(i) => i,
                            None => {
                                classes.push(c.clone());
                                classes.len() - 1
                            }
                        })
                        .collect();
                    for (&r, &l) in &other.labels[t] {
                        if let Label::Class(c) = l {
                            labels[idx].insert(r + offset, Label::Class(map[c]));
                        }
                    }
                }
                _ => {
                    return Err(Error::Schema(format!(
                        "task {:?} has different kinds in the two datasets",
                        spec.name
                    )))
                }
            }
        }
        let mut row_ids = self.row_ids.clone();
        row_ids.extend(other.row_ids.iter().cloned());
        let mut features = self.features.clone();
        features.extend_from_slice(&other.features);
        Dataset::new(row_ids, self.feature_names.clone(), features, tasks, labels)
    }

    pub(crate) fn group_keys(&self, key: &GroupKey) -> Result<Vec<Vec<u64>>> {
        let cols: Vec<usize> = match key {
            GroupKey::AllFeatures => (0..self.n_features()).collect(),
            GroupKey::Features(names) => names
                .iter()
                .map(|n| self.feature_index(n))
                .collect::<Result<_>>()?,
        };
        Ok((0..self.n_rows())
            .map(|r| {
                cols.iter()
                    .map(|&c| {
                        let v = self.feature(r, c);
                        // +0.0 and -0.0 compare equal
                        if v == 0.0 {
                            0
                        } else {
                            v.to_bits()
                        }
                    })
                    .collect()
            })
            .collect())
    }

    /// Rows grouped by key, groups ordered by first appearance.
    pub(crate) fn groups(&self, key: &GroupKey) -> Result<Vec<Vec<usize>>> {
        let keys = self.group_keys(key)?;
        let mut index: std::collections::HashMap<&[u64], usize> = Default::default();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (r, k) in keys.iter().enumerate() {
            match index.get(k.as_slice()) {
                Some(&g) => groups[g].push(r),
                None => {
                    index.insert(k.as_slice(), groups.len());
                    groups.push(vec![r]);
                }
            }
        }
        Ok(groups)
    }

    pub(crate) fn into_parts(
        self,
    ) -> (
        Vec<String>,
        Vec<String>,
        Vec<f64>,
        Vec<TaskSpec>,
        Vec<BTreeMap<usize, Label>>,
    ) {
        (
            self.row_ids,
            self.feature_names,
            self.features,
            self.tasks,
            self.labels,
        )
    }
}

/// Read-only view of one row handed to row predicates.
#[derive(Debug, Clone, Copy)]
pub struct RowView<'a> {
    pub index: usize,
    pub dataset: &'a Dataset,
}

impl<'a> RowView<'a> {
    pub fn id(&self) -> &'a str {
        self.dataset.row_id(self.index)
    }

    pub fn features(&self) -> &'a [f64] {
        self.dataset.row(self.index)
    }

    pub fn feature(&self, name: &str) -> Option<f64> {
        let f = self.dataset.feature_index(name).ok()?;
        Some(self.dataset.feature(self.index, f))
    }

    pub fn label(&self, task: &str) -> Option<Label> {
        let t = self.dataset.task_index(task).ok()?;
        self.dataset.label(self.index, t)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Small mixed dataset used across module tests.
    pub(crate) fn toy() -> Dataset {
        let ids = (0..6).map(|i| format!("r{i}")).collect();
        let features = vec![0.0, 1.0, 1.0, 1.0, 2.0, 0.0, 3.0, 1.0, 4.0, 0.0, 5.0, 1.0];
        let mut gap = BTreeMap::new();
        for (r, v) in [(0, 0.5), (1, 1.5), (2, 2.5), (3, 3.5)] {
            gap.insert(r, Label::Real(v));
        }
        let mut color = BTreeMap::new();
        for (r, c) in [(2, 0), (3, 1), (4, 0), (5, 1)] {
            color.insert(r, Label::Class(c));
        }
        Dataset::new(
            ids,
            vec!["x1".into(), "x2".into()],
            features,
            vec![
                TaskSpec::real("gap"),
                TaskSpec::categorical("color", ["red", "blue"]),
            ],
            vec![gap, color],
        )
        .unwrap()
    }

    #[test]
    fn construction_checks() {
        let ds = toy();
        assert_eq!(ds.n_rows(), 6);
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.row(2), &[2.0, 0.0]);
        assert_eq!(ds.label_count(0), 4);
        assert_eq!(ds.label(0, 1), None);

        let bad = Dataset::new(
            vec!["a".into(), "a".into()],
            vec!["x".into()],
            vec![1.0, 2.0],
            vec![],
            vec![],
        );
        assert!(bad.is_err());

        let mut m = BTreeMap::new();
        m.insert(0, Label::Class(2));
        let bad = Dataset::new(
            vec!["a".into()],
            vec!["x".into()],
            vec![1.0],
            vec![TaskSpec::categorical("c", ["p", "q"])],
            vec![m],
        );
        assert!(bad.is_err());

        let bad = Dataset::new(
            vec!["a".into()],
            vec!["x".into()],
            vec![1.0],
            vec![TaskSpec::categorical("c", ["p"])],
            vec![BTreeMap::new()],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn select_and_augment() {
        let ds = toy();
        let sub = ds.select_rows(&[3, 1]).unwrap();
        assert_eq!(sub.row_ids(), &["r3".to_string(), "r1".to_string()]);
        assert_eq!(sub.label(0, 0), Some(Label::Real(3.5)));
        assert_eq!(sub.label(0, 1), Some(Label::Class(1)));
        assert_eq!(sub.label(1, 1), None);
        assert!(ds.select_rows(&[1, 1]).is_err());

        let aug = ds
            .with_features(&["z".into()], &[vec![9.0; 6]])
            .unwrap();
        assert_eq!(aug.row(1), &[1.0, 1.0, 9.0]);
    }

    #[test]
    fn concat_merges_vocabularies() {
        let a = toy();
        let mut b = toy().select_rows(&[4, 5]).unwrap();
        b.row_ids = vec!["s4".into(), "s5".into()];
        b.tasks[1] = TaskSpec::categorical("color", ["blue", "green"]);
        let c = a.concat(&b).unwrap();
        assert_eq!(c.n_rows(), 8);
        assert_eq!(c.tasks()[1].classes(), &["red", "blue", "green"]);
        // b row 4 had class 0 = "blue" under its own vocabulary
        assert_eq!(c.label(6, 1), Some(Label::Class(1)));
        assert_eq!(c.label(7, 1), Some(Label::Class(2)));
    }
}
