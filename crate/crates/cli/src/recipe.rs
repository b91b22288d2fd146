//! Cleaning recipes: an ordered list of dataset operations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tlforest::dataset::{
    average_duplicates, collapse_classes, drop_conflicting_labels, filter_rows, group_min, subsample,
};
use tlforest::{Dataset, GroupKey};

use crate::fail::{Failure, Invalid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum RecipeOp {
    /// Keeps rows whose feature lies in `[min, max]` and equals `equals`.
    Filter {
        feature: String,
        #[serde(default)]
        min: Option<f64>,
        #[serde(default)]
        max: Option<f64>,
        #[serde(default)]
        equals: Option<f64>,
    },
    /// Keeps rows labelled for every listed task.
    RequireLabels { tasks: Vec<String> },
    AverageDuplicates { task: String, key: GroupKey },
    GroupMin { key: GroupKey, tasks: Vec<String> },
    CollapseClasses {
        task: String,
        #[serde(default)]
        merge: BTreeMap<String, String>,
        #[serde(default)]
        min_count: usize,
        /// Fail instead of reporting when a class stays under-populated.
        #[serde(default)]
        strict: bool,
    },
    DropConflicting { task: String, key: GroupKey },
    Subsample { n: usize, seed: u64 },
}

impl RecipeOp {
    pub fn name(&self) -> &'static str {
        match self {
            RecipeOp::Filter { .. } => "filter",
            RecipeOp::RequireLabels { .. } => "require_labels",
            RecipeOp::AverageDuplicates { .. } => "average_duplicates",
            RecipeOp::GroupMin { .. } => "group_min",
            RecipeOp::CollapseClasses { .. } => "collapse_classes",
            RecipeOp::DropConflicting { .. } => "drop_conflicting",
            RecipeOp::Subsample { .. } => "subsample",
        }
    }

    fn apply(&self, ds: &Dataset) -> Result<(Dataset, Value), Failure> {
        let ctx = self.name();
        Ok(match self {
            RecipeOp::Filter {
                feature,
                min,
                max,
                equals,
            } => {
                let f = ds.feature_index(feature).invalid(ctx)?;
                let out = filter_rows(ds, |row| {
                    let v = row.features()[f];
                    min.is_none_or(|m| v >= m) && max.is_none_or(|m| v <= m) && equals.is_none_or(|e| v == e)
                });
                (out, Value::Null)
            }
            RecipeOp::RequireLabels { tasks } => {
                for t in tasks {
                    ds.task_index(t).invalid(ctx)?;
                }
                let out = filter_rows(ds, |row| tasks.iter().all(|t| row.label(t).is_some()));
                (out, Value::Null)
            }
            RecipeOp::AverageDuplicates { task, key } => {
                let (out, r) = average_duplicates(ds, key, task).invalid(ctx)?;
                let detail = json!({
                    "noise_estimate": r.noise_estimate,
                    "groups_merged": r.groups_merged,
                    "rows_removed": r.rows_removed,
                    "conflicting_labels_dropped": r.conflicting_labels_dropped,
                });
                (out, detail)
            }
            RecipeOp::GroupMin { key, tasks } => (group_min(ds, key, tasks).invalid(ctx)?, Value::Null),
            RecipeOp::CollapseClasses {
                task,
                merge,
                min_count,
                strict,
            } => {
                let (out, r) = collapse_classes(ds, task, merge, *min_count).invalid(ctx)?;
                if *strict && r.has_violation() {
                    return Err(Failure::invalid(format!(
                        "{ctx}: classes of {task:?} below {min_count} rows: {:?}",
                        r.under_populated
                    )));
                }
                let detail = json!({ "counts": r.counts, "under_populated": r.under_populated });
                (out, detail)
            }
            RecipeOp::DropConflicting { task, key } => {
                (drop_conflicting_labels(ds, task, key).invalid(ctx)?, Value::Null)
            }
            RecipeOp::Subsample { n, seed } => (subsample(ds, *n, *seed).invalid(ctx)?, Value::Null),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    pub step: usize,
    pub op: &'static str,
    pub rows_before: usize,
    pub rows_after: usize,
    pub labels_before: BTreeMap<String, usize>,
    pub labels_after: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub detail: Value,
}

pub fn label_counts(ds: &Dataset) -> BTreeMap<String, usize> {
    ds.tasks()
        .iter()
        .enumerate()
        .map(|(t, spec)| (spec.name.clone(), ds.label_count(t)))
        .collect()
}

/// Runs the ops in order. An empty recipe returns the input unchanged.
pub fn run(ds: Dataset, ops: &[RecipeOp]) -> Result<(Dataset, Vec<StepReport>), Failure> {
    let mut cur = ds;
    let mut steps = Vec::with_capacity(ops.len());
    for (i, op) in ops.iter().enumerate() {
        let (next, detail) = op.apply(&cur).map_err(|e| match e {
            Failure::Invalid(e) => Failure::Invalid(e.context(format!("recipe step {i}"))),
            other => other,
        })?;
        steps.push(StepReport {
            step: i,
            op: op.name(),
            rows_before: cur.n_rows(),
            rows_after: next.n_rows(),
            labels_before: label_counts(&cur),
            labels_after: label_counts(&next),
            detail,
        });
        cur = next;
    }
    Ok((cur, steps))
}
