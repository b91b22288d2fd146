//! Repeated-trial evaluation: cross-validation, holdouts and learning curves.
//!
//! Rows carrying a label for any scope task are split into training and
//! test sets; every other row is auxiliary and stays in every training set.
//! Test rows lose only their scope-task labels, so auxiliary labels on the
//! same row (a low-fidelity value, say) remain available to the architecture.
//! Scores are computed against scope-task labels only.
//!
//! Each trial draws its plan from `seed::derive(master, trial)`. The plan is
//! shared by every architecture in the run.

mod metrics;
mod plan;
mod report;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::composite::{classify_composite, composite_ground_truth, CompositeTaskSpec};
use crate::dataset::{Dataset, Label};
use crate::error::{Error, Result};
use crate::seed;
use crate::transfer::{train_architecture, ArchitectureSpec, PretrainedStore, TaskPrediction, TrainingParams};

pub use metrics::{rmse, weighted_f1};
pub use plan::{make_fold_plan, make_holdout_plan, scoped_rows, sha256_hex, FoldPlan, HoldoutPlan};
pub use report::{Cell, ConsumedRows, EvalReport, Failure, PlanRecord, REPORT_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
pub enum MetricSpec {
    Rmse { task: String },
    WeightedF1 { task: String },
    CompositeF1 { composite: CompositeTaskSpec },
}

impl MetricSpec {
    pub fn rmse(task: &str) -> Self {
        MetricSpec::Rmse { task: task.into() }
    }

    pub fn f1(task: &str) -> Self {
        MetricSpec::WeightedF1 { task: task.into() }
    }

    /// Column label used in reports.
    pub fn label(&self) -> String {
        match self {
            MetricSpec::Rmse { task } => format!("rmse:{task}"),
            MetricSpec::WeightedF1 { task } => format!("f1:{task}"),
            MetricSpec::CompositeF1 { composite } => format!("f1:{}", composite.name),
        }
    }

    fn tasks(&self) -> Vec<&str> {
        match self {
            MetricSpec::Rmse { task } | MetricSpec::WeightedF1 { task } => vec![task],
            MetricSpec::CompositeF1 { composite } => composite.source_tasks.iter().map(String::as_str).collect(),
        }
    }

    fn validate_for(&self, ds: &Dataset, scope: &[String]) -> Result<()> {
        for t in self.tasks() {
            let spec = ds.task(t)?;
            if !scope.iter().any(|s| s == t) {
                return Err(Error::InvalidParam(format!(
                    "metric {} scores {t:?}, which is not a scope task",
                    self.label()
                )));
            }
            let real_wanted = !matches!(self, MetricSpec::WeightedF1 { .. });
            if spec.is_real() != real_wanted {
                return Err(Error::TaskKind {
                    task: t.to_string(),
                    expected: if real_wanted { "real-valued" } else { "categorical" },
                });
            }
        }
        if let MetricSpec::CompositeF1 { composite } = self {
            composite.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArchitecture {
    pub name: String,
    pub spec: ArchitectureSpec,
    /// Trial count for this architecture when it differs from the protocol's.
    #[serde(default)]
    pub trials: Option<usize>,
}

impl NamedArchitecture {
    pub fn new(name: impl Into<String>, spec: ArchitectureSpec) -> Self {
        Self {
            name: name.into(),
            spec,
            trials: None,
        }
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = Some(trials);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub trials: usize,
    pub seed: u64,
    /// Tasks whose labelled rows are split; the rest are auxiliary.
    pub scope_tasks: Vec<String>,
    pub metrics: Vec<MetricSpec>,
}

impl Protocol {
    pub fn new(trials: usize, seed: u64, scope_tasks: &[&str], metrics: Vec<MetricSpec>) -> Self {
        Self {
            trials,
            seed,
            scope_tasks: scope_tasks.iter().map(|s| s.to_string()).collect(),
            metrics,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EvalMode {
    CrossValidation { k: usize },
    Holdout { fraction: f64 },
    LearningCurve { sizes: Vec<usize>, holdout_fraction: f64 },
}

pub fn cross_validate(
    archs: &[NamedArchitecture],
    ds: &Dataset,
    k: usize,
    protocol: &Protocol,
    params: &TrainingParams,
    store: &PretrainedStore,
) -> Result<EvalReport> {
    evaluate(archs, ds, &EvalMode::CrossValidation { k }, protocol, params, store)
}

pub fn holdout(
    archs: &[NamedArchitecture],
    ds: &Dataset,
    fraction: f64,
    protocol: &Protocol,
    params: &TrainingParams,
    store: &PretrainedStore,
) -> Result<EvalReport> {
    evaluate(archs, ds, &EvalMode::Holdout { fraction }, protocol, params, store)
}

pub fn learning_curve(
    archs: &[NamedArchitecture],
    ds: &Dataset,
    sizes: &[usize],
    holdout_fraction: f64,
    protocol: &Protocol,
    params: &TrainingParams,
    store: &PretrainedStore,
) -> Result<EvalReport> {
    let mode = EvalMode::LearningCurve {
        sizes: sizes.to_vec(),
        holdout_fraction,
    };
    evaluate(archs, ds, &mode, protocol, params, store)
}

/// One training run: scope labels kept on `train`, predictions made on `test`.
struct Fold {
    train: Vec<bool>,
    test: Vec<usize>,
    seed: u64,
}

struct Split {
    folds: Vec<Fold>,
}

struct Unit {
    trial: usize,
    split: usize,
    arch: usize,
}

struct Outcome {
    scores: Vec<std::result::Result<f64, String>>,
    digest: String,
}

fn split_labels(mode: &EvalMode) -> Vec<(String, Option<usize>)> {
    match mode {
        EvalMode::CrossValidation { .. } => vec![("cv".into(), None)],
        EvalMode::Holdout { .. } => vec![("holdout".into(), None)],
        EvalMode::LearningCurve { sizes, .. } => sizes.iter().map(|&s| (s.to_string(), Some(s))).collect(),
    }
}

/// Checks an evaluation request without training anything.
pub fn validate_evaluation(
    archs: &[NamedArchitecture],
    ds: &Dataset,
    mode: &EvalMode,
    protocol: &Protocol,
) -> Result<()> {
    if archs.is_empty() {
        return Err(Error::InvalidParam("no architectures to evaluate".into()));
    }
    for (i, a) in archs.iter().enumerate() {
        if archs[..i].iter().any(|b| b.name == a.name) {
            return Err(Error::InvalidParam(format!("architecture name {:?} is used twice", a.name)));
        }
        if a.trials == Some(0) {
            return Err(Error::InvalidParam(format!("architecture {:?} asks for zero trials", a.name)));
        }
        a.spec.validate_for(ds)?;
    }
    if protocol.trials == 0 {
        return Err(Error::InvalidParam("trials must be >= 1".into()));
    }
    if protocol.metrics.is_empty() {
        return Err(Error::InvalidParam("no metrics requested".into()));
    }
    for m in &protocol.metrics {
        m.validate_for(ds, &protocol.scope_tasks)?;
    }
    let scoped = scoped_rows(ds, &protocol.scope_tasks)?.len();
    match mode {
        EvalMode::CrossValidation { k } => {
            make_fold_plan(ds, *k, 0, &protocol.scope_tasks)?;
        }
        EvalMode::Holdout { fraction } => {
            make_holdout_plan(ds, *fraction, 0, &protocol.scope_tasks)?;
        }
        EvalMode::LearningCurve {
            sizes,
            holdout_fraction,
        } => {
            let plan = make_holdout_plan(ds, *holdout_fraction, 0, &protocol.scope_tasks)?;
            if sizes.is_empty() || sizes[0] == 0 || sizes.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParam(format!(
                    "learning-curve sizes must be positive and strictly ascending, got {sizes:?}"
                )));
            }
            let last = *sizes.last().unwrap();
            if last > plan.pool.len() {
                return Err(Error::InvalidParam(format!(
                    "largest size {last} exceeds the {} rows left after holding out {} of {scoped}",
                    plan.pool.len(),
                    plan.holdout.len()
                )));
            }
        }
    }
    Ok(())
}

fn row_mask(ds: &Dataset, ids: &[String]) -> Vec<bool> {
    let mut keep = vec![false; ds.n_rows()];
    let index: BTreeMap<&str, usize> = (0..ds.n_rows()).map(|r| (ds.row_id(r), r)).collect();
    for id in ids {
        keep[index[id.as_str()]] = true;
    }
    keep
}

fn trial_splits(ds: &Dataset, mode: &EvalMode, scope: &[String], trial_seed: u64) -> Result<(Vec<Split>, String)> {
    let fold_seed = |label: &str, f: usize| seed::derive_named(trial_seed, &format!("train/{label}/{f}"));
    match mode {
        EvalMode::CrossValidation { k } => {
            let plan = make_fold_plan(ds, *k, seed::derive_named(trial_seed, "folds"), scope)?;
            let folds = (0..*k)
                .map(|f| Fold {
                    train: (0..ds.n_rows())
                        .map(|r| plan.assignment.get(ds.row_id(r)).is_some_and(|&g| g != f))
                        .collect(),
                    test: plan.fold_rows(ds, f),
                    seed: fold_seed("cv", f),
                })
                .collect();
            let split = Split { folds };
            Ok((vec![split], plan.digest()))
        }
        EvalMode::Holdout { fraction } => {
            let plan = make_holdout_plan(ds, *fraction, seed::derive_named(trial_seed, "holdout"), scope)?;
            let split = Split {
                folds: vec![Fold {
                    train: row_mask(ds, &plan.pool),
                    test: rows_of(ds, &plan.holdout),
                    seed: fold_seed("holdout", 0),
                }],
            };
            Ok((vec![split], plan.digest()))
        }
        EvalMode::LearningCurve {
            sizes,
            holdout_fraction,
        } => {
            let plan = make_holdout_plan(ds, *holdout_fraction, seed::derive_named(trial_seed, "holdout"), scope)?;
            let test = rows_of(ds, &plan.holdout);
            let mut splits = Vec::with_capacity(sizes.len());
            for &size in sizes {
                splits.push(Split {
                    folds: vec![Fold {
                        train: row_mask(ds, plan.training_ids(size)?),
                        test: test.clone(),
                        seed: fold_seed(&size.to_string(), 0),
                    }],
                });
            }
            Ok((splits, plan.digest()))
        }
    }
}

fn rows_of(ds: &Dataset, ids: &[String]) -> Vec<usize> {
    let keep = row_mask(ds, ids);
    (0..ds.n_rows()).filter(|&r| keep[r]).collect()
}

/// Runs every (trial, split, architecture) unit and assembles the report.
pub fn evaluate(
    archs: &[NamedArchitecture],
    ds: &Dataset,
    mode: &EvalMode,
    protocol: &Protocol,
    params: &TrainingParams,
    store: &PretrainedStore,
) -> Result<EvalReport> {
    validate_evaluation(archs, ds, mode, protocol)?;
    params.validate()?;
    let scope = &protocol.scope_tasks;
    let scope_idx: Vec<usize> = scope.iter().map(|t| ds.task_index(t)).collect::<Result<_>>()?;
    let arch_trials: Vec<usize> = archs.iter().map(|a| a.trials.unwrap_or(protocol.trials)).collect();
    let max_trials = *arch_trials.iter().max().unwrap();

    let mut trials = Vec::with_capacity(max_trials);
    let mut plans = Vec::with_capacity(max_trials);
    for trial in 0..max_trials {
        let (splits, digest) = trial_splits(ds, mode, scope, seed::derive(protocol.seed, trial as u64))?;
        trials.push(splits);
        plans.push(PlanRecord { trial, digest });
    }

    let mut units = Vec::new();
    for (trial, splits) in trials.iter().enumerate() {
        for split in 0..splits.len() {
            for (arch, &n) in arch_trials.iter().enumerate() {
                if trial < n {
                    units.push(Unit { trial, split, arch });
                }
            }
        }
    }

    let truths = Truths::new(ds, &protocol.metrics)?;
    let outcomes: Vec<Outcome> = units
        .par_iter()
        .map(|u| {
            let split = &trials[u.trial][u.split];
            run_unit(&archs[u.arch].spec, ds, split, &scope_idx, params, store, &protocol.metrics, &truths)
        })
        .collect();

    let labels = split_labels(mode);
    let mut values: BTreeMap<(usize, usize, usize), Vec<Option<f64>>> = BTreeMap::new();
    let mut failures: BTreeMap<(usize, usize, usize), Vec<Failure>> = BTreeMap::new();
    let mut consumed = Vec::with_capacity(units.len());
    for (u, out) in units.iter().zip(outcomes) {
        for (m, score) in out.scores.into_iter().enumerate() {
            let key = (u.split, u.arch, m);
            let v = values.entry(key).or_insert_with(|| vec![None; arch_trials[u.arch]]);
            match score {
                Ok(x) => v[u.trial] = Some(x),
                Err(message) => failures.entry(key).or_default().push(Failure {
                    trial: u.trial,
                    message,
                }),
            }
        }
        consumed.push(ConsumedRows {
            trial: u.trial,
            split: labels[u.split].0.clone(),
            architecture: archs[u.arch].name.clone(),
            digest: out.digest,
        });
    }

    let mut cells = Vec::new();
    for (s, (label, size)) in labels.iter().enumerate() {
        for (a, arch) in archs.iter().enumerate() {
            for (m, metric) in protocol.metrics.iter().enumerate() {
                let key = (s, a, m);
                cells.push(Cell::new(
                    label,
                    *size,
                    &arch.name,
                    &metric.label(),
                    values.remove(&key).unwrap_or_default(),
                    failures.remove(&key).unwrap_or_default(),
                ));
            }
        }
    }

    Ok(EvalReport {
        version: REPORT_VERSION,
        fingerprint: None,
        mode: mode.clone(),
        seed: protocol.seed,
        scope_tasks: scope.clone(),
        architectures: archs.iter().map(|a| a.name.clone()).collect(),
        metrics: protocol.metrics.iter().map(MetricSpec::label).collect(),
        splits: labels.into_iter().map(|(l, _)| l).collect(),
        cells,
        plans,
        consumed,
    })
}

/// Observed values each metric is scored against, by row.
struct Truths {
    per_metric: Vec<BTreeMap<usize, Label>>,
}

impl Truths {
    fn new(ds: &Dataset, metrics: &[MetricSpec]) -> Result<Self> {
        let mut per_metric = Vec::with_capacity(metrics.len());
        for m in metrics {
            per_metric.push(match m {
                MetricSpec::Rmse { task } | MetricSpec::WeightedF1 { task } => ds.labels(ds.task_index(task)?).clone(),
                MetricSpec::CompositeF1 { composite } => composite_ground_truth(ds, composite)?
                    .into_iter()
                    .map(|(r, c)| (r, Label::Class(c)))
                    .collect(),
            });
        }
        Ok(Self { per_metric })
    }
}

#[allow(clippy::too_many_arguments)]
fn run_unit(
    spec: &ArchitectureSpec,
    ds: &Dataset,
    split: &Split,
    scope_idx: &[usize],
    params: &TrainingParams,
    store: &PretrainedStore,
    metrics: &[MetricSpec],
    truths: &Truths,
) -> Outcome {
    let mut hasher = Sha256::new();
    let mut predictions: Vec<(usize, BTreeMap<String, TaskPrediction>)> = Vec::new();
    let mut error = None;
    for (f, fold) in split.folds.iter().enumerate() {
        let result = ds.mask_labels(scope_idx, &fold.train).and_then(|train| {
            hasher.update(format!("fold {f}\n").as_bytes());
            for r in 0..train.n_rows() {
                if scope_idx.iter().any(|&t| train.label(r, t).is_some()) {
                    hasher.update(format!("train\t{}\n", train.row_id(r)).as_bytes());
                }
            }
            for &r in &fold.test {
                hasher.update(format!("test\t{}\n", ds.row_id(r)).as_bytes());
            }
            let ta = train_architecture(spec, &train, &params.reseeded(fold.seed), store)?;
            for &r in &fold.test {
                predictions.push((r, ta.predict(ds.row(r), false)?));
            }
            Ok(())
        });
        if let Err(e) = result {
            error = Some(format!("fold {f}: {e}"));
            break;
        }
    }
    let digest = hex::encode(hasher.finalize());
    let scores = match error {
        Some(msg) => vec![Err(msg); metrics.len()],
        None => {
            predictions.sort_by_key(|(r, _)| *r);
            metrics
                .iter()
                .zip(&truths.per_metric)
                .map(|(m, truth)| score(m, ds, truth, &predictions))
                .collect()
        }
    };
    Outcome { scores, digest }
}

fn score(
    metric: &MetricSpec,
    ds: &Dataset,
    truth: &BTreeMap<usize, Label>,
    predictions: &[(usize, BTreeMap<String, TaskPrediction>)],
) -> std::result::Result<f64, String> {
    let missing = |t: &str| format!("architecture does not predict {t:?}");
    let scored = predictions.iter().filter_map(|(r, p)| truth.get(r).map(|l| (l, p)));
    let result = match metric {
        MetricSpec::Rmse { task } => {
            let mut t = Vec::new();
            let mut p = Vec::new();
            for (label, preds) in scored {
                t.push(label.as_real().expect("validated real task"));
                p.push(preds.get(task).and_then(TaskPrediction::mean).ok_or_else(|| missing(task))?);
            }
            if t.is_empty() {
                return Err(format!("no test row carries a {task:?} label"));
            }
            rmse(&t, &p)
        }
        MetricSpec::WeightedF1 { task } => {
            let k = ds.task(task).map_err(|e| e.to_string())?.classes().len();
            let mut t = Vec::new();
            let mut p = Vec::new();
            for (label, preds) in scored {
                t.push(label.as_class().expect("validated categorical task"));
                p.push(preds.get(task).and_then(TaskPrediction::class).ok_or_else(|| missing(task))?);
            }
            if t.is_empty() {
                return Err(format!("no test row carries a {task:?} label"));
            }
            weighted_f1(&t, &p, k)
        }
        MetricSpec::CompositeF1 { composite } => {
            let mut t = Vec::new();
            let mut p = Vec::new();
            for (label, preds) in scored {
                let means: BTreeMap<String, f64> = preds
                    .iter()
                    .filter_map(|(task, v)| v.mean().map(|m| (task.clone(), m)))
                    .collect();
                t.push(label.as_class().expect("composite truth is a class"));
                p.push(classify_composite(composite, &means).map_err(|e| e.to_string())?);
            }
            if t.is_empty() {
                return Err(format!("no test row carries every source of {:?}", composite.name));
            }
            weighted_f1(&t, &p, composite.source_tasks.len())
        }
    };
    result.map_err(|e| e.to_string())
}
