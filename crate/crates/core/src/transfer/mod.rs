//! Transfer-learning architectures built from forests.
//!
//! An [`ArchitectureSpec`] names tasks and how information flows between
//! them. [`train_architecture`] compiles it into a [`TrainedArchitecture`]:
//! a set of named forests plus the wiring that evaluates them in order.
//!
//! Forest seeds are derived from the base seed and the forest's role (its
//! task name, `a+b` for a multi-task forest, `t-r` or `t/r` for a
//! difference correction), so the same task trained in two architectures
//! gets the same forest.

mod spec;
mod train;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{Forest, ForestParams};
use crate::persist;
use crate::seed;

pub use spec::{ArchitectureSpec, DifferenceOp, LatentStage, ModelSource, SPEC_VERSION};
pub use train::train_architecture;

const ARCH_FORMAT: &str = "tlforest-architecture";
const ARCH_VERSION: u32 = 1;

fn default_epsilon() -> f64 {
    1e-6
}

/// Forest parameters for every forest an architecture trains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingParams {
    #[serde(default)]
    pub default: ForestParams,
    /// Per-role replacements for `default`, keyed like forest seeds.
    #[serde(default)]
    pub overrides: BTreeMap<String, ForestParams>,
    /// Smallest admissible `|reference|` for ratio relabelling, in units of
    /// the reference labels' standard deviation.
    #[serde(default = "default_epsilon")]
    pub divide_epsilon: f64,
}

impl Default for TrainingParams {
    fn default() -> Self {
        Self::new(ForestParams::default())
    }
}

impl TrainingParams {
    pub fn new(default: ForestParams) -> Self {
        Self {
            default,
            overrides: BTreeMap::new(),
            divide_epsilon: default_epsilon(),
        }
    }

    pub fn with_override(mut self, role: impl Into<String>, params: ForestParams) -> Self {
        self.overrides.insert(role.into(), params);
        self
    }

    /// Parameters for the forest playing `role`, with its derived seed.
    pub fn for_role(&self, role: &str) -> ForestParams {
        let mut p = self.overrides.get(role).unwrap_or(&self.default).clone();
        p.seed = seed::derive_named(p.seed, role);
        p
    }

    /// Same parameters with every seed replaced by one derived from `seed`.
    pub fn reseeded(&self, seed: u64) -> Self {
        let mut out = self.clone();
        out.default.seed = seed;
        for (role, p) in &mut out.overrides {
            p.seed = seed::derive_named(seed, role);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.divide_epsilon.is_finite() && self.divide_epsilon >= 0.0) {
            return Err(Error::InvalidParam("divide_epsilon must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Forests trained elsewhere, addressed by handle.
#[derive(Debug, Clone, Default)]
pub struct PretrainedStore {
    forests: BTreeMap<String, Forest>,
}

impl PretrainedStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, handle: impl Into<String>, forest: Forest) {
        self.forests.insert(handle.into(), forest);
    }

    pub fn with(mut self, handle: impl Into<String>, forest: Forest) -> Self {
        self.insert(handle, forest);
        self
    }

    pub fn load(&mut self, handle: impl Into<String>, path: impl AsRef<Path>) -> Result<()> {
        let forest = Forest::load(path)?;
        self.insert(handle, forest);
        Ok(())
    }

    pub fn get(&self, handle: &str) -> Result<&Forest> {
        self.forests
            .get(handle)
            .ok_or_else(|| Error::UnknownHandle(handle.to_string()))
    }

    pub fn handles(&self) -> impl Iterator<Item = &str> {
        self.forests.keys().map(String::as_str)
    }
}

/// One task's prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskPrediction {
    Real {
        mean: f64,
        /// Jackknife standard error; absent when not requested or when
        /// fewer than two trees vote.
        std_error: Option<f64>,
    },
    Class {
        class: usize,
        label: String,
        probabilities: Vec<f64>,
    },
}

impl TaskPrediction {
    pub fn mean(&self) -> Option<f64> {
        match self {
            TaskPrediction::Real { mean, .. } => Some(*mean),
            TaskPrediction::Class { .. } => None,
        }
    }

    pub fn class(&self) -> Option<usize> {
        match self {
            TaskPrediction::Class { class, .. } => Some(*class),
            TaskPrediction::Real { .. } => None,
        }
    }

    /// Value fed downstream when this task is a latent input.
    pub fn latent_value(&self) -> f64 {
        match self {
            TaskPrediction::Real { mean, .. } => *mean,
            TaskPrediction::Class { class, .. } => *class as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub(crate) enum Step {
    /// Evaluate forest `key` on the features followed by the listed latent
    /// values, producing `outputs`.
    Forest {
        key: String,
        latent_inputs: Vec<String>,
        outputs: Vec<String>,
    },
    /// `target = op(reference prediction, delta forest prediction)`.
    Compose {
        target: String,
        reference: String,
        delta_key: String,
        delta_task: String,
        op: DifferenceOp,
    },
}

/// What was trained, from what, with which seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub key: String,
    pub tasks: Vec<String>,
    pub source: ModelSource,
    pub seed: u64,
    pub training_rows: usize,
    pub trees: usize,
    pub input_features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub stages: Vec<StageRecord>,
    /// Multi-task tasks left out because they had no training labels.
    pub dropped_tasks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedArchitecture {
    spec: ArchitectureSpec,
    feature_names: Vec<String>,
    forests: BTreeMap<String, Forest>,
    /// One step list per bundle part (a single list otherwise).
    wiring: Vec<Vec<Step>>,
    provenance: Provenance,
}

impl TrainedArchitecture {
    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn forests(&self) -> &BTreeMap<String, Forest> {
        &self.forests
    }

    pub fn forest(&self, key: &str) -> Option<&Forest> {
        self.forests.get(key)
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    #[cfg(test)]
    pub(crate) fn forest_mut(&mut self, key: &str) -> &mut Forest {
        self.forests.get_mut(key).unwrap()
    }

    /// Predicts every output task at `x`. Latent inputs are always model
    /// predictions. Standard errors are computed only when asked for.
    pub fn predict(&self, x: &[f64], with_uncertainty: bool) -> Result<BTreeMap<String, TaskPrediction>> {
        if x.len() != self.feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_names.len(),
                got: x.len(),
            });
        }
        let mut out = BTreeMap::new();
        for part in &self.wiring {
            let mut values: BTreeMap<String, TaskPrediction> = BTreeMap::new();
            for step in part {
                self.run_step(step, x, with_uncertainty, &mut values)?;
            }
            for (task, p) in values {
                out.entry(task).or_insert(p);
            }
        }
        Ok(out)
    }

    fn run_step(
        &self,
        step: &Step,
        x: &[f64],
        with_uncertainty: bool,
        values: &mut BTreeMap<String, TaskPrediction>,
    ) -> Result<()> {
        match step {
            Step::Forest {
                key,
                latent_inputs,
                outputs,
            } => {
                let forest = &self.forests[key];
                let mut input = x.to_vec();
                for t in latent_inputs {
                    let v = values
                        .get(t)
                        .ok_or_else(|| Error::Architecture(format!("latent {t:?} evaluated out of order")))?;
                    input.push(v.latent_value());
                }
                for task in outputs {
                    let p = forest_prediction(forest, task, &input, with_uncertainty)
                        .map_err(|e| Error::in_stage(key.clone(), e))?;
                    values.insert(task.clone(), p);
                }
            }
            Step::Compose {
                target,
                reference,
                delta_key,
                delta_task,
                op,
            } => {
                let Some(TaskPrediction::Real {
                    mean: r,
                    std_error: r_se,
                }) = values.get(reference).cloned()
                else {
                    return Err(Error::Architecture(format!("reference {reference:?} not evaluated")));
                };
                let delta = forest_prediction(&self.forests[delta_key], delta_task, x, with_uncertainty)
                    .map_err(|e| Error::in_stage(delta_key.clone(), e))?;
                let TaskPrediction::Real {
                    mean: d,
                    std_error: d_se,
                } = delta
                else {
                    unreachable!("delta forests are real-valued");
                };
                let std_error = match (r_se, d_se, op) {
                    (Some(a), Some(b), DifferenceOp::Subtract) => Some(a.hypot(b)),
                    (Some(a), Some(b), DifferenceOp::Divide) => Some((d * a).hypot(r * b)),
                    _ => None,
                };
                values.insert(
                    target.clone(),
                    TaskPrediction::Real {
                        mean: op.compose(r, d),
                        std_error,
                    },
                );
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        persist::save(path, ARCH_FORMAT, ARCH_VERSION, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        persist::load(path, ARCH_FORMAT, ARCH_VERSION)
    }
}

fn forest_prediction(forest: &Forest, task: &str, x: &[f64], with_uncertainty: bool) -> Result<TaskPrediction> {
    let t = forest.task_index(task)?;
    let spec = &forest.tasks()[t].spec;
    if spec.is_real() {
        let mean = forest.predict_real(task, x)?;
        let std_error = if with_uncertainty {
            match crate::uncertainty::jackknife_variance(forest, task, x) {
                Ok(p) => Some(p.std_error),
                Err(Error::InvalidParam(_)) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        Ok(TaskPrediction::Real { mean, std_error })
    } else {
        let (class, probabilities) = forest.predict_class(task, x)?;
        Ok(TaskPrediction::Class {
            class,
            label: spec.classes()[class].clone(),
            probabilities,
        })
    }
}

/// Predictions with jackknife standard errors for every output task.
pub fn predict_architecture(ta: &TrainedArchitecture, x: &[f64]) -> Result<BTreeMap<String, TaskPrediction>> {
    ta.predict(x, true)
}

#[cfg(test)]
mod tests;
