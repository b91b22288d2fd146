use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifferenceOp {
    /// `target = reference + delta`
    Subtract,
    /// `target = reference * ratio`
    Divide,
}

impl DifferenceOp {
    pub fn relabel(self, target: f64, reference: f64) -> f64 {
        match self {
            DifferenceOp::Subtract => target - reference,
            DifferenceOp::Divide => target / reference,
        }
    }

    pub fn compose(self, reference: f64, delta: f64) -> f64 {
        match self {
            DifferenceOp::Subtract => reference + delta,
            DifferenceOp::Divide => reference * delta,
        }
    }

    fn symbol(self) -> char {
        match self {
            DifferenceOp::Subtract => '-',
            DifferenceOp::Divide => '/',
        }
    }
}

/// Where a stage's forest comes from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    #[default]
    TrainHere,
    /// A forest registered in the [`PretrainedStore`](super::PretrainedStore)
    /// under this handle.
    Pretrained(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentStage {
    pub task: String,
    /// Upstream stage tasks appended to the features, in this order.
    #[serde(default)]
    pub latent_inputs: Vec<String>,
    /// Train on observed upstream labels where a row has them.
    #[serde(default)]
    pub use_observed_latents: bool,
    #[serde(default)]
    pub model: ModelSource,
}

impl LatentStage {
    pub fn new(task: impl Into<String>, latent_inputs: &[&str]) -> Self {
        Self {
            task: task.into(),
            latent_inputs: latent_inputs.iter().map(|s| s.to_string()).collect(),
            use_observed_latents: false,
            model: ModelSource::TrainHere,
        }
    }

    pub fn observed(mut self, yes: bool) -> Self {
        self.use_observed_latents = yes;
        self
    }

    pub fn pretrained(mut self, handle: impl Into<String>) -> Self {
        self.model = ModelSource::Pretrained(handle.into());
        self
    }
}

/// Declarative description of how tasks are modelled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ArchitectureSpec {
    SingleTask {
        task: String,
    },
    MultiTask {
        tasks: Vec<String>,
        #[serde(default)]
        task_weights: BTreeMap<String, f64>,
    },
    Difference {
        target_task: String,
        reference_task: String,
        op: DifferenceOp,
        #[serde(default)]
        reference_model: ModelSource,
    },
    LatentVariable {
        stages: Vec<LatentStage>,
    },
    /// Independent architectures side by side. When two parts predict the
    /// same task the earlier part wins.
    Bundle {
        parts: Vec<ArchitectureSpec>,
    },
}

#[derive(Serialize, Deserialize)]
struct SpecFile {
    version: u32,
    architecture: ArchitectureSpec,
}

impl ArchitectureSpec {
    pub fn single(task: impl Into<String>) -> Self {
        ArchitectureSpec::SingleTask { task: task.into() }
    }

    pub fn multi(tasks: &[&str]) -> Self {
        ArchitectureSpec::MultiTask {
            tasks: tasks.iter().map(|s| s.to_string()).collect(),
            task_weights: BTreeMap::new(),
        }
    }

    pub fn difference(target: impl Into<String>, reference: impl Into<String>, op: DifferenceOp) -> Self {
        ArchitectureSpec::Difference {
            target_task: target.into(),
            reference_task: reference.into(),
            op,
            reference_model: ModelSource::TrainHere,
        }
    }

    pub fn latent(stages: Vec<LatentStage>) -> Self {
        ArchitectureSpec::LatentVariable { stages }
    }

    pub fn bundle(parts: Vec<ArchitectureSpec>) -> Self {
        ArchitectureSpec::Bundle { parts }
    }

    /// Tasks this architecture predicts, first occurrence order.
    pub fn outputs(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |t: &String| {
            if !out.contains(t) {
                out.push(t.clone());
            }
        };
        match self {
            ArchitectureSpec::SingleTask { task } => push(task),
            ArchitectureSpec::MultiTask { tasks, .. } => tasks.iter().for_each(push),
            ArchitectureSpec::Difference {
                target_task,
                reference_task,
                ..
            } => {
                push(target_task);
                push(reference_task);
            }
            ArchitectureSpec::LatentVariable { stages } => stages.iter().for_each(|s| push(&s.task)),
            ArchitectureSpec::Bundle { parts } => {
                for p in parts {
                    p.outputs().iter().for_each(&mut push);
                }
            }
        }
        out
    }

    /// Every task the architecture reads labels for.
    pub fn referenced_tasks(&self) -> BTreeSet<String> {
        self.outputs().into_iter().collect()
    }

    /// Structural checks that need no data.
    pub fn validate(&self) -> Result<()> {
        match self {
            ArchitectureSpec::SingleTask { task } => nonempty(task),
            ArchitectureSpec::MultiTask { tasks, task_weights } => {
                if tasks.is_empty() {
                    return Err(Error::Architecture("multi-task needs at least one task".into()));
                }
                let mut seen = BTreeSet::new();
                for t in tasks {
                    nonempty(t)?;
                    if !seen.insert(t) {
                        return Err(Error::Architecture(format!("task {t:?} listed twice")));
                    }
                }
                for (t, w) in task_weights {
                    if !tasks.contains(t) {
                        return Err(Error::Architecture(format!("weight given for unlisted task {t:?}")));
                    }
                    if !(w.is_finite() && *w >= 0.0) {
                        return Err(Error::Architecture(format!("weight for {t:?} must be finite and >= 0")));
                    }
                }
                Ok(())
            }
            ArchitectureSpec::Difference {
                target_task,
                reference_task,
                reference_model,
                ..
            } => {
                nonempty(target_task)?;
                nonempty(reference_task)?;
                if target_task == reference_task {
                    return Err(Error::Architecture(
                        "difference target and reference must be distinct tasks".into(),
                    ));
                }
                if let ModelSource::Pretrained(h) = reference_model {
                    nonempty(h)?;
                }
                Ok(())
            }
            ArchitectureSpec::LatentVariable { stages } => {
                if stages.is_empty() {
                    return Err(Error::Architecture("latent-variable needs at least one stage".into()));
                }
                let mut earlier: Vec<&str> = Vec::new();
                for s in stages {
                    nonempty(&s.task)?;
                    if earlier.contains(&s.task.as_str()) {
                        return Err(Error::Architecture(format!("stage task {:?} appears twice", s.task)));
                    }
                    let mut inputs = BTreeSet::new();
                    for input in &s.latent_inputs {
                        if !earlier.contains(&input.as_str()) {
                            return Err(Error::Architecture(format!(
                                "stage {:?} reads {input:?}, which is not an earlier stage (stages must be in topological order)",
                                s.task
                            )));
                        }
                        if !inputs.insert(input) {
                            return Err(Error::Architecture(format!(
                                "stage {:?} lists latent input {input:?} twice",
                                s.task
                            )));
                        }
                    }
                    if let ModelSource::Pretrained(h) = &s.model {
                        nonempty(h)?;
                    }
                    earlier.push(&s.task);
                }
                Ok(())
            }
            ArchitectureSpec::Bundle { parts } => {
                if parts.is_empty() {
                    return Err(Error::Architecture("bundle needs at least one part".into()));
                }
                parts.iter().try_for_each(ArchitectureSpec::validate)
            }
        }
    }

    /// Structural checks plus task existence and kinds against a dataset.
    pub fn validate_for(&self, ds: &Dataset) -> Result<()> {
        self.validate()?;
        for t in self.referenced_tasks() {
            ds.task(&t)?;
        }
        self.check_kinds(ds)
    }

    fn check_kinds(&self, ds: &Dataset) -> Result<()> {
        match self {
            ArchitectureSpec::Difference {
                target_task,
                reference_task,
                ..
            } => {
                for t in [target_task, reference_task] {
                    if !ds.task(t)?.is_real() {
                        return Err(Error::TaskKind {
                            task: t.clone(),
                            expected: "real-valued for the difference architecture",
                        });
                    }
                }
                Ok(())
            }
            ArchitectureSpec::Bundle { parts } => parts.iter().try_for_each(|p| p.check_kinds(ds)),
            _ => Ok(()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SpecFile {
            version: SPEC_VERSION,
            architecture: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(SPEC_VERSION) => {}
            Some(v) => {
                return Err(Error::Format(format!(
                    "architecture spec version {v} is not supported (expected {SPEC_VERSION})"
                )))
            }
            None => return Err(Error::Format("architecture spec has no version".into())),
        }
        let file: SpecFile = serde_json::from_value(value)?;
        file.architecture.validate()?;
        Ok(file.architecture)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

fn nonempty(name: &str) -> Result<()> {
    if name.is_empty() {
        return Err(Error::Architecture("empty task or handle name".into()));
    }
    Ok(())
}

/// Name of the forest that models the relabelled target.
pub(crate) fn delta_role(target: &str, reference: &str, op: DifferenceOp) -> String {
    format!("{target}{}{reference}", op.symbol())
}
