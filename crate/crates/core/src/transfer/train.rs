use std::collections::BTreeMap;

use rayon::prelude::*;

use super::spec::delta_role;
use super::{
    forest_prediction, ArchitectureSpec, DifferenceOp, LatentStage, ModelSource, PretrainedStore,
    Provenance, StageRecord, Step, TrainedArchitecture, TrainingParams,
};
use crate::dataset::{Dataset, Label, TaskSpec};
use crate::error::{Error, Result};
use crate::forest::{train_forest, Forest};

struct Builder<'a> {
    params: &'a TrainingParams,
    store: &'a PretrainedStore,
    forests: BTreeMap<String, Forest>,
    records: Vec<StageRecord>,
    dropped: Vec<String>,
}

/// Trains every forest the architecture calls for.
pub fn train_architecture(
    spec: &ArchitectureSpec,
    ds: &Dataset,
    params: &TrainingParams,
    store: &PretrainedStore,
) -> Result<TrainedArchitecture> {
    spec.validate_for(ds)?;
    params.validate()?;
    let mut b = Builder {
        params,
        store,
        forests: BTreeMap::new(),
        records: Vec::new(),
        dropped: Vec::new(),
    };
    let wiring = match spec {
        ArchitectureSpec::Bundle { parts } => {
            let mut wiring = Vec::new();
            flatten(parts, &mut |i, part| {
                wiring.push(b.part(part, ds, &format!("{i}/"))?);
                Ok(())
            })?;
            wiring
        }
        other => vec![b.part(other, ds, "")?],
    };
    Ok(TrainedArchitecture {
        spec: spec.clone(),
        feature_names: ds.feature_names().to_vec(),
        forests: b.forests,
        wiring,
        provenance: Provenance {
            stages: b.records,
            dropped_tasks: b.dropped,
        },
    })
}

/// Visits the leaf parts of nested bundles in order.
fn flatten(
    parts: &[ArchitectureSpec],
    f: &mut dyn FnMut(usize, &ArchitectureSpec) -> Result<()>,
) -> Result<()> {
    fn go(
        parts: &[ArchitectureSpec],
        next: &mut usize,
        f: &mut dyn FnMut(usize, &ArchitectureSpec) -> Result<()>,
    ) -> Result<()> {
        for p in parts {
            if let ArchitectureSpec::Bundle { parts } = p {
                go(parts, next, f)?;
            } else {
                f(*next, p)?;
                *next += 1;
            }
        }
        Ok(())
    }
    let mut next = 0;
    go(parts, &mut next, f)
}

impl Builder<'_> {
    fn part(&mut self, spec: &ArchitectureSpec, ds: &Dataset, prefix: &str) -> Result<Vec<Step>> {
        match spec {
            ArchitectureSpec::SingleTask { task } => {
                let key = format!("{prefix}{task}");
                self.train_here(&key, task, ds, &[task.as_str()], BTreeMap::new(), Vec::new())?;
                Ok(vec![Step::Forest {
                    key,
                    latent_inputs: Vec::new(),
                    outputs: vec![task.clone()],
                }])
            }
            ArchitectureSpec::MultiTask { tasks, task_weights } => {
                let mut kept: Vec<&str> = Vec::new();
                for t in tasks {
                    if ds.label_count(ds.task_index(t)?) == 0 {
                        self.dropped.push(t.clone());
                    } else {
                        kept.push(t);
                    }
                }
                if kept.is_empty() {
                    return Err(Error::EmptyTrainingSet("no multi-task task has labels".into()));
                }
                let mut sorted = kept.clone();
                sorted.sort_unstable();
                let role = sorted.join("+");
                let key = format!("{prefix}{role}");
                self.train_here(&key, &role, ds, &kept, task_weights.clone(), Vec::new())?;
                Ok(vec![Step::Forest {
                    key,
                    latent_inputs: Vec::new(),
                    outputs: kept.iter().map(|s| s.to_string()).collect(),
                }])
            }
            ArchitectureSpec::Difference {
                target_task,
                reference_task,
                op,
                reference_model,
            } => self.difference(ds, prefix, target_task, reference_task, *op, reference_model),
            ArchitectureSpec::LatentVariable { stages } => self.latent(ds, prefix, stages),
            ArchitectureSpec::Bundle { .. } => unreachable!("bundles are flattened"),
        }
    }

    fn train_here(
        &mut self,
        key: &str,
        role: &str,
        ds: &Dataset,
        tasks: &[&str],
        weights: BTreeMap<String, f64>,
        inputs: Vec<String>,
    ) -> Result<()> {
        let mut p = self.params.for_role(role);
        p.task_weights.extend(weights);
        let forest = train_forest(ds, tasks, &p).map_err(|e| Error::in_stage(key, e))?;
        self.records.push(StageRecord {
            key: key.to_string(),
            tasks: tasks.iter().map(|s| s.to_string()).collect(),
            source: ModelSource::TrainHere,
            seed: p.seed,
            training_rows: forest.training_row_count(),
            trees: forest.n_trees(),
            input_features: inputs,
        });
        self.forests.insert(key.to_string(), forest);
        Ok(())
    }

    fn use_pretrained(
        &mut self,
        key: &str,
        handle: &str,
        task: &str,
        feature_names: &[String],
        inputs: Vec<String>,
    ) -> Result<()> {
        let forest = self.store.get(handle)?;
        forest.task_index(task).map_err(|e| Error::in_stage(key, e))?;
        if forest.feature_names() != feature_names {
            return Err(Error::Architecture(format!(
                "pretrained model {handle:?} was trained on features {:?}, stage {key:?} provides {:?}",
                forest.feature_names(),
                feature_names
            )));
        }
        self.records.push(StageRecord {
            key: key.to_string(),
            tasks: vec![task.to_string()],
            source: ModelSource::Pretrained(handle.to_string()),
            seed: forest.seed(),
            training_rows: forest.training_row_count(),
            trees: forest.n_trees(),
            input_features: inputs,
        });
        self.forests.insert(key.to_string(), forest.clone());
        Ok(())
    }

    fn difference(
        &mut self,
        ds: &Dataset,
        prefix: &str,
        target: &str,
        reference: &str,
        op: DifferenceOp,
        model: &ModelSource,
    ) -> Result<Vec<Step>> {
        let ref_key = format!("{prefix}{reference}");
        match model {
            ModelSource::TrainHere => {
                self.train_here(&ref_key, reference, ds, &[reference], BTreeMap::new(), Vec::new())?
            }
            ModelSource::Pretrained(h) => {
                self.use_pretrained(&ref_key, h, reference, ds.feature_names(), Vec::new())?
            }
        }
        let ref_forest = &self.forests[&ref_key];
        let rt = ref_forest.task_index(reference)?;
        if !ref_forest.tasks()[rt].spec.is_real() {
            return Err(Error::TaskKind {
                task: reference.to_string(),
                expected: "real-valued for the difference architecture",
            });
        }
        let epsilon = self.params.divide_epsilon * ref_forest.tasks()[rt].scale;

        let t = ds.task_index(target)?;
        let r = ds.task_index(reference)?;
        let mut delta = BTreeMap::new();
        for (&row, label) in ds.labels(t) {
            let (Some(yt), Some(yr)) = (label.as_real(), ds.label(row, r).and_then(Label::as_real)) else {
                continue;
            };
            if op == DifferenceOp::Divide && yr.abs() < epsilon {
                return Err(Error::NearZeroReference {
                    row_id: ds.row_id(row).to_string(),
                    value: yr,
                    epsilon,
                });
            }
            delta.insert(row, Label::Real(op.relabel(yt, yr)));
        }
        if delta.is_empty() {
            return Err(Error::Architecture(format!(
                "no row carries both {target:?} and {reference:?} labels"
            )));
        }
        let role = delta_role(target, reference, op);
        if ds.task(&role).is_ok() {
            return Err(Error::Architecture(format!("task name {role:?} is reserved")));
        }
        let relabelled = ds.with_task(TaskSpec::real(role.clone()), delta)?;
        let delta_key = format!("{prefix}{role}");
        self.train_here(&delta_key, &role, &relabelled, &[role.as_str()], BTreeMap::new(), Vec::new())?;
        Ok(vec![
            Step::Forest {
                key: ref_key,
                latent_inputs: Vec::new(),
                outputs: vec![reference.to_string()],
            },
            Step::Compose {
                target: target.to_string(),
                reference: reference.to_string(),
                delta_key,
                delta_task: role,
                op,
            },
        ])
    }

    fn latent(&mut self, ds: &Dataset, prefix: &str, stages: &[LatentStage]) -> Result<Vec<Step>> {
        // predict-path latent values for every row, by task
        let mut predicted: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut steps = Vec::with_capacity(stages.len());
        for stage in stages {
            let key = format!("{prefix}{}", stage.task);
            let names: Vec<String> = stage.latent_inputs.iter().map(|t| latent_feature(t)).collect();
            for n in &names {
                if ds.feature_index(n).is_ok() {
                    return Err(Error::Architecture(format!("feature name {n:?} is reserved")));
                }
            }
            let mut columns = Vec::with_capacity(names.len());
            for input in &stage.latent_inputs {
                let mut col = predicted[input].clone();
                if stage.use_observed_latents {
                    let u = ds.task_index(input)?;
                    for (&row, label) in ds.labels(u) {
                        col[row] = match label {
                            Label::Real(v) => *v,
                            Label::Class(c) => *c as f64,
                        };
                    }
                }
                columns.push(col);
            }
            let augmented = ds.with_features(&names, &columns)?;
            match &stage.model {
                ModelSource::TrainHere => self.train_here(
                    &key,
                    &stage.task,
                    &augmented,
                    &[stage.task.as_str()],
                    BTreeMap::new(),
                    names.clone(),
                )?,
                ModelSource::Pretrained(h) => {
                    self.use_pretrained(&key, h, &stage.task, augmented.feature_names(), names.clone())?
                }
            }

            // downstream stages see predictions computed from predicted inputs
            let forest = &self.forests[&key];
            let inputs: Vec<&Vec<f64>> = stage.latent_inputs.iter().map(|t| &predicted[t]).collect();
            let values: Vec<f64> = (0..ds.n_rows())
                .into_par_iter()
                .map(|row| {
                    let mut x = ds.row(row).to_vec();
                    x.extend(inputs.iter().map(|c| c[row]));
                    forest_prediction(forest, &stage.task, &x, false).map(|p| p.latent_value())
                })
                .collect::<Result<_>>()
                .map_err(|e| Error::in_stage(key.clone(), e))?;
            predicted.insert(stage.task.clone(), values);

            steps.push(Step::Forest {
                key,
                latent_inputs: stage.latent_inputs.clone(),
                outputs: vec![stage.task.clone()],
            });
        }
        Ok(steps)
    }
}

/// Column name under which a latent task is appended to the features.
pub fn latent_feature(task: &str) -> String {
    format!("latent:{task}")
}
