//! A config checked against its data, ready to run.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use tlforest::eval::validate_evaluation;
use tlforest::transfer::ModelSource;
use tlforest::{
    train_forest, ArchitectureSpec, CompositeTaskSpec, Dataset, EvalMode, Forest, MetricSpec, NamedArchitecture,
    PretrainedStore, Protocol,
};

use crate::config::{Loaded, PretrainedSource};
use crate::fail::{Failure, Invalid};
use crate::recipe::{self, StepReport};

pub struct Experiment {
    pub loaded: Loaded,
    pub fingerprint: String,
    pub raw_rows: usize,
    pub raw_labels: BTreeMap<String, usize>,
    pub dataset: Dataset,
    pub steps: Vec<StepReport>,
    /// Forests read from disk; `train` sources are added by [`Experiment::store`].
    loaded_forests: BTreeMap<String, Forest>,
}

#[derive(Default)]
pub struct Overrides {
    pub train_seed: Option<u64>,
    pub eval_seed: Option<u64>,
}

impl Experiment {
    /// Parses, loads and cleans, then checks every section against the
    /// cleaned data. Nothing is written.
    pub fn prepare(config: &Path, overrides: &Overrides) -> Result<Self, Failure> {
        let mut loaded = Loaded::read(config)?;
        if let Some(s) = overrides.train_seed {
            loaded.config.params.default.seed = s;
        }
        if let Some(s) = overrides.eval_seed {
            match &mut loaded.config.evaluation {
                Some(e) => e.seed = s,
                None => return Err(Failure::invalid("--seed given but the config has no evaluation section")),
            }
        }
        let fingerprint = loaded.fingerprint()?;
        let raw = loaded.load_data()?;
        let raw_rows = raw.n_rows();
        let raw_labels = recipe::label_counts(&raw);
        let (dataset, steps) = recipe::run(raw, &loaded.config.recipe)?;

        let mut exp = Self {
            loaded,
            fingerprint,
            raw_rows,
            raw_labels,
            dataset,
            steps,
            loaded_forests: BTreeMap::new(),
        };
        exp.check()?;
        Ok(exp)
    }

    fn check(&mut self) -> Result<(), Failure> {
        let cfg = &self.loaded.config;
        let ds = &self.dataset;
        if ds.is_empty() {
            return Err(Failure::invalid("the recipe leaves no rows"));
        }
        cfg.params.validate().invalid("params")?;

        for c in &cfg.composites {
            check_composite(ds, c).invalid(format!("composite {:?}", c.name))?;
        }

        for (handle, src) in &cfg.pretrained {
            match src {
                PretrainedSource::File { path } => {
                    let path = self.loaded.resolve(path);
                    let forest = Forest::load(&path)
                        .invalid(format!("pretrained {handle:?}: {}", path.display()))?;
                    self.loaded_forests.insert(handle.clone(), forest);
                }
                PretrainedSource::Train { tasks, .. } => {
                    if tasks.is_empty() {
                        return Err(Failure::invalid(format!("pretrained {handle:?} lists no tasks")));
                    }
                    for t in tasks {
                        ds.task_index(t).invalid(format!("pretrained {handle:?}"))?;
                    }
                    if let Some(ev) = &cfg.evaluation {
                        if let Some(t) = tasks.iter().find(|t| ev.scope_tasks.contains(t)) {
                            return Err(Failure::invalid(format!(
                                "pretrained {handle:?} would train on scope task {t:?}, which the evaluation holds out"
                            )));
                        }
                    }
                }
            }
        }

        let mut seen = BTreeSet::new();
        for a in &cfg.architectures {
            if !seen.insert(a.name.as_str()) {
                return Err(Failure::invalid(format!("architecture name {:?} used twice", a.name)));
            }
            if a.name.is_empty() || a.name.contains(['/', '\\']) {
                return Err(Failure::invalid(format!("architecture name {:?} is not a usable file name", a.name)));
            }
            a.spec.validate_for(ds).invalid(format!("architecture {:?}", a.name))?;
            for h in pretrained_handles(&a.spec) {
                if !cfg.pretrained.contains_key(&h) {
                    return Err(Failure::invalid(format!(
                        "architecture {:?} uses pretrained handle {h:?}, which the config does not define",
                        a.name
                    )));
                }
            }
        }

        if let Some((mode, protocol)) = self.evaluation() {
            validate_evaluation(&cfg.architectures, ds, &mode, &protocol).invalid("evaluation")?;
        }
        Ok(())
    }

    pub fn architectures(&self) -> &[NamedArchitecture] {
        &self.loaded.config.architectures
    }

    /// Evaluation mode and protocol, with one composite F1 metric added for
    /// each declared composite not already listed.
    pub fn evaluation(&self) -> Option<(EvalMode, Protocol)> {
        let ev = self.loaded.config.evaluation.as_ref()?;
        let mut metrics = ev.metrics.clone();
        for c in &self.loaded.config.composites {
            let m = MetricSpec::CompositeF1 { composite: c.clone() };
            if !metrics.iter().any(|x| x.label() == m.label()) {
                metrics.push(m);
            }
        }
        let protocol = Protocol {
            trials: ev.trials,
            seed: ev.seed,
            scope_tasks: ev.scope_tasks.clone(),
            metrics,
        };
        Some((ev.mode.clone(), protocol))
    }

    /// Every pretrained forest, training the `train` sources on the cleaned data.
    pub fn store(&self) -> Result<(PretrainedStore, Vec<String>), Failure> {
        let mut store = PretrainedStore::new();
        let mut trained = Vec::new();
        for (handle, src) in &self.loaded.config.pretrained {
            match src {
                PretrainedSource::File { .. } => {
                    store.insert(handle.clone(), self.loaded_forests[handle].clone());
                }
                PretrainedSource::Train { tasks, params } => {
                    let p = params
                        .clone()
                        .unwrap_or_else(|| self.loaded.config.params.for_role(&format!("pretrained/{handle}")));
                    let names: Vec<&str> = tasks.iter().map(String::as_str).collect();
                    let forest = train_forest(&self.dataset, &names, &p)
                        .runtime(format!("training pretrained {handle:?}"))?;
                    store.insert(handle.clone(), forest);
                    trained.push(handle.clone());
                }
            }
        }
        Ok((store, trained))
    }
}

fn check_composite(ds: &Dataset, c: &CompositeTaskSpec) -> tlforest::Result<()> {
    c.validate()?;
    for t in &c.source_tasks {
        if !ds.task(t)?.is_real() {
            return Err(tlforest::Error::TaskKind {
                task: t.clone(),
                expected: "real-valued for a composite task",
            });
        }
    }
    Ok(())
}

pub fn pretrained_handles(spec: &ArchitectureSpec) -> Vec<String> {
    match spec {
        ArchitectureSpec::SingleTask { .. } | ArchitectureSpec::MultiTask { .. } => Vec::new(),
        ArchitectureSpec::Difference { reference_model, .. } => handle_of(reference_model).into_iter().collect(),
        ArchitectureSpec::LatentVariable { stages } => stages.iter().filter_map(|s| handle_of(&s.model)).collect(),
        ArchitectureSpec::Bundle { parts } => parts.iter().flat_map(pretrained_handles).collect(),
    }
}

fn handle_of(m: &ModelSource) -> Option<String> {
    match m {
        ModelSource::TrainHere => None,
        ModelSource::Pretrained(h) => Some(h.clone()),
    }
}
