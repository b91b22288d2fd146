//! Experiment configuration files.
//!
//! Relative paths are resolved against the directory holding the config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tlforest::dataset::{load_delimited, Schema};
use tlforest::eval::sha256_hex;
use tlforest::synth::SynthConfig;
use tlforest::{
    CompositeTaskSpec, Dataset, EvalMode, ForestParams, MetricSpec, NamedArchitecture, TrainingParams,
};

use crate::fail::{Failure, Invalid};
use crate::recipe::RecipeOp;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    /// Sources are stacked in order.
    pub data: Vec<DataSource>,
    #[serde(default)]
    pub recipe: Vec<RecipeOp>,
    #[serde(default)]
    pub architectures: Vec<NamedArchitecture>,
    #[serde(default)]
    pub params: TrainingParams,
    #[serde(default)]
    pub pretrained: BTreeMap<String, PretrainedSource>,
    #[serde(default)]
    pub composites: Vec<CompositeTaskSpec>,
    #[serde(default)]
    pub evaluation: Option<EvaluationConfig>,
    #[serde(default)]
    pub outputs: Outputs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Delimited { path: PathBuf, schema: PathBuf },
    Synth { config: SynthConfig },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PretrainedSource {
    /// A forest saved by an earlier `train`.
    File { path: PathBuf },
    /// Trained on the cleaned dataset before anything else runs.
    Train {
        tasks: Vec<String>,
        #[serde(default)]
        params: Option<ForestParams>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationConfig {
    #[serde(flatten)]
    pub mode: EvalMode,
    pub trials: usize,
    pub seed: u64,
    pub scope_tasks: Vec<String>,
    #[serde(default)]
    pub metrics: Vec<MetricSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub dir: PathBuf,
}

impl Default for Outputs {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// A parsed config plus where it lives.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub base: PathBuf,
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).invalid(format!("reading {}", path.display()))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).invalid(format!("parsing {}", path.display()))?;
        if config.version != CONFIG_VERSION {
            return Err(Failure::invalid(format!(
                "config version {} (supported: {CONFIG_VERSION})",
                config.version
            )));
        }
        if config.data.is_empty() {
            return Err(Failure::invalid("config lists no data sources"));
        }
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Ok(Self { config, base })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn output_dir(&self, cli: Option<&Path>) -> PathBuf {
        match cli {
            Some(d) => d.to_path_buf(),
            None => self.resolve(&self.config.outputs.dir),
        }
    }

    /// Stacks every source into one dataset.
    pub fn load_data(&self) -> Result<Dataset, Failure> {
        let mut out: Option<Dataset> = None;
        for (i, src) in self.config.data.iter().enumerate() {
            let ds = match src {
                DataSource::Delimited { path, schema } => {
                    let schema_path = self.resolve(schema);
                    let schema = Schema::load(&schema_path)
                        .invalid(format!("data[{i}]: schema {}", schema_path.display()))?;
                    let path = self.resolve(path);
                    load_delimited(&path, &schema).invalid(format!("data[{i}]: {}", path.display()))?
                }
                DataSource::Synth { config } => config.generate().invalid(format!("data[{i}]: synth"))?,
            };
            out = Some(match out {
                None => ds,
                Some(acc) => acc.concat(&ds).invalid(format!("data[{i}]"))?,
            });
        }
        Ok(out.expect("at least one source"))
    }

    /// Hash of everything that determines results: the parsed config
    /// without its output location, and the bytes of every file it reads.
    pub fn fingerprint(&self) -> Result<String, Failure> {
        #[derive(Serialize)]
        struct Input<'a> {
            config: serde_json::Value,
            files: Vec<(&'a str, String)>,
        }
        let mut config = serde_json::to_value(&self.config).invalid("serializing config")?;
        if let Some(obj) = config.as_object_mut() {
            obj.remove("outputs");
        }
        let mut files = Vec::new();
        for src in &self.config.data {
            if let DataSource::Delimited { path, schema } = src {
                files.push(("data", self.hash_file(path)?));
                files.push(("schema", self.hash_file(schema)?));
            }
        }
        for src in self.config.pretrained.values() {
            if let PretrainedSource::File { path } = src {
                files.push(("pretrained", self.hash_file(path)?));
            }
        }
        let input = Input { config, files };
        let text = serde_json::to_string(&input).invalid("serializing fingerprint input")?;
        Ok(sha256_hex(text.as_bytes()))
    }

    fn hash_file(&self, p: &Path) -> Result<String, Failure> {
        let path = self.resolve(p);
        let bytes = std::fs::read(&path).invalid(format!("reading {}", path.display()))?;
        Ok(sha256_hex(&bytes))
    }
}
