//! Delimited-text ingestion and export.
//!
//! Files are comma-separated UTF-8 with a header row. A JSON schema maps every
//! header column to a role. Empty task cells mean "no label"; empty feature
//! cells are rejected.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Label, TaskKind, TaskSpec};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum ColumnRole {
    RowId,
    Feature,
    Task {
        /// Task name; defaults to the column name.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        task: Option<String>,
        kind: TaskKindDecl,
        /// Fixed vocabulary. When absent, classes are collected in order of
        /// first appearance.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        classes: Option<Vec<String>>,
        #[serde(default, skip_serializing_if = "String::is_empty")]
        units: String,
    },
    Ignore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKindDecl {
    Real,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(flatten)]
    pub role: ColumnRole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub version: u32,
    pub columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>) -> Self {
        Self {
            version: SCHEMA_VERSION,
            columns,
        }
    }

    /// Schema that [`write_delimited`] output satisfies, with vocabularies
    /// pinned so a reload reproduces class indices.
    pub fn for_dataset(ds: &Dataset) -> Self {
        let mut columns = vec![ColumnSpec {
            name: "row_id".into(),
            role: ColumnRole::RowId,
        }];
        columns.extend(ds.feature_names().iter().map(|f| ColumnSpec {
            name: f.clone(),
            role: ColumnRole::Feature,
        }));
        columns.extend(ds.tasks().iter().map(|t| ColumnSpec {
            name: t.name.clone(),
            role: ColumnRole::Task {
                task: None,
                kind: if t.is_real() {
                    TaskKindDecl::Real
                } else {
                    TaskKindDecl::Categorical
                },
                classes: (!t.is_real()).then(|| t.classes().to_vec()),
                units: t.units.clone(),
            },
        }));
        Self::new(columns)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let schema: Schema = serde_json::from_reader(std::io::BufReader::new(file))?;
        if schema.version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "schema version {} (supported: {SCHEMA_VERSION})",
                schema.version
            )));
        }
        Ok(schema)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    fn role_of(&self, column: &str) -> Option<&ColumnRole> {
        self.columns
            .iter()
            .find(|c| c.name == column)
            .map(|c| &c.role)
    }
}

enum Slot {
    RowId,
    Feature,
    Task(usize, bool),
    Ignore,
}

struct TaskBuild {
    spec: TaskSpec,
    fixed: bool,
    labels: BTreeMap<usize, Label>,
}

/// Loads a dataset from a delimited file. Row numbers in errors are 1-based
/// data rows (the header is not counted).
pub fn load_delimited(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_delimited(file, schema)
}

pub(crate) fn read_delimited<R: std::io::Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();

    for col in &schema.columns {
        if !headers.iter().any(|h| h == col.name) {
            return Err(Error::Schema(format!(
                "schema column {:?} not present in file",
                col.name
            )));
        }
    }

    let mut slots = Vec::with_capacity(headers.len());
    let mut feature_names = Vec::new();
    let mut tasks: Vec<TaskBuild> = Vec::new();
    let mut id_column = None;
    for (i, h) in headers.iter().enumerate() {
        let role = schema
            .role_of(h)
            .ok_or_else(|| Error::Schema(format!("column {h:?} has no role in the schema")))?;
        let slot = match role {
            ColumnRole::RowId => {
                if id_column.replace(i).is_some() {
                    return Err(Error::Schema("more than one row_id column".into()));
                }
                Slot::RowId
            }
            ColumnRole::Feature => {
                feature_names.push(h.to_string());
                Slot::Feature
            }
            ColumnRole::Task {
                task,
                kind,
                classes,
                units,
            } => {
                let name = task.clone().unwrap_or_else(|| h.to_string());
                if tasks.iter().any(|t| t.spec.name == name) {
                    return Err(Error::Schema(format!("task {name:?} declared twice")));
                }
                let (kind, fixed) = match kind {
                    TaskKindDecl::Real => (TaskKind::Real, false),
                    TaskKindDecl::Categorical => (
                        TaskKind::Categorical {
                            classes: classes.clone().unwrap_or_default(),
                        },
                        classes.is_some(),
                    ),
                };
                let is_real = matches!(kind, TaskKind::Real);
                tasks.push(TaskBuild {
                    spec: TaskSpec {
                        name,
                        kind,
                        units: units.clone(),
                    },
                    fixed,
                    labels: BTreeMap::new(),
                });
                Slot::Task(tasks.len() - 1, is_real)
            }
            ColumnRole::Ignore => Slot::Ignore,
        };
        slots.push(slot);
    }

    let mut row_ids = Vec::new();
    let mut features = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        for (i, cell) in record.iter().enumerate() {
            let column = &headers[i];
            match slots[i] {
                Slot::RowId => row_ids.push(cell.to_string()),
                Slot::Feature => {
                    if cell.is_empty() {
                        return Err(Error::MissingFeature {
                            row,
                            column: column.to_string(),
                        });
                    }
                    features.push(parse_number(cell, row, column)?);
                }
                Slot::Task(t, is_real) => {
                    if cell.is_empty() {
                        continue;
                    }
                    let build = &mut tasks[t];
                    let label = if is_real {
                        Label::Real(parse_number(cell, row, column)?)
                    } else {
                        let TaskKind::Categorical { classes } = &mut build.spec.kind else {
                            unreachable!()
                        };
                        match classes.iter().position(|c| c == cell) {
                            Some(c) => Label::Class(c),
                            None if build.fixed => {
                                return Err(Error::UnknownClass {
                                    task: build.spec.name.clone(),
                                    class: cell.to_string(),
                                    row,
                                })
                            }
                            None => {
                                classes.push(cell.to_string());
                                Label::Class(classes.len() - 1)
                            }
                        }
                    };
                    build.labels.insert(r, label);
                }
                Slot::Ignore => {}
            }
        }
        if id_column.is_none() {
            row_ids.push(row.to_string());
        }
    }

    let (specs, labels) = tasks.into_iter().map(|t| (t.spec, t.labels)).unzip();
    let ds = Dataset::new(row_ids, feature_names, features, specs, labels)?;
    ds.require_labels()?;
    Ok(ds)
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        }),
    }
}

/// Writes a dataset in the format [`load_delimited`] reads with
/// [`Schema::for_dataset`]. Floats use shortest round-trip formatting, so a
/// reload is bit-exact.
pub fn write_delimited(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_to(ds, file)
}

pub(crate) fn write_to<W: std::io::Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["row_id".to_string()];
    header.extend(ds.feature_names().iter().cloned());
    header.extend(ds.tasks().iter().map(|t| t.name.clone()));
    w.write_record(&header)?;
    for r in 0..ds.n_rows() {
        let mut rec = vec![ds.row_id(r).to_string()];
        rec.extend(ds.row(r).iter().map(|v| v.to_string()));
        for (t, spec) in ds.tasks().iter().enumerate() {
            rec.push(match ds.label(r, t) {
                None => String::new(),
                Some(Label::Real(v)) => v.to_string(),
                Some(Label::Class(c)) => spec.classes()[c].clone(),
            });
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
