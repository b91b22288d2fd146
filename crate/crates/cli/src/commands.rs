use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use tlforest::dataset::{write_delimited, Schema};
use tlforest::eval::sha256_hex;
use tlforest::synth::SynthConfig;
use tlforest::transfer::Provenance;
use tlforest::{
    classify_composite, evaluate, train_architecture, CompositeTaskSpec, TaskPrediction, TrainedArchitecture,
};

use crate::experiment::{Experiment, Overrides};
use crate::fail::{Failure, Invalid};

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).runtime(format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).runtime(format!("writing {}", path.display()))
}

fn pretty<T: Serialize>(v: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v).runtime("serializing")?;
    s.push('\n');
    Ok(s)
}

pub fn ingest(config: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let exp = Experiment::prepare(config, &Overrides::default())?;
    let dir = exp.loaded.output_dir(out);
    fs::create_dir_all(&dir).runtime(format!("creating {}", dir.display()))?;
    write_delimited(&exp.dataset, dir.join("dataset.csv")).runtime("writing dataset.csv")?;
    Schema::for_dataset(&exp.dataset)
        .save(dir.join("dataset.schema.json"))
        .runtime("writing dataset.schema.json")?;
    let report = json!({
        "fingerprint": exp.fingerprint,
        "rows_before": exp.raw_rows,
        "labels_before": exp.raw_labels,
        "rows_after": exp.dataset.n_rows(),
        "labels_after": crate::recipe::label_counts(&exp.dataset),
        "steps": exp.steps,
    });
    write_file(&dir.join("ingest_report.json"), pretty(&report)?)?;
    eprintln!(
        "ingested {} rows ({} before cleaning) into {}",
        exp.dataset.n_rows(),
        exp.raw_rows,
        dir.display()
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub fingerprint: String,
    pub architecture: String,
    pub seed: u64,
    pub features: Vec<String>,
    #[serde(default)]
    pub composites: Vec<CompositeTaskSpec>,
    pub provenance: Provenance,
}

pub fn manifest_path(model: &Path) -> PathBuf {
    let stem = model.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    model.with_file_name(format!("{stem}.manifest.json"))
}

pub fn train(config: &Path, arch: Option<&str>, seed: Option<u64>, out: Option<&Path>) -> Result<(), Failure> {
    let overrides = Overrides {
        train_seed: seed,
        ..Overrides::default()
    };
    let exp = Experiment::prepare(config, &overrides)?;
    let archs: Vec<_> = match arch {
        Some(name) => match exp.architectures().iter().find(|a| a.name == name) {
            Some(a) => vec![a.clone()],
            None => return Err(Failure::invalid(format!("no architecture named {name:?} in the config"))),
        },
        None => exp.architectures().to_vec(),
    };
    if archs.is_empty() {
        return Err(Failure::invalid("the config defines no architectures"));
    }
    let dir = exp.loaded.output_dir(out);
    let params = &exp.loaded.config.params;
    let (store, trained) = exp.store()?;
    for handle in &trained {
        let path = dir.join("pretrained").join(format!("{handle}.json"));
        fs::create_dir_all(path.parent().unwrap()).runtime("creating pretrained/")?;
        let forest = store.get(handle).runtime("pretrained store")?;
        forest.save(&path).runtime(format!("writing {}", path.display()))?;
        let tasks: Vec<&str> = forest.tasks().iter().map(|t| t.spec.name.as_str()).collect();
        let manifest = json!({
            "fingerprint": exp.fingerprint,
            "handle": handle,
            "tasks": tasks,
            "seed": forest.seed(),
        });
        write_file(&manifest_path(&path), pretty(&manifest)?)?;
    }
    for a in &archs {
        let ta = train_architecture(&a.spec, &exp.dataset, params, &store)
            .runtime(format!("training {:?}", a.name))?;
        let path = dir.join("models").join(format!("{}.json", a.name));
        fs::create_dir_all(path.parent().unwrap()).runtime("creating models/")?;
        ta.save(&path).runtime(format!("writing {}", path.display()))?;
        let manifest = Manifest {
            fingerprint: exp.fingerprint.clone(),
            architecture: a.name.clone(),
            seed: params.default.seed,
            features: ta.feature_names().to_vec(),
            composites: exp.loaded.config.composites.clone(),
            provenance: ta.provenance().clone(),
        };
        write_file(&manifest_path(&path), pretty(&manifest)?)?;
        eprintln!("trained {} -> {}", a.name, path.display());
    }
    Ok(())
}

/// Matches model features to input columns by name.
fn read_inputs(model: &TrainedArchitecture, input: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), Failure> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(input)
        .invalid(format!("opening {}", input.display()))?;
    let headers = rdr.headers().invalid("reading header")?.clone();
    let features = model.feature_names();
    let id_col = headers.iter().position(|h| h == "row_id");
    let cols: Vec<Option<usize>> = features
        .iter()
        .map(|f| headers.iter().position(|h| h == f))
        .collect();
    if cols.iter().any(Option::is_none) {
        let missing: Vec<&str> = features
            .iter()
            .zip(&cols)
            .filter(|(_, c)| c.is_none())
            .map(|(f, _)| f.as_str())
            .collect();
        let got = headers.len() - usize::from(id_col.is_some());
        let err = tlforest::Error::DimensionMismatch {
            expected: features.len(),
            got,
        };
        return Err(Failure::Invalid(anyhow::Error::new(err).context(format!(
            "{} does not match the model's {} features {:?}; missing columns {:?}",
            input.display(),
            features.len(),
            features,
            missing
        ))));
    }
    let cols: Vec<usize> = cols.into_iter().map(Option::unwrap).collect();
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.invalid(format!("reading row {}", i + 1))?;
        let mut x = Vec::with_capacity(cols.len());
        for (&c, name) in cols.iter().zip(features) {
            let cell = rec.get(c).unwrap_or("");
            let v: f64 = cell
                .parse()
                .map_err(|_| Failure::invalid(format!("row {}, column {name:?}: cannot read {cell:?} as a number", i + 1)))?;
            x.push(v);
        }
        ids.push(match id_col {
            Some(c) => rec.get(c).unwrap_or("").to_string(),
            None => (i + 1).to_string(),
        });
        rows.push(x);
    }
    Ok((ids, rows))
}

/// Class vocabulary of a categorical output, read from the forest that
/// predicts it.
fn classes_of(model: &TrainedArchitecture, task: &str) -> Option<Vec<String>> {
    model.forests().values().find_map(|f| {
        let i = f.task_index(task).ok()?;
        let spec = &f.tasks()[i].spec;
        (!spec.is_real()).then(|| spec.classes().to_vec())
    })
}

pub fn predict(model_path: &Path, input: &Path, output: Option<&Path>, uncertainty: bool) -> Result<(), Failure> {
    let model = TrainedArchitecture::load(model_path).invalid(format!("loading {}", model_path.display()))?;
    let mpath = manifest_path(model_path);
    let composites = if mpath.exists() {
        let text = fs::read_to_string(&mpath).invalid(format!("reading {}", mpath.display()))?;
        let m: Manifest = serde_json::from_str(&text).invalid(format!("parsing {}", mpath.display()))?;
        m.composites
    } else {
        Vec::new()
    };
    let (ids, rows) = read_inputs(&model, input)?;

    let mut outputs = model.spec().outputs();
    outputs.sort();
    outputs.dedup();
    let composites: Vec<CompositeTaskSpec> = composites
        .into_iter()
        .filter(|c| c.source_tasks.iter().all(|t| outputs.contains(t) && classes_of(&model, t).is_none()))
        .collect();

    let mut header = vec!["row_id".to_string()];
    let mut vocab: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for t in &outputs {
        header.push(t.clone());
        match classes_of(&model, t) {
            Some(classes) => {
                header.extend(classes.iter().map(|c| format!("{t}_p_{c}")));
                vocab.insert(t, classes);
            }
            None => header.push(format!("{t}_std_error")),
        }
    }
    header.extend(composites.iter().map(|c| c.name.clone()));

    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(&header).runtime("writing predictions")?;
        for (id, x) in ids.iter().zip(&rows) {
            let preds = model
                .predict(x, uncertainty)
                .runtime(format!("predicting row {id:?}"))?;
            let mut rec = vec![id.clone()];
            let mut means = BTreeMap::new();
            for t in &outputs {
                match preds.get(t) {
                    Some(TaskPrediction::Real { mean, std_error }) => {
                        means.insert(t.clone(), *mean);
                        rec.push(mean.to_string());
                        rec.push(std_error.map(|s| s.to_string()).unwrap_or_default());
                    }
                    Some(TaskPrediction::Class {
                        label, probabilities, ..
                    }) => {
                        rec.push(label.clone());
                        rec.extend(probabilities.iter().map(f64::to_string));
                    }
                    None => {
                        let width = vocab.get(t.as_str()).map_or(1, Vec::len);
                        rec.extend(std::iter::repeat_n(String::new(), width + 1));
                    }
                }
            }
            for c in &composites {
                let class = classify_composite(c, &means).runtime(format!("composite {:?}", c.name))?;
                rec.push(c.source_tasks[class].clone());
            }
            w.write_record(&rec).runtime("writing predictions")?;
        }
        w.flush().runtime("writing predictions")?;
    }
    match output {
        Some(p) => write_file(p, &buf)?,
        None => std::io::stdout().write_all(&buf).runtime("writing to stdout")?,
    }
    Ok(())
}

pub fn table_file(metric: &str) -> String {
    let safe: String = metric
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("table_{safe}.csv")
}

pub fn evaluate_cmd(config: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<(), Failure> {
    let overrides = Overrides {
        eval_seed: seed,
        ..Overrides::default()
    };
    let exp = Experiment::prepare(config, &overrides)?;
    let Some((mode, protocol)) = exp.evaluation() else {
        return Err(Failure::invalid("the config has no evaluation section"));
    };
    let dir = exp.loaded.output_dir(out);
    let (store, _) = exp.store()?;
    let report = evaluate(
        exp.architectures(),
        &exp.dataset,
        &mode,
        &protocol,
        &exp.loaded.config.params,
        &store,
    )
    .runtime("evaluation")?
    .with_fingerprint(exp.fingerprint.clone());

    fs::create_dir_all(&dir).runtime(format!("creating {}", dir.display()))?;
    let mut json = report.to_json().runtime("serializing report")?;
    json.push('\n');
    write_file(&dir.join("report.json"), json)?;
    for m in &protocol.metrics {
        let label = m.label();
        let table = report.table(&label).runtime(format!("table {label}"))?;
        let text = format!("# fingerprint: {}\n{table}", exp.fingerprint);
        write_file(&dir.join(table_file(&label)), text)?;
    }
    let failures: usize = report.cells.iter().map(|c| c.failures.len()).sum();
    if !report.is_complete() {
        eprintln!("warning: {failures} trial failures; affected cells are incomplete (see report.json)");
    }
    eprintln!("wrote report and {} tables to {}", protocol.metrics.len(), dir.display());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SynthFile {
    version: u32,
    #[serde(flatten)]
    config: SynthConfig,
}

pub fn synth(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let text = fs::read_to_string(config).invalid(format!("reading {}", config.display()))?;
    let mut file: SynthFile = serde_json::from_str(&text).invalid(format!("parsing {}", config.display()))?;
    if file.version != crate::config::CONFIG_VERSION {
        return Err(Failure::invalid(format!("synth config version {}", file.version)));
    }
    if let Some(s) = seed {
        file.config.seed = s;
    }
    file.config.validate().invalid("synth config")?;
    let fingerprint = sha256_hex(serde_json::to_string(&file.config).invalid("serializing")?.as_bytes());
    let ds = file.config.generate().runtime("generating")?;
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir).runtime(format!("creating {}", dir.display()))?;
    }
    write_delimited(&ds, out).runtime(format!("writing {}", out.display()))?;
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    Schema::for_dataset(&ds)
        .save(out.with_file_name(format!("{stem}.schema.json")))
        .runtime("writing schema")?;
    let manifest = json!({ "fingerprint": fingerprint, "config": file.config });
    write_file(&out.with_file_name(format!("{stem}.manifest.json")), pretty(&manifest)?)?;
    eprintln!("wrote {} rows to {}", ds.n_rows(), out.display());
    Ok(())
}

pub fn check(config: &Path) -> Result<(), Failure> {
    let exp = Experiment::prepare(config, &Overrides::default())?;
    println!("fingerprint {}", exp.fingerprint);
    println!("rows {} ({} before cleaning)", exp.dataset.n_rows(), exp.raw_rows);
    for (t, n) in crate::recipe::label_counts(&exp.dataset) {
        println!("task {t}: {n} labels");
    }
    for a in exp.architectures() {
        println!("architecture {}", a.name);
    }
    Ok(())
}
