use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed;

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Rows carrying a label for at least one scope task, in row order.
/// The remaining rows are auxiliary: they never enter a test set.
pub fn scoped_rows(ds: &Dataset, scope_tasks: &[String]) -> Result<Vec<usize>> {
    if scope_tasks.is_empty() {
        return Err(Error::InvalidParam("at least one scope task is required".into()));
    }
    let mut idx = Vec::with_capacity(scope_tasks.len());
    for t in scope_tasks {
        idx.push(ds.task_index(t)?);
    }
    Ok((0..ds.n_rows())
        .filter(|&r| idx.iter().any(|&t| ds.label(r, t).is_some()))
        .collect())
}

fn shuffled(rows: &[usize], seed: u64) -> Vec<usize> {
    let mut out = rows.to_vec();
    out.shuffle(&mut seed::rng(seed));
    out
}

/// Assignment of scoped rows to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub scope_tasks: Vec<String>,
    /// Row id to fold index.
    pub assignment: BTreeMap<String, usize>,
}

pub fn make_fold_plan(ds: &Dataset, k: usize, seed: u64, scope_tasks: &[String]) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidParam(format!("cross-validation needs k >= 2, got {k}")));
    }
    let rows = scoped_rows(ds, scope_tasks)?;
    if rows.len() < k {
        return Err(Error::InvalidParam(format!(
            "{} scoped rows cannot fill {k} folds",
            rows.len()
        )));
    }
    let order = shuffled(&rows, seed);
    let (base, extra) = (order.len() / k, order.len() % k);
    let mut assignment = BTreeMap::new();
    let mut pos = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        for &r in &order[pos..pos + size] {
            assignment.insert(ds.row_id(r).to_string(), fold);
        }
        pos += size;
    }
    Ok(FoldPlan {
        k,
        seed,
        scope_tasks: scope_tasks.to_vec(),
        assignment,
    })
}

impl FoldPlan {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// Rows of `ds` in fold `f`, in row order.
    pub fn fold_rows(&self, ds: &Dataset, f: usize) -> Vec<usize> {
        (0..ds.n_rows())
            .filter(|&r| self.assignment.get(ds.row_id(r)) == Some(&f))
            .collect()
    }

    pub fn digest(&self) -> String {
        let mut text = format!("folds k={} seed={}\n", self.k, self.seed);
        for (id, f) in &self.assignment {
            text.push_str(&format!("{id}\t{f}\n"));
        }
        sha256_hex(text.as_bytes())
    }
}

/// A held-out set plus the permuted pool that nested training sets are cut from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutPlan {
    pub seed: u64,
    pub fraction: f64,
    pub scope_tasks: Vec<String>,
    /// Held-out row ids in draw order.
    pub holdout: Vec<String>,
    /// Remaining scoped row ids in draw order.
    pub pool: Vec<String>,
}

pub fn make_holdout_plan(ds: &Dataset, fraction: f64, seed: u64, scope_tasks: &[String]) -> Result<HoldoutPlan> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParam(format!("holdout fraction must be in (0, 1), got {fraction}")));
    }
    let rows = scoped_rows(ds, scope_tasks)?;
    let n_hold = (fraction * rows.len() as f64).round() as usize;
    if n_hold == 0 || n_hold >= rows.len() {
        return Err(Error::InvalidParam(format!(
            "holdout fraction {fraction} of {} scoped rows leaves an empty side",
            rows.len()
        )));
    }
    let order = shuffled(&rows, seed);
    let ids = |rs: &[usize]| rs.iter().map(|&r| ds.row_id(r).to_string()).collect();
    Ok(HoldoutPlan {
        seed,
        fraction,
        scope_tasks: scope_tasks.to_vec(),
        holdout: ids(&order[..n_hold]),
        pool: ids(&order[n_hold..]),
    })
}

impl HoldoutPlan {
    /// The first `size` pool ids; smaller sizes give subsets of larger ones.
    pub fn training_ids(&self, size: usize) -> Result<&[String]> {
        self.pool.get(..size).ok_or_else(|| {
            Error::InvalidParam(format!("training size {size} exceeds the {} available rows", self.pool.len()))
        })
    }

    pub fn digest(&self) -> String {
        let mut text = format!("holdout seed={} fraction={}\n", self.seed, self.fraction);
        for id in &self.holdout {
            text.push_str(&format!("h\t{id}\n"));
        }
        for id in &self.pool {
            text.push_str(&format!("p\t{id}\n"));
        }
        sha256_hex(text.as_bytes())
    }
}
