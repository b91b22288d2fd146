//! Dense single-task forest trainer.
//!
//! A deliberately plain trainer for exactly one task with every training row
//! labelled. It follows the same growth rules, RNG streams and arithmetic as
//! the multi-task trainer, so a multi-task forest restricted to one task must
//! reproduce its trees exactly. It exists to check the sparse multi-task
//! bookkeeping against.

use rand::seq::index;
use rayon::prelude::*;

use super::grow::midpoint;
use super::{
    draw_bootstrap, membership_counts, standardization, Forest, ForestParams, ForestTask,
    LeafValue, Node, Tree,
};
use crate::dataset::{Dataset, Label};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

enum Target {
    Real { z: Vec<f64>, raw: Vec<f64> },
    Class { y: Vec<usize>, k: usize },
}

struct Problem {
    x: Vec<f64>,
    d: usize,
    target: Target,
    subset: usize,
    min_node_size: usize,
}

impl Problem {
    fn x(&self, s: u32, f: usize) -> f64 {
        self.x[s as usize * self.d + f]
    }

    fn pure(&self, samples: &[u32]) -> bool {
        match &self.target {
            Target::Real { z, .. } => samples.iter().all(|&s| z[s as usize] == z[samples[0] as usize]),
            Target::Class { y, .. } => samples.iter().all(|&s| y[s as usize] == y[samples[0] as usize]),
        }
    }

    fn leaf(&self, samples: &[u32]) -> Vec<LeafValue> {
        match &self.target {
            Target::Real { raw, .. } => {
                let sum: f64 = samples.iter().fold(0.0, |acc, &s| acc + raw[s as usize]);
                let count = samples.len() as u32;
                vec![LeafValue::Real {
                    count,
                    mean: sum / f64::from(count),
                }]
            }
            Target::Class { y, k } => {
                let mut counts = vec![0u32; *k];
                for &s in samples {
                    counts[y[s as usize]] += 1;
                }
                vec![LeafValue::Class { counts }]
            }
        }
    }

    /// `n * impurity` of the whole node.
    fn node_impurity(&self, samples: &[u32]) -> f64 {
        match &self.target {
            Target::Real { z, .. } => {
                let (mut n, mut s1, mut s2) = (0.0, 0.0, 0.0);
                for &s in samples {
                    let v = z[s as usize];
                    n += 1.0;
                    s1 += v;
                    s2 += v * v;
                }
                (s2 - s1 * s1 / n).max(0.0)
            }
            Target::Class { y, k } => {
                let mut counts = vec![0u64; *k];
                let mut sq = 0u64;
                for &s in samples {
                    let c = y[s as usize];
                    sq += 2 * counts[c] + 1;
                    counts[c] += 1;
                }
                let n = samples.len() as f64;
                (n - sq as f64 / n).max(0.0)
            }
        }
    }

    /// Scores every threshold of one feature: `(threshold, score)` in
    /// ascending threshold order.
    fn scan(&self, samples: &[u32], f: usize) -> Vec<(f64, f64)> {
        let mut order: Vec<(f64, u32)> = samples.iter().map(|&s| (self.x(s, f), s)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let m = order.len();
        let mut out = Vec::new();
        match &self.target {
            Target::Real { z, .. } => {
                let (mut tn, mut ts, mut tq) = (0.0, 0.0, 0.0);
                for &s in samples {
                    let v = z[s as usize];
                    tn += 1.0;
                    ts += v;
                    tq += v * v;
                }
                let (mut ln, mut ls, mut lq) = (0.0, 0.0, 0.0);
                for i in 0..m - 1 {
                    let v = z[order[i].1 as usize];
                    ln += 1.0;
                    ls += v;
                    lq += v * v;
                    if order[i].0 == order[i + 1].0 {
                        continue;
                    }
                    let left: f64 = (lq - ls * ls / ln).max(0.0);
                    let rn: f64 = tn - ln;
                    let rs: f64 = ts - ls;
                    let right: f64 = ((tq - lq) - rs * rs / rn).max(0.0);
                    out.push((midpoint(order[i].0, order[i + 1].0), left + right));
                }
            }
            Target::Class { y, k } => {
                let mut total = vec![0u64; *k];
                for &s in samples {
                    total[y[s as usize]] += 1;
                }
                let mut left = vec![0u64; *k];
                let mut lsq = 0u64;
                for i in 0..m - 1 {
                    let c = y[order[i].1 as usize];
                    lsq += 2 * left[c] + 1;
                    left[c] += 1;
                    if order[i].0 == order[i + 1].0 {
                        continue;
                    }
                    let ln = (i + 1) as u64;
                    let rn = m as u64 - ln;
                    let rsq: u64 = total.iter().zip(&left).map(|(t, l)| (t - l) * (t - l)).sum();
                    let l = (ln as f64 - lsq as f64 / ln as f64).max(0.0);
                    let r = (rn as f64 - rsq as f64 / rn as f64).max(0.0);
                    out.push((midpoint(order[i].0, order[i + 1].0), l + r));
                }
            }
        }
        out
    }

    fn best(&self, samples: &[u32], features: &[usize]) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for &f in features {
            for (thr, score) in self.scan(samples, f) {
                if best.is_none_or(|b| score < b.2) {
                    best = Some((f, thr, score));
                }
            }
        }
        best
    }

    fn grow(&self, samples: Vec<u32>, rng: &mut Rng) -> Tree {
        let mut nodes = vec![Node::Leaf(Vec::new())];
        let mut stack = vec![(0usize, samples)];
        while let Some((id, samples)) = stack.pop() {
            if samples.len() <= self.min_node_size || self.d == 0 || self.pure(&samples) {
                nodes[id] = Node::Leaf(self.leaf(&samples));
                continue;
            }
            let mut feats = index::sample(rng, self.d, self.subset).into_vec();
            feats.sort_unstable();
            let mut found = self.best(&samples, &feats);
            if found.is_none() && feats.len() < self.d {
                let rest: Vec<usize> = (0..self.d).filter(|f| !feats.contains(f)).collect();
                found = self.best(&samples, &rest);
            }
            let Some((f, thr, score)) = found else {
                nodes[id] = Node::Leaf(self.leaf(&samples));
                continue;
            };
            let impurity = self.node_impurity(&samples);
            let left: Vec<u32> = samples.iter().copied().filter(|&s| self.x(s, f) < thr).collect();
            let right: Vec<u32> = samples.iter().copied().filter(|&s| self.x(s, f) >= thr).collect();
            let l = nodes.len();
            nodes.push(Node::Leaf(Vec::new()));
            nodes.push(Node::Leaf(Vec::new()));
            nodes[id] = Node::Split {
                feature: f as u32,
                threshold: thr,
                left: l as u32,
                right: l as u32 + 1,
                impurity,
                children_impurity: score,
            };
            stack.push((l + 1, right));
            stack.push((l, left));
        }
        Tree { nodes }
    }
}

/// Trains a single-task forest on the rows labelled for `task`.
pub fn train_single_task_forest(ds: &Dataset, task: &str, params: &ForestParams) -> Result<Forest> {
    let t = ds.task_index(task)?;
    let spec = ds.tasks()[t].clone();
    let rows: Vec<usize> = ds.labels(t).keys().copied().collect();
    if rows.is_empty() {
        return Err(Error::EmptyTrainingSet(format!("task {task:?} has no labels")));
    }
    let d = ds.n_features();
    let x: Vec<f64> = rows.iter().flat_map(|&r| ds.row(r).iter().copied()).collect();
    let weight = params.weight(task);

    let (target, center, scale) = if spec.is_real() {
        let raw: Vec<f64> = rows
            .iter()
            .map(|&r| ds.label(r, t).and_then(Label::as_real).unwrap())
            .collect();
        let (center, scale) = standardization(&raw);
        let z = raw.iter().map(|y| (y - center) / scale).collect();
        (Target::Real { z, raw }, center, scale)
    } else {
        let y = rows
            .iter()
            .map(|&r| ds.label(r, t).and_then(Label::as_class).unwrap())
            .collect();
        (Target::Class { y, k: spec.classes().len() }, 0.0, 1.0)
    };
    let problem = Problem {
        x,
        d,
        subset: params.resolve_feature_subset(d, !spec.is_real())?,
        min_node_size: params.min_node_size.max(1),
        target,
    };
    let n = rows.len();
    let b = params.resolve_trees(n)?;
    let grown: Vec<(Tree, Vec<u32>)> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng(seed::derive(params.seed, i as u64));
            let sample = draw_bootstrap(&mut rng, n);
            let counts = membership_counts(&sample, n);
            (problem.grow(sample, &mut rng), counts)
        })
        .collect();
    let (trees, membership) = grown.into_iter().unzip();
    Ok(Forest {
        feature_names: ds.feature_names().to_vec(),
        tasks: vec![ForestTask {
            spec,
            weight,
            center,
            scale,
        }],
        trees,
        membership,
        training_rows: rows.iter().map(|&r| ds.row_id(r).to_string()).collect(),
        seed: params.seed,
    })
}
