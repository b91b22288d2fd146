//! Multi-task CART growth over sparse labels.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::seed::Rng;

/// Per-task leaf aggregate. A count of zero means the tree abstains for that
/// task at this leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LeafValue {
    Real { count: u32, mean: f64 },
    Class { counts: Vec<u32> },
}

impl LeafValue {
    pub fn count(&self) -> u32 {
        match self {
            LeafValue::Real { count, .. } => *count,
            LeafValue::Class { counts } => counts.iter().sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Samples with `x[feature] < threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
        /// Weighted impurity of the node before splitting.
        impurity: f64,
        /// Weighted impurity summed over both children.
        children_impurity: f64,
    },
    Leaf(Vec<LeafValue>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub(crate) nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf(&self, x: &[f64]) -> &[LeafValue] {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if x[*feature as usize] < *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf(values) => return values,
            }
        }
    }
}

pub(crate) enum Column {
    /// Standardised labels for the criterion and raw labels for leaf means.
    Real {
        z: Vec<Option<f64>>,
        raw: Vec<Option<f64>>,
    },
    Class {
        labels: Vec<Option<u32>>,
        k: usize,
    },
}

pub(crate) struct TaskColumn {
    pub column: Column,
    pub weight: f64,
}

/// Training rows in a dense layout, indexed by training-row position.
pub(crate) struct TrainingSet {
    pub n: usize,
    pub d: usize,
    pub x: Vec<f64>,
    pub tasks: Vec<TaskColumn>,
}

pub(crate) struct GrowParams {
    pub feature_subset: usize,
    pub min_node_size: usize,
}

#[derive(Clone)]
enum Stats {
    Real { n: f64, sum: f64, sumsq: f64 },
    Class { n: u64, sq: u64, counts: Vec<u64> },
}

impl Stats {
    fn empty(col: &Column) -> Self {
        match col {
            Column::Real { .. } => Stats::Real {
                n: 0.0,
                sum: 0.0,
                sumsq: 0.0,
            },
            Column::Class { k, .. } => Stats::Class {
                n: 0,
                sq: 0,
                counts: vec![0; *k],
            },
        }
    }

    fn add(&mut self, col: &Column, s: usize) {
        match (self, col) {
            (Stats::Real { n, sum, sumsq }, Column::Real { z, .. }) => {
                if let Some(v) = z[s] {
                    *n += 1.0;
                    *sum += v;
                    *sumsq += v * v;
                }
            }
            (Stats::Class { n, sq, counts }, Column::Class { labels, .. }) => {
                if let Some(c) = labels[s] {
                    let c = c as usize;
                    *sq += 2 * counts[c] + 1;
                    counts[c] += 1;
                    *n += 1;
                }
            }
            _ => unreachable!("stats and column kinds agree"),
        }
    }

    /// `n * impurity` of this sample set.
    fn weighted_impurity(&self) -> f64 {
        match self {
            Stats::Real { n, sum, sumsq } => {
                if *n > 0.0 {
                    (sumsq - sum * sum / n).max(0.0)
                } else {
                    0.0
                }
            }
            Stats::Class { n, sq, .. } => {
                if *n > 0 {
                    (*n as f64 - *sq as f64 / *n as f64).max(0.0)
                } else {
                    0.0
                }
            }
        }
    }

    /// `n * impurity` of `total` minus this set.
    fn complement_impurity(&self, total: &Stats) -> f64 {
        match (self, total) {
            (
                Stats::Real { n, sum, sumsq },
                Stats::Real {
                    n: tn,
                    sum: ts,
                    sumsq: tq,
                },
            ) => {
                let rn = tn - n;
                if rn > 0.0 {
                    let rs = ts - sum;
                    ((tq - sumsq) - rs * rs / rn).max(0.0)
                } else {
                    0.0
                }
            }
            (
                Stats::Class { n, counts, .. },
                Stats::Class {
                    n: tn, counts: tc, ..
                },
            ) => {
                let rn = tn - n;
                if rn > 0 {
                    let rsq: u64 = tc.iter().zip(counts).map(|(t, l)| (t - l) * (t - l)).sum();
                    (rn as f64 - rsq as f64 / rn as f64).max(0.0)
                } else {
                    0.0
                }
            }
            _ => unreachable!("stats kinds agree"),
        }
    }
}

impl TrainingSet {
    fn value(&self, s: usize, f: usize) -> f64 {
        self.x[s * self.d + f]
    }

    fn node_stats(&self, samples: &[u32]) -> Vec<Stats> {
        self.tasks
            .iter()
            .map(|t| {
                let mut st = Stats::empty(&t.column);
                for &s in samples {
                    st.add(&t.column, s as usize);
                }
                st
            })
            .collect()
    }

    fn is_pure(&self, samples: &[u32]) -> bool {
        self.tasks.iter().filter(|t| t.weight > 0.0).all(|t| match &t.column {
            Column::Real { z, .. } => {
                let mut it = samples.iter().filter_map(|&s| z[s as usize]);
                match it.next() {
                    Some(first) => it.all(|v| v == first),
                    None => true,
                }
            }
            Column::Class { labels, .. } => {
                let mut it = samples.iter().filter_map(|&s| labels[s as usize]);
                match it.next() {
                    Some(first) => it.all(|c| c == first),
                    None => true,
                }
            }
        })
    }

    fn leaf(&self, samples: &[u32]) -> Vec<LeafValue> {
        self.tasks
            .iter()
            .map(|t| match &t.column {
                Column::Real { raw, .. } => {
                    let mut count = 0u32;
                    let mut sum = 0.0;
                    for &s in samples {
                        if let Some(v) = raw[s as usize] {
                            count += 1;
                            sum += v;
                        }
                    }
                    let mean = if count > 0 { sum / f64::from(count) } else { 0.0 };
                    LeafValue::Real { count, mean }
                }
                Column::Class { labels, k } => {
                    let mut counts = vec![0u32; *k];
                    for &s in samples {
                        if let Some(c) = labels[s as usize] {
                            counts[c as usize] += 1;
                        }
                    }
                    LeafValue::Class { counts }
                }
            })
            .collect()
    }

    fn weighted(&self, per_task: impl Iterator<Item = f64>) -> f64 {
        self.tasks
            .iter()
            .zip(per_task)
            .filter(|(t, _)| t.weight > 0.0)
            .map(|(t, v)| t.weight * v)
            .sum()
    }

    /// Best `(feature, threshold, score)` over the given features, ties going
    /// to the lowest feature index and then the lowest threshold.
    fn best_split(
        &self,
        samples: &[u32],
        features: &[usize],
        totals: &[Stats],
    ) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        let mut pairs: Vec<(f64, u32)> = Vec::with_capacity(samples.len());
        for &f in features {
            pairs.clear();
            pairs.extend(samples.iter().map(|&s| (self.value(s as usize, f), s)));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[pairs.len() - 1].0 {
                continue;
            }
            let mut left: Vec<Stats> = self.tasks.iter().map(|t| Stats::empty(&t.column)).collect();
            for i in 0..pairs.len() - 1 {
                let s = pairs[i].1 as usize;
                for (st, t) in left.iter_mut().zip(&self.tasks) {
                    st.add(&t.column, s);
                }
                let (a, b) = (pairs[i].0, pairs[i + 1].0);
                if a == b {
                    continue;
                }
                let score = self.weighted(
                    left.iter()
                        .zip(totals)
                        .map(|(l, tot)| l.weighted_impurity() + l.complement_impurity(tot)),
                );
                if best.is_none_or(|(_, _, b)| score < b) {
                    best = Some((f, midpoint(a, b), score));
                }
            }
        }
        best
    }
}

pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    if mid > a && mid <= b {
        mid
    } else {
        b
    }
}

/// Grows one tree on a bootstrap sample (training-row indices, with
/// repeats). Nodes are expanded depth-first, left child first, which fixes
/// the order in which feature subsets are drawn from `rng`.
pub(crate) fn grow_tree(ts: &TrainingSet, samples: Vec<u32>, rng: &mut Rng, p: &GrowParams) -> Tree {
    let mut nodes: Vec<Node> = vec![Node::Leaf(Vec::new())];
    let mut stack: Vec<(usize, Vec<u32>)> = vec![(0, samples)];
    while let Some((id, samples)) = stack.pop() {
        if samples.len() <= p.min_node_size || ts.d == 0 || ts.is_pure(&samples) {
            nodes[id] = Node::Leaf(ts.leaf(&samples));
            continue;
        }
        let totals = ts.node_stats(&samples);
        let mut chosen = index::sample(rng, ts.d, p.feature_subset).into_vec();
        chosen.sort_unstable();
        let mut split = ts.best_split(&samples, &chosen, &totals);
        if split.is_none() && chosen.len() < ts.d {
            let rest: Vec<usize> = (0..ts.d).filter(|f| !chosen.contains(f)).collect();
            split = ts.best_split(&samples, &rest, &totals);
        }
        let Some((feature, threshold, score)) = split else {
            nodes[id] = Node::Leaf(ts.leaf(&samples));
            continue;
        };
        let (left, right): (Vec<u32>, Vec<u32>) = samples
            .iter()
            .partition(|&&s| ts.value(s as usize, feature) < threshold);
        let l = nodes.len();
        nodes.push(Node::Leaf(Vec::new()));
        nodes.push(Node::Leaf(Vec::new()));
        nodes[id] = Node::Split {
            feature: feature as u32,
            threshold,
            left: l as u32,
            right: (l + 1) as u32,
            impurity: ts.weighted(totals.iter().map(Stats::weighted_impurity)),
            children_impurity: score,
        };
        stack.push((l + 1, right));
        stack.push((l, left));
    }
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_stays_between() {
        assert_eq!(midpoint(1.0, 3.0), 2.0);
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(m > a && m <= b);
    }

    #[test]
    fn class_complement_matches_direct() {
        let col = Column::Class {
            labels: vec![Some(0), Some(1), Some(1), None, Some(2)],
            k: 3,
        };
        let mut total = Stats::empty(&col);
        for s in 0..5 {
            total.add(&col, s);
        }
        let mut left = Stats::empty(&col);
        left.add(&col, 0);
        left.add(&col, 1);
        let mut right = Stats::empty(&col);
        for s in 2..5 {
            right.add(&col, s);
        }
        assert_eq!(left.complement_impurity(&total), right.weighted_impurity());
    }
}
