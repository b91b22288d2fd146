//! Jackknife variance estimates for bagged regression predictions.
//!
//! Both estimators work from the per-tree predictions `t_b(x)` and the
//! bootstrap counts `N_bi` the forest keeps for every tree:
//!
//! - jackknife-after-bootstrap:
//!   `V_J = (n-1)/n * sum_i (mean_{b: N_bi = 0} t_b - t)^2`
//! - infinitesimal jackknife: `V_IJ = sum_i Cov_b(N_bi, t_b)^2`
//!
//! Each is reduced by its Monte-Carlo bias term, `(e-1) n/B * v` and
//! `n/B * v` respectively, where `v` is the (1/B) variance of the `t_b`.
//! The reported variance is the mean of the two corrected values, floored
//! at zero.
//!
//! Trees that abstain at `x` are left out, so `B` counts voting trees only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::Forest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorDetail {
    /// Jackknife-after-bootstrap, bias corrected. May be negative.
    pub v_jab: f64,
    /// Infinitesimal jackknife, bias corrected. May be negative.
    pub v_ij: f64,
    /// Mean of the corrected estimates, floored at zero.
    pub v_combined: f64,
    pub v_jab_uncorrected: f64,
    pub v_ij_uncorrected: f64,
    /// Voting trees.
    pub trees: usize,
    /// True when the combined estimate was negative before flooring.
    pub floored: bool,
    /// Training rows present in every voting tree; their jackknife term
    /// was skipped.
    pub uncovered_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionWithUncertainty {
    pub mean: f64,
    pub std_error: f64,
    pub detail: EstimatorDetail,
}

impl PredictionWithUncertainty {
    pub fn variance(&self) -> f64 {
        self.detail.v_combined
    }
}

/// Prediction and jackknife standard error for a real task at `x`.
pub fn jackknife_variance(forest: &Forest, task: &str, x: &[f64]) -> Result<PredictionWithUncertainty> {
    let per_tree = forest.tree_predictions(task, x)?;
    let voters: Vec<(f64, &[u32])> = per_tree
        .iter()
        .zip(forest.membership())
        .filter_map(|(t, m)| t.map(|t| (t, m.as_slice())))
        .collect();
    if voters.is_empty() {
        return Err(Error::Abstained {
            task: task.to_string(),
        });
    }
    let b = voters.len();
    if b < 2 {
        return Err(Error::InvalidParam(format!(
            "jackknife needs at least 2 voting trees, found {b}"
        )));
    }
    let n = forest.training_row_count();
    let bf = b as f64;
    let nf = n as f64;

    let mean = voters.iter().map(|v| v.0).sum::<f64>() / bf;
    let v_hat = voters.iter().map(|v| (v.0 - mean).powi(2)).sum::<f64>() / bf;

    let mut jab = 0.0;
    let mut ij = 0.0;
    let mut uncovered = Vec::new();
    for i in 0..n {
        let (mut out_sum, mut out_n) = (0.0, 0usize);
        let mut count_sum = 0.0;
        for &(t, m) in &voters {
            if m[i] == 0 {
                out_sum += t;
                out_n += 1;
            }
            count_sum += f64::from(m[i]);
        }
        if out_n == 0 {
            uncovered.push(i);
        } else {
            jab += (out_sum / out_n as f64 - mean).powi(2);
        }
        let count_mean = count_sum / bf;
        let cov = voters
            .iter()
            .map(|&(t, m)| (f64::from(m[i]) - count_mean) * (t - mean))
            .sum::<f64>()
            / bf;
        ij += cov * cov;
    }
    let jab = jab * (nf - 1.0) / nf;
    let v_jab = jab - (std::f64::consts::E - 1.0) * nf / bf * v_hat;
    let v_ij = ij - nf / bf * v_hat;
    let combined = 0.5 * (v_jab + v_ij);
    let floored = combined < 0.0;
    let v_combined = combined.max(0.0);
    Ok(PredictionWithUncertainty {
        mean,
        std_error: v_combined.sqrt(),
        detail: EstimatorDetail {
            v_jab,
            v_ij,
            v_combined,
            v_jab_uncorrected: jab,
            v_ij_uncorrected: ij,
            trees: b,
            floored,
            uncovered_rows: uncovered,
        },
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use rand::Rng as _;

    use super::*;
    use crate::dataset::{Dataset, Label, TaskSpec};
    use crate::forest::{train_forest, train_forest_with_resamples, ForestParams, TreeCount};
    use crate::seed;

    fn linear(n: usize, seed: u64, noise: f64) -> Dataset {
        let mut rng = seed::rng(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let labels: BTreeMap<usize, Label> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| (i, Label::Real(2.0 * v + noise * (rng.random::<f64>() - 0.5))))
            .collect();
        Dataset::new(
            (0..n).map(|i| format!("r{i}")).collect(),
            vec!["x".into()],
            x,
            vec![TaskSpec::real("y")],
            vec![labels],
        )
        .unwrap()
    }

    #[test]
    fn constant_predictions_have_zero_variance() {
        let mut ds = linear(15, 1, 0.0);
        ds = ds
            .with_task(TaskSpec::real("y"), (0..15).map(|i| (i, Label::Real(3.5))).collect())
            .unwrap();
        let f = train_forest(&ds, &["y"], &ForestParams::default().with_trees(TreeCount::Fixed(50))).unwrap();
        let p = jackknife_variance(&f, "y", &[0.4]).unwrap();
        assert_eq!(p.mean, 3.5);
        assert_eq!(p.detail.v_jab, 0.0);
        assert_eq!(p.detail.v_ij, 0.0);
        assert_eq!(p.std_error, 0.0);
    }

    /// Covariances via E[XY] - E[X]E[Y] and leave-one-out means via masks.
    fn oracle(t: &[f64], m: &[Vec<u32>]) -> (f64, f64) {
        let b = t.len() as f64;
        let n = m[0].len();
        let tbar = t.iter().sum::<f64>() / b;
        let var = t.iter().map(|v| v * v).sum::<f64>() / b - tbar * tbar;
        let mut jab = 0.0;
        let mut ij = 0.0;
        for i in 0..n {
            let mask: Vec<bool> = m.iter().map(|row| row[i] == 0).collect();
            let k = mask.iter().filter(|&&z| z).count();
            if k > 0 {
                let loo: f64 = t.iter().zip(&mask).filter(|(_, &z)| z).map(|(v, _)| v).sum::<f64>() / k as f64;
                jab += (loo - tbar).powi(2);
            }
            let c: Vec<f64> = m.iter().map(|row| f64::from(row[i])).collect();
            let exy = c.iter().zip(t).map(|(a, b)| a * b).sum::<f64>() / b;
            let ex = c.iter().sum::<f64>() / b;
            ij += (exy - ex * tbar).powi(2);
        }
        let nf = n as f64;
        (
            jab * (nf - 1.0) / nf - (std::f64::consts::E - 1.0) * nf / b * var,
            ij - nf / b * var,
        )
    }

    #[test]
    fn estimators_match_direct_formulas() {
        let ds = linear(12, 4, 0.5);
        let f = train_forest(&ds, &["y"], &ForestParams::default().with_trees(TreeCount::Fixed(40))).unwrap();
        for x in [0.1, 0.45, 0.9] {
            let p = jackknife_variance(&f, "y", &[x]).unwrap();
            let t: Vec<f64> = f.tree_predictions("y", &[x]).unwrap().into_iter().flatten().collect();
            let (jab, ij) = oracle(&t, f.membership());
            assert!((p.detail.v_jab - jab).abs() < 1e-10, "{} vs {jab}", p.detail.v_jab);
            assert!((p.detail.v_ij - ij).abs() < 1e-10);
            assert!(p.std_error >= 0.0);
        }
    }

    #[test]
    fn rows_in_every_tree_are_reported() {
        let ds = linear(4, 2, 1.0);
        let resamples = vec![vec![0, 1, 2, 0], vec![0, 1, 3, 3], vec![0, 2, 3, 2]];
        let f = train_forest_with_resamples(&ds, &["y"], &ForestParams::default(), &resamples).unwrap();
        let p = jackknife_variance(&f, "y", &[0.5]).unwrap();
        assert_eq!(p.detail.uncovered_rows, vec![0]);
    }

    #[test]
    fn needs_two_trees() {
        let ds = linear(6, 2, 1.0);
        let f = train_forest(&ds, &["y"], &ForestParams::default().with_trees(TreeCount::Fixed(1))).unwrap();
        assert!(matches!(jackknife_variance(&f, "y", &[0.5]), Err(Error::InvalidParam(_))));
    }

    #[test]
    fn duplicated_trees_keep_mean() {
        let ds = linear(10, 3, 0.3);
        let f = train_forest(&ds, &["y"], &ForestParams::default().with_trees(TreeCount::Fixed(7))).unwrap();
        let mut g = f.clone();
        for t in 0..f.n_trees() {
            g.duplicate_tree(t);
        }
        for x in [0.2, 0.7] {
            let a = jackknife_variance(&f, "y", &[x]).unwrap();
            let b = jackknife_variance(&g, "y", &[x]).unwrap();
            assert!((a.mean - b.mean).abs() <= 1e-12 * a.mean.abs().max(1.0));
            assert_eq!(b.detail.trees, 14);
        }
    }

    #[test]
    fn bias_correction_shrinks_with_more_trees() {
        let ds = linear(20, 7, 0.6);
        let corrections: Vec<f64> = [100, 200, 400]
            .iter()
            .map(|&b| {
                let f = train_forest(
                    &ds,
                    &["y"],
                    &ForestParams::default().with_trees(TreeCount::Fixed(b)).with_seed(11),
                )
                .unwrap();
                let p = jackknife_variance(&f, "y", &[0.5]).unwrap();
                let d = &p.detail;
                (d.v_jab_uncorrected - d.v_jab).abs() + (d.v_ij_uncorrected - d.v_ij).abs()
            })
            .collect();
        assert!(corrections[1] < corrections[0] && corrections[2] < corrections[1], "{corrections:?}");
    }

    #[test]
    fn categorical_task_is_rejected() {
        let ds = linear(8, 1, 0.1)
            .with_task(
                TaskSpec::categorical("c", ["a", "b"]),
                (0..8).map(|i| (i, Label::Class(i % 2))).collect(),
            )
            .unwrap();
        let f = train_forest(&ds, &["c"], &ForestParams::default()).unwrap();
        assert!(matches!(jackknife_variance(&f, "c", &[0.1]), Err(Error::TaskKind { .. })));
    }
}
