//! Node impurity measures and the multi-task split criterion.

/// Population variance; 0 for empty or singleton input.
pub fn variance_impurity(labels: &[f64]) -> f64 {
    if labels.len() < 2 {
        return 0.0;
    }
    let n = labels.len() as f64;
    let mean = labels.iter().sum::<f64>() / n;
    labels.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// `1 - sum_c p_c^2`; 0 for empty input.
pub fn gini_impurity(labels: &[usize], k: usize) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let mut counts = vec![0usize; k];
    for &c in labels {
        counts[c] += 1;
    }
    let n = labels.len() as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Labels of one task indexed by row; `None` where the row has no label.
#[derive(Debug, Clone, Copy)]
pub enum TaskLabels<'a> {
    Real(&'a [Option<f64>]),
    Class { labels: &'a [Option<usize>], k: usize },
}

/// Label-count-weighted impurity of one task over a set of rows:
/// `n_t * impurity_t`, counting only rows that carry the task's label.
pub fn task_node_impurity(rows: &[usize], labels: TaskLabels<'_>) -> f64 {
    match labels {
        TaskLabels::Real(vals) => {
            let present: Vec<f64> = rows.iter().filter_map(|&r| vals[r]).collect();
            present.len() as f64 * variance_impurity(&present)
        }
        TaskLabels::Class { labels, k } => {
            let present: Vec<usize> = rows.iter().filter_map(|&r| labels[r]).collect();
            present.len() as f64 * gini_impurity(&present, k)
        }
    }
}

/// Multi-task criterion for splitting a node into `left` and `right` (lower is
/// better).
///
/// For each task, the impurity of each child over the labels present in it is
/// weighted by that child's label count; the per-task sums are multiplied by
/// the task weight and added. Rows without a task's label contribute nothing to
/// that task's term.
pub fn multitask_split_score(
    left: &[usize],
    right: &[usize],
    tasks: &[TaskLabels<'_>],
    task_weights: &[f64],
) -> f64 {
    tasks
        .iter()
        .zip(task_weights)
        .map(|(&t, &w)| w * (task_node_impurity(left, t) + task_node_impurity(right, t)))
        .sum()
}

/// The unsplit counterpart of [`multitask_split_score`].
pub fn multitask_node_impurity(rows: &[usize], tasks: &[TaskLabels<'_>], task_weights: &[f64]) -> f64 {
    tasks
        .iter()
        .zip(task_weights)
        .map(|(&t, &w)| w * task_node_impurity(rows, t))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_cases() {
        assert_eq!(variance_impurity(&[1.0, 1.0, 1.0]), 0.0);
        assert_eq!(variance_impurity(&[0.0, 2.0]), 1.0);
        assert_eq!(variance_impurity(&[]), 0.0);
        assert_eq!(variance_impurity(&[4.2]), 0.0);
    }

    #[test]
    fn gini_cases() {
        assert_eq!(gini_impurity(&[0, 0, 1, 1], 2), 0.5);
        assert_eq!(gini_impurity(&[0, 0, 0], 2), 0.0);
        assert!((gini_impurity(&[0, 0, 1, 2], 3) - 0.625).abs() < 1e-15);
        assert_eq!(gini_impurity(&[], 3), 0.0);
    }

    #[test]
    fn perfect_split_beats_mixed() {
        let y = [Some(0.0), Some(0.0), Some(4.0), Some(4.0)];
        let t = [TaskLabels::Real(&y)];
        let perfect = multitask_split_score(&[0, 1], &[2, 3], &t, &[1.0]);
        let mixed = multitask_split_score(&[0, 2], &[1, 3], &t, &[1.0]);
        assert_eq!(perfect, 0.0);
        assert!(mixed > perfect);
    }

    #[test]
    fn sparse_two_task_score_by_hand() {
        // Real labels on rows 0-3, class labels on rows 2-5; split {0,1,2} | {3,4,5}.
        let real = [Some(1.0), Some(3.0), Some(5.0), Some(7.0), None, None];
        let class = [None, None, Some(0), Some(1), Some(1), Some(1)];
        let tasks = [
            TaskLabels::Real(&real),
            TaskLabels::Class { labels: &class, k: 2 },
        ];
        let left = [0, 1, 2];
        let right = [3, 4, 5];
        // real: left {1,3,5} var 8/3, n=3 -> 8; right {7} -> 0.
        // class: left {0} -> 0; right {1,1,1} -> 0.
        let s = multitask_split_score(&left, &right, &tasks, &[1.0, 1.0]);
        assert!((s - 8.0).abs() < 1e-12);

        // split {0,1,2,3} | {4,5}: real {1,3,5,7} var 5, n=4 -> 20;
        // class left {0,1} gini .5, n=2 -> 1; right {1,1} -> 0. Total 21.
        let s2 = multitask_split_score(&[0, 1, 2, 3], &[4, 5], &tasks, &[1.0, 1.0]);
        assert!((s2 - 21.0).abs() < 1e-12);

        // zero weight on the classification task recovers the real-only score
        let only_real = multitask_split_score(&[0, 1, 2, 3], &[4, 5], &tasks[..1], &[1.0]);
        let zeroed = multitask_split_score(&[0, 1, 2, 3], &[4, 5], &tasks, &[1.0, 0.0]);
        assert_eq!(only_real, zeroed);
        assert!((zeroed - 20.0).abs() < 1e-12);
    }
}
