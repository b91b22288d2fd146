//! Classification tasks derived from several real-valued tasks.
//!
//! The class of a composite task is the index of the selected source task,
//! so the vocabulary is the source task names in declared order. Ties go
//! to the earliest declared task.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label, TaskSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositeRule {
    /// The source with the smallest value, e.g. the step with the lowest
    /// activation energy.
    ArgMin,
    ArgMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeTaskSpec {
    pub name: String,
    pub source_tasks: Vec<String>,
    pub rule: CompositeRule,
}

impl CompositeTaskSpec {
    pub fn new(name: impl Into<String>, sources: &[&str], rule: CompositeRule) -> Self {
        Self {
            name: name.into(),
            source_tasks: sources.iter().map(|s| s.to_string()).collect(),
            rule,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_tasks.len() < 2 {
            return Err(Error::InvalidParam(format!(
                "composite {:?} needs at least two source tasks",
                self.name
            )));
        }
        for (i, t) in self.source_tasks.iter().enumerate() {
            if self.source_tasks[..i].contains(t) {
                return Err(Error::InvalidParam(format!(
                    "composite {:?} lists {t:?} twice",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn classes(&self) -> &[String] {
        &self.source_tasks
    }

    /// The composite as a categorical task schema.
    pub fn task_spec(&self) -> TaskSpec {
        TaskSpec::categorical(self.name.clone(), self.source_tasks.iter().cloned())
    }

    /// Applies the rule to values listed in source order.
    pub fn select(&self, values: &[f64]) -> usize {
        let mut best = 0;
        for (i, &v) in values.iter().enumerate().skip(1) {
            let better = match self.rule {
                CompositeRule::ArgMin => v < values[best],
                CompositeRule::ArgMax => v > values[best],
            };
            if better {
                best = i;
            }
        }
        best
    }
}

/// Class index (into the source tasks) selected from per-task predictions.
pub fn classify_composite(spec: &CompositeTaskSpec, predictions: &BTreeMap<String, f64>) -> Result<usize> {
    spec.validate()?;
    let mut values = Vec::with_capacity(spec.source_tasks.len());
    for t in &spec.source_tasks {
        let v = *predictions
            .get(t)
            .ok_or_else(|| Error::MissingPrediction(t.clone()))?;
        if !v.is_finite() {
            return Err(Error::InvalidParam(format!("prediction for {t:?} is not finite")));
        }
        values.push(v);
    }
    Ok(spec.select(&values))
}

/// The rule applied to observed labels, for rows carrying every source label.
pub fn composite_ground_truth(ds: &Dataset, spec: &CompositeTaskSpec) -> Result<BTreeMap<usize, usize>> {
    spec.validate()?;
    let mut idx = Vec::with_capacity(spec.source_tasks.len());
    for t in &spec.source_tasks {
        let i = ds.task_index(t)?;
        if !ds.tasks()[i].is_real() {
            return Err(Error::TaskKind {
                task: t.clone(),
                expected: "real-valued for a composite task",
            });
        }
        idx.push(i);
    }
    let mut out = BTreeMap::new();
    'rows: for &row in ds.labels(idx[0]).keys() {
        let mut values = Vec::with_capacity(idx.len());
        for &t in &idx {
            match ds.label(row, t).and_then(Label::as_real) {
                Some(v) => values.push(v),
                None => continue 'rows,
            }
        }
        out.insert(row, spec.select(&values));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::{prop, prop_assert_eq, proptest};

    use super::*;

    fn rds() -> CompositeTaskSpec {
        CompositeTaskSpec::new("rds", &["s1", "s2", "s3"], CompositeRule::ArgMin)
    }

    fn preds(v: &[(&str, f64)]) -> BTreeMap<String, f64> {
        v.iter().map(|(k, x)| (k.to_string(), *x)).collect()
    }

    #[test]
    fn strict_minimum() {
        let p = preds(&[("s1", 0.5), ("s2", 0.3), ("s3", 0.9)]);
        assert_eq!(classify_composite(&rds(), &p).unwrap(), 1);
        let max = CompositeTaskSpec {
            rule: CompositeRule::ArgMax,
            ..rds()
        };
        assert_eq!(classify_composite(&max, &p).unwrap(), 2);
    }

    #[test]
    fn ties_go_to_the_first_declared() {
        let spec = CompositeTaskSpec::new("rds", &["s1", "s2"], CompositeRule::ArgMin);
        assert_eq!(classify_composite(&spec, &preds(&[("s1", 0.3), ("s2", 0.3)])).unwrap(), 0);
    }

    #[test]
    fn missing_source_is_named() {
        match classify_composite(&rds(), &preds(&[("s1", 0.3), ("s2", 0.3)])) {
            Err(Error::MissingPrediction(t)) => assert_eq!(t, "s3"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn needs_two_distinct_sources() {
        let one = CompositeTaskSpec::new("x", &["a"], CompositeRule::ArgMin);
        assert!(one.validate().is_err());
        let dup = CompositeTaskSpec::new("x", &["a", "a"], CompositeRule::ArgMin);
        assert!(dup.validate().is_err());
        assert_eq!(rds().task_spec().classes(), rds().classes());
    }

    fn energies() -> Dataset {
        let labels = |v: &[(usize, f64)]| v.iter().map(|&(r, x)| (r, Label::Real(x))).collect();
        Dataset::new(
            vec!["a".into(), "b".into()],
            vec!["x".into()],
            vec![0.0, 1.0],
            vec![TaskSpec::real("s1"), TaskSpec::real("s2"), TaskSpec::real("s3")],
            vec![
                labels(&[(0, 0.5), (1, 0.1)]),
                labels(&[(0, 0.3), (1, 0.2)]),
                labels(&[(0, 0.9)]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn ground_truth_needs_every_source() {
        let truth = composite_ground_truth(&energies(), &rds()).unwrap();
        assert_eq!(truth, BTreeMap::from([(0, 1)]));
    }

    #[test]
    fn ground_truth_rejects_categorical_sources() {
        let ds = crate::dataset::tests::toy();
        let spec = CompositeTaskSpec::new("c", &["gap", "color"], CompositeRule::ArgMin);
        assert!(matches!(composite_ground_truth(&ds, &spec), Err(Error::TaskKind { .. })));
    }

    proptest! {
        #[test]
        fn increasing_transforms_keep_the_class(
            v in prop::collection::vec(-5.0f64..5.0, 3),
            shift in -100.0f64..100.0,
            scale in 0.01f64..50.0,
        ) {
            let spec = rds();
            let base = classify_composite(&spec, &preds(&[("s1", v[0]), ("s2", v[1]), ("s3", v[2])])).unwrap();
            let exp = [v[0].exp(), v[1].exp(), v[2].exp()];
            let moved = [v[0] * scale + shift, v[1] * scale + shift, v[2] * scale + shift];
            // rounding can merge close values, which turns an order into a tie
            for m in [exp, moved] {
                if m[0] != m[1] && m[1] != m[2] && m[0] != m[2] {
                    let p = preds(&[("s1", m[0]), ("s2", m[1]), ("s3", m[2])]);
                    prop_assert_eq!(classify_composite(&spec, &p).unwrap(), base);
                }
            }
        }
    }
}
