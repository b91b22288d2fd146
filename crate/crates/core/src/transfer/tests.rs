use std::collections::BTreeMap;

use rand::Rng as _;

use super::train::latent_feature;
use super::*;
use crate::dataset::{Dataset, Label, TaskSpec};
use crate::forest::{train_forest, Node, TreeCount};

/// Reference labels on a repeated integer grid, target labels on a few rows.
fn offset_dataset(op: DifferenceOp) -> (Dataset, Vec<usize>) {
    let mut ids = Vec::new();
    let mut x = Vec::new();
    let mut reference = BTreeMap::new();
    let mut target = BTreeMap::new();
    let step = |v: f64| if v < 4.0 { 1.0 } else if v < 7.0 { 2.5 } else { -0.75 };
    for rep in 0..20 {
        for g in 0..10 {
            let row = ids.len();
            ids.push(format!("g{g}r{rep}"));
            x.push(g as f64);
            reference.insert(row, Label::Real(step(g as f64)));
            if rep == 0 && g % 3 != 1 {
                let y = match op {
                    DifferenceOp::Subtract => step(g as f64) + 0.5,
                    DifferenceOp::Divide => step(g as f64) * 1.5,
                };
                target.insert(row, Label::Real(y));
            }
        }
    }
    let held_out: Vec<usize> = (0..10).filter(|g| g % 3 == 1).collect();
    let ds = Dataset::new(
        ids,
        vec!["x".into()],
        x,
        vec![TaskSpec::real("ref"), TaskSpec::real("target")],
        vec![reference, target],
    )
    .unwrap();
    (ds, held_out)
}

fn params() -> TrainingParams {
    TrainingParams::new(ForestParams::default().with_seed(9))
}

fn real(p: &BTreeMap<String, TaskPrediction>, task: &str) -> f64 {
    p[task].mean().unwrap()
}

#[test]
fn spec_json_round_trip_and_version() {
    let spec = ArchitectureSpec::bundle(vec![
        ArchitectureSpec::difference("t", "r", DifferenceOp::Divide),
        ArchitectureSpec::latent(vec![
            LatentStage::new("a", &[]).pretrained("dft"),
            LatentStage::new("b", &["a"]).observed(true),
        ]),
        ArchitectureSpec::multi(&["a", "b"]),
    ]);
    let text = spec.to_json().unwrap();
    assert_eq!(ArchitectureSpec::from_json(&text).unwrap(), spec);
    let bumped = text.replacen("\"version\": 1", "\"version\": 2", 1);
    assert!(matches!(ArchitectureSpec::from_json(&bumped), Err(Error::Format(_))));

    let parsed = ArchitectureSpec::from_json(
        r#"{"version":1,"architecture":{"variant":"latent_variable","stages":[{"task":"gap"},{"task":"color","latent_inputs":["gap"]}]}}"#,
    )
    .unwrap();
    assert_eq!(
        parsed,
        ArchitectureSpec::latent(vec![LatentStage::new("gap", &[]), LatentStage::new("color", &["gap"])])
    );
}

#[test]
fn structural_validation() {
    let cyclic = ArchitectureSpec::latent(vec![LatentStage::new("a", &["b"]), LatentStage::new("b", &["a"])]);
    assert!(matches!(cyclic.validate(), Err(Error::Architecture(_))));
    let self_loop = ArchitectureSpec::latent(vec![LatentStage::new("a", &["a"])]);
    assert!(self_loop.validate().is_err());
    assert!(ArchitectureSpec::difference("a", "a", DifferenceOp::Subtract).validate().is_err());
    assert!(ArchitectureSpec::multi(&[]).validate().is_err());
    assert!(ArchitectureSpec::bundle(vec![]).validate().is_err());
}

#[test]
fn difference_rejects_categorical_and_unknown_tasks() {
    let ds = crate::dataset::tests::toy();
    let spec = ArchitectureSpec::difference("color", "gap", DifferenceOp::Subtract);
    assert!(matches!(
        train_architecture(&spec, &ds, &params(), &PretrainedStore::new()),
        Err(Error::TaskKind { .. })
    ));
    let spec = ArchitectureSpec::single("nope");
    assert!(matches!(
        train_architecture(&spec, &ds, &params(), &PretrainedStore::new()),
        Err(Error::UnknownTask(_))
    ));
}

#[test]
fn subtract_offset_is_recovered_exactly() {
    let (ds, held_out) = offset_dataset(DifferenceOp::Subtract);
    let spec = ArchitectureSpec::difference("target", "ref", DifferenceOp::Subtract);
    let ta = train_architecture(&spec, &ds, &params(), &PretrainedStore::new()).unwrap();
    for g in held_out {
        let p = ta.predict(&[g as f64], false).unwrap();
        assert_eq!(real(&p, "target"), real(&p, "ref") + 0.5);
        assert_eq!(real(&p, "target") - 0.5, ds.label(g, 0).unwrap().as_real().unwrap());
    }
}

#[test]
fn divide_ratio_is_recovered_exactly() {
    let (ds, held_out) = offset_dataset(DifferenceOp::Divide);
    let spec = ArchitectureSpec::difference("target", "ref", DifferenceOp::Divide);
    let ta = train_architecture(&spec, &ds, &params(), &PretrainedStore::new()).unwrap();
    for g in held_out {
        let p = ta.predict(&[g as f64], false).unwrap();
        let y_ref = ds.label(g, 0).unwrap().as_real().unwrap();
        assert_eq!(real(&p, "target"), y_ref * 1.5);
    }
}

#[test]
fn divide_guards_near_zero_reference() {
    let (ds, _) = offset_dataset(DifferenceOp::Divide);
    let mut labels = ds.labels(0).clone();
    labels.insert(0, Label::Real(0.0));
    let ds = ds.with_task(TaskSpec::real("ref"), labels).unwrap();
    let spec = ArchitectureSpec::difference("target", "ref", DifferenceOp::Divide);
    match train_architecture(&spec, &ds, &params(), &PretrainedStore::new()) {
        Err(Error::NearZeroReference { row_id, .. }) => assert_eq!(row_id, "g0r0"),
        other => panic!("expected near-zero error, got {other:?}"),
    }
}

#[test]
fn difference_needs_shared_rows() {
    let ds = crate::dataset::tests::toy();
    let no_overlap = ds
        .with_task(TaskSpec::real("other"), [(4, Label::Real(1.0)), (5, Label::Real(2.0))].into())
        .unwrap();
    let spec = ArchitectureSpec::difference("other", "gap", DifferenceOp::Subtract);
    assert!(matches!(
        train_architecture(&spec, &no_overlap, &params(), &PretrainedStore::new()),
        Err(Error::Architecture(_))
    ));
}

fn noisy_pair(n: usize, seed: u64) -> Dataset {
    let mut rng = crate::seed::rng(seed);
    let x: Vec<f64> = (0..n * 2).map(|_| rng.random::<f64>()).collect();
    let mut a = BTreeMap::new();
    let mut b = BTreeMap::new();
    for r in 0..n {
        let ya = 3.0 * x[2 * r] + x[2 * r + 1];
        a.insert(r, Label::Real(ya));
        if r % 2 == 0 {
            b.insert(r, Label::Real(ya + 0.2 * x[2 * r] + 0.1 * rng.random::<f64>()));
        }
    }
    Dataset::new(
        (0..n).map(|i| format!("r{i}")).collect(),
        vec!["x1".into(), "x2".into()],
        x,
        vec![TaskSpec::real("a"), TaskSpec::real("b")],
        vec![a, b],
    )
    .unwrap()
}

#[test]
fn composition_is_bit_exact() {
    let ds = noisy_pair(60, 1);
    for op in [DifferenceOp::Subtract, DifferenceOp::Divide] {
        let spec = ArchitectureSpec::difference("b", "a", op);
        let ta = train_architecture(&spec, &ds, &TrainingParams { divide_epsilon: 0.0, ..params() }, &PretrainedStore::new())
            .unwrap();
        let fa = ta.forest("a").unwrap();
        let role = super::spec::delta_role("b", "a", op);
        let fd = ta.forest(&role).unwrap();
        let mut rng = crate::seed::rng(3);
        for _ in 0..25 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let p = ta.predict(&x, false).unwrap();
            let expect = op.compose(fa.predict_real("a", &x).unwrap(), fd.predict_real(&role, &x).unwrap());
            assert_eq!(real(&p, "b").to_bits(), expect.to_bits());
        }
    }
}

#[test]
fn identical_tasks_give_constant_delta() {
    let ds = noisy_pair(40, 2);
    let copy = ds.with_task(TaskSpec::real("b"), ds.labels(0).clone()).unwrap();
    for (op, expect) in [(DifferenceOp::Subtract, 0.0), (DifferenceOp::Divide, 1.0)] {
        let spec = ArchitectureSpec::difference("b", "a", op);
        let ta = train_architecture(&spec, &copy, &params(), &PretrainedStore::new()).unwrap();
        let fd = ta.forest(&super::spec::delta_role("b", "a", op)).unwrap();
        for tree in fd.trees() {
            assert_eq!(tree.nodes().len(), 1);
        }
        let mut rng = crate::seed::rng(4);
        for _ in 0..10 {
            let x = [rng.random::<f64>() * 2.0, rng.random::<f64>() - 0.5];
            assert_eq!(fd.predict_real(&super::spec::delta_role("b", "a", op), &x).unwrap(), expect);
        }
    }
}

fn three_tasks(n: usize, seed: u64) -> Dataset {
    let mut rng = crate::seed::rng(seed);
    let x: Vec<f64> = (0..n * 3).map(|_| rng.random::<f64>()).collect();
    let mut e1 = BTreeMap::new();
    let mut e2 = BTreeMap::new();
    let mut e3 = BTreeMap::new();
    for r in 0..n {
        let v = x[3 * r] + 0.5 * x[3 * r + 1] * x[3 * r + 2];
        e1.insert(r, Label::Real(v));
        if r % 3 == 0 {
            e2.insert(r, Label::Real(0.4 * v + 1.2));
        }
        if r % 3 == 0 && r % 2 == 0 {
            e3.insert(r, Label::Real(1.8 * v - 0.8));
        }
    }
    Dataset::new(
        (0..n).map(|i| format!("r{i}")).collect(),
        vec!["x1".into(), "x2".into(), "x3".into()],
        x,
        vec![TaskSpec::real("e1"), TaskSpec::real("e2"), TaskSpec::real("e3")],
        vec![e1, e2, e3],
    )
    .unwrap()
}

#[test]
fn series_stages_see_all_upstream_latents() {
    let ds = three_tasks(90, 5);
    let spec = ArchitectureSpec::latent(vec![
        LatentStage::new("e1", &[]),
        LatentStage::new("e2", &["e1"]),
        LatentStage::new("e3", &["e1", "e2"]),
    ]);
    let ta = train_architecture(&spec, &ds, &params(), &PretrainedStore::new()).unwrap();
    let d = ds.n_features();
    assert_eq!(ta.forest("e1").unwrap().n_features(), d);
    assert_eq!(ta.forest("e2").unwrap().n_features(), d + 1);
    let f3 = ta.forest("e3").unwrap();
    assert_eq!(f3.n_features(), d + 2);
    assert_eq!(&f3.feature_names()[d..], &[latent_feature("e1"), latent_feature("e2")]);
    // no stage sees a downstream label
    assert_eq!(ta.forest("e1").unwrap().tasks().len(), 1);
    let p = predict_architecture(&ta, ds.row(0)).unwrap();
    assert_eq!(p.len(), 3);
    assert!(p.values().all(|v| matches!(v, TaskPrediction::Real { std_error: Some(s), .. } if *s >= 0.0)));
}

#[test]
fn perturbing_a_parallel_latent_changes_downstream() {
    // b and c depend on x only through a
    let n = 80;
    let mut rng = crate::seed::rng(6);
    let x: Vec<f64> = (0..n * 2).map(|_| rng.random::<f64>()).collect();
    let a: BTreeMap<usize, Label> = (0..n).map(|r| (r, Label::Real(4.0 * x[2 * r]))).collect();
    let b = (0..n).filter(|r| r % 2 == 0).map(|r| (r, Label::Real(if x[2 * r] < 0.5 { 0.0 } else { 1.0 }))).collect();
    let c = (0..n).filter(|r| r % 2 == 1).map(|r| (r, Label::Real(-2.0 * x[2 * r]))).collect();
    let ds = Dataset::new(
        (0..n).map(|i| format!("r{i}")).collect(),
        vec!["x1".into(), "x2".into()],
        x,
        vec![TaskSpec::real("a"), TaskSpec::real("b"), TaskSpec::real("c")],
        vec![a, b, c],
    )
    .unwrap();
    let spec = ArchitectureSpec::latent(vec![
        LatentStage::new("a", &[]),
        LatentStage::new("b", &["a"]),
        LatentStage::new("c", &["a"]),
    ]);
    let ta = train_architecture(&spec, &ds, &params(), &PretrainedStore::new()).unwrap();
    let mut shifted = ta.clone();
    shifted.forest_mut("a").shift_real_task("a", 10.0);
    let probes: Vec<[f64; 2]> = (0..20).map(|i| [i as f64 / 20.0, 0.3]).collect();
    for task in ["b", "c"] {
        let changed = probes
            .iter()
            .filter(|x| {
                real(&ta.predict(*x, false).unwrap(), task) != real(&shifted.predict(*x, false).unwrap(), task)
            })
            .count();
        assert!(changed >= 1, "{task} ignored its latent input");
    }
}

#[test]
fn observed_latents_change_training_inputs_only() {
    let ds = three_tasks(60, 8);
    let modeled = ArchitectureSpec::latent(vec![LatentStage::new("e1", &[]), LatentStage::new("e2", &["e1"])]);
    let observed =
        ArchitectureSpec::latent(vec![LatentStage::new("e1", &[]), LatentStage::new("e2", &["e1"]).observed(true)]);
    let a = train_architecture(&modeled, &ds, &params(), &PretrainedStore::new()).unwrap();
    let b = train_architecture(&observed, &ds, &params(), &PretrainedStore::new()).unwrap();
    assert_eq!(a.forest("e1"), b.forest("e1"));
    assert_ne!(a.forest("e2"), b.forest("e2"));
}

#[test]
fn pretrained_reference_is_reused_verbatim() {
    let (ds, _) = offset_dataset(DifferenceOp::Subtract);
    let standalone = train_forest(&ds, &["ref"], &ForestParams::default().with_trees(TreeCount::Fixed(16)).with_seed(77))
        .unwrap();
    let store = PretrainedStore::new().with("low", standalone.clone());
    let spec = ArchitectureSpec::Difference {
        target_task: "target".into(),
        reference_task: "ref".into(),
        op: DifferenceOp::Subtract,
        reference_model: ModelSource::Pretrained("low".into()),
    };
    let ta = train_architecture(&spec, &ds, &params(), &store).unwrap();
    assert_eq!(ta.forest("ref"), Some(&standalone));
    for g in 0..10 {
        let x = [g as f64 + 0.25];
        let p = ta.predict(&x, false).unwrap();
        assert_eq!(real(&p, "ref").to_bits(), standalone.predict_real("ref", &x).unwrap().to_bits());
    }
    assert!(matches!(
        train_architecture(&spec, &ds, &params(), &PretrainedStore::new()),
        Err(Error::UnknownHandle(_))
    ));

    let latent = ArchitectureSpec::latent(vec![
        LatentStage::new("ref", &[]).pretrained("low"),
        LatentStage::new("target", &["ref"]),
    ]);
    let tl = train_architecture(&latent, &ds, &params(), &store).unwrap();
    assert_eq!(tl.forest("ref"), Some(&standalone));
}

#[test]
fn multi_task_with_one_labelled_task_matches_single_task() {
    let ds = noisy_pair(50, 3)
        .with_task(TaskSpec::real("empty"), BTreeMap::new())
        .unwrap();
    let single = train_architecture(&ArchitectureSpec::single("a"), &ds, &params(), &PretrainedStore::new()).unwrap();
    let multi =
        train_architecture(&ArchitectureSpec::multi(&["a", "empty"]), &ds, &params(), &PretrainedStore::new()).unwrap();
    assert_eq!(multi.provenance().dropped_tasks, vec!["empty".to_string()]);
    let mut rng = crate::seed::rng(10);
    for _ in 0..30 {
        let x = [rng.random::<f64>(), rng.random::<f64>()];
        assert_eq!(
            real(&single.predict(&x, false).unwrap(), "a").to_bits(),
            real(&multi.predict(&x, false).unwrap(), "a").to_bits()
        );
    }
}

fn split_structure(f: &Forest) -> Vec<Vec<Option<(u32, u64)>>> {
    f.trees()
        .iter()
        .map(|t| {
            t.nodes()
                .iter()
                .map(|n| match n {
                    Node::Split { feature, threshold, .. } => Some((*feature, threshold.to_bits())),
                    Node::Leaf(_) => None,
                })
                .collect()
        })
        .collect()
}

#[test]
fn multi_task_is_symmetric_in_declaration_order() {
    let ds = noisy_pair(50, 4);
    let ab = train_architecture(&ArchitectureSpec::multi(&["a", "b"]), &ds, &params(), &PretrainedStore::new()).unwrap();
    let ba = train_architecture(&ArchitectureSpec::multi(&["b", "a"]), &ds, &params(), &PretrainedStore::new()).unwrap();
    assert_eq!(
        split_structure(ab.forest("a+b").unwrap()),
        split_structure(ba.forest("a+b").unwrap())
    );
}

#[test]
fn bundle_parts_are_independent_and_first_wins() {
    let ds = three_tasks(60, 9);
    let spec = ArchitectureSpec::bundle(vec![
        ArchitectureSpec::single("e1"),
        ArchitectureSpec::latent(vec![LatentStage::new("e1", &[]), LatentStage::new("e2", &["e1"])]),
    ]);
    let ta = train_architecture(&spec, &ds, &params(), &PretrainedStore::new()).unwrap();
    assert_eq!(spec.outputs(), vec!["e1".to_string(), "e2".to_string()]);
    let alone = train_architecture(&ArchitectureSpec::single("e1"), &ds, &params(), &PretrainedStore::new()).unwrap();
    assert_eq!(ta.forest("0/e1"), alone.forest("e1"));
    let x = ds.row(3);
    let p = ta.predict(x, false).unwrap();
    assert_eq!(real(&p, "e1"), real(&alone.predict(x, false).unwrap(), "e1"));
    assert!(p.contains_key("e2"));
}

#[test]
fn trained_architecture_round_trip() {
    let ds = three_tasks(45, 11);
    let spec = ArchitectureSpec::bundle(vec![
        ArchitectureSpec::difference("e2", "e1", DifferenceOp::Subtract),
        ArchitectureSpec::latent(vec![LatentStage::new("e1", &[]), LatentStage::new("e3", &["e1"])]),
    ]);
    let ta = train_architecture(&spec, &ds, &params(), &PretrainedStore::new()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("arch.json");
    ta.save(&path).unwrap();
    let back = TrainedArchitecture::load(&path).unwrap();
    assert_eq!(back, ta);
    for r in 0..ds.n_rows() {
        assert_eq!(
            predict_architecture(&back, ds.row(r)).unwrap(),
            predict_architecture(&ta, ds.row(r)).unwrap()
        );
    }
}

#[test]
fn prediction_errors() {
    let ds = noisy_pair(20, 12);
    let ta = train_architecture(&ArchitectureSpec::single("a"), &ds, &params(), &PretrainedStore::new()).unwrap();
    assert!(matches!(
        ta.predict(&[0.1], false),
        Err(Error::DimensionMismatch { expected: 2, got: 1 })
    ));
    let store = PretrainedStore::new().with("wrong", ta.forest("a").unwrap().clone());
    let (offset, _) = offset_dataset(DifferenceOp::Subtract);
    let spec = ArchitectureSpec::Difference {
        target_task: "target".into(),
        reference_task: "ref".into(),
        op: DifferenceOp::Subtract,
        reference_model: ModelSource::Pretrained("wrong".into()),
    };
    assert!(train_architecture(&spec, &offset, &params(), &store).is_err());
}

#[test]
fn classification_stage_uses_class_index_as_latent() {
    let ds = crate::dataset::tests::toy();
    let spec = ArchitectureSpec::latent(vec![LatentStage::new("color", &[]), LatentStage::new("gap", &["color"])]);
    let ta = train_architecture(&spec, &ds, &params(), &PretrainedStore::new()).unwrap();
    let p = ta.predict(ds.row(0), true).unwrap();
    let TaskPrediction::Class { probabilities, label, class } = &p["color"] else {
        panic!("color should be categorical");
    };
    assert!((probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(label, &ds.tasks()[1].classes()[*class]);
    assert!(p["gap"].mean().is_some());
}
