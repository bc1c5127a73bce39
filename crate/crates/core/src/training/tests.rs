use super::*;
use crate::dataset::{make_scene_record, QueryConfig};
use crate::model::{ModelConfig, RangeUdf};
use crate::scenes::{build_scene, random_scene_spec};

fn toy_scene(seed: u64) -> PreparedScene {
    let mesh = build_scene(&random_scene_spec(seed, 4, 4)).unwrap();
    let cfg = QueryConfig {
        n_on: 300,
        n_off: 1500,
        seed,
        ..QueryConfig::default()
    };
    let record = make_scene_record(&mesh, 256, &cfg, "toy").unwrap();
    PreparedScene::new(&record, &ModelConfig::default(), 1.0).unwrap()
}

fn small_train(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_scenes: 2,
        queries_per_scene: 256,
        surface_points: 256,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let scene = toy_scene(1);
    let model = RangeUdf::new(ModelConfig::default(), 0).unwrap();
    let before = model.params().clone();
    let mut t = Trainer::new(
        model,
        TrainConfig {
            lr: 0.0,
            ..small_train(0)
        },
    )
    .unwrap();
    let stats = t.step(&[&scene]).unwrap();
    assert!(stats.total.is_finite() && stats.l1 > 0.0);
    for (a, b) in before.iter().zip(t.model().params().iter()) {
        assert_eq!(a.value, b.value);
    }
}

#[test]
fn loss_decreases_and_is_reproducible() {
    let scene = toy_scene(2);
    let run = || {
        let mut t = Trainer::new(RangeUdf::new(ModelConfig::default(), 3).unwrap(), small_train(4)).unwrap();
        (0..100).map(|_| t.step(&[&scene]).unwrap().total).collect::<Vec<_>>()
    };
    let a = run();
    assert!(a[99] < a[0], "first {} last {}", a[0], a[99]);
    let b = run();
    assert_eq!(a, b);
}

#[test]
fn zero_epochs_returns_fresh_model() {
    let scene = toy_scene(3);
    let model = RangeUdf::new(ModelConfig::default(), 5).unwrap();
    let params = model.params().clone();
    let ckpt = fit(
        model,
        &[scene],
        TrainConfig {
            epochs: 0,
            ..small_train(0)
        },
        |_, _| Ok(()),
    )
    .unwrap();
    assert!(ckpt.params == params);
    assert_eq!((ckpt.epoch, ckpt.step), (0, 0));
}

#[test]
fn capped_epoch_stops_early() {
    let scenes: Vec<_> = (10..15).map(toy_scene).collect();
    let mut t = Trainer::new(RangeUdf::new(ModelConfig::default(), 1).unwrap(), small_train(2)).unwrap();
    let stats = t.epoch_capped(&scenes, 2).unwrap();
    assert_eq!((stats.steps, t.steps_taken(), t.epochs_done()), (2, 2, 1));
    assert_eq!(t.epoch(&scenes).unwrap().steps, 3);
    assert!(t.epoch_capped(&scenes, 0).is_err());
}

#[test]
fn unlabeled_training_leaves_semantic_weighting_alone() {
    let mesh = build_scene(&random_scene_spec(4, 4, 4)).unwrap();
    let cfg = QueryConfig {
        n_on: 100,
        n_off: 400,
        seed: 4,
        ..QueryConfig::default()
    };
    let record = make_scene_record(&mesh, 128, &cfg, "toy").unwrap();
    let scene = PreparedScene::new(&record, &ModelConfig::default(), 0.0).unwrap();
    let mut t = Trainer::new(RangeUdf::new(ModelConfig::default(), 0).unwrap(), small_train(0)).unwrap();
    for _ in 0..3 {
        let s = t.step(&[&scene]).unwrap();
        assert!(s.ce.is_none());
        assert_eq!(s.s2, 0.0);
        assert!((s.total - ((-s.s1).exp() * s.l1 + s.s1)).abs() < 1e-2);
    }
}

#[test]
fn checkpoint_roundtrip_and_corruption() {
    let scene = toy_scene(5);
    let mut t = Trainer::new(RangeUdf::new(ModelConfig::default(), 6).unwrap(), small_train(7)).unwrap();
    for _ in 0..3 {
        t.step(&[&scene]).unwrap();
    }
    let ckpt = t.checkpoint();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ruck");
    save_checkpoint(&ckpt, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert!(back == ckpt, "checkpoint changed across save/load");

    let a = ckpt.model().unwrap();
    let b = back.model().unwrap();
    let fa = a.features(&scene.cloud, 0).unwrap();
    let fb = b.features(&scene.cloud, 0).unwrap();
    let queries = &scene.queries[..100];
    let pa = a.predict(&fa, queries).unwrap();
    let pb = b.predict(&fb, queries).unwrap();
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&pa.distances), bits(&pb.distances));
    assert_eq!(bits(pa.logits.data()), bits(pb.logits.data()));

    // resuming continues the same trajectory
    let mut resumed = Trainer::from_checkpoint(back).unwrap();
    assert_eq!(
        resumed.step(&[&scene]).unwrap(),
        t.step(&[&scene]).unwrap()
    );

    let good = std::fs::read(&path).unwrap();
    std::fs::write(&path, &good[..good.len() / 2]).unwrap();
    assert!(load_checkpoint(&path).unwrap_err().is_io());
    let mut bad = good.clone();
    bad[4] = 9;
    std::fs::write(&path, &bad).unwrap();
    let err = load_checkpoint(&path).unwrap_err().to_string();
    assert!(err.contains("version 9") && err.contains("expected 1"), "{err}");
}
