//! Procedural toy-scene training runs shared by the end-to-end criteria.

use std::time::Instant;

use rayon::prelude::*;

use rangeudf::dataset::{make_scene_record, QueryConfig, SceneRecord};
use rangeudf::extraction::{extract_dense_points, label_points, DenseConfig, ModelField};
use rangeudf::geom::sample_surface;
use rangeudf::metrics::{seg_metrics, ReconstructionReport, SegmentationReport, DEFAULT_DELTA};
use rangeudf::model::{ModelConfig, RangeInput, RangeUdf};
use rangeudf::scenes::{build_scene, random_scene_spec};
use rangeudf::training::{PreparedScene, TrainConfig, Trainer};

pub const TRAIN_SCENES: u64 = 32;
pub const TEST_SCENES: u64 = 8;
pub const CLOUD_POINTS: usize = 4096;
pub const DENSITY: usize = 8;
pub const EPOCHS: usize = 200;
pub const WARMUP_STEPS: usize = 200;
pub const QUERIES_PER_STEP: usize = 1024;
pub const DENSE_POINTS: usize = 60_000;
pub const GT_POINTS: usize = 100_000;

pub struct ToyEval {
    pub reports: Vec<ReconstructionReport>,
    pub segmentation: Vec<SegmentationReport>,
}

impl ToyEval {
    pub fn mean_cd_l1(&self) -> f64 {
        self.reports.iter().map(|r| r.cd_l1).sum::<f64>() / self.reports.len() as f64
    }

    pub fn mean_fs_delta(&self) -> f64 {
        self.reports.iter().map(|r| r.fs_delta).sum::<f64>() / self.reports.len() as f64
    }

    pub fn mean_miou(&self) -> f64 {
        self.segmentation.iter().map(|r| r.miou).sum::<f64>() / self.segmentation.len() as f64
    }
}

pub struct ToyRuns {
    pub full_eval: ToyEval,
    pub ablated_eval: ToyEval,
    pub sparse_eval: ToyEval,
    pub full_train_s: f64,
    pub ablated_train_s: f64,
    pub sparse_train_s: f64,
}

pub fn scene(seed: u64, queries: &QueryConfig) -> anyhow::Result<SceneRecord> {
    let spec = random_scene_spec(seed, 3 + (seed % 4) as usize, DENSITY);
    let mesh = build_scene(&spec)?;
    let cfg = QueryConfig {
        seed,
        ..queries.clone()
    };
    Ok(make_scene_record(&mesh, CLOUD_POINTS, &cfg, &format!("toy-{seed}"))?)
}

pub fn query_config() -> QueryConfig {
    QueryConfig {
        n_on: 2000,
        n_off: 16_000,
        ..QueryConfig::default()
    }
}

pub fn train(
    scenes: &[SceneRecord],
    range_input: RangeInput,
    label_fraction: f64,
) -> anyhow::Result<(RangeUdf<f32>, f64)> {
    let start = Instant::now();
    let config = ModelConfig {
        range_input,
        ..ModelConfig::default()
    };
    let prepared: Vec<PreparedScene> = scenes
        .par_iter()
        .map(|r| PreparedScene::new(r, &config, label_fraction))
        .collect::<Result<_, _>>()?;
    let train = TrainConfig {
        queries_per_scene: QUERIES_PER_STEP,
        surface_points: CLOUD_POINTS,
        epochs: EPOCHS,
        warmup_steps: WARMUP_STEPS,
        label_fraction,
        seed: 7,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(RangeUdf::new(config, 7)?, train)?;
    for _ in 0..EPOCHS {
        let stats = trainer.epoch(&prepared)?;
        if stats.epoch % 20 == 0 {
            eprintln!(
                "  {range_input:?} labels {label_fraction}: epoch {} l1 {:.5} ce {:.4}",
                stats.epoch,
                stats.l1,
                stats.ce.unwrap_or(f64::NAN)
            );
        }
    }
    Ok((trainer.model().clone(), start.elapsed().as_secs_f64()))
}

pub fn evaluate(model: &RangeUdf<f32>, scenes: &[SceneRecord], reconstruct: bool) -> anyhow::Result<ToyEval> {
    let mut out = ToyEval {
        reports: Vec::new(),
        segmentation: Vec::new(),
    };
    for (i, record) in scenes.iter().enumerate() {
        let fc = model.features(&record.cloud, record.hierarchy_seed)?;
        let surface: Vec<[f32; 3]> = record.queries.on_surface.iter().map(|s| s.position).collect();
        let truth: Vec<u32> = record.queries.on_surface.iter().map(|s| s.label).collect();
        let labels = label_points(model, &fc, &surface)?;
        out.segmentation.push(seg_metrics(&labels, &truth, model.config().classes)?);
        if reconstruct {
            let field = ModelField::new(model, &fc);
            let dense = extract_dense_points(
                &field,
                DENSE_POINTS,
                &DenseConfig {
                    batch: 32_768,
                    seed: i as u64,
                    ..DenseConfig::default()
                },
            )?;
            let mesh = record.mesh.as_ref().expect("toy scenes keep their mesh");
            let gt = sample_surface(mesh, GT_POINTS, 77 + i as u64)?;
            out.reports.push(ReconstructionReport::compute(&dense.positions, &gt.positions, DEFAULT_DELTA)?);
        }
    }
    Ok(out)
}

pub fn run() -> anyhow::Result<ToyRuns> {
    let queries = query_config();
    let train_set: Vec<SceneRecord> = (0..TRAIN_SCENES)
        .into_par_iter()
        .map(|s| scene(100 + s, &queries))
        .collect::<anyhow::Result<_>>()?;
    let test_set: Vec<SceneRecord> = (0..TEST_SCENES)
        .into_par_iter()
        .map(|s| scene(10_000 + s, &queries))
        .collect::<anyhow::Result<_>>()?;
    let (full, full_train_s) = train(&train_set, RangeInput::Full, 1.0)?;
    let full_eval = evaluate(&full, &test_set, true)?;
    let (ablated, ablated_train_s) = train(&train_set, RangeInput::WithoutRelative, 1.0)?;
    let ablated_eval = evaluate(&ablated, &test_set, true)?;
    let (sparse, sparse_train_s) = train(&train_set, RangeInput::Full, 0.01)?;
    let sparse_eval = evaluate(&sparse, &test_set, false)?;
    Ok(ToyRuns {
        full_eval,
        ablated_eval,
        sparse_eval,
        full_train_s,
        ablated_train_s,
        sparse_train_s,
    })
}

pub fn ensure(slot: &mut Option<ToyRuns>) -> anyhow::Result<&ToyRuns> {
    if slot.is_none() {
        *slot = Some(run()?);
    }
    Ok(slot.as_ref().unwrap())
}
