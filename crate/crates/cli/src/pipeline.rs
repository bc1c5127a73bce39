use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;

use rangeudf::dataset::{generate_query_set, read_query_set, scene_record_from, QueryConfig, SceneRecord};
use rangeudf::extraction::{extract_dense_points, label_points, DensePoints, ModelField};
use rangeudf::geom::{load_mesh, normalize_unit_cube, sample_surface, vec3, TriangleMesh};
use rangeudf::metrics::{seg_metrics, ReconstructionReport, SegmentationReport};
use rangeudf::model::{ModelConfig, RangeUdf};
use rangeudf::training::{Checkpoint, EpochStats, PreparedScene, TrainConfig, Trainer};
use rangeudf::{Error, Result};

use crate::config::RunConfig;

/// Mesh files (`.ply`, `.obj`) directly inside `dir`, sorted by name.
pub fn mesh_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if path.is_file() && (ext.eq_ignore_ascii_case("ply") || ext.eq_ignore_ascii_case("obj")) {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::EmptySet(format!("no .ply or .obj meshes in {}", dir.display())));
    }
    Ok(out)
}

/// The normalized mesh plus its query set: read from a sibling `.ruqs` when
/// one exists, generated otherwise with the seed offset by `index`.
pub fn load_scene(path: &Path, index: usize, config: &RunConfig) -> Result<SceneRecord> {
    let (mesh, _) = normalize_unit_cube(&load_mesh(path)?)?;
    let sidecar = path.with_extension("ruqs");
    let source = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scene").to_string();
    let queries = if sidecar.exists() {
        read_query_set(&sidecar)?
    } else {
        let cfg = QueryConfig {
            seed: config.queries.seed.wrapping_add(index as u64),
            ..config.queries.clone()
        };
        generate_query_set(&mesh, &cfg, &source)?
    };
    scene_record_from(&mesh, queries, config.train.surface_points)
}

pub fn load_scenes(dir: &Path, config: &RunConfig) -> Result<Vec<SceneRecord>> {
    let files = mesh_files(dir)?;
    info!("loading {} scenes from {}", files.len(), dir.display());
    files.iter().enumerate().map(|(i, p)| load_scene(p, i, config)).collect()
}

/// One CSV row per epoch: `epoch,steps,total,l1,ce,s1,s2`.
pub struct LossLog {
    out: Option<(PathBuf, std::io::BufWriter<std::fs::File>)>,
}

impl LossLog {
    pub fn create(path: Option<&Path>) -> Result<Self> {
        let out = match path {
            None => None,
            Some(p) => {
                let f = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
                let mut w = std::io::BufWriter::new(f);
                writeln!(w, "epoch,steps,total,l1,ce,s1,s2").map_err(|e| Error::io(p, e))?;
                Some((p.to_path_buf(), w))
            }
        };
        Ok(LossLog { out })
    }

    fn record(&mut self, stats: &EpochStats, trainer: &Trainer) -> Result<()> {
        let model = trainer.model();
        let (i1, i2) = model.uncertainty_indices();
        let s1 = model.params().get(i1).value.data()[0];
        let s2 = model.params().get(i2).value.data()[0];
        let ce = stats.ce.map(|c| c.to_string()).unwrap_or_default();
        info!(
            "epoch {} steps {} loss {:.6} l1 {:.6} ce {}",
            stats.epoch, trainer.steps_taken(), stats.total, stats.l1, ce
        );
        if let Some((p, w)) = &mut self.out {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                stats.epoch, stats.steps, stats.total, stats.l1, ce, s1, s2
            )
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(p.as_path(), e))?;
        }
        Ok(())
    }
}

/// Trains on the records. With `max_steps` the run stops after that many
/// optimizer steps however many epochs it takes; otherwise it runs
/// `train.epochs` full epochs.
pub fn train(
    records: &[SceneRecord],
    model_config: &ModelConfig,
    train: &TrainConfig,
    max_steps: Option<u64>,
    log: &mut LossLog,
) -> Result<Checkpoint> {
    let scenes: Vec<PreparedScene> = records
        .iter()
        .map(|r| PreparedScene::new(r, model_config, train.label_fraction))
        .collect::<Result<_>>()?;
    if scenes.is_empty() {
        return Err(Error::EmptySet("training on an empty dataset".into()));
    }
    let per_epoch = scenes.len().div_ceil(train.batch_scenes) as u64;
    let mut trainer = Trainer::new(RangeUdf::new(model_config.clone(), train.seed)?, train.clone())?;
    match max_steps {
        Some(total) => {
            while trainer.steps_taken() < total {
                let cap = (total - trainer.steps_taken()).min(per_epoch);
                let stats = trainer.epoch_capped(&scenes, cap as usize)?;
                log.record(&stats, &trainer)?;
            }
        }
        None => {
            for _ in 0..train.epochs {
                let stats = trainer.epoch(&scenes)?;
                log.record(&stats, &trainer)?;
            }
        }
    }
    Ok(trainer.checkpoint())
}

pub fn dense_points(model: &RangeUdf<f32>, cloud: &[[f32; 3]], seed: u64, config: &RunConfig) -> Result<DensePoints> {
    let fc = model.features(cloud, seed)?;
    let field = ModelField::new(model, &fc);
    let mut points = extract_dense_points(&field, config.extract.n_min, &config.dense)?;
    if model.config().classes >= 2 {
        points.labels = Some(label_points(model, &fc, &points.positions_f32())?);
    }
    Ok(points)
}

pub fn surface_truth(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<(Vec<vec3::Vec3>, Vec<u32>)> {
    let s = sample_surface(mesh, n, seed)?;
    Ok((s.positions, s.labels))
}

/// Label of the nearest ground-truth point for every predicted point.
pub fn transfer_labels(pred: &[vec3::Vec3], gt: &[vec3::Vec3], gt_labels: &[u32]) -> Result<Vec<u32>> {
    use rayon::prelude::*;
    let tree = rangeudf::pointnet::KdTree::new(gt.to_vec());
    pred.par_iter()
        .map(|&p| Ok(gt_labels[tree.nearest(p)?.0 as usize]))
        .collect()
}

/// Scores of one trained model on one held-out scene.
#[derive(Debug, Clone)]
pub struct SceneScores {
    pub reconstruction: ReconstructionReport,
    pub segmentation: Option<SegmentationReport>,
}

pub fn score_scene(model: &RangeUdf<f32>, record: &SceneRecord, index: usize, config: &RunConfig) -> Result<SceneScores> {
    let mesh = record
        .mesh
        .as_ref()
        .ok_or_else(|| Error::Validation("scoring needs the scene mesh".into()))?;
    let mut run = config.clone();
    run.dense.seed = config.dense.seed.wrapping_add(index as u64);
    let dense = dense_points(model, &record.cloud, record.hierarchy_seed, &run)?;
    let (gt, _) = surface_truth(mesh, config.metrics.gt_points, config.queries.seed ^ (index as u64 + 1))?;
    let reconstruction = ReconstructionReport::compute(&dense.positions, &gt, config.metrics.delta)?;
    let segmentation = if model.config().classes >= 2 && !record.queries.on_surface.is_empty() {
        let fc = model.features(&record.cloud, record.hierarchy_seed)?;
        let positions: Vec<[f32; 3]> = record.queries.on_surface.iter().map(|s| s.position).collect();
        let truth: Vec<u32> = record.queries.on_surface.iter().map(|s| s.label).collect();
        let pred = label_points(model, &fc, &positions)?;
        Some(seg_metrics(&pred, &truth, model.config().classes)?)
    } else {
        None
    };
    Ok(SceneScores {
        reconstruction,
        segmentation,
    })
}
