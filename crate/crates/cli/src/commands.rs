use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context};
use log::info;
use serde_json::{json, Value};

use rangeudf::dataset::{generate_query_set, write_query_set};
use rangeudf::extraction::{extract_mesh, label_points, ModelField};
use rangeudf::geom::io::{load_points, write_points_ply};
use rangeudf::geom::{load_mesh, normalize_unit_cube, vec3, write_labels, write_mesh_ply};
use rangeudf::metrics::{seg_metrics, ReconstructionReport};
use rangeudf::model::{RangeInput, RangeUdf};
use rangeudf::scenes::{build_scene, random_scene_spec, SceneSpec};
use rangeudf::training::{load_checkpoint, save_checkpoint};
use rangeudf::Error;

use crate::config::RunConfig;
use crate::pipeline::{self, LossLog};
use crate::{
    AblateArgs, Cli, Command, EvalArgs, GenDataArgs, GenScenesArgs, ReconstructArgs, SegmentArgs, TrainArgs,
    TrainOverrides,
};

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.reseed(seed);
    }
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::GenScenes(a) => gen_scenes(a, seed),
        Command::GenData(a) => gen_data(a, config),
        Command::Train(a) => train(a, config),
        Command::Reconstruct(a) => reconstruct(a, config, seed),
        Command::Segment(a) => segment(a, seed),
        Command::Eval(a) => eval(a, config, seed),
        Command::Ablate(a) => ablate(a, config),
    }
}

fn validation(msg: impl Into<String>) -> anyhow::Error {
    Error::Validation(msg.into()).into()
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn gen_scenes(a: GenScenesArgs, seed: u64) -> anyhow::Result<()> {
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let specs: Vec<SceneSpec> = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            vec![serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e.to_string()))?]
        }
        None => {
            if a.count == 0 {
                return Err(validation("--count must be at least 1"));
            }
            (0..a.count as u64)
                .map(|i| {
                    let s = seed.wrapping_add(i);
                    random_scene_spec(s, 3 + (s % 4) as usize, a.density)
                })
                .collect()
        }
    };
    for (i, spec) in specs.iter().enumerate() {
        let mesh = build_scene(spec)?;
        let base = a.out.join(format!("scene_{i:04}"));
        let ply = base.with_extension("ply");
        write_mesh_ply(&ply, &mesh, None)?;
        write_labels(base.with_extension("labels"), mesh.face_labels.as_deref().unwrap_or(&[]))?;
        let spec_json = serde_json::to_string_pretty(spec)?;
        write_text(&base.with_extension("json"), &spec_json)?;
        info!("{}: {} faces, {} classes", ply.display(), mesh.face_count(), mesh.class_count());
    }
    Ok(())
}

fn gen_data(a: GenDataArgs, mut config: RunConfig) -> anyhow::Result<()> {
    if let Some(n) = a.n_on {
        config.queries.n_on = n;
    }
    if let Some(n) = a.n_off {
        config.queries.n_off = n;
    }
    config.validate()?;
    let (mesh, _) = normalize_unit_cube(&load_mesh(&a.mesh)?)?;
    let source = a.mesh.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh");
    let qs = generate_query_set(&mesh, &config.queries, source)?;
    let out = a.out.unwrap_or_else(|| a.mesh.with_extension("ruqs"));
    write_query_set(&qs, &out)?;
    info!(
        "{}: {} on-surface and {} off-surface queries, {} classes",
        out.display(),
        qs.on_surface.len(),
        qs.off_surface.len(),
        qs.class_count
    );
    Ok(())
}

fn apply_overrides(config: &mut RunConfig, o: &TrainOverrides) {
    if let Some(e) = o.epochs {
        config.train.epochs = e;
    }
    if let Some(s) = o.steps {
        config.max_steps = Some(s);
    }
    if let Some(f) = o.label_fraction {
        config.train.label_fraction = f;
    }
    if let Some(c) = o.classes {
        config.model.classes = c;
    }
    if let Some(q) = o.queries_per_scene {
        config.train.queries_per_scene = q;
    }
    if let Some(n) = o.surface_points {
        config.train.surface_points = n;
    }
}

fn train(a: TrainArgs, mut config: RunConfig) -> anyhow::Result<()> {
    apply_overrides(&mut config, &a.overrides);
    if let Some(r) = a.range_input {
        config.model.range_input = r.into();
    }
    if a.no_range_term {
        config.model.range_input = RangeInput::WithoutRelative;
    }
    if a.sem_with_q {
        config.model.sem_with_q = true;
    }
    if let Some(k) = a.k {
        config.model.k = k;
    }
    if a.no_uncertainty {
        config.train.uncertainty = false;
    }
    config.validate()?;
    let records = pipeline::load_scenes(&a.data, &config)?;
    let mut log = LossLog::create(a.log.as_deref())?;
    let start = Instant::now();
    let ckpt = pipeline::train(&records, &config.model, &config.train, config.max_steps, &mut log)?;
    save_checkpoint(&ckpt, &a.out)?;
    info!(
        "{} steps in {:.1}s, checkpoint {}",
        ckpt.step,
        start.elapsed().as_secs_f64(),
        a.out.display()
    );
    Ok(())
}

fn load_model(path: &Path) -> anyhow::Result<RangeUdf<f32>> {
    Ok(load_checkpoint(path)?.model()?)
}

fn load_cloud(path: &Path) -> anyhow::Result<Vec<[f32; 3]>> {
    let (points, _) = load_points(path)?;
    if points.is_empty() {
        return Err(Error::EmptySet(format!("{} holds no points", path.display())).into());
    }
    Ok(points)
}

fn reconstruct(a: ReconstructArgs, mut config: RunConfig, seed: u64) -> anyhow::Result<()> {
    if a.out_points.is_none() && a.out_mesh.is_none() {
        return Err(validation("nothing to do: pass --out-points and/or --out-mesh"));
    }
    if let Some(n) = a.n_min {
        config.extract.n_min = n;
    }
    if let Some(r) = a.resolution {
        config.extract.resolution = r;
    }
    if let Some(l) = a.level {
        config.extract.level = l;
    }
    config.validate()?;
    let model = load_model(&a.checkpoint)?;
    if a.labels && model.config().classes < 2 {
        return Err(validation("--labels needs a model with at least two classes"));
    }
    let cloud = load_cloud(&a.cloud)?;
    if let Some(out) = &a.out_points {
        let start = Instant::now();
        let dense = pipeline::dense_points(&model, &cloud, seed, &config)?;
        let labels = if a.labels { dense.labels.as_deref() } else { None };
        write_points_ply(out, &dense.positions_f32(), labels)?;
        info!(
            "{} dense points after {} rounds in {:.1}s -> {}",
            dense.len(),
            dense.rounds,
            start.elapsed().as_secs_f64(),
            out.display()
        );
    }
    if let Some(out) = &a.out_mesh {
        let start = Instant::now();
        let fc = model.features(&cloud, seed)?;
        let field = ModelField::new(&model, &fc);
        let mesh = extract_mesh(&field, config.extract.resolution, config.extract.level)?;
        let labels = if a.labels {
            let vertices: Vec<[f32; 3]> = mesh.vertices.iter().map(|&v| vec3::to_f32(v)).collect();
            Some(label_points(&model, &fc, &vertices)?)
        } else {
            None
        };
        write_mesh_ply(out, &mesh, labels.as_deref())?;
        info!(
            "{} vertices, {} faces in {:.1}s -> {}",
            mesh.vertices.len(),
            mesh.face_count(),
            start.elapsed().as_secs_f64(),
            out.display()
        );
    }
    Ok(())
}

fn segment(a: SegmentArgs, seed: u64) -> anyhow::Result<()> {
    let model = load_model(&a.checkpoint)?;
    let cloud = load_cloud(&a.cloud)?;
    let points = match &a.points {
        Some(p) => load_cloud(p)?,
        None => cloud.clone(),
    };
    let fc = model.features(&cloud, seed)?;
    let labels = label_points(&model, &fc, &points)?;
    write_points_ply(&a.out, &points, Some(&labels))?;
    info!("labeled {} points -> {}", points.len(), a.out.display());
    Ok(())
}

/// The eval report as JSON with keys in sorted order.
pub fn eval_report(a: &EvalArgs, config: &RunConfig, seed: u64) -> anyhow::Result<Value> {
    let delta = a.delta.unwrap_or(config.metrics.delta);
    if !(delta > 0.0) {
        return Err(validation(format!("delta must be positive, got {delta}")));
    }
    let (pred, pred_labels) = load_points(&a.pred)?;
    let pred: Vec<vec3::Vec3> = pred.iter().map(|&p| vec3::to_f64(p)).collect();
    let (gt, gt_labels) = if a.gt_mesh {
        let mesh = load_mesh(&a.gt)?;
        let (points, labels) = pipeline::surface_truth(&mesh, config.metrics.gt_points, seed)?;
        (points, mesh.face_labels.is_some().then_some(labels))
    } else {
        let (points, labels) = load_points(&a.gt)?;
        (points.iter().map(|&p| vec3::to_f64(p)).collect(), labels)
    };
    let reconstruction = ReconstructionReport::compute(&pred, &gt, delta)?;
    let mut report = json!({ "reconstruction": reconstruction });
    if let (Some(pl), Some(gl)) = (pred_labels, gt_labels) {
        let truth = pipeline::transfer_labels(&pred, &gt, &gl)?;
        let classes = pl.iter().chain(&gl).max().map_or(1, |&m| m as usize + 1);
        report["segmentation"] = serde_json::to_value(seg_metrics(&pl, &truth, classes)?)?;
    }
    // serde_json maps are ordered, so this round trip sorts every key
    Ok(serde_json::from_str(&report.to_string())?)
}

fn eval(a: EvalArgs, config: RunConfig, seed: u64) -> anyhow::Result<()> {
    config.validate()?;
    let report = eval_report(&a, &config, seed)?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &a.out {
        Some(p) => write_text(p, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

struct Variant {
    name: String,
    config: RunConfig,
}

fn ablation_grid(base: &RunConfig) -> Vec<Variant> {
    let mut out = vec![Variant {
        name: "full".into(),
        config: base.clone(),
    }];
    let mut push = |name: String, edit: &dyn Fn(&mut RunConfig)| {
        let mut config = base.clone();
        edit(&mut config);
        out.push(Variant { name, config });
    };
    let ab = &base.ablation;
    if ab.no_range_term {
        push("no_range_term".into(), &|c| c.model.range_input = RangeInput::WithoutRelative);
    }
    if ab.sem_with_q {
        push("sem_with_q".into(), &|c| c.model.sem_with_q = true);
    }
    for &k in &ab.k_values {
        if k != base.model.k {
            push(format!("k={k}"), &|c| c.model.k = k);
        }
    }
    if ab.no_uncertainty {
        push("no_uncertainty".into(), &|c| c.train.uncertainty = false);
    }
    out
}

fn ablate(a: AblateArgs, mut config: RunConfig) -> anyhow::Result<()> {
    apply_overrides(&mut config, &a.overrides);
    if let Some(n) = a.n_min {
        config.extract.n_min = n;
    }
    if let Some(p) = &a.train_data {
        config.data.train = Some(p.clone());
    }
    if let Some(p) = &a.test_data {
        config.data.test = Some(p.clone());
    }
    config.validate()?;
    let Some(train_dir) = config.data.train.clone() else {
        bail!(validation("no training data: pass --train-data or set data.train"));
    };
    let test_dir = config.data.test.clone().unwrap_or_else(|| train_dir.clone());
    let train_records = pipeline::load_scenes(&train_dir, &config)?;
    let test_records = pipeline::load_scenes(&test_dir, &config).context("loading held-out scenes")?;

    let mut table = String::from(
        "| variant | CD-L1 (x1e2) | CD-L2 (x1e4) | F-score δ | mIoU | train s |\n|---|---|---|---|---|---|\n",
    );
    for v in ablation_grid(&config) {
        v.config.validate()?;
        info!("training variant {}", v.name);
        let start = Instant::now();
        let mut log = LossLog::create(None)?;
        let ckpt = pipeline::train(&train_records, &v.config.model, &v.config.train, v.config.max_steps, &mut log)?;
        let secs = start.elapsed().as_secs_f64();
        let model = ckpt.model()?;
        let (mut cd1, mut cd2, mut fs, mut miou, mut seg_n) = (0.0, 0.0, 0.0, 0.0, 0usize);
        for (i, r) in test_records.iter().enumerate() {
            let s = pipeline::score_scene(&model, r, i, &v.config)?;
            cd1 += s.reconstruction.cd_l1_display();
            cd2 += s.reconstruction.cd_l2_display();
            fs += s.reconstruction.fs_delta;
            if let Some(seg) = s.segmentation {
                miou += seg.miou;
                seg_n += 1;
            }
        }
        let n = test_records.len() as f64;
        let miou = if seg_n > 0 {
            format!("{:.1}", 100.0 * miou / seg_n as f64)
        } else {
            "n/a".into()
        };
        writeln!(
            table,
            "| {} | {:.3} | {:.3} | {:.1} | {} | {:.0} |",
            v.name,
            cd1 / n,
            cd2 / n,
            100.0 * fs / n,
            miou,
            secs
        )?;
    }
    match &a.out {
        Some(p) => write_text(p, &table)?,
        None => print!("{table}"),
    }
    Ok(())
}
