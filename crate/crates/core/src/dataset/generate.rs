use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::vec3::{self, Vec3};
use crate::geom::{sample_surface, sample_surface_with, SpatialIndex, TriangleMesh};

/// One supervised query: position, unsigned distance and semantic class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuerySample {
    pub position: [f32; 3],
    pub udf: f32,
    pub label: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet {
    pub on_surface: Vec<QuerySample>,
    pub off_surface: Vec<QuerySample>,
    pub class_count: u32,
    /// Free-form identifier of the mesh the samples came from.
    pub source: String,
    pub seed: u64,
}

impl QuerySet {
    pub fn len(&self) -> usize {
        self.on_surface.len() + self.off_surface.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// On-surface samples first, then off-surface ones.
    pub fn iter(&self) -> impl Iterator<Item = &QuerySample> {
        self.on_surface.iter().chain(&self.off_surface)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.iter().find(|s| s.label >= self.class_count) {
            return Err(Error::Validation(format!(
                "label {} out of range for {} classes",
                s.label, self.class_count
            )));
        }
        if let Some(s) = self.iter().find(|s| !(s.udf >= 0.0)) {
            return Err(Error::Validation(format!("invalid distance {}", s.udf)));
        }
        if self.on_surface.iter().any(|s| s.udf != 0.0) {
            return Err(Error::Validation("on-surface sample with non-zero distance".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryConfig {
    pub n_on: usize,
    pub n_off: usize,
    /// Each near-surface sample perturbs a surface point with one of these
    /// standard deviations, chosen uniformly.
    pub noise_sigmas: Vec<f64>,
    /// Share of off-surface samples drawn uniformly in the cube instead.
    pub uniform_fraction: f64,
    /// Expected class count; `None` takes it from the mesh labels.
    #[serde(default)]
    pub class_count: Option<u32>,
    pub seed: u64,
}

impl Default for QueryConfig {
    fn default() -> Self {
        QueryConfig {
            n_on: 10_000,
            n_off: 100_000,
            noise_sigmas: vec![0.01, 0.03, 0.08],
            uniform_fraction: 0.1,
            class_count: None,
            seed: 0,
        }
    }
}

impl QueryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.uniform_fraction) {
            return Err(Error::Validation(format!(
                "uniform fraction {} outside [0, 1]",
                self.uniform_fraction
            )));
        }
        if self.uniform_fraction < 1.0 && self.n_off > 0 && self.noise_sigmas.is_empty() {
            return Err(Error::Validation("no noise levels for near-surface samples".into()));
        }
        if let Some(s) = self.noise_sigmas.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Validation(format!("invalid noise level {s}")));
        }
        Ok(())
    }
}

fn clamp_cube(p: Vec3) -> [f32; 3] {
    vec3::to_f32(p.map(|c| c.clamp(-0.5, 0.5)))
}

/// Distances and labels from the nearest face, for positions as stored.
pub fn label_positions(index: &SpatialIndex, mesh: &TriangleMesh, positions: &[[f32; 3]]) -> Vec<QuerySample> {
    positions
        .par_iter()
        .map(|&p| {
            let hit = index.nearest(vec3::to_f64(p));
            QuerySample {
                position: p,
                udf: hit.distance as f32,
                label: mesh.label(hit.face),
            }
        })
        .collect()
}

/// Samples supervised queries around a normalized mesh.
pub fn generate_query_set(mesh: &TriangleMesh, cfg: &QueryConfig, source: &str) -> Result<QuerySet> {
    cfg.validate()?;
    mesh.validate()?;
    let classes = mesh.class_count().max(1);
    let class_count = match cfg.class_count {
        Some(c) if c < classes => {
            return Err(Error::Validation(format!(
                "mesh carries label {} but only {c} classes were declared",
                classes - 1
            )))
        }
        Some(c) => c,
        None => classes,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let surface = sample_surface_with(mesh, cfg.n_on, &mut rng)?;
    let on_surface = surface
        .positions
        .iter()
        .zip(&surface.labels)
        .map(|(&p, &label)| QuerySample {
            position: vec3::to_f32(p),
            udf: 0.0,
            label,
        })
        .collect();

    let index = SpatialIndex::build(mesh)?;
    let anchors = sample_surface_with(mesh, cfg.n_off, &mut rng)?;
    let mut positions = Vec::with_capacity(cfg.n_off);
    for anchor in &anchors.positions {
        if rng.random::<f64>() < cfg.uniform_fraction {
            positions.push(clamp_cube([
                rng.random_range(-0.5..=0.5),
                rng.random_range(-0.5..=0.5),
                rng.random_range(-0.5..=0.5),
            ]));
        } else {
            let sigma = cfg.noise_sigmas[rng.random_range(0..cfg.noise_sigmas.len())];
            let normal = Normal::new(0.0, sigma).expect("positive finite sigma");
            let offset = [normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)];
            positions.push(clamp_cube(vec3::add(*anchor, offset)));
        }
    }
    let off_surface = label_positions(&index, mesh, &positions);
    Ok(QuerySet {
        on_surface,
        off_surface,
        class_count,
        source: source.to_string(),
        seed: cfg.seed,
    })
}

/// A training / evaluation scene: the network's input cloud and its queries.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecord {
    pub cloud: Vec<[f32; 3]>,
    pub cloud_labels: Vec<u32>,
    pub queries: QuerySet,
    /// Seed of the encoder's random subsets for this cloud.
    pub hierarchy_seed: u64,
    pub mesh: Option<TriangleMesh>,
}

/// Samples the input cloud and the query set of one normalized mesh.
pub fn make_scene_record(mesh: &TriangleMesh, cloud_points: usize, cfg: &QueryConfig, source: &str) -> Result<SceneRecord> {
    let queries = generate_query_set(mesh, cfg, source)?;
    scene_record_from(mesh, queries, cloud_points)
}

/// Pairs an existing query set with an input cloud sampled from its mesh;
/// the cloud and encoder seeds derive from the query set's seed.
pub fn scene_record_from(mesh: &TriangleMesh, queries: QuerySet, cloud_points: usize) -> Result<SceneRecord> {
    // a seed stream disjoint from the query sampling
    let cloud = sample_surface(mesh, cloud_points, queries.seed ^ 0x9e37_79b9_7f4a_7c15)?;
    Ok(SceneRecord {
        cloud: cloud.positions.iter().map(|&p| vec3::to_f32(p)).collect(),
        cloud_labels: cloud.labels,
        hierarchy_seed: queries.seed,
        queries,
        mesh: Some(mesh.clone()),
    })
}
