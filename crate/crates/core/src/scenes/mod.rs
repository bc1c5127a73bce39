//! Procedural labeled scenes built from primitive shapes, and the paired
//! construction that exposes interpolation ambiguity.

mod primitives;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{QuerySample, QuerySet, SceneRecord};
use crate::error::{Error, Result};
use crate::geom::{normalize_unit_cube, TriangleMesh};
use primitives::Patch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Box,
    Sphere,
    Cylinder,
    Plane,
}

/// One shape: the local [-1, 1] template scaled per axis, turned about z by
/// `yaw` radians, then moved to `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Primitive {
    pub kind: PrimitiveKind,
    pub center: [f64; 3],
    pub scale: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
    pub class: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub seed: u64,
    /// Subdivisions per template edge.
    pub density: usize,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::Validation("scene has no primitives".into()));
        }
        if self.density == 0 {
            return Err(Error::Validation("tessellation density must be at least 1".into()));
        }
        let classes = self.class_count();
        for c in 0..classes {
            if !self.primitives.iter().any(|p| p.class == c) {
                return Err(Error::Validation(format!(
                    "class ids must be contiguous from 0; class {c} is unused"
                )));
            }
        }
        for p in &self.primitives {
            let finite = p.center.iter().chain(&p.scale).all(|v| v.is_finite()) && p.yaw.is_finite();
            if !finite || p.scale.iter().any(|&s| s <= 0.0) {
                return Err(Error::Validation(format!("invalid pose or scale on {:?}", p.kind)));
            }
        }
        Ok(())
    }

    pub fn class_count(&self) -> u32 {
        self.primitives.iter().map(|p| p.class + 1).max().unwrap_or(0)
    }
}

fn tessellate(p: &Primitive, density: usize) -> Patch {
    let mut patch = match p.kind {
        PrimitiveKind::Box => primitives::cube(density),
        PrimitiveKind::Sphere => primitives::sphere(density),
        PrimitiveKind::Cylinder => primitives::cylinder(density),
        PrimitiveKind::Plane => primitives::plane(density),
    };
    let (s, c) = p.yaw.sin_cos();
    for v in &mut patch.vertices {
        let x = v[0] * p.scale[0];
        let y = v[1] * p.scale[1];
        let z = v[2] * p.scale[2];
        *v = [
            c * x - s * y + p.center[0],
            s * x + c * y + p.center[1],
            z + p.center[2],
        ];
    }
    patch
}

/// Union of the tessellated primitives, labeled per primitive and
/// normalized to the unit cube.
pub fn build_scene(spec: &SceneSpec) -> Result<TriangleMesh> {
    spec.validate()?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut labels = Vec::new();
    for p in &spec.primitives {
        let patch = tessellate(p, spec.density);
        let base = vertices.len() as u32;
        vertices.extend(patch.vertices);
        faces.extend(patch.faces.iter().map(|f| f.map(|i| i + base)));
        labels.extend(std::iter::repeat_n(p.class, patch.faces.len()));
    }
    let mesh = TriangleMesh::new(vertices, faces, Some(labels))?;
    Ok(normalize_unit_cube(&mesh)?.0)
}

/// Classes used by [`random_scene_spec`].
pub const FLOOR_CLASS: u32 = 0;
pub const BOX_CLASS: u32 = 1;
pub const ROUND_CLASS: u32 = 2;

/// A floor with boxes and round objects standing on it; `primitives` counts
/// the floor and is clamped to 3..=6 so every class appears.
pub fn random_scene_spec(seed: u64, primitives: usize, density: usize) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = primitives.clamp(3, 6);
    let mut out = vec![Primitive {
        kind: PrimitiveKind::Plane,
        center: [0.0; 3],
        scale: [1.1, 1.1, 1.0],
        yaw: 0.0,
        class: FLOOR_CLASS,
    }];
    for i in 1..count {
        let boxy = match i {
            1 => true,
            2 => false,
            _ => rng.random_bool(0.5),
        };
        let x = rng.random_range(-0.75..0.75);
        let y = rng.random_range(-0.75..0.75);
        let yaw = rng.random_range(0.0..std::f64::consts::PI);
        let p = if boxy {
            let h = rng.random_range(0.1..0.4);
            Primitive {
                kind: PrimitiveKind::Box,
                center: [x, y, h],
                scale: [rng.random_range(0.12..0.35), rng.random_range(0.12..0.35), h],
                yaw,
                class: BOX_CLASS,
            }
        } else if rng.random_bool(0.5) {
            let r = rng.random_range(0.12..0.3);
            Primitive {
                kind: PrimitiveKind::Sphere,
                center: [x, y, r],
                scale: [r; 3],
                yaw: 0.0,
                class: ROUND_CLASS,
            }
        } else {
            let r = rng.random_range(0.1..0.25);
            let h = rng.random_range(0.12..0.4);
            Primitive {
                kind: PrimitiveKind::Cylinder,
                center: [x, y, h],
                scale: [r, r, h],
                yaw,
                class: ROUND_CLASS,
            }
        };
        out.push(p);
    }
    SceneSpec {
        primitives: out,
        seed,
        density,
    }
}

/// Two scenes over the same flat cloud whose queries share their neighbor
/// bundles exactly but sit `offset` apart in height, so their distance
/// targets differ by `offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityPair {
    pub near: SceneRecord,
    pub far: SceneRecord,
    /// The shared query sites: centers of the cloud's grid cells at the near heights.
    pub anchors: Vec<[f32; 3]>,
}

const GRID: usize = 16;
const HEIGHTS: [f32; 3] = [1.0 / 64.0, 2.0 / 64.0, 3.0 / 64.0];

/// The paired construction. The cloud is a 16 × 16 grid on the plane z = 0;
/// each query sits above the center of a grid cell, so its four nearest
/// cloud points are the cell corners at exactly equal distances whatever
/// its height.
pub fn make_ambiguity_pair(offset: f32) -> Result<AmbiguityPair> {
    if !(offset > 0.0 && offset < 0.2) {
        return Err(Error::Validation(format!("offset {offset} outside (0, 0.2)")));
    }
    let coord = |i: usize| (i as f32 + 0.5) / GRID as f32 - 0.5;
    let mut cloud = Vec::with_capacity(GRID * GRID);
    for j in 0..GRID {
        for i in 0..GRID {
            cloud.push([coord(i), coord(j), 0.0]);
        }
    }
    let mut anchors = Vec::new();
    for &h in &HEIGHTS {
        for j in 1..GRID {
            for i in 1..GRID {
                anchors.push([i as f32 / GRID as f32 - 0.5, j as f32 / GRID as f32 - 0.5, h]);
            }
        }
    }
    let mesh = TriangleMesh::new(
        vec![[-0.5, -0.5, 0.0], [0.5, -0.5, 0.0], [0.5, 0.5, 0.0], [-0.5, 0.5, 0.0]],
        vec![[0, 1, 2], [0, 2, 3]],
        Some(vec![0, 0]),
    )?;
    let record = |dz: f32, name: &str| {
        let off_surface = anchors
            .iter()
            .map(|a| {
                let z = a[2] + dz;
                QuerySample {
                    position: [a[0], a[1], z],
                    udf: z,
                    label: 0,
                }
            })
            .collect();
        SceneRecord {
            cloud: cloud.clone(),
            cloud_labels: vec![0; cloud.len()],
            queries: QuerySet {
                on_surface: Vec::new(),
                off_surface,
                class_count: 1,
                source: name.to_string(),
                seed: 0,
            },
            hierarchy_seed: 0,
            mesh: Some(mesh.clone()),
        }
    };
    Ok(AmbiguityPair {
        near: record(0.0, "ambiguity-near"),
        far: record(offset, "ambiguity-far"),
        anchors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vec3;
    use crate::geom::SpatialIndex;
    use crate::pointnet::KdTree;

    fn one(kind: PrimitiveKind, class: u32) -> Primitive {
        Primitive {
            kind,
            center: [0.0; 3],
            scale: [1.0; 3],
            yaw: 0.0,
            class,
        }
    }

    #[test]
    fn single_sphere() {
        let spec = SceneSpec {
            primitives: vec![one(PrimitiveKind::Sphere, 0)],
            seed: 0,
            density: 6,
        };
        let m = build_scene(&spec).unwrap();
        assert!(m.face_labels.as_ref().unwrap().iter().all(|&l| l == 0));
        for v in &m.vertices {
            assert!((vec3::norm(*v) - 0.5).abs() < 1e-9);
        }
        // closed: every edge is shared by exactly two faces once coincident
        // vertices are merged
        let key = |v: [f64; 3]| v.map(|c| (c * 1e6).round() as i64);
        let mut edges = std::collections::HashMap::new();
        for f in &m.faces {
            for e in 0..3 {
                let (a, b) = (key(m.vertices[f[e] as usize]), key(m.vertices[f[(e + 1) % 3] as usize]));
                let k = if a < b { (a, b) } else { (b, a) };
                *edges.entry(k).or_insert(0) += 1;
            }
        }
        assert!(edges.values().all(|&c| c == 2));
    }

    #[test]
    fn labels_follow_primitives() {
        let mut b = one(PrimitiveKind::Box, 0);
        b.center = [2.5, 0.0, 0.0];
        let spec = SceneSpec {
            primitives: vec![b, one(PrimitiveKind::Sphere, 1)],
            seed: 0,
            density: 3,
        };
        let m = build_scene(&spec).unwrap();
        let labels = m.face_labels.as_ref().unwrap();
        let box_faces = 6 * 9 * 2;
        assert!(labels[..box_faces].iter().all(|&l| l == 0));
        assert!(labels[box_faces..].iter().all(|&l| l == 1));
        // every box face lies on the right, every sphere face on the left
        for (f, &l) in labels.iter().enumerate() {
            let c = m.triangle(f).iter().map(|v| v[0]).sum::<f64>() / 3.0;
            assert_eq!(l == 0, c > 0.0);
        }
    }

    #[test]
    fn density_doubling_quadruples_sphere_faces() {
        let faces = |d| {
            build_scene(&SceneSpec {
                primitives: vec![one(PrimitiveKind::Sphere, 0)],
                seed: 0,
                density: d,
            })
            .unwrap()
            .face_count()
        };
        assert_eq!(faces(8), 4 * faces(4));
    }

    #[test]
    fn invalid_specs() {
        let empty = SceneSpec {
            primitives: vec![],
            seed: 0,
            density: 4,
        };
        assert!(matches!(build_scene(&empty), Err(Error::Validation(_))));
        let gap = SceneSpec {
            primitives: vec![one(PrimitiveKind::Box, 1)],
            seed: 0,
            density: 4,
        };
        assert!(matches!(build_scene(&gap), Err(Error::Validation(_))));
    }

    #[test]
    fn random_scenes_have_three_classes_and_fit_the_cube() {
        for seed in 0..20 {
            let spec = random_scene_spec(seed, 3 + seed as usize % 4, 6);
            assert_eq!(spec.class_count(), 3);
            assert!((3..=6).contains(&spec.primitives.len()));
            let m = build_scene(&spec).unwrap();
            assert!(m.vertices.iter().flatten().all(|c| c.abs() <= 0.5));
        }
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec = random_scene_spec(3, 5, 4);
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<SceneSpec>(&text).unwrap(), spec);
        assert!(serde_json::from_str::<SceneSpec>(r#"{"primitives":[],"density":1,"colour":2}"#).is_err());
    }

    #[test]
    fn ambiguity_pair_construction() {
        let pair = make_ambiguity_pair(0.05).unwrap();
        assert_eq!(pair.near.cloud, pair.far.cloud);
        let tree = KdTree::from_f32(&pair.near.cloud);
        let index = SpatialIndex::build(pair.near.mesh.as_ref().unwrap()).unwrap();
        for (a, b) in pair.near.queries.iter().zip(pair.far.queries.iter()) {
            assert!(((b.udf - a.udf) - 0.05).abs() < 1e-6);
            let ka = tree.knn(vec3::to_f64(a.position), 4).unwrap();
            let kb = tree.knn(vec3::to_f64(b.position), 4).unwrap();
            assert_eq!(ka, kb);
            for s in [a, b] {
                let d = index.nearest(vec3::to_f64(s.position)).distance;
                assert!((d - s.udf as f64).abs() < 1e-7);
            }
        }
        assert!(make_ambiguity_pair(0.0).is_err());
        assert!(make_ambiguity_pair(0.25).is_err());
        // shrinking the offset makes the records converge
        let tiny = make_ambiguity_pair(1e-7).unwrap();
        for (a, b) in tiny.near.queries.iter().zip(tiny.far.queries.iter()) {
            assert!((a.udf - b.udf).abs() <= 1e-6);
        }
    }
}
