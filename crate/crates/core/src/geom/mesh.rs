use serde::{Deserialize, Serialize};

use super::vec3::{self, Vec3};
use crate::error::{Error, Result};

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(*p);
        }
        b
    }

    pub fn grow(&mut self, p: Vec3) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(p[a]);
            self.max[a] = self.max[a].max(p[a]);
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut b = *self;
        b.grow(other.min);
        b.grow(other.max);
        b
    }

    pub fn extent(&self) -> Vec3 {
        vec3::sub(self.max, self.min)
    }

    pub fn center(&self) -> Vec3 {
        vec3::scale(vec3::add(self.min, self.max), 0.5)
    }

    pub fn longest_axis(&self) -> usize {
        let e = self.extent();
        if e[0] >= e[1] && e[0] >= e[2] {
            0
        } else if e[1] >= e[2] {
            1
        } else {
            2
        }
    }

    /// Squared distance from `p` to the box (0 inside).
    #[inline]
    pub fn distance2(&self, p: Vec3) -> f64 {
        let mut d2 = 0.0;
        for a in 0..3 {
            let v = if p[a] < self.min[a] {
                self.min[a] - p[a]
            } else if p[a] > self.max[a] {
                p[a] - self.max[a]
            } else {
                0.0
            };
            d2 += v * v;
        }
        d2
    }
}

/// Indexed triangle surface with optional per-face class ids.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub face_labels: Option<Vec<u32>>,
}

impl TriangleMesh {
    /// Builds a mesh and checks index and label invariants.
    pub fn new(
        vertices: Vec<Vec3>,
        faces: Vec<[u32; 3]>,
        face_labels: Option<Vec<u32>>,
    ) -> Result<Self> {
        let mesh = TriangleMesh {
            vertices,
            faces,
            face_labels,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i as usize >= n) {
                return Err(Error::Validation(format!(
                    "face {fi} references vertex {bad} but the mesh has {n} vertices"
                )));
            }
        }
        if let Some(labels) = &self.face_labels {
            if labels.len() != self.faces.len() {
                return Err(Error::Validation(format!(
                    "{} face labels for {} faces",
                    labels.len(),
                    self.faces.len()
                )));
            }
        }
        if let Some(i) = self
            .vertices
            .iter()
            .position(|v| !v.iter().all(|c| c.is_finite()))
        {
            return Err(Error::Validation(format!("vertex {i} is not finite")));
        }
        Ok(())
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    #[inline]
    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        0.5 * vec3::double_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Class id of a face; unlabeled meshes report class 0.
    #[inline]
    pub fn label(&self, face: usize) -> u32 {
        self.face_labels.as_ref().map_or(0, |l| l[face])
    }

    /// Number of classes implied by the labels (max + 1, or 1 when unlabeled).
    pub fn class_count(&self) -> u32 {
        self.face_labels
            .as_ref()
            .and_then(|l| l.iter().max().map(|m| m + 1))
            .unwrap_or(1)
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// Appends `other`, offsetting its indices. Labels are kept if both sides have them
    /// (an unlabeled side contributes class 0).
    pub fn append(&mut self, other: &TriangleMesh) {
        let offset = self.vertices.len() as u32;
        let had_labels = self.face_labels.is_some() || other.face_labels.is_some();
        if had_labels {
            let mut labels = self
                .face_labels
                .take()
                .unwrap_or_else(|| vec![0; self.faces.len()]);
            labels.extend((0..other.faces.len()).map(|f| other.label(f)));
            self.face_labels = Some(labels);
        }
        self.vertices.extend_from_slice(&other.vertices);
        self.faces.extend(
            other
                .faces
                .iter()
                .map(|f| [f[0] + offset, f[1] + offset, f[2] + offset]),
        );
    }

    pub fn map_vertices(&mut self, f: impl Fn(Vec3) -> Vec3) {
        for v in &mut self.vertices {
            *v = f(*v);
        }
    }
}

/// Uniform scale followed by a translation: `x ↦ scale·x + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubeTransform {
    pub scale: f64,
    pub translation: Vec3,
}

impl CubeTransform {
    pub fn apply(&self, p: Vec3) -> Vec3 {
        vec3::add(vec3::scale(p, self.scale), self.translation)
    }

    pub fn invert(&self, p: Vec3) -> Vec3 {
        vec3::scale(vec3::sub(p, self.translation), 1.0 / self.scale)
    }
}

/// Centers the mesh on its bounding-box center and scales it uniformly so the
/// largest axis extent is 1, i.e. the mesh fits `[-0.5, 0.5]³`.
pub fn normalize_unit_cube(mesh: &TriangleMesh) -> Result<(TriangleMesh, CubeTransform)> {
    if mesh.vertices.is_empty() {
        return Err(Error::Validation("mesh has no vertices".into()));
    }
    let bounds = mesh.bounds();
    let extent = bounds.extent();
    let largest = extent[0].max(extent[1]).max(extent[2]);
    if !(largest > 0.0) {
        return Err(Error::DegenerateGeometry(
            "mesh has zero extent on every axis".into(),
        ));
    }
    let scale = 1.0 / largest;
    let center = bounds.center();
    let transform = CubeTransform {
        scale,
        translation: vec3::scale(center, -scale),
    };
    let mut out = mesh.clone();
    // Clamp guards the last ulp so the invariant holds exactly.
    out.map_vertices(|v| {
        let p = transform.apply(v);
        [
            p[0].clamp(-0.5, 0.5),
            p[1].clamp(-0.5, 0.5),
            p[2].clamp(-0.5, 0.5),
        ]
    });
    Ok((out, transform))
}
