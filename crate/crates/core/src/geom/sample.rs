use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mesh::TriangleMesh;
use super::vec3::{self, Vec3};
use crate::error::{Error, Result};

/// Points drawn uniformly (by area) from a mesh surface.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurfaceSamples {
    pub positions: Vec<Vec3>,
    pub face_ids: Vec<u32>,
    pub labels: Vec<u32>,
}

impl SurfaceSamples {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Area-weighted face choice, then uniform barycentric sampling inside the face.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<SurfaceSamples> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_surface_with(mesh, n, &mut rng)
}

pub(crate) fn sample_surface_with(
    mesh: &TriangleMesh,
    n: usize,
    rng: &mut impl Rng,
) -> Result<SurfaceSamples> {
    let cumulative = FaceDistribution::new(mesh)?;
    let mut out = SurfaceSamples {
        positions: Vec::with_capacity(n),
        face_ids: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let face = cumulative.pick(rng);
        let [a, b, c] = mesh.triangle(face);
        out.positions.push(uniform_in_triangle(rng, a, b, c));
        out.face_ids.push(face as u32);
        out.labels.push(mesh.label(face));
    }
    Ok(out)
}

pub(crate) struct FaceDistribution {
    cumulative: Vec<f64>,
}

impl FaceDistribution {
    pub(crate) fn new(mesh: &TriangleMesh) -> Result<Self> {
        let mut total = 0.0;
        let cumulative: Vec<f64> = (0..mesh.face_count())
            .map(|f| {
                total += mesh.face_area(f);
                total
            })
            .collect();
        if !(total > 0.0) {
            return Err(Error::DegenerateGeometry(
                "mesh has no face with positive area".into(),
            ));
        }
        Ok(FaceDistribution { cumulative })
    }

    pub(crate) fn pick(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let r = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= r);
        // Zero-area faces are never selected; `r == total` only happens by rounding.
        i.min(self.cumulative.len() - 1)
    }
}

fn uniform_in_triangle(rng: &mut impl Rng, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let r1: f64 = rng.random();
    let r2: f64 = rng.random();
    let s = r1.sqrt();
    let (u, v, w) = (1.0 - s, s * (1.0 - r2), s * r2);
    vec3::add(
        vec3::add(vec3::scale(a, u), vec3::scale(b, v)),
        vec3::scale(c, w),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn barycentric(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> (f64, f64, f64) {
        let v0 = vec3::sub(b, a);
        let v1 = vec3::sub(c, a);
        let v2 = vec3::sub(p, a);
        let d00 = vec3::dot(v0, v0);
        let d01 = vec3::dot(v0, v1);
        let d11 = vec3::dot(v1, v1);
        let d20 = vec3::dot(v2, v0);
        let d21 = vec3::dot(v2, v1);
        let den = d00 * d11 - d01 * d01;
        let v = (d11 * d20 - d01 * d21) / den;
        let w = (d00 * d21 - d01 * d20) / den;
        (1.0 - v - w, v, w)
    }

    fn tri() -> TriangleMesh {
        TriangleMesh::new(
            vec![[0.1, 0.2, 0.3], [0.9, -0.2, 0.1], [0.0, 0.7, -0.4]],
            vec![[0, 1, 2]],
            Some(vec![5]),
        )
        .unwrap()
    }

    #[test]
    fn single_triangle_containment() {
        let mesh = tri();
        let s = sample_surface(&mesh, 1000, 1).unwrap();
        let [a, b, c] = mesh.triangle(0);
        for p in &s.positions {
            let (u, v, w) = barycentric(*p, a, b, c);
            for x in [u, v, w] {
                assert!((-1e-9..=1.0 + 1e-9).contains(&x));
            }
            assert!((u + v + w - 1.0).abs() < 1e-9);
            // Residual from the plane of the face.
            let recon = vec3::add(vec3::add(vec3::scale(a, u), vec3::scale(b, v)), vec3::scale(c, w));
            assert!(vec3::dist(recon, *p) < 1e-6);
        }
        assert!(s.labels.iter().all(|&l| l == 5));
    }

    #[test]
    fn area_ratio_statistics() {
        // Face 0 has three times the area of face 1.
        let v = vec![
            [0.0, 0.0, 0.0],
            [3.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 1.0],
            [0.0, 1.0, 1.0],
        ];
        let mesh = TriangleMesh::new(v, vec![[0, 1, 2], [3, 4, 5]], None).unwrap();
        let n = 40_000;
        let s = sample_surface(&mesh, n, 11).unwrap();
        let count0 = s.face_ids.iter().filter(|&&f| f == 0).count() as f64;
        let sigma = (n as f64 * 0.75 * 0.25).sqrt();
        assert!((count0 - 30_000.0).abs() < 3.0 * sigma, "{count0}");
    }

    #[test]
    fn empty_request() {
        assert!(sample_surface(&tri(), 0, 0).unwrap().is_empty());
    }

    #[test]
    fn reproducible_per_seed() {
        let a = sample_surface(&tri(), 500, 42).unwrap();
        let b = sample_surface(&tri(), 500, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_surface(&tri(), 500, 43).unwrap();
        assert_ne!(a.positions, c.positions);
    }

    #[test]
    fn all_degenerate_rejected() {
        let mesh = TriangleMesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], vec![[0, 1, 2]], None).unwrap();
        assert!(matches!(sample_surface(&mesh, 10, 0), Err(Error::DegenerateGeometry(_))));
    }
}
