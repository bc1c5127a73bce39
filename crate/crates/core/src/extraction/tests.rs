use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geom::vec3::{self, norm};
use crate::model::{ModelConfig, RangeUdf};

const SPHERE: SphereField = SphereField {
    center: [0.0; 3],
    radius: 0.3,
};

fn max_radial_error(mesh: &crate::geom::TriangleMesh) -> f64 {
    mesh.vertices
        .iter()
        .map(|&v| (norm(v) - 0.3).abs())
        .fold(0.0, f64::max)
}

#[test]
fn sphere_projection_is_exact() {
    let (d, g) = SPHERE.distances_and_gradients(&[[0.5, 0.0, 0.0]]).unwrap();
    let q = project_step([0.5, 0.0, 0.0], d[0], g[0]).unwrap();
    assert!(vec3::dist(q, [0.3, 0.0, 0.0]) < 1e-15);
    let inner = project_points(&SPHERE, &[[0.0, -0.1, 0.0]]).unwrap();
    assert!(vec3::dist(inner[0].unwrap(), [0.0, -0.3, 0.0]) < 1e-15);
}

#[test]
fn on_surface_point_stays_put() {
    let q = [0.0, 0.3, 0.0];
    assert_eq!(project_points(&SPHERE, &[q]).unwrap()[0], Some(q));
}

#[test]
fn sphere_center_is_discarded() {
    assert_eq!(project_points(&SPHERE, &[[0.0; 3]]).unwrap()[0], None);
    assert_eq!(project_step([0.1; 3], 0.2, [1e-9, 0.0, 0.0]), None);
}

#[test]
fn projection_clamps_to_cube() {
    let plane = PlaneField::new([1.0, 0.0, 0.0], 0.9);
    let q = project_points(&plane, &[[0.0, 0.0, 0.0]]).unwrap()[0].unwrap();
    assert_eq!(q, [0.5, 0.0, 0.0]);
}

#[test]
fn dense_sphere_points_converge() {
    let config = DenseConfig {
        batch: 16_384,
        ..DenseConfig::default()
    };
    let pts = extract_dense_points(&SPHERE, 10_000, &config).unwrap();
    assert!(pts.len() >= 10_000);
    let close = pts
        .positions
        .iter()
        .filter(|&&p| (norm(p) - 0.3).abs() < 0.005)
        .count();
    assert!(close as f64 >= 0.99 * pts.len() as f64);
    for (p, r) in pts.positions.iter().zip(&pts.residuals) {
        assert!((r - (norm(*p) - 0.3).abs()).abs() < 1e-12);
    }
}

#[test]
fn dense_sphere_converges_without_acceptance_filter() {
    let config = DenseConfig {
        batch: 8192,
        accept: f64::INFINITY,
        ..DenseConfig::default()
    };
    let pts = extract_dense_points(&SPHERE, 1000, &config).unwrap();
    let close = pts.residuals.iter().filter(|&&r| r < 0.005).count();
    assert!(close as f64 >= 0.99 * pts.len() as f64);
}

#[test]
fn dense_plane_points_lie_on_plane() {
    let plane = PlaneField::new([0.0, 0.0, 1.0], 0.0);
    let config = DenseConfig {
        batch: 4096,
        seed: 3,
        ..DenseConfig::default()
    };
    let pts = extract_dense_points(&plane, 2000, &config).unwrap();
    assert!(pts.positions.iter().all(|p| p[2].abs() < 0.005));
}

#[test]
fn dense_extraction_is_deterministic() {
    let config = DenseConfig {
        batch: 2048,
        seed: 11,
        ..DenseConfig::default()
    };
    let a = extract_dense_points(&SPHERE, 500, &config).unwrap();
    let b = extract_dense_points(&SPHERE, 500, &config).unwrap();
    assert_eq!(a, b);
    let c = extract_dense_points(&SPHERE, 500, &DenseConfig { seed: 12, ..config }).unwrap();
    assert_ne!(a.positions, c.positions);
}

#[test]
fn dense_extraction_multiplies_survivors() {
    let config = DenseConfig {
        batch: 1000,
        ..DenseConfig::default()
    };
    let pts = extract_dense_points(&SPHERE, 5000, &config).unwrap();
    assert!(pts.rounds > 1);
    assert!(pts.len() >= 5000);
}

#[test]
fn constant_field_fails_extraction() {
    let config = DenseConfig {
        batch: 256,
        max_rounds: 3,
        ..DenseConfig::default()
    };
    let err = extract_dense_points(&ConstantField(1.0), 10, &config).unwrap_err();
    assert!(matches!(err, crate::Error::Extraction(ref m) if m.contains("only 0 of 10")));
    assert!(extract_dense_points(&SPHERE, 0, &config).is_err());
}

#[test]
fn sphere_mesh_vertices_are_close() {
    let level = 0.003;
    let mesh = extract_mesh(&SPHERE, 128, level).unwrap();
    assert!(mesh.face_count() > 1000);
    assert!(max_radial_error(&mesh) < 2.0 / 127.0 + level);
}

#[test]
fn mesh_refines_with_resolution() {
    let coarse = max_radial_error(&extract_mesh(&SPHERE, 64, 0.003).unwrap());
    let fine = max_radial_error(&extract_mesh(&SPHERE, 128, 0.003).unwrap());
    assert!(fine < coarse, "{fine} !< {coarse}");
}

#[test]
fn mesh_is_two_sided_shell() {
    let mesh = extract_mesh(&SPHERE, 64, 0.01).unwrap();
    let inner = mesh.vertices.iter().filter(|&&v| norm(v) < 0.3).count();
    let outer = mesh.vertices.len() - inner;
    assert!(inner > 100 && outer > 100);
}

#[test]
fn mesh_vertices_are_welded() {
    let mesh = extract_mesh(&SPHERE, 24, 0.02).unwrap();
    let mut edges = std::collections::HashMap::new();
    for f in &mesh.faces {
        for e in 0..3 {
            let (a, b) = (f[e], f[(e + 1) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    // A closed shell surface: every edge is shared by exactly two faces.
    assert!(edges.values().all(|&c| c == 2));
}

#[test]
fn mesh_errors() {
    assert!(matches!(
        extract_mesh(&SPHERE, 32, 10.0),
        Err(crate::Error::Extraction(_))
    ));
    assert!(matches!(
        extract_mesh(&ConstantField(1.0), 16, 0.003),
        Err(crate::Error::Extraction(_))
    ));
    assert!(matches!(extract_mesh(&SPHERE, 7, 0.003), Err(crate::Error::Validation(_))));
}

#[test]
fn grid_layout() {
    let g = evaluate_grid(&PlaneField::new([1.0, 0.0, 0.0], 0.0), 9).unwrap();
    assert_eq!(g.values.len(), 729);
    assert!((g.values[0] - 0.5).abs() < 1e-15);
    assert!(g.values[4].abs() < 1e-15);
    assert!((g.values[1] - 0.375).abs() < 1e-15);
    assert!((g.max() - 0.5).abs() < 1e-15);
}

fn cloud(n: usize, seed: u64) -> Vec<[f32; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)])
        .collect()
}

#[test]
fn model_field_gradients_agree() {
    let mut model = RangeUdf::<f32>::new(ModelConfig::default(), 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let w = model.params().iter().position(|p| p.name == "udf.out.w").unwrap();
    for v in model.params_mut().as_mut_slice()[w].value.data_mut() {
        *v = rng.random_range(-0.4..0.4);
    }
    model.params_mut().as_mut_slice()[w + 1].value.fill(0.5);
    let fc = model.features(&cloud(256, 1), 0).unwrap();
    let queries: Vec<[f64; 3]> = cloud(40, 2).iter().map(|&p| vec3::to_f64(p)).collect();
    let auto = ModelField::new(&model, &fc);
    let fd = ModelField::new(&model, &fc).with_gradient(GradientMode::FiniteDifference(1e-3));
    let (da, ga) = auto.distances_and_gradients(&queries).unwrap();
    let (dn, gn) = fd.distances_and_gradients(&queries).unwrap();
    assert_eq!(da, dn);
    assert_eq!(da, auto.distances(&queries).unwrap());
    let mut agree = 0;
    for (a, n) in ga.iter().zip(&gn) {
        let scale = norm(*a).max(norm(*n)).max(1e-3);
        if vec3::dist(*a, *n) / scale < 0.05 {
            agree += 1;
        }
    }
    // Finite differences disagree only where a kNN set changes inside the stencil.
    assert!(agree >= 30, "{agree}");
}

#[test]
fn label_points_behaviour() {
    let model = RangeUdf::<f32>::new(ModelConfig::default(), 4).unwrap();
    let fc = model.features(&cloud(256, 1), 0).unwrap();
    assert!(label_points(&model, &fc, &[]).unwrap().is_empty());
    let q = cloud(10, 5);
    let a = label_points(&model, &fc, &q).unwrap();
    assert_eq!(a, label_points(&model, &fc, &q).unwrap());
    assert!(a.iter().all(|&l| l < 3));
    // Two queries sharing one neighbor set share a label.
    let p = fc.positions[0];
    let twins = [[p[0] + 1e-4, p[1], p[2]], [p[0], p[1] + 1e-4, p[2]]];
    let nb = fc.knn(&twins, 4).unwrap();
    let mut x = nb[..4].to_vec();
    let mut y = nb[4..].to_vec();
    x.sort();
    y.sort();
    if x == y {
        let l = label_points(&model, &fc, &twins).unwrap();
        assert_eq!(l[0], l[1]);
    }
    let single = RangeUdf::<f32>::new(ModelConfig { classes: 1, ..ModelConfig::default() }, 0).unwrap();
    assert!(label_points(&single, &fc, &q).is_err());
}

proptest! {
    #[test]
    fn projection_never_increases_residual(
        x in -0.5f64..0.5, y in -0.5f64..0.5, z in -0.5f64..0.5,
        nx in -1.0f64..1.0, ny in -1.0f64..1.0, off in -0.3f64..0.3,
    ) {
        let q = [x, y, z];
        if let Some(p) = project_points(&SPHERE, &[q]).unwrap()[0] {
            let before = SPHERE.distances(&[q]).unwrap()[0];
            let after = SPHERE.distances(&[p]).unwrap()[0];
            prop_assert!(after <= before + 1e-12);
        }
        prop_assume!(nx.abs() + ny.abs() > 1e-3);
        let plane = PlaneField::new([nx, ny, 0.5], off);
        let p = project_points(&plane, &[q]).unwrap()[0].unwrap();
        let before = plane.distances(&[q]).unwrap()[0];
        let after = plane.distances(&[p]).unwrap()[0];
        prop_assert!(after <= before + 1e-12);
    }
}
