use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use rangeudf::extraction::{extract_mesh, SphereField};
use rangeudf::geom::{sample_surface, vec3, SpatialIndex};
use rangeudf::model::{ModelConfig, RangeUdf};
use rangeudf::pointnet::KdTree;
use rangeudf_bench::{cube_points, toy_mesh};

fn nearest_on_mesh(c: &mut Criterion) {
    let mesh = toy_mesh(1);
    let index = SpatialIndex::build(&mesh).unwrap();
    let queries = cube_points(1000, 2);
    c.bench_function(&format!("bvh nearest x1000 ({} faces)", mesh.face_count()), |b| {
        b.iter(|| {
            for &q in &queries {
                black_box(index.nearest(q));
            }
        })
    });
}

fn knn(c: &mut Criterion) {
    let tree = KdTree::new(cube_points(10_000, 3));
    let queries = cube_points(1000, 4);
    let mut group = c.benchmark_group("kd-tree knn x1000 (10k points)");
    for k in [1, 4, 16] {
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, &k| {
            b.iter(|| black_box(tree.knn_many(&queries, k).unwrap()))
        });
    }
    group.finish();
}

fn forward(c: &mut Criterion) {
    let mesh = toy_mesh(5);
    let cloud: Vec<[f32; 3]> = sample_surface(&mesh, 4096, 6)
        .unwrap()
        .positions
        .iter()
        .map(|&p| vec3::to_f32(p))
        .collect();
    let queries: Vec<[f32; 3]> = cube_points(2048, 7).iter().map(|&p| vec3::to_f32(p)).collect();
    let model = RangeUdf::<f32>::new(ModelConfig::default(), 0).unwrap();
    let fc = model.features(&cloud, 0).unwrap();
    let mut group = c.benchmark_group("model");
    group.sample_size(10);
    group.bench_function("encoder (4096 points)", |b| b.iter(|| black_box(model.features(&cloud, 0).unwrap())));
    group.bench_function("predict (2048 queries)", |b| b.iter(|| black_box(model.predict(&fc, &queries).unwrap())));
    group.finish();
}

fn meshing(c: &mut Criterion) {
    let field = SphereField::new([0.0; 3], 0.3);
    let mut group = c.benchmark_group("marching cubes on a sphere");
    group.sample_size(10);
    for res in [32, 64] {
        group.bench_with_input(BenchmarkId::from_parameter(res), &res, |b, &res| {
            b.iter(|| black_box(extract_mesh(&field, res, 0.02).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, nearest_on_mesh, knn, forward, meshing);
criterion_main!(benches);
