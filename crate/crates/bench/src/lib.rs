//! Shared inputs for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rangeudf::geom::TriangleMesh;
use rangeudf::scenes::{build_scene, random_scene_spec};

/// Uniform points in the unit cube.
pub fn cube_points(n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| std::array::from_fn(|_| rng.random_range(-0.5..0.5)))
        .collect()
}

pub fn toy_mesh(seed: u64) -> TriangleMesh {
    build_scene(&random_scene_spec(seed, 5, 8)).expect("random specs are valid")
}
