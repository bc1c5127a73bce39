use std::collections::HashMap;

use rayon::prelude::*;

use super::tables::{EDGE_TABLE, TRI_TABLE};
use super::DistanceField;
use crate::geom::TriangleMesh;
use crate::{Error, Result};

// Corner offsets and edges in the order the lookup tables expect.
const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];
const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (3, 2),
    (0, 3),
    (4, 5),
    (5, 6),
    (7, 6),
    (4, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Field values on a regular `n³` lattice spanning `[-0.5, 0.5]³`.
#[derive(Debug, Clone)]
pub struct Grid {
    pub resolution: usize,
    /// x fastest, then y, then z.
    pub values: Vec<f64>,
}

impl Grid {
    pub fn spacing(&self) -> f64 {
        1.0 / (self.resolution - 1) as f64
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let h = self.spacing();
        [i as f64 * h - 0.5, j as f64 * h - 0.5, k as f64 * h - 0.5]
    }

    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.resolution + j) * self.resolution + i
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Evaluates the field at every lattice point, one z-slab at a time.
pub fn evaluate_grid(field: &dyn DistanceField, resolution: usize) -> Result<Grid> {
    if resolution < 2 {
        return Err(Error::Validation("grid resolution must be at least 2".into()));
    }
    let n = resolution;
    let h = 1.0 / (n - 1) as f64;
    let slabs: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut pts = Vec::with_capacity(n * n);
            for j in 0..n {
                for i in 0..n {
                    pts.push([i as f64 * h - 0.5, j as f64 * h - 0.5, k as f64 * h - 0.5]);
                }
            }
            field.distances(&pts)
        })
        .collect::<Result<_>>()?;
    Ok(Grid {
        resolution: n,
        values: slabs.concat(),
    })
}

/// Triangulates the `level` set of a sampled field. Vertices on shared edges
/// are welded; degenerate triangles are dropped.
pub fn marching_cubes(grid: &Grid, level: f64) -> Result<TriangleMesh> {
    let n = grid.resolution;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut welded: HashMap<(usize, usize), u32> = HashMap::new();
    let mut corner_idx = [0usize; 8];
    let mut corner_val = [0f64; 8];
    let mut edge_vertex = [0u32; 12];
    for k in 0..n - 1 {
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let mut case = 0usize;
                for (c, off) in CORNERS.iter().enumerate() {
                    let idx = grid.index(i + off[0], j + off[1], k + off[2]);
                    corner_idx[c] = idx;
                    corner_val[c] = grid.values[idx];
                    if corner_val[c] < level {
                        case |= 1 << c;
                    }
                }
                let mask = EDGE_TABLE[case];
                if mask == 0 {
                    continue;
                }
                for (e, &(a, b)) in EDGES.iter().enumerate() {
                    if mask & (1 << e) == 0 {
                        continue;
                    }
                    let key = (corner_idx[a], corner_idx[b]);
                    edge_vertex[e] = *welded.entry(key).or_insert_with(|| {
                        let pa = grid.point(i + CORNERS[a][0], j + CORNERS[a][1], k + CORNERS[a][2]);
                        let pb = grid.point(i + CORNERS[b][0], j + CORNERS[b][1], k + CORNERS[b][2]);
                        let (va, vb) = (corner_val[a], corner_val[b]);
                        let t = if vb == va { 0.5 } else { (level - va) / (vb - va) };
                        let t = t.clamp(0.0, 1.0);
                        vertices.push(std::array::from_fn(|x| pa[x] + t * (pb[x] - pa[x])));
                        (vertices.len() - 1) as u32
                    });
                }
                for tri in TRI_TABLE[case].chunks(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    let f = [
                        edge_vertex[tri[0] as usize],
                        edge_vertex[tri[1] as usize],
                        edge_vertex[tri[2] as usize],
                    ];
                    if f[0] != f[1] && f[1] != f[2] && f[0] != f[2] {
                        faces.push(f);
                    }
                }
            }
        }
    }
    if faces.is_empty() {
        return Err(Error::Extraction(format!(
            "no grid cell crosses level {level} (grid values span {:.4} to {:.4})",
            grid.values.iter().copied().fold(f64::INFINITY, f64::min),
            grid.max()
        )));
    }
    TriangleMesh::new(vertices, faces, None)
}

/// Meshes the thin shell `d = level` of an unsigned field over the unit cube.
pub fn extract_mesh(field: &dyn DistanceField, resolution: usize, level: f64) -> Result<TriangleMesh> {
    if resolution < 8 {
        return Err(Error::Validation(format!(
            "mesh resolution {resolution} is below the minimum of 8"
        )));
    }
    let grid = evaluate_grid(field, resolution)?;
    marching_cubes(&grid, level)
}
