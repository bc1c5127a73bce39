//! Tessellation of the primitive shapes, in local coordinates spanning
//! [-1, 1] on each axis before scaling.

use crate::geom::vec3::{self, Vec3};

pub(crate) struct Patch {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
}

impl Patch {
    fn new() -> Self {
        Patch {
            vertices: Vec::new(),
            faces: Vec::new(),
        }
    }

    /// An `n × n` quad grid spanning `origin + s·u + t·v` for s, t ∈ [0, 1].
    fn grid(&mut self, n: usize, origin: Vec3, u: Vec3, v: Vec3) {
        let base = self.vertices.len() as u32;
        for j in 0..=n {
            for i in 0..=n {
                let (s, t) = (i as f64 / n as f64, j as f64 / n as f64);
                self.vertices.push(vec3::add(origin, vec3::add(vec3::scale(u, s), vec3::scale(v, t))));
            }
        }
        let row = n as u32 + 1;
        for j in 0..n as u32 {
            for i in 0..n as u32 {
                let a = base + j * row + i;
                let (b, c, d) = (a + 1, a + row + 1, a + row);
                self.faces.push([a, b, c]);
                self.faces.push([a, c, d]);
            }
        }
    }
}

/// The six faces of the cube [-1, 1]³, each split into `n × n` quads.
pub(crate) fn cube(n: usize) -> Patch {
    let mut p = Patch::new();
    for axis in 0..3 {
        for side in [-1.0, 1.0] {
            let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
            let mut origin = [0.0; 3];
            origin[axis] = side;
            origin[a] = -1.0;
            origin[b] = -1.0;
            let mut u = [0.0; 3];
            let mut v = [0.0; 3];
            u[a] = 2.0;
            v[b] = 2.0;
            p.grid(n, origin, u, v);
        }
    }
    p
}

/// Cube-sphere: the subdivided cube projected onto the unit sphere.
pub(crate) fn sphere(n: usize) -> Patch {
    let mut p = cube(n);
    for v in &mut p.vertices {
        *v = vec3::scale(*v, 1.0 / vec3::norm(*v));
    }
    p
}

/// Unit-radius cylinder along z with `4n` sides, `n` rings and fan caps.
pub(crate) fn cylinder(n: usize) -> Patch {
    let sides = 4 * n;
    let mut p = Patch::new();
    for r in 0..=n {
        let z = -1.0 + 2.0 * r as f64 / n as f64;
        for s in 0..sides {
            let a = std::f64::consts::TAU * s as f64 / sides as f64;
            p.vertices.push([a.cos(), a.sin(), z]);
        }
    }
    let ring = |r: usize, s: usize| (r * sides + s % sides) as u32;
    for r in 0..n {
        for s in 0..sides {
            let (a, b, c, d) = (ring(r, s), ring(r, s + 1), ring(r + 1, s + 1), ring(r + 1, s));
            p.faces.push([a, b, c]);
            p.faces.push([a, c, d]);
        }
    }
    for (r, z) in [(0, -1.0), (n, 1.0)] {
        let center = p.vertices.len() as u32;
        p.vertices.push([0.0, 0.0, z]);
        for s in 0..sides {
            p.faces.push([center, ring(r, s), ring(r, s + 1)]);
        }
    }
    p
}

/// Square in the z = 0 plane, `n × n` quads.
pub(crate) fn plane(n: usize) -> Patch {
    let mut p = Patch::new();
    p.grid(n, [-1.0, -1.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]);
    p
}
