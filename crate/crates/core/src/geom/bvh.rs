use super::closest::closest_point_triangle;
use super::mesh::{Aabb, TriangleMesh};
use super::vec3::{self, Vec3};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;
/// Distances within this tolerance are ties; the lower face index wins.
const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf: first slot in `order`. Inner: index of the right child (left is `self + 1`).
    first_or_right: u32,
    /// Zero for inner nodes.
    count: u32,
}

/// Result of a nearest-face query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearestHit {
    pub face: usize,
    pub distance: f64,
    pub point: Vec3,
}

/// Binary BVH over the faces of a triangle mesh, median split on the longest
/// axis. Immutable after construction and safe to query from many threads.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    nodes: Vec<Node>,
    order: Vec<u32>,
    triangles: Vec<[Vec3; 3]>,
}

impl SpatialIndex {
    pub fn build(mesh: &TriangleMesh) -> Result<Self> {
        if mesh.faces.is_empty() {
            return Err(Error::Validation(
                "cannot build a spatial index over a mesh without faces".into(),
            ));
        }
        mesh.validate()?;
        let triangles: Vec<[Vec3; 3]> = (0..mesh.face_count()).map(|f| mesh.triangle(f)).collect();
        let centroids: Vec<Vec3> = triangles
            .iter()
            .map(|t| vec3::scale(vec3::add(vec3::add(t[0], t[1]), t[2]), 1.0 / 3.0))
            .collect();
        let boxes: Vec<Aabb> = triangles.iter().map(Aabb::from_points).collect();
        let mut order: Vec<u32> = (0..triangles.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1);
        build_node(&mut nodes, &mut order, 0, &boxes, &centroids);
        Ok(SpatialIndex {
            nodes,
            order,
            triangles,
        })
    }

    pub fn face_count(&self) -> usize {
        self.triangles.len()
    }

    /// Closest face to `q`; ties within 1e-9 resolve to the lowest face index.
    pub fn nearest(&self, q: Vec3) -> NearestHit {
        let mut best = NearestHit {
            face: usize::MAX,
            distance: f64::INFINITY,
            point: q,
        };
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(64);
        stack.push((0, self.nodes[0].bounds.distance2(q)));
        while let Some((ni, box_d2)) = stack.pop() {
            if box_d2.sqrt() > best.distance + TIE_TOLERANCE {
                continue;
            }
            let node = &self.nodes[ni as usize];
            if node.count > 0 {
                let start = node.first_or_right as usize;
                for &f in &self.order[start..start + node.count as usize] {
                    let [a, b, c] = self.triangles[f as usize];
                    let cp = closest_point_triangle(q, a, b, c);
                    let f = f as usize;
                    if cp.distance < best.distance - TIE_TOLERANCE
                        || (cp.distance <= best.distance + TIE_TOLERANCE && f < best.face)
                    {
                        best = NearestHit {
                            face: f,
                            distance: cp.distance,
                            point: cp.point,
                        };
                    }
                }
            } else {
                let left = ni + 1;
                let right = node.first_or_right;
                let dl = self.nodes[left as usize].bounds.distance2(q);
                let dr = self.nodes[right as usize].bounds.distance2(q);
                // Push the farther child first so the nearer one is visited first.
                if dl <= dr {
                    stack.push((right, dr));
                    stack.push((left, dl));
                } else {
                    stack.push((left, dl));
                    stack.push((right, dr));
                }
            }
        }
        best
    }
}

fn build_node(
    nodes: &mut Vec<Node>,
    order: &mut [u32],
    first: usize,
    boxes: &[Aabb],
    centroids: &[Vec3],
) -> u32 {
    let bounds = order
        .iter()
        .fold(Aabb::empty(), |b, &f| b.union(&boxes[f as usize]));
    let index = nodes.len() as u32;
    if order.len() <= LEAF_SIZE {
        nodes.push(Node {
            bounds,
            first_or_right: first as u32,
            count: order.len() as u32,
        });
        return index;
    }
    nodes.push(Node {
        bounds,
        first_or_right: 0,
        count: 0,
    });
    let axis = bounds.longest_axis();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    let (lo, hi) = order.split_at_mut(mid);
    build_node(nodes, lo, first, boxes, centroids);
    let right = build_node(nodes, hi, first + mid, boxes, centroids);
    nodes[index as usize].first_or_right = right;
    index
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(mesh: &TriangleMesh, q: Vec3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for f in 0..mesh.face_count() {
            let [a, b, c] = mesh.triangle(f);
            let d = closest_point_triangle(q, a, b, c).distance;
            if d < best.1 - 1e-9 {
                best = (f, d);
            }
        }
        best
    }

    fn random_mesh(rng: &mut ChaCha8Rng, faces: usize) -> TriangleMesh {
        let mut v = Vec::new();
        let mut f = Vec::new();
        for i in 0..faces {
            let base: Vec3 = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
            for _ in 0..3 {
                v.push(vec3::add(base, [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)]));
            }
            f.push([3 * i as u32, 3 * i as u32 + 1, 3 * i as u32 + 2]);
        }
        TriangleMesh::new(v, f, None).unwrap()
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mesh = random_mesh(&mut rng, 100);
        let index = SpatialIndex::build(&mesh).unwrap();
        for _ in 0..200 {
            let q = [rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8)];
            let hit = index.nearest(q);
            let (bf, bd) = brute(&mesh, q);
            assert!((hit.distance - bd).abs() < 1e-6);
            assert_eq!(hit.face, bf);
        }
    }

    #[test]
    fn vertex_query_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mesh = random_mesh(&mut rng, 40);
        let index = SpatialIndex::build(&mesh).unwrap();
        for v in &mesh.vertices {
            assert_eq!(index.nearest(*v).distance, 0.0);
        }
    }

    #[test]
    fn shared_vertex_tie_picks_lowest_face() {
        let v = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]];
        let mesh = TriangleMesh::new(v, vec![[0, 1, 2], [0, 2, 3]], None).unwrap();
        let index = SpatialIndex::build(&mesh).unwrap();
        assert_eq!(index.nearest([0.0, 0.5, 2.0]).face, 0);
    }

    #[test]
    fn empty_mesh_rejected() {
        let mesh = TriangleMesh::default();
        assert!(matches!(SpatialIndex::build(&mesh), Err(Error::Validation(_))));
    }
}
