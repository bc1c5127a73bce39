//! Static kd-tree for exact k-nearest-neighbor queries.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::vec3::{self, Vec3};

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: f64, left: u32, right: u32 },
}

/// Exact kNN over a fixed point set. Results are ordered by ascending
/// distance; equal distances are broken by the lower point index.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

/// `(squared distance, index)` ordered lexicographically, so a max-heap of
/// these keeps the current worst candidate on top under the tie rule.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate(f64, u32);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl KdTree {
    pub fn new(points: Vec<Vec3>) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build(&points, &mut order, 0, &mut nodes);
        }
        KdTree {
            points,
            order,
            nodes,
        }
    }

    pub fn from_f32(points: &[[f32; 3]]) -> Self {
        KdTree::new(points.iter().map(|&p| vec3::to_f64(p)).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Indices of the `k` nearest points to `q`.
    pub fn knn(&self, q: Vec3, k: usize) -> Result<Vec<u32>> {
        Ok(self.knn_with_distances(q, k)?.into_iter().map(|(_, i)| i).collect())
    }

    /// `(squared distance, index)` of the `k` nearest points to `q`.
    pub fn knn_with_distances(&self, q: Vec3, k: usize) -> Result<Vec<(f64, u32)>> {
        if k > self.points.len() {
            return Err(Error::Validation(format!(
                "asked for {k} neighbors among {} points",
                self.points.len()
            )));
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, q, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort_unstable();
        Ok(out.into_iter().map(|c| (c.0, c.1)).collect())
    }

    /// Nearest point and its Euclidean distance.
    pub fn nearest(&self, q: Vec3) -> Result<(u32, f64)> {
        let hit = self.knn_with_distances(q, 1).map_err(|_| {
            Error::EmptySet("nearest-point query against an empty cloud".into())
        })?;
        Ok((hit[0].1, hit[0].0.sqrt()))
    }

    /// Row-major `queries.len() × k` neighbor indices.
    pub fn knn_many(&self, queries: &[Vec3], k: usize) -> Result<Vec<u32>> {
        if k > self.points.len() {
            return Err(Error::Validation(format!(
                "asked for {k} neighbors among {} points",
                self.points.len()
            )));
        }
        let mut out = vec![0u32; queries.len() * k];
        if k == 0 {
            return Ok(out);
        }
        out.par_chunks_mut(k)
            .zip(queries.par_iter())
            .try_for_each(|(dst, &q)| {
                let found = self.knn(q, k)?;
                dst.copy_from_slice(&found);
                Ok(())
            })?;
        Ok(out)
    }

    fn search(&self, node: usize, q: Vec3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let c = Candidate(vec3::norm2(vec3::sub(q, self.points[i as usize])), i);
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near as usize, q, k, heap);
                // `<=` keeps equally distant points with lower indices reachable
                if heap.len() < k || diff * diff <= heap.peek().expect("heap is full").0 {
                    self.search(far as usize, q, k, heap);
                }
            }
        }
    }
}

fn build(points: &[Vec3], order: &mut [u32], offset: usize, nodes: &mut Vec<Node>) -> u32 {
    let id = nodes.len() as u32;
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + order.len()) as u32,
        });
        return id;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i as usize][a]);
            hi[a] = hi[a].max(points[i as usize][a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .expect("three axes");
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
    });
    let value = points[order[mid] as usize][axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (l, r) = order.split_at_mut(mid);
    let left = build(points, l, offset, nodes);
    let right = build(points, r, offset + mid, nodes);
    nodes[id as usize] = Node::Split {
        axis: axis as u8,
        value,
        left,
        right,
    };
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Vec3], q: Vec3, k: usize) -> Vec<u32> {
        let mut all: Vec<(f64, u32)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (vec3::norm2(vec3::sub(q, *p)), i as u32))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    fn random_points(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)])
            .collect()
    }

    #[test]
    fn collinear_example() {
        let t = KdTree::new(vec![[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [0.4, 0.0, 0.0]]);
        assert_eq!(t.knn([0.0; 3], 2).unwrap(), vec![0, 1]);
        assert!(matches!(t.knn([0.0; 3], 4), Err(Error::Validation(_))));
    }

    #[test]
    fn k_equals_n_returns_everything_sorted() {
        let pts = random_points(50, 2);
        let t = KdTree::new(pts.clone());
        let q = [0.1, 0.2, -0.3];
        assert_eq!(t.knn(q, 50).unwrap(), brute(&pts, q, 50));
    }

    #[test]
    fn matches_brute_force() {
        let pts = random_points(1000, 7);
        let t = KdTree::new(pts.clone());
        let queries = random_points(100, 8);
        for k in [1, 4, 8, 16] {
            for &q in &queries {
                assert_eq!(t.knn(q, k).unwrap(), brute(&pts, q, k));
            }
        }
    }

    #[test]
    fn ties_prefer_lower_index() {
        // a grid with many exactly equal distances
        let mut pts = Vec::new();
        for i in 0..8 {
            for j in 0..8 {
                for l in 0..2 {
                    pts.push([i as f64 / 8.0, j as f64 / 8.0, l as f64 / 8.0]);
                }
            }
        }
        pts.reverse();
        let t = KdTree::new(pts.clone());
        for q in [[0.5, 0.5, 0.0], [0.4375, 0.4375, 0.0625], [0.0, 0.0, 0.0625]] {
            for k in [1, 4, 8, 16] {
                assert_eq!(t.knn(q, k).unwrap(), brute(&pts, q, k));
            }
        }
    }

    #[test]
    fn batch_matches_single() {
        let pts = random_points(300, 3);
        let t = KdTree::new(pts);
        let queries = random_points(40, 4);
        let flat = t.knn_many(&queries, 4).unwrap();
        for (i, &q) in queries.iter().enumerate() {
            assert_eq!(&flat[i * 4..i * 4 + 4], t.knn(q, 4).unwrap().as_slice());
        }
    }

    proptest! {
        #[test]
        fn dyadic_translation_keeps_indices(seed in 0u64..1000, dx in -4i32..4, dy in -4i32..4, dz in -4i32..4) {
            // grid-aligned points and power-of-two shifts translate exactly
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vec3> = (0..200)
                .map(|_| [rng.random_range(-32..32) as f64 / 64.0, rng.random_range(-32..32) as f64 / 64.0, rng.random_range(-32..32) as f64 / 64.0])
                .collect();
            let shift = [dx as f64 / 4.0, dy as f64 / 4.0, dz as f64 / 4.0];
            let moved: Vec<Vec3> = pts.iter().map(|p| vec3::add(*p, shift)).collect();
            let q = [rng.random_range(-32..32) as f64 / 64.0, 0.0, 0.125];
            let a = KdTree::new(pts).knn(q, 8).unwrap();
            let b = KdTree::new(moved).knn(vec3::add(q, shift), 8).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
