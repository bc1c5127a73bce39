use super::vec3::{self, Vec3};

/// Which feature of the triangle holds the closest point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Vertex(u8),
    /// Edge between two corner indices, smaller index first.
    Edge(u8, u8),
    Interior,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub distance: f64,
    pub point: Vec3,
    pub region: Region,
}

/// Exact closest point on triangle `abc` to `p` (Voronoi-region walk).
/// Degenerate triangles fall back to the closest of their three edges.
pub fn closest_point_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> ClosestPoint {
    let ab = vec3::sub(b, a);
    let ac = vec3::sub(c, a);
    let n2 = vec3::norm2(vec3::cross(ab, ac));
    let scale2 = vec3::norm2(ab).max(vec3::norm2(ac));
    if n2 <= 1e-24 * scale2 * scale2 || n2 == 0.0 {
        return closest_on_degenerate(p, [a, b, c]);
    }
    let (point, region) = closest_regular(p, a, b, c, ab, ac);
    ClosestPoint {
        distance: vec3::dist(p, point),
        point,
        region,
    }
}

fn closest_regular(p: Vec3, a: Vec3, b: Vec3, c: Vec3, ab: Vec3, ac: Vec3) -> (Vec3, Region) {
    let ap = vec3::sub(p, a);
    let d1 = vec3::dot(ab, ap);
    let d2 = vec3::dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (a, Region::Vertex(0));
    }
    let bp = vec3::sub(p, b);
    let d3 = vec3::dot(ab, bp);
    let d4 = vec3::dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (b, Region::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (vec3::add(a, vec3::scale(ab, v)), Region::Edge(0, 1));
    }
    let cp = vec3::sub(p, c);
    let d5 = vec3::dot(ab, cp);
    let d6 = vec3::dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (c, Region::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (vec3::add(a, vec3::scale(ac, w)), Region::Edge(0, 2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (vec3::lerp(b, c, w), Region::Edge(1, 2));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (
        vec3::add(a, vec3::add(vec3::scale(ab, v), vec3::scale(ac, w))),
        Region::Interior,
    )
}

fn closest_on_segment(p: Vec3, a: Vec3, b: Vec3, ia: u8, ib: u8) -> ClosestPoint {
    let ab = vec3::sub(b, a);
    let len2 = vec3::norm2(ab);
    let t = if len2 > 0.0 {
        (vec3::dot(vec3::sub(p, a), ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (point, region) = if t <= 0.0 {
        (a, Region::Vertex(ia))
    } else if t >= 1.0 {
        (b, Region::Vertex(ib))
    } else {
        (vec3::lerp(a, b, t), Region::Edge(ia.min(ib), ia.max(ib)))
    };
    ClosestPoint {
        distance: vec3::dist(p, point),
        point,
        region,
    }
}

fn closest_on_degenerate(p: Vec3, v: [Vec3; 3]) -> ClosestPoint {
    [(0u8, 1u8), (1, 2), (2, 0)]
        .into_iter()
        .map(|(i, j)| closest_on_segment(p, v[i as usize], v[j as usize], i, j))
        .fold(None::<ClosestPoint>, |best, c| match best {
            Some(b) if b.distance <= c.distance => Some(b),
            _ => Some(c),
        })
        .expect("three edges")
}
