//! Planar geometry: segments, polygons, oriented rectangles.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

pub type Vec2 = Vector2<f64>;

/// Overlaps thinner than this are treated as touching.
pub const OVERLAP_EPS: f64 = 1e-12;

pub fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Distance along the ray `origin + t·dir` (`t ≥ 0`) to segment `[a, b]`.
/// A collinear overlapping segment is hit at its nearest point (`t = 0` if
/// the origin lies on it).
pub fn ray_segment(origin: &Vec2, dir: &Vec2, a: &Vec2, b: &Vec2) -> Option<f64> {
    let e = b - a;
    let w = a - origin;
    let denom = cross(dir, &e);
    if denom != 0.0 {
        let t = cross(&w, &e) / denom;
        let s = cross(&w, dir) / denom;
        if t >= 0.0 && (0.0..=1.0).contains(&s) {
            return Some(t);
        }
        return None;
    }
    if cross(&w, dir) != 0.0 {
        return None; // parallel, disjoint
    }
    let dd = dir.dot(dir);
    let ta = w.dot(dir) / dd;
    let tb = (b - origin).dot(dir) / dd;
    let (lo, hi) = if ta <= tb { (ta, tb) } else { (tb, ta) };
    if hi < 0.0 {
        None
    } else {
        Some(lo.max(0.0))
    }
}

/// True if closed segments `[p1, p2]` and `[q1, q2]` share any point.
pub fn segments_intersect(p1: &Vec2, p2: &Vec2, q1: &Vec2, q2: &Vec2) -> bool {
    fn orient(a: &Vec2, b: &Vec2, c: &Vec2) -> f64 {
        cross(&(b - a), &(c - a))
    }
    fn on_segment(a: &Vec2, b: &Vec2, p: &Vec2) -> bool {
        p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
    }
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<Vec2>,
}

impl Polygon {
    /// Builds a polygon with counter-clockwise winding.
    pub fn new(mut vertices: Vec<Vec2>) -> Self {
        if signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        Self { vertices }
    }

    pub fn rect(center: Vec2, length: f64, width: f64, yaw: f64) -> Self {
        OrientedRect::new(center, yaw, length, width).polygon()
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices).abs()
    }

    /// Non-self-intersecting with at least three vertices and positive area.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 || self.area() <= 0.0 {
            return false;
        }
        let v = &self.vertices;
        for i in 0..n {
            let (a1, a2) = (v[i], v[(i + 1) % n]);
            if a1 == a2 {
                return false;
            }
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (b1, b2) = (v[j], v[(j + 1) % n]);
                if adjacent {
                    // Adjacent edges may only share their common vertex.
                    let shared = if j == i + 1 { a2 } else { a1 };
                    let (p, q) = if j == i + 1 { (a1, b2) } else { (a2, b1) };
                    let d1 = p - shared;
                    let d2 = q - shared;
                    if cross(&d1, &d2) == 0.0 && d1.dot(&d2) > 0.0 {
                        return false; // folds back onto itself
                    }
                    continue;
                }
                if segments_intersect(&a1, &a2, &b1, &b2) {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        let v = &self.vertices;
        (0..n).all(|i| {
            let e1 = v[(i + 1) % n] - v[i];
            let e2 = v[(i + 2) % n] - v[(i + 1) % n];
            cross(&e1, &e2) >= 0.0
        })
    }

    /// Crossing-number point-in-polygon test.
    pub fn contains(&self, p: &Vec2) -> bool {
        let v = &self.vertices;
        let n = v.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (v[i], v[j]);
            if (a.y > p.y) != (b.y > p.y) {
                let x_at = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x_at {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    fn project(&self, axis: &Vec2) -> (f64, f64) {
        self.vertices.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            let p = v.dot(axis);
            (lo.min(p), hi.max(p))
        })
    }

    /// Open-overlap test between convex polygons by separating axes:
    /// touching boundaries with zero shared area do not count.
    pub fn overlaps_convex(&self, other: &Polygon) -> bool {
        for poly in [self, other] {
            for (a, b) in poly.edges() {
                let e = b - a;
                let axis = Vec2::new(-e.y, e.x);
                let (min_a, max_a) = self.project(&axis);
                let (min_b, max_b) = other.project(&axis);
                let overlap = max_a.min(max_b) - min_a.max(min_b);
                if overlap <= OVERLAP_EPS * axis.norm() {
                    return false;
                }
            }
        }
        true
    }

    pub fn transformed(&self, rotation: f64, translation: Vec2) -> Polygon {
        let (s, c) = rotation.sin_cos();
        Polygon {
            vertices: self
                .vertices
                .iter()
                .map(|v| Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y) + translation)
                .collect(),
        }
    }
}

fn signed_area(v: &[Vec2]) -> f64 {
    let n = v.len();
    if n < 3 {
        return 0.0;
    }
    0.5 * (0..n).map(|i| cross(&v[i], &v[(i + 1) % n])).sum::<f64>()
}

/// Rectangle with a heading, e.g. a vehicle footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: Vec2,
    pub yaw: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    pub fn new(center: Vec2, yaw: f64, length: f64, width: f64) -> Self {
        Self {
            center,
            yaw,
            length,
            width,
        }
    }

    pub fn polygon(&self) -> Polygon {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (0.5 * self.length, 0.5 * self.width);
        let corner = |lx: f64, ly: f64| self.center + Vec2::new(c * lx - s * ly, s * lx + c * ly);
        Polygon::new(vec![corner(hl, hw), corner(-hl, hw), corner(-hl, -hw), corner(hl, -hw)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn contains(&self, p: &Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn is_valid(&self) -> bool {
        self.min.x < self.max.x && self.min.y < self.max.y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    #[test]
    fn ray_hits_wall_at_distance_two() {
        let t = ray_segment(&v(0.0, 0.0), &v(1.0, 0.0), &v(2.0, -1.0), &v(2.0, 1.0));
        assert_eq!(t, Some(2.0));
    }

    #[test]
    fn ray_misses_behind_and_beside() {
        assert_eq!(ray_segment(&v(0.0, 0.0), &v(-1.0, 0.0), &v(2.0, -1.0), &v(2.0, 1.0)), None);
        assert_eq!(ray_segment(&v(0.0, 0.0), &v(1.0, 0.0), &v(2.0, 0.5), &v(2.0, 1.0)), None);
        assert_eq!(ray_segment(&v(0.0, 0.0), &v(1.0, 0.0), &v(0.0, 1.0), &v(3.0, 1.0)), None);
    }

    #[test]
    fn collinear_overlap_hits_nearest_endpoint() {
        let o = v(0.0, 0.0);
        let d = v(1.0, 0.0);
        assert_eq!(ray_segment(&o, &d, &v(3.0, 0.0), &v(1.5, 0.0)), Some(1.5));
        assert_eq!(ray_segment(&o, &d, &v(-1.0, 0.0), &v(1.0, 0.0)), Some(0.0));
        assert_eq!(ray_segment(&o, &d, &v(-3.0, 0.0), &v(-1.0, 0.0)), None);
    }

    #[test]
    fn simple_polygons() {
        let square = Polygon::new(vec![v(0.0, 0.0), v(1.0, 0.0), v(1.0, 1.0), v(0.0, 1.0)]);
        assert!(square.is_simple());
        assert!(square.is_convex());
        let bowtie = Polygon::new(vec![v(0.0, 0.0), v(1.0, 1.0), v(1.0, 0.0), v(0.0, 1.0)]);
        assert!(!bowtie.is_simple());
        let l_shape = Polygon::new(vec![
            v(0.0, 0.0),
            v(2.0, 0.0),
            v(2.0, 1.0),
            v(1.0, 1.0),
            v(1.0, 2.0),
            v(0.0, 2.0),
        ]);
        assert!(l_shape.is_simple());
        assert!(!l_shape.is_convex());
        assert!(!Polygon::new(vec![v(0.0, 0.0), v(1.0, 0.0)]).is_simple());
    }

    #[test]
    fn winding_is_normalized() {
        let cw = Polygon::new(vec![v(0.0, 0.0), v(0.0, 1.0), v(1.0, 1.0), v(1.0, 0.0)]);
        assert!(signed_area(cw.vertices()) > 0.0);
    }

    #[test]
    fn point_in_polygon() {
        let square = Polygon::new(vec![v(0.0, 0.0), v(1.0, 0.0), v(1.0, 1.0), v(0.0, 1.0)]);
        assert!(square.contains(&v(0.5, 0.5)));
        assert!(!square.contains(&v(1.5, 0.5)));
    }

    #[test]
    fn sat_open_overlap() {
        let a = Polygon::rect(v(0.0, 0.0), 1.0, 1.0, 0.0);
        let touching = Polygon::rect(v(1.0, 0.0), 1.0, 1.0, 0.0);
        let overlapping = Polygon::rect(v(0.9, 0.0), 1.0, 1.0, 0.0);
        let apart = Polygon::rect(v(3.0, 0.0), 1.0, 1.0, 0.3);
        assert!(!a.overlaps_convex(&touching));
        assert!(a.overlaps_convex(&overlapping));
        assert!(!a.overlaps_convex(&apart));
        // Diamond whose tip only reaches the square's corner region.
        let diamond = Polygon::rect(v(1.2, 1.2), 0.5, 0.5, std::f64::consts::FRAC_PI_4);
        assert!(!a.overlaps_convex(&diamond));
    }
}
