use serde::{Deserialize, Serialize};

use super::aabb::Aabb;
use super::vector::{Plane, Vec3};

/// Smallest area accepted for a triangle, m².
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Identifies one face or edge of a scene object: `index` is local to the object.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SurfaceRef {
    pub object: u32,
    pub index: u32,
}

impl SurfaceRef {
    pub const fn new(object: u32, index: u32) -> SurfaceRef {
        SurfaceRef { object, index }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    pub v0: Vec3,
    pub v1: Vec3,
    pub v2: Vec3,
    pub material_id: u32,
    pub object_id: u32,
}

impl Triangle {
    pub fn new(v0: Vec3, v1: Vec3, v2: Vec3, material_id: u32, object_id: u32) -> Triangle {
        Triangle {
            v0,
            v1,
            v2,
            material_id,
            object_id,
        }
    }

    /// Unnormalized geometric normal, `(v1 - v0) × (v2 - v0)`.
    #[inline]
    pub fn normal_raw(&self) -> Vec3 {
        (self.v1 - self.v0).cross(self.v2 - self.v0)
    }

    pub fn unit_normal(&self) -> Vec3 {
        self.normal_raw().normalize()
    }

    pub fn area(&self) -> f64 {
        0.5 * self.normal_raw().length()
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.area() > MIN_TRIANGLE_AREA)
    }

    pub fn plane(&self) -> Plane {
        Plane::from_point_normal(self.v0, self.unit_normal())
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points([self.v0, self.v1, self.v2])
    }

    pub fn centroid(&self) -> Vec3 {
        (self.v0 + self.v1 + self.v2) / 3.0
    }

    pub fn vertices(&self) -> [Vec3; 3] {
        [self.v0, self.v1, self.v2]
    }

    pub fn translated(&self, d: Vec3) -> Triangle {
        Triangle {
            v0: self.v0 + d,
            v1: self.v1 + d,
            v2: self.v2 + d,
            ..*self
        }
    }

    /// Möller–Trumbore. Returns the ray parameter of the hit when `t_min < t < t_max`.
    #[inline]
    pub fn intersect(&self, origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> Option<f64> {
        let e1 = self.v1 - self.v0;
        let e2 = self.v2 - self.v0;
        let p = dir.cross(e2);
        let det = e1.dot(p);
        // Parallel rays never hit, including rays lying in the plane.
        let scale = e1.length() * e2.length() * dir.length();
        if det.abs() <= 1e-12 * scale {
            return None;
        }
        let inv_det = 1.0 / det;
        let s = origin - self.v0;
        let u = s.dot(p) * inv_det;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let q = s.cross(e1);
        let v = dir.dot(q) * inv_det;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = e2.dot(q) * inv_det;
        if t > t_min && t < t_max {
            Some(t)
        } else {
            None
        }
    }

    /// Whether a point already known to lie on the triangle's plane is inside it.
    /// `tol` is a barycentric slack; use 0 for a strict closed test.
    pub fn contains_coplanar_point(&self, p: Vec3, tol: f64) -> bool {
        let e0 = self.v1 - self.v0;
        let e1 = self.v2 - self.v0;
        let w = p - self.v0;
        let d00 = e0.dot(e0);
        let d01 = e0.dot(e1);
        let d11 = e1.dot(e1);
        let d20 = w.dot(e0);
        let d21 = w.dot(e1);
        let denom = d00 * d11 - d01 * d01;
        if denom <= 0.0 {
            return false;
        }
        let v = (d11 * d20 - d01 * d21) / denom;
        let w2 = (d00 * d21 - d01 * d20) / denom;
        let u = 1.0 - v - w2;
        u >= -tol && v >= -tol && w2 >= -tol
    }

    /// Distance from `p` to the closest point of the triangle.
    pub fn distance_to_point(&self, p: Vec3) -> f64 {
        closest_point_on_triangle(p, self.v0, self.v1, self.v2).distance(p)
    }
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_on_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Triangle {
        Triangle::new(Vec3::ZERO, Vec3::X, Vec3::Y, 0, 0)
    }

    #[test]
    fn perpendicular_ray_through_centroid_hits_at_one_meter() {
        let tri = unit();
        let c = tri.centroid();
        let origin = c + Vec3::Z;
        let t = tri.intersect(origin, -Vec3::Z, 0.0, f64::INFINITY).unwrap();
        assert!((t - 1.0).abs() < 1e-15);
    }

    #[test]
    fn parallel_ray_misses() {
        let tri = unit();
        assert!(tri
            .intersect(Vec3::new(-1.0, 0.2, 0.0), Vec3::X, 0.0, f64::INFINITY)
            .is_none());
        assert!(tri
            .intersect(Vec3::new(-1.0, 0.2, 0.5), Vec3::X, 0.0, f64::INFINITY)
            .is_none());
    }

    #[test]
    fn degenerate_detection() {
        let t = Triangle::new(Vec3::ZERO, Vec3::X, Vec3::X * 2.0, 0, 0);
        assert!(t.is_degenerate());
        assert!(!unit().is_degenerate());
    }

    #[test]
    fn coplanar_containment() {
        let t = unit();
        assert!(t.contains_coplanar_point(Vec3::new(0.25, 0.25, 0.0), 0.0));
        assert!(!t.contains_coplanar_point(Vec3::new(0.75, 0.75, 0.0), 0.0));
    }

    #[test]
    fn closest_point_regions() {
        let t = unit();
        assert_eq!(t.distance_to_point(Vec3::new(0.2, 0.2, 3.0)), 3.0);
        assert!((t.distance_to_point(Vec3::new(-1.0, -1.0, 0.0)) - 2f64.sqrt()).abs() < 1e-15);
    }
}
