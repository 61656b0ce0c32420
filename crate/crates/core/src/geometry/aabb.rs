use serde::{Deserialize, Serialize};

use super::vector::{Plane, Vec3};

/// Axis-aligned bounding box. An empty box has `min > max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Default for Aabb {
    fn default() -> Self {
        Aabb::empty()
    }
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Aabb {
        Aabb { min, max }
    }

    pub fn empty() -> Aabb {
        Aabb {
            min: Vec3::splat(f64::INFINITY),
            max: Vec3::splat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<I: IntoIterator<Item = Vec3>>(points: I) -> Aabb {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y || self.min.z > self.max.z
    }

    #[inline]
    pub fn grow(&mut self, p: Vec3) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }

    #[inline]
    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.min(o.min),
            max: self.max.max(o.max),
        }
    }

    pub fn intersection(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.max(o.min),
            max: self.max.min(o.max),
        }
    }

    pub fn expanded(&self, margin: f64) -> Aabb {
        Aabb {
            min: self.min - Vec3::splat(margin),
            max: self.max + Vec3::splat(margin),
        }
    }

    pub fn translated(&self, d: Vec3) -> Aabb {
        Aabb {
            min: self.min + d,
            max: self.max + d,
        }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn surface_area(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let e = self.extent();
        2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
    }

    pub fn contains(&self, o: &Aabb) -> bool {
        self.min.x <= o.min.x
            && self.min.y <= o.min.y
            && self.min.z <= o.min.z
            && self.max.x >= o.max.x
            && self.max.y >= o.max.y
            && self.max.z >= o.max.z
    }

    #[inline]
    pub fn contains_point(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    #[inline]
    pub fn overlaps(&self, o: &Aabb) -> bool {
        self.min.x <= o.max.x
            && self.max.x >= o.min.x
            && self.min.y <= o.max.y
            && self.max.y >= o.min.y
            && self.min.z <= o.max.z
            && self.max.z >= o.min.z
    }

    /// Largest distance from `p` to any point of the box.
    pub fn max_distance(&self, p: Vec3) -> f64 {
        let far = Vec3::new(
            (p.x - self.min.x).abs().max((p.x - self.max.x).abs()),
            (p.y - self.min.y).abs().max((p.y - self.max.y).abs()),
            (p.z - self.min.z).abs().max((p.z - self.max.z).abs()),
        );
        far.length()
    }

    /// Slab test. Returns the parametric entry/exit interval clipped to `[t_min, t_max]`.
    #[inline]
    pub fn ray_interval(&self, origin: Vec3, inv_dir: Vec3, t_min: f64, t_max: f64) -> Option<(f64, f64)> {
        let mut lo = t_min;
        let mut hi = t_max;
        for axis in 0..3 {
            let inv = inv_dir[axis];
            let mut t0 = (self.min[axis] - origin[axis]) * inv;
            let mut t1 = (self.max[axis] - origin[axis]) * inv;
            if t0.is_nan() {
                // origin on the slab boundary with a zero direction component
                t0 = f64::NEG_INFINITY;
            }
            if t1.is_nan() {
                t1 = f64::INFINITY;
            }
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            lo = lo.max(t0);
            hi = hi.min(t1);
            if lo > hi {
                return None;
            }
        }
        Some((lo, hi))
    }

    /// True when the whole box lies strictly on the negative side of `plane`.
    #[inline]
    pub fn outside_plane(&self, plane: &Plane) -> bool {
        let n = plane.normal;
        let corner = Vec3::new(
            if n.x >= 0.0 { self.max.x } else { self.min.x },
            if n.y >= 0.0 { self.max.y } else { self.min.y },
            if n.z >= 0.0 { self.max.z } else { self.min.z },
        );
        plane.signed_distance(corner) < 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_contains_both() {
        let a = Aabb::new(Vec3::ZERO, Vec3::splat(1.0));
        let b = Aabb::new(Vec3::splat(2.0), Vec3::splat(3.0));
        let u = a.union(&b);
        assert!(u.contains(&a) && u.contains(&b));
        assert!(!a.overlaps(&b));
    }

    #[test]
    fn slab_test_handles_axis_parallel_rays() {
        let b = Aabb::new(Vec3::ZERO, Vec3::splat(1.0));
        let dir = Vec3::X;
        let hit = b.ray_interval(Vec3::new(-1.0, 0.5, 0.5), dir.recip(), 0.0, 10.0);
        assert_eq!(hit, Some((1.0, 2.0)));
        let miss = b.ray_interval(Vec3::new(-1.0, 1.5, 0.5), dir.recip(), 0.0, 10.0);
        assert_eq!(miss, None);
    }

    #[test]
    fn plane_culling() {
        let b = Aabb::new(Vec3::ZERO, Vec3::splat(1.0));
        let p = Plane::from_point_normal(Vec3::new(2.0, 0.0, 0.0), Vec3::X);
        assert!(b.outside_plane(&p));
        assert!(!b.outside_plane(&p.flipped()));
    }
}
