//! Bounding volume hierarchies.
//!
//! [`AabbTree`] is a binary tree over arbitrary boxes, built by splitting the
//! centroid bounds at the median of their longest axis. Nodes are stored in
//! depth-first preorder, so every child has a larger index than its parent;
//! refitting walks dirty nodes in reverse index order.
//!
//! [`Bvh`] wraps a tree over triangles and answers ray, segment and
//! convex-region queries. Refit keeps the topology and only re-expands boxes,
//! tracking surface-area-heuristic (SAH) cost so callers can decide when a full
//! rebuild pays off.

use std::collections::BTreeMap;

use super::aabb::Aabb;
use super::triangle::{SurfaceRef, Triangle};
use super::vector::{Plane, Vec3};
use crate::error::{Error, Result};

/// Maximum number of primitives stored in a leaf.
pub const MAX_LEAF_SIZE: usize = 4;

/// Default SAH cost ratio above which [`Bvh::should_rebuild`] fires.
pub const DEFAULT_REBUILD_THRESHOLD: f64 = 1.5;

const NO_PARENT: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NodeKind {
    Leaf { first: u32, count: u32 },
    Inner { left: u32, right: u32 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub aabb: Aabb,
    pub kind: NodeKind,
    pub parent: u32,
}

/// Binary AABB tree over primitives identified by their index in the input slice.
#[derive(Clone, Debug, PartialEq)]
pub struct AabbTree {
    nodes: Vec<Node>,
    /// Primitive indices, permuted so every leaf covers a contiguous range.
    order: Vec<u32>,
    /// Leaf node holding each primitive.
    leaf_of: Vec<u32>,
}

impl AabbTree {
    /// Builds a tree over `boxes`. Panics on empty input; callers check first.
    pub fn build(boxes: &[Aabb]) -> AabbTree {
        assert!(!boxes.is_empty(), "AabbTree::build on empty input");
        let centroids: Vec<Vec3> = boxes.iter().map(Aabb::center).collect();
        let mut tree = AabbTree {
            nodes: Vec::with_capacity(2 * boxes.len() / MAX_LEAF_SIZE + 1),
            order: (0..boxes.len() as u32).collect(),
            leaf_of: vec![0; boxes.len()],
        };
        tree.build_range(boxes, &centroids, 0, boxes.len(), NO_PARENT);
        tree
    }

    fn build_range(&mut self, boxes: &[Aabb], centroids: &[Vec3], start: usize, end: usize, parent: u32) -> u32 {
        let index = self.nodes.len() as u32;
        let mut bounds = Aabb::empty();
        let mut cbounds = Aabb::empty();
        for &p in &self.order[start..end] {
            bounds = bounds.union(&boxes[p as usize]);
            cbounds.grow(centroids[p as usize]);
        }
        let count = end - start;
        self.nodes.push(Node {
            aabb: bounds,
            kind: NodeKind::Leaf {
                first: start as u32,
                count: count as u32,
            },
            parent,
        });
        if count <= MAX_LEAF_SIZE {
            for &p in &self.order[start..end] {
                self.leaf_of[p as usize] = index;
            }
            return index;
        }

        let axis = cbounds.extent().max_axis();
        let mid = start + count / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            let ca = centroids[a as usize][axis];
            let cb = centroids[b as usize][axis];
            ca.total_cmp(&cb).then(a.cmp(&b))
        });
        let left = self.build_range(boxes, centroids, start, mid, index);
        let right = self.build_range(boxes, centroids, mid, end, index);
        self.nodes[index as usize].kind = NodeKind::Inner { left, right };
        index
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn root_bounds(&self) -> Aabb {
        self.nodes[0].aabb
    }

    /// Primitive indices stored in a leaf.
    pub fn leaf_prims(&self, first: u32, count: u32) -> &[u32] {
        &self.order[first as usize..(first + count) as usize]
    }

    pub fn leaf_of(&self, prim: u32) -> u32 {
        self.leaf_of[prim as usize]
    }

    /// SAH cost with unit traversal and intersection costs, normalized by the
    /// root surface area.
    pub fn sah_cost(&self) -> f64 {
        let root_area = self.nodes[0].aabb.surface_area();
        if root_area <= 0.0 {
            // Flat or point-like scene; fall back to raw primitive counts.
            return self.nodes.len() as f64;
        }
        self.nodes
            .iter()
            .map(|n| {
                let rel = n.aabb.surface_area() / root_area;
                match n.kind {
                    NodeKind::Leaf { count, .. } => rel * count as f64,
                    NodeKind::Inner { .. } => rel,
                }
            })
            .sum()
    }

    /// Re-expands the boxes of the leaves holding `prims` and all their
    /// ancestors. Returns the number of nodes rewritten.
    pub fn refit(&mut self, prims: &[u32], boxes: &[Aabb]) -> usize {
        if prims.is_empty() {
            return 0;
        }
        let mut dirty = vec![false; self.nodes.len()];
        for &p in prims {
            let mut node = self.leaf_of[p as usize];
            while node != NO_PARENT && !dirty[node as usize] {
                dirty[node as usize] = true;
                node = self.nodes[node as usize].parent;
            }
        }
        let mut updated = 0;
        for i in (0..self.nodes.len()).rev() {
            if !dirty[i] {
                continue;
            }
            let aabb = match self.nodes[i].kind {
                NodeKind::Leaf { first, count } => self
                    .leaf_prims(first, count)
                    .iter()
                    .fold(Aabb::empty(), |acc, &p| acc.union(&boxes[p as usize])),
                NodeKind::Inner { left, right } => {
                    self.nodes[left as usize].aabb.union(&self.nodes[right as usize].aabb)
                }
            };
            self.nodes[i].aabb = aabb;
            updated += 1;
        }
        updated
    }

    /// Visits every primitive in a leaf whose box passes `accept`. Subtrees
    /// whose box fails are skipped.
    pub fn visit<A, V>(&self, mut accept: A, mut visit: V)
    where
        A: FnMut(&Aabb) -> bool,
        V: FnMut(u32),
    {
        let mut stack = Vec::with_capacity(64);
        stack.push(0u32);
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i as usize];
            if !accept(&node.aabb) {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { first, count } => {
                    for &p in self.leaf_prims(first, count) {
                        visit(p);
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
    }

    /// Checks that every primitive box is contained in its leaf and in all
    /// ancestors, and that the node count bound holds.
    pub fn check_containment(&self, boxes: &[Aabb]) -> bool {
        if self.nodes.len() > 2 * boxes.len() - 1 {
            return false;
        }
        for (p, b) in boxes.iter().enumerate() {
            let mut node = self.leaf_of[p];
            while node != NO_PARENT {
                if !self.nodes[node as usize].aabb.contains(b) {
                    return false;
                }
                node = self.nodes[node as usize].parent;
            }
        }
        true
    }
}

/// Nearest intersection along a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub point: Vec3,
    /// Unit normal oriented against the incoming ray.
    pub normal: Vec3,
    pub triangle: SurfaceRef,
}

/// Outcome of a refit, for instrumentation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RefitStats {
    pub nodes_updated: usize,
    pub total_nodes: usize,
    pub rebuilt: bool,
}

/// Triangle BVH with per-object bookkeeping for refits.
#[derive(Clone, Debug, PartialEq)]
pub struct Bvh {
    tree: AabbTree,
    triangles: Vec<Triangle>,
    boxes: Vec<Aabb>,
    /// Face index of each triangle within its object.
    faces: Vec<u32>,
    object_prims: BTreeMap<u32, Vec<u32>>,
    build_cost: f64,
    current_cost: f64,
    rebuild_threshold: f64,
}

impl Bvh {
    /// Builds a BVH. Face indices are assigned per object in input order.
    pub fn build(triangles: Vec<Triangle>) -> Result<Bvh> {
        if triangles.is_empty() {
            return Err(Error::EmptyScene);
        }
        let mut object_prims: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        let mut faces = Vec::with_capacity(triangles.len());
        for (i, tri) in triangles.iter().enumerate() {
            let prims = object_prims.entry(tri.object_id).or_default();
            if tri.is_degenerate() {
                return Err(Error::DegenerateTriangle {
                    object: tri.object_id,
                    index: prims.len() as u32,
                });
            }
            faces.push(prims.len() as u32);
            prims.push(i as u32);
        }
        let boxes: Vec<Aabb> = triangles.iter().map(Triangle::aabb).collect();
        let tree = AabbTree::build(&boxes);
        let cost = tree.sah_cost();
        Ok(Bvh {
            tree,
            triangles,
            boxes,
            faces,
            object_prims,
            build_cost: cost,
            current_cost: cost,
            rebuild_threshold: DEFAULT_REBUILD_THRESHOLD,
        })
    }

    pub fn with_rebuild_threshold(mut self, threshold: f64) -> Bvh {
        self.rebuild_threshold = threshold;
        self
    }

    pub fn tree(&self) -> &AabbTree {
        &self.tree
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn triangle_ref(&self, prim: u32) -> SurfaceRef {
        SurfaceRef::new(self.triangles[prim as usize].object_id, self.faces[prim as usize])
    }

    pub fn bounds(&self) -> Aabb {
        self.tree.root_bounds()
    }

    pub fn node_count(&self) -> usize {
        self.tree.node_count()
    }

    pub fn build_cost(&self) -> f64 {
        self.build_cost
    }

    pub fn current_cost(&self) -> f64 {
        self.current_cost
    }

    pub fn cost_ratio(&self) -> f64 {
        self.current_cost / self.build_cost
    }

    pub fn should_rebuild(&self) -> bool {
        self.cost_ratio() > self.rebuild_threshold
    }

    pub fn object_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.object_prims.keys().copied()
    }

    /// Replaces the triangles of the given objects (same count and order as at
    /// build time) and refits the affected subtrees.
    pub fn refit(&mut self, updates: &[(u32, Vec<Triangle>)]) -> Result<usize> {
        let mut touched = Vec::new();
        for (object, tris) in updates {
            let prims = self.object_prims.get(object).ok_or(Error::UnknownObject(*object))?;
            if prims.len() != tris.len() {
                return Err(Error::InvalidArgument(format!(
                    "object {object}: refit with {} triangles, built with {}",
                    tris.len(),
                    prims.len()
                )));
            }
            for (&p, tri) in prims.iter().zip(tris) {
                self.triangles[p as usize] = *tri;
                self.boxes[p as usize] = tri.aabb();
                touched.push(p);
            }
        }
        let updated = self.tree.refit(&touched, &self.boxes);
        if updated > 0 {
            self.current_cost = self.tree.sah_cost();
        }
        Ok(updated)
    }

    /// Rebuilds from the current triangles, resetting the cost baseline.
    pub fn rebuild(&mut self) {
        let threshold = self.rebuild_threshold;
        let tris = std::mem::take(&mut self.triangles);
        *self = Bvh::build(tris)
            .expect("rebuild of a previously valid BVH")
            .with_rebuild_threshold(threshold);
    }

    pub fn check_containment(&self) -> bool {
        self.tree.check_containment(&self.boxes)
    }

    /// Nearest hit with `0 < t < t_max`. Ties on `t` resolve to the smallest
    /// [`SurfaceRef`] so results do not depend on traversal order.
    pub fn intersect(&self, origin: Vec3, dir: Vec3, t_max: f64) -> Option<RayHit> {
        let inv = dir.recip();
        let nodes = self.tree.nodes();
        let mut best: Option<(f64, u32)> = None;
        let mut limit = t_max;
        let mut stack = Vec::with_capacity(64);
        stack.push(0u32);
        while let Some(i) = stack.pop() {
            let node = &nodes[i as usize];
            // Inclusive limit so equal-t candidates still get the tie-break.
            let Some((entry, _)) = node.aabb.ray_interval(origin, inv, 0.0, limit) else {
                continue;
            };
            if entry > limit {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { first, count } => {
                    for &p in self.tree.leaf_prims(first, count) {
                        let tri = &self.triangles[p as usize];
                        let Some(t) = tri.intersect(origin, dir, 0.0, t_max) else {
                            continue;
                        };
                        if t > limit {
                            continue;
                        }
                        let better = match best {
                            None => true,
                            Some((bt, bp)) => {
                                t < bt || (t == bt && self.triangle_ref(p) < self.triangle_ref(bp))
                            }
                        };
                        if better {
                            best = Some((t, p));
                            limit = t;
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let (l, r) = (&nodes[left as usize], &nodes[right as usize]);
                    let dl = l.aabb.ray_interval(origin, inv, 0.0, limit).map(|x| x.0);
                    let dr = r.aabb.ray_interval(origin, inv, 0.0, limit).map(|x| x.0);
                    match (dl, dr) {
                        (Some(a), Some(b)) => {
                            if a <= b {
                                stack.push(right);
                                stack.push(left);
                            } else {
                                stack.push(left);
                                stack.push(right);
                            }
                        }
                        (Some(_), None) => stack.push(left),
                        (None, Some(_)) => stack.push(right),
                        (None, None) => {}
                    }
                }
            }
        }
        best.map(|(t, p)| self.make_hit(origin, dir, t, p))
    }

    fn make_hit(&self, origin: Vec3, dir: Vec3, t: f64, prim: u32) -> RayHit {
        let tri = &self.triangles[prim as usize];
        let mut normal = tri.unit_normal();
        if normal.dot(dir) > 0.0 {
            normal = -normal;
        }
        RayHit {
            t,
            point: origin + dir * t,
            normal,
            triangle: self.triangle_ref(prim),
        }
    }

    /// Whether any triangle is hit with `t_min < t < t_max`.
    pub fn any_hit(&self, origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> bool {
        let inv = dir.recip();
        let nodes = self.tree.nodes();
        let mut stack = Vec::with_capacity(64);
        stack.push(0u32);
        while let Some(i) = stack.pop() {
            let node = &nodes[i as usize];
            if node.aabb.ray_interval(origin, inv, t_min, t_max).is_none() {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { first, count } => {
                    for &p in self.tree.leaf_prims(first, count) {
                        if self.triangles[p as usize].intersect(origin, dir, t_min, t_max).is_some() {
                            return true;
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        false
    }

    /// Calls `f` for every triangle hit with `t_min < t < t_max`.
    pub fn for_each_hit<F: FnMut(&Triangle, f64)>(&self, origin: Vec3, dir: Vec3, t_min: f64, t_max: f64, mut f: F) {
        let inv = dir.recip();
        self.tree.visit(
            |b| b.ray_interval(origin, inv, t_min, t_max).is_some(),
            |p| {
                let tri = &self.triangles[p as usize];
                if let Some(t) = tri.intersect(origin, dir, t_min, t_max) {
                    f(tri, t);
                }
            },
        );
    }

    /// Visits triangles that may intersect the convex region bounded by
    /// `planes` (inside = non-negative side). Conservative: triangles with all
    /// vertices strictly outside one plane are skipped, others are reported.
    pub fn for_each_in_convex<F: FnMut(u32, &Triangle)>(&self, planes: &[Plane], bounds: &Aabb, mut f: F) {
        self.tree.visit(
            |b| b.overlaps(bounds) && !planes.iter().any(|pl| b.outside_plane(pl)),
            |p| {
                let tri = &self.triangles[p as usize];
                let outside = planes.iter().any(|pl| {
                    pl.signed_distance(tri.v0) < 0.0
                        && pl.signed_distance(tri.v1) < 0.0
                        && pl.signed_distance(tri.v2) < 0.0
                });
                if !outside {
                    f(p, tri);
                }
            },
        );
    }
}

/// Brute-force nearest hit over a triangle list with the same tie-break as
/// [`Bvh::intersect`]. Used as a reference in tests and for tiny scenes.
pub fn brute_force_intersect(triangles: &[(Triangle, SurfaceRef)], origin: Vec3, dir: Vec3, t_max: f64) -> Option<(f64, SurfaceRef)> {
    let mut best: Option<(f64, SurfaceRef)> = None;
    for (tri, r) in triangles {
        if let Some(t) = tri.intersect(origin, dir, 0.0, t_max) {
            best = match best {
                Some((bt, br)) if bt < t || (bt == t && br < *r) => Some((bt, br)),
                _ => Some((t, *r)),
            };
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_triangles(n: usize, seed: u64) -> Vec<Triangle> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let c = Vec3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(0.0..20.0));
                let mut v = || c + Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                Triangle::new(v(), v(), v(), 0, (i / 4) as u32)
            })
            .filter(|t| !t.is_degenerate())
            .collect()
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(Bvh::build(vec![]), Err(Error::EmptyScene)));
    }

    #[test]
    fn single_triangle_bvh_bounds_equal_triangle() {
        let tri = Triangle::new(Vec3::ZERO, Vec3::X, Vec3::Y, 0, 0);
        let bvh = Bvh::build(vec![tri]).unwrap();
        assert_eq!(bvh.node_count(), 1);
        assert_eq!(bvh.bounds(), tri.aabb());
        assert!(!bvh.should_rebuild());
    }

    #[test]
    fn two_disjoint_triangles_root_is_union() {
        let a = Triangle::new(Vec3::ZERO, Vec3::X, Vec3::Y, 0, 0);
        let b = a.translated(Vec3::new(10.0, 0.0, 5.0));
        let bvh = Bvh::build(vec![a, b]).unwrap();
        assert_eq!(bvh.bounds(), a.aabb().union(&b.aabb()));
    }

    #[test]
    fn leaves_hold_at_most_four_and_containment_holds() {
        let tris = random_triangles(997, 3);
        let bvh = Bvh::build(tris).unwrap();
        assert!(bvh.check_containment());
        for n in bvh.tree().nodes() {
            if let NodeKind::Leaf { count, .. } = n.kind {
                assert!(count as usize <= MAX_LEAF_SIZE);
            }
        }
    }

    #[test]
    fn intersect_matches_brute_force() {
        let tris = random_triangles(600, 11);
        let refs: Vec<(Triangle, SurfaceRef)> = {
            let bvh = Bvh::build(tris.clone()).unwrap();
            (0..tris.len() as u32).map(|p| (bvh.triangles()[p as usize], bvh.triangle_ref(p))).collect()
        };
        let bvh = Bvh::build(tris).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let o = Vec3::new(rng.random_range(-80.0..80.0), rng.random_range(-80.0..80.0), rng.random_range(-5.0..30.0));
            let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
            let got = bvh.intersect(o, d, 500.0).map(|h| (h.t, h.triangle));
            let want = brute_force_intersect(&refs, o, d, 500.0);
            assert_eq!(got, want);
            assert_eq!(bvh.any_hit(o, d, 0.0, 500.0), want.is_some());
        }
    }

    #[test]
    fn hit_normal_faces_ray() {
        let tri = Triangle::new(Vec3::ZERO, Vec3::X, Vec3::Y, 0, 0);
        let bvh = Bvh::build(vec![tri]).unwrap();
        for dz in [1.0, -1.0] {
            let hit = bvh.intersect(Vec3::new(0.2, 0.2, dz), Vec3::new(0.0, 0.0, -dz), 10.0).unwrap();
            assert!(hit.normal.dot(Vec3::new(0.0, 0.0, -dz)) < 0.0);
        }
    }

    #[test]
    fn refit_with_no_moves_is_identity() {
        let bvh = Bvh::build(random_triangles(100, 1)).unwrap();
        let mut refit = bvh.clone();
        assert_eq!(refit.refit(&[]).unwrap(), 0);
        assert_eq!(refit, bvh);
    }

    #[test]
    fn refit_unknown_object_errors() {
        let mut bvh = Bvh::build(random_triangles(10, 1)).unwrap();
        assert!(matches!(bvh.refit(&[(999, vec![])]), Err(Error::UnknownObject(999))));
    }
}
