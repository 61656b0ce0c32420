//! Image tree for specular reflections.
//!
//! Each node mirrors its parent's image (or the transmitter) across one face.
//! The node's beam is the pyramid with apex at the image and cross-section at
//! the face, clipped to the reflecting side of the face plane. A face can only
//! continue a chain if it touches its parent's beam, and a receiver can only
//! end a chain if it lies in the last node's beam.

use crate::geometry::{Aabb, Bvh, Plane, Scene, SurfaceRef, Triangle, Vec3};

use super::{Interaction, InteractionKind};

/// Smallest distance between a source and a face plane for the face to act
/// as a mirror, m.
const MIN_IMAGE_DISTANCE: f64 = 1e-9;

/// Barycentric slack when testing reflection points against their face.
const POINT_IN_FACE_TOLERANCE: f64 = 1e-9;

/// Absolute outward slack of beam planes when selecting child faces, m.
const BEAM_SLACK: f64 = 1e-6;

#[derive(Clone, Debug)]
pub(crate) struct ImageNode {
    pub face: SurfaceRef,
    pub triangle: Triangle,
    /// Face plane with unit normal.
    pub plane: Plane,
    pub image: Vec3,
    pub parent: Option<u32>,
    pub depth: u8,
    pub coefficient: f64,
    /// Side planes through the image and each edge, then the face plane
    /// facing the reflecting side. Inside is non-negative.
    pub beam: [Plane; 4],
}

impl ImageNode {
    /// Mirrors `source` across `triangle`. `None` when the source lies on the
    /// face plane, where the mirror degenerates.
    pub fn new(
        source: Vec3,
        face: SurfaceRef,
        triangle: Triangle,
        coefficient: f64,
        parent: Option<u32>,
        depth: u8,
    ) -> Option<ImageNode> {
        let plane = triangle.plane();
        let s = plane.signed_distance(source);
        if !(s.abs() >= MIN_IMAGE_DISTANCE) {
            return None;
        }
        let image = plane.mirror(source);
        let [a, b, c] = triangle.vertices();
        let side = |p: Vec3, q: Vec3, r: Vec3| -> Option<Plane> {
            let n = (p - image).cross(q - image).try_normalize()?;
            let pl = Plane::from_point_normal(image, n);
            Some(if pl.signed_distance(r) < 0.0 { pl.flipped() } else { pl })
        };
        let front = if s > 0.0 { plane } else { plane.flipped() };
        let beam = [side(a, b, c)?, side(b, c, a)?, side(c, a, b)?, front];
        Some(ImageNode {
            face,
            triangle,
            plane,
            image,
            parent,
            depth,
            coefficient,
            beam,
        })
    }

    /// Bounding box of the beam inside `world`, padded for rounding. Empty
    /// when the beam misses `world`.
    pub fn beam_bounds(&self, world: &Aabb) -> Aabb {
        let d_perp = self.plane.signed_distance(self.image).abs();
        let reach = world.max_distance(self.image);
        let scale = (reach / d_perp).max(1.0);
        let verts = self.triangle.vertices();
        let far = verts.map(|v| self.image + (v - self.image) * scale);
        let hull = Aabb::from_points(verts.into_iter().chain(far));
        let clipped = hull.intersection(world);
        if clipped.is_empty() {
            return clipped;
        }
        let size = clipped.extent().length();
        clipped.expanded(1e-6 * (1.0 + size))
    }

    /// Beam planes loosened by [`BEAM_SLACK`] for conservative face culling.
    fn loose_beam(&self) -> [Plane; 4] {
        self.beam.map(|p| Plane {
            normal: p.normal,
            offset: p.offset + BEAM_SLACK,
        })
    }
}

fn coplanar(a: &Plane, b: &Plane) -> bool {
    let d = a.normal.dot(b.normal);
    if d.abs() < 1.0 - 1e-12 {
        return false;
    }
    let offset = if d > 0.0 { b.offset } else { -b.offset };
    (a.offset - offset).abs() < 1e-9
}

/// Appends a node per face of `bvh` that can extend `parent`'s chain. The
/// reflection coefficient of each face comes from `scene`.
pub(crate) fn push_children(
    scene: &Scene,
    bvh: &Bvh,
    parent_id: u32,
    parent: &ImageNode,
    world: &Aabb,
    out: &mut Vec<ImageNode>,
) {
    push_children_in(scene, bvh, parent_id, parent, &parent.beam_bounds(world), out);
}

/// [`push_children`] with the parent's beam box already computed.
pub(crate) fn push_children_in(
    scene: &Scene,
    bvh: &Bvh,
    parent_id: u32,
    parent: &ImageNode,
    bounds: &Aabb,
    out: &mut Vec<ImageNode>,
) {
    let bounds = *bounds;
    if bounds.is_empty() {
        return;
    }
    let planes = parent.loose_beam();
    let mut found: Vec<(SurfaceRef, Triangle)> = Vec::new();
    bvh.for_each_in_convex(&planes, &bounds, |prim, tri| {
        let r = bvh.triangle_ref(prim);
        if r != parent.face && tri.aabb().overlaps(&bounds) {
            found.push((r, *tri));
        }
    });
    // Traversal order depends on tree shape; keep node order stable.
    found.sort_unstable_by_key(|(r, _)| *r);
    for (r, tri) in found {
        if let Some(node) = child_node(scene, parent_id, parent, r, &tri) {
            out.push(node);
        }
    }
}

/// The node extending `parent` by a reflection on `tri`, unless the face is
/// the parent's own, coplanar with it, or seen edge-on from the image.
pub(crate) fn child_node(scene: &Scene, parent_id: u32, parent: &ImageNode, r: SurfaceRef, tri: &Triangle) -> Option<ImageNode> {
    if r == parent.face || coplanar(&parent.plane, &tri.plane()) {
        return None;
    }
    if faces_away(scene, tri, parent.image) {
        return None;
    }
    if r.object == parent.face.object && scene.object(r.object).is_some_and(|o| o.is_convex()) {
        return None;
    }
    let coef = scene.material(tri.material_id).reflection_coefficient;
    ImageNode::new(parent.image, r, *tri, coef, Some(parent_id), parent.depth + 1)
}

/// Whether `source` sees the inside of a closed object through `tri`. The
/// incoming leg would then have to cross the object's own surface.
fn faces_away(scene: &Scene, tri: &Triangle, source: Vec3) -> bool {
    scene.object(tri.object_id).is_some_and(|o| o.is_closed()) && tri.plane().signed_distance(source) < 0.0
}

/// Appends one root node per face of `bvh`, mirroring `tx`.
pub(crate) fn push_roots(scene: &Scene, bvh: &Bvh, tx: Vec3, out: &mut Vec<ImageNode>) {
    let mut faces: Vec<(SurfaceRef, Triangle)> =
        bvh.triangles().iter().enumerate().map(|(i, t)| (bvh.triangle_ref(i as u32), *t)).collect();
    faces.sort_unstable_by_key(|(r, _)| *r);
    for (r, tri) in faces {
        if faces_away(scene, &tri, tx) {
            continue;
        }
        let coef = scene.material(tri.material_id).reflection_coefficient;
        if let Some(node) = ImageNode::new(tx, r, tri, coef, None, 1) {
            out.push(node);
        }
    }
}

/// Where the leg from `node`'s image to `target` crosses its face, if it
/// crosses inside the face and arrives from the reflecting side.
pub(crate) fn reflection_point(node: &ImageNode, target: Vec3) -> Option<Vec3> {
    let si = node.plane.signed_distance(node.image);
    let st = node.plane.signed_distance(target);
    if !(si * st < 0.0) || st.abs() < MIN_IMAGE_DISTANCE {
        return None;
    }
    let p = node.image + (target - node.image) * (si / (si - st));
    node.triangle.contains_coplanar_point(p, POINT_IN_FACE_TOLERANCE).then_some(p)
}

/// Reflection points of the chain `nodes` (transmitter side first) for a
/// receiver at `rx`, found by intersecting receiver-to-image lines with each
/// face in turn. `None` if any point falls outside its face or a leg does not
/// cross a face plane from the reflecting side. Visibility is not checked.
pub(crate) fn chain_points(nodes: &[&ImageNode], rx: Vec3) -> Option<Vec<Interaction>> {
    let mut points = vec![Vec3::ZERO; nodes.len()];
    let mut target = rx;
    for (slot, node) in points.iter_mut().zip(nodes.iter()).rev() {
        let p = reflection_point(node, target)?;
        *slot = p;
        target = p;
    }
    Some(
        nodes
            .iter()
            .zip(points)
            .map(|(n, point)| Interaction {
                kind: InteractionKind::Reflection,
                surface: n.face,
                point,
            })
            .collect(),
    )
}

/// Whether every leg of `tx → points… → rx` is clear.
pub(crate) fn legs_clear(scene: &Scene, tx: Vec3, points: &[Interaction], rx: Vec3, rays: &mut u64) -> bool {
    let mut prev = tx;
    for p in points.iter().map(|i| i.point).chain(std::iter::once(rx)) {
        *rays += 1;
        if scene.occluded(prev, p) {
            return false;
        }
        prev = p;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ground() -> Triangle {
        Triangle::new(Vec3::new(-100.0, -100.0, 0.0), Vec3::new(100.0, -100.0, 0.0), Vec3::new(0.0, 100.0, 0.0), 0, 0)
    }

    #[test]
    fn ground_bounce_point() {
        let tx = Vec3::new(0.0, 0.0, 10.0);
        let rx = Vec3::new(50.0, 0.0, 2.0);
        let node = ImageNode::new(tx, SurfaceRef::new(0, 0), ground(), 0.8, None, 1).unwrap();
        assert_eq!(node.image, Vec3::new(0.0, 0.0, -10.0));
        let pts = chain_points(&[&node], rx).unwrap();
        // similar triangles: the bounce sits 10/12 of the way along the ground
        let want = Vec3::new(50.0 * 10.0 / 12.0, 0.0, 0.0);
        assert!(pts[0].point.distance(want) < 1e-12);
        let len = tx.distance(pts[0].point) + pts[0].point.distance(rx);
        assert!((len - (50f64 * 50.0 + 12.0 * 12.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn source_on_plane_has_no_image() {
        assert!(ImageNode::new(Vec3::new(1.0, 1.0, 0.0), SurfaceRef::new(0, 0), ground(), 0.8, None, 1).is_none());
    }

    #[test]
    fn receiver_behind_face_is_rejected() {
        let node = ImageNode::new(Vec3::new(0.0, 0.0, 10.0), SurfaceRef::new(0, 0), ground(), 0.8, None, 1).unwrap();
        assert!(chain_points(&[&node], Vec3::new(5.0, 0.0, -2.0)).is_none());
    }

    #[test]
    fn beam_bounds_cover_reachable_points() {
        let node = ImageNode::new(Vec3::new(0.0, 0.0, 10.0), SurfaceRef::new(0, 0), ground(), 0.8, None, 1).unwrap();
        let world = Aabb::new(Vec3::splat(-500.0), Vec3::splat(500.0));
        let b = node.beam_bounds(&world);
        for rx in [Vec3::new(50.0, 0.0, 2.0), Vec3::new(-300.0, 200.0, 400.0), Vec3::new(0.0, 0.0, 499.0)] {
            if chain_points(&[&node], rx).is_some() {
                assert!(b.contains_point(rx));
            }
        }
    }
}
