//! Scene geometry, bounding volume hierarchies, and ray queries.

mod aabb;
mod bvh;
mod scene;
mod triangle;
mod vector;

pub use aabb::Aabb;
pub use bvh::{brute_force_intersect, AabbTree, Bvh, Node, NodeKind, RayHit, RefitStats, DEFAULT_REBUILD_THRESHOLD, MAX_LEAF_SIZE};
pub use scene::{box_triangles, Material, MeshEdge, Scene, SceneObject, DEFAULT_BOX_SIZE, SHADOW_EPSILON};
pub use triangle::{closest_point_on_triangle, SurfaceRef, Triangle, MIN_TRIANGLE_AREA};
pub use vector::{Plane, Vec3};

use crate::error::Result;

pub fn build_bvh(triangles: Vec<Triangle>) -> Result<Bvh> {
    Bvh::build(triangles)
}

/// Refits `bvh` after the listed objects moved; `scene` supplies their current poses.
pub fn refit_bvh(bvh: &mut Bvh, scene: &Scene, moved: &[u32]) -> Result<usize> {
    let mut updates = Vec::with_capacity(moved.len());
    for &id in moved {
        let obj = scene.object(id).ok_or(crate::Error::UnknownObject(id))?;
        updates.push((id, obj.world_triangles()));
    }
    bvh.refit(&updates)
}

pub fn should_rebuild(bvh: &Bvh) -> bool {
    bvh.should_rebuild()
}

pub fn intersect(scene: &Scene, origin: Vec3, dir: Vec3, t_max: f64) -> Option<RayHit> {
    scene.intersect(origin, dir, t_max)
}

pub fn occluded(scene: &Scene, p: Vec3, q: Vec3) -> bool {
    scene.occluded(p, q)
}
