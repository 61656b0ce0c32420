use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::aabb::Aabb;
use super::bvh::{Bvh, RayHit, RefitStats, DEFAULT_REBUILD_THRESHOLD};
use super::triangle::{SurfaceRef, Triangle};
use super::vector::Vec3;
use crate::error::{Error, Result};

/// Endpoint slack applied to visibility segments so a ray leaving a surface
/// does not hit that surface again.
pub const SHADOW_EPSILON: f64 = 1e-4;

/// Car-sized default mesh for moving objects without their own geometry, meters.
pub const DEFAULT_BOX_SIZE: Vec3 = Vec3::new(4.5, 1.8, 1.5);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    /// Amplitude reflection coefficient in `[0, 1]`.
    pub reflection_coefficient: f64,
    pub thickness_mm: Option<f64>,
    /// Parsed and kept, never applied: transmission through walls is not modeled.
    pub penetration_loss_db: Option<f64>,
}

impl Material {
    pub fn new(name: impl Into<String>, reflection_coefficient: f64) -> Material {
        Material {
            name: name.into(),
            reflection_coefficient,
            thickness_mm: None,
            penetration_loss_db: None,
        }
    }

    /// Concrete wall: Γ = 0.8.
    pub fn wall() -> Material {
        Material::new("Wall", 0.8)
    }

    /// 10 mm metal sheet: Γ = 0.9, 10 dB penetration loss.
    pub fn metal() -> Material {
        Material {
            name: "Metal".into(),
            reflection_coefficient: 0.9,
            thickness_mm: Some(10.0),
            penetration_loss_db: Some(10.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidMaterial {
            name: self.name.clone(),
            reason: reason.into(),
        };
        if !(0.0..=1.0).contains(&self.reflection_coefficient) {
            return Err(bad("reflection coefficient outside [0, 1]"));
        }
        if matches!(self.penetration_loss_db, Some(l) if !(l >= 0.0)) {
            return Err(bad("negative penetration loss"));
        }
        if matches!(self.thickness_mm, Some(t) if !(t >= 0.0)) {
            return Err(bad("negative thickness"));
        }
        Ok(())
    }
}

/// A geometric edge of an object mesh, in the object's local frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshEdge {
    pub a: Vec3,
    pub b: Vec3,
    /// Local indices of the faces sharing this edge; `None` for boundary edges.
    pub faces: (u32, Option<u32>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneObject {
    pub id: u32,
    pub name: String,
    /// Triangles in the object's local frame; world position is `pose` + local.
    pub mesh: Vec<Triangle>,
    pub is_dynamic: bool,
    pub pose: Vec3,
    pub velocity: Vec3,
    edges: Vec<MeshEdge>,
    closed: bool,
    convex: bool,
}

impl SceneObject {
    pub fn new_static(id: u32, name: impl Into<String>, mut mesh: Vec<Triangle>) -> SceneObject {
        for t in &mut mesh {
            t.object_id = id;
        }
        let edges = extract_edges(&mesh);
        let closed = is_closed_outward(&mesh);
        let convex = closed && is_convex(&mesh);
        SceneObject {
            id,
            name: name.into(),
            mesh,
            is_dynamic: false,
            pose: Vec3::ZERO,
            velocity: Vec3::ZERO,
            edges,
            closed,
            convex,
        }
    }

    pub fn new_dynamic(id: u32, name: impl Into<String>, mesh: Vec<Triangle>, pose: Vec3, velocity: Vec3) -> SceneObject {
        let mut o = SceneObject::new_static(id, name, mesh);
        o.is_dynamic = true;
        o.pose = pose;
        o.velocity = velocity;
        o
    }

    /// Axis-aligned box with its base centered on the local origin.
    pub fn box_mesh(size: Vec3, material_id: u32) -> Vec<Triangle> {
        let h = Vec3::new(size.x / 2.0, size.y / 2.0, 0.0);
        let lo = Vec3::new(-h.x, -h.y, 0.0);
        let hi = Vec3::new(h.x, h.y, size.z);
        box_triangles(lo, hi, material_id)
    }

    pub fn world_triangles(&self) -> Vec<Triangle> {
        self.mesh.iter().map(|t| t.translated(self.pose)).collect()
    }

    pub fn world_triangle(&self, index: u32) -> Triangle {
        self.mesh[index as usize].translated(self.pose)
    }

    pub fn edges(&self) -> &[MeshEdge] {
        &self.edges
    }

    /// Whether the mesh is watertight and wound outward, so that no path
    /// from outside can reach the back of any of its faces.
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Closed, and every vertex lies on or behind every face plane. A ray
    /// leaving one face never meets another face of the same object.
    pub fn is_convex(&self) -> bool {
        self.convex
    }

    pub fn world_bounds(&self) -> Aabb {
        Aabb::from_points(self.mesh.iter().flat_map(|t| t.vertices())).translated(self.pose)
    }
}

/// Twelve outward-wound triangles of the box `[lo, hi]`.
pub fn box_triangles(lo: Vec3, hi: Vec3, material_id: u32) -> Vec<Triangle> {
    let c = |x: bool, y: bool, z: bool| {
        Vec3::new(
            if x { hi.x } else { lo.x },
            if y { hi.y } else { lo.y },
            if z { hi.z } else { lo.z },
        )
    };
    let quads = [
        // -x, +x, -y, +y, -z, +z; counter-clockwise seen from outside
        [c(false, false, false), c(false, false, true), c(false, true, true), c(false, true, false)],
        [c(true, false, false), c(true, true, false), c(true, true, true), c(true, false, true)],
        [c(false, false, false), c(true, false, false), c(true, false, true), c(false, false, true)],
        [c(false, true, false), c(false, true, true), c(true, true, true), c(true, true, false)],
        [c(false, false, false), c(false, true, false), c(true, true, false), c(true, false, false)],
        [c(false, false, true), c(true, false, true), c(true, true, true), c(false, true, true)],
    ];
    let mut out = Vec::with_capacity(12);
    for q in quads {
        out.push(Triangle::new(q[0], q[1], q[2], material_id, 0));
        out.push(Triangle::new(q[0], q[2], q[3], material_id, 0));
    }
    out
}

/// Every directed edge matched by exactly one reversed twin, and positive
/// enclosed volume. Vertices are matched by exact position.
fn is_closed_outward(mesh: &[Triangle]) -> bool {
    if mesh.len() < 4 {
        return false;
    }
    let key = |p: Vec3| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
    let mut directed: HashMap<([u64; 3], [u64; 3]), u32> = HashMap::new();
    for tri in mesh {
        let v = tri.vertices();
        for k in 0..3 {
            *directed.entry((key(v[k]), key(v[(k + 1) % 3]))).or_insert(0) += 1;
        }
    }
    let paired = directed.iter().all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1));
    let volume: f64 = mesh.iter().map(|t| t.v0.dot(t.v1.cross(t.v2))).sum();
    paired && volume > 0.0
}

fn is_convex(mesh: &[Triangle]) -> bool {
    let scale = mesh.iter().flat_map(|t| t.vertices()).map(|v| v.length()).fold(1.0, f64::max);
    mesh.iter().all(|f| {
        let plane = f.plane();
        mesh.iter().flat_map(|t| t.vertices()).all(|v| plane.signed_distance(v) <= 1e-9 * scale)
    })
}

/// Geometric edges of a triangle soup. Edges shared by two coplanar faces
/// (quad diagonals) are dropped; vertices are matched by exact position.
fn extract_edges(mesh: &[Triangle]) -> Vec<MeshEdge> {
    type Key = ([u64; 3], [u64; 3]);
    let key = |p: Vec3| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
    let mut map: HashMap<Key, usize> = HashMap::new();
    let mut edges: Vec<MeshEdge> = Vec::new();
    for (fi, tri) in mesh.iter().enumerate() {
        let v = tri.vertices();
        for k in 0..3 {
            let (mut a, mut b) = (v[k], v[(k + 1) % 3]);
            if key(a) > key(b) {
                std::mem::swap(&mut a, &mut b);
            }
            let id = (key(a), key(b));
            match map.get(&id) {
                Some(&e) if edges[e].faces.1.is_none() => edges[e].faces.1 = Some(fi as u32),
                Some(_) => {} // non-manifold: keep the first pair
                None => {
                    map.insert(id, edges.len());
                    edges.push(MeshEdge {
                        a,
                        b,
                        faces: (fi as u32, None),
                    });
                }
            }
        }
    }
    edges.retain(|e| match e.faces.1 {
        None => true,
        Some(f2) => {
            let n1 = mesh[e.faces.0 as usize].unit_normal();
            let n2 = mesh[f2 as usize].unit_normal();
            n1.cross(n2).length() > 1e-9
        }
    });
    edges
}

/// Static buildings plus moving objects, with one BVH for each group. The
/// static BVH is built once; the dynamic one is refit as objects move and
/// rebuilt when its SAH cost degrades past the threshold.
#[derive(Clone, Debug)]
pub struct Scene {
    materials: Vec<Material>,
    objects: Vec<SceneObject>,
    index_of: HashMap<u32, usize>,
    static_bvh: Option<Bvh>,
    dynamic_bvh: Option<Bvh>,
    rebuild_threshold: f64,
    time_s: f64,
    generation: u64,
}

impl Scene {
    pub fn new(materials: Vec<Material>, objects: Vec<SceneObject>) -> Result<Scene> {
        Scene::with_rebuild_threshold(materials, objects, DEFAULT_REBUILD_THRESHOLD)
    }

    pub fn with_rebuild_threshold(materials: Vec<Material>, objects: Vec<SceneObject>, rebuild_threshold: f64) -> Result<Scene> {
        for m in &materials {
            m.validate()?;
        }
        let mut index_of = HashMap::new();
        for (i, o) in objects.iter().enumerate() {
            if index_of.insert(o.id, i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate object id {}", o.id)));
            }
            if !o.is_dynamic && o.velocity != Vec3::ZERO {
                return Err(Error::InvalidArgument(format!("static object {} has non-zero velocity", o.id)));
            }
            for (fi, t) in o.mesh.iter().enumerate() {
                if t.material_id as usize >= materials.len() {
                    return Err(Error::InvalidArgument(format!(
                        "object {} face {fi}: material id {} out of range",
                        o.id, t.material_id
                    )));
                }
                if t.is_degenerate() {
                    return Err(Error::DegenerateTriangle {
                        object: o.id,
                        index: fi as u32,
                    });
                }
            }
        }
        let mut scene = Scene {
            materials,
            objects,
            index_of,
            static_bvh: None,
            dynamic_bvh: None,
            rebuild_threshold,
            time_s: 0.0,
            generation: 0,
        };
        scene.static_bvh = scene.build_group(false)?;
        scene.dynamic_bvh = scene.build_group(true)?;
        Ok(scene)
    }

    fn build_group(&self, dynamic: bool) -> Result<Option<Bvh>> {
        let tris: Vec<Triangle> = self
            .objects
            .iter()
            .filter(|o| o.is_dynamic == dynamic)
            .flat_map(|o| o.world_triangles())
            .collect();
        if tris.is_empty() {
            return Ok(None);
        }
        Ok(Some(Bvh::build(tris)?.with_rebuild_threshold(self.rebuild_threshold)))
    }

    pub fn materials(&self) -> &[Material] {
        &self.materials
    }

    pub fn material(&self, id: u32) -> &Material {
        &self.materials[id as usize]
    }

    pub fn objects(&self) -> &[SceneObject] {
        &self.objects
    }

    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.index_of.get(&id).map(|&i| &self.objects[i])
    }

    pub fn static_bvh(&self) -> Option<&Bvh> {
        self.static_bvh.as_ref()
    }

    pub fn dynamic_bvh(&self) -> Option<&Bvh> {
        self.dynamic_bvh.as_ref()
    }

    pub fn time_s(&self) -> f64 {
        self.time_s
    }

    pub fn set_time(&mut self, t: f64) {
        self.time_s = t;
    }

    /// Bumped whenever dynamic geometry changes.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn triangle_count(&self) -> usize {
        self.static_bvh.as_ref().map_or(0, |b| b.triangles().len()) + self.dynamic_bvh.as_ref().map_or(0, |b| b.triangles().len())
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::empty();
        for bvh in self.static_bvh.iter().chain(self.dynamic_bvh.iter()) {
            b = b.union(&bvh.bounds());
        }
        b
    }

    /// World-space triangle for a face reference.
    pub fn triangle(&self, r: SurfaceRef) -> Option<Triangle> {
        let o = self.object(r.object)?;
        o.mesh.get(r.index as usize).map(|t| t.translated(o.pose))
    }

    /// Moves dynamic objects to new poses and refits the dynamic BVH (or
    /// rebuilds it when the SAH cost ratio exceeds the threshold).
    pub fn move_objects(&mut self, moves: &[(u32, Vec3, Vec3)]) -> Result<RefitStats> {
        let static_nodes = self.static_bvh.as_ref().map_or(0, Bvh::node_count);
        let mut updates = Vec::with_capacity(moves.len());
        for &(id, pose, velocity) in moves {
            let idx = *self.index_of.get(&id).ok_or(Error::UnknownObject(id))?;
            let obj = &mut self.objects[idx];
            if !obj.is_dynamic {
                return Err(Error::InvalidArgument(format!("object {id} is static")));
            }
            obj.velocity = velocity;
            if obj.pose != pose {
                obj.pose = pose;
                updates.push((id, obj.world_triangles()));
            }
        }
        let mut stats = RefitStats {
            nodes_updated: 0,
            total_nodes: static_nodes + self.dynamic_bvh.as_ref().map_or(0, Bvh::node_count),
            rebuilt: false,
        };
        if updates.is_empty() {
            return Ok(stats);
        }
        let bvh = self.dynamic_bvh.as_mut().expect("dynamic objects imply a dynamic BVH");
        stats.nodes_updated = bvh.refit(&updates)?;
        if bvh.should_rebuild() {
            bvh.rebuild();
            stats.rebuilt = true;
        }
        self.generation += 1;
        Ok(stats)
    }

    /// The same scene rebuilt from scratch at its current poses.
    pub fn rebuilt(&self) -> Result<Scene> {
        let mut s = Scene::with_rebuild_threshold(self.materials.clone(), self.objects.clone(), self.rebuild_threshold)?;
        s.time_s = self.time_s;
        Ok(s)
    }

    /// Nearest hit over static and dynamic geometry with `0 < t < t_max`.
    pub fn intersect(&self, origin: Vec3, dir: Vec3, t_max: f64) -> Option<RayHit> {
        let a = self.static_bvh.as_ref().and_then(|b| b.intersect(origin, dir, t_max));
        let b = self.dynamic_bvh.as_ref().and_then(|b| b.intersect(origin, dir, t_max));
        match (a, b) {
            (Some(x), Some(y)) => {
                if y.t < x.t || (y.t == x.t && y.triangle < x.triangle) {
                    Some(y)
                } else {
                    Some(x)
                }
            }
            (x, None) => x,
            (None, y) => y,
        }
    }

    /// Whether any triangle blocks the open segment `(p, q)`, ignoring
    /// [`SHADOW_EPSILON`] at both ends.
    pub fn occluded(&self, p: Vec3, q: Vec3) -> bool {
        let d = q - p;
        let len = d.length();
        if len <= 2.0 * SHADOW_EPSILON {
            return false;
        }
        let dir = d / len;
        let (t0, t1) = (SHADOW_EPSILON, len - SHADOW_EPSILON);
        self.static_bvh.as_ref().is_some_and(|b| b.any_hit(p, dir, t0, t1))
            || self.dynamic_bvh.as_ref().is_some_and(|b| b.any_hit(p, dir, t0, t1))
    }

    /// Ids of all objects blocking the open segment `(p, q)`, sorted and unique.
    pub fn blockers(&self, p: Vec3, q: Vec3) -> Vec<u32> {
        let d = q - p;
        let len = d.length();
        let mut ids = Vec::new();
        if len <= 2.0 * SHADOW_EPSILON {
            return ids;
        }
        let dir = d / len;
        for bvh in self.static_bvh.iter().chain(self.dynamic_bvh.iter()) {
            bvh.for_each_hit(p, dir, SHADOW_EPSILON, len - SHADOW_EPSILON, |t, _| ids.push(t.object_id));
        }
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Every world triangle with its face reference, static objects first.
    pub fn all_triangles(&self) -> Vec<(Triangle, SurfaceRef)> {
        let mut out = Vec::with_capacity(self.triangle_count());
        for o in self.objects.iter().filter(|o| !o.is_dynamic).chain(self.objects.iter().filter(|o| o.is_dynamic)) {
            for (i, t) in o.mesh.iter().enumerate() {
                out.push((t.translated(o.pose), SurfaceRef::new(o.id, i as u32)));
            }
        }
        out
    }
}
