use crate::error::{Error, Result};
use crate::geometry::{Aabb, AabbTree, Plane, Scene, Vec3};

use super::diffraction::diffraction_paths;
use super::images::{chain_points, legs_clear, push_children, push_children_in, push_roots, reflection_point, ImageNode};
use super::{ChannelSnapshot, PathSignature, PropagationPath, TraceConfig, Transmitter};

/// Work counters for one or more traces.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TraceStats {
    /// Visibility segments tested against the scene.
    pub rays_cast: u64,
    /// Image-tree nodes evaluated against a receiver.
    pub candidates_tested: u64,
}

impl TraceStats {
    pub fn add(&mut self, o: &TraceStats) {
        self.rays_cast += o.rays_cast;
        self.candidates_tested += o.candidates_tested;
    }
}

/// Path finder bound to one transmitter.
///
/// Reflections over static faces come from an image tree built once; chains
/// touching moving objects are regenerated by [`Tracer::update_dynamic`]
/// after every scene move. Receivers inside the world box (scene bounds plus
/// transmitter, padded by `world_margin_m`) look up candidate chains through
/// a box index; receivers outside it test every chain.
#[derive(Clone, Debug)]
pub struct Tracer {
    tx: Transmitter,
    config: TraceConfig,
    world: Aabb,
    static_nodes: Vec<ImageNode>,
    /// Index over the beam boxes of static nodes whose beam reaches the world box.
    static_index: Option<AabbTree>,
    static_boxes: Vec<Aabb>,
    static_indexed: Vec<u32>,
    /// Index over the first-order chains, for probes.
    first_order: SubIndex,
    /// Static chains that can be extended, with their beam boxes in `world`.
    open_parents: Vec<(u32, Aabb)>,
    dynamic_nodes: Vec<ImageNode>,
    dynamic_world: Aabb,
    dynamic_boxes: Vec<Aabb>,
    generation: u64,
}

impl Tracer {
    pub fn new(scene: &Scene, tx: Transmitter, config: TraceConfig) -> Result<Tracer> {
        config.validate()?;
        let mut world = scene.bounds();
        world.grow(tx.position);
        let world = world.expanded(config.world_margin_m);
        let max_depth = config.max_reflection_order as u8;

        let mut nodes = Vec::new();
        if let Some(bvh) = scene.static_bvh() {
            push_roots(scene, bvh, tx.position, &mut nodes);
            let mut level = 0..nodes.len();
            for _ in 1..max_depth {
                let start = nodes.len();
                for i in level.clone() {
                    let parent = nodes[i].clone();
                    push_children(scene, bvh, i as u32, &parent, &world, &mut nodes);
                }
                level = start..nodes.len();
            }
        }

        let mut boxes = Vec::with_capacity(nodes.len());
        let mut indexed = Vec::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            let b = n.beam_bounds(&world);
            if !b.is_empty() {
                boxes.push(b);
                indexed.push(i as u32);
            }
        }
        let static_index = (!boxes.is_empty()).then(|| AabbTree::build(&boxes));
        let first_order = SubIndex::new(&nodes, &indexed, &boxes, |n| n.depth == 1);
        let open_parents = indexed
            .iter()
            .zip(&boxes)
            .filter(|(&i, _)| nodes[i as usize].depth < max_depth)
            .map(|(&i, b)| (i, *b))
            .collect();

        let mut tracer = Tracer {
            tx,
            config,
            world,
            static_nodes: nodes,
            static_index,
            static_boxes: boxes,
            static_indexed: indexed,
            first_order,
            open_parents,
            dynamic_nodes: Vec::new(),
            dynamic_world: world,
            dynamic_boxes: Vec::new(),
            generation: scene.generation(),
        };
        tracer.update_dynamic(scene);
        Ok(tracer)
    }

    pub fn transmitter(&self) -> &Transmitter {
        &self.tx
    }

    pub fn config(&self) -> &TraceConfig {
        &self.config
    }

    pub fn world_bounds(&self) -> Aabb {
        self.world
    }

    pub fn static_node_count(&self) -> usize {
        self.static_nodes.len()
    }

    pub fn dynamic_node_count(&self) -> usize {
        self.dynamic_nodes.len()
    }

    /// Regenerates every reflection chain that involves a moving object.
    pub fn update_dynamic(&mut self, scene: &Scene) {
        self.generation = scene.generation();
        // Reuse last step's buffers.
        let mut out = std::mem::take(&mut self.dynamic_nodes);
        let mut boxes = std::mem::take(&mut self.dynamic_boxes);
        out.clear();
        boxes.clear();
        let Some(dyn_bvh) = scene.dynamic_bvh() else {
            return;
        };
        let world = self.world.union(&scene.bounds());
        self.dynamic_world = world;
        let max_depth = self.config.max_reflection_order as u8;
        let offset = self.static_nodes.len() as u32;

        push_roots(scene, dyn_bvh, self.tx.position, &mut out);
        if world == self.world {
            for (i, b) in &self.open_parents {
                push_children_in(scene, dyn_bvh, *i, &self.static_nodes[*i as usize], b, &mut out);
            }
        } else {
            // Moving objects left the world box, so static beams reach further.
            for (i, parent) in self.static_nodes.iter().enumerate() {
                if parent.depth < max_depth {
                    push_children(scene, dyn_bvh, i as u32, parent, &world, &mut out);
                }
            }
        }
        // `out` grows while we walk it; each pushed node is visited in turn.
        let mut children = Vec::new();
        let mut i = 0;
        while i < out.len() {
            let b = out[i].beam_bounds(&world);
            if out[i].depth < max_depth {
                let parent = &out[i];
                let id = offset + i as u32;
                if let Some(bvh) = scene.static_bvh() {
                    push_children_in(scene, bvh, id, parent, &b, &mut children);
                }
                push_children_in(scene, dyn_bvh, id, parent, &b, &mut children);
                children.sort_by_key(|n| n.face);
                out.append(&mut children);
            }
            boxes.push(b);
            i += 1;
        }
        self.dynamic_boxes = boxes;
        self.dynamic_nodes = out;
    }

    fn node(&self, id: u32) -> &ImageNode {
        let n = self.static_nodes.len();
        if (id as usize) < n {
            &self.static_nodes[id as usize]
        } else {
            &self.dynamic_nodes[id as usize - n]
        }
    }

    /// Whether `rx` can use the static box index.
    pub fn in_world(&self, rx: Vec3) -> bool {
        self.world.contains_point(rx)
    }

    /// Static chains whose beam box contains `rx`, ascending. Every static
    /// chain when `rx` lies outside the world box.
    pub fn static_candidates_point(&self, rx: Vec3) -> Vec<u32> {
        if !self.in_world(rx) {
            return (0..self.static_nodes.len() as u32).collect();
        }
        let mut out = Vec::new();
        if let Some(index) = &self.static_index {
            index.visit(|b| b.contains_point(rx), |p| {
                if self.static_boxes[p as usize].contains_point(rx) {
                    out.push(self.static_indexed[p as usize]);
                }
            });
        }
        out.sort_unstable();
        out
    }

    /// Static chains whose beam box overlaps `region`, in index order, each
    /// with its beam box. A superset of [`Tracer::static_candidates_point`] for
    /// every in-world point of the region.
    pub fn static_candidates_region(&self, region: &Aabb) -> Vec<(u32, Aabb)> {
        let mut out = Vec::new();
        if let Some(index) = &self.static_index {
            index.visit(|b| b.overlaps(region), |p| {
                let b = self.static_boxes[p as usize];
                if b.overlaps(region) {
                    out.push((self.static_indexed[p as usize], b));
                }
            });
        }
        out
    }

    pub(crate) fn check_generation(&self, scene: &Scene) -> Result<()> {
        if scene.generation() != self.generation {
            return Err(Error::InvalidArgument(
                "scene moved since the tracer was last updated; call update_dynamic".into(),
            ));
        }
        Ok(())
    }

    /// Full channel at `rx`.
    pub fn trace(&self, scene: &Scene, rx: Vec3, stats: &mut TraceStats) -> Result<ChannelSnapshot> {
        self.check_generation(scene)?;
        let candidates = self.static_candidates_point(rx);
        Ok(self.trace_candidates(scene, rx, &candidates, stats))
    }

    /// Channel at `rx` from a list of static candidate chains that must
    /// include every chain [`Tracer::static_candidates_point`] would return.
    /// Dynamic chains, line of sight and diffraction are always evaluated.
    pub(crate) fn trace_candidates(&self, scene: &Scene, rx: Vec3, static_ids: &[u32], stats: &mut TraceStats) -> ChannelSnapshot {
        let mut paths = Vec::new();
        if let Some(p) = self.los(scene, rx, stats) {
            paths.push(p);
        }
        paths.extend(self.reflections(scene, rx, static_ids, stats));
        if self.config.diffraction {
            paths.extend(diffraction_paths(scene, &self.tx, rx, &mut stats.rays_cast));
        }
        ChannelSnapshot::from_paths(scene.time_s(), paths, self.config.combining)
    }

    /// Line-of-sight state and strongest first-order reflection at `rx`,
    /// the two quantities that delimit trajectory segments.
    pub fn probe(&self, scene: &Scene, rx: Vec3, stats: &mut TraceStats) -> Result<Probe> {
        self.check_generation(scene)?;
        let los = self.los(scene, rx, stats).is_some();
        let first_order: Vec<u32> = if self.in_world(rx) {
            let mut hits = Vec::new();
            self.first_order.containing(rx, &mut hits);
            let mut ids: Vec<u32> = hits.into_iter().map(|k| self.static_indexed[k as usize]).collect();
            ids.sort_unstable();
            ids
        } else {
            (0..self.static_nodes.len() as u32).filter(|&id| self.static_nodes[id as usize].depth == 1).collect()
        };
        let mut found = Vec::new();
        for id in first_order {
            self.evaluate(scene, id, rx, stats, &mut found);
        }
        let offset = self.static_nodes.len() as u32;
        let dyn_inside = self.dynamic_world.contains_point(rx);
        for (i, b) in self.dynamic_boxes.iter().enumerate() {
            if self.dynamic_nodes[i].depth == 1 && (!dyn_inside || b.contains_point(rx)) {
                self.evaluate(scene, offset + i as u32, rx, stats, &mut found);
            }
        }
        dedupe(&mut found);
        let primary = strongest(found.iter().map(|(p, _)| p));
        Ok(Probe { los, primary })
    }

    fn los(&self, scene: &Scene, rx: Vec3, stats: &mut TraceStats) -> Option<PropagationPath> {
        if rx == self.tx.position {
            return None;
        }
        stats.rays_cast += 1;
        (!scene.occluded(self.tx.position, rx)).then(|| PropagationPath::from_points(&self.tx, rx, Vec::new(), 0.0))
    }

    fn reflections(&self, scene: &Scene, rx: Vec3, static_ids: &[u32], stats: &mut TraceStats) -> Vec<PropagationPath> {
        let mut found = Vec::new();
        for &id in static_ids {
            self.evaluate(scene, id, rx, stats, &mut found);
        }
        let offset = self.static_nodes.len() as u32;
        let dyn_inside = self.dynamic_world.contains_point(rx);
        for (i, b) in self.dynamic_boxes.iter().enumerate() {
            if !dyn_inside || b.contains_point(rx) {
                self.evaluate(scene, offset + i as u32, rx, stats, &mut found);
            }
        }
        dedupe(&mut found);
        found.into_iter().map(|(p, _)| p).collect()
    }

    fn evaluate(&self, scene: &Scene, id: u32, rx: Vec3, stats: &mut TraceStats, out: &mut Vec<(PropagationPath, Vec<Plane>)>) {
        stats.candidates_tested += 1;
        // Most candidates fail on the last face; reject them before collecting the chain.
        if reflection_point(self.node(id), rx).is_none() {
            return;
        }
        let mut chain = Vec::with_capacity(3);
        let mut cur = Some(id);
        while let Some(i) = cur {
            let n = self.node(i);
            chain.push(n);
            cur = n.parent;
        }
        chain.reverse();
        // A face that reflects nothing contributes no path.
        if chain.iter().any(|n| n.coefficient <= 0.0) {
            return;
        }
        let Some(points) = chain_points(&chain, rx) else {
            return;
        };
        if !legs_clear(scene, self.tx.position, &points, rx, &mut stats.rays_cast) {
            return;
        }
        let gain: f64 = chain.iter().map(|n| self.config.reflection_model.gain_db(n.coefficient)).sum();
        let planes = chain.iter().map(|n| n.plane).collect();
        out.push((PropagationPath::from_points(&self.tx, rx, points, gain), planes));
    }
}

/// Box index over a subset of the indexed static chains. Reports positions
/// in the tracer's `static_indexed` list.
#[derive(Clone, Debug, Default)]
struct SubIndex {
    tree: Option<AabbTree>,
    boxes: Vec<Aabb>,
    members: Vec<u32>,
}

impl SubIndex {
    fn new(nodes: &[ImageNode], indexed: &[u32], boxes: &[Aabb], keep: impl Fn(&ImageNode) -> bool) -> SubIndex {
        let members: Vec<u32> = (0..indexed.len() as u32).filter(|&k| keep(&nodes[indexed[k as usize] as usize])).collect();
        let boxes: Vec<Aabb> = members.iter().map(|&k| boxes[k as usize]).collect();
        let tree = (!boxes.is_empty()).then(|| AabbTree::build(&boxes));
        SubIndex { tree, boxes, members }
    }

    fn containing(&self, p: Vec3, out: &mut Vec<u32>) {
        if let Some(t) = &self.tree {
            t.visit(|b| b.contains_point(p), |i| {
                if self.boxes[i as usize].contains_point(p) {
                    out.push(self.members[i as usize]);
                }
            });
        }
    }
}

/// Segment-defining channel features at one receiver position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Probe {
    pub los: bool,
    /// Signature of the strongest single-bounce reflection.
    pub primary: Option<PathSignature>,
}

/// Signature of the strongest single-reflection path; ties go to the smaller signature.
pub(crate) fn strongest<'a>(paths: impl Iterator<Item = &'a PropagationPath>) -> Option<PathSignature> {
    let mut best: Option<(f64, PathSignature)> = None;
    for p in paths.filter(|p| p.order() == 1 && p.interactions[0].kind == super::InteractionKind::Reflection) {
        let sig = p.signature();
        let better = match &best {
            None => true,
            Some((pw, s)) => p.power_dbm > *pw || (p.power_dbm == *pw && sig < *s),
        };
        if better {
            best = Some((p.power_dbm, sig));
        }
    }
    best.map(|(_, s)| s)
}

/// Drops reflection paths that repeat another path through a shared edge of
/// coplanar faces, keeping the smallest signature.
fn dedupe(found: &mut Vec<(PropagationPath, Vec<Plane>)>) {
    found.sort_by_cached_key(|p| p.0.signature());
    let mut kept: Vec<(PropagationPath, Vec<Plane>)> = Vec::with_capacity(found.len());
    for (path, planes) in found.drain(..) {
        let dup = kept.iter().any(|(k, kp)| {
            k.interactions.len() == path.interactions.len()
                && k.interactions.iter().zip(&path.interactions).all(|(a, b)| a.point.distance(b.point) <= 1e-7)
                && kp.iter().zip(&planes).all(|(a, b)| same_plane(a, b))
        });
        if !dup {
            kept.push((path, planes));
        }
    }
    *found = kept;
}

fn same_plane(a: &Plane, b: &Plane) -> bool {
    let d = a.normal.dot(b.normal);
    if d.abs() < 1.0 - 1e-9 {
        return false;
    }
    let offset = if d > 0.0 { b.offset } else { -b.offset };
    (a.offset - offset).abs() < 1e-7
}

/// Line-of-sight path, if the direct segment is clear.
pub fn trace_los(scene: &Scene, tx: &Transmitter, rx: Vec3) -> Option<PropagationPath> {
    if rx == tx.position || scene.occluded(tx.position, rx) {
        return None;
    }
    Some(PropagationPath::from_points(tx, rx, Vec::new(), 0.0))
}

/// Specular reflection paths of order 1 to `max_order`, sorted by signature.
pub fn find_reflection_paths(scene: &Scene, tx: &Transmitter, rx: Vec3, max_order: usize) -> Result<Vec<PropagationPath>> {
    let config = TraceConfig {
        max_reflection_order: max_order,
        ..TraceConfig::default()
    };
    let tracer = Tracer::new(scene, tx.clone(), config)?;
    let mut stats = TraceStats::default();
    let ids = tracer.static_candidates_point(rx);
    Ok(tracer.reflections(scene, rx, &ids, &mut stats))
}

/// First-order knife-edge diffraction paths around objects blocking the direct ray.
pub fn find_diffraction_paths(scene: &Scene, tx: &Transmitter, rx: Vec3) -> Vec<PropagationPath> {
    let mut rays = 0;
    let mut paths = diffraction_paths(scene, tx, rx, &mut rays);
    super::sort_canonical(&mut paths);
    paths
}

/// Full channel at `rx` from scratch: builds the image tree, then traces.
pub fn trace_channel(scene: &Scene, tx: &Transmitter, rx: Vec3, config: &TraceConfig) -> Result<ChannelSnapshot> {
    let tracer = Tracer::new(scene, tx.clone(), *config)?;
    tracer.trace(scene, rx, &mut TraceStats::default())
}
