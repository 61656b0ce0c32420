//! Reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use urbanwave::geometry::{Material, Scene, SceneObject, SurfaceRef, Triangle, Vec3};

pub const EPS: f64 = 1e-4;

/// Nearest-free segment test over every triangle, with the shadow slack at both ends.
pub fn brute_occluded(tris: &[(Triangle, SurfaceRef)], p: Vec3, q: Vec3) -> bool {
    let d = q - p;
    let len = d.length();
    if len <= 2.0 * EPS {
        return false;
    }
    let dir = d / len;
    tris.iter().any(|(t, _)| hit(t, p, dir).is_some_and(|s| s > EPS && s < len - EPS))
}

fn hit(t: &Triangle, o: Vec3, d: Vec3) -> Option<f64> {
    let n = (t.v1 - t.v0).cross(t.v2 - t.v0);
    let denom = n.dot(d);
    if denom.abs() <= 1e-12 * n.length() {
        return None;
    }
    let s = n.dot(t.v0 - o) / denom;
    let x = o + d * s;
    inside(t, x, 0.0).then_some(s)
}

/// Barycentric inside test with slack `tol`, by signed sub-areas.
pub fn inside(t: &Triangle, p: Vec3, tol: f64) -> bool {
    let n = (t.v1 - t.v0).cross(t.v2 - t.v0);
    let a2 = n.dot(n);
    let u = (t.v2 - t.v1).cross(p - t.v1).dot(n) / a2;
    let v = (t.v0 - t.v2).cross(p - t.v2).dot(n) / a2;
    let w = 1.0 - u - v;
    u >= -tol && v >= -tol && w >= -tol
}

fn mirror(p: Vec3, t: &Triangle) -> (Vec3, f64) {
    let n = (t.v1 - t.v0).cross(t.v2 - t.v0).normalize();
    let s = n.dot(p - t.v0);
    (p - n * (2.0 * s), s)
}

#[derive(Clone, Debug)]
pub struct RefPath {
    pub faces: Vec<SurfaceRef>,
    pub points: Vec<Vec3>,
    pub length: f64,
}

/// Every specular path over ordered face sequences of length 1..=max_order.
pub fn brute_reflections(scene: &Scene, tx: Vec3, rx: Vec3, max_order: usize) -> Vec<RefPath> {
    let tris = scene.all_triangles();
    let mut out = Vec::new();
    let mut seq = Vec::new();
    enumerate(scene, &tris, tx, rx, max_order, &mut seq, &mut out);
    out.sort_by(|a, b| a.faces.cmp(&b.faces));
    // shared-edge duplicates on coplanar faces: keep the first signature
    let mut kept: Vec<RefPath> = Vec::new();
    for p in out {
        let dup = kept.iter().any(|k| {
            k.faces.len() == p.faces.len()
                && k.points.iter().zip(&p.points).all(|(a, b)| a.distance(*b) <= 1e-7)
                && k.faces.iter().zip(&p.faces).all(|(a, b)| coplanar(&tri(&tris, *a), &tri(&tris, *b)))
        });
        if !dup {
            kept.push(p);
        }
    }
    kept
}

fn tri(tris: &[(Triangle, SurfaceRef)], r: SurfaceRef) -> Triangle {
    tris.iter().find(|(_, s)| *s == r).unwrap().0
}

fn coplanar(a: &Triangle, b: &Triangle) -> bool {
    let na = (a.v1 - a.v0).cross(a.v2 - a.v0).normalize();
    let nb = (b.v1 - b.v0).cross(b.v2 - b.v0).normalize();
    na.cross(nb).length() < 1e-6 && na.dot(b.v0 - a.v0).abs() < 1e-7
}

fn enumerate(
    scene: &Scene,
    tris: &[(Triangle, SurfaceRef)],
    tx: Vec3,
    rx: Vec3,
    max_order: usize,
    seq: &mut Vec<usize>,
    out: &mut Vec<RefPath>,
) {
    if !seq.is_empty() {
        if let Some(p) = evaluate(scene, tris, tx, rx, seq) {
            out.push(p);
        }
    }
    if seq.len() == max_order {
        return;
    }
    for i in 0..tris.len() {
        if seq.last() == Some(&i) {
            continue;
        }
        seq.push(i);
        enumerate(scene, tris, tx, rx, max_order, seq, out);
        seq.pop();
    }
}

fn evaluate(scene: &Scene, tris: &[(Triangle, SurfaceRef)], tx: Vec3, rx: Vec3, seq: &[usize]) -> Option<RefPath> {
    let mut images = Vec::new();
    let mut src = tx;
    for &i in seq {
        let (img, s) = mirror(src, &tris[i].0);
        if s.abs() < 1e-9 {
            return None;
        }
        images.push(img);
        src = img;
    }
    let mut points = vec![Vec3::ZERO; seq.len()];
    let mut target = rx;
    for k in (0..seq.len()).rev() {
        let t = &tris[seq[k]].0;
        let n = (t.v1 - t.v0).cross(t.v2 - t.v0).normalize();
        let si = n.dot(images[k] - t.v0);
        let st = n.dot(target - t.v0);
        if si * st >= 0.0 || si.is_nan() || st.is_nan() || st.abs() < 1e-9 {
            return None;
        }
        let p = images[k] + (target - images[k]) * (si / (si - st));
        if !inside(t, p, 1e-9) {
            return None;
        }
        points[k] = p;
        target = p;
    }
    let mut prev = tx;
    let mut length = 0.0;
    for p in points.iter().copied().chain(std::iter::once(rx)) {
        if brute_occluded(tris, prev, p) {
            return None;
        }
        length += prev.distance(p);
        prev = p;
    }
    if seq.iter().any(|&i| scene.material(tris[i].0.material_id).reflection_coefficient <= 0.0) {
        return None;
    }
    Some(RefPath {
        faces: seq.iter().map(|&i| tris[i].1).collect(),
        points,
        length,
    })
}

/// A random scene of at most `max_faces` faces: vertical wall quads, a ground
/// patch and loose triangles, plus transmitter and receiver positions.
pub fn random_scene(seed: u64, max_faces: usize) -> (Scene, Vec3, Vec3) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let materials = vec![Material::wall(), Material::metal(), Material::new("Glass", 0.5)];
    let mut objects = Vec::new();
    let mut faces = 0;
    let mut id = 0;
    if rng.random_bool(0.5) {
        let g = 60.0;
        objects.push(SceneObject::new_static(
            id,
            "ground",
            vec![
                Triangle::new(Vec3::new(-g, -g, 0.0), Vec3::new(g, -g, 0.0), Vec3::new(g, g, 0.0), 0, 0),
                Triangle::new(Vec3::new(-g, -g, 0.0), Vec3::new(g, g, 0.0), Vec3::new(-g, g, 0.0), 0, 0),
            ],
        ));
        id += 1;
        faces += 2;
    }
    while faces + 2 <= max_faces {
        let m = rng.random_range(0..3u32);
        if rng.random_bool(0.7) {
            let c = Vec3::new(rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0), 0.0);
            let a = rng.random_range(0.0..std::f64::consts::PI);
            let half = rng.random_range(3.0..20.0);
            let h = rng.random_range(5.0..25.0);
            let d = Vec3::new(a.cos(), a.sin(), 0.0) * half;
            let (p, q) = (c - d, c + d);
            let top = Vec3::new(0.0, 0.0, h);
            objects.push(SceneObject::new_static(
                id,
                format!("wall{id}"),
                vec![Triangle::new(p, q, q + top, m, 0), Triangle::new(p, q + top, p + top, m, 0)],
            ));
            faces += 2;
        } else {
            let mut v = || Vec3::new(rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0), rng.random_range(0.0..30.0));
            let t = Triangle::new(v(), v(), v(), m, 0);
            if t.is_degenerate() {
                continue;
            }
            objects.push(SceneObject::new_static(id, format!("tri{id}"), vec![t]));
            faces += 1;
        }
        id += 1;
    }
    let tx = Vec3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(1.0..30.0));
    let rx = Vec3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(1.0..10.0));
    (Scene::new(materials, objects).unwrap(), tx, rx)
}

/// The desk-scale city used by the system-level checks: 64 buildings on a
/// 400 m grid, transmitter above the central intersection, `n_boxes` cars
/// on the streets, and a 400 m route along the central street at 10 m/s.
pub struct DeskCity {
    pub params: urbanwave::citygen::CityParams,
    pub config: urbanwave::config::SimulationConfig,
    pub world: urbanwave::dynamics::DynamicScene,
    pub route: urbanwave::dynamics::Trajectory,
}

pub fn desk_city() -> DeskCity {
    use urbanwave::citygen::{city_materials, generate_city, street_traffic, CityParams};
    use urbanwave::config::SimulationConfig;
    use urbanwave::dynamics::{DynamicScene, Trajectory};

    let params = CityParams::default();
    let config = SimulationConfig {
        tx_position: Vec3::new(3.0, 4.0, 30.0),
        frequency_hz: 3e9,
        timestep_s: 1.0,
        bench_route_step_s: 1.0,
        ..SimulationConfig::default()
    };
    let mut objects = generate_city(&params);
    let first = objects.len() as u32;
    let cars = street_traffic(&params, config.bench_moving_boxes, config.obstacle_size, 10.0, 0.0, 40.0, 1.0, first, 1).unwrap();
    let mut tracks = Vec::new();
    for c in cars {
        objects.push(c.object);
        tracks.push(c.track);
    }
    let scene = Scene::new(city_materials(), objects).unwrap();
    let world = DynamicScene::new(scene, tracks).unwrap();
    let route = Trajectory::linear("route", Vec3::new(-200.0, 0.0, 1.5), Vec3::new(10.0, 0.0, 0.0), 0.0, 40.0, 1.0).unwrap();
    DeskCity {
        params,
        config,
        world,
        route,
    }
}
