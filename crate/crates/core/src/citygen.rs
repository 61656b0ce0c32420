//! Procedural box cities and moving traffic for benchmarks and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{ObstacleTrack, Trajectory};
use crate::error::Result;
use crate::geometry::{box_triangles, Aabb, Material, SceneObject, Triangle, Vec3};

/// Manhattan grid of rectangular buildings centered on the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct CityParams {
    pub blocks_x: usize,
    pub blocks_y: usize,
    /// Building footprint edge, m.
    pub block_m: f64,
    pub street_m: f64,
    pub min_height_m: f64,
    pub max_height_m: f64,
    pub ground: bool,
    pub seed: u64,
}

impl Default for CityParams {
    fn default() -> Self {
        CityParams {
            blocks_x: 8,
            blocks_y: 8,
            block_m: 30.0,
            street_m: 20.0,
            min_height_m: 10.0,
            max_height_m: 40.0,
            ground: false,
            seed: 42,
        }
    }
}

impl CityParams {
    pub fn pitch(&self) -> f64 {
        self.block_m + self.street_m
    }

    pub fn extent(&self) -> Aabb {
        let hx = self.blocks_x as f64 * self.pitch() / 2.0;
        let hy = self.blocks_y as f64 * self.pitch() / 2.0;
        Aabb::new(Vec3::new(-hx, -hy, 0.0), Vec3::new(hx, hy, self.max_height_m))
    }

    /// y coordinate of the street centerline between block rows `k-1` and `k`.
    pub fn street_y(&self, k: usize) -> f64 {
        self.extent().min.y + k as f64 * self.pitch()
    }

    pub fn street_x(&self, k: usize) -> f64 {
        self.extent().min.x + k as f64 * self.pitch()
    }
}

/// Materials used by generated scenes: `Wall` (0) and `Metal` (1).
pub fn city_materials() -> Vec<Material> {
    vec![Material::wall(), Material::metal()]
}

/// Static objects of the city. Buildings have no bottom face.
pub fn generate_city(p: &CityParams) -> Vec<SceneObject> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let ext = p.extent();
    let half_street = p.street_m / 2.0;
    let mut out = Vec::with_capacity(p.blocks_x * p.blocks_y + 1);
    for j in 0..p.blocks_y {
        for i in 0..p.blocks_x {
            let x0 = ext.min.x + i as f64 * p.pitch() + half_street;
            let y0 = ext.min.y + j as f64 * p.pitch() + half_street;
            let h = rng.random_range(p.min_height_m..=p.max_height_m).round();
            let lo = Vec3::new(x0, y0, 0.0);
            let hi = Vec3::new(x0 + p.block_m, y0 + p.block_m, h);
            let mesh: Vec<Triangle> = box_triangles(lo, hi, 0).into_iter().filter(|t| t.unit_normal().z > -0.5).collect();
            let id = out.len() as u32;
            out.push(SceneObject::new_static(id, format!("building_{i}_{j}"), mesh));
        }
    }
    if p.ground {
        let (a, b) = (ext.min, ext.max);
        let c = |x: f64, y: f64| Vec3::new(x, y, 0.0);
        let mesh = vec![
            Triangle::new(c(a.x, a.y), c(b.x, a.y), c(b.x, b.y), 0, 0),
            Triangle::new(c(a.x, a.y), c(b.x, b.y), c(a.x, b.y), 0, 0),
        ];
        let id = out.len() as u32;
        out.push(SceneObject::new_static(id, "ground", mesh));
    }
    out
}

/// A moving box with its track.
#[derive(Clone, Debug)]
pub struct MovingBox {
    pub object: SceneObject,
    pub track: ObstacleTrack,
}

/// Straight-line tracks `t0..=t1` sampled every `dt` for `n` boxes placed
/// uniformly in `region` (xy), moving along ±x or ±y at `speed`.
#[allow(clippy::too_many_arguments)]
pub fn random_moving_boxes(
    n: usize,
    region: &Aabb,
    size: Vec3,
    speed: f64,
    t0: f64,
    t1: f64,
    dt: f64,
    first_id: u32,
    material_id: u32,
    seed: u64,
) -> Result<Vec<MovingBox>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let x = rng.random_range(region.min.x..=region.max.x);
        let y = rng.random_range(region.min.y..=region.max.y);
        let dir = match rng.random_range(0..4) {
            0 => Vec3::X,
            1 => -Vec3::X,
            2 => Vec3::Y,
            _ => -Vec3::Y,
        };
        let id = first_id + k as u32;
        out.push(moving_box(id, material_id, size, Vec3::new(x, y, 0.0), dir * speed, t0, t1, dt)?);
    }
    Ok(out)
}

/// Boxes driving along the city's streets, spread over both axes.
#[allow(clippy::too_many_arguments)]
pub fn street_traffic(
    city: &CityParams,
    n: usize,
    size: Vec3,
    speed: f64,
    t0: f64,
    t1: f64,
    dt: f64,
    first_id: u32,
    material_id: u32,
) -> Result<Vec<MovingBox>> {
    let mut rng = ChaCha8Rng::seed_from_u64(city.seed ^ 0x7261_6666);
    let ext = city.extent();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let along_x = k % 2 == 0;
        let (start, dir) = if along_x {
            let y = city.street_y(rng.random_range(0..=city.blocks_y));
            let x = rng.random_range(ext.min.x..=ext.max.x);
            (Vec3::new(x, y + 0.25 * city.street_m, 0.0), Vec3::X)
        } else {
            let x = city.street_x(rng.random_range(0..=city.blocks_x));
            let y = rng.random_range(ext.min.y..=ext.max.y);
            (Vec3::new(x + 0.25 * city.street_m, y, 0.0), Vec3::Y)
        };
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let id = first_id + k as u32;
        out.push(moving_box(id, material_id, size, start, dir * (sign * speed), t0, t1, dt)?);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn moving_box(id: u32, material_id: u32, size: Vec3, start: Vec3, velocity: Vec3, t0: f64, t1: f64, dt: f64) -> Result<MovingBox> {
    let trajectory = Trajectory::linear(format!("box{id}"), start, velocity, t0, t1, dt)?;
    let mesh = SceneObject::box_mesh(size, material_id);
    Ok(MovingBox {
        object: SceneObject::new_dynamic(id, format!("box{id}"), mesh, start, velocity),
        track: ObstacleTrack { object_id: id, trajectory },
    })
}
