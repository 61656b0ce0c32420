//! Simulation drivers behind the command-line tool: dynamic trajectory runs,
//! coverage heatmaps and scaling benchmarks.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::citygen::{random_moving_boxes, MovingBox};
use crate::coherence::{cached_trace, CacheStats, CoherenceParams, ReceiverCache};
use crate::config::SimulationConfig;
use crate::doppler::{apply_doppler, snapshot_doppler, DopplerStats};
use crate::dynamics::{sample, DynamicScene, ObstacleTrack, SegmentParams, SegmentTracker, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Scene, SceneObject, Vec3};
use crate::io::{BenchReportRow, HeatmapGrid, PowerTraceRow};
use crate::par;
use crate::propagation::{ChannelSnapshot, TraceStats, Tracer};

/// Adds one moving box per obstacle trajectory to the static objects of `base`.
pub fn build_world(base: &Scene, obstacles: &[Trajectory], config: &SimulationConfig) -> Result<DynamicScene> {
    let mut objects: Vec<SceneObject> = base.objects().iter().filter(|o| !o.is_dynamic).cloned().collect();
    let metal = base.materials().iter().position(|m| m.name == "Metal").unwrap_or(0) as u32;
    let first = objects.iter().map(|o| o.id + 1).max().unwrap_or(0);
    let mut tracks = Vec::with_capacity(obstacles.len());
    for (k, traj) in obstacles.iter().enumerate() {
        let id = first + k as u32;
        let s0 = &traj.samples[0];
        let mesh = SceneObject::box_mesh(config.obstacle_size, metal);
        let pose = Vec3::new(s0.position.x, s0.position.y, 0.0);
        objects.push(SceneObject::new_dynamic(id, traj.receiver_id.clone(), mesh, pose, Vec3::ZERO));
        tracks.push(ObstacleTrack {
            object_id: id,
            trajectory: traj.clone(),
        });
    }
    let scene = Scene::with_rebuild_threshold(base.materials().to_vec(), objects, config.rebuild_threshold)?;
    DynamicScene::new(scene, tracks)
}

/// Static objects of `base` plus the obstacles named by the config's
/// `obstacles` file, if any.
pub fn world_from_config(base: &Scene, config: &SimulationConfig) -> Result<DynamicScene> {
    let obstacles = match &config.obstacles {
        Some(path) => crate::io::load_trajectories(path, 0.0)?,
        None => Vec::new(),
    };
    build_world(base, &obstacles, config)
}

/// Static objects of `base` plus generated moving boxes.
pub fn world_with_boxes(base: &Scene, boxes: Vec<MovingBox>, config: &SimulationConfig) -> Result<DynamicScene> {
    let mut objects: Vec<SceneObject> = base.objects().iter().filter(|o| !o.is_dynamic).cloned().collect();
    let mut tracks = Vec::with_capacity(boxes.len());
    for b in boxes {
        objects.push(b.object);
        tracks.push(b.track);
    }
    let scene = Scene::with_rebuild_threshold(base.materials().to_vec(), objects, config.rebuild_threshold)?;
    DynamicScene::new(scene, tracks)
}

/// Evaluation times `t0, t0 + dt, …` up to `t1`.
pub fn step_times(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    let n = ((t1 - t0) / dt + 1e-9).floor().max(0.0) as usize;
    (0..=n).map(|k| t0 + k as f64 * dt).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub steps: usize,
    pub receivers: usize,
    pub rows: usize,
    pub segments: usize,
    pub static_chains: usize,
    pub wall_time_s: f64,
    pub rays_cast: u64,
    pub candidates_tested: u64,
    pub cache_enabled: bool,
    pub cache: CacheStats,
    pub cache_hit_rate: f64,
    pub worker_count: usize,
    pub parallel: bool,
}

#[derive(Clone, Debug)]
pub struct SimulationOutput {
    pub rows: Vec<PowerTraceRow>,
    pub summary: SimulationSummary,
}

struct ReceiverRun {
    traj: Trajectory,
    tracker: Option<SegmentTracker>,
    cache: ReceiverCache,
    stats: TraceStats,
    segments: usize,
}

/// One transmitter, moving obstacles and a set of receivers stepped through time.
pub struct Simulation {
    config: SimulationConfig,
    world: DynamicScene,
    tracer: Tracer,
    receivers: Vec<ReceiverRun>,
    segment_params: SegmentParams,
    coherence: CoherenceParams,
}

impl Simulation {
    pub fn new(config: &SimulationConfig, mut world: DynamicScene, trajectories: Vec<Trajectory>) -> Result<Simulation> {
        config.validate()?;
        if trajectories.is_empty() {
            return Err(Error::InvalidArgument("no receiver trajectories".into()));
        }
        let t0 = trajectories.iter().map(Trajectory::start_time).fold(f64::INFINITY, f64::min);
        world.advance(t0)?;
        let tracer = Tracer::new(&world.scene, config.transmitter()?, config.trace_config())?;
        let receivers = trajectories
            .into_iter()
            .enumerate()
            .map(|(k, traj)| ReceiverRun {
                traj,
                tracker: None,
                cache: ReceiverCache::new(0, k as u32),
                stats: TraceStats::default(),
                segments: 0,
            })
            .collect();
        Ok(Simulation {
            config: config.clone(),
            world,
            tracer,
            receivers,
            segment_params: config.segment_params(),
            coherence: config.coherence_params(),
        })
    }

    pub fn tracer(&self) -> &Tracer {
        &self.tracer
    }

    pub fn scene(&self) -> &Scene {
        &self.world.scene
    }

    /// All evaluation times of the run.
    pub fn times(&self) -> Vec<f64> {
        let t0 = self.receivers.iter().map(|r| r.traj.start_time()).fold(f64::INFINITY, f64::min);
        let t1 = self.receivers.iter().map(|r| r.traj.end_time()).fold(f64::NEG_INFINITY, f64::max);
        step_times(t0, t1, self.config.timestep_s)
    }

    /// Advances the scene to `t` and evaluates every receiver whose trajectory covers `t`.
    pub fn step(&mut self, t: f64) -> Result<Vec<PowerTraceRow>> {
        if t != self.world.scene.time_s() {
            self.world.advance(t)?;
            self.tracer.update_dynamic(&self.world.scene);
        }
        let scene = &self.world.scene;
        let tracer = &self.tracer;
        let cache_enabled = self.config.cache_enabled;
        let f_c = self.config.frequency_hz;
        let seg = self.segment_params;
        let coh = self.coherence;
        let results = par::map_mut(&mut self.receivers, |r| -> Result<Option<PowerTraceRow>> {
            if !r.traj.contains_time(t) {
                return Ok(None);
            }
            let ReceiverRun {
                traj,
                tracker,
                cache,
                stats,
                ..
            } = r;
            let tracker = match tracker {
                Some(tr) => tr,
                None => tracker.insert(SegmentTracker::new(seg)?),
            };
            let segment = tracker.advance_to(traj, t, |ti| {
                let pos = sample(traj, ti)?.position;
                tracer.probe(scene, pos, stats)
            })?;
            let state = sample(traj, t)?;
            let hits_before = cache.stats().hits;
            let mut snapshot = if cache_enabled {
                cached_trace(tracer, scene, &state, segment, cache, &coh, stats)?
            } else {
                tracer.trace(scene, state.position, stats)?
            };
            apply_doppler(&mut snapshot, &state, f_c);
            Ok(Some(row_of(&traj.receiver_id, &state.position, t, &snapshot, segment, cache.stats().hits - hits_before)))
        });
        let mut rows = Vec::new();
        for r in results {
            if let Some(row) = r? {
                rows.push(row);
            }
        }
        rows.sort_by(|a, b| a.rx_id.cmp(&b.rx_id));
        Ok(rows)
    }

    /// Runs every step and closes all segments.
    pub fn run(mut self) -> Result<SimulationOutput> {
        let start = Instant::now();
        let times = self.times();
        let workers = self.config.worker_count;
        let mut rows = Vec::new();
        par::with_workers(workers, || -> Result<()> {
            for &t in &times {
                rows.extend(self.step(t)?);
            }
            Ok(())
        })?;
        let mut summary = SimulationSummary {
            steps: times.len(),
            receivers: self.receivers.len(),
            rows: rows.len(),
            static_chains: self.tracer.static_node_count(),
            cache_enabled: self.config.cache_enabled,
            worker_count: workers,
            parallel: par::is_parallel(),
            ..SimulationSummary::default()
        };
        for r in &mut self.receivers {
            if let Some(tr) = r.tracker.take() {
                r.segments = tr.finish(&r.traj).len();
            }
            summary.segments += r.segments;
            summary.rays_cast += r.stats.rays_cast;
            summary.candidates_tested += r.stats.candidates_tested;
            summary.cache.add(&r.cache.stats());
        }
        summary.cache_hit_rate = summary.cache.hit_rate();
        summary.wall_time_s = start.elapsed().as_secs_f64();
        Ok(SimulationOutput { rows, summary })
    }
}

fn row_of(rx_id: &str, pos: &Vec3, t: f64, snap: &ChannelSnapshot, segment: usize, cache_hits: u64) -> PowerTraceRow {
    let dop = snapshot_doppler(snap).unwrap_or(DopplerStats {
        mean_shift_hz: 0.0,
        rms_spread_hz: 0.0,
    });
    PowerTraceRow {
        t_s: t,
        rx_id: rx_id.to_string(),
        position: *pos,
        power_dbm: snap.total_power_dbm,
        n_paths: snap.paths.len(),
        los: snap.los,
        delay_spread_s: snap.rms_delay_spread(),
        doppler_mean_hz: dop.mean_shift_hz,
        doppler_spread_hz: dop.rms_spread_hz,
        segment_index: segment,
        cache_hits,
    }
}

/// Runs a full dynamic simulation.
pub fn simulate(config: &SimulationConfig, world: DynamicScene, trajectories: Vec<Trajectory>) -> Result<SimulationOutput> {
    Simulation::new(config, world, trajectories)?.run()
}

/// Received power over a grid of static receivers at scene time `t`.
pub fn heatmap(config: &SimulationConfig, mut world: DynamicScene, t: f64, region: [f64; 4], cell_m: f64) -> Result<HeatmapGrid> {
    let [x0, y0, x1, y1] = region;
    let mut grid = HeatmapGrid::covering(x0, y0, x1, y1, cell_m, config.rx_height_m)?;
    let b = world.scene.bounds();
    if x0 < b.min.x || y0 < b.min.y || x1 > b.max.x || y1 > b.max.y {
        log::warn!("heatmap region extends beyond the scene bounds");
    }
    world.advance(t)?;
    let scene = &world.scene;
    let tracer = Tracer::new(scene, config.transmitter()?, config.trace_config())?;
    let cells: Vec<(usize, usize)> = (0..grid.ny).flat_map(|j| (0..grid.nx).map(move |i| (i, j))).collect();
    let g = &grid;
    let values = par::with_workers(config.worker_count, || {
        par::map(&cells, |&(i, j)| -> Result<f64> {
            let mut stats = TraceStats::default();
            let snap = tracer.trace(scene, g.cell_center(i, j), &mut stats)?;
            Ok(snap.total_power_dbm.unwrap_or(f64::NEG_INFINITY))
        })
    });
    grid.values = values.into_iter().collect::<Result<_>>()?;
    Ok(grid)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BenchMode {
    Area,
    Objects,
    StaticVsDynamic,
}

impl std::str::FromStr for BenchMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<BenchMode> {
        match s.to_ascii_lowercase().as_str() {
            "area" => Ok(BenchMode::Area),
            "objects" => Ok(BenchMode::Objects),
            "staticdynamic" | "static-dynamic" | "staticvsdynamic" => Ok(BenchMode::StaticVsDynamic),
            _ => Err(Error::InvalidArgument(format!("unknown bench mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct BenchSummary {
    pub mode: Option<BenchMode>,
    pub runs: usize,
    pub total_wall_time_s: f64,
    /// Least-squares slope of log wall time against log area (area mode).
    pub area_exponent: Option<f64>,
    /// Wall time of the largest object count over the smallest (objects mode).
    pub object_ratio: Option<f64>,
    /// Static over dynamic wall time (static-vs-dynamic mode).
    pub speedup: Option<f64>,
    /// Largest power difference between the two runs, dB.
    pub max_power_diff_db: Option<f64>,
}

fn crop(base: &Scene, region: &Aabb) -> Result<Scene> {
    let objects: Vec<SceneObject> = base
        .objects()
        .iter()
        .filter(|o| !o.is_dynamic)
        .filter(|o| {
            let b = o.world_bounds();
            b.min.x <= region.max.x && b.max.x >= region.min.x && b.min.y <= region.max.y && b.max.y >= region.min.y
        })
        .cloned()
        .collect();
    Scene::new(base.materials().to_vec(), objects)
}

fn square(x: f64, y: f64, w: f64) -> Aabb {
    Aabb::new(Vec3::new(x, y, 0.0), Vec3::new(x + w, y + w, 0.0))
}

fn random_receivers(n: usize, region: &Aabb, config: &SimulationConfig, t1: f64, rng: &mut ChaCha8Rng) -> Result<Vec<Trajectory>> {
    (0..n)
        .map(|k| {
            let x = rng.random_range(region.min.x..=region.max.x);
            let y = rng.random_range(region.min.y..=region.max.y);
            let dir = if rng.random_bool(0.5) { Vec3::X } else { Vec3::Y };
            let start = Vec3::new(x, y, config.rx_height_m);
            Trajectory::linear(format!("rx{k:03}"), start, dir * config.bench_speed_mps, 0.0, t1, config.timestep_s)
        })
        .collect()
}

/// One timed dynamic run over `region`: moving boxes, random receivers,
/// transmitter above the region's center.
fn timed_region_run(base: &Scene, region: &Aabb, n_boxes: usize, config: &SimulationConfig, seed: u64) -> Result<(f64, u64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t1 = config.bench_steps.saturating_sub(1) as f64 * config.timestep_s;
    let metal = base.materials().iter().position(|m| m.name == "Metal").unwrap_or(0) as u32;
    let mut cfg = config.clone();
    let c = region.center();
    cfg.tx_position = Vec3::new(c.x, c.y, config.tx_position.z);
    let receivers = random_receivers(config.bench_receivers, region, &cfg, t1.max(config.timestep_s), &mut rng)?;

    let start = Instant::now();
    let scene = crop(base, region)?;
    let first = scene.objects().iter().map(|o| o.id + 1).max().unwrap_or(0);
    let boxes = random_moving_boxes(
        n_boxes,
        region,
        config.obstacle_size,
        config.bench_speed_mps,
        0.0,
        t1.max(config.timestep_s),
        config.timestep_s,
        first,
        metal,
        rng.random(),
    )?;
    let world = world_with_boxes(&scene, boxes, &cfg)?;
    let out = simulate(&cfg, world, receivers)?;
    let wall = start.elapsed().as_secs_f64();
    Ok((wall, out.summary.rays_cast, out.summary.cache_hit_rate))
}

fn check_extent(base: &Scene, w: f64) -> Result<Aabb> {
    let b = base.bounds();
    let e = b.extent();
    if e.x < w || e.y < w {
        return Err(Error::InvalidArgument(format!(
            "scene extent {:.1} x {:.1} m is smaller than the {w} m bench region",
            e.x, e.y
        )));
    }
    Ok(b)
}

/// Runs one benchmark mode against the static part of `base`.
pub fn bench(config: &SimulationConfig, base: &Scene, mode: BenchMode) -> Result<(Vec<BenchReportRow>, BenchSummary)> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rows = Vec::new();
    let mut summary = BenchSummary {
        mode: Some(mode),
        ..BenchSummary::default()
    };
    par::with_workers(config.worker_count, || -> Result<()> {
        match mode {
            BenchMode::Area => {
                for &w in &config.bench_widths_m {
                    let b = check_extent(base, w)?;
                    let (mut wall, mut rays, mut hit) = (0.0, 0u64, 0.0);
                    for _ in 0..config.bench_placements {
                        let x = rng.random_range(b.min.x..=b.max.x - w);
                        let y = rng.random_range(b.min.y..=b.max.y - w);
                        let (t, r, h) = timed_region_run(base, &square(x, y, w), config.bench_area_objects, config, rng.random())?;
                        wall += t;
                        rays += r;
                        hit += h;
                        summary.runs += 1;
                    }
                    let n = config.bench_placements as f64;
                    rows.push(BenchReportRow {
                        scenario: "area".into(),
                        area_width_m: w,
                        n_objects: config.bench_area_objects,
                        wall_time_s: wall / n,
                        rays_cast: (rays as f64 / n).round() as u64,
                        cache_hit_rate: hit / n,
                    });
                }
                summary.area_exponent = area_exponent(&rows);
            }
            BenchMode::Objects => {
                let w = config.bench_objects_width_m;
                let b = check_extent(base, w)?;
                let c = b.center();
                let region = square(c.x - w / 2.0, c.y - w / 2.0, w);
                for &n in &config.bench_object_counts {
                    let (t, r, h) = timed_region_run(base, &region, n, config, rng.random())?;
                    summary.runs += 1;
                    rows.push(BenchReportRow {
                        scenario: "objects".into(),
                        area_width_m: w,
                        n_objects: n,
                        wall_time_s: t,
                        rays_cast: r,
                        cache_hit_rate: h,
                    });
                }
                if let (Some(a), Some(z)) = (rows.first(), rows.last()) {
                    summary.object_ratio = Some(z.wall_time_s / a.wall_time_s);
                }
            }
            BenchMode::StaticVsDynamic => {
                let r = static_vs_dynamic(config, base, None, &mut rng)?;
                summary.runs += 2;
                summary.speedup = Some(r.static_row.wall_time_s / r.dynamic_row.wall_time_s);
                summary.max_power_diff_db = Some(r.max_power_diff_db);
                rows.push(r.dynamic_row);
                rows.push(r.static_row);
            }
        }
        Ok(())
    })?;
    for r in &mut rows {
        r.wall_time_s = r.wall_time_s.max(f64::MIN_POSITIVE);
    }
    summary.total_wall_time_s = start.elapsed().as_secs_f64();
    Ok((rows, summary))
}

/// Least-squares slope of `ln wall_time` against `ln width²`.
pub fn area_exponent(rows: &[BenchReportRow]) -> Option<f64> {
    if rows.len() < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.area_width_m * r.area_width_m).ln(), r.wall_time_s.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Both halves of the static-versus-dynamic comparison.
#[derive(Clone, Debug)]
pub struct StaticVsDynamic {
    pub dynamic_row: BenchReportRow,
    pub static_row: BenchReportRow,
    pub dynamic_rows: Vec<PowerTraceRow>,
    pub static_power_dbm: Vec<Option<f64>>,
    pub max_power_diff_db: f64,
}

/// The straight benchmark route: along x through the scene's center at receiver height.
pub fn bench_route(config: &SimulationConfig, base: &Scene) -> Result<Trajectory> {
    let c = base.bounds().center();
    let len = config.bench_route_m;
    let start = Vec3::new(c.x - len / 2.0, c.y, config.rx_height_m);
    let v = Vec3::X * config.bench_speed_mps;
    Trajectory::linear("route", start, v, 0.0, len / config.bench_speed_mps, config.bench_route_step_s)
}

/// One dynamic run along the route against one independent static
/// evaluation (fresh scene, fresh tracer) per route step.
///
/// Moving boxes come from `obstacles` when given, otherwise
/// `bench_moving_boxes` are placed at random over the scene.
pub fn static_vs_dynamic(
    config: &SimulationConfig,
    base: &Scene,
    obstacles: Option<Vec<MovingBox>>,
    rng: &mut ChaCha8Rng,
) -> Result<StaticVsDynamic> {
    let route = bench_route(config, base)?;
    let dt = config.bench_route_step_s;
    let t_end = route.end_time();
    let n_steps = ((t_end / dt) - 1e-9).ceil() as usize;
    let b = base.bounds();
    check_extent(base, 0.0)?;
    let boxes = match obstacles {
        Some(b) => b,
        None => {
            let metal = base.materials().iter().position(|m| m.name == "Metal").unwrap_or(0) as u32;
            let first = base.objects().iter().map(|o| o.id + 1).max().unwrap_or(0);
            random_moving_boxes(
                config.bench_moving_boxes,
                &b,
                config.obstacle_size,
                config.bench_speed_mps,
                0.0,
                t_end,
                dt,
                first,
                metal,
                rng.random(),
            )?
        }
    };
    let n_objects = base.objects().iter().filter(|o| !o.is_dynamic).count() + boxes.len();
    let world = world_with_boxes(base, boxes, config)?;
    let mut cfg = config.clone();
    cfg.timestep_s = dt;
    cfg.cache_enabled = true;
    // `n_steps` evaluations at t = 0, dt, …
    let mut route_steps = route.clone();
    route_steps.samples.retain(|s| s.t_s <= (n_steps - 1) as f64 * dt + 1e-9);
    let static_world = world.clone();

    let t = Instant::now();
    let dynamic = simulate(&cfg, world, vec![route_steps.clone()])?;
    let dynamic_wall = t.elapsed().as_secs_f64();

    let tx = cfg.transmitter()?;
    let trace_cfg = cfg.trace_config();
    let t = Instant::now();
    let mut static_power = Vec::with_capacity(n_steps);
    let mut static_rays = 0;
    for k in 0..n_steps {
        let tk = k as f64 * dt;
        let poses = static_world.poses_at(tk)?;
        let mut objects: Vec<SceneObject> = static_world.scene.objects().to_vec();
        for o in &mut objects {
            if let Some((_, pose, vel)) = poses.iter().find(|(id, _, _)| *id == o.id) {
                o.pose = *pose;
                o.velocity = *vel;
            }
        }
        let mut scene = Scene::with_rebuild_threshold(base.materials().to_vec(), objects, cfg.rebuild_threshold)?;
        scene.set_time(tk);
        let tracer = Tracer::new(&scene, tx.clone(), trace_cfg)?;
        let state = sample(&route_steps, tk)?;
        let mut stats = TraceStats::default();
        let mut snap = tracer.trace(&scene, state.position, &mut stats)?;
        apply_doppler(&mut snap, &state, cfg.frequency_hz);
        static_rays += stats.rays_cast;
        static_power.push(snap.total_power_dbm);
    }
    let static_wall = t.elapsed().as_secs_f64();

    let mut max_diff: f64 = 0.0;
    for (row, sp) in dynamic.rows.iter().zip(&static_power) {
        max_diff = max_diff.max(match (row.power_dbm, sp) {
            (Some(a), Some(b)) => (a - b).abs(),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        });
    }
    let width = b.extent().x;
    Ok(StaticVsDynamic {
        dynamic_row: BenchReportRow {
            scenario: "dynamic".into(),
            area_width_m: width,
            n_objects,
            wall_time_s: dynamic_wall,
            rays_cast: dynamic.summary.rays_cast,
            cache_hit_rate: dynamic.summary.cache_hit_rate,
        },
        static_row: BenchReportRow {
            scenario: "static".into(),
            area_width_m: width,
            n_objects,
            wall_time_s: static_wall,
            rays_cast: static_rays,
            cache_hit_rate: 0.0,
        },
        dynamic_rows: dynamic.rows,
        static_power_dbm: static_power,
        max_power_diff_db: max_diff,
    })
}
