use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use urbanwave::citygen::{city_materials, generate_city, CityParams};
use urbanwave::config::SimulationConfig;
use urbanwave::dynamics::{DynamicScene, Trajectory};
use urbanwave::geometry::{Scene, Vec3};
use urbanwave::sim;

fn city() -> Scene {
    let params = CityParams {
        blocks_x: 4,
        blocks_y: 4,
        ..CityParams::default()
    };
    Scene::new(city_materials(), generate_city(&params)).unwrap()
}

fn config(workers: usize) -> SimulationConfig {
    SimulationConfig {
        tx_position: Vec3::new(3.0, 4.0, 30.0),
        timestep_s: 0.5,
        worker_count: workers,
        ..SimulationConfig::default()
    }
}

/// 1 worker is the sequential path; 0 uses one thread per core.
const MODES: [(&str, usize); 2] = [("sequential", 1), ("parallel", 0)];

fn heatmap(c: &mut Criterion) {
    let scene = city();
    let mut group = c.benchmark_group("heatmap_10m");
    group.sample_size(10);
    for (name, workers) in MODES {
        let cfg = config(workers);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let world = DynamicScene::new(scene.clone(), Vec::new()).unwrap();
                sim::heatmap(&cfg, world, 0.0, [-80.0, -80.0, 80.0, 80.0], 10.0).unwrap()
            })
        });
    }
    group.finish();
}

fn simulate(c: &mut Criterion) {
    let scene = city();
    let routes: Vec<Trajectory> = (0..8)
        .map(|k| {
            let y = -60.0 + 15.0 * k as f64;
            Trajectory::linear(format!("rx{k}"), Vec3::new(-80.0, y, 1.5), Vec3::new(10.0, 0.0, 0.0), 0.0, 10.0, 1.0).unwrap()
        })
        .collect();
    let mut group = c.benchmark_group("simulate_8_receivers");
    group.sample_size(10);
    for (name, workers) in MODES {
        let cfg = config(workers);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let world = DynamicScene::new(scene.clone(), Vec::new()).unwrap();
                sim::simulate(&cfg, world, routes.clone()).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, heatmap, simulate);
criterion_main!(benches);
