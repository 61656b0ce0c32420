//! Flat `key = value` simulation configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is optional
//! and falls back to its default; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coherence::{CoherenceParams, CorrelationVariant};
use crate::dynamics::SegmentParams;
use crate::error::{Error, Result};
use crate::geometry::{Vec3, DEFAULT_REBUILD_THRESHOLD};
use crate::propagation::{Combining, ReflectionModel, TraceConfig, Transmitter};

/// Environment variable that overrides `worker_count`.
pub const WORKERS_ENV: &str = "URBANWAVE_WORKERS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub frequency_hz: f64,
    pub tx_power_dbm: f64,
    pub tx_position: Vec3,
    pub max_reflection_order: usize,
    pub diffraction_enabled: bool,
    pub timestep_s: f64,
    pub max_segment_length_m: f64,
    pub r_threshold: f64,
    pub theta_floor_rad: f64,
    pub fallback_coherence_s: f64,
    pub combining: Combining,
    pub correlation_variant: CorrelationVariant,
    pub cache_enabled: bool,
    pub rx_height_m: f64,
    /// 0 uses one worker per core.
    pub worker_count: usize,
    pub seed: u64,
    pub reflection_model: ReflectionModel,
    pub world_margin_m: f64,
    pub rebuild_threshold: f64,
    pub cache_region_half_width_m: f64,
    /// Trajectory file for moving obstacles, resolved against the config's directory.
    pub obstacles: Option<PathBuf>,
    pub obstacle_size: Vec3,
    pub bench_widths_m: Vec<f64>,
    pub bench_object_counts: Vec<usize>,
    pub bench_placements: usize,
    pub bench_area_objects: usize,
    pub bench_objects_width_m: f64,
    pub bench_receivers: usize,
    pub bench_steps: usize,
    pub bench_speed_mps: f64,
    pub bench_route_m: f64,
    pub bench_route_step_s: f64,
    pub bench_moving_boxes: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            frequency_hz: 3e9,
            tx_power_dbm: 50.0,
            tx_position: Vec3::new(0.0, 0.0, 30.0),
            max_reflection_order: 2,
            diffraction_enabled: true,
            timestep_s: 0.1,
            max_segment_length_m: 10.0,
            r_threshold: 0.9,
            theta_floor_rad: 0.05,
            fallback_coherence_s: 0.5,
            combining: Combining::NonCoherent,
            correlation_variant: CorrelationVariant::Standard,
            cache_enabled: true,
            rx_height_m: 1.5,
            worker_count: 0,
            seed: 42,
            reflection_model: ReflectionModel::Amplitude,
            world_margin_m: TraceConfig::default().world_margin_m,
            rebuild_threshold: DEFAULT_REBUILD_THRESHOLD,
            cache_region_half_width_m: CoherenceParams::default().region_half_width_m,
            obstacles: None,
            obstacle_size: crate::geometry::DEFAULT_BOX_SIZE,
            bench_widths_m: vec![100.0, 200.0, 400.0, 800.0],
            bench_object_counts: vec![10, 100, 1000, 10000],
            bench_placements: 10,
            bench_area_objects: 100,
            bench_objects_width_m: 400.0,
            bench_receivers: 10,
            bench_steps: 10,
            bench_speed_mps: 10.0,
            bench_route_m: 400.0,
            bench_route_step_s: 1.0,
            bench_moving_boxes: 20,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| Error::Config(format!("{key}: `{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(Error::Config(format!("{key}: `{v}` is not finite")));
    }
    Ok(x)
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| Error::Config(format!("{key}: `{v}` is not a non-negative integer")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: `{v}` is not a boolean"))),
    }
}

fn parse_list<T>(key: &str, v: &str, item: impl Fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    let out: Vec<T> = v.split(',').map(|s| item(key, s.trim())).collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::Config(format!("{key}: empty list")));
    }
    Ok(out)
}

fn parse_vec3(key: &str, v: &str) -> Result<Vec3> {
    let c = parse_list(key, v, parse_f64)?;
    if c.len() != 3 {
        return Err(Error::Config(format!("{key}: expected x,y,z, got `{v}`")));
    }
    Ok(Vec3::new(c[0], c[1], c[2]))
}

impl SimulationConfig {
    /// Parses config text. `base` resolves relative file references.
    pub fn parse(text: &str, base: &Path) -> Result<SimulationConfig> {
        let mut c = SimulationConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected key = value", i + 1)));
            };
            c.set(k.trim(), v.trim(), base)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, e.to_string().trim_start_matches("config: "))))?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<SimulationConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SimulationConfig::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn set(&mut self, key: &str, v: &str, base: &Path) -> Result<()> {
        match key {
            "frequency_hz" => self.frequency_hz = parse_f64(key, v)?,
            "tx_power_dbm" => self.tx_power_dbm = parse_f64(key, v)?,
            "tx_position" => self.tx_position = parse_vec3(key, v)?,
            "max_reflection_order" => self.max_reflection_order = parse_usize(key, v)?,
            "diffraction_enabled" => self.diffraction_enabled = parse_bool(key, v)?,
            "timestep_s" => self.timestep_s = parse_f64(key, v)?,
            "max_segment_length_m" => self.max_segment_length_m = parse_f64(key, v)?,
            "r_threshold" => self.r_threshold = parse_f64(key, v)?,
            "theta_floor_rad" => self.theta_floor_rad = parse_f64(key, v)?,
            "fallback_coherence_s" => self.fallback_coherence_s = parse_f64(key, v)?,
            "combining" => {
                self.combining = match v.to_ascii_lowercase().as_str() {
                    "noncoherent" => Combining::NonCoherent,
                    "coherent" => Combining::Coherent,
                    _ => return Err(Error::Config(format!("{key}: expected noncoherent or coherent, got `{v}`"))),
                }
            }
            "correlation_variant" => {
                self.correlation_variant = match v.to_ascii_lowercase().as_str() {
                    "standard" => CorrelationVariant::Standard,
                    "asprinted" => CorrelationVariant::AsPrinted,
                    _ => return Err(Error::Config(format!("{key}: expected standard or asprinted, got `{v}`"))),
                }
            }
            "reflection_model" => {
                self.reflection_model = match v.to_ascii_lowercase().as_str() {
                    "amplitude" => ReflectionModel::Amplitude,
                    "power" => ReflectionModel::Power,
                    _ => return Err(Error::Config(format!("{key}: expected amplitude or power, got `{v}`"))),
                }
            }
            "cache_enabled" => self.cache_enabled = parse_bool(key, v)?,
            "rx_height_m" => self.rx_height_m = parse_f64(key, v)?,
            "worker_count" => self.worker_count = parse_usize(key, v)?,
            "seed" => self.seed = v.parse().map_err(|_| Error::Config(format!("{key}: `{v}` is not an integer")))?,
            "world_margin_m" => self.world_margin_m = parse_f64(key, v)?,
            "rebuild_threshold" => self.rebuild_threshold = parse_f64(key, v)?,
            "cache_region_half_width_m" => self.cache_region_half_width_m = parse_f64(key, v)?,
            "obstacles" => self.obstacles = (!v.is_empty()).then(|| base.join(v)),
            "obstacle_size" => self.obstacle_size = parse_vec3(key, v)?,
            "bench_widths_m" => self.bench_widths_m = parse_list(key, v, parse_f64)?,
            "bench_object_counts" => self.bench_object_counts = parse_list(key, v, parse_usize)?,
            "bench_placements" => self.bench_placements = parse_usize(key, v)?,
            "bench_area_objects" => self.bench_area_objects = parse_usize(key, v)?,
            "bench_objects_width_m" => self.bench_objects_width_m = parse_f64(key, v)?,
            "bench_receivers" => self.bench_receivers = parse_usize(key, v)?,
            "bench_steps" => self.bench_steps = parse_usize(key, v)?,
            "bench_speed_mps" => self.bench_speed_mps = parse_f64(key, v)?,
            "bench_route_m" => self.bench_route_m = parse_f64(key, v)?,
            "bench_route_step_s" => self.bench_route_step_s = parse_f64(key, v)?,
            "bench_moving_boxes" => self.bench_moving_boxes = parse_usize(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.frequency_hz > 0.0) {
            return bad(format!("frequency_hz must be positive, got {}", self.frequency_hz));
        }
        if !(1..=3).contains(&self.max_reflection_order) {
            return bad(format!("max_reflection_order must be 1..=3, got {}", self.max_reflection_order));
        }
        if !(self.timestep_s > 0.0) {
            return bad("timestep_s must be positive".into());
        }
        if !(self.r_threshold > 0.0 && self.r_threshold < 1.0) {
            return bad("r_threshold must lie in (0, 1)".into());
        }
        if !(self.theta_floor_rad >= 0.0) || !(self.fallback_coherence_s > 0.0) {
            return bad("theta_floor_rad must be non-negative and fallback_coherence_s positive".into());
        }
        if !(self.rebuild_threshold >= 1.0) {
            return bad("rebuild_threshold must be at least 1".into());
        }
        if !(self.world_margin_m >= 0.0) || !(self.cache_region_half_width_m > 0.0) {
            return bad("world_margin_m must be non-negative and cache_region_half_width_m positive".into());
        }
        if !(self.obstacle_size.x > 0.0 && self.obstacle_size.y > 0.0 && self.obstacle_size.z > 0.0) {
            return bad("obstacle_size must be positive".into());
        }
        if self.bench_widths_m.iter().any(|w| !(*w > 0.0)) || !(self.bench_objects_width_m > 0.0) {
            return bad("bench widths must be positive".into());
        }
        if !(self.bench_speed_mps > 0.0) || !(self.bench_route_m > 0.0) || !(self.bench_route_step_s > 0.0) {
            return bad("bench speed, route length and route step must be positive".into());
        }
        if self.bench_placements == 0 || self.bench_receivers == 0 || self.bench_steps == 0 {
            return bad("bench placements, receivers and steps must be at least 1".into());
        }
        self.segment_params().validate()
    }

    /// Applies `URBANWAVE_WORKERS` if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            self.worker_count = parse_usize(WORKERS_ENV, v.trim())?;
        }
        Ok(())
    }

    pub fn transmitter(&self) -> Result<Transmitter> {
        Transmitter::new(self.tx_position, self.tx_power_dbm, self.frequency_hz)
    }

    pub fn trace_config(&self) -> TraceConfig {
        TraceConfig {
            max_reflection_order: self.max_reflection_order,
            diffraction: self.diffraction_enabled,
            combining: self.combining,
            reflection_model: self.reflection_model,
            world_margin_m: self.world_margin_m,
        }
    }

    pub fn segment_params(&self) -> SegmentParams {
        SegmentParams {
            max_segment_length_m: self.max_segment_length_m,
            ..SegmentParams::default()
        }
    }

    pub fn coherence_params(&self) -> CoherenceParams {
        CoherenceParams {
            r_threshold: self.r_threshold,
            theta_floor_rad: self.theta_floor_rad,
            fallback_s: self.fallback_coherence_s,
            region_half_width_m: self.cache_region_half_width_m,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<SimulationConfig> {
        SimulationConfig::parse(text, Path::new("/cfg"))
    }

    #[test]
    fn empty_gives_defaults() {
        let c = parse("# nothing\n\n").unwrap();
        assert_eq!(c, SimulationConfig::default());
        assert_eq!(c.frequency_hz, 3e9);
        assert_eq!(c.tx_power_dbm, 50.0);
        assert_eq!(c.max_reflection_order, 2);
        assert_eq!(c.timestep_s, 0.1);
        assert_eq!(c.rx_height_m, 1.5);
        assert_eq!(c.seed, 42);
    }

    #[test]
    fn overrides_and_paths() {
        let c = parse("frequency_hz = 30e9\ncombining=coherent\ncache_enabled = false\nobstacles = cars.csv\nbench_widths_m = 50, 100\n").unwrap();
        assert_eq!(c.frequency_hz, 30e9);
        assert_eq!(c.combining, Combining::Coherent);
        assert!(!c.cache_enabled);
        assert_eq!(c.obstacles.as_deref(), Some(Path::new("/cfg/cars.csv")));
        assert_eq!(c.bench_widths_m, vec![50.0, 100.0]);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        let e = parse("frequncy_hz = 3e9").unwrap_err().to_string();
        assert!(e.contains("unknown key `frequncy_hz`") && e.contains("line 1"), "{e}");
        assert!(parse("max_reflection_order = 4").is_err());
        assert!(parse("frequency_hz = 0").is_err());
        assert!(parse("max_segment_length_m = 20").is_err());
        assert!(parse("just a line").is_err());
        assert!(parse("diffraction_enabled = maybe").is_err());
    }
}
