//! Channel correlation, coherence time, and the coherence-gated path cache.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::KinematicState;
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Scene, Vec3};
use crate::propagation::{ChannelSnapshot, PathSignature, PropagationPath, TraceStats, Tracer, NOMINAL_SPEED_OF_LIGHT};

/// Which normalization the correlation function uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelationVariant {
    /// Autocorrelation coefficient: covariance over variance.
    #[default]
    Standard,
    /// Covariance over `E[g²]·E[g]²`.
    AsPrinted,
}

/// Uniformly spaced magnitudes `|h(t)|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainSeries {
    pub t: Vec<f64>,
    pub g: Vec<f64>,
}

impl GainSeries {
    pub fn new(t: Vec<f64>, g: Vec<f64>) -> Result<GainSeries> {
        if t.len() != g.len() || t.is_empty() {
            return Err(Error::InvalidArgument("gain series needs matching, non-empty time and value lists".into()));
        }
        if g.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidArgument("gain magnitudes must be non-negative".into()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("gain series times must increase".into()));
        }
        Ok(GainSeries { t, g })
    }

    /// Sampling interval, or 0 for a single sample.
    pub fn step(&self) -> f64 {
        if self.t.len() < 2 {
            0.0
        } else {
            self.t[1] - self.t[0]
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub lags_s: Vec<f64>,
    pub r: Vec<f64>,
}

/// Correlation of `g` with itself `lag_steps` samples later. The lagged
/// product is averaged over the overlapping pairs; `E[g]` and `E[g²]` over the
/// whole series.
pub fn correlation(g: &[f64], lag_steps: usize, variant: CorrelationVariant) -> Result<f64> {
    let n = g.len();
    if n <= lag_steps {
        return Err(Error::InvalidArgument(format!("series of length {n} is too short for lag {lag_steps}")));
    }
    let mean = g.iter().sum::<f64>() / n as f64;
    let mean_sq = g.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let pairs = n - lag_steps;
    let lagged = (0..pairs).map(|i| g[i] * g[i + lag_steps]).sum::<f64>() / pairs as f64;
    let num = lagged - mean * mean;
    match variant {
        CorrelationVariant::Standard => {
            let var = mean_sq - mean * mean;
            // Rounding leaves a tiny residue for constant series.
            if !(var > 1e-14 * mean_sq) {
                return Err(Error::ZeroVariance);
            }
            Ok(num / var)
        }
        CorrelationVariant::AsPrinted => {
            let den = mean_sq * mean * mean;
            if den == 0.0 {
                return Err(Error::ZeroVariance);
            }
            Ok(num / den)
        }
    }
}

/// Correlation for lags `0..=max_lag`.
pub fn correlation_function(series: &GainSeries, max_lag: usize, variant: CorrelationVariant) -> Result<CorrelationResult> {
    let dt = series.step();
    let mut lags_s = Vec::with_capacity(max_lag + 1);
    let mut r = Vec::with_capacity(max_lag + 1);
    for k in 0..=max_lag {
        lags_s.push(k as f64 * dt);
        r.push(correlation(&series.g, k, variant)?);
    }
    Ok(CorrelationResult { lags_s, r })
}

/// Time over which correlation stays above `r_threshold` for maximum Doppler
/// `f_d_max` and angle `theta_rad` between motion and path:
/// `√(1/R⁴ − 1) / (2π·f_D·θ²)`.
pub fn coherence_time(r_threshold: f64, f_d_max: f64, theta_rad: f64) -> Result<f64> {
    if !(r_threshold > 0.0 && r_threshold < 1.0) {
        return Err(Error::InvalidArgument(format!("correlation threshold must be in (0, 1), got {r_threshold}")));
    }
    if !(f_d_max > 0.0) {
        return Err(Error::InvalidArgument(format!("Doppler frequency must be positive, got {f_d_max}")));
    }
    if theta_rad == 0.0 {
        return Err(Error::DegenerateAngle);
    }
    if !(theta_rad > 0.0) {
        return Err(Error::InvalidArgument(format!("angle must be positive, got {theta_rad}")));
    }
    Ok((1.0 / r_threshold.powi(4) - 1.0).sqrt() / (2.0 * PI * f_d_max * theta_rad * theta_rad))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceParams {
    pub r_threshold: f64,
    /// Below this angle the closed form is not trusted, rad.
    pub theta_floor_rad: f64,
    /// Coherence time used below the angle floor, s.
    pub fallback_s: f64,
    /// Upper bound on the half-width of the region over which a candidate
    /// list is reused, m. The region never extends past what the receiver
    /// can reach within the coherence time.
    pub region_half_width_m: f64,
}

impl Default for CoherenceParams {
    fn default() -> Self {
        CoherenceParams {
            r_threshold: 0.9,
            theta_floor_rad: 0.05,
            fallback_s: 0.5,
            region_half_width_m: 10.0,
        }
    }
}

/// Coherence time of a receiver moving with `velocity` at `rx`. The angle is
/// the acute angle between the motion and the transmitter-receiver line.
/// A stationary receiver never decorrelates.
pub fn receiver_coherence_time(params: &CoherenceParams, f_c: f64, tx: Vec3, rx: Vec3, velocity: Vec3) -> f64 {
    let v = velocity.length();
    if v == 0.0 {
        return f64::INFINITY;
    }
    let line = rx - tx;
    if line.length() == 0.0 {
        return params.fallback_s;
    }
    let a = velocity.angle_to(line);
    let theta = a.min(PI - a);
    if theta < params.theta_floor_rad {
        return params.fallback_s;
    }
    let f_d = f_c * v / NOMINAL_SPEED_OF_LIGHT;
    coherence_time(params.r_threshold, f_d, theta).unwrap_or(params.fallback_s)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey {
    pub tx_id: u32,
    pub rx_id: u32,
    pub signature: PathSignature,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub path: PropagationPath,
    pub created_t: f64,
    pub expires_t: f64,
    pub last_validated_t: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    /// Candidate searches over the whole image tree.
    pub full_discoveries: u64,
}

impl CacheStats {
    pub fn add(&mut self, o: &CacheStats) {
        self.hits += o.hits;
        self.misses += o.misses;
        self.evictions += o.evictions;
        self.full_discoveries += o.full_discoveries;
    }

    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }
}

/// Validated paths keyed by signature, each valid until its coherence time runs out.
#[derive(Clone, Debug, Default)]
pub struct PathCache {
    entries: HashMap<CacheKey, CacheEntry>,
    pub stats: CacheStats,
}

impl PathCache {
    pub fn new() -> PathCache {
        PathCache::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The stored path if it has not expired at `now_s`. Expired entries are evicted.
    pub fn get(&mut self, key: &CacheKey, now_s: f64) -> Option<&PropagationPath> {
        let expired = self.entries.get(key)?.expires_t <= now_s;
        if expired {
            self.entries.remove(key);
            self.stats.evictions += 1;
            return None;
        }
        self.entries.get(key).map(|e| &e.path)
    }

    pub fn entry(&self, key: &CacheKey) -> Option<&CacheEntry> {
        self.entries.get(key)
    }

    pub fn put(&mut self, key: CacheKey, path: PropagationPath, now_s: f64, coherence_time_s: f64) -> Result<()> {
        if !(coherence_time_s > 0.0) {
            return Err(Error::InvalidArgument(format!("coherence time must be positive, got {coherence_time_s}")));
        }
        self.entries.insert(
            key,
            CacheEntry {
                path,
                created_t: now_s,
                expires_t: now_s + coherence_time_s,
                last_validated_t: now_s,
            },
        );
        Ok(())
    }

    pub fn remove(&mut self, key: &CacheKey) -> Option<CacheEntry> {
        self.entries.remove(key)
    }

    fn refresh(&mut self, key: &CacheKey, path: PropagationPath, now_s: f64) {
        if let Some(e) = self.entries.get_mut(key) {
            e.path = path;
            e.last_validated_t = now_s;
        }
    }

    fn keys(&self) -> Vec<CacheKey> {
        let mut k: Vec<CacheKey> = self.entries.keys().cloned().collect();
        k.sort();
        k
    }
}

pub fn cache_get<'a>(cache: &'a mut PathCache, key: &CacheKey, now_s: f64) -> Option<&'a PropagationPath> {
    cache.get(key, now_s)
}

pub fn cache_put(cache: &mut PathCache, key: CacheKey, path: PropagationPath, now_s: f64, coherence_time_s: f64) -> Result<()> {
    cache.put(key, path, now_s, coherence_time_s)
}

/// Slack added to the distance a receiver covers before its candidate list expires, m.
const REGION_PAD_M: f64 = 1e-3;

/// Candidate chains found for a region around the receiver.
#[derive(Clone, Debug)]
struct Discovery {
    segment: usize,
    region: Aabb,
    expires_t: f64,
    candidates: Vec<(u32, Aabb)>,
}

/// Cache state of one receiver. Each receiver owns its shard, so receivers
/// can be traced concurrently without sharing mutable state.
#[derive(Clone, Debug)]
pub struct ReceiverCache {
    pub tx_id: u32,
    pub rx_id: u32,
    pub paths: PathCache,
    discovery: Option<Discovery>,
}

impl ReceiverCache {
    pub fn new(tx_id: u32, rx_id: u32) -> ReceiverCache {
        ReceiverCache {
            tx_id,
            rx_id,
            paths: PathCache::new(),
            discovery: None,
        }
    }

    pub fn stats(&self) -> CacheStats {
        self.paths.stats
    }

    fn key(&self, signature: PathSignature) -> CacheKey {
        CacheKey {
            tx_id: self.tx_id,
            rx_id: self.rx_id,
            signature,
        }
    }
}

/// Channel at the receiver, reusing the candidate chains found for its
/// current segment while they remain coherent.
///
/// Every reused chain is re-evaluated geometrically (reflection points inside
/// their faces, clear legs), and line of sight, chains through moving objects
/// and diffraction are traced afresh, so the result equals
/// [`Tracer::trace`] at the same position exactly.
pub fn cached_trace(
    tracer: &Tracer,
    scene: &Scene,
    rx: &KinematicState,
    segment: usize,
    cache: &mut ReceiverCache,
    params: &CoherenceParams,
    stats: &mut TraceStats,
) -> Result<ChannelSnapshot> {
    tracer.check_generation(scene)?;
    let now = rx.time_s;
    let pos = rx.position;
    let tx = tracer.transmitter();
    let tc = receiver_coherence_time(params, tx.frequency_hz, tx.position, pos, rx.velocity);

    let snapshot = if tracer.in_world(pos) {
        let stale = match &cache.discovery {
            None => true,
            Some(d) => d.segment != segment || now >= d.expires_t || !d.region.contains_point(pos),
        };
        if stale {
            // The list expires after `tc`, so cover only the reachable part.
            let h = params.region_half_width_m.min(rx.velocity.length() * tc + REGION_PAD_M);
            let region = Aabb::new(pos - Vec3::splat(h), pos + Vec3::splat(h));
            cache.discovery = Some(Discovery {
                segment,
                region,
                expires_t: now + tc,
                candidates: tracer.static_candidates_region(&region),
            });
            cache.paths.stats.full_discoveries += 1;
        }
        let d = cache.discovery.as_ref().expect("discovery present");
        let ids: Vec<u32> = d.candidates.iter().filter(|(_, b)| b.contains_point(pos)).map(|(id, _)| *id).collect();
        tracer.trace_candidates(scene, pos, &ids, stats)
    } else {
        cache.discovery = None;
        cache.paths.stats.full_discoveries += 1;
        tracer.trace_candidates(scene, pos, &tracer.static_candidates_point(pos), stats)
    };

    let mut seen = Vec::with_capacity(snapshot.paths.len());
    for p in &snapshot.paths {
        let key = cache.key(p.signature());
        if cache.paths.get(&key, now).is_some() {
            cache.paths.stats.hits += 1;
            cache.paths.refresh(&key, p.clone(), now);
        } else {
            cache.paths.stats.misses += 1;
            cache.paths.put(key.clone(), p.clone(), now, tc)?;
        }
        seen.push(key);
    }
    seen.sort();
    for key in cache.paths.keys() {
        if seen.binary_search(&key).is_err() {
            cache.paths.remove(&key);
            cache.paths.stats.evictions += 1;
        }
    }
    Ok(snapshot)
}
