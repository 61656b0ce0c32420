//! Receiver trajectories, scene advancement, and segmentation of trajectories
//! into stretches over which the channel keeps its structure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RefitStats, Scene, Vec3};
use crate::propagation::{PathSignature, Probe, TraceConfig, TraceStats, Tracer, Transmitter};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t_s: f64,
    pub position: Vec3,
    pub speed_mps: f64,
    /// Unit direction of travel.
    pub heading: Vec3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub receiver_id: String,
    pub samples: Vec<TrajectorySample>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinematicState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub time_s: f64,
}

impl Trajectory {
    /// Validates ordering and speeds. At least one sample is required.
    pub fn new(receiver_id: impl Into<String>, samples: Vec<TrajectorySample>) -> Result<Trajectory> {
        let receiver_id = receiver_id.into();
        if samples.is_empty() {
            return Err(Error::InvalidArgument(format!("trajectory `{receiver_id}` has no samples")));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.t_s.is_finite() || !s.position.is_finite() {
                return Err(Error::InvalidArgument(format!("trajectory `{receiver_id}` sample {i} is not finite")));
            }
            if !(s.speed_mps >= 0.0) {
                return Err(Error::InvalidArgument(format!("trajectory `{receiver_id}` sample {i} has negative speed")));
            }
            if i > 0 && !(s.t_s > samples[i - 1].t_s) {
                return Err(Error::InvalidArgument(format!(
                    "trajectory `{receiver_id}`: time {} does not increase past {}",
                    s.t_s,
                    samples[i - 1].t_s
                )));
            }
        }
        Ok(Trajectory { receiver_id, samples })
    }

    /// Straight run from `start` at constant `velocity`, sampled every `dt`.
    pub fn linear(receiver_id: impl Into<String>, start: Vec3, velocity: Vec3, t0: f64, t1: f64, dt: f64) -> Result<Trajectory> {
        if !(dt > 0.0) || !(t1 >= t0) {
            return Err(Error::InvalidArgument("linear trajectory needs dt > 0 and t1 >= t0".into()));
        }
        let n = ((t1 - t0) / dt - 1e-9).ceil().max(0.0) as usize;
        let speed = velocity.length();
        let heading = velocity.try_normalize().unwrap_or(Vec3::X);
        let mut samples = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let t = if k == n { t1 } else { t0 + k as f64 * dt };
            samples.push(TrajectorySample {
                t_s: t,
                position: start + velocity * (t - t0),
                speed_mps: speed,
                heading,
            });
        }
        samples.dedup_by(|b, a| b.t_s <= a.t_s);
        Trajectory::new(receiver_id, samples)
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].t_s
    }

    pub fn end_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].t_s
    }

    pub fn contains_time(&self, t: f64) -> bool {
        t >= self.start_time() && t <= self.end_time()
    }

    /// Index `i` of the interval `[t_i, t_{i+1}]` holding `t`; the last
    /// interval for the final sample time.
    fn interval(&self, t: f64) -> usize {
        let n = self.samples.len();
        let i = self.samples.partition_point(|s| s.t_s <= t);
        i.saturating_sub(1).min(n.saturating_sub(2))
    }

    /// Cumulative arc length from the first sample up to `t`, m.
    pub fn arc_length_at(&self, t: f64) -> f64 {
        let mut total = 0.0;
        if self.samples.len() < 2 {
            return 0.0;
        }
        let k = self.interval(t);
        for w in self.samples[..=k].windows(2) {
            total += w[0].position.distance(w[1].position);
        }
        let a = &self.samples[k];
        let b = &self.samples[k + 1];
        let f = ((t - a.t_s) / (b.t_s - a.t_s)).clamp(0.0, 1.0);
        total + a.position.distance(b.position) * f
    }

    /// Earliest time at which the arc length reaches `s`, clamped to the end.
    pub fn time_at_arc_length(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for w in self.samples.windows(2) {
            let d = w[0].position.distance(w[1].position);
            if d > 0.0 && acc + d >= s {
                let f = ((s - acc) / d).clamp(0.0, 1.0);
                return w[0].t_s + (w[1].t_s - w[0].t_s) * f;
            }
            acc += d;
        }
        self.end_time()
    }
}

/// Kinematic state at `t`: positions interpolate linearly between samples and
/// velocity is the finite difference across the enclosing interval.
pub fn sample(traj: &Trajectory, t: f64) -> Result<KinematicState> {
    if !traj.contains_time(t) {
        return Err(Error::TimeOutOfRange {
            t,
            start: traj.start_time(),
            end: traj.end_time(),
        });
    }
    let s = &traj.samples;
    if s.len() == 1 {
        return Ok(KinematicState {
            position: s[0].position,
            velocity: s[0].heading * s[0].speed_mps,
            time_s: t,
        });
    }
    let k = traj.interval(t);
    let (a, b) = (&s[k], &s[k + 1]);
    let velocity = (b.position - a.position) / (b.t_s - a.t_s);
    let position = if t == a.t_s {
        a.position
    } else if t == b.t_s {
        b.position
    } else {
        a.position + (b.position - a.position) * ((t - a.t_s) / (b.t_s - a.t_s))
    };
    Ok(KinematicState {
        position,
        velocity,
        time_s: t,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkState {
    LoS,
    NLoS,
}

pub fn los_state(scene: &Scene, tx: &Transmitter, pos: Vec3) -> LinkState {
    if scene.occluded(tx.position, pos) {
        LinkState::NLoS
    } else {
        LinkState::LoS
    }
}

/// A moving obstacle that follows a trajectory on the ground.
#[derive(Clone, Debug)]
pub struct ObstacleTrack {
    pub object_id: u32,
    pub trajectory: Trajectory,
}

/// A scene whose dynamic objects follow tracks over time.
#[derive(Clone, Debug)]
pub struct DynamicScene {
    pub scene: Scene,
    pub tracks: Vec<ObstacleTrack>,
}

impl DynamicScene {
    pub fn new(scene: Scene, tracks: Vec<ObstacleTrack>) -> Result<DynamicScene> {
        for tr in &tracks {
            match scene.object(tr.object_id) {
                Some(o) if o.is_dynamic => {}
                Some(_) => return Err(Error::InvalidArgument(format!("object {} is static", tr.object_id))),
                None => return Err(Error::UnknownObject(tr.object_id)),
            }
        }
        Ok(DynamicScene { scene, tracks })
    }

    /// Poses every tracked object at time `t` and refits the dynamic BVH.
    pub fn advance(&mut self, t: f64) -> Result<RefitStats> {
        let moves = self.poses_at(t)?;
        self.scene.set_time(t);
        self.scene.move_objects(&moves)
    }

    /// `(id, pose, velocity)` of every tracked object at `t`. Times outside a
    /// track's range hold its first or last pose. Obstacles stand on the ground.
    pub fn poses_at(&self, t: f64) -> Result<Vec<(u32, Vec3, Vec3)>> {
        let mut moves = Vec::with_capacity(self.tracks.len());
        for tr in &self.tracks {
            let traj = &tr.trajectory;
            let tc = t.clamp(traj.start_time(), traj.end_time());
            let k = sample(traj, tc)?;
            let v = if t == tc { k.velocity } else { Vec3::ZERO };
            moves.push((
                tr.object_id,
                Vec3::new(k.position.x, k.position.y, 0.0),
                Vec3::new(v.x, v.y, 0.0),
            ));
        }
        Ok(moves)
    }
}

/// The scene at time `t` as a fresh snapshot of `dynamic`'s objects.
pub fn advance_scene(dynamic: &mut DynamicScene, t: f64) -> Result<RefitStats> {
    dynamic.advance(t)
}

/// Hard cap on segment arc length, m.
pub const MAX_SEGMENT_LENGTH_CAP: f64 = 15.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub max_segment_length_m: f64,
    /// Spacing of the uniform scan for state changes, s.
    pub scan_step_s: f64,
    /// Width to which state-change boundaries are bisected, s.
    pub boundary_tolerance_s: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            max_segment_length_m: 10.0,
            scan_step_s: 0.1,
            boundary_tolerance_s: 1e-3,
        }
    }
}

impl SegmentParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_segment_length_m > 0.0 && self.max_segment_length_m <= MAX_SEGMENT_LENGTH_CAP) {
            return Err(Error::InvalidArgument(format!(
                "max segment length must be in (0, {MAX_SEGMENT_LENGTH_CAP}] m, got {}",
                self.max_segment_length_m
            )));
        }
        if !(self.scan_step_s > 0.0) || !(self.boundary_tolerance_s > 0.0) {
            return Err(Error::InvalidArgument("segment scan step and tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub receiver_id: String,
    pub t_start: f64,
    pub t_end: f64,
    pub state: LinkState,
    /// Line of sight (empty signature) and the strongest single reflection at the segment start.
    pub anchor_paths: Vec<PathSignature>,
    pub path_length_m: f64,
}

fn anchors(p: &Probe) -> Vec<PathSignature> {
    let mut v = Vec::new();
    if p.los {
        v.push(PathSignature::default());
    }
    if let Some(s) = &p.primary {
        v.push(s.clone());
    }
    v
}

fn state_of(p: &Probe) -> LinkState {
    if p.los {
        LinkState::LoS
    } else {
        LinkState::NLoS
    }
}

/// Online segmentation of one trajectory. Feed it increasing times with
/// [`SegmentTracker::advance_to`]; each call scans the elapsed interval for
/// arc-length overruns, line-of-sight flips, and changes of the strongest
/// single reflection, closing segments as it finds them.
#[derive(Clone, Debug)]
pub struct SegmentTracker {
    params: SegmentParams,
    closed: Vec<TrajectorySegment>,
    start: f64,
    start_arc: f64,
    start_probe: Option<Probe>,
    /// Last scanned time and its probe.
    last: f64,
    last_probe: Option<Probe>,
}

impl SegmentTracker {
    pub fn new(params: SegmentParams) -> Result<SegmentTracker> {
        params.validate()?;
        Ok(SegmentTracker {
            params,
            closed: Vec::new(),
            start: f64::NAN,
            start_arc: 0.0,
            start_probe: None,
            last: f64::NAN,
            last_probe: None,
        })
    }

    /// Index of the segment currently open.
    pub fn current_index(&self) -> usize {
        self.closed.len()
    }

    pub fn closed_segments(&self) -> &[TrajectorySegment] {
        &self.closed
    }

    /// Scans `(last, t]` and returns the index of the segment containing `t`.
    /// `probe` evaluates the channel features at a trajectory time.
    pub fn advance_to<F>(&mut self, traj: &Trajectory, t: f64, mut probe: F) -> Result<usize>
    where
        F: FnMut(f64) -> Result<Probe>,
    {
        if self.start_probe.is_none() {
            let p = probe(t)?;
            self.start = t;
            self.start_arc = traj.arc_length_at(t);
            self.start_probe = Some(p.clone());
            self.last = t;
            self.last_probe = Some(p);
            return Ok(0);
        }
        if !(t > self.last) {
            return Ok(self.current_index());
        }
        let mut times: Vec<f64> = traj.samples.iter().map(|s| s.t_s).filter(|&s| s > self.last && s < t).collect();
        let t0 = traj.start_time();
        let step = self.params.scan_step_s;
        let k0 = ((self.last - t0) / step).floor() as i64 + 1;
        let mut k = k0.max(0);
        loop {
            let g = t0 + k as f64 * step;
            if g >= t {
                break;
            }
            if g > self.last {
                times.push(g);
            }
            k += 1;
        }
        times.push(t);
        times.sort_by(f64::total_cmp);
        times.dedup();
        for ti in times {
            self.scan_to(traj, ti, &mut probe)?;
        }
        Ok(self.current_index())
    }

    fn scan_to<F>(&mut self, traj: &Trajectory, t: f64, probe: &mut F) -> Result<()>
    where
        F: FnMut(f64) -> Result<Probe>,
    {
        let limit = self.params.max_segment_length_m;
        let end = traj.end_time();
        loop {
            // Arc length first: a boundary inside (last, t] at exactly `limit` metres.
            let arc_t = traj.arc_length_at(t);
            if arc_t - self.start_arc > limit + 1e-9 {
                // Rounding can put the boundary at or just before the last scanned time.
                let tb = traj.time_at_arc_length(self.start_arc + limit).max(self.last);
                if tb == self.last && tb < end - 1e-9 {
                    let p = self.last_probe.clone().expect("scanned probe");
                    self.close_with(traj, tb, p);
                    continue;
                }
                if tb < end - 1e-9 {
                    // A state change before the arc boundary takes precedence.
                    let pb = probe(tb)?;
                    if Some(&pb) != self.last_probe.as_ref() {
                        let hi = self.bisect(tb, &pb, probe)?;
                        self.close_at(traj, hi, probe)?;
                        continue;
                    }
                    self.close_with(traj, tb, pb);
                    continue;
                }
            }
            let p = probe(t)?;
            if Some(&p) != self.last_probe.as_ref() {
                let hi = self.bisect(t, &p, probe)?;
                self.close_at(traj, hi, probe)?;
                continue;
            }
            self.last = t;
            self.last_probe = Some(p);
            return Ok(());
        }
    }

    /// Narrows the change between `last` and `hi` to the tolerance and
    /// returns the right end.
    fn bisect<F>(&mut self, mut hi: f64, _hi_probe: &Probe, probe: &mut F) -> Result<f64>
    where
        F: FnMut(f64) -> Result<Probe>,
    {
        let mut lo = self.last;
        let lo_probe = self.last_probe.clone();
        while hi - lo > self.params.boundary_tolerance_s {
            let mid = 0.5 * (lo + hi);
            let pm = probe(mid)?;
            if Some(&pm) == lo_probe.as_ref() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.last = lo;
        Ok(hi)
    }

    fn close_at<F>(&mut self, traj: &Trajectory, t: f64, probe: &mut F) -> Result<()>
    where
        F: FnMut(f64) -> Result<Probe>,
    {
        let p = probe(t)?;
        self.close_with(traj, t, p);
        Ok(())
    }

    fn close_with(&mut self, traj: &Trajectory, t: f64, p: Probe) {
        let start_probe = self.start_probe.take().expect("open segment");
        let arc = traj.arc_length_at(t);
        self.closed.push(TrajectorySegment {
            receiver_id: traj.receiver_id.clone(),
            t_start: self.start,
            t_end: t,
            state: state_of(&start_probe),
            anchor_paths: anchors(&start_probe),
            path_length_m: arc - self.start_arc,
        });
        self.start = t;
        self.start_arc = arc;
        self.start_probe = Some(p.clone());
        self.last = t;
        self.last_probe = Some(p);
    }

    /// Closes the open segment at the last scanned time and returns all segments.
    pub fn finish(mut self, traj: &Trajectory) -> Vec<TrajectorySegment> {
        if let Some(p) = self.start_probe.take() {
            let t = self.last;
            if t > self.start || self.closed.is_empty() {
                self.closed.push(TrajectorySegment {
                    receiver_id: traj.receiver_id.clone(),
                    t_start: self.start,
                    t_end: t,
                    state: state_of(&p),
                    anchor_paths: anchors(&p),
                    path_length_m: traj.arc_length_at(t) - self.start_arc,
                });
            }
        }
        self.closed
    }
}

/// Splits a trajectory into segments over a fixed scene snapshot.
pub fn segment_trajectory(scene: &Scene, tx: &Transmitter, traj: &Trajectory, params: &SegmentParams) -> Result<Vec<TrajectorySegment>> {
    let config = TraceConfig {
        max_reflection_order: 1,
        diffraction: false,
        ..TraceConfig::default()
    };
    let tracer = Tracer::new(scene, tx.clone(), config)?;
    segment_with(&tracer, scene, traj, params)
}

/// [`segment_trajectory`] with an existing tracer.
pub fn segment_with(tracer: &Tracer, scene: &Scene, traj: &Trajectory, params: &SegmentParams) -> Result<Vec<TrajectorySegment>> {
    if traj.samples.len() < 2 {
        return Err(Error::InvalidArgument("segmentation needs at least two samples".into()));
    }
    let mut stats = TraceStats::default();
    let mut tracker = SegmentTracker::new(*params)?;
    let mut probe = |t: f64| -> Result<Probe> {
        let pos = sample(traj, t)?.position;
        tracer.probe(scene, pos, &mut stats)
    };
    tracker.advance_to(traj, traj.start_time(), &mut probe)?;
    tracker.advance_to(traj, traj.end_time(), &mut probe)?;
    Ok(tracker.finish(traj))
}
