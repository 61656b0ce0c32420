//! Doppler shift from receiver motion, and power-weighted Doppler statistics.

use serde::{Deserialize, Serialize};

use crate::dynamics::KinematicState;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::propagation::{ChannelSnapshot, PropagationPath, NOMINAL_SPEED_OF_LIGHT};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DopplerStats {
    pub mean_shift_hz: f64,
    pub rms_spread_hz: f64,
}

/// `f_c·(v/c)·cos θ`.
pub fn doppler_shift(f_c: f64, v_mps: f64, theta_rad: f64) -> f64 {
    f_c * (v_mps / NOMINAL_SPEED_OF_LIGHT) * theta_rad.cos()
}

/// Shift of one path seen by a moving receiver; the angle is measured between
/// the velocity and the direction back along the arriving ray.
pub fn path_doppler(path: &PropagationPath, rx: &KinematicState, f_c: f64) -> f64 {
    velocity_doppler(path.arrival_dir, rx.velocity, f_c)
}

fn velocity_doppler(arrival_dir: Vec3, velocity: Vec3, f_c: f64) -> f64 {
    let v = velocity.length();
    if v == 0.0 {
        return 0.0;
    }
    doppler_shift(f_c, v, velocity.angle_to(-arrival_dir))
}

/// Fills `doppler_hz` of every path in the snapshot.
pub fn apply_doppler(snapshot: &mut ChannelSnapshot, rx: &KinematicState, f_c: f64) {
    for p in &mut snapshot.paths {
        p.doppler_hz = path_doppler(p, rx, f_c);
    }
}

/// Power-weighted mean and RMS spread of `(linear power, shift)` pairs.
pub fn doppler_stats(paths: &[(f64, f64)]) -> Result<DopplerStats> {
    if paths.is_empty() {
        return Err(Error::NoPaths);
    }
    let w: f64 = paths.iter().map(|(p, _)| p).sum();
    if !(w > 0.0) {
        return Err(Error::InvalidArgument("Doppler weights must have a positive sum".into()));
    }
    let mean = paths.iter().map(|(p, f)| p * f).sum::<f64>() / w;
    let var = paths.iter().map(|(p, f)| p * (f - mean) * (f - mean)).sum::<f64>() / w;
    Ok(DopplerStats {
        mean_shift_hz: mean,
        rms_spread_hz: var.max(0.0).sqrt(),
    })
}

/// Doppler statistics of a snapshot whose shifts have been filled in.
pub fn snapshot_doppler(snapshot: &ChannelSnapshot) -> Result<DopplerStats> {
    let pairs: Vec<(f64, f64)> = snapshot.paths.iter().map(|p| (p.linear_power_mw(), p.doppler_hz)).collect();
    doppler_stats(&pairs)
}
