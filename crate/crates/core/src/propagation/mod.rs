//! Propagation paths between a fixed transmitter and a receiver: line of sight,
//! specular reflections found with the image method, and single knife-edge
//! diffraction, plus per-path and aggregate received power.

mod diffraction;
mod images;
mod tracer;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{SurfaceRef, Vec3};

pub use diffraction::{fresnel_parameter, knife_edge_loss_db};
pub use tracer::{find_diffraction_paths, find_reflection_paths, trace_channel, trace_los, Probe, TraceStats, Tracer};

/// Speed of light in vacuum, m/s. Used for propagation delay.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Rounded speed of light used for wavelength-derived quantities (free-space
/// loss, carrier phase, Doppler shift), m/s.
pub const NOMINAL_SPEED_OF_LIGHT: f64 = 3.0e8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transmitter {
    pub position: Vec3,
    pub power_dbm: f64,
    pub frequency_hz: f64,
}

impl Transmitter {
    pub fn new(position: Vec3, power_dbm: f64, frequency_hz: f64) -> Result<Transmitter> {
        if !(frequency_hz > 0.0) || !frequency_hz.is_finite() {
            return Err(Error::InvalidArgument(format!("frequency must be positive, got {frequency_hz}")));
        }
        if !position.is_finite() || !power_dbm.is_finite() {
            return Err(Error::InvalidArgument("transmitter position and power must be finite".into()));
        }
        Ok(Transmitter {
            position,
            power_dbm,
            frequency_hz,
        })
    }

    pub fn wavelength(&self) -> f64 {
        NOMINAL_SPEED_OF_LIGHT / self.frequency_hz
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InteractionKind {
    Reflection,
    Diffraction,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub kind: InteractionKind,
    /// Face (reflection) or mesh edge (diffraction) of a scene object.
    pub surface: SurfaceRef,
    pub point: Vec3,
}

/// Ordered `(kind, surface)` list identifying a path independent of where its
/// interaction points currently lie. Line of sight is the empty signature.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PathSignature(pub Vec<(InteractionKind, SurfaceRef)>);

impl PathSignature {
    pub fn is_los(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationPath {
    pub interactions: Vec<Interaction>,
    pub length_m: f64,
    pub delay_s: f64,
    pub power_dbm: f64,
    pub phase_rad: f64,
    /// Propagation direction at the receiver (last point toward receiver).
    pub arrival_dir: Vec3,
    /// Propagation direction leaving the transmitter.
    pub departure_dir: Vec3,
    pub doppler_hz: f64,
}

impl PropagationPath {
    /// Assembles a path from its interaction points. `gain_db` collects
    /// interaction losses (reflection coefficients, diffraction loss).
    pub fn from_points(tx: &Transmitter, rx: Vec3, interactions: Vec<Interaction>, gain_db: f64) -> PropagationPath {
        let mut prev = tx.position;
        let mut length = 0.0;
        for p in interactions.iter().map(|i| i.point).chain(std::iter::once(rx)) {
            length += prev.distance(p);
            prev = p;
        }
        let first = interactions.first().map_or(rx, |i| i.point);
        let last = interactions.last().map_or(tx.position, |i| i.point);
        let fspl = free_space_loss_unchecked(length, tx.frequency_hz);
        PropagationPath {
            interactions,
            length_m: length,
            delay_s: length / SPEED_OF_LIGHT,
            power_dbm: tx.power_dbm - fspl + gain_db,
            phase_rad: (2.0 * PI * length / tx.wavelength()).rem_euclid(2.0 * PI),
            arrival_dir: (rx - last).normalize(),
            departure_dir: (first - tx.position).normalize(),
            doppler_hz: 0.0,
        }
    }

    pub fn signature(&self) -> PathSignature {
        PathSignature(self.interactions.iter().map(|i| (i.kind, i.surface)).collect())
    }

    pub fn order(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_los(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn linear_power_mw(&self) -> f64 {
        10f64.powf(self.power_dbm / 10.0)
    }
}

/// How per-path powers combine into a received total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Combining {
    /// Sum of linear powers.
    #[default]
    NonCoherent,
    /// Magnitude squared of the phasor sum of path amplitudes.
    Coherent,
}

/// How material reflection coefficients turn into a per-bounce loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReflectionModel {
    /// Coefficient is an amplitude ratio: `20·log10(Γ)` per bounce.
    #[default]
    Amplitude,
    /// Coefficient is a power ratio: `10·log10(Γ)` per bounce.
    Power,
}

impl ReflectionModel {
    pub fn gain_db(self, coefficient: f64) -> f64 {
        match self {
            ReflectionModel::Amplitude => 20.0 * coefficient.log10(),
            ReflectionModel::Power => 10.0 * coefficient.log10(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    /// Highest number of reflections per path, 1 to 3.
    pub max_reflection_order: usize,
    pub diffraction: bool,
    pub combining: Combining,
    pub reflection_model: ReflectionModel,
    /// Margin around the scene inside which receivers use the spatial index, m.
    pub world_margin_m: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            max_reflection_order: 2,
            diffraction: true,
            combining: Combining::NonCoherent,
            reflection_model: ReflectionModel::Amplitude,
            world_margin_m: 1000.0,
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.max_reflection_order) {
            return Err(Error::InvalidArgument(format!(
                "max reflection order must be within 1..=3, got {}",
                self.max_reflection_order
            )));
        }
        if !(self.world_margin_m >= 0.0) {
            return Err(Error::InvalidArgument("world margin must be non-negative".into()));
        }
        Ok(())
    }
}

/// Received channel at one receiver position and time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSnapshot {
    pub time_s: f64,
    /// Paths sorted by signature.
    pub paths: Vec<PropagationPath>,
    /// `None` when no path reaches the receiver.
    pub total_power_dbm: Option<f64>,
    pub los: bool,
}

impl ChannelSnapshot {
    pub fn from_paths(time_s: f64, mut paths: Vec<PropagationPath>, combining: Combining) -> ChannelSnapshot {
        sort_canonical(&mut paths);
        let total_power_dbm = aggregate_power_dbm(&paths, combining).ok();
        let los = paths.iter().any(PropagationPath::is_los);
        ChannelSnapshot {
            time_s,
            paths,
            total_power_dbm,
            los,
        }
    }

    /// Signature of the strongest single-reflection path, if any.
    pub fn primary_reflection(&self) -> Option<PathSignature> {
        tracer::strongest(self.paths.iter())
    }

    /// Power-weighted RMS delay spread, seconds. Zero with fewer than two paths.
    pub fn rms_delay_spread(&self) -> f64 {
        rms_delay_spread(&self.paths)
    }
}

/// Sorts paths by signature, ties broken by length.
pub fn sort_canonical(paths: &mut [PropagationPath]) {
    paths.sort_by(|a, b| a.signature().cmp(&b.signature()).then(a.length_m.total_cmp(&b.length_m)));
}

/// Free-space path loss `20·log10(4π·d·f/c)` in dB.
pub fn free_space_loss_db(d_m: f64, f_hz: f64) -> Result<f64> {
    if !(d_m > 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be positive, got {d_m}")));
    }
    if !(f_hz > 0.0) {
        return Err(Error::InvalidArgument(format!("frequency must be positive, got {f_hz}")));
    }
    Ok(free_space_loss_unchecked(d_m, f_hz))
}

#[inline]
fn free_space_loss_unchecked(d_m: f64, f_hz: f64) -> f64 {
    20.0 * (4.0 * PI * d_m * f_hz / NOMINAL_SPEED_OF_LIGHT).log10()
}

/// Total received power of a path set. Coherent combining can cancel to −∞.
pub fn aggregate_power_dbm(paths: &[PropagationPath], combining: Combining) -> Result<f64> {
    if paths.is_empty() {
        return Err(Error::NoPaths);
    }
    let total_mw = match combining {
        Combining::NonCoherent => paths.iter().map(PropagationPath::linear_power_mw).sum::<f64>(),
        Combining::Coherent => {
            let (mut re, mut im) = (0.0, 0.0);
            for p in paths {
                let amp = 10f64.powf(p.power_dbm / 20.0);
                re += amp * p.phase_rad.cos();
                im -= amp * p.phase_rad.sin();
            }
            let mag2 = re * re + im * im;
            // Residue of exact cancellation is rounding noise.
            let scale: f64 = paths.iter().map(PropagationPath::linear_power_mw).sum();
            if mag2 <= scale * 1e-24 {
                0.0
            } else {
                mag2
            }
        }
    };
    Ok(10.0 * total_mw.log10())
}

pub fn rms_delay_spread(paths: &[PropagationPath]) -> f64 {
    let weight: f64 = paths.iter().map(PropagationPath::linear_power_mw).sum();
    if paths.len() < 2 || !(weight > 0.0) {
        return 0.0;
    }
    let mean = paths.iter().map(|p| p.linear_power_mw() * p.delay_s).sum::<f64>() / weight;
    let var = paths.iter().map(|p| p.linear_power_mw() * (p.delay_s - mean).powi(2)).sum::<f64>() / weight;
    var.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_with(power_dbm: f64, phase_rad: f64) -> PropagationPath {
        PropagationPath {
            interactions: vec![],
            length_m: 1.0,
            delay_s: 1.0 / SPEED_OF_LIGHT,
            power_dbm,
            phase_rad,
            arrival_dir: Vec3::X,
            departure_dir: Vec3::X,
            doppler_hz: 0.0,
        }
    }

    #[test]
    fn fspl_is_zero_at_wavelength_over_four_pi() {
        for f in [9e8, 3e9, 28e9] {
            let d = NOMINAL_SPEED_OF_LIGHT / f / (4.0 * PI);
            assert!(free_space_loss_db(d, f).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn fspl_at_100m_3ghz() {
        // 20·log10(4π·100/0.1) = 20·log10(4000π)
        let want = 20.0 * (4000.0 * PI).log10();
        let got = free_space_loss_db(100.0, 3e9).unwrap();
        assert!((got - want).abs() < 1e-12);
        assert_eq!(format!("{got:.2}"), "81.98");
    }

    #[test]
    fn fspl_doubling_distance_adds_six_db() {
        let a = free_space_loss_db(37.0, 3e9).unwrap();
        let b = free_space_loss_db(74.0, 3e9).unwrap();
        assert!((b - a - 20.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn fspl_rejects_non_positive_distance() {
        assert!(free_space_loss_db(0.0, 3e9).is_err());
        assert!(free_space_loss_db(-1.0, 3e9).is_err());
    }

    #[test]
    fn aggregate_identity_and_sum() {
        let one = [path_with(-30.0, 0.0)];
        assert!((aggregate_power_dbm(&one, Combining::NonCoherent).unwrap() + 30.0).abs() < 1e-12);
        let two = [path_with(-30.0, 0.0), path_with(-30.0, 1.0)];
        let got = aggregate_power_dbm(&two, Combining::NonCoherent).unwrap();
        assert!((got - 10.0 * (2e-3f64).log10()).abs() < 1e-12);
        assert_eq!(format!("{got:.2}"), "-26.99");
    }

    #[test]
    fn coherent_opposite_phases_cancel() {
        let two = [path_with(-30.0, 0.0), path_with(-30.0, PI)];
        let got = aggregate_power_dbm(&two, Combining::Coherent).unwrap();
        assert_eq!(got, f64::NEG_INFINITY);
        let same = [path_with(-30.0, 0.3), path_with(-30.0, 0.3)];
        let got = aggregate_power_dbm(&same, Combining::Coherent).unwrap();
        assert!((got - (-30.0 + 20.0 * 2f64.log10())).abs() < 1e-9);
    }

    #[test]
    fn aggregate_of_nothing_errors() {
        assert!(matches!(aggregate_power_dbm(&[], Combining::NonCoherent), Err(Error::NoPaths)));
    }

    #[test]
    fn delay_is_length_over_c() {
        let tx = Transmitter::new(Vec3::ZERO, 50.0, 3e9).unwrap();
        let p = PropagationPath::from_points(&tx, Vec3::new(123.0, 4.0, 5.0), vec![], 0.0);
        assert_eq!(p.delay_s, p.length_m / SPEED_OF_LIGHT);
    }
}
