//! Dynamic ray-traced radio propagation for urban scenes with moving receivers.
//!
//! The crate traces line-of-sight, specular reflection and knife-edge
//! diffraction paths from a fixed transmitter through a scene of static
//! buildings and moving objects, reuses path searches across a receiver's
//! trajectory while the channel stays coherent, and reports power, delay and
//! Doppler statistics.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod citygen;
pub mod coherence;
pub mod config;
pub mod doppler;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod io;
pub mod par;
pub mod propagation;
pub mod sim;

pub use error::{Error, Result};
