//! Classical and linearized-quantum analysis of the degenerate
//! optomechanical parametric oscillator (DOMPO): a degenerate optical
//! parametric oscillator whose signal cavity has a movable mirror.
//!
//! The crate covers mean-field steady states, their linear stability and
//! bifurcations, direct integration of the classical equations, Gaussian
//! fluctuation covariances with the reduced mechanical state, and the
//! single-mode sideband-cooling reference system.

pub mod dynamics;
pub mod error;
pub mod fluctuations;
pub mod linalg;
pub mod params;
pub mod scan;
pub mod sideband;
pub mod stability;
pub mod steady;
pub mod verify;

pub use error::{Error, Result};
pub use params::{normalize, validate, ModelParams, PhysicalParams, Tolerances, Warning};
pub use stability::{Classification, StabilityReport};
pub use steady::{Branch, SteadyState};
