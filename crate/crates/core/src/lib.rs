//! Desk-scale workbench for non-magnetic particles floating on a
//! solenoid-deformed air-ferrofluid interface.
//!
//! The crate is organised bottom-up:
//!
//! - [`rig`]: solenoid ring geometry and supply calibration.
//! - [`velocity`]: empirical actuation-velocity laws and their superposition.
//! - [`plant`]: stochastic planar particle simulator.
//! - [`energy`]: axisymmetric interface energy and the radial push force.
//! - [`controller`]: per-tick ON/OFF pattern selection and carrot-point path following.
//! - [`vision`]: synthetic camera, Otsu thresholding and blob centroiding.
//! - [`harness`]: reference paths, closed-loop trials, metrics and CSV/JSON export.
//! - [`session`]: a live closed-loop session driven by queued commands.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod energy;
pub mod error;
pub mod harness;
pub mod plant;
pub mod rig;
pub mod session;
pub mod velocity;
pub mod vision;

pub use controller::{ActuationPattern, ControllerWeights, PathFollower, ServoScene};
pub use error::{Error, Result};
pub use harness::{
    ClosedLoop, MeasurementMode, PathKind, PathStats, ReferencePath, TrajectoryLog, TrialSpec,
};
pub use plant::{ParticleState, Plant, PlantParams};
pub use rig::{SolenoidClass, SolenoidSpec, WorkspaceConfig};
pub use velocity::{DistanceLaw, GainPreset, VelocityModel};

/// Planar vector in workspace millimetres (or mm/s for velocities).
pub type Vec2 = nalgebra::Vector2<f64>;

/// Number of solenoids on the ring.
pub const SOLENOID_COUNT: usize = 8;
