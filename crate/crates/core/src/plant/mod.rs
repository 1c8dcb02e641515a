//! Planar particle simulator.
//!
//! Each tick the ON coils command a velocity (vector sum of per-coil pushes
//! directed away from the tips), the realised velocity relaxes toward it with
//! a first-order lag, an exponentially correlated drift is added, and the
//! position is advanced by explicit Euler and clamped to the workspace disk.

mod calibration;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use calibration::lag_factor;
pub use calibration::DriveCalibration;

use crate::controller::ActuationPattern;
use crate::error::{Error, Result};
use crate::rig::WorkspaceConfig;
use crate::velocity::VelocityModel;
use crate::Vec2;

/// How the plant turns the fitted distance law into an instantaneous speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveMode {
    /// Instantaneous speed equals the fitted law at the current distance.
    Instantaneous,
    /// Instantaneous speed corrected so a lone-coil push from rest shows the
    /// fitted law as its first-second mean speed.
    #[default]
    FirstSecondCalibrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// First-order actuation lag, s.
    pub lag_tau: f64,
    /// Stationary RMS of the drift velocity vector, mm/s.
    pub drift_rms: f64,
    /// Correlation time of the drift, s.
    pub drift_corr_time: f64,
    pub seed: u64,
    pub drive: DriveMode,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            lag_tau: 0.1,
            drift_rms: 0.05,
            drift_corr_time: 2.0,
            seed: 0,
            drive: DriveMode::default(),
        }
    }
}

impl PlantParams {
    /// No lag, no drift: the plant integrates the commanded velocity exactly.
    pub fn ideal() -> Self {
        PlantParams {
            lag_tau: 0.0,
            drift_rms: 0.0,
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lag_tau >= 0.0) || !(self.drift_rms >= 0.0) || !(self.drift_corr_time > 0.0) {
            return Err(Error::Config(format!(
                "plant parameters out of range: {self:?}"
            )));
        }
        Ok(())
    }
}

/// A floating object on the interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    /// mm
    pub position: Vec2,
    /// Realised actuation velocity (lag state, drift excluded), mm/s.
    pub velocity: Vec2,
    /// mm
    pub diameter: f64,
    pub label: String,
}

impl ParticleState {
    /// The 550 um polyethylene sphere used for characterisation.
    pub fn at(position: Vec2) -> Self {
        ParticleState {
            position,
            velocity: Vec2::zeros(),
            diameter: 0.55,
            label: "PE".into(),
        }
    }

    pub fn with_kind(mut self, label: &str, diameter: f64) -> Self {
        self.label = label.into();
        self.diameter = diameter;
        self
    }
}

/// Simulator instance. Owns its random stream and drift state; the particle
/// state is passed in and returned by [`Plant::step`].
#[derive(Debug, Clone)]
pub struct Plant {
    cfg: WorkspaceConfig,
    model: VelocityModel,
    params: PlantParams,
    calibration: Option<Arc<DriveCalibration>>,
    rng: ChaCha8Rng,
    drift: Vec2,
}

impl Plant {
    pub fn new(cfg: WorkspaceConfig, model: VelocityModel, params: PlantParams) -> Result<Self> {
        cfg.validate()?;
        model.validate()?;
        params.validate()?;
        let calibration = match params.drive {
            DriveMode::Instantaneous => None,
            DriveMode::FirstSecondCalibrated => Some(DriveCalibration::shared(
                model.law,
                params.lag_tau,
                cfg.tick_dt(),
            )),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let sigma = params.drift_rms / std::f64::consts::SQRT_2;
        let drift = Vec2::new(
            sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng),
            sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng),
        );
        Ok(Plant {
            cfg,
            model,
            params,
            calibration,
            rng,
            drift,
        })
    }

    pub fn config(&self) -> &WorkspaceConfig {
        &self.cfg
    }

    pub fn model(&self) -> &VelocityModel {
        &self.model
    }

    pub fn params(&self) -> &PlantParams {
        &self.params
    }

    /// Swap the velocity model (e.g. a new gain preset). The drive
    /// calibration is rebuilt only if the distance law changed.
    pub fn set_model(&mut self, model: VelocityModel) -> Result<()> {
        model.validate()?;
        if model.law != self.model.law && self.calibration.is_some() {
            self.calibration = Some(DriveCalibration::shared(
                model.law,
                self.params.lag_tau,
                self.cfg.tick_dt(),
            ));
        }
        self.model = model;
        Ok(())
    }

    /// Current drift velocity, mm/s.
    pub fn drift(&self) -> Vec2 {
        self.drift
    }

    /// Velocity the ON coils command at `position`, mm/s.
    pub fn commanded_velocity(
        &self,
        position: Vec2,
        pattern: ActuationPattern,
        current: f64,
    ) -> Vec2 {
        let c = self.model.current_scale(current.max(0.0));
        let mut v = Vec2::zeros();
        for i in pattern.on_indices() {
            let spec = &self.cfg.solenoids[i];
            let mp = position - spec.tip_projection();
            let rho = mp.norm();
            if rho == 0.0 {
                continue;
            }
            let scale = spec.gain * self.model.class_gain.get(spec.class) * c;
            let mut speed = scale * self.model.law.speed(rho);
            if let Some(cal) = &self.calibration {
                speed *= cal.factor(rho, scale);
            }
            v += mp * (speed / rho);
        }
        v
    }

    /// Advance one tick of length `dt` seconds.
    pub fn step(
        &mut self,
        state: &ParticleState,
        pattern: ActuationPattern,
        current: f64,
        dt: f64,
    ) -> ParticleState {
        debug_assert!(dt > 0.0);
        let cmd = self.commanded_velocity(state.position, pattern, current);
        let lag = lag_factor(self.params.lag_tau, dt);
        let velocity = cmd + (state.velocity - cmd) * lag;

        self.advance_drift(dt);
        let mut position = state.position + (velocity + self.drift) * dt;
        let r = position.norm();
        if r > self.cfg.workspace_radius {
            position *= self.cfg.workspace_radius / r;
        }
        ParticleState {
            position,
            velocity,
            diameter: state.diameter,
            label: state.label.clone(),
        }
    }

    fn advance_drift(&mut self, dt: f64) {
        let phi = (-dt / self.params.drift_corr_time).exp();
        let sigma = self.params.drift_rms / std::f64::consts::SQRT_2 * (1.0 - phi * phi).sqrt();
        let n: [f64; 2] = [
            StandardNormal.sample(&mut self.rng),
            StandardNormal.sample(&mut self.rng),
        ];
        self.drift = self.drift * phi + Vec2::new(n[0], n[1]) * sigma;
    }
}
