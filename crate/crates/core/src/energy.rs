//! Axisymmetric energy of a particle pinned at the deformed interface, and
//! the radial force obtained from it.
//!
//! With `rho` the in-plane distance from the coil axis,
//!
//! ```text
//! E(rho) = E0 + m_e g (u(rho) + l^2 H(rho)) - (chi_L V_imm - chi_p V_p) B(rho)^2 / mu0
//! F(rho) = -dE/drho
//! ```
//!
//! The bump `u` is a Gaussian and `H` its small-slope mean curvature
//! `(u'' + u'/rho) / 2`. `B` is the coil falloff evaluated at the 3D
//! distance from the tip, which sits `tip_height` above the fluid. Everything
//! here is SI.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rig::{FieldFalloff, WorkspaceConfig, DEFAULT_TIP_HEIGHT_MM};

pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;
pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidProperties {
    /// N/m
    pub surface_tension: f64,
    /// kg/m^3
    pub density: f64,
    /// Pa s
    pub viscosity: f64,
    /// SI volume susceptibility of the liquid.
    pub susceptibility: f64,
}

impl Default for FluidProperties {
    /// The water-based ferrofluid of the rig. Its susceptibility is not
    /// measured on the rig; 0.02 is typical of a dilute water-based fluid.
    fn default() -> Self {
        FluidProperties {
            surface_tension: 74.75e-3,
            density: 1071.0,
            viscosity: 0.9e-3,
            susceptibility: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleProperties {
    /// m^3
    pub volume: f64,
    /// Volume of displaced liquid, m^3.
    pub immersed_volume: f64,
    pub susceptibility: f64,
    /// Buoyancy-corrected mass, kg. Negative for a particle lighter than
    /// the liquid it displaces.
    pub effective_mass: f64,
    /// Surface adsorption energy, J.
    pub adsorption_energy: f64,
}

impl ParticleProperties {
    /// Half-immersed sphere of the given diameter and density floating on
    /// `fluid`.
    pub fn floating_sphere(
        diameter: f64,
        density: f64,
        susceptibility: f64,
        fluid: &FluidProperties,
    ) -> Self {
        let r = 0.5 * diameter;
        let volume = 4.0 / 3.0 * std::f64::consts::PI * r * r * r;
        let immersed_volume = 0.5 * volume;
        ParticleProperties {
            volume,
            immersed_volume,
            susceptibility,
            effective_mass: density * volume - fluid.density * immersed_volume,
            adsorption_energy: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.volume > 0.0) || !(0.0..=self.volume).contains(&self.immersed_volume) {
            return Err(Error::Config(format!(
                "particle volumes inconsistent: V_p = {}, V_imm = {}",
                self.volume, self.immersed_volume
            )));
        }
        Ok(())
    }
}

impl Default for ParticleProperties {
    /// 550 um polyethylene sphere (weakly diamagnetic).
    fn default() -> Self {
        ParticleProperties::floating_sphere(550e-6, 950.0, -1.0e-5, &FluidProperties::default())
    }
}

/// Gaussian interface bump `u(rho) = h exp(-rho^2 / (2 w^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeformationField {
    /// m, positive upward
    pub height: f64,
    /// m
    pub width: f64,
}

impl Default for DeformationField {
    fn default() -> Self {
        DeformationField {
            height: 2.0e-4,
            width: 1.0e-3,
        }
    }
}

impl DeformationField {
    pub fn height_at(&self, rho: f64) -> f64 {
        let w2 = self.width * self.width;
        self.height * (-rho * rho / (2.0 * w2)).exp()
    }

    /// `du/drho`
    pub fn slope_at(&self, rho: f64) -> f64 {
        -rho / (self.width * self.width) * self.height_at(rho)
    }

    /// `d2u/drho2`
    pub fn second_derivative_at(&self, rho: f64) -> f64 {
        let w2 = self.width * self.width;
        (rho * rho / (w2 * w2) - 1.0 / w2) * self.height_at(rho)
    }

    /// Small-slope mean curvature; `(u'' + u'/rho)/2` reduces to
    /// `u(rho) (rho^2/w^4 - 2/w^2) / 2` for the Gaussian, which is regular
    /// at the axis.
    pub fn mean_curvature_at(&self, rho: f64) -> f64 {
        let w2 = self.width * self.width;
        0.5 * self.height_at(rho) * (rho * rho / (w2 * w2) - 2.0 / w2)
    }

    /// `dH/drho`
    pub fn curvature_slope_at(&self, rho: f64) -> f64 {
        let w2 = self.width * self.width;
        let w4 = w2 * w2;
        0.5 * (self.slope_at(rho) * (rho * rho / w4 - 2.0 / w2)
            + self.height_at(rho) * 2.0 * rho / w4)
    }
}

pub fn mean_curvature(def: &DeformationField, rho: f64) -> f64 {
    def.mean_curvature_at(rho)
}

pub fn capillary_length(fluid: &FluidProperties) -> Result<f64> {
    capillary_length_with(fluid, GRAVITY)
}

fn capillary_length_with(fluid: &FluidProperties, gravity: f64) -> Result<f64> {
    if !(fluid.surface_tension > 0.0 && fluid.density > 0.0) {
        return Err(Error::domain(
            "fluid properties",
            "surface tension and density must be positive",
        ));
    }
    Ok((fluid.surface_tension / (fluid.density * gravity)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub fluid: FluidProperties,
    pub particle: ParticleProperties,
    pub deformation: DeformationField,
    /// `None` switches the field off entirely.
    pub field: Option<FieldFalloff>,
    /// Tip height above the fluid, m.
    pub tip_height: f64,
    /// m
    pub capillary_length: f64,
    pub gravity: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams::new(
            FluidProperties::default(),
            ParticleProperties::default(),
            DeformationField::default(),
            Some(FieldFalloff::default()),
            DEFAULT_TIP_HEIGHT_MM * 1e-3,
        )
        .expect("default fluid is valid")
    }
}

impl EnergyParams {
    /// Parameters with the capillary length derived from the fluid.
    pub fn new(
        fluid: FluidProperties,
        particle: ParticleProperties,
        deformation: DeformationField,
        field: Option<FieldFalloff>,
        tip_height: f64,
    ) -> Result<Self> {
        particle.validate()?;
        if let Some(f) = &field {
            f.validate()?;
        }
        Ok(EnergyParams {
            capillary_length: capillary_length(&fluid)?,
            fluid,
            particle,
            deformation,
            field,
            tip_height,
            gravity: GRAVITY,
        })
    }

    /// Defaults with the field falloff and tip height taken from a rig.
    pub fn for_rig(cfg: &WorkspaceConfig) -> Result<Self> {
        let d = EnergyParams::default();
        EnergyParams::new(
            d.fluid,
            d.particle,
            d.deformation,
            Some(cfg.falloff),
            cfg.tip_height * 1e-3,
        )
    }

    /// Field magnitude at in-plane distance `rho`, T.
    pub fn field_at(&self, rho: f64) -> f64 {
        match &self.field {
            None => 0.0,
            Some(f) => {
                let d_sq_mm = (rho * rho + self.tip_height * self.tip_height) * 1e6;
                f.field_mt_sq(d_sq_mm) * 1e-3
            }
        }
    }

    /// `d(B^2)/drho`, T^2/m.
    fn field_sq_slope_at(&self, rho: f64) -> f64 {
        match &self.field {
            None => 0.0,
            Some(f) => {
                let b = self.field_at(rho);
                let d_sq = rho * rho + self.tip_height * self.tip_height;
                // B ~ d^-n  =>  dB/drho = -n B rho / d^2
                2.0 * b * (-f.exponent * b * rho / d_sq)
            }
        }
    }

    /// `chi_L V_imm - chi_p V_p`, m^3.
    fn magnetic_volume(&self) -> f64 {
        self.fluid.susceptibility * self.particle.immersed_volume
            - self.particle.susceptibility * self.particle.volume
    }

    fn weight(&self) -> f64 {
        self.particle.effective_mass * self.gravity
    }
}

/// Total energy at in-plane distance `rho` m from the axis, J.
pub fn total_energy(params: &EnergyParams, rho: f64) -> f64 {
    let def = &params.deformation;
    let l2 = params.capillary_length * params.capillary_length;
    let b = params.field_at(rho);
    params.particle.adsorption_energy
        + params.weight() * (def.height_at(rho) + l2 * def.mean_curvature_at(rho))
        - params.magnetic_volume() * b * b / MU0
}

/// Closed-form `dE/drho`, J/m.
pub fn energy_gradient(params: &EnergyParams, rho: f64) -> f64 {
    let def = &params.deformation;
    let l2 = params.capillary_length * params.capillary_length;
    params.weight() * (def.slope_at(rho) + l2 * def.curvature_slope_at(rho))
        - params.magnetic_volume() * params.field_sq_slope_at(rho) / MU0
}

fn central_difference(params: &EnergyParams, rho: f64, step: f64) -> f64 {
    -(total_energy(params, rho + step) - total_energy(params, rho - step)) / (2.0 * step)
}

/// `-dE/drho` by a Richardson-extrapolated central difference with base
/// step `step`, N.
pub fn radial_force_with_step(params: &EnergyParams, rho: f64, step: f64) -> f64 {
    let coarse = central_difference(params, rho, step);
    let fine = central_difference(params, rho, 0.5 * step);
    (4.0 * fine - coarse) / 3.0
}

/// Radial force `-dE/drho` with the base step at a thousandth of the bump
/// width, N. Positive values push the particle away from the axis.
pub fn radial_force(params: &EnergyParams, rho: f64) -> f64 {
    radial_force_with_step(params, rho, params.deformation.width / 1000.0)
}

/// One row of an energy sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub rho_m: f64,
    pub u_m: f64,
    #[serde(rename = "H_per_m")]
    pub h_per_m: f64,
    #[serde(rename = "B_T")]
    pub b_t: f64,
    #[serde(rename = "E_J")]
    pub e_j: f64,
    #[serde(rename = "F_N")]
    pub f_n: f64,
}

/// Evaluate every term at `points` evenly spaced distances in `[0, rho_max]`.
pub fn energy_sweep(params: &EnergyParams, rho_max: f64, points: usize) -> Vec<EnergySample> {
    let n = points.max(2);
    (0..n)
        .map(|k| {
            let rho = rho_max * k as f64 / (n - 1) as f64;
            EnergySample {
                rho_m: rho,
                u_m: params.deformation.height_at(rho),
                h_per_m: params.deformation.mean_curvature_at(rho),
                b_t: params.field_at(rho),
                e_j: total_energy(params, rho),
                f_n: radial_force(params, rho),
            }
        })
        .collect()
}

/// CSV with header `rho_m,u_m,H_per_m,B_T,E_J,F_N`.
pub fn write_energy_csv<W: Write>(rows: &[EnergySample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
