//! Empirical actuation-velocity laws.
//!
//! The actuation velocity of a resting particle is its mean speed over the
//! first second after a solenoid is switched on. It was fitted against the
//! initial particle-to-tip distance (three alternative laws) and against the
//! coil current (one linear law). The two fits are composed multiplicatively:
//! the distance law is canonical at the reference current and the current law,
//! normalised to 1 at that current, scales it.

use serde::{Deserialize, Serialize};

use crate::controller::ActuationPattern;
use crate::error::{Error, Result};
use crate::plant::ParticleState;
use crate::rig::{SolenoidClass, WorkspaceConfig};
use crate::{Vec2, SOLENOID_COUNT};

/// Below this distance the speed is frozen at its value here, mm.
pub const MIN_DISTANCE_MM: f64 = 0.1;

/// Measured centre speed of a single short coil, mm/s.
pub const CENTER_SPEED_SHORT: f64 = 0.50;
/// Measured centre speed of a single long coil, mm/s.
pub const CENTER_SPEED_LONG: f64 = 0.36;

/// Speed as a function of particle-to-tip distance at the reference current.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum DistanceLaw {
    /// `a / rho + b`
    Inverse { a: f64, b: f64 },
    /// `slope * rho + intercept`, floored at zero.
    Linear { slope: f64, intercept: f64 },
    /// `a / rho^2 + b`
    InverseSquare { a: f64, b: f64 },
}

impl DistanceLaw {
    pub const INVERSE: DistanceLaw = DistanceLaw::Inverse { a: 3.17, b: 0.03 };
    pub const LINEAR: DistanceLaw = DistanceLaw::Linear {
        slope: -0.16,
        intercept: 1.54,
    };
    pub const INVERSE_SQUARE: DistanceLaw = DistanceLaw::InverseSquare { a: 6.02, b: 0.40 };

    /// Speed at distance `rho` mm. `rho` is clamped below at [`MIN_DISTANCE_MM`].
    pub fn speed(&self, rho: f64) -> f64 {
        let rho = rho.max(MIN_DISTANCE_MM);
        match *self {
            DistanceLaw::Inverse { a, b } => a / rho + b,
            DistanceLaw::Linear { slope, intercept } => (slope * rho + intercept).max(0.0),
            DistanceLaw::InverseSquare { a, b } => a / (rho * rho) + b,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            DistanceLaw::Inverse { a, .. } | DistanceLaw::InverseSquare { a, .. } => a > 0.0,
            DistanceLaw::Linear { slope, .. } => slope < 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "distance law {self:?} is not decreasing"
            )))
        }
    }
}

/// Named per-class gain profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainPreset {
    /// Both classes at gain 1: the distance law as fitted.
    Unit,
    /// Gains that reproduce the measured single-coil centre speeds of a short
    /// (0.50 mm/s) and a long (0.36 mm/s) coil.
    #[serde(rename = "fig2d")]
    CenterCalibrated,
}

impl GainPreset {
    pub fn name(self) -> &'static str {
        match self {
            GainPreset::Unit => "unit",
            GainPreset::CenterCalibrated => "fig2d",
        }
    }
}

impl std::str::FromStr for GainPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(GainPreset::Unit),
            "fig2d" => Ok(GainPreset::CenterCalibrated),
            other => Err(Error::Config(format!("unknown gain preset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassGain {
    pub short: f64,
    pub long: f64,
}

impl ClassGain {
    pub fn get(&self, class: SolenoidClass) -> f64 {
        match class {
            SolenoidClass::Short => self.short,
            SolenoidClass::Long => self.long,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityModel {
    pub law: DistanceLaw,
    /// Slope of the current law, (mm/s)/A.
    pub current_slope: f64,
    /// Offset of the current law, mm/s.
    pub current_offset: f64,
    /// Current at which the distance law was recorded, A.
    pub reference_current: f64,
    pub class_gain: ClassGain,
}

impl Default for VelocityModel {
    fn default() -> Self {
        VelocityModel::with_preset(GainPreset::Unit)
    }
}

impl VelocityModel {
    /// Inverse distance law with the given gain profile.
    pub fn with_preset(preset: GainPreset) -> Self {
        let mut model = VelocityModel {
            law: DistanceLaw::INVERSE,
            current_slope: 0.66,
            current_offset: -0.05,
            reference_current: 1.43,
            class_gain: ClassGain {
                short: 1.0,
                long: 1.0,
            },
        };
        model.apply_preset(preset);
        model
    }

    pub fn with_law(mut self, law: DistanceLaw) -> Self {
        self.law = law;
        self
    }

    /// Replace the class gains by a named profile. The centre-calibrated
    /// profile is relative to the current distance law at the tip radius of
    /// the default rig.
    pub fn apply_preset(&mut self, preset: GainPreset) {
        self.class_gain = match preset {
            GainPreset::Unit => ClassGain {
                short: 1.0,
                long: 1.0,
            },
            GainPreset::CenterCalibrated => {
                let at_center = self.law.speed(crate::rig::DEFAULT_TIP_RADIUS_MM);
                ClassGain {
                    short: CENTER_SPEED_SHORT / at_center,
                    long: CENTER_SPEED_LONG / at_center,
                }
            }
        };
    }

    pub fn validate(&self) -> Result<()> {
        self.law.validate()?;
        if !(self.class_gain.short > 0.0 && self.class_gain.long > 0.0) {
            return Err(Error::Config("class gains must be positive".into()));
        }
        if !(self.reference_current > 0.0) {
            return Err(Error::Config("reference current must be positive".into()));
        }
        let at_ref = self.current_slope * self.reference_current + self.current_offset;
        if !(at_ref > 0.0) {
            return Err(Error::Config(
                "current law must be positive at the reference current".into(),
            ));
        }
        Ok(())
    }

    /// Current scale factor `c(I)`, exactly 1 at the reference current and
    /// clamped at zero where the current law goes negative.
    pub fn current_scale(&self, current: f64) -> f64 {
        let num = self.current_slope * current + self.current_offset;
        let den = self.current_slope * self.reference_current + self.current_offset;
        (num / den).max(0.0)
    }

    /// Combined multiplier `gain * c(I)` for a coil of the given class.
    pub fn drive_scale(&self, class: SolenoidClass, current: f64) -> f64 {
        self.class_gain.get(class) * self.current_scale(current)
    }
}

/// Speed a single coil imparts at distance `rho` mm, in mm/s.
pub fn actuation_speed(
    model: &VelocityModel,
    rho: f64,
    class: SolenoidClass,
    current: f64,
) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::domain(
            "distance",
            format!("rho = {rho} mm must be positive"),
        ));
    }
    if !(current >= 0.0) {
        return Err(Error::domain(
            "current",
            format!("{current} A must be non-negative"),
        ));
    }
    Ok(model.drive_scale(class, current) * model.law.speed(rho))
}

/// Per-coil velocity vectors at `position`: each points from the tip
/// projection to the particle (repulsion). Coil gains from the rig multiply
/// the class gains. A particle sitting exactly on a tip gets a zero vector.
pub(crate) fn coil_velocities(
    position: Vec2,
    cfg: &WorkspaceConfig,
    model: &VelocityModel,
    current: f64,
) -> [Vec2; SOLENOID_COUNT] {
    let c = model.current_scale(current.max(0.0));
    std::array::from_fn(|i| {
        let spec = &cfg.solenoids[i];
        let mp = position - spec.tip_projection();
        let rho = mp.norm();
        if rho == 0.0 {
            return Vec2::zeros();
        }
        let speed = spec.gain * model.class_gain.get(spec.class) * c * model.law.speed(rho);
        mp * (speed / rho)
    })
}

/// Vector sum of the velocities of all ON coils, mm/s.
pub fn superposed_velocity(
    state: &ParticleState,
    pattern: ActuationPattern,
    cfg: &WorkspaceConfig,
    model: &VelocityModel,
    current: f64,
) -> Vec2 {
    let per_coil = coil_velocities(state.position, cfg, model, current);
    pattern
        .on_indices()
        .fold(Vec2::zeros(), |acc, i| acc + per_coil[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rig::default_rig;
    use approx::assert_abs_diff_eq;

    fn at(x: f64, y: f64) -> ParticleState {
        ParticleState::at(Vec2::new(x, y))
    }

    #[test]
    fn distance_law_examples() {
        let m = VelocityModel::default();
        let s = actuation_speed(&m, 2.7, SolenoidClass::Short, 1.43).unwrap();
        assert_abs_diff_eq!(s, 1.2041, epsilon = 1e-4);
        assert!((s - 1.18).abs() <= 0.05);
        let s = actuation_speed(&m, 7.0, SolenoidClass::Short, 1.43).unwrap();
        assert_abs_diff_eq!(s, 0.4829, epsilon = 1e-4);
        assert!((s - 0.49).abs() <= 0.05);
    }

    #[test]
    fn current_scale_is_one_at_reference() {
        let m = VelocityModel::default();
        assert_eq!(m.current_scale(1.43), 1.0);
        assert_eq!(m.current_scale(0.0), 0.0);
    }

    #[test]
    fn composed_current_and_distance() {
        let m = VelocityModel::default();
        let c = (0.66 * 0.72 - 0.05) / 0.8938;
        assert_abs_diff_eq!(m.current_scale(0.72), c, epsilon = 1e-12);
        assert_abs_diff_eq!(c, 0.4757, epsilon = 1e-4);
        let s = actuation_speed(&m, 3.8, SolenoidClass::Short, 0.72).unwrap();
        assert_abs_diff_eq!(s, 0.4110, epsilon = 5e-4);
    }

    #[test]
    fn domain_errors() {
        let m = VelocityModel::default();
        assert!(actuation_speed(&m, 0.0, SolenoidClass::Short, 1.0).is_err());
        assert!(actuation_speed(&m, -1.0, SolenoidClass::Short, 1.0).is_err());
        assert!(actuation_speed(&m, 1.0, SolenoidClass::Short, -1.0).is_err());
        // Clamped below 0.1 mm.
        let near = actuation_speed(&m, 0.01, SolenoidClass::Short, 1.43).unwrap();
        let at_min = actuation_speed(&m, 0.1, SolenoidClass::Short, 1.43).unwrap();
        assert_eq!(near, at_min);
    }

    #[test]
    fn laws_decrease_over_measured_range() {
        for law in [
            DistanceLaw::INVERSE,
            DistanceLaw::LINEAR,
            DistanceLaw::INVERSE_SQUARE,
        ] {
            let mut last = f64::INFINITY;
            for k in 0..=430 {
                let v = law.speed(2.7 + 0.01 * k as f64);
                assert!(v < last, "{law:?} not decreasing");
                last = v;
            }
        }
    }

    #[test]
    fn center_calibrated_gains() {
        let m = VelocityModel::with_preset(GainPreset::CenterCalibrated);
        assert_abs_diff_eq!(m.class_gain.short, 0.767, epsilon = 5e-4);
        assert_abs_diff_eq!(m.class_gain.long, 0.552, epsilon = 1e-3);
        let cfg = default_rig();
        let v = superposed_velocity(&at(0.0, 0.0), ActuationPattern::single(0), &cfg, &m, 1.43);
        assert_abs_diff_eq!(v.norm(), 0.4998, epsilon = 2e-4);
        // Pushed away from the tip at (5.1, 0).
        assert!(v.x < 0.0 && v.y.abs() < 1e-12);
    }

    #[test]
    fn adjacent_pair_is_a_vector_sum() {
        let m = VelocityModel::with_preset(GainPreset::CenterCalibrated);
        let cfg = default_rig();
        let v = superposed_velocity(
            &at(0.0, 0.0),
            ActuationPattern::from_indices([0, 1]),
            &cfg,
            &m,
            1.43,
        );
        let base = DistanceLaw::INVERSE.speed(5.1);
        let a = m.class_gain.short * base;
        let b = m.class_gain.long * base;
        let expected = (a * a + b * b + 2.0 * a * b * std::f64::consts::FRAC_PI_4.cos()).sqrt();
        assert_abs_diff_eq!(v.norm(), expected, epsilon = 1e-12);
        assert!((v.norm() - 0.82).abs() / 0.82 < 0.15);
    }

    #[test]
    fn all_off_is_zero() {
        let cfg = default_rig();
        let m = VelocityModel::default();
        let v = superposed_velocity(&at(1.0, -0.5), ActuationPattern::OFF, &cfg, &m, 1.43);
        assert_eq!(v, Vec2::zeros());
    }

    #[test]
    fn preset_parsing() {
        assert_eq!("unit".parse::<GainPreset>().unwrap(), GainPreset::Unit);
        assert_eq!(
            "fig2d".parse::<GainPreset>().unwrap(),
            GainPreset::CenterCalibrated
        );
        assert!("other".parse::<GainPreset>().is_err());
        assert_eq!(
            serde_json::to_string(&GainPreset::CenterCalibrated).unwrap(),
            "\"fig2d\""
        );
    }
}
