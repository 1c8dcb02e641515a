//! Rig geometry: the ring of eight inclined solenoids around the workspace,
//! the supply calibration, and the on-axis field falloff used by the energy
//! model.

use std::f64::consts::FRAC_PI_4;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Vec2, SOLENOID_COUNT};

/// Tip-to-centre distance shared by all solenoids of the default rig, mm.
pub const DEFAULT_TIP_RADIUS_MM: f64 = 5.1;
/// Radius of the reachable workspace disk, mm.
pub const DEFAULT_WORKSPACE_RADIUS_MM: f64 = 4.0;
pub const DEFAULT_TICK_RATE_HZ: f64 = 30.0;
/// Operating current the velocity fits were recorded at, A.
pub const DEFAULT_CURRENT_REF_A: f64 = 1.43;
/// Height of the tips above the fluid surface, mm (mid-point of 0.5..1 mm).
pub const DEFAULT_TIP_HEIGHT_MM: f64 = 0.75;

/// Neck length class of a solenoid. Classes alternate around the ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolenoidClass {
    Short,
    Long,
}

impl SolenoidClass {
    pub fn swapped(self) -> Self {
        match self {
            SolenoidClass::Short => SolenoidClass::Long,
            SolenoidClass::Long => SolenoidClass::Short,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolenoidSpec {
    pub index: usize,
    /// Azimuth of the tip in the workspace plane, radians.
    pub angle: f64,
    /// Projected distance from the workspace centre to the tip axis, mm.
    pub tip_radius: f64,
    pub class: SolenoidClass,
    /// Multiplier on the actuation speed of this particular coil.
    pub gain: f64,
    /// Inclination of the coil axis from horizontal, radians. Metadata only.
    pub inclination: f64,
}

impl SolenoidSpec {
    pub fn tip_projection(&self) -> Vec2 {
        tip_projection(self)
    }
}

/// Projection of a solenoid tip onto the fluid plane, mm.
pub fn tip_projection(spec: &SolenoidSpec) -> Vec2 {
    Vec2::new(
        spec.tip_radius * spec.angle.cos(),
        spec.tip_radius * spec.angle.sin(),
    )
}

/// Linear supply calibration `current = slope * volts + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupplyMap {
    pub slope_a_per_v: f64,
    pub offset_a: f64,
    pub max_volts: f64,
}

impl SupplyMap {
    /// Line through two measured (volts, amps) calibration points.
    pub fn through(p0: (f64, f64), p1: (f64, f64), max_volts: f64) -> Self {
        let slope = (p1.1 - p0.1) / (p1.0 - p0.0);
        SupplyMap {
            slope_a_per_v: slope,
            offset_a: p0.1 - slope * p0.0,
            max_volts,
        }
    }

    pub fn current(&self, volts: f64) -> f64 {
        self.slope_a_per_v * volts + self.offset_a
    }

    /// Inverse of [`SupplyMap::current`].
    pub fn volts(&self, amps: f64) -> f64 {
        (amps - self.offset_a) / self.slope_a_per_v
    }
}

impl Default for SupplyMap {
    /// 2 V -> 0.47 A and 6 V -> 1.40 A on the bench supply.
    fn default() -> Self {
        SupplyMap::through((2.0, 0.47), (6.0, 1.40), 6.0)
    }
}

/// Power-law falloff of the on-axis field, `B(d) = b0 * (d0 / d)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldFalloff {
    /// Field at the reference distance, mT.
    pub b0_mt: f64,
    /// Reference distance, mm.
    pub d0_mm: f64,
    pub exponent: f64,
}

impl Default for FieldFalloff {
    fn default() -> Self {
        FieldFalloff {
            b0_mt: 100.0,
            d0_mm: 1.0,
            exponent: 3.0,
        }
    }
}

impl FieldFalloff {
    pub fn validate(&self) -> Result<()> {
        if !(self.b0_mt > 0.0 && self.d0_mm > 0.0 && self.exponent > 0.0) {
            return Err(Error::Config(format!(
                "field falloff parameters must be positive, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Field magnitude at distance `d_mm` from the tip, mT.
    pub fn field_mt(&self, d_mm: f64) -> f64 {
        self.b0_mt * (self.d0_mm / d_mm).powf(self.exponent)
    }

    /// Field as a function of squared distance, mT. Even in the in-plane
    /// offset, which keeps the energy landscape smooth across the axis.
    pub fn field_mt_sq(&self, d_sq_mm2: f64) -> f64 {
        self.b0_mt * (self.d0_mm * self.d0_mm / d_sq_mm2).powf(0.5 * self.exponent)
    }
}

/// Complete rig description shared by plant, controller and harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceConfig {
    pub solenoids: [SolenoidSpec; SOLENOID_COUNT],
    pub workspace_radius: f64,
    pub tick_rate: f64,
    /// Default operating current, A.
    pub current_ref: f64,
    pub supply_map: SupplyMap,
    /// Tip height above the fluid, mm. Not used by the planar kinematics.
    pub tip_height: f64,
    pub falloff: FieldFalloff,
}

/// Eight solenoids at 45 degree steps, alternating short/long, tips 5.1 mm
/// from the centre, a 4 mm workspace radius and a 30 Hz control tick.
pub fn default_rig() -> WorkspaceConfig {
    let solenoids = std::array::from_fn(|i| SolenoidSpec {
        index: i,
        angle: i as f64 * FRAC_PI_4,
        tip_radius: DEFAULT_TIP_RADIUS_MM,
        class: if i % 2 == 0 {
            SolenoidClass::Short
        } else {
            SolenoidClass::Long
        },
        gain: 1.0,
        inclination: FRAC_PI_4,
    });
    WorkspaceConfig {
        solenoids,
        workspace_radius: DEFAULT_WORKSPACE_RADIUS_MM,
        tick_rate: DEFAULT_TICK_RATE_HZ,
        current_ref: DEFAULT_CURRENT_REF_A,
        supply_map: SupplyMap::default(),
        tip_height: DEFAULT_TIP_HEIGHT_MM,
        falloff: FieldFalloff::default(),
    }
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        default_rig()
    }
}

impl WorkspaceConfig {
    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.solenoids.iter().enumerate() {
            if s.index != i {
                return Err(Error::Config(format!(
                    "solenoid at slot {i} carries index {}",
                    s.index
                )));
            }
            if !(s.gain > 0.0) || !(s.tip_radius > 0.0) {
                return Err(Error::Config(format!(
                    "solenoid {i}: gain and tip radius must be positive"
                )));
            }
        }
        if !(self.tick_rate > 0.0) {
            return Err(Error::Config("tick rate must be positive".into()));
        }
        if !(self.workspace_radius > 0.0) || self.workspace_radius > self.min_tip_radius() {
            return Err(Error::Config(format!(
                "workspace radius {} must be positive and inside the tip circle ({})",
                self.workspace_radius,
                self.min_tip_radius()
            )));
        }
        if !(self.current_ref >= 0.0) {
            return Err(Error::Config(
                "reference current must be non-negative".into(),
            ));
        }
        self.falloff.validate()
    }

    pub fn min_tip_radius(&self) -> f64 {
        self.solenoids
            .iter()
            .map(|s| s.tip_radius)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn tick_dt(&self) -> f64 {
        1.0 / self.tick_rate
    }

    pub fn tips(&self) -> [Vec2; SOLENOID_COUNT] {
        std::array::from_fn(|i| tip_projection(&self.solenoids[i]))
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.norm() <= self.workspace_radius
    }

    /// Supply current for a bench voltage.
    pub fn voltage_to_current(&self, volts: f64) -> Result<f64> {
        voltage_to_current(self, volts)
    }

    /// Parse a JSON override document and apply it on top of the default rig.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let overrides: RigOverrides = serde_json::from_str(s)?;
        overrides.apply(default_rig())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }
}

pub fn voltage_to_current(cfg: &WorkspaceConfig, volts: f64) -> Result<f64> {
    if !(0.0..=cfg.supply_map.max_volts).contains(&volts) {
        return Err(Error::domain(
            "supply voltage",
            format!("{volts} V not in [0, {}] V", cfg.supply_map.max_volts),
        ));
    }
    Ok(cfg.supply_map.current(volts))
}

/// One entry of the `solenoids` array in a rig override file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolenoidOverride {
    pub angle_deg: Option<f64>,
    pub tip_radius_mm: Option<f64>,
    pub class: Option<SolenoidClass>,
    pub gain: Option<f64>,
}

/// JSON rig overrides. Every field is optional; absent fields keep the
/// default rig value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigOverrides {
    pub solenoids: Option<Vec<SolenoidOverride>>,
    pub workspace_radius_mm: Option<f64>,
    pub tick_rate_hz: Option<f64>,
    pub current_ref_a: Option<f64>,
}

impl RigOverrides {
    pub fn apply(&self, mut cfg: WorkspaceConfig) -> Result<WorkspaceConfig> {
        if let Some(list) = &self.solenoids {
            if list.len() != SOLENOID_COUNT {
                return Err(Error::Config(format!(
                    "expected {SOLENOID_COUNT} solenoid entries, got {}",
                    list.len()
                )));
            }
            for (spec, o) in cfg.solenoids.iter_mut().zip(list) {
                if let Some(a) = o.angle_deg {
                    spec.angle = a.to_radians();
                }
                if let Some(r) = o.tip_radius_mm {
                    spec.tip_radius = r;
                }
                if let Some(c) = o.class {
                    spec.class = c;
                }
                if let Some(g) = o.gain {
                    spec.gain = g;
                }
            }
        }
        if let Some(r) = self.workspace_radius_mm {
            cfg.workspace_radius = r;
        }
        if let Some(r) = self.tick_rate_hz {
            cfg.tick_rate = r;
        }
        if let Some(i) = self.current_ref_a {
            cfg.current_ref = i;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
