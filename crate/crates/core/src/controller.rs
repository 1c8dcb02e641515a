//! Visual-servoing pattern selection.
//!
//! Every tick the controller predicts the velocity each coil would impart
//! at the measured particle position, projects it onto the particle-to-target
//! direction and its normal, and selects the ON/OFF pattern maximising
//!
//! ```text
//! J(S) = sum_i [ alpha * v_par_i - beta * |v_perp_i| - gamma / |PT|^2 ] * S_i
//! ```
//!
//! over all 2^8 binary patterns. `J` is linear and separable in the `S_i`, so
//! the maximiser switches a coil on exactly when its coefficient is positive.
//! [`enumerate_oracle`] checks that claim by brute force.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rig::WorkspaceConfig;
use crate::velocity::{coil_velocities, VelocityModel};
use crate::{Vec2, SOLENOID_COUNT};

/// ON/OFF state of the eight coils; bit `i` is coil `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActuationPattern(u8);

impl ActuationPattern {
    pub const OFF: ActuationPattern = ActuationPattern(0);
    pub const ALL: ActuationPattern = ActuationPattern(0xff);

    pub fn from_bits(bits: u8) -> Self {
        ActuationPattern(bits)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn single(i: usize) -> Self {
        assert!(i < SOLENOID_COUNT);
        ActuationPattern(1 << i)
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        indices
            .into_iter()
            .fold(Self::OFF, |p, i| p.union(Self::single(i)))
    }

    pub fn from_flags(flags: [bool; SOLENOID_COUNT]) -> Self {
        Self::from_indices((0..SOLENOID_COUNT).filter(|&i| flags[i]))
    }

    pub fn flags(self) -> [bool; SOLENOID_COUNT] {
        std::array::from_fn(|i| self.is_on(i))
    }

    pub fn is_on(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn count_on(self) -> u32 {
        self.0.count_ones()
    }

    pub fn union(self, other: Self) -> Self {
        ActuationPattern(self.0 | other.0)
    }

    pub fn on_indices(self) -> impl Iterator<Item = usize> {
        (0..SOLENOID_COUNT).filter(move |&i| self.is_on(i))
    }

    /// Relabel coil `i` as coil `i + k` (mod 8).
    pub fn rotated(self, k: usize) -> Self {
        ActuationPattern(self.0.rotate_left((k % SOLENOID_COUNT) as u32))
    }
}

/// Objective weights and the two path-following distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerWeights {
    pub alpha: f64,
    pub beta: f64,
    /// Multiplies `1 / |PT|^2` with `|PT|` in mm, so carries units of mm^2.
    pub gamma: f64,
    /// Radius around the target inside which all coils are switched off, mm.
    pub deadband: f64,
    /// Carrot distance along the reference path, mm.
    pub lookahead: f64,
}

impl Default for ControllerWeights {
    fn default() -> Self {
        ControllerWeights {
            alpha: 0.4145,
            beta: 0.2685,
            gamma: 0.0001,
            deadband: 0.05,
            // Two 0.05 mm samples on every preset path. A multiple of the
            // spacing would give paths with slightly longer spacing one
            // sample less than the others.
            lookahead: 0.12,
        }
    }
}

impl ControllerWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.gamma >= 0.0) {
            return Err(Error::Config(
                "alpha, beta and gamma must be non-negative".into(),
            ));
        }
        if !(self.deadband > 0.0 && self.lookahead > 0.0) {
            return Err(Error::Config(
                "deadband and lookahead must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Inputs of one control decision.
#[derive(Debug, Clone, PartialEq)]
pub struct ServoScene {
    pub particle: Vec2,
    pub target: Vec2,
    pub expected: [Vec2; SOLENOID_COUNT],
}

impl ServoScene {
    pub fn new(
        particle: Vec2,
        target: Vec2,
        cfg: &WorkspaceConfig,
        model: &VelocityModel,
        current: f64,
    ) -> Result<Self> {
        Ok(ServoScene {
            particle,
            target,
            expected: expected_velocities(particle, cfg, model, current)?,
        })
    }
}

/// Velocity each coil is expected to impart on a particle at `p`.
pub fn expected_velocities(
    p: Vec2,
    cfg: &WorkspaceConfig,
    model: &VelocityModel,
    current: f64,
) -> Result<[Vec2; SOLENOID_COUNT]> {
    if let Some(i) = cfg.tips().iter().position(|tip| (p - tip).norm() == 0.0) {
        return Err(Error::domain(
            "particle position",
            format!("({}, {}) coincides with the tip of coil {i}", p.x, p.y),
        ));
    }
    Ok(coil_velocities(p, cfg, model, current))
}

/// Components of `vm` along `PT` and along `PT` rotated by +90 degrees.
pub fn project(vm: Vec2, p: Vec2, t: Vec2) -> Result<(f64, f64)> {
    let pt = t - p;
    let len = pt.norm();
    if !(len > 0.0) {
        return Err(Error::domain("target", "particle and target coincide"));
    }
    let along = pt / len;
    let normal = Vec2::new(-along.y, along.x);
    Ok((vm.dot(&along), vm.dot(&normal)))
}

/// Per-coil objective coefficients `alpha*v_par - beta*|v_perp| - gamma/|PT|^2`.
pub fn coefficients(scene: &ServoScene, w: &ControllerWeights) -> Result<[f64; SOLENOID_COUNT]> {
    let dist_sq = (scene.target - scene.particle).norm_squared();
    let proximity = w.gamma / dist_sq;
    let mut out = [0.0; SOLENOID_COUNT];
    for (c, vm) in out.iter_mut().zip(&scene.expected) {
        let (par, perp) = project(*vm, scene.particle, scene.target)?;
        *c = w.alpha * par - w.beta * perp.abs() - proximity;
    }
    Ok(out)
}

/// Optimal pattern: a coil is ON iff its coefficient is strictly positive.
/// Inside the deadband every coil is OFF.
pub fn solve_pattern(scene: &ServoScene, w: &ControllerWeights) -> ActuationPattern {
    if (scene.target - scene.particle).norm() <= w.deadband {
        return ActuationPattern::OFF;
    }
    match coefficients(scene, w) {
        Ok(c) => ActuationPattern::from_indices((0..SOLENOID_COUNT).filter(|&i| c[i] > 0.0)),
        Err(_) => ActuationPattern::OFF,
    }
}

/// Exhaustive maximiser of the objective over all 256 patterns. Ties go to
/// fewer ON coils, then to the lower integer encoding.
pub fn enumerate_oracle(scene: &ServoScene, w: &ControllerWeights) -> ActuationPattern {
    let pt = scene.target - scene.particle;
    let dist_sq = pt.x * pt.x + pt.y * pt.y;
    if dist_sq.sqrt() <= w.deadband {
        return ActuationPattern::OFF;
    }
    let dist = dist_sq.sqrt();
    let (ux, uy) = (pt.x / dist, pt.y / dist);
    let objective = |bits: u8| -> f64 {
        let mut j = 0.0;
        for i in 0..SOLENOID_COUNT {
            if bits >> i & 1 == 0 {
                continue;
            }
            let v = scene.expected[i];
            let par = v.x * ux + v.y * uy;
            let perp = -v.x * uy + v.y * ux;
            j += w.alpha * par;
            j -= w.beta * perp.abs();
            j -= w.gamma / dist_sq;
        }
        j
    };
    let mut best = 0u8;
    let mut best_j = objective(0);
    for bits in 1..=255u8 {
        let j = objective(bits);
        let better = j > best_j || (j == best_j && bits.count_ones() < best.count_ones());
        if better {
            best = bits;
            best_j = j;
        }
    }
    ActuationPattern::from_bits(best)
}

/// Value of the objective for an arbitrary pattern.
pub fn objective(
    scene: &ServoScene,
    w: &ControllerWeights,
    pattern: ActuationPattern,
) -> Result<f64> {
    let c = coefficients(scene, w)?;
    Ok(pattern.on_indices().map(|i| c[i]).sum())
}

/// Carrot-point tracker over a densely sampled reference path.
///
/// Keeps a monotone index of the nearest passed sample and returns the
/// farthest sample within `lookahead` arc length of it.
#[derive(Debug, Clone)]
pub struct PathFollower {
    samples: Vec<Vec2>,
    /// Cumulative arc length at each sample.
    arc: Vec<f64>,
    index: usize,
    lookahead: f64,
}

const ARC_EPS: f64 = 1e-9;

impl PathFollower {
    pub fn new(samples: Vec<Vec2>, lookahead: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("path", "no samples"));
        }
        let mut arc = Vec::with_capacity(samples.len());
        let mut s = 0.0;
        arc.push(0.0);
        for w in samples.windows(2) {
            s += (w[1] - w[0]).norm();
            arc.push(s);
        }
        Ok(PathFollower {
            samples,
            arc,
            index: 0,
            lookahead,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn samples(&self) -> &[Vec2] {
        &self.samples
    }

    pub fn final_sample(&self) -> Vec2 {
        *self.samples.last().unwrap()
    }

    pub fn set_lookahead(&mut self, lookahead: f64) {
        self.lookahead = lookahead;
    }

    fn carrot_index(&self) -> usize {
        let limit = self.arc[self.index] + self.lookahead + ARC_EPS;
        // arc is non-decreasing, so the carrot is the last sample under the limit.
        self.arc.partition_point(|&s| s <= limit) - 1
    }

    /// Current carrot point without updating the index.
    pub fn carrot(&self) -> Vec2 {
        self.samples[self.carrot_index()]
    }

    /// True once the carrot sits on the final sample.
    pub fn at_end(&self) -> bool {
        self.carrot_index() + 1 == self.samples.len()
    }

    /// Update the nearest-sample index from the measured position and return
    /// the current carrot point.
    pub fn advance(&mut self, p: Vec2) -> Vec2 {
        // Search only a bounded arc window ahead so closed paths cannot jump
        // from start to end.
        let limit = self.arc[self.index] + 2.0 * self.lookahead + ARC_EPS;
        let end = self.arc.partition_point(|&s| s <= limit);
        let mut best = self.index;
        let mut best_d = (self.samples[best] - p).norm_squared();
        for j in self.index + 1..end {
            let d = (self.samples[j] - p).norm_squared();
            if d < best_d {
                best = j;
                best_d = d;
            }
        }
        self.index = best;
        self.samples[self.carrot_index()]
    }
}
