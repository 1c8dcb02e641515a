//! Closed-loop trials and open-loop characterisation runs.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::log::{LogMeta, LogRow, TrajectoryLog};
use super::metrics::{point_polyline_distance, summarize};
use super::path::ReferencePath;
use crate::controller::{
    solve_pattern, ActuationPattern, ControllerWeights, PathFollower, ServoScene,
};
use crate::error::{Error, Result};
use crate::plant::{ParticleState, Plant, PlantParams};
use crate::rig::{default_rig, WorkspaceConfig};
use crate::velocity::{DistanceLaw, GainPreset, VelocityModel};
use crate::vision::{locate_particle, render_frame, CameraModel};
use crate::Vec2;

// Independent random streams derived from one seed.
const PLANT_STREAM: u64 = 0;
const VISION_STREAM: u64 = 1;
const PLACEMENT_STREAM: u64 = 2;

/// Where the controller's position measurement comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementMode {
    /// True plant position.
    #[default]
    Oracle,
    /// Rendered frame run through threshold and blob detection.
    Vision,
}

impl MeasurementMode {
    pub fn name(self) -> &'static str {
        match self {
            MeasurementMode::Oracle => "oracle",
            MeasurementMode::Vision => "vision",
        }
    }
}

impl FromStr for MeasurementMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(MeasurementMode::Oracle),
            "vision" => Ok(MeasurementMode::Vision),
            other => Err(Error::Config(format!("unknown measurement mode `{other}`"))),
        }
    }
}

/// Everything that defines a trial apart from the path and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub cfg: WorkspaceConfig,
    pub law: DistanceLaw,
    pub preset: GainPreset,
    pub plant: PlantParams,
    pub weights: ControllerWeights,
    /// Coil current, A.
    pub current: f64,
    pub mode: MeasurementMode,
    pub camera: CameraModel,
    /// Simulated-time limit for path trials, s.
    pub timeout_s: f64,
    /// Radius of the uniform disk the start position is drawn from, mm.
    pub placement_error: f64,
}

impl Default for TrialSpec {
    fn default() -> Self {
        let cfg = default_rig();
        TrialSpec {
            current: cfg.current_ref,
            cfg,
            law: DistanceLaw::INVERSE,
            preset: GainPreset::CenterCalibrated,
            plant: PlantParams::default(),
            weights: ControllerWeights::default(),
            mode: MeasurementMode::Oracle,
            camera: CameraModel::default(),
            timeout_s: 120.0,
            placement_error: 0.0,
        }
    }
}

impl TrialSpec {
    pub fn model(&self) -> VelocityModel {
        let mut model = VelocityModel::default().with_law(self.law);
        model.apply_preset(self.preset);
        model
    }

    /// Drift and lag switched off.
    pub fn noise_free(mut self) -> Self {
        self.plant.drift_rms = 0.0;
        self.plant.lag_tau = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        self.plant.validate()?;
        self.weights.validate()?;
        self.camera.validate()?;
        if !(self.current >= 0.0 && self.current.is_finite()) {
            return Err(Error::Config(format!(
                "current {} A must be non-negative",
                self.current
            )));
        }
        if !(self.timeout_s > 0.0) || !(self.placement_error >= 0.0) {
            return Err(Error::Config(
                "timeout must be positive and placement error non-negative".into(),
            ));
        }
        Ok(())
    }

    fn meta(&self, label: &str, seed: u64) -> LogMeta {
        LogMeta {
            label: label.into(),
            seed,
            weights: self.weights,
            preset: self.preset.name().into(),
            current: self.current,
            mode: self.mode.name().into(),
            complete: true,
        }
    }

    /// Start point perturbed uniformly within `placement_error`.
    fn placed(&self, nominal: Vec2, seed: u64) -> Vec2 {
        if self.placement_error == 0.0 {
            return nominal;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(PLACEMENT_STREAM);
        let r = self.placement_error * rng.random::<f64>().sqrt();
        let a = std::f64::consts::TAU * rng.random::<f64>();
        nominal + Vec2::new(r * a.cos(), r * a.sin())
    }
}

/// What the controller is chasing this tick.
#[derive(Debug, Clone)]
pub enum Steering {
    Idle,
    Point(Vec2),
    Path(PathFollower),
}

impl Steering {
    pub fn path(path: &ReferencePath, lookahead: f64) -> Result<Self> {
        Ok(Steering::Path(PathFollower::new(
            path.samples.clone(),
            lookahead,
        )?))
    }
}

/// Plant, measurement and controller advanced one tick at a time. Both the
/// batch harness and the live session drive this same loop.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    plant: Plant,
    state: ParticleState,
    weights: ControllerWeights,
    current: f64,
    mode: MeasurementMode,
    camera: CameraModel,
    vision_rng: ChaCha8Rng,
    measured: Vec2,
    tick: u64,
}

impl ClosedLoop {
    pub fn new(spec: &TrialSpec, seed: u64, start: Vec2) -> Result<Self> {
        spec.validate()?;
        if !spec.cfg.contains(start) {
            return Err(Error::domain(
                "start",
                format!("({}, {}) is outside the workspace", start.x, start.y),
            ));
        }
        let mut params = spec.plant;
        params.seed = seed;
        let plant = Plant::new(spec.cfg.clone(), spec.model(), params)?;
        let mut vision_rng = ChaCha8Rng::seed_from_u64(seed);
        vision_rng.set_stream(VISION_STREAM);
        debug_assert_eq!(ChaCha8Rng::seed_from_u64(seed).get_stream(), PLANT_STREAM);
        Ok(ClosedLoop {
            plant,
            state: ParticleState::at(start),
            weights: spec.weights,
            current: spec.current,
            mode: spec.mode,
            camera: spec.camera,
            vision_rng,
            measured: start,
            tick: 0,
        })
    }

    pub fn state(&self) -> &ParticleState {
        &self.state
    }

    /// Last position the controller saw.
    pub fn measured(&self) -> Vec2 {
        self.measured
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 / self.plant.config().tick_rate
    }

    pub fn weights(&self) -> &ControllerWeights {
        &self.weights
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    pub fn config(&self) -> &WorkspaceConfig {
        self.plant.config()
    }

    pub fn set_weights(&mut self, w: ControllerWeights) -> Result<()> {
        w.validate()?;
        self.weights = w;
        Ok(())
    }

    pub fn set_current(&mut self, current: f64) {
        self.current = current;
    }

    pub fn set_model(&mut self, model: VelocityModel) -> Result<()> {
        self.plant.set_model(model)
    }

    /// Put the particle back at rest at `p`; the random streams carry on.
    pub fn place(&mut self, p: Vec2) {
        self.state = ParticleState::at(p);
        self.measured = p;
    }

    fn measure(&mut self) -> Vec2 {
        if self.mode == MeasurementMode::Vision {
            let frame = render_frame(&self.state, &self.camera, &mut self.vision_rng);
            // A missed detection keeps the previous estimate.
            if let Some(p) = locate_particle(&frame, &self.camera) {
                self.measured = p;
            }
        } else {
            self.measured = self.state.position;
        }
        self.measured
    }

    /// Measure, pick the target, solve the pattern, record, then advance the
    /// plant by one tick. With `actuate` false the coils stay off, drift
    /// still acts and the path index is frozen.
    pub fn tick(&mut self, steering: &mut Steering, actuate: bool) -> LogRow {
        let measured = self.measure();
        let target = match steering {
            Steering::Idle => None,
            Steering::Point(t) => Some(*t),
            Steering::Path(f) if actuate => Some(f.advance(measured)),
            Steering::Path(f) => Some(f.carrot()),
        };
        let pattern = match target {
            Some(t) if actuate => {
                let cfg = self.plant.config();
                match ServoScene::new(measured, t, cfg, self.plant.model(), self.current) {
                    Ok(scene) => solve_pattern(&scene, &self.weights),
                    Err(_) => ActuationPattern::OFF,
                }
            }
            _ => ActuationPattern::OFF,
        };
        let position = self.state.position;
        let err = match steering {
            Steering::Idle => None,
            Steering::Point(t) => Some((position - *t).norm()),
            Steering::Path(f) => Some(point_polyline_distance(position, f.samples())),
        };
        let commanded_speed = self
            .plant
            .commanded_velocity(position, pattern, self.current)
            .norm();
        let row = LogRow {
            tick: self.tick,
            t: self.time(),
            position,
            target,
            pattern,
            commanded_speed,
            err,
        };
        let dt = self.plant.config().tick_dt();
        self.state = self.plant.step(&self.state, pattern, self.current, dt);
        self.tick += 1;
        row
    }

    /// True when the follower's carrot has reached the last sample and the
    /// measured particle sits within the deadband of it.
    pub fn path_finished(&self, follower: &PathFollower) -> bool {
        follower.at_end()
            && (self.measured - follower.final_sample()).norm() <= self.weights.deadband
    }
}

/// Follow `path` from its start until the end is reached or the timeout
/// elapses. A timed-out log has `meta.complete == false`.
pub fn run_path_trial(path: &ReferencePath, spec: &TrialSpec, seed: u64) -> Result<TrajectoryLog> {
    let start = spec.placed(path.start(), seed);
    let mut cl = ClosedLoop::new(spec, seed, start)?;
    let mut steering = Steering::path(path, spec.weights.lookahead)?;
    let mut log = TrajectoryLog::new(spec.meta(&path.name, seed));
    let max_ticks = (spec.timeout_s * spec.cfg.tick_rate).ceil() as u64;
    loop {
        log.rows.push(cl.tick(&mut steering, true));
        let Steering::Path(f) = &steering else {
            unreachable!()
        };
        if cl.path_finished(f) {
            break;
        }
        if cl.tick_count() >= max_ticks {
            log.meta.complete = false;
            break;
        }
    }
    Ok(log)
}

/// Servo to `point` and hold it for `duration` seconds.
pub fn run_hold_trial(
    point: Vec2,
    duration: f64,
    spec: &TrialSpec,
    seed: u64,
) -> Result<TrajectoryLog> {
    if !spec.cfg.contains(point) {
        return Err(Error::domain(
            "hold point",
            format!("({}, {}) is outside the workspace", point.x, point.y),
        ));
    }
    if !(duration > 0.0) {
        return Err(Error::domain(
            "duration",
            format!("{duration} s must be positive"),
        ));
    }
    let mut cl = ClosedLoop::new(spec, seed, spec.placed(point, seed))?;
    let mut steering = Steering::Point(point);
    let mut log = TrajectoryLog::new(spec.meta("hold", seed));
    let ticks = (duration * spec.cfg.tick_rate).round() as u64;
    for _ in 0..ticks {
        log.rows.push(cl.tick(&mut steering, true));
    }
    Ok(log)
}

/// Run `reps` seeded repetitions (`seed`, `seed + 1`, ...) in parallel,
/// returned in seed order.
pub fn run_batch<F>(reps: usize, seed: u64, run: F) -> Result<Vec<TrajectoryLog>>
where
    F: Fn(u64) -> Result<TrajectoryLog> + Sync,
{
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(reps.max(1));
    let mut slots: Vec<Option<Result<TrajectoryLog>>> = (0..reps).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (w, chunk) in slots.chunks_mut(reps.div_ceil(workers).max(1)).enumerate() {
            let run = &run;
            let first = w * reps.div_ceil(workers).max(1);
            scope.spawn(move || {
                for (i, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(run(seed + (first + i) as u64));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every slot is filled"))
        .collect()
}

/// First-second mean speeds at one distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub distance_mm: f64,
    pub mean_speed: f64,
    pub std_speed: f64,
    pub speeds: Vec<f64>,
}

/// Switch on coil `coil` alone with the particle at rest on the line to the
/// workspace centre, `distance` mm from its tip, and report the mean speed
/// over the first second. Repetition `r` uses seed `plant.seed + r`.
pub fn open_loop_sweep(
    cfg: &WorkspaceConfig,
    model: &VelocityModel,
    plant: &PlantParams,
    coil: usize,
    distances: &[f64],
    current: f64,
    reps: usize,
) -> Result<Vec<SweepPoint>> {
    let spec = cfg
        .solenoids
        .get(coil)
        .ok_or_else(|| Error::domain("coil", format!("no coil {coil}")))?;
    let tip = spec.tip_projection();
    let inward = -tip / tip.norm();
    let dt = cfg.tick_dt();
    let ticks = (1.0 / dt).round() as usize;
    let window = ticks as f64 * dt;
    let pattern = ActuationPattern::single(coil);
    let mut out = Vec::with_capacity(distances.len());
    for &d in distances {
        let start = tip + inward * d;
        if !(d > 0.0) || !cfg.contains(start) {
            return Err(Error::domain(
                "distance",
                format!("{d} mm from coil {coil} is outside the workspace"),
            ));
        }
        let mut speeds = Vec::with_capacity(reps);
        for r in 0..reps {
            let mut p = Plant::new(cfg.clone(), *model, plant.with_seed(plant.seed + r as u64))?;
            let mut s = ParticleState::at(start);
            for _ in 0..ticks {
                s = p.step(&s, pattern, current, dt);
            }
            speeds.push((s.position - start).norm() / window);
        }
        let (mean, std, _) = summarize(&speeds);
        out.push(SweepPoint {
            distance_mm: d,
            mean_speed: mean,
            std_speed: std,
            speeds,
        });
    }
    Ok(out)
}
