//! A live closed-loop session steered by queued commands.
//!
//! Commands are validated when submitted and applied only at the start of
//! the next tick, so every state change lands on a tick boundary. The loop
//! itself is the same [`ClosedLoop`] the batch harness uses.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::controller::ControllerWeights;
use crate::error::{Error, Result};
use crate::harness::{
    ClosedLoop, LogMeta, MeasurementMode, ReferencePath, Steering, TrajectoryLog, TrialSpec,
};
use crate::plant::PlantParams;
use crate::rig::RigOverrides;
use crate::velocity::{DistanceLaw, GainPreset};
use crate::Vec2;

/// Highest coil current a client may request, A.
pub const MAX_CURRENT_A: f64 = 1.66;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Idle,
    ServoToPoint,
    FollowPath,
    Hold,
}

/// Creation-time overrides. Every field is optional; an empty object gives
/// the default rig with the particle at the centre.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub rig: Option<RigOverrides>,
    pub seed: Option<u64>,
    pub start: Option<[f64; 2]>,
    pub current_a: Option<f64>,
    pub preset: Option<GainPreset>,
    pub law: Option<DistanceLaw>,
    pub weights: Option<ControllerWeights>,
    pub plant: Option<PlantParams>,
    pub mode: Option<MeasurementMode>,
}

impl SessionConfig {
    pub fn spec(&self) -> Result<TrialSpec> {
        let mut spec = TrialSpec::default();
        if let Some(rig) = &self.rig {
            spec.cfg = rig.apply(spec.cfg)?;
            spec.current = spec.cfg.current_ref;
        }
        if let Some(i) = self.current_a {
            check_current(i)?;
            spec.current = i;
        }
        if let Some(p) = self.preset {
            spec.preset = p;
        }
        if let Some(l) = self.law {
            spec.law = l;
        }
        if let Some(w) = self.weights {
            spec.weights = w;
        }
        if let Some(p) = self.plant {
            spec.plant = p;
        }
        if let Some(m) = self.mode {
            spec.mode = m;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn check_current(i: f64) -> Result<()> {
    if (0.0..=MAX_CURRENT_A).contains(&i) {
        Ok(())
    } else {
        Err(Error::domain(
            "current",
            format!("{i} A outside [0, {MAX_CURRENT_A}] A"),
        ))
    }
}

/// Parameter changes applied between ticks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamUpdate {
    pub current_a: Option<f64>,
    pub weights: Option<ControllerWeights>,
    pub preset: Option<GainPreset>,
}

#[derive(Debug, Clone)]
pub enum Command {
    Target(Vec2),
    Path(ReferencePath),
    Params(ParamUpdate),
    Pause,
    Resume,
    /// Re-place the particle at rest, at the given point or the start point.
    Reset(Option<Vec2>),
}

/// Snapshot published after every tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEvent {
    pub tick: u64,
    pub t_s: f64,
    /// Particle position, mm.
    pub pos: [f64; 2],
    pub target: Option<[f64; 2]>,
    pub pattern: u8,
    pub mode: Mode,
    pub err_mm: Option<f64>,
    pub paused: bool,
    /// Nearest passed path sample while following a path.
    pub waypoint: Option<usize>,
    pub current_a: f64,
}

#[derive(Debug, Clone)]
pub struct Session {
    spec: TrialSpec,
    start: Vec2,
    looped: ClosedLoop,
    steering: Steering,
    mode: Mode,
    paused: bool,
    queue: VecDeque<Command>,
    log: TrajectoryLog,
    last: Option<StateEvent>,
}

impl Session {
    pub fn new(config: &SessionConfig) -> Result<Self> {
        let spec = config.spec()?;
        let seed = config.seed.unwrap_or(spec.plant.seed);
        let start = config
            .start
            .map_or(Vec2::zeros(), |p| Vec2::new(p[0], p[1]));
        let looped = ClosedLoop::new(&spec, seed, start)?;
        let log = TrajectoryLog::new(LogMeta {
            label: "session".into(),
            seed,
            weights: spec.weights,
            preset: spec.preset.name().into(),
            current: spec.current,
            mode: spec.mode.name().into(),
            complete: true,
        });
        Ok(Session {
            spec,
            start,
            looped,
            steering: Steering::Idle,
            mode: Mode::Idle,
            paused: false,
            queue: VecDeque::new(),
            log,
            last: None,
        })
    }

    pub fn spec(&self) -> &TrialSpec {
        &self.spec
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn tick_count(&self) -> u64 {
        self.looped.tick_count()
    }

    pub fn log(&self) -> &TrajectoryLog {
        &self.log
    }

    /// Validate and queue a command for the next tick boundary.
    pub fn submit(&mut self, cmd: Command) -> Result<()> {
        let cfg = self.looped.config();
        match &cmd {
            Command::Target(p) | Command::Reset(Some(p)) => {
                if !(p.x.is_finite() && p.y.is_finite()) || !cfg.contains(*p) {
                    return Err(Error::domain(
                        "point",
                        format!("({}, {}) is outside the workspace", p.x, p.y),
                    ));
                }
            }
            Command::Path(path) => {
                if path.samples.len() < 2 {
                    return Err(Error::domain("path", "needs at least two points"));
                }
                if let Some(p) = path.samples.iter().find(|p| !cfg.contains(**p)) {
                    return Err(Error::domain(
                        "path",
                        format!("({}, {}) is outside the workspace", p.x, p.y),
                    ));
                }
            }
            Command::Params(u) => {
                if let Some(i) = u.current_a {
                    check_current(i)?;
                }
                if let Some(w) = &u.weights {
                    w.validate()?;
                }
            }
            Command::Pause | Command::Resume | Command::Reset(None) => {}
        }
        self.queue.push_back(cmd);
        Ok(())
    }

    fn apply(&mut self, cmd: Command) {
        match cmd {
            Command::Target(p) => {
                self.steering = Steering::Point(p);
                self.mode = Mode::ServoToPoint;
            }
            Command::Path(path) => {
                // Validated on submit, so the follower cannot fail here.
                if let Ok(s) = Steering::path(&path, self.looped.weights().lookahead) {
                    self.steering = s;
                    self.mode = Mode::FollowPath;
                }
            }
            Command::Params(u) => {
                if let Some(i) = u.current_a {
                    self.looped.set_current(i);
                    self.spec.current = i;
                }
                if let Some(w) = u.weights {
                    let _ = self.looped.set_weights(w);
                    if let Steering::Path(f) = &mut self.steering {
                        f.set_lookahead(w.lookahead);
                    }
                    self.spec.weights = w;
                }
                if let Some(p) = u.preset {
                    self.spec.preset = p;
                    let _ = self.looped.set_model(self.spec.model());
                }
            }
            Command::Pause => self.paused = true,
            Command::Resume => self.paused = false,
            Command::Reset(p) => {
                self.looped.place(p.unwrap_or(self.start));
                self.steering = Steering::Idle;
                self.mode = Mode::Idle;
                self.paused = false;
            }
        }
    }

    /// Apply queued commands, then run one control tick.
    pub fn tick(&mut self) -> StateEvent {
        while let Some(cmd) = self.queue.pop_front() {
            self.apply(cmd);
        }
        let row = self.looped.tick(&mut self.steering, !self.paused);
        let deadband = self.looped.weights().deadband;
        match (&self.mode, &self.steering) {
            (Mode::ServoToPoint, Steering::Point(t))
                if (self.looped.measured() - t).norm() <= deadband =>
            {
                self.mode = Mode::Hold;
            }
            (Mode::FollowPath, Steering::Path(f)) if self.looped.path_finished(f) => {
                self.steering = Steering::Point(f.final_sample());
                self.mode = Mode::Hold;
            }
            _ => {}
        }
        let waypoint = match &self.steering {
            Steering::Path(f) => Some(f.index()),
            _ => None,
        };
        let event = StateEvent {
            tick: row.tick,
            t_s: row.t,
            pos: [row.position.x, row.position.y],
            target: row.target.map(|t| [t.x, t.y]),
            pattern: row.pattern.bits(),
            mode: self.mode,
            err_mm: row.err,
            paused: self.paused,
            waypoint,
            current_a: self.looped.current(),
        };
        self.log.rows.push(row);
        self.last = Some(event.clone());
        event
    }

    /// Latest published event, or the pre-start state if no tick has run.
    pub fn snapshot(&self) -> StateEvent {
        self.last.clone().unwrap_or_else(|| {
            let p = self.looped.state().position;
            StateEvent {
                tick: 0,
                t_s: 0.0,
                pos: [p.x, p.y],
                target: None,
                pattern: 0,
                mode: self.mode,
                err_mm: None,
                paused: self.paused,
                waypoint: None,
                current_a: self.looped.current(),
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{make_path, run_path_trial, PathKind};

    fn session() -> Session {
        Session::new(&SessionConfig::default()).unwrap()
    }

    #[test]
    fn idle_session_keeps_coils_off() {
        let mut s = session();
        for i in 0..30 {
            let e = s.tick();
            assert_eq!(e.tick, i);
            assert_eq!(e.pattern, 0);
            assert_eq!(e.mode, Mode::Idle);
        }
    }

    #[test]
    fn target_at_particle_holds_immediately() {
        let mut s = session();
        s.submit(Command::Target(Vec2::zeros())).unwrap();
        let e = s.tick();
        assert_eq!(e.pattern, 0);
        assert_eq!(e.mode, Mode::Hold);
    }

    #[test]
    fn outside_target_rejected_without_mode_change() {
        let mut s = session();
        assert!(s.submit(Command::Target(Vec2::new(4.5, 0.0))).is_err());
        assert_eq!(s.tick().mode, Mode::Idle);
    }

    #[test]
    fn converges_to_distant_target() {
        let mut s = session();
        s.submit(Command::Target(Vec2::new(2.0, 0.0))).unwrap();
        let reached = (0..30 * 30).any(|_| s.tick().mode == Mode::Hold);
        assert!(reached);
    }

    #[test]
    fn retarget_switches_next_tick() {
        let mut s = session();
        s.submit(Command::Target(Vec2::new(2.0, 0.0))).unwrap();
        for _ in 0..10 {
            s.tick();
        }
        s.submit(Command::Target(Vec2::new(-2.0, 0.0))).unwrap();
        let e = s.tick();
        assert_eq!(e.target, Some([-2.0, 0.0]));
        // The coils now push toward -x: coil 0 (at +x) must be among them.
        assert_eq!(e.pattern & 1, 1);
    }

    #[test]
    fn pause_and_resume_preserve_waypoint() {
        let mut s = session();
        let path = make_path(PathKind::circle(), Vec2::zeros(), 4.0).unwrap();
        s.submit(Command::Reset(Some(path.start()))).unwrap();
        s.submit(Command::Path(path)).unwrap();
        for _ in 0..60 {
            s.tick();
        }
        s.submit(Command::Pause).unwrap();
        let w = s.tick().waypoint;
        for _ in 0..30 {
            let e = s.tick();
            assert_eq!(e.pattern, 0);
            assert_eq!(e.waypoint, w);
        }
        s.submit(Command::Resume).unwrap();
        let e = s.tick();
        assert!(e.waypoint >= w);
        assert!(!e.paused);
    }

    #[test]
    fn session_matches_harness_run() {
        let path = make_path(PathKind::line(), Vec2::zeros(), 4.0).unwrap();
        let cfg = SessionConfig {
            seed: Some(7),
            start: Some([path.start().x, path.start().y]),
            ..Default::default()
        };
        let mut s = Session::new(&cfg).unwrap();
        s.submit(Command::Path(path.clone())).unwrap();
        let harness = run_path_trial(&path, &s.spec().clone(), 7).unwrap();
        for row in &harness.rows {
            let e = s.tick();
            assert_eq!(e.pos, [row.position.x, row.position.y]);
            assert_eq!(e.pattern, row.pattern.bits());
        }
        assert_eq!(s.mode(), Mode::Hold);
    }

    #[test]
    fn params_change_current_next_tick() {
        let mut s = session();
        s.submit(Command::Params(ParamUpdate {
            current_a: Some(0.95),
            ..Default::default()
        }))
        .unwrap();
        assert_eq!(s.tick().current_a, 0.95);
        let bad = ParamUpdate {
            current_a: Some(5.0),
            ..Default::default()
        };
        assert!(s.submit(Command::Params(bad)).is_err());
    }

    #[test]
    fn config_rejects_unknown_fields() {
        assert!(serde_json::from_str::<SessionConfig>(r#"{"bogus": 1}"#).is_err());
        let c: SessionConfig =
            serde_json::from_str(r#"{"current_a": 0.95, "preset": "fig2d"}"#).unwrap();
        assert_eq!(c.spec().unwrap().current, 0.95);
    }
}
