//! Path-following error and speed statistics.
//!
//! Statistics over several repetitions pool every tick of every repetition
//! into one sample before taking mean, standard deviation and maximum.
//! Standard deviations are population (divide by `n`).

use serde::{Deserialize, Serialize};

use super::log::TrajectoryLog;
use super::path::ReferencePath;
use crate::Vec2;

/// Error statistics in um and speed statistics in um/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PathStats {
    pub mean_err: f64,
    pub std_err: f64,
    pub max_err: f64,
    pub mean_v: f64,
    pub std_v: f64,
    pub max_v: f64,
}

/// Summary record written next to the trajectory CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub path: String,
    pub reps: usize,
    pub mean_err_um: f64,
    pub std_err_um: f64,
    pub max_err_um: f64,
    pub mean_v_ums: f64,
    pub std_v_ums: f64,
    pub max_v_ums: f64,
}

impl StatsReport {
    pub fn new(path: &str, reps: usize, s: &PathStats) -> Self {
        StatsReport {
            path: path.into(),
            reps,
            mean_err_um: s.mean_err,
            std_err_um: s.std_err,
            max_err_um: s.max_err,
            mean_v_ums: s.mean_v,
            std_v_ums: s.std_v,
            max_v_ums: s.max_v,
        }
    }
}

/// Mean, population standard deviation and maximum. Zeros when empty.
pub fn summarize(xs: &[f64]) -> (f64, f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (mean, var.sqrt(), max)
}

/// Distance from `p` to the segment `a`-`b`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_squared();
    if len_sq == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len_sq).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Distance from `p` to the continuous polyline through `samples`.
pub fn point_polyline_distance(p: Vec2, samples: &[Vec2]) -> f64 {
    match samples {
        [] => f64::NAN,
        [only] => (p - only).norm(),
        _ => samples
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Per-tick distance to the path, mm.
pub fn error_series(log: &TrajectoryLog, path: &ReferencePath) -> Vec<f64> {
    log.rows
        .iter()
        .map(|r| point_polyline_distance(r.position, &path.samples))
        .collect()
}

/// Per-tick speed from finite differences of consecutive logged positions, mm/s.
pub fn speed_series(log: &TrajectoryLog) -> Vec<f64> {
    log.rows
        .windows(2)
        .map(|w| (w[1].position - w[0].position).norm() / (w[1].t - w[0].t))
        .collect()
}

/// Error fields of [`PathStats`]; speed fields are left at zero.
pub fn path_errors(log: &TrajectoryLog, path: &ReferencePath) -> PathStats {
    let (mean, std, max) = summarize(&error_series(log, path));
    PathStats {
        mean_err: 1e3 * mean,
        std_err: 1e3 * std,
        max_err: 1e3 * max,
        ..Default::default()
    }
}

/// Speed fields of [`PathStats`]; error fields are left at zero.
pub fn velocity_stats(log: &TrajectoryLog) -> PathStats {
    let (mean, std, max) = summarize(&speed_series(log));
    PathStats {
        mean_v: 1e3 * mean,
        std_v: 1e3 * std,
        max_v: 1e3 * max,
        ..Default::default()
    }
}

/// Both halves of [`PathStats`], pooled over all ticks of all logs.
pub fn pooled_stats(logs: &[TrajectoryLog], path: &ReferencePath) -> PathStats {
    let errs: Vec<f64> = logs.iter().flat_map(|l| error_series(l, path)).collect();
    let speeds: Vec<f64> = logs.iter().flat_map(speed_series).collect();
    let (me, se, xe) = summarize(&errs);
    let (mv, sv, xv) = summarize(&speeds);
    PathStats {
        mean_err: 1e3 * me,
        std_err: 1e3 * se,
        max_err: 1e3 * xe,
        mean_v: 1e3 * mv,
        std_v: 1e3 * sv,
        max_v: 1e3 * xv,
    }
}

/// Mean distance to a fixed point over all ticks, um.
pub fn hold_error(log: &TrajectoryLog, point: Vec2) -> PathStats {
    let errs: Vec<f64> = log
        .rows
        .iter()
        .map(|r| (r.position - point).norm())
        .collect();
    let (mean, std, max) = summarize(&errs);
    PathStats {
        mean_err: 1e3 * mean,
        std_err: 1e3 * std,
        max_err: 1e3 * max,
        ..velocity_stats(log)
    }
}

#[cfg(test)]
mod tests {
    use super::super::log::{LogMeta, LogRow};
    use super::super::path::{make_path, PathKind};
    use super::*;
    use crate::controller::{ActuationPattern, ControllerWeights};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn log_of(points: &[Vec2], dt: f64) -> TrajectoryLog {
        let mut log = TrajectoryLog::new(LogMeta {
            label: "t".into(),
            seed: 0,
            weights: ControllerWeights::default(),
            preset: "unit".into(),
            current: 1.43,
            mode: "oracle".into(),
            complete: true,
        });
        for (i, p) in points.iter().enumerate() {
            log.rows.push(LogRow {
                tick: i as u64,
                t: i as f64 * dt,
                position: *p,
                target: None,
                pattern: ActuationPattern::OFF,
                commanded_speed: 0.0,
                err: None,
            });
        }
        log
    }

    fn line() -> ReferencePath {
        make_path(PathKind::line(), Vec2::zeros(), 4.0).unwrap()
    }

    #[test]
    fn on_path_is_zero() {
        let path = line();
        let s = path_errors(&log_of(&path.samples, 0.1), &path);
        assert_eq!((s.mean_err, s.std_err, s.max_err), (0.0, 0.0, 0.0));
    }

    #[test]
    fn constant_offset() {
        let path = line();
        let pts: Vec<Vec2> = (0..50)
            .map(|i| Vec2::new(-1.9 + 0.07 * i as f64, 0.1))
            .collect();
        let s = path_errors(&log_of(&pts, 0.1), &path);
        assert_abs_diff_eq!(s.mean_err, 100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.max_err, 100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.std_err, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn polyline_distance_against_dense_samples() {
        // The continuous distance never exceeds the nearest-sample distance,
        // and the gap is bounded by half a spacing.
        let path = make_path(PathKind::square(), Vec2::zeros(), 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let p = Vec2::new(rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5));
            let d = point_polyline_distance(p, &path.samples);
            let nearest = path
                .samples
                .iter()
                .map(|s| (s - p).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(d <= nearest + 1e-12);
            assert!(nearest - d <= 0.5 * 0.05 + 1e-12);
        }
    }

    #[test]
    fn uniform_motion_speed() {
        let pts: Vec<Vec2> = (0..31).map(|i| Vec2::new(0.01 * i as f64, 0.0)).collect();
        let s = velocity_stats(&log_of(&pts, 1.0 / 30.0));
        assert_abs_diff_eq!(s.mean_v, 300.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.std_v, 0.0, epsilon = 1e-9);
        let still = velocity_stats(&log_of(&[Vec2::zeros(); 10], 0.1));
        assert_eq!((still.mean_v, still.std_v, still.max_v), (0.0, 0.0, 0.0));
    }

    #[test]
    fn rigid_rotation_leaves_errors_unchanged() {
        let path = make_path(PathKind::square(), Vec2::zeros(), 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<Vec2> = (0..200)
            .map(|_| Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
            .collect();
        let rot = nalgebra::Rotation2::new(0.7);
        let mut turned = path.clone();
        turned.samples = path.samples.iter().map(|s| rot * s).collect();
        let rotated: Vec<Vec2> = pts.iter().map(|p| rot * p).collect();
        let a = error_series(&log_of(&pts, 0.1), &path);
        let b = error_series(&log_of(&rotated, 0.1), &turned);
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn summary_ordering() {
        let xs = [0.3, 0.1, 0.7, 0.2];
        let (mean, std, max) = summarize(&xs);
        assert!(max >= mean && mean >= 0.0 && std >= 0.0);
        assert_abs_diff_eq!(mean, 0.325, epsilon = 1e-12);
    }
}
