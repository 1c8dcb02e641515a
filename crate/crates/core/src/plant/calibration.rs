//! Calibration of the instantaneous drive law.
//!
//! The fitted distance law gives the *mean* speed over the first second
//! after switch-on as a function of the *initial* distance. During that
//! second the particle accelerates through the actuation lag and slows down
//! as it moves away from the tip, so using the fitted law as the
//! instantaneous speed under-predicts the observable. The plant therefore
//! drives each coil at `scale * law(rho) * kappa(rho, scale)`, with the
//! correction `kappa` solved so that a single-coil push from rest reproduces
//! `scale * law(rho0)` over the first second exactly (up to interpolation).
//!
//! The solve runs from the far end of the distance grid inwards: a particle
//! only ever moves away from an active lone coil, so the correction at a grid
//! point depends only on corrections further out, and the one unknown can be
//! bracketed and bisected.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::velocity::{DistanceLaw, MIN_DISTANCE_MM};

const RHO_MIN: f64 = MIN_DISTANCE_MM;
const RHO_RATIO: f64 = 1.02;
const RHO_POINTS: usize = 400;
const SCALE_STEP: f64 = 0.05;
const SCALE_POINTS: usize = 60;
const KAPPA_BRACKET: (f64, f64) = (0.05, 50.0);
const BISECTION_STEPS: usize = 48;

/// Correction table over log-spaced distance and linearly spaced scale.
#[derive(Debug, Clone)]
pub struct DriveCalibration {
    /// Row-major `[scale][rho]`.
    kappa: Vec<f64>,
}

/// Lag blending factor for one tick, `exp(-dt / tau)`; zero without lag.
pub(crate) fn lag_factor(lag_tau: f64, dt: f64) -> f64 {
    if lag_tau > 0.0 {
        (-dt / lag_tau).exp()
    } else {
        0.0
    }
}

/// Ticks in the one-second observation window.
fn window_ticks(dt: f64) -> usize {
    ((1.0 / dt).round() as usize).max(1)
}

fn rho_at(k: usize) -> f64 {
    RHO_MIN * RHO_RATIO.powi(k as i32)
}

fn scale_at(j: usize) -> f64 {
    (j + 1) as f64 * SCALE_STEP
}

/// Fractional grid coordinate of `rho`, clamped to the table.
fn rho_coord(rho: f64) -> f64 {
    if rho <= RHO_MIN {
        return 0.0;
    }
    let c = (rho / RHO_MIN).ln() / RHO_RATIO.ln();
    c.min((RHO_POINTS - 1) as f64)
}

fn scale_coord(scale: f64) -> f64 {
    (scale / SCALE_STEP - 1.0).clamp(0.0, (SCALE_POINTS - 1) as f64)
}

fn lerp_row(row: &[f64], c: f64) -> f64 {
    let i = (c.floor() as usize).min(row.len() - 1);
    if i + 1 >= row.len() {
        return row[row.len() - 1];
    }
    let f = c - i as f64;
    row[i] + f * (row[i + 1] - row[i])
}

/// Mean speed over the observation window of a lone-coil push from rest at
/// distance `rho0`, integrated exactly as the plant steps.
fn window_mean_speed(
    law: &DistanceLaw,
    scale: f64,
    rho0: f64,
    kappa: impl Fn(f64) -> f64,
    lag: f64,
    dt: f64,
    ticks: usize,
) -> f64 {
    let mut rho = rho0;
    let mut v = 0.0;
    for _ in 0..ticks {
        let cmd = scale * law.speed(rho) * kappa(rho);
        v = cmd + (v - cmd) * lag;
        rho += dt * v;
    }
    (rho - rho0) / (ticks as f64 * dt)
}

impl DriveCalibration {
    pub fn build(law: DistanceLaw, lag_tau: f64, dt: f64) -> Self {
        let lag = lag_factor(lag_tau, dt);
        let ticks = window_ticks(dt);
        let mut kappa = vec![1.0; RHO_POINTS * SCALE_POINTS];
        for (j, row) in kappa.chunks_mut(RHO_POINTS).enumerate() {
            let scale = scale_at(j);
            for k in (0..RHO_POINTS).rev() {
                let rho0 = rho_at(k);
                let target = scale * law.speed(rho0);
                let outer = if k + 1 < RHO_POINTS { row[k + 1] } else { 1.0 };
                if target <= 0.0 {
                    row[k] = outer;
                    continue;
                }
                let last = k + 1 == RHO_POINTS;
                let mean_for = |x: f64| {
                    let row = &*row;
                    window_mean_speed(
                        &law,
                        scale,
                        rho0,
                        |rho| {
                            if last {
                                return x;
                            }
                            let c = rho_coord(rho);
                            let kc = k as f64;
                            if c <= kc {
                                x
                            } else if c < kc + 1.0 {
                                x + (c - kc) * (row[k + 1] - x)
                            } else {
                                lerp_row(row, c)
                            }
                        },
                        lag,
                        dt,
                        ticks,
                    )
                };
                let (mut lo, mut hi) = KAPPA_BRACKET;
                for _ in 0..BISECTION_STEPS {
                    let mid = 0.5 * (lo + hi);
                    if mean_for(mid) < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                row[k] = 0.5 * (lo + hi);
            }
        }
        DriveCalibration { kappa }
    }

    /// Process-wide cache keyed by law, lag and tick length.
    pub fn shared(law: DistanceLaw, lag_tau: f64, dt: f64) -> Arc<DriveCalibration> {
        type Key = (String, u64, u64);
        static CACHE: OnceLock<Mutex<HashMap<Key, Arc<DriveCalibration>>>> = OnceLock::new();
        let key = (format!("{law:?}"), lag_tau.to_bits(), dt.to_bits());
        let cache = CACHE.get_or_init(Default::default);
        if let Some(hit) = cache.lock().unwrap().get(&key) {
            return Arc::clone(hit);
        }
        let built = Arc::new(DriveCalibration::build(law, lag_tau, dt));
        cache.lock().unwrap().entry(key).or_insert(built).clone()
    }

    /// Correction factor at distance `rho` mm and drive scale `scale`.
    pub fn factor(&self, rho: f64, scale: f64) -> f64 {
        let rc = rho_coord(rho);
        let sc = scale_coord(scale);
        let j = (sc.floor() as usize).min(SCALE_POINTS - 1);
        let row = |j: usize| &self.kappa[j * RHO_POINTS..(j + 1) * RHO_POINTS];
        let lower = lerp_row(row(j), rc);
        if j + 1 >= SCALE_POINTS {
            return lower;
        }
        let upper = lerp_row(row(j + 1), rc);
        lower + (sc - j as f64) * (upper - lower)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_window_mean_on_grid() {
        let dt = 1.0 / 30.0;
        let cal = DriveCalibration::build(DistanceLaw::INVERSE, 0.1, dt);
        let lag = lag_factor(0.1, dt);
        for k in [80, 160, 170, 200, 250] {
            let rho0 = rho_at(k);
            let scale = 1.0;
            let mean = window_mean_speed(
                &DistanceLaw::INVERSE,
                scale,
                rho0,
                |rho| cal.factor(rho, scale),
                lag,
                dt,
                30,
            );
            let target = DistanceLaw::INVERSE.speed(rho0);
            assert!(
                (mean - target).abs() < 1e-6 * target,
                "rho0 {rho0}: {mean} vs {target}"
            );
        }
    }

    #[test]
    fn correction_exceeds_one_with_lag() {
        let dt = 1.0 / 30.0;
        let cal = DriveCalibration::build(DistanceLaw::INVERSE, 0.1, dt);
        for rho in [1.0, 2.7, 5.1, 9.0] {
            assert!(cal.factor(rho, 1.0) > 1.0);
        }
        // Without lag and for a far particle the correction vanishes.
        let cal = DriveCalibration::build(DistanceLaw::INVERSE, 0.0, dt);
        assert!((cal.factor(200.0, 0.1) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn shared_cache_returns_same_table() {
        let a = DriveCalibration::shared(DistanceLaw::INVERSE, 0.1, 1.0 / 30.0);
        let b = DriveCalibration::shared(DistanceLaw::INVERSE, 0.1, 1.0 / 30.0);
        assert!(Arc::ptr_eq(&a, &b));
    }
}
