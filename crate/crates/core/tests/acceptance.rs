//! Acceptance suite. Prints one PASS/FAIL line per criterion, with the
//! individual checks listed underneath, and exits non-zero if any fail.

use std::time::{Duration, Instant};

use ferromanip::controller::{enumerate_oracle, solve_pattern, ControllerWeights, ServoScene};
use ferromanip::energy::{
    capillary_length, energy_gradient, radial_force, total_energy, EnergyParams, FluidProperties,
};
use ferromanip::harness::{
    hold_error, make_path, open_loop_sweep, path_errors, pooled_stats, run_batch, run_hold_trial,
    run_path_trial, MeasurementMode, PathKind, PathStats, ReferencePath, TrialSpec,
};
use ferromanip::plant::PlantParams;
use ferromanip::rig::default_rig;
use ferromanip::session::{Command, ParamUpdate, Session, SessionConfig};
use ferromanip::velocity::superposed_velocity;
use ferromanip::vision::{locate_particle, otsu_threshold, render_frame, CameraModel};
use ferromanip::{
    ActuationPattern, GainPreset, ParticleState, Vec2, VelocityModel, SOLENOID_COUNT,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Check {
    label: String,
    ok: bool,
}

#[derive(Default)]
struct Report(Vec<Check>);

impl Report {
    fn check(&mut self, ok: bool, label: impl Into<String>) {
        self.0.push(Check {
            label: label.into(),
            ok,
        });
    }
}

fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let offset = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - offset).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    (slope, offset, 1.0 - ss_res / ss_tot)
}

fn no_drift() -> PlantParams {
    PlantParams {
        drift_rms: 0.0,
        ..PlantParams::default()
    }
}

fn velocity_distance(r: &mut Report) {
    let cfg = default_rig();
    let distances = [2.7, 3.8, 4.9, 5.9, 7.0];
    let pts = open_loop_sweep(
        &cfg,
        &VelocityModel::default(),
        &no_drift(),
        0,
        &distances,
        1.43,
        1,
    )
    .unwrap();
    for p in &pts {
        let law = 3.17 / p.distance_mm + 0.03;
        r.check(
            (p.mean_speed - law).abs() <= 0.02,
            format!(
                "{} mm: {:.4} mm/s vs law {:.4}",
                p.distance_mm, p.mean_speed, law
            ),
        );
    }
    for (i, reported) in [(0, 1.18), (4, 0.49)] {
        let v = pts[i].mean_speed;
        r.check(
            (v - reported).abs() <= 0.1 * reported,
            format!(
                "{} mm: {:.4} mm/s within 10% of measured {reported}",
                distances[i], v
            ),
        );
    }
}

fn current_law(r: &mut Report) {
    let cfg = default_rig();
    let model = VelocityModel::default();
    let currents = [0.24, 0.48, 0.72, 0.95, 1.19, 1.43, 1.66];
    let speeds: Vec<f64> = currents
        .iter()
        .map(|&i| {
            open_loop_sweep(&cfg, &model, &no_drift(), 0, &[3.8], i, 1).unwrap()[0].mean_speed
        })
        .collect();
    let (slope, offset, r2) = fit_line(&currents, &speeds);
    r.check(r2 >= 0.999, format!("R^2 = {r2:.6}"));
    let at_ref = slope * 1.43 + offset;
    let law = 3.17 / 3.8 + 0.03;
    r.check(
        (at_ref - law).abs() < 1e-3,
        format!("fit at 1.43 A = {at_ref:.5} mm/s, distance law {law:.5}"),
    );
    let ratio = offset / slope;
    r.check(
        (ratio - (-0.05 / 0.66)).abs() < 1e-3,
        format!("offset/slope = {ratio:.5}, current law {:.5}", -0.05 / 0.66),
    );
}

fn superposition(r: &mut Report) {
    let cfg = default_rig();
    let model = VelocityModel::with_preset(GainPreset::CenterCalibrated);
    let centre = ParticleState::at(Vec2::zeros());
    // Even coils are short, odd coils long.
    let combos: [(&str, &[usize], f64); 5] = [
        ("one long", &[1], 0.36),
        ("one short", &[0], 0.50),
        ("short + long", &[0, 1], 0.82),
        ("long + short + long", &[7, 0, 1], 1.12),
        ("short + long + short", &[0, 1, 2], 1.19),
    ];
    for (name, coils, reported) in combos {
        let p = ActuationPattern::from_indices(coils.iter().copied());
        let v = superposed_velocity(&centre, p, &cfg, &model, 1.43).norm();
        r.check(
            (v - reported).abs() <= 0.15 * reported,
            format!("{name}: {v:.4} mm/s vs measured {reported}"),
        );
    }
}

fn random_point(rng: &mut ChaCha8Rng, radius: f64) -> Vec2 {
    let rr = radius * rng.random::<f64>().sqrt();
    let a = std::f64::consts::TAU * rng.random::<f64>();
    Vec2::new(rr * a.cos(), rr * a.sin())
}

fn oracle_equivalence(r: &mut Report) {
    let cfg = default_rig();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    let n = 10_000;
    for _ in 0..n {
        let mut model = VelocityModel::default();
        model.class_gain.short = rng.random_range(0.2..2.0);
        model.class_gain.long = rng.random_range(0.2..2.0);
        let current = rng.random_range(0.24..1.66);
        let w = ControllerWeights {
            gamma: rng.random_range(0.0..0.05),
            ..ControllerWeights::default()
        };
        let p = random_point(&mut rng, 3.99);
        let t = if rng.random_bool(0.05) {
            p + random_point(&mut rng, 0.05)
        } else {
            random_point(&mut rng, 3.99)
        };
        let scene = ServoScene::new(p, t, &cfg, &model, current).unwrap();
        if solve_pattern(&scene, &w) != enumerate_oracle(&scene, &w) {
            mismatches += 1;
        }
    }
    r.check(
        mismatches == 0,
        format!("{mismatches} mismatches over {n} scenes"),
    );
}

fn symmetry(r: &mut Report) {
    let cfg = default_rig();
    let model = VelocityModel::default();
    let w = ControllerWeights::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 2000;
    let scene = |p: Vec2, t: Vec2| ServoScene::new(p, t, &cfg, &model, 1.43).unwrap();
    let random_pair = |rng: &mut ChaCha8Rng| loop {
        let p = random_point(rng, 3.9);
        let t = random_point(rng, 3.9);
        if (t - p).norm() > 2.0 * w.deadband {
            return (p, t);
        }
    };

    let mut bad = 0;
    for _ in 0..n {
        let (p, t) = random_pair(&mut rng);
        let k = rng.random_range(1..SOLENOID_COUNT);
        let rot = nalgebra::Rotation2::new(k as f64 * std::f64::consts::FRAC_PI_4);
        let base = solve_pattern(&scene(p, t), &w);
        let turned = solve_pattern(&scene(rot * p, rot * t), &w);
        if turned != base.rotated(k) {
            bad += 1;
        }
    }
    r.check(
        bad == 0,
        format!("rotation by k*45 deg: {bad} violations over {n}"),
    );

    let mut bad = 0;
    for _ in 0..n {
        let (p, t) = random_pair(&mut rng);
        let s = scene(p, t);
        let u = (t - p).normalize();
        let mut mirrored = s.clone();
        for v in mirrored.expected.iter_mut() {
            *v = u * (2.0 * v.dot(&u)) - *v;
        }
        if solve_pattern(&mirrored, &w) != solve_pattern(&s, &w) {
            bad += 1;
        }
    }
    r.check(
        bad == 0,
        format!("mirror across PT: {bad} violations over {n}"),
    );

    let mut bad = 0;
    for _ in 0..n {
        let (p, t) = random_pair(&mut rng);
        let s = scene(p, t);
        let mut last = u32::MAX;
        for gamma in [0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0] {
            let on = solve_pattern(&s, &ControllerWeights { gamma, ..w }).count_on();
            if on > last {
                bad += 1;
                break;
            }
            last = on;
        }
    }
    r.check(
        bad == 0,
        format!("ON count non-increasing in gamma: {bad} violations over {n}"),
    );

    let mut bad = 0;
    let w0 = ControllerWeights { gamma: 0.0, ..w };
    for _ in 0..n {
        let (p, t) = random_pair(&mut rng);
        let s = scene(p, t);
        let lambda = rng.random_range(0.05..20.0);
        let mut scaled = s.clone();
        for v in scaled.expected.iter_mut() {
            *v *= lambda;
        }
        if solve_pattern(&scaled, &w0) != solve_pattern(&s, &w0) {
            bad += 1;
        }
    }
    r.check(
        bad == 0,
        format!("velocity scaling at gamma = 0: {bad} violations over {n}"),
    );
}

fn default_path(name: &str) -> ReferencePath {
    make_path(PathKind::named(name).unwrap(), Vec2::zeros(), 4.0).unwrap()
}

fn path_following(r: &mut Report) {
    let spec = TrialSpec::default();
    let names = ["line", "square", "circle"];
    for name in names {
        let path = default_path(name);
        let log = run_path_trial(&path, &spec.clone().noise_free(), 0).unwrap();
        let s = path_errors(&log, &path);
        r.check(
            log.meta.complete && s.max_err < 50.0,
            format!(
                "noise-free {name}: complete = {}, max error {:.1} um",
                log.meta.complete, s.max_err
            ),
        );
    }
    let stats: Vec<PathStats> = names
        .iter()
        .map(|name| {
            let path = default_path(name);
            let logs = run_batch(10, 0, |seed| run_path_trial(&path, &spec, seed)).unwrap();
            pooled_stats(&logs, &path)
        })
        .collect();
    for (name, s) in names.iter().zip(&stats) {
        r.check(
            s.mean_err <= 100.0,
            format!(
                "10 seeds {name}: mean error {:.1} um, mean speed {:.1} um/s",
                s.mean_err, s.mean_v
            ),
        );
    }
    let [line, square, circle] = [stats[0], stats[1], stats[2]];
    r.check(
        line.mean_err <= square.mean_err,
        format!(
            "line error {:.1} <= square error {:.1}",
            line.mean_err, square.mean_err
        ),
    );
    r.check(
        line.mean_err <= circle.mean_err,
        format!(
            "line error {:.1} <= circle error {:.1}",
            line.mean_err, circle.mean_err
        ),
    );
    r.check(
        circle.mean_v > square.mean_v && square.mean_v > line.mean_v,
        format!(
            "speed circle {:.1} > square {:.1} > line {:.1} um/s",
            circle.mean_v, square.mean_v, line.mean_v
        ),
    );
}

fn position_hold(r: &mut Report) {
    for current in [0.95, 1.19, 1.43] {
        let spec = TrialSpec {
            current,
            ..TrialSpec::default()
        };
        let log = run_hold_trial(Vec2::zeros(), 60.0, &spec, 0).unwrap();
        let s = hold_error(&log, Vec2::zeros());
        let finite = log
            .rows
            .iter()
            .all(|row| row.position.iter().all(|x| x.is_finite()));
        r.check(
            finite && s.mean_err <= 100.0,
            format!(
                "{current} A: mean hold error {:.1} um, finite = {finite}",
                s.mean_err
            ),
        );
    }
}

fn energy(r: &mut Report) {
    let p = EnergyParams::default();
    let w = p.deformation.width;
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let rho = w * (0.05 + 0.08 * k as f64);
        let analytic = energy_gradient(&p, rho);
        let numeric = -radial_force(&p, rho);
        worst = worst.max((analytic - numeric).abs() / analytic.abs());
    }
    r.check(
        worst <= 1e-6,
        format!("gradient: worst relative gap {worst:.2e} over 50 points"),
    );

    let mut flat = p;
    flat.field = None;
    flat.deformation.height = 0.0;
    let e0 = total_energy(&flat, 0.0);
    let constant = (0..50).all(|k| total_energy(&flat, k as f64 * 1e-4) == e0);
    r.check(constant, "no field and no bump: energy constant");

    r.check(radial_force(&p, 0.0) == 0.0, "force on the axis is zero");

    let l = capillary_length(&FluidProperties::default()).unwrap() * 1e3;
    r.check(
        (l - 2.667).abs() <= 0.01,
        format!("capillary length {l:.4} mm"),
    );
}

fn vision(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let mut h = [0u64; 256];
        for _ in 0..rng.random_range(1..300) {
            h[rng.random_range(0..256)] += rng.random_range(1..1500);
        }
        let fast = otsu_threshold(&h).unwrap();
        let total: u64 = h.iter().sum();
        let mut best = (0u128, 1u128, 0usize);
        let populated = h.iter().filter(|&&c| c > 0).count();
        if populated == 1 {
            best.2 = h.iter().position(|&c| c > 0).unwrap();
        } else {
            for k in 0..256 {
                let n0: u64 = h[..=k].iter().sum();
                let s0: u64 = (0..=k).map(|i| i as u64 * h[i]).sum();
                let s1: u64 = (k + 1..256).map(|i| i as u64 * h[i]).sum();
                let n1 = total - n0;
                if n0 == 0 || n1 == 0 {
                    continue;
                }
                let d = (s0 as i128 * n1 as i128 - s1 as i128 * n0 as i128).unsigned_abs();
                let (num, den) = (d * d, n0 as u128 * n1 as u128);
                if num * best.1 > best.0 * den {
                    best = (num, den, k);
                }
            }
        }
        if fast as usize != best.2 {
            mismatches += 1;
        }
    }
    r.check(
        mismatches == 0,
        format!("Otsu vs brute force: {mismatches} mismatches over 1000 histograms"),
    );

    let cam = CameraModel::default().with_noise(5.0);
    let mut within = 0;
    let poses = 500;
    for _ in 0..poses {
        let truth = random_point(&mut rng, 4.0);
        let frame = render_frame(&ParticleState::at(truth), &cam, &mut rng);
        if let Some(p) = locate_particle(&frame, &cam) {
            if (p - truth).norm() < cam.scale {
                within += 1;
            }
        }
    }
    r.check(
        within * 100 >= 99 * poses,
        format!("round trip at sigma 5: {within}/{poses} within one pixel"),
    );

    let spec = TrialSpec {
        mode: MeasurementMode::Vision,
        ..TrialSpec::default()
    };
    let path = default_path("line");
    let log = run_path_trial(&path, &spec, 0).unwrap();
    let s = path_errors(&log, &path);
    r.check(
        log.meta.complete && s.mean_err <= 150.0,
        format!(
            "vision-mode line: complete = {}, mean error {:.1} um",
            log.meta.complete, s.mean_err
        ),
    );
}

fn scripted_session(seed: u64, mode: MeasurementMode) -> Session {
    let config = SessionConfig {
        seed: Some(seed),
        mode: Some(mode),
        start: Some([0.5, -0.5]),
        ..Default::default()
    };
    let mut s = Session::new(&config).unwrap();
    let square = default_path("square");
    for tick in 0..600u64 {
        let cmd = match tick {
            0 => Some(Command::Target(Vec2::new(1.0, 1.0))),
            90 => Some(Command::Reset(Some(square.start()))),
            91 => Some(Command::Path(square.clone())),
            200 => Some(Command::Pause),
            230 => Some(Command::Resume),
            300 => Some(Command::Params(ParamUpdate {
                current_a: Some(0.95),
                ..Default::default()
            })),
            _ => None,
        };
        if let Some(c) = cmd {
            s.submit(c).unwrap();
        }
        s.tick();
    }
    s
}

fn determinism(r: &mut Report) {
    for (seed, mode) in [
        (1, MeasurementMode::Oracle),
        (2, MeasurementMode::Oracle),
        (3, MeasurementMode::Vision),
    ] {
        let a = scripted_session(seed, mode).log().to_csv_string().unwrap();
        let b = scripted_session(seed, mode).log().to_csv_string().unwrap();
        r.check(
            a == b,
            format!(
                "scripted session, seed {seed}, {}: identical CSV",
                mode.name()
            ),
        );
    }
    for name in ["line", "circle"] {
        let path = default_path(name);
        let spec = TrialSpec::default();
        let a = run_path_trial(&path, &spec, 5)
            .unwrap()
            .to_csv_string()
            .unwrap();
        let b = run_path_trial(&path, &spec, 5)
            .unwrap()
            .to_csv_string()
            .unwrap();
        r.check(a == b, format!("harness {name}, seed 5: identical CSV"));

        let harness = run_path_trial(&path, &spec, 5).unwrap();
        let config = SessionConfig {
            seed: Some(5),
            start: Some([path.start().x, path.start().y]),
            ..Default::default()
        };
        let mut session = Session::new(&config).unwrap();
        session.submit(Command::Path(path.clone())).unwrap();
        let same = harness.rows.iter().all(|row| {
            let e = session.tick();
            e.pos == [row.position.x, row.position.y] && e.pattern == row.pattern.bits()
        });
        r.check(
            same,
            format!(
                "session vs harness {name}: {} identical positions",
                harness.rows.len()
            ),
        );
    }
}

fn main() {
    type Criterion = (u32, &'static str, u64, fn(&mut Report));
    let criteria: [Criterion; 10] = [
        (1, "velocity-distance law", 5, velocity_distance),
        (2, "current law", 5, current_law),
        (3, "multi-coil superposition", 5, superposition),
        (4, "controller oracle equivalence", 10, oracle_equivalence),
        (5, "controller symmetries", 10, symmetry),
        (6, "closed-loop path following", 60, path_following),
        (7, "position hold", 30, position_hold),
        (8, "interface energy", 2, energy),
        (9, "vision pipeline", 30, vision),
        (10, "determinism", 30, determinism),
    ];
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        let mut report = Report::default();
        let start = Instant::now();
        run(&mut report);
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let ok = in_time && report.0.iter().all(|c| c.ok);
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {id:>2}: {name} ({:.2} s, limit {limit} s)",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        for c in &report.0 {
            println!(
                "       [{}] {}",
                if c.ok { "ok" } else { "FAILED" },
                c.label
            );
        }
        if !in_time {
            println!("       [FAILED] runtime over limit");
        }
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
