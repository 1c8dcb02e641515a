use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ferromanip::energy::{energy_sweep, write_energy_csv, EnergyParams};
use ferromanip::harness::{
    hold_error, letter_strokes, make_path, open_loop_sweep, pooled_stats, preset_paths, run_batch,
    run_hold_trial, run_path_trial, StatsReport,
};
use ferromanip::rig::default_rig;
use ferromanip::{
    GainPreset, MeasurementMode, PathKind, PathStats, PlantParams, ReferencePath, TrialSpec, Vec2,
};
use ferromanip_service::ServiceOptions;

#[derive(Parser)]
#[command(
    name = "ferromanip",
    version,
    about = "Ferrofluid-interface particle manipulator workbench"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-loop path-following trials.
    Run(RunArgs),
    /// Servo to a point and hold it.
    Hold(HoldArgs),
    /// Open-loop single-coil speed against distance.
    Sweep(SweepArgs),
    /// Interface energy terms and radial force against distance.
    EnergySweep(EnergyArgs),
    /// Host live sessions over HTTP.
    Serve(ServeArgs),
    /// Run the three default paths and print a summary table.
    Demo(DemoArgs),
    /// Reference path files.
    Paths {
        #[command(subcommand)]
        command: PathsCmd,
    },
}

#[derive(Args)]
struct TrialArgs {
    /// Coil current, A.
    #[arg(long, default_value_t = 1.43)]
    current: f64,
    #[arg(long, default_value = "oracle", value_parser = parse_mode)]
    mode: MeasurementMode,
    #[arg(long, default_value = "fig2d", value_parser = parse_preset)]
    preset: GainPreset,
    /// Carrot distance along the path, mm.
    #[arg(long)]
    lookahead: Option<f64>,
    /// Disable drift and lag.
    #[arg(long)]
    noise_free: bool,
}

impl TrialArgs {
    fn spec(&self) -> Result<TrialSpec> {
        let mut spec = TrialSpec {
            current: self.current,
            mode: self.mode,
            preset: self.preset,
            ..TrialSpec::default()
        };
        if let Some(l) = self.lookahead {
            spec.weights.lookahead = l;
        }
        if self.noise_free {
            spec = spec.noise_free();
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_mode(s: &str) -> Result<MeasurementMode, String> {
    s.parse().map_err(|e: ferromanip::Error| e.to_string())
}

fn parse_preset(s: &str) -> Result<GainPreset, String> {
    s.parse().map_err(|e: ferromanip::Error| e.to_string())
}

#[derive(Args)]
struct RunArgs {
    /// `line`, `square`, `circle`, a letter name, or a path JSON file.
    #[arg(long, default_value = "line")]
    path: String,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    /// Seed of the first repetition; later ones count up from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    trial: TrialArgs,
    /// Directory for per-repetition CSVs and the statistics JSON.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct HoldArgs {
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    x: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    y: f64,
    /// Hold time, s.
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    trial: TrialArgs,
    /// Trajectory CSV; omitted means no file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Distances from the coil tip, mm.
    #[arg(long, value_delimiter = ',', default_value = "2.7,3.8,4.9,5.9,7.0")]
    distances: Vec<f64>,
    #[arg(long, default_value_t = 1.43)]
    current: f64,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    coil: usize,
    #[arg(long, default_value = "unit", value_parser = parse_preset)]
    preset: GainPreset,
    /// Disable drift.
    #[arg(long)]
    no_drift: bool,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EnergyArgs {
    /// Largest distance from the bump axis, mm.
    #[arg(long, default_value_t = 5.0)]
    rho_max_mm: f64,
    #[arg(long, default_value_t = 201)]
    points: usize,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Tick as fast as possible instead of in real time.
    #[arg(long)]
    turbo: bool,
    /// Directory of static UI assets.
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum PathsCmd {
    /// Write every preset path as `<name>.json`.
    Export {
        #[arg(long, default_value = "paths")]
        dir: PathBuf,
    },
    /// List preset path names.
    List,
}

fn resolve_path(arg: &str, radius: f64) -> Result<ReferencePath> {
    if let Some(kind) = PathKind::named(arg) {
        return Ok(make_path(kind, Vec2::zeros(), radius)?);
    }
    if letter_strokes().iter().any(|(name, _)| *name == arg) {
        let p = preset_paths(radius)?.into_iter().find(|p| p.name == arg);
        return Ok(p.expect("every letter is a preset"));
    }
    let file = Path::new(arg);
    if !file.exists() {
        bail!("`{arg}` is neither a preset path nor an existing file");
    }
    let path = ReferencePath::load(file).with_context(|| format!("reading {arg}"))?;
    if let Some(p) = path.samples.iter().find(|p| p.norm() > radius) {
        bail!("{arg}: point ({}, {}) lies outside the workspace", p.x, p.y);
    }
    Ok(path)
}

fn output(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => {
            Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)
        }
        None => Box::new(std::io::stdout().lock()),
    })
}

fn print_stats(name: &str, s: &PathStats) {
    println!(
        "{name:<8} error {:7.1} +/- {:6.1} um (max {:7.1})   speed {:7.1} +/- {:6.1} um/s",
        s.mean_err, s.std_err, s.max_err, s.mean_v, s.std_v
    );
}

fn run(args: RunArgs) -> Result<()> {
    let spec = args.trial.spec()?;
    let path = resolve_path(&args.path, spec.cfg.workspace_radius)?;
    let logs = run_batch(args.reps, args.seed, |seed| {
        run_path_trial(&path, &spec, seed)
    })?;
    fs::create_dir_all(&args.out)?;
    for log in &logs {
        let file = args
            .out
            .join(format!("{}_seed{}.csv", path.name, log.meta.seed));
        log.write_csv(fs::File::create(&file)?)?;
    }
    let stats = pooled_stats(&logs, &path);
    let report = StatsReport::new(&path.name, args.reps, &stats);
    fs::write(
        args.out.join(format!("{}_stats.json", path.name)),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    let incomplete = logs.iter().filter(|l| !l.meta.complete).count();
    print_stats(&path.name, &stats);
    if incomplete > 0 {
        eprintln!(
            "warning: {incomplete} of {} repetitions timed out",
            args.reps
        );
    }
    Ok(())
}

fn hold(args: HoldArgs) -> Result<()> {
    let spec = args.trial.spec()?;
    let point = Vec2::new(args.x, args.y);
    let log = run_hold_trial(point, args.duration, &spec, args.seed)?;
    if let Some(out) = &args.out {
        log.write_csv(fs::File::create(out)?)?;
    }
    let s = hold_error(&log, point);
    println!(
        "hold ({}, {}) for {} s at {} A: error {:.1} +/- {:.1} um (max {:.1})",
        args.x, args.y, args.duration, spec.current, s.mean_err, s.std_err, s.max_err
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let cfg = default_rig();
    let model = ferromanip::VelocityModel::with_preset(args.preset);
    let mut plant = PlantParams::default().with_seed(args.seed);
    if args.no_drift {
        plant.drift_rms = 0.0;
    }
    let pts = open_loop_sweep(
        &cfg,
        &model,
        &plant,
        args.coil,
        &args.distances,
        args.current,
        args.reps,
    )?;
    let mut out = output(&args.out)?;
    writeln!(out, "distance_mm,mean_speed_mm_s,std_speed_mm_s")?;
    for p in pts {
        writeln!(out, "{},{},{}", p.distance_mm, p.mean_speed, p.std_speed)?;
    }
    Ok(())
}

fn energy(args: EnergyArgs) -> Result<()> {
    let params = EnergyParams::for_rig(&default_rig())?;
    let rows = energy_sweep(&params, args.rho_max_mm * 1e-3, args.points);
    write_energy_csv(&rows, output(&args.out)?)?;
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    tracing_subscriber::fmt::init();
    let options = ServiceOptions {
        turbo: args.turbo,
        static_dir: args.static_dir,
        ..ServiceOptions::default()
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port)).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        ferromanip_service::serve(listener, options).await?;
        Ok(())
    })
}

fn demo(args: DemoArgs) -> Result<()> {
    let spec = TrialSpec::default();
    println!(
        "{} repetitions per path, {} A, preset {}",
        args.reps,
        spec.current,
        spec.preset.name()
    );
    for name in ["line", "square", "circle"] {
        let path = resolve_path(name, spec.cfg.workspace_radius)?;
        let logs = run_batch(args.reps, args.seed, |seed| {
            run_path_trial(&path, &spec, seed)
        })?;
        print_stats(name, &pooled_stats(&logs, &path));
    }
    Ok(())
}

fn paths(cmd: PathsCmd) -> Result<()> {
    let presets = preset_paths(default_rig().workspace_radius)?;
    match cmd {
        PathsCmd::Export { dir } => {
            fs::create_dir_all(&dir)?;
            for p in presets {
                p.save(dir.join(format!("{}.json", p.name)))?;
            }
        }
        PathsCmd::List => {
            for p in presets {
                println!("{}", p.name);
            }
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Cmd::Run(a) => run(a),
        Cmd::Hold(a) => hold(a),
        Cmd::Sweep(a) => sweep(a),
        Cmd::EnergySweep(a) => energy(a),
        Cmd::Serve(a) => serve(a),
        Cmd::Demo(a) => demo(a),
        Cmd::Paths { command } => paths(command),
    }
}
