//! Command-line front end. Exit codes: 0 ok, 2 configuration or input
//! error, 3 runtime failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use splatsim_core::analysis::evaluate_flight;
use splatsim_core::expert::closed_loop_run_partial;
use splatsim_core::flatness::{min_snap, sample_trajectory, DesiredTrajectory};
use splatsim_core::splat::{generate_synthetic_scene, SplatScene};
use splatsim_core::{Pose, Quat, Vec3};

use crate::config::Config;
use crate::dataset::{generate_dataset, DatasetRequest, SceneEcho};
use crate::image_io::write_image;
use crate::inputs::{demo_scene_spec, load_scene_spec, load_waypoints};
use crate::ply::{load_ply, save_ply};
use crate::render::ParallelRenderer;
use crate::report::{FlightReport, MetricsFileReport, MetricsJson};
use crate::states_csv::{read_states_csv, write_states_csv, FlightLog};

#[derive(Debug, Parser)]
#[command(name = "splatsim", version, about = "Gaussian-splat quadrotor flight simulator")]
pub struct Cli {
    /// TOML or JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render one frame from a body pose.
    Render(RenderArgs),
    /// Plan through waypoints, fly the expert and score the flight.
    Fly(FlyArgs),
    /// Generate a domain-randomized demonstration dataset.
    GenDataset(DatasetArgs),
    /// Score a flown states CSV against a desired trajectory.
    Metrics(MetricsArgs),
    /// Write a synthetic scene as PLY.
    SynthScene(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SceneArg {
    /// Overrides the configured scene PLY.
    #[arg(long)]
    pub scene: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub scene: SceneArg,
    /// Body position `x,y,z` in the world frame.
    #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub position: Vec<f64>,
    /// Body-to-world quaternion `x,y,z,w`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub orientation: Option<Vec<f64>>,
    /// Output image; `.ppm` writes PPM, anything else PNG.
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct FlyArgs {
    #[command(flatten)]
    pub scene: SceneArg,
    /// JSON waypoint list; overrides the configured one.
    #[arg(long)]
    pub waypoints: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub no_images: bool,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[command(flatten)]
    pub scene: SceneArg,
    #[arg(long)]
    pub waypoints: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub no_images: bool,
    /// Overrides `randomization.samples_per_step`.
    #[arg(long)]
    pub samples_per_step: Option<usize>,
    /// Overrides `randomization.rollout_duration`, s.
    #[arg(long)]
    pub rollout_duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub scene: SceneArg,
    /// States CSV of the flight to score.
    #[arg(long)]
    pub flown: PathBuf,
    /// Desired trajectory: a states CSV, or a JSON waypoint list that is
    /// planned at the configured rate.
    #[arg(long)]
    pub desired: PathBuf,
    /// Report path (default: `<output_dir>/metrics.json`).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON scene description; the built-in demo course when absent.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Overrides the description's Gaussians per square meter.
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(m) | Failure::Runtime(m)) = &f;
            eprintln!("error: {m}");
            ExitCode::from(f.code())
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), Failure> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path).map_err(config_err)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(w) = cli.workers {
        config.workers = Some(w);
    }
    match cli.command {
        Command::Render(args) => cmd_render(config, args),
        Command::Fly(args) => cmd_fly(config, args),
        Command::GenDataset(args) => cmd_gen_dataset(config, args),
        Command::Metrics(args) => cmd_metrics(config, args),
        Command::SynthScene(args) => cmd_synth_scene(config, args),
    }
}

fn workers(config: &Config) -> usize {
    config.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn apply_scene_override(config: &mut Config, scene: &SceneArg) {
    if let Some(p) = &scene.scene {
        config.scene.path = Some(p.clone());
    }
}

/// The configured scene with its alignment and background; empty when no
/// path is set.
fn load_scene(config: &Config) -> Result<SplatScene, Failure> {
    let mut scene = match &config.scene.path {
        Some(p) => load_ply(p).map_err(config_err)?,
        None => SplatScene::default(),
    };
    scene.alignment = config.alignment().map_err(config_err)?;
    scene.background = config.scene.background;
    Ok(scene)
}

fn plan(config: &Config, waypoints: &Path) -> Result<DesiredTrajectory, Failure> {
    let w = load_waypoints(waypoints).map_err(config_err)?;
    let spline = min_snap(&w).map_err(config_err)?;
    sample_trajectory(&spline, config.control_rate_hz, &config.params()).map_err(config_err)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| runtime_err(format!("creating {}: {e}", dir.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(runtime_err)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| runtime_err(format!("writing {}: {e}", path.display())))
}

fn write_log(path: &Path, log: &FlightLog) -> Result<(), Failure> {
    let file = fs::File::create(path).map_err(|e| runtime_err(format!("writing {}: {e}", path.display())))?;
    write_states_csv(std::io::BufWriter::new(file), log).map_err(|e| runtime_err(format!("writing {}: {e}", path.display())))
}

fn cmd_render(mut config: Config, args: RenderArgs) -> Result<(), Failure> {
    apply_scene_override(&mut config, &args.scene);
    config.validate().map_err(config_err)?;
    let position = match args.position.as_slice() {
        [x, y, z] => Vec3::new(*x, *y, *z),
        _ => return Err(Failure::Config("--position takes x,y,z".into())),
    };
    let orientation = match args.orientation.as_deref() {
        Some([x, y, z, w]) => Quat::new(*x, *y, *z, *w),
        Some(_) => return Err(Failure::Config("--orientation takes x,y,z,w".into())),
        None => Quat::IDENTITY,
    };
    if !position.iter().all(|v| v.is_finite()) || !orientation.is_finite() || !(orientation.norm() > 1e-9) {
        return Err(Failure::Config("pose must be finite with a non-zero quaternion".into()));
    }
    let scene = load_scene(&config)?;
    let k = config.intrinsics().map_err(config_err)?;
    let mount = config.mount().map_err(config_err)?;
    let renderer = ParallelRenderer::new(workers(&config)).map_err(runtime_err)?;
    let started = Instant::now();
    let image = renderer.render(&scene, &Pose::new(orientation.normalized(), position), &mount, &k);
    let elapsed = started.elapsed();
    write_image(&image, &args.output).map_err(|e| runtime_err(format!("writing {}: {e}", args.output.display())))?;
    eprintln!(
        "rendered {}x{} from {} gaussians in {:.1} ms ({} workers)",
        k.width,
        k.height,
        scene.len(),
        elapsed.as_secs_f64() * 1e3,
        renderer.workers()
    );
    Ok(())
}

fn cmd_fly(mut config: Config, args: FlyArgs) -> Result<(), Failure> {
    apply_scene_override(&mut config, &args.scene);
    if let Some(w) = args.waypoints {
        config.waypoints = Some(w);
    }
    if let Some(d) = args.output_dir {
        config.output_dir = d;
    }
    if args.no_images {
        config.render_images = false;
    }
    config.validate().map_err(config_err)?;
    let waypoints = config.waypoints.clone().ok_or_else(|| Failure::Config("no waypoints file given".into()))?;
    let traj = plan(&config, &waypoints)?;
    let scene = load_scene(&config)?;
    let params = config.params();
    let mpc = config.mpc_config().map_err(config_err)?;

    let started = Instant::now();
    let (run, failure) = closed_loop_run_partial(&traj.states[0], &params, &traj, traj.duration(), &mpc, 0);
    let flown = run.states.len();
    eprintln!("flew {} of {} steps in {:.2} s", run.inputs.len(), traj.steps(), started.elapsed().as_secs_f64());

    let out = &config.output_dir;
    create_dir(out)?;
    write_log(&out.join("states.csv"), &FlightLog::uniform(run.states.clone(), run.inputs.clone(), params, traj.start_time, traj.dt))?;
    write_log(&out.join("desired.csv"), &FlightLog::from_trajectory(&traj))?;

    let mut frames = 0;
    if config.render_images {
        let dir = out.join("frames");
        create_dir(&dir)?;
        let k = config.intrinsics().map_err(config_err)?;
        let mount = config.mount().map_err(config_err)?;
        let renderer = ParallelRenderer::new(workers(&config)).map_err(runtime_err)?;
        let started = Instant::now();
        for (i, x) in run.states.iter().enumerate() {
            let image = renderer.render(&scene, &x.pose(), &mount, &k);
            let path = dir.join(format!("frame_{i}.png"));
            write_image(&image, &path).map_err(|e| runtime_err(format!("writing {}: {e}", path.display())))?;
        }
        frames = flown;
        let secs = started.elapsed().as_secs_f64();
        eprintln!("rendered {frames} frames in {secs:.2} s ({:.1} frames/s)", frames as f64 / secs);
    }

    let scene_for_metrics = config.scene.path.as_ref().map(|_| &scene);
    let m = &config.metrics;
    let metrics = evaluate_flight(&run.states, &traj, scene_for_metrics, m.proximity_radius, m.drone_radius)
        .map_err(runtime_err)?;
    let report = FlightReport {
        seed: config.seed,
        partial: failure.is_some(),
        error: failure.as_ref().map(|e| e.to_string()),
        steps_planned: traj.steps(),
        steps_flown: run.inputs.len(),
        frames,
        metrics: MetricsJson::from(&metrics),
        config: config.clone(),
    };
    write_json(&out.join("report.json"), &report)?;
    eprintln!("tte {:.4} m, pp {:.3}", metrics.tte, metrics.pp);
    match failure {
        Some(e) => Err(Failure::Runtime(format!("expert failed, partial outputs in {}: {e}", out.display()))),
        None => Ok(()),
    }
}

fn cmd_gen_dataset(mut config: Config, args: DatasetArgs) -> Result<(), Failure> {
    apply_scene_override(&mut config, &args.scene);
    if let Some(w) = args.waypoints {
        config.waypoints = Some(w);
    }
    if let Some(d) = args.output_dir {
        config.output_dir = d;
    }
    if args.no_images {
        config.render_images = false;
    }
    if let Some(n) = args.samples_per_step {
        config.randomization.samples_per_step = n;
    }
    if let Some(t) = args.rollout_duration {
        config.randomization.rollout_duration = t;
    }
    config.validate().map_err(config_err)?;
    let waypoints = config.waypoints.clone().ok_or_else(|| Failure::Config("no waypoints file given".into()))?;
    let traj = plan(&config, &waypoints)?;
    let scene = load_scene(&config)?;
    let echo = match &config.scene.path {
        Some(p) => SceneEcho::from_file(p, &scene).map_err(config_err)?,
        None => SceneEcho::in_memory(&scene),
    };
    let request = DatasetRequest {
        spec: config.randomization_spec().map_err(config_err)?,
        mpc: config.mpc_config().map_err(config_err)?,
        camera_to_body: config.mount().map_err(config_err)?,
        intrinsics: config.intrinsics().map_err(config_err)?,
        output_dir: config.output_dir.clone(),
        render_images: config.render_images,
        workers: workers(&config),
    };
    let summary = generate_dataset(&scene, echo, &traj, &request).map_err(runtime_err)?;
    let c = &summary.manifest.counts;
    eprintln!(
        "{} rollouts ({} rejected), {} state/action pairs, {} images in {:.2} s: {:.1} rollouts/s, {:.0} pairs/s",
        c.rollouts,
        c.rejected,
        c.state_action_pairs,
        c.images,
        summary.elapsed.as_secs_f64(),
        summary.rollouts_per_second(),
        summary.pairs_per_second()
    );
    Ok(())
}

fn cmd_metrics(mut config: Config, args: MetricsArgs) -> Result<(), Failure> {
    apply_scene_override(&mut config, &args.scene);
    config.validate().map_err(config_err)?;
    let read_log = |path: &Path| -> Result<FlightLog, Failure> {
        let file = fs::File::open(path).map_err(|e| config_err(format!("reading {}: {e}", path.display())))?;
        read_states_csv(file).map_err(|e| config_err(format!("{}: {e}", path.display())))
    };
    let flown = read_log(&args.flown)?;
    let traj = match args.desired.extension().and_then(|e| e.to_str()) {
        Some("json") => plan(&config, &args.desired)?,
        _ => read_log(&args.desired)?.to_trajectory(),
    };
    let scene = match &config.scene.path {
        Some(_) => Some(load_scene(&config)?),
        None => None,
    };
    let m = &config.metrics;
    let metrics =
        evaluate_flight(&flown.states, &traj, scene.as_ref(), m.proximity_radius, m.drone_radius).map_err(runtime_err)?;
    let report = MetricsFileReport {
        seed: config.seed,
        flown: args.flown.display().to_string(),
        desired: args.desired.display().to_string(),
        scene: config.scene.path.as_ref().map(|p| p.display().to_string()),
        metrics: MetricsJson::from(&metrics),
    };
    let output = args.output.unwrap_or_else(|| config.output_dir.join("metrics.json"));
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_json(&output, &report)?;
    eprintln!("tte {:.4} m, pp {:.3}, {} collisions", metrics.tte, metrics.pp, metrics.collisions.len());
    Ok(())
}

fn cmd_synth_scene(config: Config, args: SynthArgs) -> Result<(), Failure> {
    let mut spec = match &args.spec {
        Some(p) => load_scene_spec(p).map_err(config_err)?,
        None => demo_scene_spec().to_spec(),
    };
    if let Some(d) = args.density {
        spec.density = d;
    }
    let scene = generate_synthetic_scene(&spec, config.seed).map_err(config_err)?;
    save_ply(&scene, &args.output).map_err(runtime_err)?;
    eprintln!("wrote {} gaussians to {} (seed {})", scene.len(), args.output.display(), config.seed);
    Ok(())
}
