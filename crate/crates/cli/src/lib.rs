//! Command-line entry points. Every command writes its machine-readable
//! outputs and a `manifest.json` into the `--out` directory.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mobilisim::asset::{apply_mobility_sidecar, bundled, parse_urdf, randomize_properties, ArticulationSpec, MobilityDocument, PhysicalPropertyRanges};
use mobilisim::metrics::{average_precision, motion_metrics, parse_json_lines, total_loss, DetectionRecord, MotionRecord};
use mobilisim::profile::{empty_scene, profile};
use mobilisim::scene::{ArticulationMode, Scene, SceneConfig};
use mobilisim::sensors::{lift_point_cloud, render, sample_hemisphere_views, world_primitives, CameraIntrinsics};
use mobilisim::tasks::{make_task, run_episode, success_rate, DoorPolicy, DrawerPolicy, EpisodeRecord, Policy, TaskConfig, TaskKind};
use mobilisim::{Transform, Vec3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(name = "mobilisim", version, about = "Articulated-object simulation, tasks and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML or JSON file with default option values; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory [default: mobilisim-out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for every stochastic choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a URDF asset, optionally with a mobility sidecar.
    Validate(AssetArgs),
    /// Step an asset under gravity and record its state.
    Simulate(SimulateArgs),
    /// Run one heuristic episode.
    RunTask(TaskArgs),
    /// Run heuristic episodes over consecutive seeds.
    Bench(BenchArgs),
    /// Render depth/normal/segmentation views and lifted point clouds.
    Render(RenderArgs),
    /// Serve a scene over TCP.
    Serve(ServeArgs),
    /// Motion-attribute losses and metrics from a JSON-lines file.
    EvalMotion(EvalMotionArgs),
    /// Per-category average precision from JSON-lines files.
    EvalDetection(EvalDetectionArgs),
    /// Measure stepping and rendering throughput.
    Profile(ProfileArgs),
}

#[derive(Debug, Args)]
pub struct AssetArgs {
    /// URDF file [default: bundled sample cabinet].
    #[arg(long)]
    pub asset: Option<PathBuf>,
    /// Mobility sidecar JSON.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub asset: AssetArgs,
    /// Time step in seconds [default: 0.002].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Number of steps [default: 1000].
    #[arg(long)]
    pub steps: Option<u64>,
    /// Record every k-th step [default: 10].
    #[arg(long)]
    pub record_every: Option<u64>,
    /// Draw friction, damping and density from the default ranges using --seed.
    #[arg(long)]
    pub randomize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Drawer,
    Door,
}

impl From<Kind> for TaskKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Drawer => TaskKind::PullDrawer,
            Kind::Door => TaskKind::OpenDoor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyChoice {
    /// Pull along the ground-truth motion direction.
    Heuristic,
    /// Push against it; every episode should fail.
    Reversed,
}

#[derive(Debug, Args)]
pub struct TaskArgs {
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, value_enum)]
    pub policy: Option<PolicyChoice>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    /// Number of seeds, starting at --seed [default: 100].
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, value_enum)]
    pub policy: Option<PolicyChoice>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    /// Image width and height in pixels [default: 512].
    #[arg(long)]
    pub resolution: Option<u32>,
    /// Hemisphere views [default: 20].
    #[arg(long)]
    pub views: Option<usize>,
    /// Points sampled per view [default: 10000].
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub asset: AssetArgs,
    /// Serve a task scene instead of a bare asset.
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    /// Bind address [default: $MOBILISIM_ADDR or 127.0.0.1:7511].
    #[arg(long)]
    pub addr: Option<String>,
    #[arg(long)]
    pub sim_rate: Option<f64>,
    #[arg(long)]
    pub broadcast_rate: Option<f64>,
    #[arg(long)]
    pub realtime_factor: Option<f64>,
    /// Stop after this many wall-clock seconds [default: run until killed].
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalMotionArgs {
    /// JSON lines of {id, gt, pred}.
    #[arg(long)]
    pub input: PathBuf,
    /// Largest slider range in the dataset, metres.
    #[arg(long)]
    pub max_slider_range: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalDetectionArgs {
    /// Ground-truth JSON lines of {image_id, category, mask_rle}.
    #[arg(long)]
    pub gt: PathBuf,
    /// Prediction JSON lines of {image_id, category, mask_rle, score}.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub iou: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub renders: Option<usize>,
    #[arg(long)]
    pub resolution: Option<u32>,
}

/// Option values read from `--config`. Unknown keys are errors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub asset: Option<PathBuf>,
    pub sidecar: Option<PathBuf>,
    pub dt: Option<f64>,
    pub steps: Option<u64>,
    pub record_every: Option<u64>,
    pub kind: Option<Kind>,
    pub policy: Option<PolicyChoice>,
    pub n: Option<u64>,
    pub resolution: Option<u32>,
    pub views: Option<usize>,
    pub points: Option<usize>,
    pub addr: Option<String>,
    pub sim_rate: Option<f64>,
    pub broadcast_rate: Option<f64>,
    pub realtime_factor: Option<f64>,
    pub duration: Option<f64>,
    pub max_slider_range: Option<f64>,
    pub iou: Option<f64>,
    pub renders: Option<usize>,
}

pub fn load_file_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    if is_json {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub outputs: Vec<PathBuf>,
    pub wall_time_s: f64,
    pub versions: Value,
    pub exit_code: i32,
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

struct Run {
    out: PathBuf,
    outputs: Vec<PathBuf>,
    config: Value,
    seeds: Vec<u64>,
}

impl Run {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.out.join(name);
        write_atomic(&p, bytes)?;
        self.outputs.push(p.clone());
        Ok(p)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }
}

fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>, default: T) -> T {
    flag.clone().or_else(|| file.clone()).unwrap_or(default)
}

fn load_asset(asset: &Option<PathBuf>, sidecar: &Option<PathBuf>) -> Result<ArticulationSpec> {
    let spec = match asset {
        Some(p) => parse_urdf(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?,
        None => parse_urdf(bundled::CABINET_URDF)?,
    };
    let sidecar_text = match (sidecar, asset) {
        (Some(p), _) => Some(fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
        (None, None) => Some(bundled::CABINET_SIDECAR.to_string()),
        (None, Some(_)) => None,
    };
    match sidecar_text {
        Some(t) => {
            let doc = MobilityDocument::from_json(&t)?;
            Ok(apply_mobility_sidecar(&spec, &doc)?)
        }
        None => Ok(spec),
    }
}

fn task_config(dt: f64) -> TaskConfig {
    TaskConfig { dt, ..TaskConfig::default() }
}

fn policy_for(kind: TaskKind, choice: PolicyChoice) -> Box<dyn Policy> {
    let flip = choice == PolicyChoice::Reversed;
    match kind {
        TaskKind::PullDrawer => Box::new(DrawerPolicy { flip_axis: flip, ..Default::default() }),
        TaskKind::OpenDoor => Box::new(DoorPolicy { flip_axis: flip, ..Default::default() }),
    }
}

fn episode(kind: TaskKind, seed: u64, cfg: &TaskConfig, choice: PolicyChoice) -> Result<EpisodeRecord> {
    let (task, mut scene) = make_task(kind, seed, cfg)?;
    let mut policy = policy_for(kind, choice);
    let r = run_episode(&task, &mut scene, policy.as_mut())?;
    Ok(EpisodeRecord { seed, kind, outcome: r.outcome, final_fraction: r.final_fraction, steps: r.steps_used })
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32> {
    let start = Instant::now();
    let file = match &cli.config {
        Some(p) => load_file_config(p)?,
        None => FileConfig::default(),
    };
    let out = pick(&cli.out, &file.out, PathBuf::from("mobilisim-out"));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let seed = pick(&cli.seed, &file.seed, 0);
    let mut run = Run { out, outputs: Vec::new(), config: Value::Null, seeds: vec![seed] };

    let (name, code) = match &cli.command {
        Command::Validate(a) => ("validate", cmd_validate(a, &file, &mut run)?),
        Command::Simulate(a) => ("simulate", cmd_simulate(a, &file, seed, &mut run)?),
        Command::RunTask(a) => ("run-task", cmd_run_task(a, &file, seed, &mut run)?),
        Command::Bench(a) => ("bench", cmd_bench(a, &file, seed, &mut run)?),
        Command::Render(a) => ("render", cmd_render(a, &file, seed, &mut run)?),
        Command::Serve(a) => ("serve", cmd_serve(a, &file, seed, &mut run)?),
        Command::EvalMotion(a) => ("eval-motion", cmd_eval_motion(a, &file, &mut run)?),
        Command::EvalDetection(a) => ("eval-detection", cmd_eval_detection(a, &file, &mut run)?),
        Command::Profile(a) => ("profile", cmd_profile(a, &file, seed, &mut run)?),
    };

    let manifest = RunManifest {
        command: name.to_string(),
        config: run.config.clone(),
        seeds: run.seeds.clone(),
        outputs: run.outputs.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
        versions: json!({"mobilisim": mobilisim::VERSION, "mobilisim-cli": env!("CARGO_PKG_VERSION")}),
        exit_code: code,
    };
    let path = run.out.join("manifest.json");
    write_atomic(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(code)
}

fn cmd_validate(a: &AssetArgs, file: &FileConfig, run: &mut Run) -> Result<i32> {
    let asset = a.asset.clone().or_else(|| file.asset.clone());
    let sidecar = a.sidecar.clone().or_else(|| file.sidecar.clone());
    run.config = json!({"asset": asset, "sidecar": sidecar});
    run.seeds.clear();
    match load_asset(&asset, &sidecar) {
        Ok(spec) => {
            println!("valid: `{}` with {} links, {} joints, {} DOF", spec.name, spec.links.len(), spec.joints.len(), spec.dof());
            run.write_json("validation.json", &json!({"valid": true, "name": spec.name, "links": spec.links.len(), "joints": spec.joints.len(), "dof": spec.dof()}))?;
            Ok(0)
        }
        Err(e) => {
            eprintln!("invalid: {e:#}");
            run.write_json("validation.json", &json!({"valid": false, "error": format!("{e:#}")}))?;
            Ok(1)
        }
    }
}

fn cmd_simulate(a: &SimulateArgs, file: &FileConfig, seed: u64, run: &mut Run) -> Result<i32> {
    let asset = a.asset.asset.clone().or_else(|| file.asset.clone());
    let sidecar = a.asset.sidecar.clone().or_else(|| file.sidecar.clone());
    let dt = pick(&a.dt, &file.dt, mobilisim::scene::DEFAULT_DT);
    let steps = pick(&a.steps, &file.steps, 1000);
    let every = pick(&a.record_every, &file.record_every, 10).max(1);
    run.config = json!({"asset": asset, "sidecar": sidecar, "dt": dt, "steps": steps, "record_every": every, "randomize": a.randomize});
    let mut spec = load_asset(&asset, &sidecar)?;
    if a.randomize {
        spec = randomize_properties(&spec, &PhysicalPropertyRanges::default(), seed)?;
    } else {
        run.seeds.clear();
    }
    let mut scene = Scene::new(SceneConfig { dt, ..SceneConfig::default() })?;
    scene.add_articulation(&spec, Transform::identity(), ArticulationMode::Dynamic)?;
    let mut lines = String::new();
    for k in 0..=steps {
        if k % every == 0 {
            lines.push_str(&serde_json::to_string(&scene.snapshot())?);
            lines.push('\n');
        }
        if k < steps {
            scene.step()?;
        }
    }
    run.write("trajectory.jsonl", lines.as_bytes())?;
    println!("simulated {steps} steps of `{}` ({:.3} s)", spec.name, scene.time());
    Ok(0)
}

fn cmd_run_task(a: &TaskArgs, file: &FileConfig, seed: u64, run: &mut Run) -> Result<i32> {
    let kind = pick(&a.kind, &file.kind, Kind::Drawer);
    let dt = pick(&a.dt, &file.dt, mobilisim::scene::DEFAULT_DT);
    let choice = pick(&a.policy, &file.policy, PolicyChoice::Heuristic);
    run.config = json!({"kind": kind, "dt": dt, "policy": choice});
    let rec = episode(kind.into(), seed, &task_config(dt), choice)?;
    run.write("episode.json", format!("{}\n", rec.to_json_line()).as_bytes())?;
    println!("{:?} seed {seed}: {:?} at {:.1}% of range after {} steps", kind, rec.outcome, 100.0 * rec.final_fraction, rec.steps);
    Ok(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub kind: Kind,
    pub policy: PolicyChoice,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
}

fn cmd_bench(a: &BenchArgs, file: &FileConfig, seed: u64, run: &mut Run) -> Result<i32> {
    let kind = pick(&a.kind, &file.kind, Kind::Drawer);
    let n = pick(&a.n, &file.n, 100);
    let dt = pick(&a.dt, &file.dt, mobilisim::scene::DEFAULT_DT);
    let choice = pick(&a.policy, &file.policy, PolicyChoice::Heuristic);
    run.config = json!({"kind": kind, "n": n, "dt": dt, "policy": choice});
    let seeds: Vec<u64> = (seed..seed + n).collect();
    run.seeds = seeds.clone();
    let cfg = task_config(dt);
    let records: Vec<EpisodeRecord> = seeds.par_iter().map(|&s| episode(kind.into(), s, &cfg, choice)).collect::<Result<_>>()?;
    let log: String = records.iter().map(|r| r.to_json_line() + "\n").collect();
    run.write("episodes.jsonl", log.as_bytes())?;
    let successes = records.iter().filter(|r| r.outcome == mobilisim::tasks::Outcome::Success).count();
    let summary = BenchSummary { kind, policy: choice, episodes: records.len(), successes, success_rate: success_rate(&records) };
    run.write_json("summary.json", &summary)?;
    println!("{:?}: {}/{} successful ({:.1}%)", kind, successes, records.len(), 100.0 * summary.success_rate);
    Ok(0)
}

fn intrinsics_for(resolution: u32) -> CameraIntrinsics {
    let d = CameraIntrinsics::default();
    let s = resolution as f64 / d.width as f64;
    CameraIntrinsics { width: resolution, height: resolution, fx: d.fx * s, fy: d.fy * s, cx: d.cx * s, cy: d.cy * s }
}

fn cmd_render(a: &RenderArgs, file: &FileConfig, seed: u64, run: &mut Run) -> Result<i32> {
    let kind = pick(&a.kind, &file.kind, Kind::Drawer);
    let res = pick(&a.resolution, &file.resolution, mobilisim::sensors::DEFAULT_RESOLUTION);
    let views = pick(&a.views, &file.views, 20);
    let points = pick(&a.points, &file.points, 10_000);
    run.config = json!({"kind": kind, "resolution": res, "views": views, "points": points});
    let (_, scene) = make_task(kind.into(), seed, &TaskConfig::default())?;
    let intr = intrinsics_for(res);
    let prims = world_primitives(&scene);
    let (mut lo, mut hi) = (Vec3::new(f64::MAX, f64::MAX, f64::MAX), Vec3::new(f64::MIN, f64::MIN, f64::MIN));
    for p in prims.iter().filter(|p| p.id == 1) {
        let t = p.pose.translation;
        let r = p.geometry.bounding_radius();
        lo = Vec3::new(lo.x.min(t.x - r), lo.y.min(t.y - r), lo.z.min(t.z - r));
        hi = Vec3::new(hi.x.max(t.x + r), hi.y.max(t.y + r), hi.z.max(t.z + r));
    }
    let center = (lo + hi) * 0.5;
    let radius = 1.5 * (hi - lo).norm();
    let cams = sample_hemisphere_views(&center, radius, views, seed)?;
    let mut cloud = String::new();
    for (k, cam) in cams.iter().enumerate() {
        let frame = render(&scene, cam, &intr)?;
        let mut bytes = Vec::new();
        frame.write_to(&mut bytes)?;
        run.write(&format!("view_{k:02}.msf"), &bytes)?;
        if frame.foreground_count() > 0 {
            for p in lift_point_cloud(&frame, &intr, points, seed.wrapping_add(k as u64))? {
                cloud.push_str(&serde_json::to_string(&json!({"view": k, "xyz": p.xyz, "link": p.link, "pixel": p.pixel}))?);
                cloud.push('\n');
            }
        }
    }
    run.write("points.jsonl", cloud.as_bytes())?;
    run.write_json("cameras.json", &json!({"intrinsics": intr, "poses": cams}))?;
    println!("rendered {views} views at {res}x{res}");
    Ok(0)
}

fn cmd_serve(a: &ServeArgs, file: &FileConfig, seed: u64, run: &mut Run) -> Result<i32> {
    use mobilisim_server::{resolve_addr, serve, SessionConfig};
    let kind = a.kind.or(file.kind);
    let asset = a.asset.asset.clone().or_else(|| file.asset.clone());
    let sidecar = a.asset.sidecar.clone().or_else(|| file.sidecar.clone());
    let addr = resolve_addr(a.addr.as_deref().or(file.addr.as_deref()));
    let d = SessionConfig::default();
    let cfg = SessionConfig {
        sim_rate: pick(&a.sim_rate, &file.sim_rate, d.sim_rate),
        state_broadcast_rate: pick(&a.broadcast_rate, &file.broadcast_rate, d.state_broadcast_rate),
        realtime_factor: pick(&a.realtime_factor, &file.realtime_factor, d.realtime_factor),
    };
    let duration = a.duration.or(file.duration);
    run.config = json!({"kind": kind, "asset": asset, "sidecar": sidecar, "addr": addr, "session": cfg, "duration": duration});
    let scene = match kind {
        Some(k) => make_task(k.into(), seed, &TaskConfig { dt: cfg.dt(), ..TaskConfig::default() })?.1,
        None => {
            run.seeds.clear();
            let spec = load_asset(&asset, &sidecar)?;
            let mut s = Scene::new(SceneConfig { dt: cfg.dt(), ..SceneConfig::default() })?;
            s.add_articulation(&spec, Transform::identity(), ArticulationMode::Dynamic)?;
            s
        }
    };
    let handle = serve(scene, cfg, &addr)?;
    println!("serving on {}", handle.local_addr());
    run.write_json("server.json", &json!({"address": handle.local_addr().to_string()}))?;
    match duration {
        Some(secs) => {
            std::thread::sleep(Duration::from_secs_f64(secs.max(0.0)));
            println!("stopping at simulation time {:.3} s", handle.sim_time());
            handle.shutdown();
            Ok(0)
        }
        None => loop {
            std::thread::sleep(Duration::from_secs(3600));
        },
    }
}

fn cmd_eval_motion(a: &EvalMotionArgs, file: &FileConfig, run: &mut Run) -> Result<i32> {
    let range = a.max_slider_range.or(file.max_slider_range);
    run.config = json!({"input": a.input, "max_slider_range": range});
    run.seeds.clear();
    let Some(range) = range else { bail!("--max-slider-range is required") };
    let text = fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let records: Vec<MotionRecord> = parse_json_lines(&text)?;
    let gt: Vec<_> = records.iter().map(|r| r.gt).collect();
    let pred: Vec<_> = records.iter().map(|r| r.pred).collect();
    let report = motion_metrics(&pred, &gt, range)?;
    let loss = total_loss(&pred, &gt)?;
    run.write_json("motion_report.json", &json!({"instances": records.len(), "metrics": report, "loss": loss}))?;
    println!(
        "H acc {:.1}%  S acc {:.1}%  H_o {:.4} m  H_a {:.2} deg  S_a {:.2} deg  door {:.2} deg  drawer {:.4} m",
        report.h_acc, report.s_acc, report.h_o_err_m, report.h_a_err_deg, report.s_a_err_deg, report.door_err_deg, report.drawer_err_m
    );
    Ok(0)
}

fn read_detections(path: &Path) -> Result<Vec<mobilisim::metrics::DetectionInstance>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let recs: Vec<DetectionRecord> = parse_json_lines(&text)?;
    Ok(recs.iter().map(DetectionRecord::to_instance).collect::<Result<_, _>>()?)
}

fn cmd_eval_detection(a: &EvalDetectionArgs, file: &FileConfig, run: &mut Run) -> Result<i32> {
    let iou = pick(&a.iou, &file.iou, 0.5);
    run.config = json!({"gt": a.gt, "pred": a.pred, "iou": iou});
    run.seeds.clear();
    let gt = read_detections(&a.gt)?;
    let pred = read_detections(&a.pred)?;
    if pred.iter().any(|p| p.score.is_none()) {
        bail!("every prediction needs a score");
    }
    let report = average_precision(&pred, &gt, iou);
    run.write_json("ap_report.json", &report)?;
    for (cat, ap) in &report.per_category {
        match ap {
            Some(v) => println!("{cat}: AP {:.1}", 100.0 * v),
            None => println!("{cat}: no ground truth"),
        }
    }
    if let Some(m) = report.map {
        println!("mAP {:.1}", 100.0 * m);
    }
    Ok(0)
}

fn cmd_profile(a: &ProfileArgs, file: &FileConfig, seed: u64, run: &mut Run) -> Result<i32> {
    let steps = pick(&a.steps, &file.steps.map(|s| s as usize), 5000);
    let renders = pick(&a.renders, &file.renders, 10);
    let res = pick(&a.resolution, &file.resolution, mobilisim::sensors::DEFAULT_RESOLUTION);
    run.config = json!({"steps": steps, "renders": renders, "resolution": res});
    let (scene, cam) = mobilisim::profile::drawer_scene(seed)?;
    let intr = intrinsics_for(res);
    let task = profile(&scene, steps, renders, &cam, &intr)?;
    let empty = profile(&empty_scene()?, steps, 0, &cam, &intr)?;
    run.write_json("profile.json", &json!({"drawer": task, "empty": empty}))?;
    println!("drawer scene: {:.0} steps/s, {:.1} renders/s at {res}x{res}", task.steps_per_sec, task.renders_per_sec);
    println!("empty scene: {:.0} steps/s", empty.steps_per_sec);
    Ok(0)
}
