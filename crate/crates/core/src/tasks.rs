//! Door-opening and drawer-pulling tasks with a flying gripper.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::{
    generate_cabinet, randomize_properties, ArticulationSpec, AssetError, CabinetConfig, Geometry, GroundTruthMotion,
    JointKind, PhysicalPropertyRanges,
};
use crate::scene::{
    ArticulationId, ArticulationMode, BodyCommand, BodyId, FreeBody, Scene, SceneConfig, SceneError, DEFAULT_BREAK_FORCE,
    DEFAULT_DT,
};
use crate::sensors::{look_at, render, world_primitives, CameraIntrinsics, SensorError, SensorFrame};
use crate::spatial::{Quat, Transform, Vec3};

pub const DEFAULT_SUCCESS_FRACTION: f64 = 0.9;
pub const DEFAULT_MAX_STEPS: usize = 2000;
/// Opposite-direction tolerance as a fraction of the joint range.
pub const DEFAULT_OPPOSITE_TOLERANCE: f64 = 0.02;
pub const BENCHMARK_DRAWER_SEEDS: u64 = 108;
pub const BENCHMARK_DOOR_SEEDS: u64 = 77;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("invalid task config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Sensor(#[from] SensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    OpenDoor,
    PullDrawer,
}

impl TaskKind {
    pub fn benchmark_seeds(self) -> std::ops::Range<u64> {
        match self {
            TaskKind::PullDrawer => 0..BENCHMARK_DRAWER_SEEDS,
            TaskKind::OpenDoor => 0..BENCHMARK_DOOR_SEEDS,
        }
    }

    fn joint_kind(self) -> JointKind {
        match self {
            TaskKind::OpenDoor => JointKind::Hinge,
            TaskKind::PullDrawer => JointKind::Slider,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConfig {
    /// Base cabinet; the part counts are drawn per seed.
    pub cabinet: CabinetConfig,
    /// Upper bound on the number of parts of the task's kind.
    pub max_parts: usize,
    /// Per-seed friction, damping and density draws; `None` keeps the generator's values.
    pub properties: Option<PhysicalPropertyRanges>,
    pub success_fraction: f64,
    pub max_steps: usize,
    pub dt: f64,
    /// Fraction of the joint range.
    pub opposite_tolerance: f64,
    pub break_force: f64,
    pub camera: CameraIntrinsics,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            cabinet: CabinetConfig { jitter: 0.15, ..CabinetConfig::default() },
            max_parts: 3,
            properties: Some(PhysicalPropertyRanges::default()),
            success_fraction: DEFAULT_SUCCESS_FRACTION,
            max_steps: DEFAULT_MAX_STEPS,
            dt: DEFAULT_DT,
            opposite_tolerance: DEFAULT_OPPOSITE_TOLERANCE,
            break_force: DEFAULT_BREAK_FORCE,
            camera: CameraIntrinsics::default(),
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<(), TaskError> {
        let bad = |m: &str| Err(TaskError::InvalidConfig(m.to_string()));
        if !(self.success_fraction > 0.0 && self.success_fraction <= 1.0) {
            return bad("success_fraction must lie in (0, 1]");
        }
        if self.max_steps == 0 || self.max_parts == 0 {
            return bad("max_steps and max_parts must be at least 1");
        }
        if !(self.opposite_tolerance >= 0.0 && self.opposite_tolerance < 1.0) {
            return bad("opposite_tolerance must lie in [0, 1)");
        }
        if !(self.break_force > 0.0) {
            return bad("break_force must be positive");
        }
        self.camera.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub seed: u64,
    /// The cabinet with its annotated limits.
    pub articulation: ArticulationSpec,
    pub target_joint: String,
    pub target_link: String,
    pub success_fraction: f64,
    pub max_steps: usize,
    /// Absolute tolerance (rad or m).
    pub opposite_tolerance: f64,
    pub motion: GroundTruthMotion,
    pub camera: CameraIntrinsics,
}

impl TaskSpec {
    pub fn range(&self) -> f64 {
        self.motion.limit[1] - self.motion.limit[0]
    }

    /// Normalized opening: 0 closed, 1 fully open.
    pub fn fraction(&self, q: f64) -> f64 {
        (q - self.motion.limit[0]) / self.range()
    }
}

/// The articulation is always index 0 and the gripper body index 0.
pub const CABINET: ArticulationId = ArticulationId(0);
pub const GRIPPER: BodyId = BodyId(0);

/// Builds a task and its scene: a procedural cabinet with the gripper
/// attached at the target handle.
///
/// The closed stop of the target joint sits two tolerances below the
/// annotated lower limit so motion in the opposite direction is observable.
pub fn make_task(kind: TaskKind, seed: u64, config: &TaskConfig) -> Result<(TaskSpec, Scene), TaskError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a5c_0000);
    let parts = rng.gen_range(1..=config.max_parts);
    let mut cab = config.cabinet.clone();
    match kind {
        TaskKind::PullDrawer => (cab.drawers, cab.doors) = (parts, 0),
        TaskKind::OpenDoor => (cab.drawers, cab.doors) = (0, parts),
    }
    let (mut spec, truth) = generate_cabinet(&cab, seed)?;
    if let Some(ranges) = &config.properties {
        spec = randomize_properties(&spec, ranges, seed)?;
    }
    let candidates: Vec<&GroundTruthMotion> = truth.iter().filter(|m| m.kind == kind.joint_kind()).collect();
    let motion = candidates[rng.gen_range(0..candidates.len())].clone();
    let range = motion.limit[1] - motion.limit[0];
    let tolerance = config.opposite_tolerance * range;

    let mut sim_spec = spec.clone();
    let joint = sim_spec.joint_mut(&motion.joint).expect("generated joint");
    joint.limit_lower -= 2.0 * tolerance;

    let mut scene = Scene::new(SceneConfig { dt: config.dt, ..SceneConfig::default() })?;
    let id = scene.add_articulation(&sim_spec, Transform::identity(), ArticulationMode::Dynamic)?;
    let mut state = scene.articulation(id)?.state.clone();
    let dof = scene.articulation(id)?.model.joint(&motion.joint).expect("joint").offset;
    state.q[dof] = motion.limit[0];
    scene.set_state(id, state)?;
    let gripper = scene.add_body(FreeBody::gripper(motion.grasp_world));
    scene.attach(gripper, id, &motion.link, config.break_force)?;

    let task = TaskSpec {
        kind,
        seed,
        articulation: spec,
        target_joint: motion.joint.clone(),
        target_link: motion.link.clone(),
        success_fraction: config.success_fraction,
        max_steps: config.max_steps,
        opposite_tolerance: tolerance,
        motion,
        camera: config.camera,
    };
    Ok((task, scene))
}

fn target_dof(task: &TaskSpec, scene: &Scene) -> usize {
    scene.articulations[CABINET.0].model.joint(&task.target_joint).expect("task joint").offset
}

/// Target joint position and velocity.
pub fn target_state(task: &TaskSpec, scene: &Scene) -> (f64, f64) {
    let a = &scene.articulations[CABINET.0];
    let k = target_dof(task, scene);
    (a.state.q[k], a.state.qd[k])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskProgress {
    pub fraction: f64,
    pub gripper_detached: bool,
    /// `None` while the episode is running.
    pub outcome: Option<Outcome>,
}

/// Classifies the current state: success first, then failure (opposite
/// motion or a lost grasp), then timeout.
pub fn evaluate_step(task: &TaskSpec, scene: &Scene, steps_used: usize) -> TaskProgress {
    let (q, _) = target_state(task, scene);
    let fraction = task.fraction(q);
    let detached = !scene.is_attached(GRIPPER);
    let outcome = if fraction >= task.success_fraction {
        Some(Outcome::Success)
    } else if fraction < -task.opposite_tolerance / task.range() || detached {
        Some(Outcome::Failure)
    } else if steps_used >= task.max_steps {
        Some(Outcome::Timeout)
    } else {
        None
    };
    TaskProgress { fraction, gripper_detached: detached, outcome }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub outcome: Outcome,
    pub final_fraction: f64,
    pub steps_used: usize,
    pub gripper_detached: bool,
}

/// A gripper command source driven by simulator state.
pub trait Policy {
    fn act(&mut self, task: &TaskSpec, scene: &Scene) -> BodyCommand<f64>;
}

/// Pulls along the ground-truth slider axis at constant speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawerPolicy {
    /// m/s.
    pub speed: f64,
    pub flip_axis: bool,
}

impl Default for DrawerPolicy {
    fn default() -> Self {
        DrawerPolicy { speed: 0.2, flip_axis: false }
    }
}

impl Policy for DrawerPolicy {
    fn act(&mut self, task: &TaskSpec, _scene: &Scene) -> BodyCommand<f64> {
        let sign = if self.flip_axis { -1.0 } else { 1.0 };
        BodyCommand::Velocity { linear: task.motion.direction * (sign * self.speed), angular: Vec3::zeros() }
    }
}

/// Pulls along the opening tangent, then servoes the gripper along the
/// circular arc about the hinge a fixed lead angle ahead of the door.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoorPolicy {
    /// m/s during the initial pull.
    pub pull_speed: f64,
    /// rad at which arc following takes over.
    pub switch_angle: f64,
    /// rad ahead of the current angle.
    pub lead: f64,
    pub flip_axis: bool,
}

impl Default for DoorPolicy {
    fn default() -> Self {
        DoorPolicy { pull_speed: 0.15, switch_angle: 0.08, lead: 0.3, flip_axis: false }
    }
}

/// `pose` rotated by `angle` about the line through `pivot` along `axis`.
pub fn rotate_about_axis(pose: &Transform<f64>, pivot: &Vec3<f64>, axis: &Vec3<f64>, angle: f64) -> Transform<f64> {
    let r = Quat::from_axis_angle_unchecked(axis, angle);
    Transform::new(r.mul(&pose.rotation), *pivot + r.rotate(&(pose.translation - *pivot)))
}

impl Policy for DoorPolicy {
    fn act(&mut self, task: &TaskSpec, scene: &Scene) -> BodyCommand<f64> {
        let (q, _) = target_state(task, scene);
        let sign = if self.flip_axis { -1.0 } else { 1.0 };
        let opened = q - task.motion.limit[0];
        if opened * sign < self.switch_angle {
            let tangent = rotate_about_axis(&Transform::identity(), &Vec3::zeros(), &task.motion.direction, opened)
                .rotation
                .rotate(&task.motion.approach);
            return BodyCommand::Velocity { linear: tangent * (sign * self.pull_speed), angular: Vec3::zeros() };
        }
        let goal = (q + sign * self.lead).clamp(task.motion.limit[0] - self.lead, task.motion.limit[1]);
        let target = rotate_about_axis(&task.motion.grasp_world, &task.motion.pivot, &task.motion.direction, goal - task.motion.limit[0]);
        BodyCommand::Pose { target }
    }
}

/// Step counter with a latched outcome: once decided, later states cannot
/// revoke it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMonitor {
    pub steps: usize,
    pub latched: Option<TaskProgress>,
}

impl EpisodeMonitor {
    pub fn update(&mut self, task: &TaskSpec, scene: &Scene) -> TaskProgress {
        if let Some(p) = self.latched {
            return p;
        }
        let p = evaluate_step(task, scene, self.steps);
        if p.outcome.is_some() {
            self.latched = Some(p);
        }
        p
    }

    pub fn result(&self) -> Option<TaskResult> {
        let p = self.latched?;
        Some(TaskResult {
            outcome: p.outcome.expect("latched progress has an outcome"),
            final_fraction: p.fraction,
            steps_used: self.steps,
            gripper_detached: p.gripper_detached,
        })
    }
}

/// Runs one episode to completion.
pub fn run_episode(task: &TaskSpec, scene: &mut Scene, policy: &mut dyn Policy) -> Result<TaskResult, TaskError> {
    let mut monitor = EpisodeMonitor::default();
    loop {
        if monitor.update(task, scene).outcome.is_some() {
            return Ok(monitor.result().expect("latched"));
        }
        scene.bodies[GRIPPER.0].command = policy.act(task, scene);
        scene.step()?;
        monitor.steps += 1;
    }
}

/// One line of the episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub kind: TaskKind,
    pub outcome: Outcome,
    pub final_fraction: f64,
    pub steps: usize,
}

impl EpisodeRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// Runs the heuristic policy of `kind` on every seed, in parallel.
pub fn run_suite(kind: TaskKind, seeds: &[u64], config: &TaskConfig) -> Result<Vec<EpisodeRecord>, TaskError> {
    seeds
        .par_iter()
        .map(|&seed| {
            let (task, mut scene) = make_task(kind, seed, config)?;
            let mut policy: Box<dyn Policy> = match kind {
                TaskKind::PullDrawer => Box::new(DrawerPolicy::default()),
                TaskKind::OpenDoor => Box::new(DoorPolicy::default()),
            };
            let r = run_episode(&task, &mut scene, policy.as_mut())?;
            Ok(EpisodeRecord { seed, kind, outcome: r.outcome, final_fraction: r.final_fraction, steps: r.steps_used })
        })
        .collect()
}

pub fn success_rate(records: &[EpisodeRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.outcome == Outcome::Success).count() as f64 / records.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Raw,
    Mobility,
    Visual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawObservation {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    /// Position then quaternion (w, x, y, z).
    pub gripper_pose: [f64; 7],
    /// Linear then angular velocity (world).
    pub gripper_twist: [f64; 6],
}

impl RawObservation {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.q.len() * 2 + 13);
        v.extend(&self.q);
        v.extend(&self.qd);
        v.extend(self.gripper_pose);
        v.extend(self.gripper_twist);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityObservation {
    pub pivot: [f64; 3],
    pub direction: [f64; 3],
    pub part_normal: [f64; 3],
    pub joint_position: f64,
    pub joint_velocity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualObservation {
    pub frame: SensorFrame,
    pub target_id: u32,
    pub target_mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "repr", rename_all = "snake_case")]
pub enum Observation {
    Raw(RawObservation),
    Mobility(MobilityObservation),
    Visual(VisualObservation),
}

pub fn observe(task: &TaskSpec, scene: &Scene, repr: Representation) -> Result<Observation, TaskError> {
    Ok(match repr {
        Representation::Raw => Observation::Raw(raw_observation(scene)),
        Representation::Mobility => Observation::Mobility(mobility_observation(task, scene)),
        Representation::Visual => Observation::Visual(visual_observation(task, scene)?),
    })
}

pub fn raw_observation(scene: &Scene) -> RawObservation {
    let a = &scene.articulations[CABINET.0];
    let g = &scene.bodies[GRIPPER.0];
    let (p, r) = (g.pose.translation, g.pose.rotation);
    let (v, w) = (g.linear_velocity, g.angular_velocity);
    RawObservation {
        q: a.state.q.clone(),
        qd: a.state.qd.clone(),
        gripper_pose: [p.x, p.y, p.z, r.w, r.x, r.y, r.z],
        gripper_twist: [v.x, v.y, v.z, w.x, w.y, w.z],
    }
}

pub fn mobility_observation(task: &TaskSpec, scene: &Scene) -> MobilityObservation {
    let a = &scene.articulations[CABINET.0];
    let poses = a.link_poses();
    let li = a.model.link_index(&task.target_link).expect("task link");
    let link = &a.model.links[li];
    let joint = link.joint.as_ref().expect("target link has a joint");
    let frame = poses[link.parent.expect("target link has a parent")].compose(&joint.origin);
    let direction = frame.rotation.rotate(&joint.axis);
    let (q, qd) = target_state(task, scene);
    MobilityObservation {
        pivot: frame.translation.to_array(),
        direction: direction.to_array(),
        part_normal: part_normal(task, &poses[li]).to_array(),
        joint_position: q,
        joint_velocity: qd,
    }
}

/// Area-weighted mean of the outward-facing primitive faces of the target
/// part (faces whose normal points along the part's front normal).
pub fn part_normal(task: &TaskSpec, link_pose: &Transform<f64>) -> Vec3<f64> {
    let front = link_pose.rotation.rotate(&task.motion.front_normal_local);
    let link = task.articulation.link(&task.target_link).expect("task link");
    let mut sum = Vec3::zeros();
    for s in &link.collision {
        let rot = link_pose.rotation.mul(&s.origin.rotation);
        let faces: Vec<(Vec3<f64>, f64)> = match &s.geometry {
            Geometry::Box { half_extents: h } => {
                let areas = [4.0 * h.y * h.z, 4.0 * h.x * h.z, 4.0 * h.x * h.y];
                let axes = [Vec3::unit_x(), Vec3::unit_y(), Vec3::unit_z()];
                axes.iter().zip(areas).flat_map(|(a, area)| [(*a, area), (-*a, area)]).collect()
            }
            Geometry::Cylinder { radius, .. } => {
                let area = std::f64::consts::PI * radius * radius;
                vec![(Vec3::unit_z(), area), (-Vec3::unit_z(), area)]
            }
            Geometry::Sphere { .. } => Vec::new(),
        };
        for (n, area) in faces {
            let n = rot.rotate(&n);
            if n.dot(&front) > 1e-9 {
                sum += n * area;
            }
        }
    }
    sum.try_normalize().unwrap_or(front)
}

/// Front camera pose: outside the cabinet front, slightly raised, looking at
/// its centre from twice its bounding radius.
pub fn front_camera(scene: &Scene) -> Transform<f64> {
    let prims = world_primitives(scene);
    let body: Vec<_> = prims.iter().filter(|p| p.id == 1).collect();
    let (mut lo, mut hi) = (Vec3::new(f64::MAX, f64::MAX, f64::MAX), Vec3::new(f64::MIN, f64::MIN, f64::MIN));
    for p in &body {
        let c = p.pose.translation;
        let r = p.geometry.bounding_radius();
        lo = Vec3::new(lo.x.min(c.x - r), lo.y.min(c.y - r), lo.z.min(c.z - r));
        hi = Vec3::new(hi.x.max(c.x + r), hi.y.max(c.y + r), hi.z.max(c.z + r));
    }
    let center = (lo + hi) * 0.5;
    let radius = ((hi - lo) * 0.5).norm();
    let dir = Vec3::new(1.0, 0.15, 0.35).try_normalize().expect("nonzero");
    look_at(&(center + dir * (2.0 * radius)), &center, &Vec3::unit_z())
}

pub fn visual_observation(task: &TaskSpec, scene: &Scene) -> Result<VisualObservation, TaskError> {
    let frame = render(scene, &front_camera(scene), &task.camera)?;
    let li = scene.articulations[CABINET.0].model.link_index(&task.target_link).expect("task link");
    let target_id = li as u32 + 1;
    let target_mask = frame.segmentation.iter().map(|&s| s == target_id).collect();
    Ok(VisualObservation { frame, target_id, target_mask })
}
