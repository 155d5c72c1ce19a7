//! Scenes: articulations (dynamic or kinematic), free rigid bodies such as
//! the flying gripper, and rigid attachments between them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::{ArticulationSpec, CollisionShape, Geometry, ValidationError};
use crate::control::{ControlError, Controller, ControllerSpec};
use crate::dynamics::{BodyLoad, DynamicsError};
use crate::model::{default_gravity, ArticulationState, Model};
use crate::scalar::Real;
use crate::spatial::{symmetric_min_eigenvalue, Quat, SpatialInertia, SpatialVector, Transform, Vec3};

pub const DEFAULT_DT: f64 = 1.0 / 500.0;
pub const MAX_DT: f64 = 0.1;
pub const DEFAULT_BREAK_FORCE: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    SemiImplicitEuler,
    /// Kick-drift-kick with a predictor-corrector for velocity-dependent terms.
    #[default]
    VelocityVerlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArticulationMode {
    #[default]
    Dynamic,
    Kinematic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub gravity: [f64; 3],
    pub dt: f64,
    pub integrator: Integrator,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let g: Vec3<f64> = default_gravity();
        SceneConfig { gravity: g.to_array(), dt: DEFAULT_DT, integrator: Integrator::default() }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(SceneError::InvalidConfig(format!("dt {} outside (0, {MAX_DT}]", self.dt)));
        }
        if self.gravity.iter().any(|g| !g.is_finite()) {
            return Err(SceneError::InvalidConfig("gravity must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error("articulation `{0}` is not in kinematic mode")]
    WrongMode(String),
    #[error("no articulation with index {0}")]
    UnknownArticulation(usize),
    #[error("no body with index {0}")]
    UnknownBody(usize),
    #[error("unknown link `{0}`")]
    UnknownLink(String),
    #[error("vector has {got} entries, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("body `{0}` is already attached")]
    AlreadyAttached(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArticulationId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BodyId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttachmentId(pub usize);

/// A link of an articulation or a free body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkRef {
    Articulation { articulation: usize, link: usize },
    Body(usize),
}

#[derive(Debug, Clone)]
pub struct ArticulationInstance<T> {
    pub model: Model<T>,
    pub state: ArticulationState<T>,
    pub mode: ArticulationMode,
    /// Generalized forces applied every step until changed.
    pub applied: Vec<T>,
    pub controllers: Vec<Controller<T>>,
    pub last_qdd: Vec<T>,
    kinematic_target: Option<Vec<T>>,
}

impl<T: Real> ArticulationInstance<T> {
    pub fn name(&self) -> &str {
        &self.model.name
    }

    pub fn link_poses(&self) -> Vec<Transform<T>> {
        self.model.link_poses(&self.state.q).expect("state matches model")
    }
}

/// Commanded behaviour of a free body, converted to a wrench each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BodyCommand<T> {
    Idle,
    /// World-frame force and torque at the body origin.
    Wrench { force: Vec3<T>, torque: Vec3<T> },
    /// World-frame twist of the body origin, tracked with damping gains.
    Velocity { linear: Vec3<T>, angular: Vec3<T> },
    /// Pose tracked with P-D gains.
    Pose { target: Transform<T> },
}

/// Gains and saturation of a free body's actuator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorGains {
    /// N per m/s.
    pub linear_damping: f64,
    /// N·m per rad/s.
    pub angular_damping: f64,
    /// N per m.
    pub linear_stiffness: f64,
    /// N·m per rad.
    pub angular_stiffness: f64,
    pub max_force: f64,
    pub max_torque: f64,
}

impl Default for ActuatorGains {
    fn default() -> Self {
        ActuatorGains {
            linear_damping: 400.0,
            angular_damping: 40.0,
            linear_stiffness: 2000.0,
            angular_stiffness: 200.0,
            max_force: 250.0,
            max_torque: 50.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FreeBody<T> {
    pub name: String,
    /// Inertia in the body frame.
    pub inertia: SpatialInertia<T>,
    pub pose: Transform<T>,
    /// World-frame angular velocity.
    pub angular_velocity: Vec3<T>,
    /// World-frame velocity of the body origin.
    pub linear_velocity: Vec3<T>,
    pub gravity_enabled: bool,
    pub command: BodyCommand<T>,
    pub gains: ActuatorGains,
    pub collision: Vec<CollisionShape>,
    /// World-frame (angular, origin-point linear) acceleration of the last step.
    pub last_acceleration: SpatialVector<T>,
    /// Actuator wrench (torque, force) at the body origin used in the last step.
    pub last_wrench: SpatialVector<T>,
}

impl<T: Real> FreeBody<T> {
    /// A 0.6 kg flying gripper with a small box collision shape and gravity disabled.
    pub fn gripper(pose: Transform<T>) -> Self {
        let half = Vec3::new(0.02, 0.04, 0.03);
        let shape = Geometry::Box { half_extents: half };
        let density = 0.6 / shape.volume();
        FreeBody {
            name: "gripper".into(),
            inertia: shape.solid_inertia(density).cast(),
            pose,
            angular_velocity: Vec3::zeros(),
            linear_velocity: Vec3::zeros(),
            gravity_enabled: false,
            command: BodyCommand::Idle,
            gains: ActuatorGains::default(),
            collision: vec![CollisionShape { geometry: shape, origin: Transform::identity() }],
            last_acceleration: SpatialVector::zeros(),
            last_wrench: SpatialVector::zeros(),
        }
    }

    pub fn com_world(&self) -> Vec3<T> {
        self.pose.transform_point(&self.inertia.com)
    }

    /// Spatial velocity referenced to the world origin.
    pub fn spatial_velocity(&self) -> SpatialVector<T> {
        let w = self.angular_velocity;
        SpatialVector::new(w, self.linear_velocity - w.cross(&self.pose.translation))
    }

    /// Actuator wrench at the body origin for the current command. A free
    /// body's gains are capped at their deadbeat values for step `dt`.
    fn actuator_wrench(&self, dt: Option<T>) -> (Vec3<T>, Vec3<T>) {
        let g = self.effective_gains(dt);
        let (f, t) = match self.command {
            BodyCommand::Idle => (Vec3::zeros(), Vec3::zeros()),
            BodyCommand::Wrench { force, torque } => (force, torque),
            BodyCommand::Velocity { linear, angular } => (
                (linear - self.linear_velocity) * T::lit(g.linear_damping),
                (angular - self.angular_velocity) * T::lit(g.angular_damping),
            ),
            BodyCommand::Pose { target } => {
                let e_pos = target.translation - self.pose.translation;
                let e_rot = target.rotation.mul(&self.pose.rotation.conjugate()).to_rotation_vector();
                (
                    e_pos * T::lit(g.linear_stiffness) - self.linear_velocity * T::lit(g.linear_damping),
                    e_rot * T::lit(g.angular_stiffness) - self.angular_velocity * T::lit(g.angular_damping),
                )
            }
        };
        (saturate(f, T::lit(g.max_force)), saturate(t, T::lit(g.max_torque)))
    }

    fn effective_gains(&self, dt: Option<T>) -> ActuatorGains {
        let mut g = self.gains;
        if let Some(dt) = dt.map(T::as_f64) {
            let m = self.inertia.mass.as_f64();
            let i = symmetric_min_eigenvalue(&self.inertia.inertia).as_f64();
            g.linear_damping = g.linear_damping.min(m / dt);
            g.angular_damping = g.angular_damping.min(i / dt);
            g.linear_stiffness = g.linear_stiffness.min(0.25 * m / (dt * dt));
            g.angular_stiffness = g.angular_stiffness.min(0.25 * i / (dt * dt));
        }
        g
    }
}

fn saturate<T: Real>(v: Vec3<T>, limit: T) -> Vec3<T> {
    let n = v.norm();
    if n > limit {
        v * (limit / n)
    } else {
        v
    }
}

/// World-origin-referenced wrench of a force applied at `point`.
fn wrench_at<T: Real>(point: &Vec3<T>, force: Vec3<T>, torque: Vec3<T>) -> SpatialVector<T> {
    SpatialVector::new(torque + point.cross(&force), force)
}

/// Rigid attachment of a free body to an articulation link, with the
/// relative pose frozen at creation.
#[derive(Debug, Clone)]
pub struct AttachmentConstraint<T> {
    pub body: usize,
    pub articulation: usize,
    pub link: usize,
    /// Body pose in the link frame.
    pub relative: Transform<T>,
    pub break_force: T,
    pub active: bool,
    /// Constraint force on the body (world frame, N) from the last step.
    pub last_force: Vec3<T>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub time: f64,
    /// Attachments that broke during this step.
    pub detached: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Scene<T = f64> {
    pub config: SceneConfig,
    pub articulations: Vec<ArticulationInstance<T>>,
    pub bodies: Vec<FreeBody<T>>,
    pub attachments: Vec<AttachmentConstraint<T>>,
    time: T,
    steps: u64,
}

impl<T: Real> Scene<T> {
    pub fn new(config: SceneConfig) -> Result<Self, SceneError> {
        config.validate()?;
        Ok(Scene { config, articulations: Vec::new(), bodies: Vec::new(), attachments: Vec::new(), time: T::zero(), steps: 0 })
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn step_count(&self) -> u64 {
        self.steps
    }

    pub fn dt(&self) -> T {
        T::lit(self.config.dt)
    }

    pub fn gravity(&self) -> Vec3<T> {
        Vec3::from_f64(self.config.gravity[0], self.config.gravity[1], self.config.gravity[2])
    }

    pub fn add_articulation(
        &mut self,
        spec: &ArticulationSpec,
        base: Transform<T>,
        mode: ArticulationMode,
    ) -> Result<ArticulationId, SceneError> {
        let mut model = Model::from_spec(spec)?;
        model.base = base;
        model.gravity = self.gravity();
        let dof = model.dof;
        let mut state = ArticulationState::zeros(dof);
        model.clamp_to_limits(&mut state.q);
        self.articulations.push(ArticulationInstance {
            model,
            state,
            mode,
            applied: vec![T::zero(); dof],
            controllers: Vec::new(),
            last_qdd: vec![T::zero(); dof],
            kinematic_target: None,
        });
        Ok(ArticulationId(self.articulations.len() - 1))
    }

    pub fn add_body(&mut self, body: FreeBody<T>) -> BodyId {
        self.bodies.push(body);
        BodyId(self.bodies.len() - 1)
    }

    pub fn articulation(&self, id: ArticulationId) -> Result<&ArticulationInstance<T>, SceneError> {
        self.articulations.get(id.0).ok_or(SceneError::UnknownArticulation(id.0))
    }

    pub fn articulation_mut(&mut self, id: ArticulationId) -> Result<&mut ArticulationInstance<T>, SceneError> {
        self.articulations.get_mut(id.0).ok_or(SceneError::UnknownArticulation(id.0))
    }

    pub fn body(&self, id: BodyId) -> Result<&FreeBody<T>, SceneError> {
        self.bodies.get(id.0).ok_or(SceneError::UnknownBody(id.0))
    }

    pub fn body_mut(&mut self, id: BodyId) -> Result<&mut FreeBody<T>, SceneError> {
        self.bodies.get_mut(id.0).ok_or(SceneError::UnknownBody(id.0))
    }

    /// Overwrites the state of an articulation (either mode), clamping `q` to limits.
    pub fn set_state(&mut self, id: ArticulationId, state: ArticulationState<T>) -> Result<(), SceneError> {
        let a = self.articulation_mut(id)?;
        for v in [&state.q, &state.qd] {
            if v.len() != a.model.dof {
                return Err(SceneError::DimensionMismatch { expected: a.model.dof, got: v.len() });
            }
        }
        a.state = state;
        a.model.clamp_to_limits(&mut a.state.q);
        self.sync_attached_bodies();
        Ok(())
    }

    pub fn set_mode(&mut self, id: ArticulationId, mode: ArticulationMode) -> Result<(), SceneError> {
        self.articulation_mut(id)?.mode = mode;
        Ok(())
    }

    /// Sets persistent generalized forces. Ignored by kinematic articulations.
    pub fn apply_generalized_forces(&mut self, id: ArticulationId, tau: Vec<T>) -> Result<(), SceneError> {
        let a = self.articulation_mut(id)?;
        if tau.len() != a.model.dof {
            return Err(SceneError::DimensionMismatch { expected: a.model.dof, got: tau.len() });
        }
        a.applied = tau;
        Ok(())
    }

    /// Queues `q` for a kinematic articulation; applied at the next step.
    pub fn set_kinematic_state(&mut self, id: ArticulationId, q: Vec<T>) -> Result<(), SceneError> {
        let a = self.articulation_mut(id)?;
        if a.mode != ArticulationMode::Kinematic {
            return Err(SceneError::WrongMode(a.model.name.clone()));
        }
        if q.len() != a.model.dof {
            return Err(SceneError::DimensionMismatch { expected: a.model.dof, got: q.len() });
        }
        a.kinematic_target = Some(q);
        Ok(())
    }

    /// Adds a controller; returns its index within the articulation.
    pub fn add_controller(&mut self, id: ArticulationId, spec: ControllerSpec) -> Result<usize, SceneError> {
        let a = self.articulation_mut(id)?;
        let c = Controller::new(spec, &a.model)?;
        a.controllers.push(c);
        Ok(a.controllers.len() - 1)
    }

    /// Replaces every controller of the articulation with a single new one.
    pub fn set_controller(&mut self, id: ArticulationId, spec: ControllerSpec) -> Result<(), SceneError> {
        let a = self.articulation_mut(id)?;
        let c = Controller::new(spec, &a.model)?;
        a.controllers = vec![c];
        Ok(())
    }

    pub fn controller_mut(&mut self, id: ArticulationId, index: usize) -> Result<&mut Controller<T>, SceneError> {
        let a = self.articulation_mut(id)?;
        let n = a.controllers.len();
        a.controllers
            .get_mut(index)
            .ok_or_else(|| SceneError::InvalidConfig(format!("controller {index} out of range ({n} present)")))
    }

    /// Rigidly attaches `body` to `link`, freezing their current relative pose.
    pub fn attach(
        &mut self,
        body: BodyId,
        articulation: ArticulationId,
        link: &str,
        break_force: T,
    ) -> Result<AttachmentId, SceneError> {
        let b = self.body(body)?;
        if self.attachments.iter().any(|c| c.active && c.body == body.0) {
            return Err(SceneError::AlreadyAttached(b.name.clone()));
        }
        let a = self.articulation(articulation)?;
        let li = a.model.link_index(link).ok_or_else(|| SceneError::UnknownLink(link.to_string()))?;
        let link_pose = a.link_poses()[li];
        let relative = link_pose.inverse().compose(&b.pose);
        self.attachments.push(AttachmentConstraint {
            body: body.0,
            articulation: articulation.0,
            link: li,
            relative,
            break_force,
            active: true,
            last_force: Vec3::zeros(),
        });
        self.sync_attached_bodies();
        Ok(AttachmentId(self.attachments.len() - 1))
    }

    pub fn detach(&mut self, id: AttachmentId) {
        if let Some(c) = self.attachments.get_mut(id.0) {
            c.active = false;
        }
    }

    pub fn is_attached(&self, body: BodyId) -> bool {
        self.attachments.iter().any(|c| c.active && c.body == body.0)
    }

    /// World pose of a link or body.
    pub fn link_pose(&self, link: LinkRef) -> Result<Transform<T>, SceneError> {
        match link {
            LinkRef::Body(b) => Ok(self.body(BodyId(b))?.pose),
            LinkRef::Articulation { articulation, link } => {
                let a = self.articulation(ArticulationId(articulation))?;
                a.link_poses().get(link).copied().ok_or_else(|| SceneError::UnknownLink(link.to_string()))
            }
        }
    }

    /// Finds a link by name, searching articulations then bodies.
    pub fn find_link(&self, name: &str) -> Option<LinkRef> {
        for (i, a) in self.articulations.iter().enumerate() {
            if let Some(l) = a.model.link_index(name) {
                return Some(LinkRef::Articulation { articulation: i, link: l });
            }
        }
        self.bodies.iter().position(|b| b.name == name).map(LinkRef::Body)
    }

    /// Kinetic and potential energy of an articulation (gravity potential
    /// referenced to the world origin).
    pub fn articulation_energy(&self, id: ArticulationId) -> Result<(T, T), SceneError> {
        let a = self.articulation(id)?;
        Ok((a.model.kinetic_energy(&a.state.q, &a.state.qd)?, a.model.potential_energy(&a.state.q)?))
    }

    /// Loads contributed by bodies attached to articulation `ai`, as a
    /// function of that articulation's link poses.
    fn attachment_loads(&self, ai: usize, poses: &[Transform<T>], wrenches: &[(Vec3<T>, Vec3<T>)]) -> Vec<BodyLoad<T>> {
        let g = self.gravity();
        self.attachments
            .iter()
            .filter(|c| c.active && c.articulation == ai)
            .map(|c| {
                let body = &self.bodies[c.body];
                let x = poses[c.link].compose(&c.relative);
                let inertia = body.inertia.transformed(&x);
                let (f, t) = wrenches[c.body];
                let mut wrench = wrench_at(&x.translation, f, t);
                if !body.gravity_enabled {
                    wrench += wrench_at(&inertia.com, -(g * inertia.mass), Vec3::zeros());
                }
                BodyLoad { link: c.link, inertia: Some(inertia), wrench }
            })
            .collect()
    }

    /// Moves attached bodies onto their holders and copies holder velocities.
    fn sync_attached_bodies(&mut self) {
        for c in self.attachments.iter().filter(|c| c.active) {
            let a = &self.articulations[c.articulation];
            let poses = a.link_poses();
            let v = a.model.link_velocities(&poses, &a.state.qd).expect("state matches model")[c.link];
            let x = poses[c.link].compose(&c.relative);
            let b = &mut self.bodies[c.body];
            b.pose = x;
            b.angular_velocity = v.angular;
            b.linear_velocity = v.point_velocity(&x.translation);
        }
    }

    /// Advances the scene by `config.dt`.
    pub fn step(&mut self) -> Result<StepReport, SceneError> {
        let dt = self.dt();
        let half = T::lit(0.5);
        let wrenches: Vec<(Vec3<T>, Vec3<T>)> = (0..self.bodies.len())
            .map(|b| self.bodies[b].actuator_wrench(if self.is_attached(BodyId(b)) { None } else { Some(dt) }))
            .collect();
        let time = self.time;

        let mut taus = Vec::with_capacity(self.articulations.len());
        for a in self.articulations.iter_mut() {
            let mut tau = a.applied.clone();
            if a.mode == ArticulationMode::Dynamic {
                for c in a.controllers.iter_mut() {
                    c.accumulate(&a.model, &a.state, time, &mut tau)?;
                }
                for (t, c) in tau.iter_mut().zip(a.model.dof_coefficients()) {
                    *t = t.max(-c.2).min(c.2);
                }
            }
            taus.push(tau);
        }

        let mut new_states = Vec::with_capacity(self.articulations.len());
        for (ai, (a, tau)) in self.articulations.iter().zip(&taus).enumerate() {
            match a.mode {
                ArticulationMode::Kinematic => {
                    let q = a.kinematic_target.clone().unwrap_or_else(|| a.state.q.clone());
                    let qd: Vec<T> = q.iter().zip(&a.state.q).map(|(&n, &o)| (n - o) / dt).collect();
                    new_states.push((ArticulationState::new(q, qd), vec![T::zero(); a.model.dof]));
                }
                ArticulationMode::Dynamic => {
                    let accel = |q: &[T], qd: &[T]| -> Result<Vec<T>, SceneError> {
                        let poses = a.model.link_poses(q).map_err(DynamicsError::from)?;
                        let loads = self.attachment_loads(ai, &poses, &wrenches);
                        let st = ArticulationState::new(q.to_vec(), qd.to_vec());
                        Ok(a.model.forward_dynamics(&st, tau, &loads)?)
                    };
                    let (q0, v0) = (&a.state.q, &a.state.qd);
                    let (mut q, mut qd, qdd) = match self.config.integrator {
                        Integrator::SemiImplicitEuler => {
                            let acc = accel(q0, v0)?;
                            let qd: Vec<T> = v0.iter().zip(&acc).map(|(&v, &x)| v + x * dt).collect();
                            let q: Vec<T> = q0.iter().zip(&qd).map(|(&p, &v)| p + v * dt).collect();
                            (q, qd, acc)
                        }
                        Integrator::VelocityVerlet => {
                            let a0 = accel(q0, v0)?;
                            let vh: Vec<T> = v0.iter().zip(&a0).map(|(&v, &x)| v + x * dt * half).collect();
                            let q: Vec<T> = q0.iter().zip(&vh).map(|(&p, &v)| p + v * dt).collect();
                            let ap = accel(&q, &vh)?;
                            let vp: Vec<T> = vh.iter().zip(&ap).map(|(&v, &x)| v + x * dt * half).collect();
                            let a1 = accel(&q, &vp)?;
                            let qd: Vec<T> = vh.iter().zip(&a1).map(|(&v, &x)| v + x * dt * half).collect();
                            (q, qd, a1)
                        }
                    };
                    for ((p, v), (lo, hi)) in q.iter_mut().zip(qd.iter_mut()).zip(a.model.dof_limits()) {
                        if *p < lo {
                            *p = lo;
                            *v = v.max(T::zero());
                        } else if *p > hi {
                            *p = hi;
                            *v = v.min(T::zero());
                        }
                    }
                    new_states.push((ArticulationState::new(q, qd), qdd));
                }
            }
        }
        for (a, (state, qdd)) in self.articulations.iter_mut().zip(new_states) {
            a.state = state;
            a.last_qdd = qdd;
            a.kinematic_target = None;
        }

        let mut report = StepReport::default();
        let attached: Vec<bool> = (0..self.bodies.len()).map(|b| self.is_attached(BodyId(b))).collect();
        let g = self.gravity();
        for (bi, b) in self.bodies.iter_mut().enumerate() {
            let (f, t) = wrenches[bi];
            b.last_wrench = SpatialVector::new(t, f);
            if attached[bi] {
                continue;
            }
            integrate_free_body(b, f, t, g, dt);
        }
        self.sync_attached_bodies();

        for (ci, c) in self.attachments.iter_mut().enumerate() {
            if !c.active {
                continue;
            }
            let a = &self.articulations[c.articulation];
            let body = &mut self.bodies[c.body];
            let poses = a.link_poses();
            let acc = a.model.link_accelerations(&poses, &a.state.qd, &a.last_qdd).map_err(DynamicsError::from)?[c.link];
            let vel = a.model.link_velocities(&poses, &a.state.qd).map_err(DynamicsError::from)?[c.link];
            let com = body.com_world();
            let a_com = acc.linear + acc.angular.cross(&com) + vel.angular.cross(&vel.point_velocity(&com));
            let origin = body.pose.translation;
            let a_origin = acc.linear + acc.angular.cross(&origin) + vel.angular.cross(&vel.point_velocity(&origin));
            body.last_acceleration = SpatialVector::new(acc.angular, a_origin);
            let (f_act, _) = wrenches[c.body];
            let mut force = a_com * body.inertia.mass - f_act;
            if body.gravity_enabled {
                force -= g * body.inertia.mass;
            }
            c.last_force = force;
            if force.norm() > c.break_force {
                c.active = false;
                report.detached.push(ci);
            }
        }

        self.time += dt;
        self.steps += 1;
        report.time = self.time.as_f64();
        Ok(report)
    }

    /// Serializable copy of the dynamic state.
    pub fn snapshot(&self) -> SceneSnapshot {
        SceneSnapshot {
            time: self.time.as_f64(),
            step: self.steps,
            articulations: self
                .articulations
                .iter()
                .map(|a| ArticulationSnapshot {
                    name: a.model.name.clone(),
                    q: a.state.q.iter().map(|v| v.as_f64()).collect(),
                    qd: a.state.qd.iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
            bodies: self
                .bodies
                .iter()
                .enumerate()
                .map(|(i, b)| BodySnapshot {
                    name: b.name.clone(),
                    pose: b.pose.cast(),
                    linear_velocity: b.linear_velocity.cast().to_array(),
                    angular_velocity: b.angular_velocity.cast().to_array(),
                    attached: self.is_attached(BodyId(i)),
                })
                .collect(),
        }
    }
}

fn integrate_free_body<T: Real>(b: &mut FreeBody<T>, force: Vec3<T>, torque: Vec3<T>, g: Vec3<T>, dt: T) {
    let m = b.inertia.mass;
    let r = b.pose.rotation.to_matrix();
    let i_world = r.mul_mat(&b.inertia.inertia).mul_mat(&r.transpose());
    let com = b.com_world();
    let arm = com - b.pose.translation;
    let w = b.angular_velocity;
    let v_com = b.linear_velocity + w.cross(&arm);
    let tau_com = torque - arm.cross(&force);
    let gyro = w.cross(&i_world.mul_vec(&w));
    let alpha = i_world.try_inverse().map(|inv| inv.mul_vec(&(tau_com - gyro))).unwrap_or_else(Vec3::zeros);
    let mut a_com = force / m;
    if b.gravity_enabled {
        a_com += g;
    }
    let w1 = w + alpha * dt;
    let v1 = v_com + a_com * dt;
    let rot = Quat::from_rotation_vector(&(w1 * dt)).mul(&b.pose.rotation).normalize();
    let com1 = com + v1 * dt;
    let origin = com1 - rot.rotate(&b.inertia.com);
    b.pose = Transform::new(rot, origin);
    b.angular_velocity = w1;
    b.linear_velocity = v1 - w1.cross(&(com1 - origin));
    let a_origin = a_com - alpha.cross(&(com1 - origin));
    b.last_acceleration = SpatialVector::new(alpha, a_origin);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticulationSnapshot {
    pub name: String,
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodySnapshot {
    pub name: String,
    pub pose: Transform<f64>,
    pub linear_velocity: [f64; 3],
    pub angular_velocity: [f64; 3],
    pub attached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    pub time: f64,
    pub step: u64,
    pub articulations: Vec<ArticulationSnapshot>,
    pub bodies: Vec<BodySnapshot>,
}
