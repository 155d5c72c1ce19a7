//! Joint controllers: force passthrough, P-D position, velocity and
//! computed-torque trajectory tracking. Every output is clamped to the
//! joints' effort limits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::model::{ArticulationState, Model};
use crate::scalar::Real;

pub const DEFAULT_KP: f64 = 100.0;
pub const DEFAULT_KD: f64 = 20.0;
pub const DEFAULT_KV: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    Force,
    Position,
    Velocity,
    Trajectory,
}

/// Gains are per joint; a single value is broadcast to every joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub joints: Vec<String>,
    pub mode: ControlMode,
    #[serde(default = "default_kp")]
    pub kp: Vec<f64>,
    #[serde(default = "default_kd")]
    pub kd: Vec<f64>,
    #[serde(default = "default_kv")]
    pub kv: Vec<f64>,
    #[serde(default)]
    pub gravity_compensation: bool,
}

fn default_kp() -> Vec<f64> {
    vec![DEFAULT_KP]
}
fn default_kd() -> Vec<f64> {
    vec![DEFAULT_KD]
}
fn default_kv() -> Vec<f64> {
    vec![DEFAULT_KV]
}

impl ControllerSpec {
    pub fn new(joints: &[&str], mode: ControlMode) -> Self {
        ControllerSpec {
            joints: joints.iter().map(|s| s.to_string()).collect(),
            mode,
            kp: default_kp(),
            kd: default_kd(),
            kv: default_kv(),
            gravity_compensation: false,
        }
    }

    pub fn with_gains(mut self, kp: f64, kd: f64, kv: f64) -> Self {
        self.kp = vec![kp];
        self.kd = vec![kd];
        self.kv = vec![kv];
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub qdd: Vec<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("target has {got} entries, controller drives {expected} DOF")]
    TargetShapeMismatch { expected: usize, got: usize },
    #[error("trajectory mode without a loaded trajectory")]
    NoTrajectoryLoaded,
    #[error("trajectory has no points")]
    EmptyTrajectory,
    #[error("trajectory times must strictly increase (point {index})")]
    NonMonotoneTime { index: usize },
    #[error("unknown joint `{0}`")]
    UnknownJoint(String),
    #[error("invalid controller: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Flags raised by the most recent `compute_torque`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ControllerStatus {
    /// The position target lay outside the joint limits and was clamped.
    pub target_clamped: bool,
    /// At least one torque hit its effort limit.
    pub saturated: bool,
}

#[derive(Debug, Clone)]
pub struct Controller<T = f64> {
    pub spec: ControllerSpec,
    dofs: Vec<usize>,
    kp: Vec<T>,
    kd: Vec<T>,
    kv: Vec<T>,
    target: Vec<T>,
    trajectory: Option<Vec<TrajectoryPoint>>,
    pub status: ControllerStatus,
}

fn expand(gains: &[f64], per_joint: &[usize], name: &str) -> Result<Vec<f64>, ControlError> {
    if gains.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
        return Err(ControlError::Invalid(format!("{name} gains must be non-negative")));
    }
    let joints = per_joint.len();
    let g = match gains.len() {
        1 => vec![gains[0]; joints],
        n if n == joints => gains.to_vec(),
        n => return Err(ControlError::Invalid(format!("{name} has {n} gains for {joints} joints"))),
    };
    Ok(g.iter().zip(per_joint).flat_map(|(&v, &k)| std::iter::repeat(v).take(k)).collect())
}

impl<T: Real> Controller<T> {
    pub fn new(spec: ControllerSpec, model: &Model<T>) -> Result<Self, ControlError> {
        if spec.joints.is_empty() {
            return Err(ControlError::Invalid("joint list is empty".into()));
        }
        let mut dofs = Vec::new();
        let mut per_joint = Vec::new();
        for name in &spec.joints {
            let j = model.joint(name).ok_or_else(|| ControlError::UnknownJoint(name.clone()))?;
            dofs.extend(j.offset..j.offset + j.ndof);
            per_joint.push(j.ndof);
        }
        let cast = |v: Vec<f64>| v.into_iter().map(T::lit).collect::<Vec<T>>();
        let kp = cast(expand(&spec.kp, &per_joint, "kp")?);
        let kd = cast(expand(&spec.kd, &per_joint, "kd")?);
        let kv = cast(expand(&spec.kv, &per_joint, "kv")?);
        let target = if spec.mode == ControlMode::Trajectory { Vec::new() } else { vec![T::zero(); dofs.len()] };
        Ok(Controller { spec, dofs, kp, kd, kv, target, trajectory: None, status: ControllerStatus::default() })
    }

    /// State-vector indices driven by this controller.
    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    pub fn mode(&self) -> ControlMode {
        self.spec.mode
    }

    pub fn target(&self) -> &[T] {
        &self.target
    }

    fn check_target(&self, target: &[T]) -> Result<(), ControlError> {
        let expected = if self.spec.mode == ControlMode::Trajectory { 0 } else { self.dofs.len() };
        if target.len() != expected {
            return Err(ControlError::TargetShapeMismatch { expected, got: target.len() });
        }
        Ok(())
    }

    pub fn set_target(&mut self, target: Vec<T>) -> Result<(), ControlError> {
        self.check_target(&target)?;
        self.target = target;
        Ok(())
    }

    pub fn load_trajectory(&mut self, points: Vec<TrajectoryPoint>) -> Result<(), ControlError> {
        if points.is_empty() {
            return Err(ControlError::EmptyTrajectory);
        }
        let n = self.dofs.len();
        for (i, p) in points.iter().enumerate() {
            for v in [&p.q, &p.qd, &p.qdd] {
                if v.len() != n {
                    return Err(ControlError::TargetShapeMismatch { expected: n, got: v.len() });
                }
            }
            if i > 0 && !(p.t > points[i - 1].t) {
                return Err(ControlError::NonMonotoneTime { index: i });
            }
        }
        self.trajectory = Some(points);
        Ok(())
    }

    /// Interpolated `(q, qd, qdd)` reference at time `t`.
    pub fn reference(&self, t: f64) -> Result<(Vec<T>, Vec<T>, Vec<T>), ControlError> {
        let pts = self.trajectory.as_ref().ok_or(ControlError::NoTrajectoryLoaded)?;
        let (q, qd, qdd) = hermite(pts, t);
        let cast = |v: Vec<f64>| v.into_iter().map(T::lit).collect();
        Ok((cast(q), cast(qd), cast(qdd)))
    }

    /// Torques for the controlled DOF (in `dofs()` order) given `target`.
    pub fn compute_torque(
        &mut self,
        model: &Model<T>,
        state: &ArticulationState<T>,
        target: &[T],
        sim_time: T,
    ) -> Result<Vec<T>, ControlError> {
        self.check_target(target)?;
        let mut status = ControllerStatus::default();
        let q = |i: usize| state.q[self.dofs[i]];
        let qd = |i: usize| state.qd[self.dofs[i]];
        let n = self.dofs.len();
        let mut tau: Vec<T> = match self.spec.mode {
            ControlMode::Force => target.to_vec(),
            ControlMode::Velocity => (0..n).map(|i| self.kv[i] * (target[i] - qd(i))).collect(),
            ControlMode::Position => {
                let limits = model.dof_limits();
                let mut out = Vec::with_capacity(n);
                for i in 0..n {
                    let (lo, hi) = limits[self.dofs[i]];
                    let goal = target[i].max(lo).min(hi);
                    status.target_clamped |= goal != target[i];
                    out.push(self.kp[i] * (goal - q(i)) - self.kd[i] * qd(i));
                }
                if self.spec.gravity_compensation {
                    let g = model.gravity_torques(&state.q)?;
                    for (i, v) in out.iter_mut().enumerate() {
                        *v += g[self.dofs[i]];
                    }
                }
                out
            }
            ControlMode::Trajectory => {
                let (qr, qdr, qddr) = self.reference(sim_time.as_f64())?;
                let mut ref_state = state.clone();
                let mut acc = vec![T::zero(); model.dof];
                for i in 0..n {
                    ref_state.q[self.dofs[i]] = qr[i];
                    ref_state.qd[self.dofs[i]] = qdr[i];
                    acc[self.dofs[i]] = qddr[i];
                }
                let ff = model.inverse_dynamics(&ref_state, &acc, &[])?;
                (0..n)
                    .map(|i| ff[self.dofs[i]] + self.kp[i] * (qr[i] - q(i)) + self.kd[i] * (qdr[i] - qd(i)))
                    .collect()
            }
        };
        let coeffs = model.dof_coefficients();
        for (i, t) in tau.iter_mut().enumerate() {
            let limit = coeffs[self.dofs[i]].2;
            if t.abs() > limit {
                status.saturated = true;
                *t = t.max(-limit).min(limit);
            }
        }
        self.status = status;
        Ok(tau)
    }

    /// Adds this controller's torques into a full-DOF vector, using the stored target.
    pub fn accumulate(
        &mut self,
        model: &Model<T>,
        state: &ArticulationState<T>,
        sim_time: T,
        tau: &mut [T],
    ) -> Result<(), ControlError> {
        let target = std::mem::take(&mut self.target);
        let out = self.compute_torque(model, state, &target, sim_time);
        self.target = target;
        for (i, v) in out?.into_iter().enumerate() {
            tau[self.dofs[i]] += v;
        }
        Ok(())
    }
}

/// Cubic Hermite interpolation through `(q, qd)` knots; boundary values
/// hold outside the time span with zero velocity and acceleration.
pub fn hermite(points: &[TrajectoryPoint], t: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let first = &points[0];
    let last = &points[points.len() - 1];
    let hold = |p: &TrajectoryPoint| (p.q.clone(), vec![0.0; p.q.len()], vec![0.0; p.q.len()]);
    if t <= first.t {
        return hold(first);
    }
    if t >= last.t {
        return hold(last);
    }
    let k = points.partition_point(|p| p.t <= t) - 1;
    let (a, b) = (&points[k], &points[k + 1]);
    let h = b.t - a.t;
    let s = (t - a.t) / h;
    let (s2, s3) = (s * s, s * s * s);
    let (h00, h10, h01, h11) = (2.0 * s3 - 3.0 * s2 + 1.0, s3 - 2.0 * s2 + s, -2.0 * s3 + 3.0 * s2, s3 - s2);
    let (d00, d10, d01, d11) = (6.0 * s2 - 6.0 * s, 3.0 * s2 - 4.0 * s + 1.0, -6.0 * s2 + 6.0 * s, 3.0 * s2 - 2.0 * s);
    let (e00, e10, e01, e11) = (12.0 * s - 6.0, 6.0 * s - 4.0, -12.0 * s + 6.0, 6.0 * s - 2.0);
    let n = a.q.len();
    let mut q = vec![0.0; n];
    let mut qd = vec![0.0; n];
    let mut qdd = vec![0.0; n];
    for i in 0..n {
        let (q0, v0, q1, v1) = (a.q[i], a.qd[i] * h, b.q[i], b.qd[i] * h);
        q[i] = h00 * q0 + h10 * v0 + h01 * q1 + h11 * v1;
        qd[i] = (d00 * q0 + d10 * v0 + d01 * q1 + d11 * v1) / h;
        qdd[i] = (e00 * q0 + e10 * v0 + e01 * q1 + e11 * v1) / (h * h);
    }
    (q, qd, qdd)
}
