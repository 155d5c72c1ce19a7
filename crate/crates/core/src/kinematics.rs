//! Forward kinematics, point Jacobians and damped least-squares IK.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::asset::{ArticulationSpec, ValidationError};
use crate::linalg::DMatrix;
use crate::model::{ArticulationState, Model};
use crate::scalar::Real;
use crate::spatial::{SpatialVector, Transform, Vec3};

pub const IK_DAMPING: f64 = 1e-3;
pub const IK_MAX_ITERS: usize = 200;
/// Largest per-DOF change in one IK iteration.
const IK_MAX_STEP: f64 = 0.5;
/// An accepted step shrinking the squared residual by less than this
/// fraction counts as a stall and triggers a restart.
const IK_STALL_RATIO: f64 = 1e-3;
const IK_RESTART_SEED: u64 = 0x1c0de;

struct IkResidual<T> {
    e: [T; 6],
    pos: T,
    rot: T,
    jac: DMatrix<T>,
}

impl<T: Real> IkResidual<T> {
    fn cost(&self) -> T {
        self.e.iter().map(|v| *v * *v).sum()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("state has {got} entries, articulation has {expected} DOF")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown link `{0}`")]
    UnknownLink(String),
    #[error("IK did not converge: position error {position_error:.3e} m, rotation error {rotation_error:.3e} rad")]
    NoConvergence { position_error: f64, rotation_error: f64, best_q: Vec<f64> },
    #[error("tolerances must be positive")]
    InvalidTolerance,
    #[error(transparent)]
    InvalidSpec(#[from] ValidationError),
}

impl<T: Real> Model<T> {
    fn check_len(&self, v: &[T]) -> Result<(), KinematicsError> {
        if v.len() != self.dof {
            return Err(KinematicsError::DimensionMismatch { expected: self.dof, got: v.len() });
        }
        Ok(())
    }

    pub fn require_link(&self, name: &str) -> Result<usize, KinematicsError> {
        self.link_index(name).ok_or_else(|| KinematicsError::UnknownLink(name.to_string()))
    }

    /// World pose of every link, indexed like `self.links`.
    pub fn link_poses(&self, q: &[T]) -> Result<Vec<Transform<T>>, KinematicsError> {
        self.check_len(q)?;
        let mut poses: Vec<Transform<T>> = Vec::with_capacity(self.links.len());
        for l in &self.links {
            let pose = match (l.parent, &l.joint) {
                (Some(p), Some(j)) => {
                    poses[p].compose(&j.origin).compose(&j.motion(&q[j.offset..j.offset + j.ndof]))
                }
                _ => self.base,
            };
            poses.push(pose);
        }
        Ok(poses)
    }

    /// World-frame spatial velocity of every link, referenced to the world origin.
    pub fn link_velocities(&self, poses: &[Transform<T>], qd: &[T]) -> Result<Vec<SpatialVector<T>>, KinematicsError> {
        self.check_len(qd)?;
        let mut v: Vec<SpatialVector<T>> = Vec::with_capacity(self.links.len());
        for (i, l) in self.links.iter().enumerate() {
            let mut vi = l.parent.map(|p| v[p]).unwrap_or_else(SpatialVector::zeros);
            if let Some(j) = &l.joint {
                let s = j.subspace(&poses[i]);
                for k in 0..j.ndof {
                    vi += s[k] * qd[j.offset + k];
                }
            }
            v.push(vi);
        }
        Ok(v)
    }

    /// World-frame spatial acceleration of every link (gravity excluded).
    pub fn link_accelerations(
        &self,
        poses: &[Transform<T>],
        qd: &[T],
        qdd: &[T],
    ) -> Result<Vec<SpatialVector<T>>, KinematicsError> {
        self.check_len(qdd)?;
        let v = self.link_velocities(poses, qd)?;
        let mut a: Vec<SpatialVector<T>> = Vec::with_capacity(self.links.len());
        for (i, l) in self.links.iter().enumerate() {
            let mut ai = l.parent.map(|p| a[p]).unwrap_or_else(SpatialVector::zeros);
            if let Some(j) = &l.joint {
                let s = j.subspace(&poses[i]);
                for k in 0..j.ndof {
                    ai += s[k] * qdd[j.offset + k] + v[i].cross_motion(&(s[k] * qd[j.offset + k]));
                }
            }
            a.push(ai);
        }
        Ok(a)
    }

    /// 6×DOF Jacobian mapping `qd` to the (angular; linear) velocity of a
    /// world point rigidly attached to `link`.
    pub fn jacobian(&self, q: &[T], link: usize, point: &Vec3<T>) -> Result<DMatrix<T>, KinematicsError> {
        let poses = self.link_poses(q)?;
        Ok(self.jacobian_at(&poses, link, point))
    }

    pub fn jacobian_at(&self, poses: &[Transform<T>], link: usize, point: &Vec3<T>) -> DMatrix<T> {
        let mut jac = DMatrix::zeros(6, self.dof);
        for i in self.path_to_root(link) {
            let Some(j) = &self.links[i].joint else { continue };
            let s = j.subspace(&poses[i]);
            for k in 0..j.ndof {
                let w = s[k].angular;
                let lin = s[k].point_velocity(point);
                for r in 0..3 {
                    jac[(r, j.offset + k)] = w[r];
                    jac[(r + 3, j.offset + k)] = lin[r];
                }
            }
        }
        jac
    }

    /// Damped least-squares IK for the pose of `link`'s frame. The damping
    /// starts at [`IK_DAMPING`] and grows only while steps fail to reduce
    /// the residual; stalls restart from random configurations
    /// inside the limits, drawn from a fixed seed.
    pub fn solve_ik(
        &self,
        q0: &[T],
        link: usize,
        target: &Transform<T>,
        tol_pos: T,
        tol_rot: T,
        max_iters: usize,
    ) -> Result<Vec<T>, KinematicsError> {
        self.check_len(q0)?;
        if !(tol_pos > T::zero() && tol_rot > T::zero()) {
            return Err(KinematicsError::InvalidTolerance);
        }
        let eval = |q: &[T]| -> Result<IkResidual<T>, KinematicsError> {
            let poses = self.link_poses(q)?;
            let cur = poses[link];
            let rot = target.rotation.mul(&cur.rotation.conjugate()).to_rotation_vector();
            let pos = target.translation - cur.translation;
            let e = [rot[0], rot[1], rot[2], pos[0], pos[1], pos[2]];
            let jac = self.jacobian_at(&poses, link, &cur.translation);
            Ok(IkResidual { e, pos: pos.norm(), rot: rot.norm(), jac })
        };
        let limits = self.dof_limits();
        let inside = |q: &[T]| limits.iter().zip(q).all(|(&(lo, hi), &v)| lo <= v && v <= hi);
        let converged = |r: &IkResidual<T>| r.pos <= tol_pos && r.rot <= tol_rot;

        let mut q = q0.to_vec();
        let mut res = eval(&q)?;
        if converged(&res) && inside(&q) {
            return Ok(q);
        }
        if self.clamp_to_limits(&mut q) {
            res = eval(&q)?;
        }
        let max_step = T::lit(IK_MAX_STEP);
        let floor = T::lit(IK_DAMPING);
        let mut lambda = floor;
        let mut rng = ChaCha8Rng::seed_from_u64(IK_RESTART_SEED);
        let mut best = (res.pos, res.rot, res.cost(), q.clone());
        for _ in 0..max_iters {
            if converged(&res) {
                return Ok(q);
            }
            if self.dof == 0 {
                break;
            }
            let jt = res.jac.transpose();
            let mut jjt = res.jac.mul(&jt);
            jjt.add_diagonal(lambda * lambda);
            let step = jjt.solve(&res.e).map(|y| jt.mul_vec(&y));
            let mut stalled = step.is_none();
            if let Some(dq) = step {
                let biggest = dq.iter().fold(T::zero(), |m, v| m.max(v.abs()));
                if biggest > max_step {
                    lambda *= T::lit(10.0);
                    continue;
                }
                let mut trial: Vec<T> = q.iter().zip(&dq).map(|(&a, &b)| a + b).collect();
                self.clamp_to_limits(&mut trial);
                let next = eval(&trial)?;
                if next.cost() < res.cost() {
                    stalled = next.cost() > res.cost() * T::lit(1.0 - IK_STALL_RATIO);
                    q = trial;
                    res = next;
                    lambda = (lambda * T::lit(0.1)).max(floor);
                } else {
                    lambda *= T::lit(10.0);
                    stalled = lambda > T::lit(1e6);
                }
            }
            if res.cost() < best.2 {
                best = (res.pos, res.rot, res.cost(), q.clone());
            }
            if stalled && !converged(&res) {
                q = limits
                    .iter()
                    .zip(&best.3)
                    .map(|(&(lo, hi), &b)| {
                        let pi = T::PI();
                        let lo = if lo.is_finite() { lo } else { b - pi };
                        let hi = if hi.is_finite() { hi } else { b + pi };
                        lo + (hi - lo) * T::lit(rng.gen::<f64>())
                    })
                    .collect();
                res = eval(&q)?;
                lambda = floor;
            }
        }
        if converged(&res) {
            return Ok(q);
        }
        let best = (best.0, best.1, best.3);
        Err(KinematicsError::NoConvergence {
            position_error: best.0.as_f64(),
            rotation_error: best.1.as_f64(),
            best_q: best.2.iter().map(|v| v.as_f64()).collect(),
        })
    }
}

/// World pose of every link by name.
pub fn forward_kinematics(
    spec: &ArticulationSpec,
    state: &ArticulationState,
) -> Result<BTreeMap<String, Transform<f64>>, KinematicsError> {
    let model: Model = Model::from_spec(spec)?;
    let poses = model.link_poses(&state.q)?;
    Ok(model.links.iter().map(|l| l.name.clone()).zip(poses).collect())
}

/// See [`Model::jacobian`].
pub fn jacobian(
    spec: &ArticulationSpec,
    state: &ArticulationState,
    link: &str,
    point: &Vec3<f64>,
) -> Result<DMatrix<f64>, KinematicsError> {
    let model: Model = Model::from_spec(spec)?;
    let li = model.require_link(link)?;
    model.jacobian(&state.q, li, point)
}

/// See [`Model::solve_ik`]. The returned state has zero velocity.
pub fn solve_ik(
    spec: &ArticulationSpec,
    state0: &ArticulationState,
    link: &str,
    target: &Transform<f64>,
    tol_pos: f64,
    tol_rot: f64,
    max_iters: usize,
) -> Result<ArticulationState, KinematicsError> {
    let model: Model = Model::from_spec(spec)?;
    let li = model.require_link(link)?;
    let q = model.solve_ik(&state0.q, li, target, tol_pos, tol_rot, max_iters)?;
    let dof = q.len();
    Ok(ArticulationState::new(q, vec![0.0; dof]))
}
