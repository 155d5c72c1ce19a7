//! Articulated-body forward dynamics and Newton-Euler inverse dynamics, both
//! carried out on world-frame spatial vectors.

use thiserror::Error;

use crate::asset::{ArticulationSpec, ValidationError};
use crate::kinematics::KinematicsError;
use crate::model::{ArticulationState, Model};
use crate::scalar::Real;
use crate::spatial::{Mat6, SpatialInertia, SpatialVector, Transform};

/// Velocity scale of the tanh-smoothed Coulomb friction (rad/s or m/s).
pub const FRICTION_VELOCITY_SCALE: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("vector has {got} entries, articulation has {expected} DOF")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("articulated inertia is singular at joint `{0}`")]
    SingularInertia(String),
    #[error(transparent)]
    InvalidSpec(#[from] ValidationError),
}

impl From<KinematicsError> for DynamicsError {
    fn from(e: KinematicsError) -> Self {
        match e {
            KinematicsError::DimensionMismatch { expected, got } => DynamicsError::DimensionMismatch { expected, got },
            KinematicsError::InvalidSpec(v) => DynamicsError::InvalidSpec(v),
            other => unreachable!("kinematics error {other} during dynamics"),
        }
    }
}

/// Extra load on a link: a rigidly attached body's world-frame inertia
/// and a world-frame wrench (referenced to the world origin).
#[derive(Debug, Clone, Copy)]
pub struct BodyLoad<T> {
    pub link: usize,
    pub inertia: Option<SpatialInertia<T>>,
    pub wrench: SpatialVector<T>,
}

struct Pass1<T> {
    poses: Vec<Transform<T>>,
    inertia: Vec<Mat6<T>>,
    /// Velocity-product acceleration `v × (S qd)`.
    bias_acc: Vec<SpatialVector<T>>,
    /// `v ×* (I v) − f_ext`.
    bias_force: Vec<SpatialVector<T>>,
}

impl<T: Real> Model<T> {
    fn check_dof(&self, v: &[T]) -> Result<(), DynamicsError> {
        if v.len() != self.dof {
            return Err(DynamicsError::DimensionMismatch { expected: self.dof, got: v.len() });
        }
        Ok(())
    }

    /// Damping plus smoothed Coulomb friction, as generalized forces.
    pub fn passive_torques(&self, qd: &[T]) -> Vec<T> {
        let scale = T::lit(FRICTION_VELOCITY_SCALE);
        self.dof_coefficients()
            .iter()
            .zip(qd)
            .map(|(&(b, f, _), &v)| -b * v - f * (v / scale).tanh())
            .collect()
    }

    /// Base acceleration that folds gravity into the recursion.
    fn base_acceleration(&self) -> SpatialVector<T> {
        SpatialVector::new(crate::spatial::Vec3::zeros(), -self.gravity)
    }

    fn pass1(&self, q: &[T], qd: &[T], loads: &[BodyLoad<T>]) -> Result<Pass1<T>, DynamicsError> {
        self.check_dof(q)?;
        self.check_dof(qd)?;
        let poses = self.link_poses(q)?;
        let n = self.links.len();
        let mut inertia: Vec<Mat6<T>> =
            self.links.iter().zip(&poses).map(|(l, x)| l.inertia.transformed(x).to_mat6()).collect();
        let mut ext = vec![SpatialVector::zeros(); n];
        for load in loads {
            if let Some(i) = &load.inertia {
                inertia[load.link] += i.to_mat6();
            }
            ext[load.link] += load.wrench;
        }
        let mut vel: Vec<SpatialVector<T>> = Vec::with_capacity(n);
        let mut bias_acc = Vec::with_capacity(n);
        let mut bias_force = Vec::with_capacity(n);
        for (i, l) in self.links.iter().enumerate() {
            let mut v = l.parent.map(|p| vel[p]).unwrap_or_else(SpatialVector::zeros);
            let mut vj = SpatialVector::zeros();
            if let Some(j) = &l.joint {
                let s = j.subspace(&poses[i]);
                for k in 0..j.ndof {
                    vj += s[k] * qd[j.offset + k];
                }
            }
            v += vj;
            bias_acc.push(v.cross_motion(&vj));
            bias_force.push(v.cross_force(&inertia[i].mul_vec(&v)) - ext[i]);
            vel.push(v);
        }
        Ok(Pass1 { poses, inertia, bias_acc, bias_force })
    }

    /// Rigid-body accelerations for applied generalized forces `tau`;
    /// no damping or friction.
    pub fn aba(&self, q: &[T], qd: &[T], tau: &[T], loads: &[BodyLoad<T>]) -> Result<Vec<T>, DynamicsError> {
        self.check_dof(tau)?;
        let Pass1 { poses, inertia: mut ia, bias_acc: c, bias_force: mut pa } = self.pass1(q, qd, loads)?;
        let n = self.links.len();
        let mut u_cols = vec![[SpatialVector::zeros(); 2]; n];
        let mut s_cols = vec![[SpatialVector::zeros(); 2]; n];
        let mut d_inv = vec![[[T::zero(); 2]; 2]; n];
        let mut u_res = vec![[T::zero(); 2]; n];

        for i in (1..n).rev() {
            let l = &self.links[i];
            let p = l.parent.expect("non-root link has a parent");
            let j = l.joint.as_ref().expect("non-root link has a joint");
            let k = j.ndof;
            let s = j.subspace(&poses[i]);
            let mut u = [SpatialVector::zeros(); 2];
            for a in 0..k {
                u[a] = ia[i].mul_vec(&s[a]);
            }
            let mut d = [[T::zero(); 2]; 2];
            for a in 0..k {
                for b in 0..k {
                    d[a][b] = s[a].dot(&u[b]);
                }
            }
            let dinv = invert_small(k, d).ok_or_else(|| DynamicsError::SingularInertia(j.name.clone()))?;
            let mut res = [T::zero(); 2];
            for a in 0..k {
                res[a] = tau[j.offset + a] - s[a].dot(&pa[i]);
            }
            let mut art = ia[i];
            let mut pa_child = pa[i] + ia[i].mul_vec(&c[i]);
            for a in 0..k {
                for b in 0..k {
                    art = art - Mat6::outer(&u[a], &u[b]).scale(dinv[a][b]);
                }
            }
            if k > 0 {
                pa_child = pa[i] + art.mul_vec(&c[i]);
                for a in 0..k {
                    let mut w = T::zero();
                    for b in 0..k {
                        w += dinv[a][b] * res[b];
                    }
                    pa_child += u[a] * w;
                }
            }
            ia[p] += art;
            let pp = pa[p] + pa_child;
            pa[p] = pp;
            u_cols[i] = u;
            s_cols[i] = s;
            d_inv[i] = dinv;
            u_res[i] = res;
        }

        let mut qdd = vec![T::zero(); self.dof];
        let mut acc = vec![SpatialVector::zeros(); n];
        acc[0] = self.base_acceleration();
        for i in 1..n {
            let l = &self.links[i];
            let j = l.joint.as_ref().expect("non-root link has a joint");
            let mut a = acc[l.parent.expect("parent")] + c[i];
            let k = j.ndof;
            let mut rhs = [T::zero(); 2];
            for r in 0..k {
                rhs[r] = u_res[i][r] - u_cols[i][r].dot(&a);
            }
            for r in 0..k {
                let mut v = T::zero();
                for b in 0..k {
                    v += d_inv[i][r][b] * rhs[b];
                }
                qdd[j.offset + r] = v;
                a += s_cols[i][r] * v;
            }
            acc[i] = a;
        }
        Ok(qdd)
    }

    /// Generalized accelerations including damping and friction.
    pub fn forward_dynamics(
        &self,
        state: &ArticulationState<T>,
        tau: &[T],
        loads: &[BodyLoad<T>],
    ) -> Result<Vec<T>, DynamicsError> {
        self.check_dof(tau)?;
        self.check_dof(&state.qd)?;
        let total: Vec<T> = tau.iter().zip(self.passive_torques(&state.qd)).map(|(&a, b)| a + b).collect();
        self.aba(&state.q, &state.qd, &total, loads)
    }

    /// Recursive Newton-Euler: generalized forces producing `qdd`
    /// (gravity included, damping and friction excluded).
    pub fn inverse_dynamics(
        &self,
        state: &ArticulationState<T>,
        qdd: &[T],
        loads: &[BodyLoad<T>],
    ) -> Result<Vec<T>, DynamicsError> {
        self.check_dof(qdd)?;
        let Pass1 { poses, inertia, bias_acc: c, bias_force: bf } = self.pass1(&state.q, &state.qd, loads)?;
        let n = self.links.len();
        let mut acc = vec![SpatialVector::zeros(); n];
        acc[0] = self.base_acceleration();
        let mut f = vec![SpatialVector::zeros(); n];
        for i in 1..n {
            let l = &self.links[i];
            let j = l.joint.as_ref().expect("non-root link has a joint");
            let s = j.subspace(&poses[i]);
            let mut a = acc[l.parent.expect("parent")] + c[i];
            for k in 0..j.ndof {
                a += s[k] * qdd[j.offset + k];
            }
            acc[i] = a;
            f[i] = inertia[i].mul_vec(&a) + bf[i];
        }
        let mut tau = vec![T::zero(); self.dof];
        for i in (1..n).rev() {
            let l = &self.links[i];
            let j = l.joint.as_ref().expect("non-root link has a joint");
            let s = j.subspace(&poses[i]);
            for k in 0..j.ndof {
                tau[j.offset + k] = s[k].dot(&f[i]);
            }
            let p = l.parent.expect("parent");
            let fi = f[i];
            f[p] += fi;
        }
        Ok(tau)
    }

    /// Gravity generalized forces: `inverse_dynamics` at rest with zero acceleration.
    pub fn gravity_torques(&self, q: &[T]) -> Result<Vec<T>, DynamicsError> {
        let state = ArticulationState::new(q.to_vec(), vec![T::zero(); self.dof]);
        self.inverse_dynamics(&state, &vec![T::zero(); self.dof], &[])
    }

    pub fn kinetic_energy(&self, q: &[T], qd: &[T]) -> Result<T, DynamicsError> {
        let poses = self.link_poses(q)?;
        let v = self.link_velocities(&poses, qd)?;
        let half = T::lit(0.5);
        Ok(self
            .links
            .iter()
            .zip(&poses)
            .zip(&v)
            .map(|((l, x), vi)| half * vi.dot(&l.inertia.transformed(x).to_mat6().mul_vec(vi)))
            .sum())
    }

    /// Gravitational potential relative to the world origin.
    pub fn potential_energy(&self, q: &[T]) -> Result<T, DynamicsError> {
        let poses = self.link_poses(q)?;
        Ok(self
            .links
            .iter()
            .zip(&poses)
            .map(|(l, x)| -l.inertia.mass * self.gravity.dot(&x.transform_point(&l.inertia.com)))
            .sum())
    }
}

fn invert_small<T: Real>(k: usize, d: [[T; 2]; 2]) -> Option<[[T; 2]; 2]> {
    let z = T::zero();
    match k {
        0 => Some([[z; 2]; 2]),
        1 => (d[0][0] > z && d[0][0].is_finite()).then(|| [[T::one() / d[0][0], z], [z, z]]),
        _ => {
            let det = d[0][0] * d[1][1] - d[0][1] * d[1][0];
            let scale = d[0][0].abs() * d[1][1].abs();
            if !(det > scale * T::epsilon() * T::lit(16.0)) || !det.is_finite() {
                return None;
            }
            Some([[d[1][1] / det, -d[0][1] / det], [-d[1][0] / det, d[0][0] / det]])
        }
    }
}

/// Accelerations under gravity, `tau`, damping and friction.
pub fn forward_dynamics(spec: &ArticulationSpec, state: &ArticulationState, tau: &[f64]) -> Result<Vec<f64>, DynamicsError> {
    let model: Model = Model::from_spec(spec)?;
    model.forward_dynamics(state, tau, &[])
}

/// Rigid-body generalized forces realizing `qdd`.
pub fn inverse_dynamics(spec: &ArticulationSpec, state: &ArticulationState, qdd: &[f64]) -> Result<Vec<f64>, DynamicsError> {
    let model: Model = Model::from_spec(spec)?;
    model.inverse_dynamics(state, qdd, &[])
}
