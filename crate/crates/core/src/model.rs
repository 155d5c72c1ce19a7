//! Compiled articulation: links in topological order with per-joint DOF
//! offsets, ready for the recursive algorithms in `kinematics` and `dynamics`.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::asset::{ArticulationSpec, CollisionShape, JointKind, ValidationError};
use crate::scalar::Real;
use crate::spatial::{Quat, SpatialInertia, SpatialVector, Transform, Vec3};

/// Generalized positions and velocities, one entry per DOF.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ArticulationState<T = f64> {
    pub q: Vec<T>,
    pub qd: Vec<T>,
}

impl<T: Real> ArticulationState<T> {
    pub fn zeros(dof: usize) -> Self {
        ArticulationState { q: vec![T::zero(); dof], qd: vec![T::zero(); dof] }
    }

    pub fn new(q: Vec<T>, qd: Vec<T>) -> Self {
        ArticulationState { q, qd }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }
}

#[derive(Debug, Clone)]
pub struct JointModel<T> {
    pub name: String,
    pub kind: JointKind,
    pub origin: Transform<T>,
    pub axis: Vec3<T>,
    pub coupled: bool,
    /// Translation per radian; zero unless a coupled screw.
    pub pitch: T,
    pub offset: usize,
    pub ndof: usize,
    pub lower: [T; 2],
    pub upper: [T; 2],
    pub damping: T,
    pub friction: T,
    pub effort_limit: T,
}

impl<T: Real> JointModel<T> {
    /// Motion of the joint frame relative to its origin frame.
    pub fn motion(&self, q: &[T]) -> Transform<T> {
        let a = self.axis;
        match (self.kind, self.ndof) {
            (JointKind::Fixed, _) => Transform::identity(),
            (JointKind::Hinge, _) => Transform::from_rotation(Quat::from_axis_angle_unchecked(&a, q[0])),
            (JointKind::Slider, _) => Transform::from_translation(a * q[0]),
            (JointKind::Screw, 1) => Transform::new(Quat::from_axis_angle_unchecked(&a, q[0]), a * (self.pitch * q[0])),
            (JointKind::Screw, _) => Transform::new(Quat::from_axis_angle_unchecked(&a, q[0]), a * q[1]),
        }
    }

    /// World-frame motion subspace columns given the child link's world
    /// pose. Only the first `ndof` entries are meaningful.
    pub fn subspace(&self, child_world: &Transform<T>) -> [SpatialVector<T>; 2] {
        let a = child_world.rotation.rotate(&self.axis);
        let o = child_world.translation;
        let z = SpatialVector::zeros();
        let rot = SpatialVector::new(a, o.cross(&a));
        let slide = SpatialVector::new(Vec3::zeros(), a);
        match (self.kind, self.ndof) {
            (JointKind::Fixed, _) => [z, z],
            (JointKind::Hinge, _) => [rot, z],
            (JointKind::Slider, _) => [slide, z],
            (JointKind::Screw, 1) => [SpatialVector::new(a, o.cross(&a) + a * self.pitch), z],
            (JointKind::Screw, _) => [rot, slide],
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinkModel<T> {
    pub name: String,
    pub parent: Option<usize>,
    pub joint: Option<JointModel<T>>,
    /// Inertia in the link frame.
    pub inertia: SpatialInertia<T>,
    pub semantic_label: String,
    pub collision: Vec<CollisionShape>,
}

/// Compiled articulation. Index 0 is the root link.
#[derive(Debug, Clone)]
pub struct Model<T = f64> {
    pub name: String,
    pub links: Vec<LinkModel<T>>,
    pub dof: usize,
    /// World pose of the root link.
    pub base: Transform<T>,
    pub gravity: Vec3<T>,
    link_index: HashMap<String, usize>,
    joint_link: HashMap<String, usize>,
}

pub fn default_gravity<T: Real>() -> Vec3<T> {
    Vec3::new(T::zero(), T::zero(), T::lit(-9.81))
}

impl<T: Real> Model<T> {
    pub fn from_spec(spec: &ArticulationSpec) -> Result<Self, ValidationError> {
        spec.validate()?;
        let mut offsets = HashMap::new();
        let mut dof = 0;
        for j in &spec.joints {
            offsets.insert(j.name.as_str(), dof);
            dof += j.dof();
        }
        let mut children: HashMap<&str, Vec<usize>> = HashMap::new();
        for (k, j) in spec.joints.iter().enumerate() {
            children.entry(j.parent_link.as_str()).or_default().push(k);
        }
        let link_spec = |name: &str| spec.link(name).expect("validated link");

        let root = link_spec(&spec.root_link);
        let mut links = vec![LinkModel {
            name: root.name.clone(),
            parent: None,
            joint: None,
            inertia: root.inertial.cast(),
            semantic_label: root.semantic_label.clone(),
            collision: root.collision.clone(),
        }];
        let mut queue = VecDeque::from([0usize]);
        while let Some(p) = queue.pop_front() {
            let pname = links[p].name.clone();
            for &k in children.get(pname.as_str()).map(Vec::as_slice).unwrap_or(&[]) {
                let j = &spec.joints[k];
                let limits = j.dof_limits();
                let bound = |i: usize, upper: bool| {
                    limits.get(i).map(|&(lo, hi)| T::lit(if upper { hi } else { lo })).unwrap_or_else(T::zero)
                };
                let jm = JointModel {
                    name: j.name.clone(),
                    kind: j.kind,
                    origin: j.origin.cast(),
                    axis: j.axis.cast(),
                    coupled: j.kind == JointKind::Screw && j.screw_coupled,
                    pitch: T::lit(j.screw_pitch.unwrap_or(0.0)),
                    offset: offsets[j.name.as_str()],
                    ndof: j.dof(),
                    lower: [bound(0, false), bound(1, false)],
                    upper: [bound(0, true), bound(1, true)],
                    damping: T::lit(j.damping),
                    friction: T::lit(j.friction),
                    effort_limit: T::lit(j.effort_limit),
                };
                let l = link_spec(&j.child_link);
                links.push(LinkModel {
                    name: l.name.clone(),
                    parent: Some(p),
                    joint: Some(jm),
                    inertia: l.inertial.cast(),
                    semantic_label: l.semantic_label.clone(),
                    collision: l.collision.clone(),
                });
                queue.push_back(links.len() - 1);
            }
        }
        let link_index = links.iter().enumerate().map(|(i, l)| (l.name.clone(), i)).collect();
        let joint_link =
            links.iter().enumerate().filter_map(|(i, l)| l.joint.as_ref().map(|j| (j.name.clone(), i))).collect();
        Ok(Model {
            name: spec.name.clone(),
            links,
            dof,
            base: Transform::identity(),
            gravity: default_gravity(),
            link_index,
            joint_link,
        })
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.link_index.get(name).copied()
    }

    /// Index of the link whose parent joint is `name`.
    pub fn joint_link(&self, name: &str) -> Option<usize> {
        self.joint_link.get(name).copied()
    }

    pub fn joint(&self, name: &str) -> Option<&JointModel<T>> {
        self.joint_link(name).and_then(|i| self.links[i].joint.as_ref())
    }

    pub fn joints(&self) -> impl Iterator<Item = &JointModel<T>> {
        self.links.iter().filter_map(|l| l.joint.as_ref())
    }

    /// `(lower, upper)` for every DOF in state-vector order.
    pub fn dof_limits(&self) -> Vec<(T, T)> {
        let mut out = vec![(T::neg_infinity(), T::infinity()); self.dof];
        for j in self.joints() {
            for i in 0..j.ndof {
                out[j.offset + i] = (j.lower[i], j.upper[i]);
            }
        }
        out
    }

    /// Per-DOF `(damping, friction, effort_limit)`.
    pub fn dof_coefficients(&self) -> Vec<(T, T, T)> {
        let mut out = vec![(T::zero(), T::zero(), T::infinity()); self.dof];
        for j in self.joints() {
            for i in 0..j.ndof {
                out[j.offset + i] = (j.damping, j.friction, j.effort_limit);
            }
        }
        out
    }

    /// Names of each DOF, suffixed `:rot` / `:slide` for two-DOF screws.
    pub fn dof_names(&self) -> Vec<String> {
        let mut out = vec![String::new(); self.dof];
        for j in self.joints() {
            match j.ndof {
                1 => out[j.offset] = j.name.clone(),
                2 => {
                    out[j.offset] = format!("{}:rot", j.name);
                    out[j.offset + 1] = format!("{}:slide", j.name);
                }
                _ => {}
            }
        }
        out
    }

    /// Clamps `q` into the joint limits, returning whether any entry moved.
    pub fn clamp_to_limits(&self, q: &mut [T]) -> bool {
        let mut moved = false;
        for (v, (lo, hi)) in q.iter_mut().zip(self.dof_limits()) {
            let c = v.max(lo).min(hi);
            moved |= c != *v;
            *v = c;
        }
        moved
    }

    /// Indices of links from the root to `link`, inclusive.
    pub fn path_to_root(&self, link: usize) -> Vec<usize> {
        let mut path = vec![link];
        let mut cur = link;
        while let Some(p) = self.links[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }
}
