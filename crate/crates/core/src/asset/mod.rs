//! Articulated-object descriptions: URDF subset, mobility sidecar,
//! property randomization and procedural cabinets.

pub mod bundled;
mod generate;
mod mobility;
mod randomize;
mod urdf;

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spatial::{Mat3, SpatialInertia, Transform, Vec3};

pub use generate::{generate_cabinet, CabinetConfig, GroundTruthMotion, HingeSide};
pub use mobility::{apply_mobility_sidecar, mobility_sidecar_for, MobilityDocument, MobilityEntry, MotionType};
pub use randomize::{randomize_properties, PhysicalPropertyRanges};
pub use urdf::{parse_urdf, write_urdf};

/// `continuous` URDF joints are clamped to `[-CONTINUOUS_LIMIT, CONTINUOUS_LIMIT]`.
pub const CONTINUOUS_LIMIT: f64 = 2.0 * std::f64::consts::PI;
/// Effort limit used when the URDF gives none.
pub const DEFAULT_EFFORT_LIMIT: f64 = 1e3;
/// Inertia assigned to links that declare no `<inertial>` element.
pub const DEFAULT_LINK_MASS: f64 = 1e-3;
const AXIS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssetError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(#[from] ValidationError),
    #[error("unsupported element: {0}")]
    UnsupportedElement(String),
    #[error("unknown joint `{0}`")]
    UnknownJoint(String),
    #[error("conflicting limits for joint `{joint}`: lower {lower} > upper {upper}")]
    ConflictingLimits { joint: String, lower: f64, upper: f64 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("joints form a cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("duplicate {kind} name `{name}`")]
    DuplicateName { kind: &'static str, name: String },
    #[error("joint `{joint}` references missing link `{link}`")]
    MissingLink { joint: String, link: String },
    #[error("link `{0}` has more than one parent joint")]
    MultipleParents(String),
    #[error("articulation has no root link")]
    NoRoot,
    #[error("articulation has several root links: {}", .0.join(", "))]
    MultipleRoots(Vec<String>),
    #[error("root link `{0}` is missing or has a parent joint")]
    BadRoot(String),
    #[error("joint `{joint}` has inverted or non-finite limits [{lower}, {upper}]")]
    InvertedLimits { joint: String, lower: f64, upper: f64 },
    #[error("joint `{0}` axis is not unit length")]
    NonUnitAxis(String),
    #[error("joint `{0}`: screw pitch must be present iff the joint is a coupled screw")]
    PitchMismatch(String),
    #[error("joint `{0}` has a negative or non-finite damping, friction or effort value")]
    BadCoefficient(String),
    #[error("link `{link}`: {reason}")]
    BadLink { link: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JointKind {
    Fixed,
    Hinge,
    Slider,
    Screw,
}

impl fmt::Display for JointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            JointKind::Fixed => "fixed",
            JointKind::Hinge => "hinge",
            JointKind::Slider => "slider",
            JointKind::Screw => "screw",
        };
        f.write_str(s)
    }
}

/// A joint between two links, including its mobility annotation.
///
/// Limits are radians for hinges and screw rotation, meters for sliders.
/// `slide_lower`/`slide_upper` bound the translational coordinate of an
/// uncoupled screw; `None` leaves it unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    pub kind: JointKind,
    pub origin: Transform<f64>,
    pub axis: Vec3<f64>,
    pub limit_lower: f64,
    pub limit_upper: f64,
    pub screw_coupled: bool,
    pub screw_pitch: Option<f64>,
    pub slide_lower: Option<f64>,
    pub slide_upper: Option<f64>,
    pub damping: f64,
    pub friction: f64,
    pub effort_limit: f64,
    pub parent_link: String,
    pub child_link: String,
}

impl JointSpec {
    /// A joint with zero limits, no damping and the default effort limit.
    pub fn new(name: &str, kind: JointKind, parent: &str, child: &str) -> Self {
        JointSpec {
            name: name.to_string(),
            kind,
            origin: Transform::identity(),
            axis: Vec3::unit_x(),
            limit_lower: 0.0,
            limit_upper: 0.0,
            screw_coupled: false,
            screw_pitch: None,
            slide_lower: None,
            slide_upper: None,
            damping: 0.0,
            friction: 0.0,
            effort_limit: DEFAULT_EFFORT_LIMIT,
            parent_link: parent.to_string(),
            child_link: child.to_string(),
        }
    }

    pub fn with_origin(mut self, origin: Transform<f64>) -> Self {
        self.origin = origin;
        self
    }

    pub fn with_axis(mut self, axis: Vec3<f64>) -> Self {
        self.axis = axis;
        self
    }

    pub fn with_limits(mut self, lower: f64, upper: f64) -> Self {
        self.limit_lower = lower;
        self.limit_upper = upper;
        self
    }

    /// Number of generalized coordinates this joint contributes.
    pub fn dof(&self) -> usize {
        match self.kind {
            JointKind::Fixed => 0,
            JointKind::Hinge | JointKind::Slider => 1,
            JointKind::Screw if self.screw_coupled => 1,
            JointKind::Screw => 2,
        }
    }

    /// Position bounds for each DOF of this joint, in state order.
    pub fn dof_limits(&self) -> Vec<(f64, f64)> {
        match self.dof() {
            0 => vec![],
            1 => vec![(self.limit_lower, self.limit_upper)],
            _ => vec![
                (self.limit_lower, self.limit_upper),
                (self.slide_lower.unwrap_or(f64::NEG_INFINITY), self.slide_upper.unwrap_or(f64::INFINITY)),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Geometry {
    Box { half_extents: Vec3<f64> },
    Sphere { radius: f64 },
    /// Cylinder aligned with the local z axis.
    Cylinder { radius: f64, half_length: f64 },
}

impl Geometry {
    fn dimensions_positive(&self) -> bool {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        match self {
            Geometry::Box { half_extents: h } => pos(h.x) && pos(h.y) && pos(h.z),
            Geometry::Sphere { radius } => pos(*radius),
            Geometry::Cylinder { radius, half_length } => pos(*radius) && pos(*half_length),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Geometry::Box { half_extents: h } => 8.0 * h.x * h.y * h.z,
            Geometry::Sphere { radius } => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
            Geometry::Cylinder { radius, half_length } => std::f64::consts::PI * radius * radius * 2.0 * half_length,
        }
    }

    /// Solid inertia about the primitive's own centre at uniform density.
    pub fn solid_inertia(&self, density: f64) -> SpatialInertia<f64> {
        let m = density * self.volume();
        let diag = match self {
            Geometry::Box { half_extents: h } => {
                Vec3::new(h.y * h.y + h.z * h.z, h.x * h.x + h.z * h.z, h.x * h.x + h.y * h.y) * (m / 3.0)
            }
            Geometry::Sphere { radius } => {
                let i = 0.4 * m * radius * radius;
                Vec3::new(i, i, i)
            }
            Geometry::Cylinder { radius, half_length } => {
                let side = m * (3.0 * radius * radius + 4.0 * half_length * half_length) / 12.0;
                Vec3::new(side, side, 0.5 * m * radius * radius)
            }
        };
        SpatialInertia { mass: m, com: Vec3::zeros(), inertia: Mat3::from_diagonal(diag) }
    }

    /// Radius of a sphere about the primitive centre that encloses it.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            Geometry::Box { half_extents } => half_extents.norm(),
            Geometry::Sphere { radius } => *radius,
            Geometry::Cylinder { radius, half_length } => (radius * radius + half_length * half_length).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionShape {
    pub geometry: Geometry,
    pub origin: Transform<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub name: String,
    pub inertial: SpatialInertia<f64>,
    pub collision: Vec<CollisionShape>,
    pub semantic_label: String,
}

impl LinkSpec {
    pub fn new(name: &str, inertial: SpatialInertia<f64>) -> Self {
        LinkSpec { name: name.to_string(), inertial, collision: Vec::new(), semantic_label: String::new() }
    }

    /// Link whose inertia comes from its collision primitives at `density`.
    pub fn from_primitives(name: &str, collision: Vec<CollisionShape>, density: f64) -> Self {
        let inertial = inertia_of_primitives(&collision, density)
            .unwrap_or_else(|| default_inertial());
        LinkSpec { name: name.to_string(), inertial, collision, semantic_label: String::new() }
    }
}

pub(crate) fn default_inertial() -> SpatialInertia<f64> {
    let i = DEFAULT_LINK_MASS * 1e-3;
    SpatialInertia { mass: DEFAULT_LINK_MASS, com: Vec3::zeros(), inertia: Mat3::from_diagonal(Vec3::new(i, i, i)) }
}

/// Composite inertia of solid primitives; `None` when there are none.
pub fn inertia_of_primitives(shapes: &[CollisionShape], density: f64) -> Option<SpatialInertia<f64>> {
    shapes
        .iter()
        .map(|s| s.geometry.solid_inertia(density).transformed(&s.origin))
        .reduce(|a, b| a.combine(&b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticulationSpec {
    pub name: String,
    pub links: Vec<LinkSpec>,
    pub joints: Vec<JointSpec>,
    pub root_link: String,
}

impl ArticulationSpec {
    pub fn dof(&self) -> usize {
        self.joints.iter().map(JointSpec::dof).sum()
    }

    pub fn link(&self, name: &str) -> Option<&LinkSpec> {
        self.links.iter().find(|l| l.name == name)
    }

    pub fn joint(&self, name: &str) -> Option<&JointSpec> {
        self.joints.iter().find(|j| j.name == name)
    }

    pub fn joint_mut(&mut self, name: &str) -> Option<&mut JointSpec> {
        self.joints.iter_mut().find(|j| j.name == name)
    }

    /// Checks the tree, naming, limit, axis and inertia invariants.
    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut link_names = HashSet::new();
        for l in &self.links {
            if !link_names.insert(l.name.as_str()) {
                return Err(ValidationError::DuplicateName { kind: "link", name: l.name.clone() });
            }
            if let Err(e) = l.inertial.validate() {
                return Err(ValidationError::BadLink { link: l.name.clone(), reason: e.to_string() });
            }
            if let Some(bad) = l.collision.iter().find(|c| !c.geometry.dimensions_positive()) {
                return Err(ValidationError::BadLink {
                    link: l.name.clone(),
                    reason: format!("non-positive primitive dimension in {:?}", bad.geometry),
                });
            }
        }
        let mut joint_names = HashSet::new();
        let mut parent_of: HashMap<&str, &JointSpec> = HashMap::new();
        for j in &self.joints {
            if !joint_names.insert(j.name.as_str()) {
                return Err(ValidationError::DuplicateName { kind: "joint", name: j.name.clone() });
            }
            for link in [&j.parent_link, &j.child_link] {
                if !link_names.contains(link.as_str()) {
                    return Err(ValidationError::MissingLink { joint: j.name.clone(), link: link.clone() });
                }
            }
            if parent_of.insert(j.child_link.as_str(), j).is_some() {
                return Err(ValidationError::MultipleParents(j.child_link.clone()));
            }
            validate_joint(j)?;
        }

        // Cycles first: a cycle leaves no parentless link to act as root.
        for start in &self.links {
            let mut path = vec![start.name.as_str()];
            let mut cur = start.name.as_str();
            while let Some(j) = parent_of.get(cur) {
                cur = j.parent_link.as_str();
                if let Some(pos) = path.iter().position(|n| *n == cur) {
                    let mut cycle: Vec<String> = path[pos..].iter().rev().map(|s| s.to_string()).collect();
                    cycle.push(cycle[0].clone());
                    return Err(ValidationError::Cycle(cycle));
                }
                path.push(cur);
            }
        }

        let roots: Vec<&str> = self
            .links
            .iter()
            .map(|l| l.name.as_str())
            .filter(|n| !parent_of.contains_key(n))
            .collect();
        match roots.len() {
            0 => return Err(ValidationError::NoRoot),
            1 => {}
            _ => return Err(ValidationError::MultipleRoots(roots.iter().map(|s| s.to_string()).collect())),
        }
        if roots[0] != self.root_link {
            return Err(ValidationError::BadRoot(self.root_link.clone()));
        }
        Ok(())
    }

    /// Canonical JSON: object keys sorted, no insignificant whitespace.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("spec serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AssetError> {
        let spec: ArticulationSpec = serde_json::from_str(text).map_err(|e| AssetError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

fn validate_joint(j: &JointSpec) -> Result<(), ValidationError> {
    let limits_ok = j.limit_lower.is_finite() && j.limit_upper.is_finite() && j.limit_lower <= j.limit_upper;
    if !limits_ok {
        return Err(ValidationError::InvertedLimits {
            joint: j.name.clone(),
            lower: j.limit_lower,
            upper: j.limit_upper,
        });
    }
    if let (Some(lo), Some(hi)) = (j.slide_lower, j.slide_upper) {
        if !(lo <= hi) {
            return Err(ValidationError::InvertedLimits { joint: j.name.clone(), lower: lo, upper: hi });
        }
    }
    if (j.axis.norm() - 1.0).abs() > AXIS_TOLERANCE {
        return Err(ValidationError::NonUnitAxis(j.name.clone()));
    }
    let wants_pitch = j.kind == JointKind::Screw && j.screw_coupled;
    if wants_pitch != j.screw_pitch.is_some() || j.screw_pitch.is_some_and(|p| !p.is_finite()) {
        return Err(ValidationError::PitchMismatch(j.name.clone()));
    }
    if j.kind != JointKind::Screw && j.screw_coupled {
        return Err(ValidationError::PitchMismatch(j.name.clone()));
    }
    let nonneg = |x: f64| x >= 0.0 && x.is_finite();
    if !nonneg(j.damping) || !nonneg(j.friction) || !(j.effort_limit > 0.0) {
        return Err(ValidationError::BadCoefficient(j.name.clone()));
    }
    if !j.origin.is_finite() {
        return Err(ValidationError::BadCoefficient(j.name.clone()));
    }
    Ok(())
}
