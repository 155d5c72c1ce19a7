//! Procedural cabinets with drawers (sliders) and doors (hinges).
//!
//! Cabinet frame: the body occupies `x ∈ [-depth/2, depth/2]`,
//! `y ∈ [-width/2, width/2]`, `z ∈ [0, height]`, with the open front facing
//! `+x`. Movable parts are stacked in rows, drawers below doors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ArticulationSpec, AssetError, CollisionShape, Geometry, JointKind, JointSpec, LinkSpec};
use crate::spatial::{Mat3, Quat, Transform, Vec3};

/// Maximum door opening angle.
pub const DOOR_OPEN_ANGLE: f64 = 135.0 * std::f64::consts::PI / 180.0;
/// Drawer travel as a fraction of cabinet depth.
pub const DRAWER_TRAVEL_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HingeSide {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CabinetConfig {
    pub width: f64,
    pub height: f64,
    pub depth: f64,
    pub wall: f64,
    pub drawers: usize,
    pub doors: usize,
    /// Clearance between movable parts and the body.
    pub gap: f64,
    pub handle_protrusion: f64,
    pub handle_length: f64,
    pub handle_thickness: f64,
    /// kg/m³ for the body panels.
    pub body_density: f64,
    /// kg/m³ for drawers, doors and handles.
    pub part_density: f64,
    /// Relative random perturbation of width, height and depth.
    pub jitter: f64,
    /// Door hinge side; `None` draws it from the seed.
    pub hinge_side: Option<HingeSide>,
    pub joint_damping: f64,
    pub joint_friction: f64,
}

impl Default for CabinetConfig {
    fn default() -> Self {
        CabinetConfig {
            width: 0.8,
            height: 0.9,
            depth: 0.5,
            wall: 0.02,
            drawers: 0,
            doors: 0,
            gap: 0.004,
            handle_protrusion: 0.05,
            handle_length: 0.12,
            handle_thickness: 0.02,
            body_density: 600.0,
            part_density: 400.0,
            jitter: 0.0,
            hinge_side: None,
            joint_damping: 0.2,
            joint_friction: 0.02,
        }
    }
}

impl CabinetConfig {
    fn validate(&self) -> Result<(), AssetError> {
        let positive = [
            ("width", self.width),
            ("height", self.height),
            ("depth", self.depth),
            ("wall", self.wall),
            ("handle_protrusion", self.handle_protrusion),
            ("handle_length", self.handle_length),
            ("handle_thickness", self.handle_thickness),
            ("body_density", self.body_density),
            ("part_density", self.part_density),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AssetError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(AssetError::InvalidConfig("jitter must lie in [0, 0.5)".into()));
        }
        if !(self.gap >= 0.0) || self.joint_damping < 0.0 || self.joint_friction < 0.0 {
            return Err(AssetError::InvalidConfig("gap, damping and friction must be non-negative".into()));
        }
        let min_dim = self.width.min(self.height).min(self.depth);
        if self.wall * 4.0 >= min_dim {
            return Err(AssetError::InvalidConfig("wall too thick for the cabinet dimensions".into()));
        }
        let rows = self.drawers + self.doors;
        if rows > 0 {
            let inner = self.height * (1.0 - self.jitter) - 2.0 * self.wall;
            let slot = (inner - (rows as f64 - 1.0) * self.wall) / rows as f64;
            if slot <= 2.0 * self.gap + self.wall || slot <= self.handle_thickness {
                return Err(AssetError::InvalidConfig(format!("{rows} parts do not fit in height {}", self.height)));
            }
        }
        Ok(())
    }
}

/// Ground-truth mobility of one generated movable part, at the closed pose
/// with the cabinet base at the world origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthMotion {
    pub joint: String,
    pub link: String,
    pub kind: JointKind,
    /// A point on the joint axis (world).
    pub pivot: Vec3<f64>,
    /// Unit axis direction (world); outward normal for drawers.
    pub direction: Vec3<f64>,
    pub limit: [f64; 2],
    /// Grasp frame at the handle centroid, in the part link frame. Its x axis
    /// is the approach axis.
    pub grasp_local: Transform<f64>,
    pub grasp_world: Transform<f64>,
    /// Direction the handle initially moves when the part opens (world).
    pub approach: Vec3<f64>,
    /// Outward normal of the part's front face (part link frame).
    pub front_normal_local: Vec3<f64>,
}

fn boxed(center: Vec3<f64>, half: Vec3<f64>) -> CollisionShape {
    CollisionShape { geometry: Geometry::Box { half_extents: half }, origin: Transform::from_translation(center) }
}

fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
    Vec3::new(x, y, z)
}

/// Frame with x along `approach` and z as close to world up as possible.
fn approach_frame(position: Vec3<f64>, approach: Vec3<f64>) -> Transform<f64> {
    let x = approach.try_normalize().unwrap_or(Vec3::unit_x());
    let up = Vec3::unit_z();
    let y = up.cross(&x).try_normalize().unwrap_or(Vec3::unit_y());
    let z = x.cross(&y);
    let m = Mat3::from_rows([[x.x, y.x, z.x], [x.y, y.y, z.y], [x.z, y.z, z.z]]);
    Transform::new(Quat::from_rotation_matrix(&m), position)
}

/// Generates a cabinet and the ground-truth motion of each movable part.
///
/// Drawer limits are `[0, 0.8·depth]` m along the outward normal, door
/// limits `[0, 135°]`. Equal config and seed give identical output.
pub fn generate_cabinet(config: &CabinetConfig, seed: u64) -> Result<(ArticulationSpec, Vec<GroundTruthMotion>), AssetError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jittered = |x: f64| x * (1.0 + config.jitter * rng.gen_range(-1.0..=1.0));
    let w = jittered(config.width);
    let h = jittered(config.height);
    let d = jittered(config.depth);
    let hinge_side = config.hinge_side.unwrap_or(if rng.gen::<bool>() { HingeSide::Left } else { HingeSide::Right });
    let t = config.wall;
    let g = config.gap;
    let (hp, hl, ht) = (config.handle_protrusion, config.handle_length, config.handle_thickness);

    let rows = config.drawers + config.doors;
    let inner_h = h - 2.0 * t;
    let slot_h = if rows > 0 { (inner_h - (rows as f64 - 1.0) * t) / rows as f64 } else { inner_h };

    let mut body_shapes = vec![
        boxed(v(-d / 2.0 + t / 2.0, 0.0, h / 2.0), v(t / 2.0, w / 2.0, h / 2.0)),
        boxed(v(t / 2.0, -w / 2.0 + t / 2.0, h / 2.0), v(d / 2.0 - t / 2.0, t / 2.0, h / 2.0)),
        boxed(v(t / 2.0, w / 2.0 - t / 2.0, h / 2.0), v(d / 2.0 - t / 2.0, t / 2.0, h / 2.0)),
        boxed(v(t / 2.0, 0.0, t / 2.0), v(d / 2.0 - t / 2.0, w / 2.0 - t, t / 2.0)),
        boxed(v(t / 2.0, 0.0, h - t / 2.0), v(d / 2.0 - t / 2.0, w / 2.0 - t, t / 2.0)),
    ];
    for i in 1..rows {
        let z = t + i as f64 * (slot_h + t) - t / 2.0;
        body_shapes.push(boxed(v(t / 2.0, 0.0, z), v(d / 2.0 - t / 2.0, w / 2.0 - t, t / 2.0)));
    }
    let mut body = LinkSpec::from_primitives("cabinet_body", body_shapes, config.body_density);
    body.semantic_label = "cabinet".into();

    let mut links = vec![body];
    let mut joints = Vec::new();
    let mut truth = Vec::new();

    for row in 0..rows {
        let zc = t + row as f64 * (slot_h + t) + slot_h / 2.0;
        if row < config.drawers {
            let k = row;
            let wi = w - 2.0 * t - 2.0 * g;
            let hi = slot_h - 2.0 * g;
            let dd = 0.9 * (d - t);
            let shapes = vec![
                // front panel, flush with the body front
                boxed(v(-t / 2.0, 0.0, 0.0), v(t / 2.0, wi / 2.0, hi / 2.0)),
                // tray bottom
                boxed(v(-(dd) / 2.0, 0.0, -hi / 2.0 + t / 2.0), v(dd / 2.0 - t, wi / 2.0, t / 2.0)),
                // back wall
                boxed(v(-dd + t / 2.0, 0.0, -hi / 2.0 + 0.3 * hi), v(t / 2.0, wi / 2.0, 0.3 * hi)),
                // handle bar
                boxed(v(hp / 2.0, 0.0, 0.0), v(hp / 2.0, hl / 2.0, ht / 2.0)),
            ];
            let link_name = format!("drawer_{k}");
            let joint_name = format!("drawer_{k}_slide");
            let mut link = LinkSpec::from_primitives(&link_name, shapes, config.part_density);
            link.semantic_label = "drawer".into();
            let origin = Transform::from_translation(v(d / 2.0, 0.0, zc));
            let mut j = JointSpec::new(&joint_name, JointKind::Slider, "cabinet_body", &link_name)
                .with_origin(origin)
                .with_axis(Vec3::unit_x())
                .with_limits(0.0, DRAWER_TRAVEL_FRACTION * d);
            j.damping = config.joint_damping;
            j.friction = config.joint_friction;
            let grasp_local = approach_frame(v(hp / 2.0, 0.0, 0.0), Vec3::unit_x());
            truth.push(GroundTruthMotion {
                joint: joint_name,
                link: link_name,
                kind: JointKind::Slider,
                pivot: origin.translation,
                direction: Vec3::unit_x(),
                limit: [j.limit_lower, j.limit_upper],
                grasp_local,
                grasp_world: origin.compose(&grasp_local),
                approach: Vec3::unit_x(),
                front_normal_local: Vec3::unit_x(),
            });
            links.push(link);
            joints.push(j);
        } else {
            let k = row - config.drawers;
            let (side, y_hinge, axis) = match hinge_side {
                HingeSide::Left => (1.0, -w / 2.0, -Vec3::unit_z()),
                HingeSide::Right => (-1.0, w / 2.0, Vec3::unit_z()),
            };
            let wd = w - 2.0 * g;
            let hd = slot_h;
            let margin = (0.1 * w).max(0.05);
            let handle_c = v(t + hp / 2.0, side * (w - margin), 0.0);
            let shapes = vec![
                boxed(v(t / 2.0, side * (g + wd / 2.0), 0.0), v(t / 2.0, wd / 2.0, hd / 2.0)),
                boxed(handle_c, v(hp / 2.0, ht / 2.0, hl / 2.0)),
            ];
            let link_name = format!("door_{k}");
            let joint_name = format!("door_{k}_hinge");
            let mut link = LinkSpec::from_primitives(&link_name, shapes, config.part_density);
            link.semantic_label = "rot. door".into();
            let origin = Transform::from_translation(v(d / 2.0, y_hinge, zc));
            let mut j = JointSpec::new(&joint_name, JointKind::Hinge, "cabinet_body", &link_name)
                .with_origin(origin)
                .with_axis(axis)
                .with_limits(0.0, DOOR_OPEN_ANGLE);
            j.damping = config.joint_damping;
            j.friction = config.joint_friction;
            let approach = axis.cross(&handle_c).try_normalize().unwrap_or(Vec3::unit_x());
            let grasp_local = approach_frame(handle_c, approach);
            truth.push(GroundTruthMotion {
                joint: joint_name,
                link: link_name,
                kind: JointKind::Hinge,
                pivot: origin.translation,
                direction: axis,
                limit: [j.limit_lower, j.limit_upper],
                grasp_local,
                grasp_world: origin.compose(&grasp_local),
                approach,
                front_normal_local: Vec3::unit_x(),
            });
            links.push(link);
            joints.push(j);
        }
    }

    let spec = ArticulationSpec { name: format!("cabinet_{seed}"), links, joints, root_link: "cabinet_body".into() };
    spec.validate()?;
    Ok((spec, truth))
}
