//! Pinhole camera by ray casting against collision primitives, point-cloud
//! lifting, hemisphere view sampling and an IMU.
//!
//! Camera frame: +z along the optical axis, +x right, +y down. Pixel `(u, v)`
//! looks along `((u - cx) / fx, (v - cy) / fy, 1)`.

use std::io::{Read, Write};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asset::Geometry;
use crate::scalar::Real;
use crate::scene::{LinkRef, Scene};
use crate::spatial::{Mat3, Quat, Transform, Vec3};

pub const FRAME_MAGIC: &[u8; 4] = b"MSF1";
pub const DEFAULT_RESOLUTION: u32 = 512;
pub const DEFAULT_FOCAL: f64 = 535.0;
const RAY_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("frame has no foreground pixels")]
    EmptyFrame,
    #[error("unknown link `{0}`")]
    UnknownLink(String),
    #[error("not a frame dump (bad magic)")]
    BadMagic,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        let c = DEFAULT_RESOLUTION as f64 / 2.0;
        CameraIntrinsics {
            width: DEFAULT_RESOLUTION,
            height: DEFAULT_RESOLUTION,
            fx: DEFAULT_FOCAL,
            fy: DEFAULT_FOCAL,
            cx: c,
            cy: c,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), SensorError> {
        if self.width == 0 || self.height == 0 {
            return Err(SensorError::InvalidIntrinsics("width and height must be at least 1".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(SensorError::InvalidIntrinsics("focal lengths must be positive".into()));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(SensorError::InvalidIntrinsics("principal point must be finite".into()));
        }
        Ok(())
    }

    /// Pixel coordinates of a camera-frame point with positive depth.
    pub fn project(&self, p: &Vec3<f64>) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Camera-frame point at pixel `(u, v)` and depth `d`.
    pub fn unproject(&self, u: f64, v: f64, d: f64) -> Vec3<f64> {
        Vec3::new((u - self.cx) / self.fx * d, (v - self.cy) / self.fy * d, d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub width: u32,
    pub height: u32,
    /// Camera-z distance in metres, 0 for background.
    pub depth: Vec<f64>,
    /// Camera-frame unit normals facing the camera; zero for background.
    pub normal: Vec<[f64; 3]>,
    /// Owning link id, 0 for background.
    pub segmentation: Vec<u32>,
    pub pose: Transform<f64>,
    pub timestamp: f64,
}

impl SensorFrame {
    pub fn index(&self, u: u32, v: u32) -> usize {
        (v * self.width + u) as usize
    }

    pub fn foreground_count(&self) -> usize {
        self.segmentation.iter().filter(|&&s| s != 0).count()
    }

    /// Writes the MSF1 dump: magic, width and height (u32 LE), then row-major
    /// f32 depth, 3×f32 normals and u32 segmentation.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), SensorError> {
        let n = self.depth.len();
        let mut buf = Vec::with_capacity(12 + n * 20);
        buf.extend_from_slice(FRAME_MAGIC);
        buf.extend_from_slice(&self.width.to_le_bytes());
        buf.extend_from_slice(&self.height.to_le_bytes());
        for d in &self.depth {
            buf.extend_from_slice(&(*d as f32).to_le_bytes());
        }
        for nrm in &self.normal {
            for c in nrm {
                buf.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        for s in &self.segmentation {
            buf.extend_from_slice(&s.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads an MSF1 dump. Pose and timestamp are not stored and come back as
    /// identity and 0.
    pub fn read_from<R: Read>(mut r: R) -> Result<Self, SensorError> {
        let mut head = [0u8; 12];
        r.read_exact(&mut head)?;
        if &head[..4] != FRAME_MAGIC {
            return Err(SensorError::BadMagic);
        }
        let width = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes"));
        let height = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes"));
        let n = width as usize * height as usize;
        let mut body = vec![0u8; n * 20];
        r.read_exact(&mut body)?;
        let word = |i: usize| -> [u8; 4] { body[4 * i..4 * i + 4].try_into().expect("4 bytes") };
        let depth = (0..n).map(|i| f32::from_le_bytes(word(i)) as f64).collect();
        let normal = (0..n)
            .map(|i| {
                let b = n + 3 * i;
                [0, 1, 2].map(|k| f32::from_le_bytes(word(b + k)) as f64)
            })
            .collect();
        let segmentation = (0..n).map(|i| u32::from_le_bytes(word(4 * n + i))).collect();
        Ok(SensorFrame { width, height, depth, normal, segmentation, pose: Transform::identity(), timestamp: 0.0 })
    }
}

/// A link's place in the segmentation id space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub id: u32,
    pub link: LinkRef,
    pub name: String,
    pub semantic_label: String,
}

/// Segmentation ids: articulation links in order starting at 1, then free bodies.
pub fn segment_ids<T: Real>(scene: &Scene<T>) -> Vec<SegmentInfo> {
    let mut out = Vec::new();
    for (ai, a) in scene.articulations.iter().enumerate() {
        for (li, l) in a.model.links.iter().enumerate() {
            out.push(SegmentInfo {
                id: out.len() as u32 + 1,
                link: LinkRef::Articulation { articulation: ai, link: li },
                name: l.name.clone(),
                semantic_label: l.semantic_label.clone(),
            });
        }
    }
    for (bi, b) in scene.bodies.iter().enumerate() {
        out.push(SegmentInfo {
            id: out.len() as u32 + 1,
            link: LinkRef::Body(bi),
            name: b.name.clone(),
            semantic_label: "gripper".into(),
        });
    }
    out
}

/// A collision primitive placed in the world.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldPrimitive {
    pub geometry: Geometry,
    pub pose: Transform<f64>,
    pub id: u32,
}

/// Every collision primitive of the scene at its current pose.
pub fn world_primitives<T: Real>(scene: &Scene<T>) -> Vec<WorldPrimitive> {
    let mut out = Vec::new();
    let mut id = 0u32;
    for a in &scene.articulations {
        let poses = a.link_poses();
        for (l, x) in a.model.links.iter().zip(&poses) {
            id += 1;
            let x: Transform<f64> = x.cast();
            for s in &l.collision {
                out.push(WorldPrimitive { geometry: s.geometry.clone(), pose: x.compose(&s.origin), id });
            }
        }
    }
    for b in &scene.bodies {
        id += 1;
        let x: Transform<f64> = b.pose.cast();
        for s in &b.collision {
            out.push(WorldPrimitive { geometry: s.geometry.clone(), pose: x.compose(&s.origin), id });
        }
    }
    out
}

/// Nearest positive hit of a local-frame ray: parameter and local normal.
pub fn intersect_local(geometry: &Geometry, o: &Vec3<f64>, d: &Vec3<f64>) -> Option<(f64, Vec3<f64>)> {
    match geometry {
        Geometry::Sphere { radius } => {
            let a = d.dot(d);
            let b = o.dot(d);
            let c = o.dot(o) - radius * radius;
            let disc = b * b - a * c;
            if disc < 0.0 {
                return None;
            }
            let s = disc.sqrt();
            let t = [(-b - s) / a, (-b + s) / a].into_iter().find(|&t| t > RAY_EPS)?;
            let p = *o + *d * t;
            Some((t, p / *radius))
        }
        Geometry::Box { half_extents: h } => {
            let (o, d, h) = (o.to_array(), d.to_array(), h.to_array());
            let (mut t0, mut t1, mut axis, mut sign) = (f64::NEG_INFINITY, f64::INFINITY, 0usize, 0.0);
            for k in 0..3 {
                if d[k] == 0.0 {
                    if o[k].abs() > h[k] {
                        return None;
                    }
                    continue;
                }
                let (a, b) = ((-h[k] - o[k]) / d[k], (h[k] - o[k]) / d[k]);
                let (near, far) = if a < b { (a, b) } else { (b, a) };
                if near > t0 {
                    t0 = near;
                    axis = k;
                    sign = -d[k].signum();
                }
                t1 = t1.min(far);
            }
            if t0 > t1 || t0 <= RAY_EPS {
                return None;
            }
            let mut n = [0.0; 3];
            n[axis] = sign;
            Some((t0, Vec3::new(n[0], n[1], n[2])))
        }
        Geometry::Cylinder { radius, half_length } => {
            let mut best: Option<(f64, Vec3<f64>)> = None;
            let mut consider = |t: f64, n: Vec3<f64>| {
                if t > RAY_EPS && best.map_or(true, |(b, _)| t < b) {
                    best = Some((t, n));
                }
            };
            let a = d.x * d.x + d.y * d.y;
            if a > 0.0 {
                let b = o.x * d.x + o.y * d.y;
                let c = o.x * o.x + o.y * o.y - radius * radius;
                let disc = b * b - a * c;
                if disc >= 0.0 {
                    let s = disc.sqrt();
                    for t in [(-b - s) / a, (-b + s) / a] {
                        let p = *o + *d * t;
                        if p.z.abs() <= *half_length {
                            consider(t, Vec3::new(p.x / radius, p.y / radius, 0.0));
                        }
                    }
                }
            }
            if d.z != 0.0 {
                for z in [-*half_length, *half_length] {
                    let t = (z - o.z) / d.z;
                    let p = *o + *d * t;
                    if p.x * p.x + p.y * p.y <= radius * radius {
                        consider(t, Vec3::new(0.0, 0.0, z.signum()));
                    }
                }
            }
            best
        }
    }
}

/// Nearest hit of a world ray over all primitives: parameter, world normal, id.
fn bounding_radius(g: &Geometry) -> f64 {
    match g {
        Geometry::Sphere { radius } => *radius,
        Geometry::Box { half_extents } => half_extents.norm(),
        Geometry::Cylinder { radius, half_length } => radius.hypot(*half_length),
    }
}

pub fn cast_ray(prims: &[WorldPrimitive], origin: &Vec3<f64>, dir: &Vec3<f64>) -> Option<(f64, Vec3<f64>, u32)> {
    let mut best: Option<(f64, Vec3<f64>, u32)> = None;
    let dd = dir.dot(dir);
    for p in prims {
        let r = bounding_radius(&p.geometry);
        let oc = p.pose.translation - *origin;
        let along = oc.dot(dir);
        let oc2 = oc.dot(&oc);
        if oc2 - along * along / dd > r * r || (along < 0.0 && oc2 > r * r) {
            continue;
        }
        if let Some((b, _, _)) = best {
            if along / dd - r / dd.sqrt() > b {
                continue;
            }
        }
        let o = p.pose.inverse_transform_point(origin);
        let d = p.pose.rotation.inverse_rotate(dir);
        if let Some((t, n)) = intersect_local(&p.geometry, &o, &d) {
            if best.map_or(true, |(b, _, _)| t < b) {
                best = Some((t, p.pose.rotation.rotate(&n), p.id));
            }
        }
    }
    best
}

/// Renders depth, normal and segmentation channels from `camera` (camera-to-world pose).
pub fn render<T: Real>(scene: &Scene<T>, camera: &Transform<f64>, intrinsics: &CameraIntrinsics) -> Result<SensorFrame, SensorError> {
    intrinsics.validate()?;
    let mut frame = render_primitives(&world_primitives(scene), camera, intrinsics)?;
    frame.timestamp = scene.time().as_f64();
    Ok(frame)
}

pub fn render_primitives(
    prims: &[WorldPrimitive],
    camera: &Transform<f64>,
    intr: &CameraIntrinsics,
) -> Result<SensorFrame, SensorError> {
    intr.validate()?;
    let (w, h) = (intr.width as usize, intr.height as usize);
    let rows: Vec<Vec<(f64, [f64; 3], u32)>> = (0..h)
        .into_par_iter()
        .map(|v| {
            (0..w)
                .map(|u| {
                    let dc = Vec3::new((u as f64 - intr.cx) / intr.fx, (v as f64 - intr.cy) / intr.fy, 1.0);
                    let dw = camera.rotation.rotate(&dc);
                    match cast_ray(prims, &camera.translation, &dw) {
                        None => (0.0, [0.0; 3], 0),
                        Some((t, n, id)) => {
                            let mut nc = camera.rotation.inverse_rotate(&n);
                            if nc.dot(&dc) > 0.0 {
                                nc = -nc;
                            }
                            (t, nc.to_array(), id)
                        }
                    }
                })
                .collect()
        })
        .collect();
    let mut frame = SensorFrame {
        width: intr.width,
        height: intr.height,
        depth: Vec::with_capacity(w * h),
        normal: Vec::with_capacity(w * h),
        segmentation: Vec::with_capacity(w * h),
        pose: *camera,
        timestamp: 0.0,
    };
    for (d, n, s) in rows.into_iter().flatten() {
        frame.depth.push(d);
        frame.normal.push(n);
        frame.segmentation.push(s);
    }
    Ok(frame)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftedPoint {
    /// Camera-frame position.
    pub xyz: [f64; 3],
    pub link: u32,
    /// Source pixel.
    pub pixel: [u32; 2],
}

/// Back-projects foreground pixels and samples exactly `n` of them, without
/// replacement when enough exist and topping up with random copies otherwise.
pub fn lift_point_cloud(frame: &SensorFrame, intr: &CameraIntrinsics, n: usize, seed: u64) -> Result<Vec<LiftedPoint>, SensorError> {
    if n == 0 {
        return Err(SensorError::InvalidArgument("point count must be at least 1".into()));
    }
    let mut all = Vec::new();
    for v in 0..frame.height {
        for u in 0..frame.width {
            let i = frame.index(u, v);
            if frame.segmentation[i] != 0 {
                let p = intr.unproject(u as f64, v as f64, frame.depth[i]);
                all.push(LiftedPoint { xyz: p.to_array(), link: frame.segmentation[i], pixel: [u, v] });
            }
        }
    }
    if all.is_empty() {
        return Err(SensorError::EmptyFrame);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if all.len() >= n {
        return Ok(sample(&mut rng, all.len(), n).into_iter().map(|i| all[i]).collect());
    }
    let extra: Vec<LiftedPoint> = (0..n - all.len()).map(|_| all[rng.gen_range(0..all.len())]).collect();
    all.extend(extra);
    Ok(all)
}

/// Camera pose at `eye` looking at `target`, image "up" towards `up`.
pub fn look_at(eye: &Vec3<f64>, target: &Vec3<f64>, up: &Vec3<f64>) -> Transform<f64> {
    let f = (*target - *eye).try_normalize().unwrap_or_else(Vec3::unit_z);
    let right = f.cross(up).try_normalize().unwrap_or_else(|| f.cross(&Vec3::unit_y()).try_normalize().unwrap_or_else(Vec3::unit_x));
    let down = f.cross(&right);
    let m = Mat3::from_rows([[right.x, down.x, f.x], [right.y, down.y, f.y], [right.z, down.z, f.z]]);
    Transform::new(Quat::from_rotation_matrix(&m), *eye)
}

/// `k` camera poses uniform in area over the upper hemisphere, each looking at `center`.
pub fn sample_hemisphere_views(center: &Vec3<f64>, radius: f64, k: usize, seed: u64) -> Result<Vec<Transform<f64>>, SensorError> {
    if !(radius > 0.0 && radius.is_finite()) || k == 0 {
        return Err(SensorError::InvalidArgument("radius must be positive and k at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..k)
        .map(|_| {
            let z: f64 = rng.gen_range(0.0..=1.0);
            let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let s = (1.0 - z * z).max(0.0).sqrt();
            let eye = *center + Vec3::new(s * phi.cos(), s * phi.sin(), z) * radius;
            look_at(&eye, center, &Vec3::unit_z())
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuReading {
    pub orientation: Quat<f64>,
    /// Body frame, rad/s.
    pub angular_velocity: [f64; 3],
    /// Body-frame specific force, m/s².
    pub linear_acceleration: [f64; 3],
}

pub fn read_imu<T: Real>(scene: &Scene<T>, link: &str) -> Result<ImuReading, SensorError> {
    let r = scene.find_link(link).ok_or_else(|| SensorError::UnknownLink(link.to_string()))?;
    read_imu_at(scene, r)
}

/// IMU at the origin of `link`, using the accelerations of the last step.
pub fn read_imu_at<T: Real>(scene: &Scene<T>, link: LinkRef) -> Result<ImuReading, SensorError> {
    let unknown = || SensorError::UnknownLink(format!("{link:?}"));
    let (pose, omega, accel) = match link {
        LinkRef::Body(b) => {
            let body = scene.bodies.get(b).ok_or_else(unknown)?;
            (body.pose, body.angular_velocity, body.last_acceleration.linear)
        }
        LinkRef::Articulation { articulation, link } => {
            let a = scene.articulations.get(articulation).ok_or_else(unknown)?;
            if link >= a.model.links.len() {
                return Err(unknown());
            }
            let poses = a.link_poses();
            let vel = a.model.link_velocities(&poses, &a.state.qd).map_err(|_| unknown())?[link];
            let acc = a.model.link_accelerations(&poses, &a.state.qd, &a.last_qdd).map_err(|_| unknown())?[link];
            let p = poses[link].translation;
            let lin = acc.linear + acc.angular.cross(&p) + vel.angular.cross(&vel.point_velocity(&p));
            (poses[link], vel.angular, lin)
        }
    };
    let specific = accel - scene.gravity();
    let rot = pose.rotation;
    Ok(ImuReading {
        orientation: rot.cast(),
        angular_velocity: rot.inverse_rotate(&omega).cast().to_array(),
        linear_acceleration: rot.inverse_rotate(&specific).cast().to_array(),
    })
}
