#![allow(dead_code)]

use mobilisim::asset::{ArticulationSpec, JointKind, JointSpec, LinkSpec};
use mobilisim::spatial::{Mat3, Quat, SpatialInertia, Transform, Vec3};
use nalgebra::{Matrix4, Rotation3, Translation3, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_vec(r: &mut ChaCha8Rng, scale: f64) -> Vec3<f64> {
    Vec3::new(r.gen_range(-scale..scale), r.gen_range(-scale..scale), r.gen_range(-scale..scale))
}

pub fn rand_unit(r: &mut ChaCha8Rng) -> Vec3<f64> {
    loop {
        if let Some(v) = rand_vec(r, 1.0).try_normalize() {
            return v;
        }
    }
}

pub fn rand_rotation(r: &mut ChaCha8Rng) -> Quat<f64> {
    Quat::from_rotation_vector(&(rand_unit(r) * r.gen_range(0.0..std::f64::consts::PI)))
}

pub fn rand_inertia(r: &mut ChaCha8Rng) -> SpatialInertia<f64> {
    let mass = r.gen_range(0.5..2.0);
    let d = Mat3::from_diagonal(Vec3::new(r.gen_range(0.01..0.2), r.gen_range(0.01..0.2), r.gen_range(0.01..0.2)));
    let rot = rand_rotation(r).to_matrix();
    let i = rot.mul_mat(&d).mul_mat(&rot.transpose());
    let sym = (i + i.transpose()).scale(0.5);
    SpatialInertia::new(mass, rand_vec(r, 0.3), sym).unwrap()
}

/// Random tree with at most `max_dof` DOF over every joint kind.
pub fn random_tree(seed: u64, max_links: usize, max_dof: usize) -> ArticulationSpec {
    let mut r = rng(seed);
    let n = r.gen_range(2..=max_links);
    let mut links = vec![LinkSpec::new("l0", rand_inertia(&mut r))];
    let mut joints = Vec::new();
    let mut dof = 0;
    for k in 1..n {
        let parent = r.gen_range(0..k);
        let remaining = max_dof - dof;
        let mut kind = match r.gen_range(0..10) {
            0..=3 => (JointKind::Hinge, true),
            4..=5 => (JointKind::Slider, true),
            6 => (JointKind::Screw, true),
            7..=8 => (JointKind::Screw, false),
            _ => (JointKind::Fixed, true),
        };
        let need = match kind {
            (JointKind::Fixed, _) => 0,
            (JointKind::Screw, false) => 2,
            _ => 1,
        };
        if need > remaining {
            kind = if remaining >= 1 { (JointKind::Hinge, true) } else { (JointKind::Fixed, true) };
        }
        let name = format!("l{k}");
        let mut j = JointSpec::new(&format!("j{k}"), kind.0, &format!("l{parent}"), &name)
            .with_origin(Transform::new(rand_rotation(&mut r), rand_vec(&mut r, 0.8)))
            .with_axis(rand_unit(&mut r))
            .with_limits(-10.0, 10.0);
        if kind.0 == JointKind::Screw {
            j.screw_coupled = kind.1;
            if kind.1 {
                j.screw_pitch = Some(r.gen_range(-0.2..0.2));
            } else {
                j.slide_lower = Some(-10.0);
                j.slide_upper = Some(10.0);
            }
        }
        dof += j.dof();
        joints.push(j);
        links.push(LinkSpec::new(&name, rand_inertia(&mut r)));
    }
    let spec = ArticulationSpec { name: format!("tree{seed}"), links, joints, root_link: "l0".into() };
    spec.validate().unwrap();
    spec
}

/// Serial chain of hinges with alternating axes; link lengths 0.3 m.
pub fn six_dof_chain() -> ArticulationSpec {
    let axes = [Vec3::unit_z(), Vec3::unit_y(), Vec3::unit_y(), Vec3::unit_x(), Vec3::unit_y(), Vec3::unit_x()];
    let mut links = vec![LinkSpec::new("l0", SpatialInertia::point_mass(1.0, Vec3::zeros()))];
    let mut joints = Vec::new();
    for (k, a) in axes.iter().enumerate() {
        let name = format!("l{}", k + 1);
        let offset = if k == 0 { Vec3::zeros() } else { Vec3::new(0.0, 0.0, 0.3) };
        joints.push(
            JointSpec::new(&format!("j{}", k + 1), JointKind::Hinge, &format!("l{k}"), &name)
                .with_origin(Transform::from_translation(offset))
                .with_axis(*a)
                .with_limits(-2.8, 2.8),
        );
        links.push(LinkSpec::new(&name, SpatialInertia::point_mass(1.0, Vec3::new(0.0, 0.0, 0.15))));
    }
    joints.push(
        JointSpec::new("ee", JointKind::Fixed, "l6", "ee")
            .with_origin(Transform::from_translation(Vec3::new(0.0, 0.0, 0.2))),
    );
    links.push(LinkSpec::new("ee", SpatialInertia::point_mass(0.1, Vec3::zeros())));
    ArticulationSpec { name: "chain6".into(), links, joints, root_link: "l0".into() }
}

fn homogeneous(t: &Transform<f64>) -> Matrix4<f64> {
    let q = t.rotation;
    let uq = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q.w, q.x, q.y, q.z));
    Translation3::new(t.translation.x, t.translation.y, t.translation.z).to_homogeneous() * uq.to_homogeneous()
}

/// FK by homogeneous 4×4 products, independent of the crate's transforms.
pub fn oracle_fk(spec: &ArticulationSpec, q: &[f64]) -> std::collections::HashMap<String, Matrix4<f64>> {
    let mut offsets = std::collections::HashMap::new();
    let mut o = 0;
    for j in &spec.joints {
        offsets.insert(j.name.clone(), o);
        o += j.dof();
    }
    let mut out = std::collections::HashMap::new();
    out.insert(spec.root_link.clone(), Matrix4::identity());
    while out.len() < spec.links.len() {
        for j in &spec.joints {
            if out.contains_key(&j.child_link) {
                continue;
            }
            let Some(parent) = out.get(&j.parent_link).copied() else { continue };
            let a = Vector3::new(j.axis.x, j.axis.y, j.axis.z);
            let ua = Unit::new_normalize(a);
            let qi = &q[offsets[&j.name]..];
            let motion = match j.kind {
                JointKind::Fixed => Matrix4::identity(),
                JointKind::Hinge => Rotation3::from_axis_angle(&ua, qi[0]).to_homogeneous(),
                JointKind::Slider => Translation3::from(a * qi[0]).to_homogeneous(),
                JointKind::Screw if j.screw_coupled => {
                    Translation3::from(a * (j.screw_pitch.unwrap() * qi[0])).to_homogeneous()
                        * Rotation3::from_axis_angle(&ua, qi[0]).to_homogeneous()
                }
                JointKind::Screw => {
                    Translation3::from(a * qi[1]).to_homogeneous() * Rotation3::from_axis_angle(&ua, qi[0]).to_homogeneous()
                }
            };
            out.insert(j.child_link.clone(), parent * homogeneous(&j.origin) * motion);
        }
    }
    out
}

pub fn random_q(r: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-scale..scale)).collect()
}

/// Point mass of 1 kg at 1 m below a hinge about y, optionally damped.
pub fn pendulum(damping: f64) -> ArticulationSpec {
    serial_chain(1, damping)
}

/// `n` unit point masses hanging 1 m apart from hinges about y.
pub fn serial_chain(n: usize, damping: f64) -> ArticulationSpec {
    let mut links = vec![LinkSpec::new("base", SpatialInertia::point_mass(1.0, Vec3::zeros()))];
    let mut joints = Vec::new();
    for i in 0..n {
        let name = format!("l{i}");
        let parent = if i == 0 { "base".to_string() } else { format!("l{}", i - 1) };
        let mut inertia = SpatialInertia::point_mass(1.0, Vec3::new(0.0, 0.0, -1.0));
        inertia.inertia = Mat3::from_diagonal(Vec3::new(1e-3, 1e-3, 1e-3));
        links.push(LinkSpec::new(&name, inertia));
        let origin = if i == 0 { Vec3::zeros() } else { Vec3::new(0.0, 0.0, -1.0) };
        let mut j = JointSpec::new(&format!("j{i}"), JointKind::Hinge, &parent, &name)
            .with_origin(Transform::from_translation(origin))
            .with_axis(Vec3::unit_y())
            .with_limits(-100.0, 100.0);
        j.damping = damping;
        joints.push(j);
    }
    ArticulationSpec { name: format!("chain{n}"), links, joints, root_link: "base".into() }
}
