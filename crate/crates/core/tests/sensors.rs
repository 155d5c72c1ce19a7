mod common;

use common::*;
use mobilisim::asset::{ArticulationSpec, CollisionShape, Geometry, JointKind, JointSpec, LinkSpec};
use mobilisim::scene::{ArticulationMode, FreeBody, Scene, SceneConfig};
use mobilisim::sensors::*;
use mobilisim::spatial::{Quat, SpatialInertia, Transform, Vec3};
use mobilisim::ArticulationState;
use proptest::prelude::*;
use rand::Rng;

fn prim(geometry: Geometry, at: Vec3<f64>, id: u32) -> WorldPrimitive {
    WorldPrimitive { geometry, pose: Transform::from_translation(at), id }
}

fn small(w: u32, h: u32, f: f64) -> CameraIntrinsics {
    CameraIntrinsics { width: w, height: h, fx: f, fy: f, cx: w as f64 / 2.0, cy: h as f64 / 2.0 }
}

#[test]
fn sphere_ahead_has_analytic_depth_and_normal() {
    let prims = [prim(Geometry::Sphere { radius: 1.0 }, Vec3::new(0.0, 0.0, 5.0), 3)];
    let intr = CameraIntrinsics::default();
    let f = render_primitives(&prims, &Transform::identity(), &intr).unwrap();
    let c = f.index(256, 256);
    assert!((f.depth[c] - 4.0).abs() < 1e-5);
    let n = f.normal[c];
    assert!(n[0].abs() < 1e-12 && n[1].abs() < 1e-12 && (n[2] + 1.0).abs() < 1e-12);
    assert_eq!(f.segmentation[c], 3);
    assert_eq!(f.segmentation[f.index(0, 0)], 0);
}

#[test]
fn empty_scene_renders_background() {
    let s: Scene = Scene::new(SceneConfig::default()).unwrap();
    let f = render(&s, &Transform::identity(), &small(32, 24, 30.0)).unwrap();
    assert_eq!(f.depth.len(), 32 * 24);
    assert!(f.depth.iter().all(|&d| d == 0.0));
    assert!(f.segmentation.iter().all(|&s| s == 0));
}

#[test]
fn box_face_gives_constant_depth() {
    // face at z = 3 - 0.5; slab oracle: every covered pixel sees exactly 2.5
    let prims = [prim(Geometry::Box { half_extents: Vec3::new(1.0, 0.7, 0.5) }, Vec3::new(0.1, -0.2, 3.0), 1)];
    let f = render_primitives(&prims, &Transform::identity(), &small(64, 64, 40.0)).unwrap();
    let covered: Vec<f64> = f.depth.iter().copied().filter(|&d| d > 0.0).collect();
    assert!(covered.len() > 500);
    for d in covered {
        assert!((d - 2.5).abs() < 1e-9, "{d}");
    }
    for (n, s) in f.normal.iter().zip(&f.segmentation) {
        if *s != 0 {
            assert_eq!(*n, [0.0, 0.0, -1.0]);
        }
    }
}

#[test]
fn cylinder_side_and_cap_hits() {
    // cylinder along world x seen from above: the side faces the camera
    let pose = Transform::new(Quat::from_rotation_vector(&Vec3::new(0.0, std::f64::consts::FRAC_PI_2, 0.0)), Vec3::new(0.0, 0.0, 4.0));
    let prims = [WorldPrimitive { geometry: Geometry::Cylinder { radius: 0.5, half_length: 1.0 }, pose, id: 1 }];
    let intr = small(64, 64, 50.0);
    let f = render_primitives(&prims, &Transform::identity(), &intr).unwrap();
    let c = f.index(32, 32);
    assert!((f.depth[c] - 3.5).abs() < 1e-12);
    // end cap: look along the axis
    let cam = look_at(&Vec3::new(-5.0, 0.0, 4.0), &Vec3::new(0.0, 0.0, 4.0), &Vec3::unit_z());
    let f = render_primitives(&prims, &cam, &intr).unwrap();
    assert!((f.depth[c] - 4.0).abs() < 1e-12);
    let n = f.normal[c];
    assert!((n[2] + 1.0).abs() < 1e-12);
}

#[test]
fn nearer_primitive_occludes() {
    let prims = [
        prim(Geometry::Sphere { radius: 1.0 }, Vec3::new(0.0, 0.0, 8.0), 1),
        prim(Geometry::Sphere { radius: 0.5 }, Vec3::new(0.0, 0.0, 4.0), 2),
    ];
    let f = render_primitives(&prims, &Transform::identity(), &small(32, 32, 20.0)).unwrap();
    assert_eq!(f.segmentation[f.index(16, 16)], 2);
    assert!((f.depth[f.index(16, 16)] - 3.5).abs() < 1e-12);
}

#[test]
fn invalid_intrinsics_are_rejected() {
    let bad = CameraIntrinsics { fx: 0.0, ..CameraIntrinsics::default() };
    assert!(matches!(render_primitives(&[], &Transform::identity(), &bad), Err(SensorError::InvalidIntrinsics(_))));
    let bad = CameraIntrinsics { width: 0, ..CameraIntrinsics::default() };
    assert!(bad.validate().is_err());
}

#[test]
fn center_pixel_lifts_onto_optical_axis() {
    let prims = [prim(Geometry::Sphere { radius: 1.0 }, Vec3::new(0.0, 0.0, 5.0), 1)];
    let intr = small(64, 64, 60.0);
    let f = render_primitives(&prims, &Transform::identity(), &intr).unwrap();
    let p = intr.unproject(32.0, 32.0, f.depth[f.index(32, 32)]);
    assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12 && (p.z - 4.0).abs() < 1e-12);
}

#[test]
fn lifting_duplicates_when_short() {
    let intr = small(20, 20, 10.0);
    let mut f = render_primitives(&[], &Transform::identity(), &intr).unwrap();
    for i in 0..100 {
        f.depth[i * 3] = 1.0 + i as f64;
        f.segmentation[i * 3] = 7;
    }
    let pts = lift_point_cloud(&f, &intr, 10_000, 1).unwrap();
    assert_eq!(pts.len(), 10_000);
    let mut seen = std::collections::BTreeSet::new();
    for p in &pts {
        let i = f.index(p.pixel[0], p.pixel[1]);
        assert_eq!(f.segmentation[i], 7);
        let want = intr.unproject(p.pixel[0] as f64, p.pixel[1] as f64, f.depth[i]);
        assert_eq!(p.xyz, want.to_array());
        seen.insert(i);
    }
    assert_eq!(seen.len(), 100);
}

#[test]
fn lifting_samples_without_replacement_when_enough() {
    let prims = [prim(Geometry::Sphere { radius: 1.0 }, Vec3::new(0.0, 0.0, 3.0), 1)];
    let intr = small(64, 64, 40.0);
    let f = render_primitives(&prims, &Transform::identity(), &intr).unwrap();
    let pts = lift_point_cloud(&f, &intr, 50, 4).unwrap();
    let distinct: std::collections::BTreeSet<_> = pts.iter().map(|p| p.pixel).collect();
    assert_eq!(distinct.len(), 50);
    assert_eq!(pts, lift_point_cloud(&f, &intr, 50, 4).unwrap());
}

#[test]
fn lifting_empty_frame_fails() {
    let intr = small(8, 8, 10.0);
    let f = render_primitives(&[], &Transform::identity(), &intr).unwrap();
    assert!(matches!(lift_point_cloud(&f, &intr, 10, 0), Err(SensorError::EmptyFrame)));
}

#[test]
fn render_lift_project_roundtrip() {
    let mut r = rng(9);
    let prims: Vec<WorldPrimitive> = (0..6)
        .map(|i| WorldPrimitive {
            geometry: match i % 3 {
                0 => Geometry::Sphere { radius: 0.3 },
                1 => Geometry::Box { half_extents: Vec3::new(0.2, 0.3, 0.25) },
                _ => Geometry::Cylinder { radius: 0.2, half_length: 0.3 },
            },
            pose: Transform::new(rand_rotation(&mut r), rand_vec(&mut r, 0.6)),
            id: i + 1,
        })
        .collect();
    let intr = small(96, 80, 70.0);
    let cam = look_at(&Vec3::new(2.0, 1.5, 2.5), &Vec3::zeros(), &Vec3::unit_z());
    let f = render_primitives(&prims, &cam, &intr).unwrap();
    let pts = lift_point_cloud(&f, &intr, 2000, 3).unwrap();
    for p in pts {
        let (u, v) = intr.project(&Vec3::new(p.xyz[0], p.xyz[1], p.xyz[2]));
        assert!((u - p.pixel[0] as f64).abs() < 0.5 && (v - p.pixel[1] as f64).abs() < 0.5);
        // the world point lies on the surface of the owning primitive
        let world = cam.transform_point(&Vec3::new(p.xyz[0], p.xyz[1], p.xyz[2]));
        let owner = prims.iter().find(|q| q.id == p.link).unwrap();
        assert!(sdf(owner, &world).abs() < 1e-9);
    }
}

/// Signed distance to a primitive.
fn sdf(p: &WorldPrimitive, x: &Vec3<f64>) -> f64 {
    let l = p.pose.inverse_transform_point(x);
    match &p.geometry {
        Geometry::Sphere { radius } => l.norm() - radius,
        Geometry::Box { half_extents: h } => {
            let q = Vec3::new(l.x.abs() - h.x, l.y.abs() - h.y, l.z.abs() - h.z);
            let outside = Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
            outside + q.x.max(q.y).max(q.z).min(0.0)
        }
        Geometry::Cylinder { radius, half_length } => {
            let dx = (l.x * l.x + l.y * l.y).sqrt() - radius;
            let dz = l.z.abs() - half_length;
            dx.max(dz).min(0.0) + (dx.max(0.0).powi(2) + dz.max(0.0).powi(2)).sqrt()
        }
    }
}

/// First crossing of the union distance field along the ray, found by fine
/// marching and bisection; the owner is the primitive closest to the hit.
fn march(prims: &[WorldPrimitive], o: &Vec3<f64>, d: &Vec3<f64>) -> Option<(f64, u32)> {
    let field = |t: f64| prims.iter().map(|p| sdf(p, &(*o + *d * t))).fold(f64::INFINITY, f64::min);
    let (mut t, step) = (0.0, 2e-3);
    while t < 20.0 {
        let next = t + step;
        if field(next) < 0.0 {
            let (mut a, mut b) = (t, next);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if field(m) < 0.0 {
                    b = m
                } else {
                    a = m
                }
            }
            let x = *o + *d * b;
            let owner = prims.iter().min_by(|p, q| sdf(p, &x).abs().total_cmp(&sdf(q, &x).abs())).unwrap();
            return Some((b, owner.id));
        }
        t = next;
    }
    None
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn segmentation_matches_brute_force_oracle(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let prims: Vec<WorldPrimitive> = (0..4)
            .map(|i| WorldPrimitive {
                geometry: match r.gen_range(0..3) {
                    0 => Geometry::Sphere { radius: r.gen_range(0.1..0.4) },
                    1 => Geometry::Box { half_extents: Vec3::new(r.gen_range(0.1..0.4), r.gen_range(0.1..0.4), r.gen_range(0.1..0.4)) },
                    _ => Geometry::Cylinder { radius: r.gen_range(0.1..0.3), half_length: r.gen_range(0.1..0.4) },
                },
                pose: Transform::new(rand_rotation(&mut r), rand_vec(&mut r, 0.5)),
                id: i + 1,
            })
            .collect();
        let intr = small(24, 24, 20.0);
        let cam = look_at(&Vec3::new(0.3, -2.0, 1.8), &Vec3::zeros(), &Vec3::unit_z());
        let f = render_primitives(&prims, &cam, &intr).unwrap();
        let mut disagreements = 0;
        for v in 0..intr.height {
            for u in 0..intr.width {
                let i = f.index(u, v);
                let dc = Vec3::new((u as f64 - intr.cx) / intr.fx, (v as f64 - intr.cy) / intr.fy, 1.0);
                let dw = cam.rotation.rotate(&dc);
                match (march(&prims, &cam.translation, &dw), f.segmentation[i]) {
                    (None, 0) => {}
                    (Some((t, id)), s) if s != 0 => {
                        prop_assert!((t - f.depth[i]).abs() < 1e-6, "pixel {u},{v}: {t} vs {}", f.depth[i]);
                        if id != s {
                            disagreements += 1;
                        }
                        let n = f.normal[i];
                        prop_assert!(((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs() < 1e-9);
                        prop_assert!(f.depth[i] > 0.0);
                    }
                    // grazing rays can slip between march samples
                    _ => disagreements += 1,
                }
            }
        }
        prop_assert!(disagreements <= 2, "{disagreements} disagreements");
    }
}

#[test]
fn hemisphere_views_lie_on_upper_shell_and_look_at_center() {
    let c = Vec3::new(0.3, -0.2, 0.5);
    let views = sample_hemisphere_views(&c, 2.0, 20, 11).unwrap();
    assert_eq!(views.len(), 20);
    for v in &views {
        let p = v.translation;
        assert!(p.z >= c.z);
        assert!(((p - c).norm() - 2.0).abs() < 1e-9);
        let forward = v.rotation.rotate(&Vec3::unit_z());
        assert!((forward - (c - p) / 2.0).norm() < 1e-9);
        // image "down" has no component along world up beyond the view tilt
        let right = v.rotation.rotate(&Vec3::unit_x());
        assert!(right.z.abs() < 1e-9);
    }
    assert_eq!(sample_hemisphere_views(&c, 2.0, 1, 5).unwrap(), sample_hemisphere_views(&c, 2.0, 1, 5).unwrap());
    assert!(sample_hemisphere_views(&c, 0.0, 1, 5).is_err());
    assert!(sample_hemisphere_views(&c, 1.0, 0, 5).is_err());
}

#[test]
fn hemisphere_heights_follow_area_measure() {
    // uniform area on a hemisphere makes height uniform on [0, r]
    let views = sample_hemisphere_views(&Vec3::zeros(), 1.0, 100_000, 2024).unwrap();
    let mut z: Vec<f64> = views.iter().map(|v| v.translation.z).collect();
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    let ks = z
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
        .fold(0.0, f64::max);
    assert!(ks < 0.01, "KS {ks}");
}

#[test]
fn frame_dump_roundtrip() {
    let prims = [prim(Geometry::Sphere { radius: 1.0 }, Vec3::new(0.0, 0.0, 5.0), 3)];
    let intr = small(16, 12, 10.0);
    let f = render_primitives(&prims, &Transform::identity(), &intr).unwrap();
    let mut buf = Vec::new();
    f.write_to(&mut buf).unwrap();
    assert_eq!(&buf[..4], b"MSF1");
    assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 16);
    assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 12);
    assert_eq!(buf.len(), 12 + 16 * 12 * 20);
    let back = SensorFrame::read_from(&buf[..]).unwrap();
    assert_eq!(back.segmentation, f.segmentation);
    for (a, b) in back.depth.iter().zip(&f.depth) {
        assert_eq!(*a, *b as f32 as f64);
    }
    buf[0] = b'X';
    assert!(matches!(SensorFrame::read_from(&buf[..]), Err(SensorError::BadMagic)));
    assert!(SensorFrame::read_from(&buf[..20]).is_err());
}

fn boxed_link_scene() -> Scene {
    let shape = CollisionShape { geometry: Geometry::Box { half_extents: Vec3::new(0.3, 0.3, 0.05) }, origin: Transform::identity() };
    let mut link = LinkSpec::from_primitives("lid", vec![shape], 500.0);
    link.semantic_label = "door".into();
    let spec = ArticulationSpec {
        name: "bin".into(),
        links: vec![LinkSpec::new("base", SpatialInertia::point_mass(1.0, Vec3::zeros())), link],
        joints: vec![JointSpec::new("hinge", JointKind::Hinge, "base", "lid").with_axis(Vec3::unit_z()).with_limits(-10.0, 10.0)],
        root_link: "base".into(),
    };
    let mut s = Scene::new(SceneConfig::default()).unwrap();
    s.add_articulation(&spec, Transform::identity(), ArticulationMode::Dynamic).unwrap();
    s.add_body(FreeBody::gripper(Transform::from_translation(Vec3::new(0.0, 0.0, 0.5))));
    s
}

#[test]
fn scene_render_uses_segment_ids() {
    let s = boxed_link_scene();
    let ids = segment_ids(&s);
    assert_eq!(ids.iter().map(|i| i.id).collect::<Vec<_>>(), vec![1, 2, 3]);
    assert_eq!(ids[1].semantic_label, "door");
    let cam = look_at(&Vec3::new(0.0, 0.0, 3.0), &Vec3::zeros(), &Vec3::unit_y());
    let f = render(&s, &cam, &small(64, 64, 60.0)).unwrap();
    let center = f.segmentation[f.index(32, 32)];
    assert_eq!(center, 3, "gripper sits above the lid");
    assert!(f.segmentation.iter().any(|&x| x == 2));
    assert!(f.segmentation.iter().all(|&x| x != 1));
}

#[test]
fn imu_at_rest_reads_specific_force() {
    let s = boxed_link_scene();
    let r = read_imu(&s, "lid").unwrap();
    assert!((r.linear_acceleration[2] - 9.81).abs() < 1e-12);
    assert!(r.linear_acceleration[0].abs() < 1e-12 && r.linear_acceleration[1].abs() < 1e-12);
    assert!((r.orientation.norm() - 1.0).abs() < 1e-12);
    assert!(matches!(read_imu(&s, "nope"), Err(SensorError::UnknownLink(_))));
}

#[test]
fn imu_reports_body_frame_spin() {
    let mut s = boxed_link_scene();
    let id = mobilisim::scene::ArticulationId(0);
    s.set_state(id, ArticulationState::new(vec![0.0], vec![2.0])).unwrap();
    for _ in 0..100 {
        s.step().unwrap();
    }
    let r = read_imu(&s, "lid").unwrap();
    assert!(r.angular_velocity[0].abs() < 1e-12 && r.angular_velocity[1].abs() < 1e-12);
    assert!((r.angular_velocity[2] - 2.0).abs() < 1e-9);
}

#[test]
fn imu_matches_finite_difference_on_swinging_chain() {
    let dt = 1.0 / 500.0;
    let mut s: Scene = Scene::new(SceneConfig { dt, ..SceneConfig::default() }).unwrap();
    let id = s.add_articulation(&serial_chain(2, 0.0), Transform::identity(), ArticulationMode::Dynamic).unwrap();
    s.set_state(id, ArticulationState::new(vec![1.0, -0.4], vec![0.0, 0.0])).unwrap();
    let velocity = |s: &Scene| {
        let a = s.articulation(id).unwrap();
        let poses = a.link_poses();
        let link = a.model.link_index("l1").unwrap();
        let v = a.model.link_velocities(&poses, &a.state.qd).unwrap()[link];
        v.point_velocity(&poses[link].translation)
    };
    for _ in 0..150 {
        s.step().unwrap();
    }
    let before = velocity(&s);
    s.step().unwrap();
    let reading = read_imu(&s, "l1").unwrap();
    let pose = s.link_pose(s.find_link("l1").unwrap()).unwrap();
    s.step().unwrap();
    let after = velocity(&s);
    let fd = (after - before) / (2.0 * dt) - s.gravity();
    let want = pose.rotation.inverse_rotate(&fd);
    for k in 0..3 {
        assert!((reading.linear_acceleration[k] - want.to_array()[k]).abs() < 1e-3, "axis {k}");
    }
}
