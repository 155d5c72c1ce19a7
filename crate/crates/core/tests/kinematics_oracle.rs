mod common;

use common::*;
use mobilisim::asset::{ArticulationSpec, JointKind, JointSpec, LinkSpec};
use mobilisim::kinematics::{forward_kinematics, jacobian, solve_ik, KinematicsError};
use mobilisim::spatial::{Quat, SpatialInertia, Transform, Vec3};
use mobilisim::{ArticulationState, Model};
use proptest::prelude::*;
use rand::Rng;

fn single(kind: JointKind, axis: Vec3<f64>) -> ArticulationSpec {
    let link = |n: &str| LinkSpec::new(n, SpatialInertia::point_mass(1.0, Vec3::zeros()));
    ArticulationSpec {
        name: "single".into(),
        links: vec![link("base"), link("child")],
        joints: vec![JointSpec::new("j", kind, "base", "child").with_axis(axis).with_limits(-10.0, 10.0)],
        root_link: "base".into(),
    }
}

#[test]
fn zero_configuration_composes_origins() {
    for seed in 0..20 {
        let spec = random_tree(seed, 6, 8);
        let state = ArticulationState::zeros(spec.dof());
        let fk = forward_kinematics(&spec, &state).unwrap();
        for j in &spec.joints {
            let expect = fk[&j.parent_link].compose(&j.origin);
            let got = fk[&j.child_link];
            assert!((expect.translation - got.translation).max_abs() < 1e-12);
            assert!(expect.rotation.mul(&got.rotation.conjugate()).angle() < 1e-12);
        }
    }
}

#[test]
fn fk_matches_homogeneous_chain_oracle() {
    let mut r = rng(11);
    for seed in 0..100 {
        let spec = random_tree(seed, 8, 8);
        let q = random_q(&mut r, spec.dof(), 3.0);
        let fk = forward_kinematics(&spec, &ArticulationState::new(q.clone(), vec![0.0; q.len()])).unwrap();
        let oracle = oracle_fk(&spec, &q);
        for (name, t) in &fk {
            let h = t.to_homogeneous();
            let o = oracle[name];
            for i in 0..4 {
                for k in 0..4 {
                    assert!((h[i][k] - o[(i, k)]).abs() < 1e-12, "seed {seed} link {name}");
                }
            }
        }
    }
}

#[test]
fn coupled_screw_translates_by_pitch_times_angle() {
    let mut spec = single(JointKind::Screw, Vec3::unit_z());
    spec.joints[0].screw_coupled = true;
    spec.joints[0].screw_pitch = Some(0.01);
    let two_pi = 2.0 * std::f64::consts::PI;
    let fk = forward_kinematics(&spec, &ArticulationState::new(vec![two_pi], vec![0.0])).unwrap();
    let t = fk["child"];
    assert!((t.translation.z - 0.0628318).abs() < 1e-7);
    assert!(t.rotation.angle() < 1e-12);
}

#[test]
fn hinge_and_slider_columns() {
    let s = ArticulationState::zeros(1);
    let j = jacobian(&single(JointKind::Hinge, Vec3::unit_z()), &s, "child", &Vec3::new(1.0, 0.0, 0.0)).unwrap();
    assert_eq!(j.column(0), vec![0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    let j = jacobian(&single(JointKind::Slider, Vec3::unit_x()), &s, "child", &Vec3::new(1.0, 0.0, 0.0)).unwrap();
    assert_eq!(j.column(0), vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
}

#[test]
fn off_path_joints_contribute_zero_columns() {
    let spec = random_tree(3, 8, 8);
    let model: Model = Model::from_spec(&spec).unwrap();
    let q = vec![0.3; model.dof];
    for (li, _) in model.links.iter().enumerate() {
        let jac = model.jacobian(&q, li, &Vec3::new(0.1, 0.2, 0.3)).unwrap();
        let path = model.path_to_root(li);
        for (lj, l) in model.links.iter().enumerate() {
            let Some(j) = &l.joint else { continue };
            if path.contains(&lj) {
                continue;
            }
            for k in 0..j.ndof {
                assert!(jac.column(j.offset + k).iter().all(|&v| v == 0.0));
            }
        }
    }
}

#[test]
fn jacobian_matches_central_differences() {
    let h = 1e-6;
    let mut r = rng(5);
    for seed in 0..100 {
        let spec = random_tree(1000 + seed, 6, 5);
        let model: Model = Model::from_spec(&spec).unwrap();
        let q = random_q(&mut r, model.dof, 2.0);
        let qd = random_q(&mut r, model.dof, 1.0);
        let link = model.links.len() - 1;
        let poses = model.link_poses(&q).unwrap();
        let local = rand_vec(&mut r, 0.5);
        let point = poses[link].transform_point(&local);
        let jac = model.jacobian(&q, link, &point).unwrap();
        let v = jac.mul_vec(&qd);

        let shifted = |s: f64| {
            let qs: Vec<f64> = q.iter().zip(&qd).map(|(a, b)| a + s * h * b).collect();
            model.link_poses(&qs).unwrap()[link]
        };
        let (p, m) = (shifted(1.0), shifted(-1.0));
        let lin = (p.transform_point(&local) - m.transform_point(&local)) / (2.0 * h);
        let ang = p.rotation.mul(&m.rotation.conjugate()).to_rotation_vector() / (2.0 * h);
        for k in 0..3 {
            assert!((v[k] - ang[k]).abs() < 1e-6, "seed {seed} angular {k}: {} vs {}", v[k], ang[k]);
            assert!((v[k + 3] - lin[k]).abs() < 1e-6, "seed {seed} linear {k}: {} vs {}", v[k + 3], lin[k]);
        }
    }
}

#[test]
fn ik_reaches_random_targets_on_six_dof_chain() {
    let spec = six_dof_chain();
    let model: Model = Model::from_spec(&spec).unwrap();
    let ee = model.link_index("ee").unwrap();
    let mut r = rng(77);
    for _ in 0..100 {
        let q_true: Vec<f64> = (0..6).map(|_| r.gen_range(-2.0..2.0)).collect();
        let target = model.link_poses(&q_true).unwrap()[ee];
        let q0: Vec<f64> = q_true.iter().map(|v| v + r.gen_range(-0.3..0.3)).collect();
        let out = solve_ik(&spec, &ArticulationState::new(q0, vec![0.0; 6]), "ee", &target, 1e-4, 1e-3, 200)
            .unwrap_or_else(|e| panic!("target from {q_true:?}: {e}"));
        let got = model.link_poses(&out.q).unwrap()[ee];
        assert!((got.translation - target.translation).norm() < 1e-4);
        assert!(got.rotation.mul(&target.rotation.conjugate()).angle() < 1e-3);
        assert!(out.q.iter().all(|v| (-2.8..=2.8).contains(v)));
    }
}

#[test]
fn ik_outside_workspace_reports_residual() {
    let spec = six_dof_chain();
    let far = Transform::new(Quat::identity(), Vec3::new(0.0, 0.0, 5.0));
    match solve_ik(&spec, &ArticulationState::zeros(6), "ee", &far, 1e-4, 1e-3, 200) {
        Err(KinematicsError::NoConvergence { position_error, .. }) => assert!(position_error > 3.0),
        other => panic!("{other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fk_is_continuous(seed in 0u64..500, scale in 0.1f64..3.0) {
        let spec = random_tree(seed, 6, 8);
        let model: Model = Model::from_spec(&spec).unwrap();
        let q = vec![scale; model.dof];
        let qp: Vec<f64> = q.iter().map(|v| v + 1e-8).collect();
        let a = model.link_poses(&q).unwrap();
        let b = model.link_poses(&qp).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.translation - y.translation).norm() < 1e-6);
            prop_assert!(x.rotation.mul(&y.rotation.conjugate()).angle() < 1e-6);
        }
    }

    #[test]
    fn ik_success_implies_limits(q in proptest::collection::vec(-3.5f64..3.5, 6), seed in 0u64..1000) {
        let spec = six_dof_chain();
        let model: Model = Model::from_spec(&spec).unwrap();
        let ee = model.link_index("ee").unwrap();
        let mut r = rng(seed);
        let target = Transform::new(rand_rotation(&mut r), rand_vec(&mut r, 0.5));
        if let Ok(out) = model.solve_ik(&q, ee, &target, 1e-4, 1e-3, 200) {
            prop_assert!(out.iter().all(|v| (-2.8..=2.8).contains(v)));
        }
    }
}
