//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::*;
use mobilisim::asset::bundled::sample_cabinet;
use mobilisim::asset::{ArticulationSpec, Geometry};
use mobilisim::kinematics::solve_ik;
use mobilisim::metrics::*;
use mobilisim::profile::{drawer_scene, profile};
use mobilisim::scene::{ArticulationMode, FreeBody, Integrator, Scene, SceneConfig};
use mobilisim::sensors::{lift_point_cloud, look_at, render_primitives, sample_hemisphere_views, CameraIntrinsics, WorldPrimitive};
use mobilisim::spatial::{Transform, Vec3};
use mobilisim::tasks::{run_suite, success_rate, TaskConfig, TaskKind};
use mobilisim::{ArticulationState, Model};
use mobilisim_server::client::Client;
use mobilisim_server::protocol::*;
use mobilisim_server::{serve, SessionConfig};
use nalgebra::{DMatrix, DVector, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- dynamics

/// Σ m Jvᵀ Jv + Jωᵀ I_world Jω over link centres of mass.
fn mass_matrix(model: &Model, q: &[f64]) -> DMatrix<f64> {
    let n = model.dof;
    let poses = model.link_poses(q).unwrap();
    let mut m = DMatrix::zeros(n, n);
    for (i, l) in model.links.iter().enumerate() {
        let com = poses[i].transform_point(&l.inertia.com);
        let j = model.jacobian(q, i, &com).unwrap();
        let jw = DMatrix::from_fn(3, n, |r, c| j[(r, c)]);
        let jv = DMatrix::from_fn(3, n, |r, c| j[(r + 3, c)]);
        let rot = poses[i].rotation.to_matrix();
        let r = Matrix3::from_fn(|a, b| rot.rows[a][b]);
        let ic = Matrix3::from_fn(|a, b| l.inertia.inertia.rows[a][b]);
        let iw = r * ic * r.transpose();
        let iw = DMatrix::from_fn(3, 3, |a, b| iw[(a, b)]);
        m += jv.transpose() * &jv * l.inertia.mass + jw.transpose() * iw * jw;
    }
    m
}

fn potential(model: &Model, q: &[f64]) -> f64 {
    let poses = model.link_poses(q).unwrap();
    model.links.iter().zip(&poses).map(|(l, x)| -l.inertia.mass * model.gravity.dot(&x.transform_point(&l.inertia.com))).sum()
}

/// Coriolis, centrifugal and gravity terms from the Lagrangian by
/// fourth-order central differences.
fn bias(model: &Model, q: &[f64], qd: &[f64]) -> DVector<f64> {
    let n = model.dof;
    let h = 1e-4;
    let at = |d: &[f64], s: f64| q.iter().zip(d).map(|(a, b)| a + s * h * b).collect::<Vec<_>>();
    let stencil = |f: &dyn Fn(&[f64]) -> f64, d: &[f64]| {
        (f(&at(d, -2.0)) - 8.0 * f(&at(d, -1.0)) + 8.0 * f(&at(d, 1.0)) - f(&at(d, 2.0))) / (12.0 * h)
    };
    let qdv = DVector::from_column_slice(qd);
    let ms: Vec<DMatrix<f64>> = [-2.0, -1.0, 1.0, 2.0].iter().map(|&s| mass_matrix(model, &at(qd, s))).collect();
    let mdot = (&ms[0] - &ms[1] * 8.0 + &ms[2] * 8.0 - &ms[3]) / (12.0 * h);
    let mut out = mdot * &qdv;
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let kinetic = |x: &[f64]| 0.5 * qdv.dot(&(mass_matrix(model, x) * &qdv));
        let pot = |x: &[f64]| potential(model, x);
        out[i] += stencil(&pot, &e) - stencil(&kinetic, &e);
    }
    out
}

fn trees() -> Vec<(Model, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut r = rng(2);
    (0..)
        .filter_map(|seed| {
            let model: Model = Model::from_spec(&random_tree(500 + seed, 8, 8)).unwrap();
            let n = model.dof;
            let q = random_q(&mut r, n, 2.0);
            let qd = random_q(&mut r, n, 1.5);
            let tau = random_q(&mut r, n, 5.0);
            (n > 0).then_some((model, q, qd, tau))
        })
        .take(100)
        .collect()
}

fn dynamics_oracle() -> Outcome {
    let cases = trees();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut max_dof = 0;
    for (model, q, qd, tau) in &cases {
        max_dof = max_dof.max(model.dof);
        let rhs = DVector::from_column_slice(tau) - bias(model, q, qd);
        let want = mass_matrix(model, q).lu().solve(&rhs).ok_or("singular mass matrix")?;
        let got = model.forward_dynamics(&ArticulationState::new(q.clone(), qd.clone()), tau, &[]).map_err(|e| e.to_string())?;
        for (g, w) in got.iter().zip(want.iter()) {
            worst = worst.max((g - w).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst < 1e-8, || format!("max abs error {worst:.3e} on {} trees", cases.len()))?;
    ensure(secs < 10.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{} trees up to {max_dof} DOF, max abs error {worst:.2e}, {secs:.2} s", cases.len()))
}

fn aba_rnea_duality() -> Outcome {
    let cases = trees();
    let mut worst: f64 = 0.0;
    for (model, q, qd, tau) in &cases {
        let s = ArticulationState::new(q.clone(), qd.clone());
        let qdd = model.forward_dynamics(&s, tau, &[]).map_err(|e| e.to_string())?;
        let back = model.inverse_dynamics(&s, &qdd, &[]).map_err(|e| e.to_string())?;
        for (b, t) in back.iter().zip(tau) {
            worst = worst.max((b - t).abs());
        }
    }
    ensure(worst < 1e-8, || format!("max torque error {worst:.3e}"))?;
    Ok(format!("{} trees, max torque error {worst:.2e}", cases.len()))
}

// ---------------------------------------------------------------- energy

fn energy_drift(spec: &ArticulationSpec, q0: Vec<f64>) -> f64 {
    let mut s: Scene = Scene::new(SceneConfig { dt: 1.0 / 500.0, integrator: Integrator::VelocityVerlet, ..SceneConfig::default() }).unwrap();
    let id = s.add_articulation(spec, Transform::identity(), ArticulationMode::Dynamic).unwrap();
    let n = q0.len();
    s.set_state(id, ArticulationState::new(q0, vec![0.0; n])).unwrap();
    let total = |s: &Scene| {
        let (t, v) = s.articulation_energy(id).unwrap();
        t + v
    };
    let e0 = total(&s);
    let rest = s.articulation(id).unwrap().model.potential_energy(&vec![0.0; n]).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..5000 {
        s.step().unwrap();
        worst = worst.max((total(&s) - e0).abs());
    }
    worst / (e0 - rest)
}

fn energy_conservation() -> Outcome {
    let p = energy_drift(&pendulum(0.0), vec![std::f64::consts::FRAC_PI_2]);
    let c = energy_drift(&serial_chain(3, 0.0), vec![1.2, -0.7, 0.5]);
    ensure(p < 1e-3 && c < 1e-3, || format!("pendulum drift {p:.2e}, chain drift {c:.2e}"))?;
    Ok(format!("pendulum drift {p:.2e}, 3-link chain drift {c:.2e}"))
}

// ---------------------------------------------------------------- kinematics

fn kinematics() -> Outcome {
    let h = 1e-6;
    let mut r = rng(5);
    let mut jac_err: f64 = 0.0;
    for seed in 0..100 {
        let model: Model = Model::from_spec(&random_tree(1000 + seed, 6, 5)).unwrap();
        let q = random_q(&mut r, model.dof, 2.0);
        let qd = random_q(&mut r, model.dof, 1.0);
        let link = model.links.len() - 1;
        let local = rand_vec(&mut r, 0.5);
        let point = model.link_poses(&q).unwrap()[link].transform_point(&local);
        let v = model.jacobian(&q, link, &point).unwrap().mul_vec(&qd);
        let shifted = |s: f64| {
            let qs: Vec<f64> = q.iter().zip(&qd).map(|(a, b)| a + s * h * b).collect();
            model.link_poses(&qs).unwrap()[link]
        };
        let (p, m) = (shifted(1.0), shifted(-1.0));
        let lin = (p.transform_point(&local) - m.transform_point(&local)) / (2.0 * h);
        let ang = p.rotation.mul(&m.rotation.conjugate()).to_rotation_vector() / (2.0 * h);
        for k in 0..3 {
            jac_err = jac_err.max((v[k] - ang[k]).abs()).max((v[k + 3] - lin[k]).abs());
        }
    }
    ensure(jac_err < 1e-6, || format!("Jacobian error {jac_err:.2e}"))?;

    let spec = six_dof_chain();
    let model: Model = Model::from_spec(&spec).unwrap();
    let ee = model.link_index("ee").unwrap();
    let mut r = rng(77);
    let (mut pos_err, mut rot_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let q_true: Vec<f64> = (0..6).map(|_| r.gen_range(-2.0..2.0)).collect();
        let target = model.link_poses(&q_true).unwrap()[ee];
        let q0: Vec<f64> = q_true.iter().map(|v| v + r.gen_range(-0.3..0.3)).collect();
        let out = solve_ik(&spec, &ArticulationState::new(q0, vec![0.0; 6]), "ee", &target, 1e-4, 1e-3, 200).map_err(|e| e.to_string())?;
        let got = model.link_poses(&out.q).unwrap()[ee];
        pos_err = pos_err.max((got.translation - target.translation).norm());
        rot_err = rot_err.max(got.rotation.mul(&target.rotation.conjugate()).angle());
    }
    ensure(pos_err < 1e-4 && rot_err < 1e-3, || format!("IK residual {pos_err:.2e} m / {rot_err:.2e} rad"))?;
    Ok(format!("Jacobian error {jac_err:.2e}; IK residual {pos_err:.2e} m / {rot_err:.2e} rad on 100 targets"))
}

// ---------------------------------------------------------------- tasks

fn task_benchmark() -> Outcome {
    let start = Instant::now();
    let cfg = TaskConfig::default();
    let seeds: Vec<u64> = (0..100).collect();
    let drawer = success_rate(&run_suite(TaskKind::PullDrawer, &seeds, &cfg).map_err(|e| e.to_string())?);
    let door = success_rate(&run_suite(TaskKind::OpenDoor, &seeds, &cfg).map_err(|e| e.to_string())?);
    let secs = start.elapsed().as_secs_f64();
    let line = format!("drawer {:.1}%, door {:.1}% over 100 seeds, {secs:.1} s", 100.0 * drawer, 100.0 * door);
    ensure(drawer >= 0.95 && door >= 0.80 && secs < 120.0, || line.clone())?;
    Ok(line)
}

// ---------------------------------------------------------------- metrics

fn cos_loss(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt() * (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    1.0 - d.abs() / n
}

/// Squared point-to-line distance through the Pythagorean identity.
fn line_dist2(x: [f64; 3], p: [f64; 3], d: [f64; 3]) -> f64 {
    let e = [x[0] - p[0], x[1] - p[1], x[2] - p[2]];
    let along = e[0] * d[0] + e[1] * d[1] + e[2] * d[2];
    (e[0] * e[0] + e[1] * e[1] + e[2] * e[2] - along * along).max(0.0)
}

fn bce(p: f64, t: f64) -> f64 {
    let p = p.max(1e-7).min(1.0 - 1e-7);
    -t * p.ln() - (1.0 - t) * (1.0 - p).ln()
}

fn oracle_total(pred: &[MotionVector], gt: &[MotionVector]) -> f64 {
    let mut sum = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        sum += bce(p.t_r, g.t_r) + bce(p.t_t, g.t_t);
        if g.t_r == 1.0 {
            let n = (g.d_r[0].powi(2) + g.d_r[1].powi(2) + g.d_r[2].powi(2)).sqrt();
            let u = [g.d_r[0] / n, g.d_r[1] / n, g.d_r[2] / n];
            sum += cos_loss(p.d_r, g.d_r) + line_dist2(p.p_r, g.p_r, u) + (p.x_door - g.x_door).powi(2);
        }
        if g.t_t == 1.0 {
            sum += cos_loss(p.d_t, g.d_t) + (p.x_drawer - g.x_drawer).powi(2);
        }
    }
    sum
}

fn rand_dir(r: &mut ChaCha8Rng) -> [f64; 3] {
    let v = rand_unit(r);
    [v.x, v.y, v.z]
}

fn rand_motion(r: &mut ChaCha8Rng, gt: bool) -> MotionVector {
    let hinge = r.gen_bool(0.5);
    let (t_r, t_t) = if gt { (f64::from(u8::from(hinge)), f64::from(u8::from(!hinge))) } else { (r.gen(), r.gen()) };
    let p = rand_vec(r, 1.0);
    MotionVector { t_r, t_t, p_r: [p.x, p.y, p.z], d_r: rand_dir(r), d_t: rand_dir(r), x_door: r.gen(), x_drawer: r.gen() }
}

fn oracle_ap(pred: &[DetectionInstance], gt: &[DetectionInstance], label: &str, thr: f64) -> Option<f64> {
    let gts: Vec<_> = gt.iter().filter(|g| g.label == label).collect();
    if gts.is_empty() {
        return None;
    }
    let mut ps: Vec<(usize, &DetectionInstance)> = pred.iter().filter(|p| p.label == label).enumerate().collect();
    ps.sort_by(|a, b| b.1.score.unwrap().partial_cmp(&a.1.score.unwrap()).unwrap().then(a.0.cmp(&b.0)));
    let iou = |a: &[u32], b: &[u32]| {
        let sa: HashSet<_> = a.iter().collect();
        let sb: HashSet<_> = b.iter().collect();
        sa.intersection(&sb).count() as f64 / sa.union(&sb).count() as f64
    };
    let mut points = Vec::new();
    for k in 1..=ps.len() {
        let mut taken = vec![false; gts.len()];
        let mut tp = 0;
        for (_, p) in &ps[..k] {
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in gts.iter().enumerate() {
                if taken[j] || g.image_id != p.image_id {
                    continue;
                }
                let v = iou(&p.mask, &g.mask);
                if best.map_or(true, |(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best.filter(|&(_, v)| v >= thr) {
                taken[j] = true;
                tp += 1;
            }
        }
        points.push((tp as f64 / gts.len() as f64, tp as f64 / k as f64));
    }
    let n = gts.len();
    Some(
        (1..=n)
            .map(|m| points.iter().filter(|(r, _)| *r >= m as f64 / n as f64 - 1e-15).map(|(_, p)| *p).fold(0.0, f64::max) / n as f64)
            .sum(),
    )
}

fn rand_detection(r: &mut ChaCha8Rng, scored: bool) -> DetectionInstance {
    let mask: Vec<u32> = (0..r.gen_range(1..8)).map(|_| r.gen_range(0..16)).collect();
    let score = scored.then(|| f64::from(r.gen_range(0..20u32)) / 20.0);
    DetectionInstance::new(["i0", "i1"][r.gen_range(0..2)], ["door", "drawer"][r.gen_range(0..2)], mask, score)
}

fn metrics() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(31);
    let gt: Vec<MotionVector> = (0..20).map(|_| rand_motion(&mut r, true)).collect();
    let perfect: Vec<MotionVector> =
        gt.iter().map(|g| MotionVector { t_r: g.t_r.clamp(1e-7, 1.0 - 1e-7), t_t: g.t_t.clamp(1e-7, 1.0 - 1e-7), ..*g }).collect();
    let l = total_loss(&perfect, &gt).map_err(|e| e.to_string())?;
    ensure(l.total < 1e-5, || format!("perfect-batch loss {:.2e}", l.total))?;
    let rep = motion_metrics(&perfect, &gt, 0.5).map_err(|e| e.to_string())?;
    let errs = [rep.h_o_err_m, rep.h_a_err_deg, rep.s_a_err_deg, rep.door_err_deg, rep.drawer_err_m];
    ensure(errs.iter().all(|&e| e == 0.0) && rep.h_acc == 100.0 && rep.s_acc == 100.0, || format!("perfect-batch report {rep:?}"))?;

    let mut term_err: f64 = 0.0;
    for _ in 0..200 {
        let (p, g) = (rand_motion(&mut r, false), rand_motion(&mut r, true));
        let u = g.d_r;
        term_err = term_err
            .max((axis_alignment_loss(&p.d_r, &g.d_r).unwrap() - cos_loss(p.d_r, g.d_r)).abs())
            .max((pivot_loss(&p.p_r, &g.p_r, &u).unwrap() - line_dist2(p.p_r, g.p_r, u)).abs())
            .max((joint_type_loss(p.t_r, g.t_r) - bce(p.t_r, g.t_r)).abs())
            .max((joint_position_loss(p.x_door, g.x_door, true) - (p.x_door - g.x_door).powi(2)).abs())
            .max((total_loss(&[p], &[g]).unwrap().total - oracle_total(&[p], &[g])).abs());
    }
    ensure(term_err < 1e-10, || format!("loss term error {term_err:.2e}"))?;

    let mut cases = 0;
    let mut checked = 0;
    for _ in 0..50 {
        let gt: Vec<_> = (0..r.gen_range(1..6)).map(|_| rand_detection(&mut r, false)).collect();
        let pred: Vec<_> = (0..r.gen_range(0..8)).map(|_| rand_detection(&mut r, true)).collect();
        let thr = [0.25, 0.5, 0.75][r.gen_range(0..3)];
        let rep = average_precision(&pred, &gt, thr);
        for label in ["door", "drawer"] {
            let got = rep.per_category.get(label).copied().flatten();
            let want = oracle_ap(&pred, &gt, label, thr);
            let same = match (got, want) {
                (Some(a), Some(b)) => (a - b).abs() < 1e-12,
                (None, None) => true,
                _ => false,
            };
            ensure(same, || format!("AP {label}: {got:?} vs brute force {want:?}"))?;
            checked += usize::from(want.is_some());
        }
        cases += 1;
    }
    Ok(format!(
        "perfect loss {:.2e}, loss terms within {term_err:.1e}, AP equal on {cases} cases ({checked} categories)",
        l.total
    ))
}

// ---------------------------------------------------------------- sensors

fn sensors() -> Outcome {
    let intr = CameraIntrinsics::default();
    let (c, radius) = (Vec3::new(0.3, -0.2, 5.0), 1.0);
    let prims = [WorldPrimitive { geometry: Geometry::Sphere { radius }, pose: Transform::from_translation(c), id: 1 }];
    let f = render_primitives(&prims, &Transform::identity(), &intr).map_err(|e| e.to_string())?;
    let mut depth_err: f64 = 0.0;
    let mut hits = 0;
    for v in (0..intr.height).step_by(4) {
        for u in (0..intr.width).step_by(4) {
            let i = f.index(u, v);
            let d = Vec3::new((u as f64 - intr.cx) / intr.fx, (v as f64 - intr.cy) / intr.fy, 1.0);
            // |t d - c|² = r² in t; depth is the z component, t itself
            let (a, b, cc) = (d.dot(&d), -2.0 * d.dot(&c), c.dot(&c) - radius * radius);
            let disc = b * b - 4.0 * a * cc;
            if disc > 1e-6 && f.segmentation[i] == 1 {
                let t = (-b - disc.sqrt()) / (2.0 * a);
                depth_err = depth_err.max((f.depth[i] - t).abs());
                hits += 1;
            } else if disc < -1e-6 {
                ensure(f.segmentation[i] == 0, || format!("pixel ({u},{v}) hit outside the silhouette"))?;
            }
        }
    }
    ensure(hits > 100 && depth_err < 1e-5, || format!("sphere depth error {depth_err:.2e} over {hits} pixels"))?;

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
    let small = CameraIntrinsics { width: 96, height: 80, fx: 70.0, fy: 70.0, cx: 48.0, cy: 40.0 };
    let cam = look_at(&Vec3::new(2.0, 1.5, 2.5), &Vec3::zeros(), &Vec3::unit_z());
    let frame = render_primitives(&prims, &cam, &small).map_err(|e| e.to_string())?;
    let pts = lift_point_cloud(&frame, &small, 2000, 3).map_err(|e| e.to_string())?;
    let mut px_err: f64 = 0.0;
    for p in &pts {
        let (u, v) = small.project(&Vec3::new(p.xyz[0], p.xyz[1], p.xyz[2]));
        px_err = px_err.max((u - p.pixel[0] as f64).abs()).max((v - p.pixel[1] as f64).abs());
    }
    ensure(px_err <= 0.5, || format!("reprojection error {px_err:.3} px"))?;

    let views = sample_hemisphere_views(&Vec3::zeros(), 1.0, 100_000, 2024).map_err(|e| e.to_string())?;
    let mut z: Vec<f64> = views.iter().map(|v| v.translation.z).collect();
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    let ks = z.iter().enumerate().map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs())).fold(0.0, f64::max);
    ensure(ks < 0.01, || format!("hemisphere KS {ks:.4}"))?;
    Ok(format!("sphere depth error {depth_err:.2e}, reprojection {px_err:.3} px, KS {ks:.4}"))
}

// ---------------------------------------------------------------- protocol

fn protocol() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../server/golden");
    for t in MessageType::ALL {
        let m = example_message(t);
        let frame = encode_frame(&m).map_err(|e| e.to_string())?;
        let golden = std::fs::read(dir.join(format!("{}.bin", t.as_str().to_lowercase()))).map_err(|e| format!("{t}: {e}"))?;
        ensure(frame == golden, || format!("{t}: frame differs from golden"))?;
        ensure(decode_frame(&frame).ok() == Some(m), || format!("{t}: decode(encode) differs"))?;
    }

    let frame = |t: MessageType, ts: f64| encode_frame(&WireMessage::new(t, ts, serde_json::json!({"n": ts}))).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..50 {
        let ts: Vec<f64> = (0..6).map(f64::from).collect();
        let cut = r.gen_range(0..6);
        let mut stream = Vec::new();
        for (k, &t) in ts.iter().enumerate() {
            let f = frame(MessageType::ALL[k % MessageType::ALL.len()], t);
            if k == cut {
                stream.extend_from_slice(&f[..r.gen_range(5..f.len())]);
            } else {
                stream.extend_from_slice(&f);
            }
        }
        let mut dec = FrameDecoder::new();
        let mut got = Vec::new();
        for piece in stream.chunks(r.gen_range(1..64)) {
            dec.push(piece);
            got.extend(std::iter::from_fn(|| dec.next_message()).filter_map(Result::ok).map(|m| m.timestamp));
        }
        let want: Vec<f64> = ts.iter().copied().filter(|&t| t != cut as f64).collect();
        ensure(got == want, || format!("truncation trial {trial}: recovered {got:?}, expected {want:?}"))?;
    }

    let mut scene: Scene = Scene::new(SceneConfig::default()).unwrap();
    scene.add_articulation(&sample_cabinet(), Transform::identity(), ArticulationMode::Dynamic).unwrap();
    scene.add_body(FreeBody::gripper(Transform::from_translation(Vec3::new(0.6, 0.0, 0.67))));
    let handle = serve(scene, SessionConfig::default(), "127.0.0.1:0").map_err(|e| e.to_string())?;
    let timeout = Duration::from_secs(10);
    let mut client = Client::connect(&handle.local_addr().to_string(), timeout).map_err(|e| e.to_string())?;
    let (mut last, mut count) = (f64::NEG_INFINITY, 0);
    let start = Instant::now();
    while start.elapsed() < Duration::from_secs(10) {
        let m = client.recv_type(MessageType::State, timeout).map_err(|e| e.to_string())?;
        ensure(m.timestamp > last, || format!("STATE at {} after {last}", m.timestamp))?;
        last = m.timestamp;
        count += 1;
    }
    handle.shutdown();
    Ok(format!(
        "{} golden frames equal, 50 truncation trials recovered, {count} STATE timestamps strictly increasing over 10 s",
        MessageType::ALL.len()
    ))
}

// ---------------------------------------------------------------- performance

fn performance() -> Outcome {
    let (scene, cam) = drawer_scene(0).map_err(|e| e.to_string())?;
    let rep = profile(&scene, 5000, 0, &cam, &CameraIntrinsics::default()).map_err(|e| e.to_string())?;
    let rate = rep.steps_per_sec;
    let note = if rate >= 5000.0 { "meets the 5000 steps/s reference" } else { "below the 5000 steps/s reference" };
    let line = format!("{rate:.0} steps/s on the drawer scene ({note}; floor 1000)");
    ensure(rate >= 1000.0, || line.clone())?;
    Ok(line)
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("Dynamics oracle equivalence", dynamics_oracle),
        ("ABA/RNEA duality", aba_rnea_duality),
        ("Energy conservation", energy_conservation),
        ("Kinematics", kinematics),
        ("Task benchmark", task_benchmark),
        ("Metrics", metrics),
        ("Sensor correctness", sensors),
        ("Protocol", protocol),
        ("Performance", performance),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
