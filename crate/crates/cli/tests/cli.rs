use std::fs;
use std::path::Path;

use clap::Parser;
use mobilisim::metrics::{DetectionRecord, MotionRecord, MotionVector, RleMask};
use mobilisim_cli::{load_file_config, run, Cli, FileConfig, Kind, RunManifest};
use serde_json::Value;

fn exec(args: &[&str]) -> i32 {
    let cli = Cli::try_parse_from(std::iter::once("mobilisim").chain(args.iter().copied())).expect("arguments parse");
    run(cli).expect("command runs")
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn validate_bundled_cabinet() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    assert_eq!(exec(&["validate", "--out", out.to_str().unwrap()]), 0);
    let v = read_json(&out.join("validation.json"));
    assert_eq!(v["valid"], true);
    assert_eq!(v["dof"], 2);
    let m = manifest(&out);
    assert_eq!(m.command, "validate");
    assert_eq!(m.exit_code, 0);
    assert!(m.seeds.is_empty());
}

#[test]
fn validate_reports_cycle_and_unknown_joint() {
    let tmp = tempfile::tempdir().unwrap();
    let assets = mobilisim::asset::bundled::assets_dir();
    let cyclic = assets.join("cyclic.urdf");
    let out = tmp.path().join("a");
    assert_eq!(exec(&["validate", "--asset", cyclic.to_str().unwrap(), "--out", out.to_str().unwrap()]), 1);
    let err = read_json(&out.join("validation.json"))["error"].as_str().unwrap().to_string();
    assert!(err.contains("cycle"), "{err}");
    assert_eq!(manifest(&out).exit_code, 1);

    let bad = assets.join("bad.mobility.json");
    let out = tmp.path().join("b");
    assert_eq!(exec(&["validate", "--sidecar", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]), 1);
    let err = read_json(&out.join("validation.json"))["error"].as_str().unwrap().to_string();
    assert!(err.contains("lid_hinge"), "{err}");
}

#[test]
fn bench_is_byte_identical_across_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        assert_eq!(exec(&["bench", "--n", "3", "--seed", "7", "--out", d.to_str().unwrap()]), 0);
    }
    for f in ["episodes.jsonl", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let log = fs::read_to_string(a.join("episodes.jsonl")).unwrap();
    let seeds: Vec<u64> = log.lines().map(|l| serde_json::from_str::<Value>(l).unwrap()["seed"].as_u64().unwrap()).collect();
    assert_eq!(seeds, vec![7, 8, 9]);
    assert_eq!(manifest(&a).seeds, vec![7, 8, 9]);
}

#[test]
fn bench_with_zero_episodes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("z");
    assert_eq!(exec(&["bench", "--n", "0", "--out", out.to_str().unwrap()]), 0);
    assert_eq!(fs::read_to_string(out.join("episodes.jsonl")).unwrap(), "");
    assert_eq!(read_json(&out.join("summary.json"))["episodes"], 0);
}

#[test]
fn reversed_policy_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    assert_eq!(exec(&["bench", "--n", "2", "--policy", "reversed", "--out", out.to_str().unwrap()]), 0);
    assert_eq!(read_json(&out.join("summary.json"))["successes"], 0);
}

#[test]
fn config_file_values_yield_to_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "n = 2\nkind = \"door\"\nseed = 4\n").unwrap();
    let parsed = load_file_config(&cfg).unwrap();
    assert_eq!(parsed, FileConfig { n: Some(2), kind: Some(Kind::Door), seed: Some(4), ..FileConfig::default() });

    let out = tmp.path().join("o");
    assert_eq!(exec(&["bench", "--config", cfg.to_str().unwrap(), "--n", "1", "--out", out.to_str().unwrap()]), 0);
    let m = manifest(&out);
    assert_eq!(m.config["n"], 1);
    assert_eq!(m.config["kind"], "door");
    assert_eq!(m.seeds, vec![4]);

    let json_cfg = tmp.path().join("c.json");
    fs::write(&json_cfg, r#"{"n": 3}"#).unwrap();
    assert_eq!(load_file_config(&json_cfg).unwrap().n, Some(3));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "bogus = 1\n").unwrap();
    assert!(load_file_config(&bad).is_err());
}

#[test]
fn simulate_writes_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    assert_eq!(exec(&["simulate", "--steps", "20", "--record-every", "5", "--out", out.to_str().unwrap()]), 0);
    let text = fs::read_to_string(out.join("trajectory.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 5);
    let times: Vec<f64> = text.lines().map(|l| serde_json::from_str::<Value>(l).unwrap()["time"].as_f64().unwrap()).collect();
    assert!(times.windows(2).all(|w| w[1] > w[0]), "{times:?}");
}

#[test]
fn render_writes_views_and_points() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    let args = ["render", "--views", "2", "--resolution", "48", "--points", "30", "--seed", "1", "--out", out.to_str().unwrap()];
    assert_eq!(exec(&args), 0);
    for k in 0..2 {
        let bytes = fs::read(out.join(format!("view_{k:02}.msf"))).unwrap();
        assert_eq!(&bytes[..4], b"MSF1");
    }
    let first = fs::read(out.join("points.jsonl")).unwrap();
    assert!(!first.is_empty());
    let again = tmp.path().join("r2");
    let mut args2 = args;
    args2[args2.len() - 1] = again.to_str().unwrap();
    assert_eq!(exec(&args2), 0);
    assert_eq!(first, fs::read(again.join("points.jsonl")).unwrap());
}

fn motion(t_r: f64, axis: [f64; 3], x: f64) -> MotionVector {
    MotionVector { t_r, t_t: 1.0 - t_r, p_r: [0.0; 3], d_r: axis, d_t: axis, x_door: x, x_drawer: x }
}

#[test]
fn eval_motion_reports_accuracy() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("m.jsonl");
    let recs = [
        MotionRecord { id: "a".into(), gt: motion(1.0, [0.0, 0.0, 1.0], 0.5), pred: motion(0.9, [0.0, 0.0, 1.0], 0.5) },
        MotionRecord { id: "b".into(), gt: motion(0.0, [1.0, 0.0, 0.0], 0.2), pred: motion(0.8, [1.0, 0.0, 0.0], 0.2) },
    ];
    let text: String = recs.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    fs::write(&input, text).unwrap();
    let out = tmp.path().join("o");
    assert_eq!(exec(&["eval-motion", "--input", input.to_str().unwrap(), "--max-slider-range", "0.4", "--out", out.to_str().unwrap()]), 0);
    let r = read_json(&out.join("motion_report.json"));
    assert_eq!(r["instances"], 2);
    // b is a slider predicted as a hinge; a is right on both counts
    assert_eq!(r["metrics"]["h_acc"].as_f64().unwrap(), 50.0);
    assert_eq!(r["metrics"]["s_acc"].as_f64().unwrap(), 50.0);
    assert_eq!(r["metrics"]["hinges"], 1);
    assert_eq!(r["metrics"]["sliders"], 1);
}

#[test]
fn eval_detection_reports_ap() {
    let tmp = tempfile::tempdir().unwrap();
    let rec = |img: &str, cat: &str, ids: &[u32], score: Option<f64>| DetectionRecord {
        image_id: img.into(),
        category: cat.into(),
        mask_rle: RleMask::from_ids(ids, 16),
        score,
    };
    let gt = [rec("i", "drawer", &[0, 1, 2, 3], None), rec("i", "door", &[8, 9], None)];
    let pred = [rec("i", "drawer", &[0, 1, 2, 3], Some(0.9)), rec("i", "door", &[12, 13], Some(0.8))];
    let lines = |rs: &[DetectionRecord]| rs.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect::<String>();
    let gp = tmp.path().join("gt.jsonl");
    let pp = tmp.path().join("pred.jsonl");
    fs::write(&gp, lines(&gt)).unwrap();
    fs::write(&pp, lines(&pred)).unwrap();
    let out = tmp.path().join("o");
    assert_eq!(exec(&["eval-detection", "--gt", gp.to_str().unwrap(), "--pred", pp.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    let r = read_json(&out.join("ap_report.json"));
    assert_eq!(r["per_category"]["drawer"].as_f64().unwrap(), 1.0);
    assert_eq!(r["per_category"]["door"].as_f64().unwrap(), 0.0);
    assert_eq!(r["map"].as_f64().unwrap(), 0.5);
}

#[test]
fn serve_for_a_fixed_duration() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sv");
    assert_eq!(exec(&["serve", "--addr", "127.0.0.1:0", "--duration", "0.2", "--out", out.to_str().unwrap()]), 0);
    let addr = read_json(&out.join("server.json"))["address"].as_str().unwrap().to_string();
    assert!(addr.starts_with("127.0.0.1:"));
}

#[test]
fn profile_reports_rates() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("p");
    assert_eq!(exec(&["profile", "--steps", "50", "--renders", "1", "--resolution", "32", "--out", out.to_str().unwrap()]), 0);
    let r = read_json(&out.join("profile.json"));
    assert!(r["drawer"]["steps_per_sec"].as_f64().unwrap() > 0.0);
    assert_eq!(r["drawer"]["width"], 32);
}

#[test]
fn manifest_is_written_without_leftover_temp_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("m");
    exec(&["run-task", "--out", out.to_str().unwrap()]);
    let names: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert!(names.iter().all(|n| !n.ends_with(".tmp")), "{names:?}");
    let m = manifest(&out);
    assert_eq!(m.outputs.len(), 1);
    assert!(m.wall_time_s >= 0.0);
    assert!(m.versions["mobilisim"].is_string());
}
