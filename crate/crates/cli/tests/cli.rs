use std::path::Path;
use std::process::{Command, Output};

use avbench_core::ingest::serialize_log;
use avbench_core::synth::{synth_log, SynthScenario};
use avbench_core::telemetry::{DriveLog, EngagementSample, Pose};
use serde_json::Value;

fn avbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avbench")).args(args).output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth_file(dir: &Path, name: &str, sc: &SynthScenario) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serialize_log(&synth_log(sc).unwrap().0).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn without_config(mut v: Value) -> Value {
    v.as_object_mut().unwrap().shift_remove("config");
    v
}

#[test]
fn zero_intervention_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = synth_file(dir.path(), "calm.log", &SynthScenario::straight(60.0, 3.0, 10.0));
    let j = stdout_json(&avbench(&["metrics", &log]));
    let r = &j["logs"][0];
    assert_eq!(r["no_interventions"], true);
    assert!(r["mdbi"].is_null());
    assert_eq!(r["mdbi_m"].to_string(), "0.000000");
    assert_eq!(r["totals"]["auto_distance"].to_string(), "60.000000");
}

#[test]
fn synth_then_metrics_reproduces_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("two.scn");
    std::fs::write(&scn, "waypoint,0,0\nwaypoint,100,0\nspeed,2\nrate,10\nintervene,30,5\nintervene,60,5\nseed,7\n").unwrap();
    let out = dir.path().join("gen");
    assert!(avbench(&["synth", p(&scn), "--out", p(&out)]).status.success());
    let truth: Value = serde_json::from_str(&std::fs::read_to_string(out.join("two.truth.json")).unwrap()).unwrap();
    let j = stdout_json(&avbench(&["metrics", p(&out.join("two.log"))]));
    assert_eq!(j["logs"][0], truth["metrics"]);
    assert_eq!(truth["totals"]["manual_distance"].to_string(), "20.000000");
    // same seed, same bytes
    let again = dir.path().join("again");
    assert!(avbench(&["synth", p(&scn), "--out", p(&again)]).status.success());
    assert_eq!(std::fs::read(out.join("two.log")).unwrap(), std::fs::read(again.join("two.log")).unwrap());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "distance_method = \"speed\"\nmin_dwell = 0.25\ncell_size = 2.0\n").unwrap();
    let log = synth_file(dir.path(), "a.log", &SynthScenario::straight(40.0, 2.0, 10.0).with_intervention(10.0, 2.0));
    let j = stdout_json(&avbench(&["--config", p(&cfg), "--min-dwell", "0.5", "metrics", &log]));
    let c = &j["config"];
    assert_eq!(c["distance_method"], "speed");
    assert_eq!(c["min_dwell"].to_string(), "0.500000");
    assert_eq!(c["cell_size"].to_string(), "2.000000");
    assert_eq!(c["window"], "hann");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = avbench(&["metrics", p(&dir.path().join("nope.log"))]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.log"));

    let bad_q = dir.path().join("q.log");
    std::fs::write(&bad_q, "pose,0,0,0,0,2,0,0,0\nengage,0,1\n").unwrap();
    let v = avbench(&["validate", p(&bad_q)]);
    assert_eq!(v.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&v.stdout).contains("unit-quaternion"));
    assert_eq!(avbench(&["metrics", p(&bad_q)]).status.code(), Some(1));

    let ok = synth_file(dir.path(), "ok.log", &SynthScenario::straight(20.0, 2.0, 10.0));
    assert_eq!(avbench(&["validate", &ok]).status.code(), Some(0));
    assert_eq!(avbench(&["--distance-method", "teleport", "metrics", &ok]).status.code(), Some(1));
    assert_eq!(avbench(&["--cell-size=-1", "metrics", &ok]).status.code(), Some(1));

    let bad_cfg = dir.path().join("bad.toml");
    std::fs::write(&bad_cfg, "cell_size = \"big\"\n").unwrap();
    assert_eq!(avbench(&["--config", p(&bad_cfg), "metrics", &ok]).status.code(), Some(2));
}

#[test]
fn report_is_the_union_of_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a = synth_file(d, "a.log", &SynthScenario::straight(120.0, 2.0, 10.0).with_intervention(50.0, 4.0));
    let b = synth_file(d, "b.log", &SynthScenario { seed: 5, ..SynthScenario::straight(120.0, 3.0, 10.0).with_intervention(20.0, 5.0) });
    let net = d.join("n.net");
    std::fs::write(&net, "segment,s,regular,2.5\npt,0,0\npt,200,0\n").unwrap();
    let report = stdout_json(&avbench(&["report", &a, &b, "--network", p(&net)]));
    assert_eq!(report["metrics"], without_config(stdout_json(&avbench(&["metrics", &b, &a]))));
    let map_dir = d.join("m");
    assert!(avbench(&["map", &a, &b, "--out", p(&map_dir)]).status.success());
    let map: Value = serde_json::from_str(&std::fs::read_to_string(map_dir.join("map.json")).unwrap()).unwrap();
    assert_eq!(report["map"], without_config(map));
    let roads = without_config(stdout_json(&avbench(&["roads", &a, "--network", p(&net)])));
    assert_eq!(report["roads"]["logs"][0], roads["logs"][0]);
    // spectrum CSV values appear in the report
    let spec_dir = d.join("s");
    assert!(avbench(&["spectrum", &a, "--out", p(&spec_dir)]).status.success());
    let csv = std::fs::read_to_string(spec_dir.join("spectrum_manual.csv")).unwrap();
    let second = csv.lines().nth(2).unwrap().split(',').collect::<Vec<_>>();
    let manual = &report["spectrum"]["logs"][0]["manual"];
    assert_eq!(manual["freq_hz"][1].to_string(), second[0]);
    assert_eq!(manual["magnitude"][1].to_string(), second[1]);
}

#[test]
fn csv_bundle_directory_equals_line_file() {
    let dir = tempfile::tempdir().unwrap();
    let log = DriveLog {
        log_id: Some("bundle".into()),
        poses: (0..20).map(|i| Pose::at(i as f64, i as f64 * 1.5, 0.0, 0.0)).collect(),
        engagement: vec![EngagementSample::new(0.0, true), EngagementSample::new(8.0, false), EngagementSample::new(19.0, true)],
        ..Default::default()
    };
    let file = dir.path().join("bundle.log");
    std::fs::write(&file, serialize_log(&log).unwrap()).unwrap();
    let bundle = dir.path().join("bundle");
    std::fs::create_dir(&bundle).unwrap();
    let mut pose = String::from("t,x,y,z,q0,q1,q2,q3\n");
    for q in &log.poses {
        pose.push_str(&format!("{},{},{},{},{},{},{},{}\n", q.t, q.x, q.y, q.z, q.q0, q.q1, q.q2, q.q3));
    }
    std::fs::write(bundle.join("pose.csv"), pose).unwrap();
    std::fs::write(bundle.join("engage.csv"), "t,enabled\n0,1\n8,0\n19,1\n").unwrap();
    std::fs::write(bundle.join("meta.csv"), "t,key,value\n0,log_id,bundle\n").unwrap();
    let a = stdout_json(&avbench(&["metrics", p(&file)]));
    let b = stdout_json(&avbench(&["metrics", p(&bundle)]));
    assert_eq!(a, b);
    assert_eq!(a["logs"][0]["totals"]["n_interventions"], 1);
}
