use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use doppler_audit::reference::parse_centroid_csv;
use doppler_audit::spectral::parse_spectro;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_doppler-audit");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: PathBuf) -> String {
    path.display().to_string()
}

fn simulate(dir: &Path, extra: &[&str]) -> PathBuf {
    let sim = dir.join("sim");
    let mut args = vec!["simulate", "--duration", "12", "--out-dir"];
    let sim_s = p(sim.clone());
    args.push(&sim_s);
    args.extend_from_slice(extra);
    ok(&args);
    sim
}

fn report(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), &[]);
    for name in ["mocap.csv", "iq.csv", "truth.spectro.csv", "radar.toml", "weights.cfg"] {
        assert!(sim.join(name).is_file(), "{name}");
    }
    let iq = std::fs::read_to_string(sim.join("iq.csv")).unwrap();
    assert_eq!(iq.lines().next(), Some("t,i,q"));
    // 12 s at 256 Hz
    assert_eq!(iq.lines().count() - 1, 12 * 256 + 1);
    let truth = parse_spectro(&std::fs::read_to_string(sim.join("truth.spectro.csv")).unwrap()).unwrap();
    assert_eq!(truth.n_frames(), (12 * 256 + 1 - 256) / 32 + 1);
    let mocap = std::fs::read_to_string(sim.join("mocap.csv")).unwrap();
    assert!(mocap.starts_with("#MOCAP v1"));
    assert!(mocap.contains("RADAR1_x"));
}

#[test]
fn oracle_audit_against_simulated_truth() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), &[]);
    let out = dir.path().join("audit");
    ok(&[
        "audit",
        "--mocap",
        &p(sim.join("mocap.csv")),
        "--radar-config",
        &p(sim.join("radar.toml")),
        "--weights",
        &p(sim.join("weights.cfg")),
        "--truth",
        &p(sim.join("truth.spectro.csv")),
        "--model",
        "oracle",
        "--images",
        "--out-dir",
        &p(out.clone()),
    ]);
    let r = report(out.join("report.json"));
    assert_eq!(r["label"], "Accurate and physically consistent");
    // truth is stored with 9 decimals
    assert!(r["metrics"]["mae_db"].as_f64().unwrap() < 1e-8);
    assert!(r["metrics"]["fva"]["value"].as_f64().unwrap() > 0.95);
    assert!(r["metrics"]["dcs"].as_f64().unwrap() > 0.95);
    assert_eq!(r["config"]["framing"]["win_len"], 256);
    assert_eq!(r["config"]["alphas"].as_array().unwrap().len(), 10);
    assert_eq!(r["config"]["weights_digest"].as_str().unwrap().len(), 64);
    let warnings = r["warnings"].as_array().unwrap();
    assert!(warnings.iter().any(|w| w.as_str().unwrap().contains("RADAR")));

    let pred = parse_centroid_csv(&std::fs::read_to_string(out.join("pred_centroid.csv")).unwrap()).unwrap();
    assert_eq!(pred.len() as u64, r["frames"].as_u64().unwrap());
    for name in ["ref_centroid.csv", "rev_pred_centroid.csv", "rev_ref_centroid.csv"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    for name in ["prediction.pgm", "truth.pgm"] {
        assert!(std::fs::read(out.join(name)).unwrap().starts_with(b"P5\n"));
    }
}

#[test]
fn reference_then_metrics_matches_audit_fva() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), &[]);
    let reference = dir.path().join("ref.csv");
    ok(&[
        "reference",
        "--mocap",
        &p(sim.join("mocap.csv")),
        "--radar-config",
        &p(sim.join("radar.toml")),
        "--out",
        &p(reference.clone()),
    ]);
    let out = ok(&[
        "metrics",
        "--pred",
        &p(sim.join("truth.spectro.csv")),
        "--ref-centroid",
        &p(reference.clone()),
    ]);
    let metrics: Value = serde_json::from_slice(&out.stdout).unwrap();

    let audit_dir = dir.path().join("audit");
    ok(&[
        "audit",
        "--mocap",
        &p(sim.join("mocap.csv")),
        "--radar-config",
        &p(sim.join("radar.toml")),
        "--model",
        "oracle",
        "--out-dir",
        &p(audit_dir.clone()),
    ]);
    let r = report(audit_dir.join("report.json"));
    let a = metrics["fva"]["value"].as_f64().unwrap();
    let b = r["metrics"]["fva"]["value"].as_f64().unwrap();
    // the CSV trace carries 9 decimals
    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    assert_eq!(
        std::fs::read_to_string(reference).unwrap(),
        std::fs::read_to_string(audit_dir.join("ref_centroid.csv")).unwrap()
    );
}

#[test]
fn external_model_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), &[]);
    let truth = p(sim.join("truth.spectro.csv"));
    let cmd = format!("echo external-ran; cp '{truth}' {{output}}");
    let out = dir.path().join("audit");
    ok(&[
        "audit",
        "--mocap",
        &p(sim.join("mocap.csv")),
        "--radar-config",
        &p(sim.join("radar.toml")),
        "--model",
        "external",
        "--cmd",
        &format!("test -s {{input}} && {cmd}"),
        "--alphas",
        "0.5,1.0",
        "--out-dir",
        &p(out.clone()),
    ]);
    let r = report(out.join("report.json"));
    // a fixed file ignores every intervention
    assert!(r["metrics"]["fva"]["value"].as_f64().unwrap() > 0.95);
    assert!(r["metrics"]["dcs"].as_f64().unwrap() < 0.0);
    assert!(r["model_output"][0].as_str().unwrap().contains("external-ran"));
    assert_eq!(r["model"]["kind"], "external");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path(), &[]);
    let mocap = p(sim.join("mocap.csv"));
    let out = p(dir.path().join("x"));
    let code = |args: &[&str]| run(args).status.code().unwrap();

    assert_eq!(code(&["audit", "--mocap", &mocap]), 2);
    assert_eq!(code(&["audit", "--mocap", &mocap, "--model", "mlp", "--out-dir", &out]), 2);
    assert_eq!(
        code(&["audit", "--mocap", &mocap, "--model", "oracle", "--thresholds", "fva=1.5", "--out-dir", &out]),
        2
    );
    assert_eq!(code(&["audit", "--mocap", &mocap, "--model", "external", "--out-dir", &out]), 2);

    let missing = p(dir.path().join("missing.csv"));
    assert_eq!(code(&["audit", "--mocap", &missing, "--model", "oracle", "--out-dir", &out]), 3);
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "#MOCAP v1,rate=250,units=m\nt,A_x,A_y\n").unwrap();
    assert_eq!(code(&["audit", "--mocap", &p(bad), "--model", "oracle", "--out-dir", &out]), 3);

    let failing = run(&[
        "audit", "--mocap", &mocap, "--model", "external", "--cmd", "echo boom >&2; exit 1 # {input} {output}",
        "--out-dir", &out,
    ]);
    assert_eq!(failing.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&failing.stderr).contains("boom"));
}

#[test]
fn short_trial_is_rejected_with_framing_arithmetic() {
    let dir = tempfile::tempdir().unwrap();
    let mut mocap = String::from("#MOCAP v1,rate=256,units=m\nt,HEAD_x,HEAD_y,HEAD_z\n");
    for i in 0..200 {
        let t = i as f64 / 256.0;
        mocap.push_str(&format!("{t},{},0,1.6\n", 3.0 + t));
    }
    let mocap_path = dir.path().join("short.csv");
    std::fs::write(&mocap_path, mocap).unwrap();
    let cfg = dir.path().join("radar.toml");
    std::fs::write(&cfg, "carrier_hz = 5.8e9\nfs_hz = 256.0\nradar_pos = [0.0, 0.0, 1.0]\n").unwrap();

    let out = run(&[
        "audit",
        "--mocap",
        &p(mocap_path),
        "--radar-config",
        &p(cfg),
        "--model",
        "oracle",
        "--out-dir",
        &p(dir.path().join("x")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("200 samples") && msg.contains("L = 256"), "{msg}");
    assert!(!dir.path().join("x").exists());
}
