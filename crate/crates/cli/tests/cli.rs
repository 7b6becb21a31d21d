use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn ldq() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ldq"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn run_ok(args: &[&str]) -> Output {
    let out = ldq().args(args).output().expect("spawn ldq");
    assert!(
        out.status.success(),
        "ldq {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is one JSON object")
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("read {name}: {e}"))
}

fn json_file(dir: &Path, name: &str) -> Value {
    serde_json::from_slice(&read(dir, name)).unwrap_or_else(|e| panic!("parse {name}: {e}"))
}

#[test]
fn fluid_output_matches_the_frozen_golden() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(&[
        "fluid",
        "--config",
        data("two_station.json").to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    let got = read(tmp.path(), "fluid.csv");
    let want = include_bytes!("golden/fluid_two_station.csv");
    assert_eq!(got, want, "fluid.csv drifted from the frozen golden");
}

#[test]
fn deterministic_replays_are_bit_exact() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        run_ok(&[
            "fluid",
            "--config",
            data("two_station.json").to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ]);
    }
    assert_eq!(read(a.path(), "fluid.csv"), read(b.path(), "fluid.csv"));
    assert_eq!(read(a.path(), "fluid.json"), read(b.path(), "fluid.json"));

    // manifests agree on everything except the wall clock
    let strip = |dir: &Path| {
        let mut m = json_file(dir, "manifest.json");
        let obj = m.as_object_mut().unwrap();
        assert!(obj.remove("wall_time_s").is_some());
        m
    };
    assert_eq!(strip(a.path()), strip(b.path()));
}

#[test]
fn statistical_replays_with_one_seed_are_bit_exact() {
    let cfg = tempfile::Builder::new().suffix(".json").tempfile().unwrap();
    std::fs::write(
        cfg.path(),
        serde_json::to_vec_pretty(&serde_json::json!({
            "spec": {
                "stations": [{
                    "interarrival": { "family": "exponential", "mean": 2.0 },
                    "service": { "family": "exponential", "mean": 1.0 }
                }],
                "routing": [[0.0]],
                "seed": 11
            },
            "event": { "station": 0, "threshold": 0.15, "time": 1.0 },
            "scales": [10, 20],
            "replicas": 1000
        }))
        .unwrap(),
    )
    .unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        run_ok(&[
            "mc-ldp",
            "--config",
            cfg.path().to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ]);
    }
    assert_eq!(read(a.path(), "decay.csv"), read(b.path(), "decay.csv"));
    assert_eq!(read(a.path(), "mc-ldp.json"), read(b.path(), "mc-ldp.json"));
}

#[test]
fn rate_vanishes_at_the_fluid_point() {
    // two stations fed below capacity whose flows ride the nominal drift:
    // every component of the integrand sits at its zero
    let (x1, x2) = (27.0 / 35.0, 24.0 / 35.0);
    let line = |slope: f64| {
        serde_json::json!({ "breakpoints": [[0.0, 0.0], [1.0, slope]], "tail_slope": slope })
    };
    let cfg_value = serde_json::json!({
        "network": {
            "K": 2,
            "stations": [
                { "service": { "family": "poisson", "rate": 2.0 },
                  "exogenous": { "family": "poisson", "rate": 0.6 } },
                { "service": { "family": "poisson", "rate": 1.6 },
                  "exogenous": { "family": "poisson", "rate": 0.3 } }
            ],
            "routing": [[0.0, 0.5], [0.25, 0.0]]
        },
        "horizon": 1.0,
        "n": [line(0.6), line(0.3)],
        "s": [line(2.0), line(1.6)],
        "p": [
            [
                { "breakpoints": [[0.0, 0.0], [3.0, 0.0]] },
                { "breakpoints": [[0.0, 0.0], [3.0, 1.5]], "tail_slope": 0.5 }
            ],
            [
                { "breakpoints": [[0.0, 0.0], [3.0, 0.75]], "tail_slope": 0.25 },
                { "breakpoints": [[0.0, 0.0], [3.0, 0.0]] }
            ]
        ]
    });
    let cfg = tempfile::Builder::new().suffix(".json").tempfile().unwrap();
    std::fs::write(cfg.path(), serde_json::to_vec_pretty(&cfg_value).unwrap()).unwrap();

    let tmp = tempfile::tempdir().unwrap();
    run_ok(&[
        "rate",
        "--config",
        cfg.path().to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    let rate = json_file(tmp.path(), "rate.json")["rate"].as_f64().unwrap();
    assert_eq!(rate, 0.0, "fluid point must have rate exactly zero");

    // sanity on the solved flows: they follow the fluid drift
    let fluid_dir = tempfile::tempdir().unwrap();
    run_ok(&[
        "fluid",
        "--config",
        cfg.path().to_str().unwrap(),
        "--out",
        fluid_dir.path().to_str().unwrap(),
    ]);
    let summary = json_file(fluid_dir.path(), "fluid.json");
    let at_horizon = summary["departures_at_horizon"].as_array().unwrap();
    assert!((at_horizon[0].as_f64().unwrap() - x1).abs() < 1e-9);
    assert!((at_horizon[1].as_f64().unwrap() - x2).abs() < 1e-9);
}

#[test]
fn missing_config_exits_config_code_and_writes_nothing() {
    let parent = tempfile::tempdir().unwrap();
    let out_dir = parent.path().join("results");
    let out = ldq()
        .args([
            "fluid",
            "--config",
            "/definitely/not/here.json",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "config");
    assert!(err["reason"].as_str().unwrap().contains("not/here.json"));
    assert!(!out_dir.exists(), "failed run must not create outputs");
}

#[test]
fn malformed_config_exits_config_code() {
    let cfg = tempfile::Builder::new().suffix(".json").tempfile().unwrap();
    std::fs::write(cfg.path(), b"{ \"horizon\": }").unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let out = ldq()
        .args([
            "fluid",
            "--config",
            cfg.path().to_str().unwrap(),
            "--out",
            tmp.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "config");
    assert!(std::fs::read_dir(tmp.path()).unwrap().next().is_none());
}

#[test]
fn library_rejections_exit_validation_code() {
    let cfg = tempfile::Builder::new().suffix(".json").tempfile().unwrap();
    std::fs::write(cfg.path(), br#"{ "n": 100, "x": 1.5, "alpha": 0.5 }"#).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let out = ldq()
        .args([
            "counterexample",
            "--config",
            cfg.path().to_str().unwrap(),
            "--out",
            tmp.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "validation");
    assert!(std::fs::read_dir(tmp.path()).unwrap().next().is_none());
}

#[test]
fn seed_flag_replaces_the_spec_seed() {
    let cfg = tempfile::Builder::new().suffix(".json").tempfile().unwrap();
    std::fs::write(
        cfg.path(),
        serde_json::to_vec_pretty(&serde_json::json!({
            "spec": {
                "stations": [{
                    "interarrival": { "family": "exponential", "mean": 2.0 },
                    "service": { "family": "exponential", "mean": 1.0 }
                }],
                "routing": [[0.0]],
                "seed": 7
            },
            "n": 20,
            "horizon": 1.0
        }))
        .unwrap(),
    )
    .unwrap();
    let base = tempfile::tempdir().unwrap();
    let same = tempfile::tempdir().unwrap();
    let other = tempfile::tempdir().unwrap();
    run_ok(&[
        "simulate",
        "--config",
        cfg.path().to_str().unwrap(),
        "--out",
        base.path().to_str().unwrap(),
    ]);
    run_ok(&[
        "simulate",
        "--config",
        cfg.path().to_str().unwrap(),
        "--out",
        same.path().to_str().unwrap(),
        "--seed",
        "7",
    ]);
    run_ok(&[
        "simulate",
        "--config",
        cfg.path().to_str().unwrap(),
        "--out",
        other.path().to_str().unwrap(),
        "--seed",
        "8",
    ]);
    assert_eq!(read(base.path(), "simulate.csv"), read(same.path(), "simulate.csv"));
    assert_ne!(read(base.path(), "simulate.csv"), read(other.path(), "simulate.csv"));
    let first = String::from_utf8(read(other.path(), "simulate.csv")).unwrap();
    assert!(first.starts_with("# seed=8 config_sha256="));
    assert_eq!(json_file(other.path(), "simulate.json")["seed"], 8);
}

#[test]
fn every_output_embeds_seed_and_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(&[
        "fluid",
        "--config",
        data("two_station.json").to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    let config_bytes = std::fs::read(data("two_station.json")).unwrap();
    let mut h = Sha256::new();
    h.update(&config_bytes);
    let expect_hash = format!("{:x}", h.finalize());

    let csv = String::from_utf8(read(tmp.path(), "fluid.csv")).unwrap();
    let first = csv.lines().next().unwrap();
    assert_eq!(first, format!("# seed=0 config_sha256={expect_hash}"));
    assert_eq!(csv.lines().nth(1).unwrap(), "t,a0,a1,d0,d1,q0,q1");

    for name in ["fluid.json", "manifest.json"] {
        let v = json_file(tmp.path(), name);
        assert_eq!(v["seed"], 0, "{name}");
        assert_eq!(v["config_sha256"], Value::String(expect_hash.clone()), "{name}");
    }
    let manifest = json_file(tmp.path(), "manifest.json");
    assert_eq!(manifest["inputs"][0]["sha256"], Value::String(expect_hash));
    assert_eq!(manifest["outputs"], serde_json::json!(["fluid.csv", "fluid.json"]));
    assert!(manifest["versions"]["ldq"].is_string());
}
