use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn gism(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gism")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_is_byte_deterministic() {
    let dir = TempDir::new().unwrap();
    for out in ["a", "b"] {
        let o = gism(&["synth", "example2", "--out", out], dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = fs::read(dir.path().join("a/design.json")).unwrap();
    let b = fs::read(dir.path().join("b/design.json")).unwrap();
    assert_eq!(a, b);

    let manifest = json(&dir.path().join("a/manifest.json"));
    let listed = manifest["outputs"][0]["sha256"].as_str().unwrap();
    let actual: String = Sha256::digest(&a).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(listed, actual);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert!(manifest["seeds"]["sample_points"].is_u64());
}

#[test]
fn missing_bperp_is_a_schema_error() {
    let dir = TempDir::new().unwrap();
    let o = gism(&["synth", "example2", "--theorem", "3", "--out", "x"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("Bperp"), "{}", stderr(&o));
}

#[test]
fn glucose_without_parameters_exits_2() {
    let dir = TempDir::new().unwrap();
    let o = gism(&["simulate", "glucose", "--out", "g"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("parameter"));
}

#[test]
fn unknown_degree_names_are_rejected() {
    let dir = TempDir::new().unwrap();
    let o = gism(&["synth", "example2", "--degrees", "P=2", "--out", "x"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("'p'"));
}

#[test]
fn check_names_a_corrupted_certificate() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&gism(&["synth", "example2", "--out", "d"], dir.path())), 0);
    let ok = gism(&["check", "d/design.json", "--against", "example2"], dir.path());
    assert_eq!(code(&ok), 0);
    assert!(stdout(&ok).contains("design checks passed"), "{}", stdout(&ok));

    let mut design = json(&dir.path().join("d/design.json"));
    let cert = &mut design["certificates"][1];
    let name = cert["constraint"].as_str().unwrap().to_string();
    let entry = &mut cert["certificate"]["gram"][0][1];
    *entry = Value::from(entry.as_f64().unwrap() + 0.5);
    fs::write(dir.path().join("bad.json"), design.to_string()).unwrap();

    let o = gism(&["check", "bad.json", "--out", "report.json"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains(&format!("certificate '{name}': FAIL")), "{}", stdout(&o));
    let report = json(&dir.path().join("report.json"));
    assert_eq!(report["failed"], serde_json::json!([name]));
}

#[test]
fn check_rejects_malformed_designs() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("junk.json"), "{\"theorem\": 7}").unwrap();
    assert_eq!(code(&gism(&["check", "junk.json"], dir.path())), 2);
}

#[test]
fn boundary_layer_lowers_chattering() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&gism(&["synth", "example2", "--out", "d"], dir.path())), 0);
    let chattering = |alpha: &str| {
        let out = format!("s{alpha}");
        let o = gism(
            &["simulate", "example2", "--design", "d/design.json", "--alpha", alpha, "--t-end", "3", "--out", &out],
            dir.path(),
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let csv = fs::read_to_string(dir.path().join(&out).join("trace.csv")).unwrap();
        assert!(csv.starts_with("t,x1,x2,z1,s1,u1,rho,V\n"));
        json(&dir.path().join(&out).join("metrics.json"))["sliding"]["chattering_index"].as_f64().unwrap()
    };
    let (hard, soft) = (chattering("0"), chattering("0.05"));
    assert!(soft < hard, "{soft} vs {hard}");
}

#[test]
fn divergence_exits_5_with_partial_trace() {
    let dir = TempDir::new().unwrap();
    let model = r#"{
        "name": "blowup",
        "dynamics": {"f": ["\"x1^2\""], "b": [["1"]]},
        "x0": [1.0],
        "horizon": 5.0,
        "controller": {
            "g": "(vec \"x1\")",
            "m": [["1"]],
            "zdot": {"kind": "explicit", "d": "(vec 0)"},
            "k": null,
            "direction": "unit",
            "rho": "0",
            "alpha": 0.0
        }
    }"#;
    fs::write(dir.path().join("blowup.json"), model).unwrap();
    let o = gism(&["simulate", "blowup.json", "--format", "json", "--out", "r"], dir.path());
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    let metrics = json(&dir.path().join("r/metrics.json"));
    let t = metrics["diverged_at"].as_f64().unwrap();
    assert!(t > 0.9 && t < 1.1);
    assert!(metrics["samples"].as_u64().unwrap() > 0);
    assert!(dir.path().join("r/trace.json").is_file());
}

#[test]
fn export_sdpa_writes_a_parsable_file() {
    let dir = TempDir::new().unwrap();
    let o = gism(&["export-sdpa", "example3", "--theorem", "4", "--gamma", "0.5", "--out", "p.dat-s"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("p.dat-s")).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('"') && !l.starts_with('*'));
    let m: usize = lines.next().unwrap().trim().parse().unwrap();
    let blocks: usize = lines.next().unwrap().trim().parse().unwrap();
    assert!(m > 0 && blocks > 0);
    let manifest = json(&dir.path().join("p.dat-s.manifest.json"));
    assert_eq!(manifest["outputs"][0]["path"], "p.dat-s");
}
