use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use striplab::model::{EnsembleSpec, ScalarLaw};

fn exe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_striplab"))
}

fn uniform(width: usize, half: f64) -> EnsembleSpec {
    EnsembleSpec::anderson_strip(width, ScalarLaw::Uniform { lo: -half, hi: half })
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(config: &Path, out: &Path, threads: usize) -> Output {
    exe()
        .args(["run", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", &threads.to_string()])
        .output()
        .unwrap()
}

fn report(manifest: &Path) -> Output {
    exe().args(["report", manifest.to_str().unwrap()]).output().unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn free_chain() -> Value {
    json!({
        "experiment": "lyapunov-spectrum",
        "ensemble": EnsembleSpec::free_strip(1),
        "energies": {"lo": 3.0, "hi": 3.0, "points": 1},
        "sizes": [100000],
        "replicas": 1,
        "seed": 42
    })
}

#[test]
fn free_chain_run_reports_exponents_and_symmetry() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &free_chain());
    let out = dir.path().join("out");
    let o = run(&cfg, &out, 1);
    assert!(o.status.success(), "{}", text(&o));

    let line = fs::read_to_string(out.join("results.jsonl")).unwrap();
    let rec: Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    assert_eq!(rec["schema_version"], 1);
    assert_eq!(rec["config_hash"].as_str().unwrap().len(), 64);
    let g1 = rec["result"]["exponents"][0].as_f64().unwrap();
    assert!((g1 - ((3.0 + 5f64.sqrt()) / 2.0).ln()).abs() < 1e-4, "{g1}");

    let r = report(&out.join("manifest.json"));
    assert!(r.status.success(), "{}", text(&r));
    let t = text(&r);
    assert!(t.contains("[PASS] symmetry E=3 N=100000"), "{t}");
    assert!(t.contains("exponents [0.96242"), "{t}");
    assert!(t.contains("threshold: |gamma_j + gamma_(2W+1-j)|"), "{t}");

    let csv = fs::read_to_string(out.join("lyapunov-spectrum.csv")).unwrap();
    assert!(csv.starts_with("energy,n,j,gamma,stderr\r\n"), "{csv}");
    assert!(fs::read_to_string(out.join("lyapunov-spectrum.svg")).unwrap().contains("<svg"));
}

#[test]
fn output_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = free_chain();
    v["ensemble"] = json!(uniform(2, 1.0));
    v["energies"] = json!({"lo": -1.0, "hi": 1.0, "points": 3});
    v["sizes"] = json!([500, 1000]);
    v["replicas"] = json!(4);
    let cfg = write_config(dir.path(), "c.json", &v);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&cfg, &a, 1).status.success());
    assert!(run(&cfg, &b, 3).status.success());
    for f in ["results.jsonl", "lyapunov-spectrum.csv", "lyapunov-spectrum.svg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn tampered_line_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = free_chain();
    v["energies"] = json!({"lo": 2.5, "hi": 3.0, "points": 2});
    v["sizes"] = json!([1000]);
    let cfg = write_config(dir.path(), "c.json", &v);
    let out = dir.path().join("out");
    assert!(run(&cfg, &out, 1).status.success());
    let path = out.join("results.jsonl");
    let body = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    let tampered = lines[1].replacen("\"exponents\":[0", "\"exponents\":[1", 1);
    assert_ne!(tampered, lines[1]);
    fs::write(&path, format!("{}\n{tampered}\n", lines[0])).unwrap();
    let r = report(&out.join("manifest.json"));
    assert_eq!(r.status.code(), Some(2));
    assert!(text(&r).contains("integrity error: results.jsonl line 2"), "{}", text(&r));
}

#[test]
fn empty_results_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = free_chain();
    v["sizes"] = json!([1000]);
    let cfg = write_config(dir.path(), "c.json", &v);
    let out = dir.path().join("out");
    assert!(run(&cfg, &out, 1).status.success());
    fs::write(out.join("results.jsonl"), "").unwrap();
    let r = report(&out.join("manifest.json"));
    assert!(!r.status.success());
    assert!(text(&r).contains("no records"), "{}", text(&r));
}

#[test]
fn missing_output_is_an_integrity_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = free_chain();
    v["sizes"] = json!([1000]);
    let cfg = write_config(dir.path(), "c.json", &v);
    let out = dir.path().join("out");
    assert!(run(&cfg, &out, 1).status.success());
    fs::remove_file(out.join("lyapunov-spectrum.csv")).unwrap();
    let r = report(&out.join("manifest.json"));
    assert_eq!(r.status.code(), Some(2));
    assert!(text(&r).contains("integrity error: missing lyapunov-spectrum.csv"), "{}", text(&r));
}

#[test]
fn resonance_tau_above_gamma_fails_before_any_task() {
    let dir = tempfile::tempdir().unwrap();
    let v = json!({
        "experiment": "resonance-map",
        "ensemble": uniform(1, 1.0),
        "energies": {"lo": 0.0, "hi": 0.0, "points": 1},
        "sizes": [4],
        "replicas": 2,
        "seed": 1,
        "tau": 5.0,
        "options": {"reference_steps": 2000, "reference_replicas": 4}
    });
    let cfg = write_config(dir.path(), "c.json", &v);
    let out = dir.path().join("out");
    let o = run(&cfg, &out, 1);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("tau: 5 is not below the reference gammaW"), "{}", text(&o));
    assert!(!out.join("results.jsonl").exists());
}

#[test]
fn validation_names_fields() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = free_chain();
    v.as_object_mut().unwrap().remove("seed");
    let o = run(&write_config(dir.path(), "a.json", &v), &dir.path().join("a"), 1);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o).contains("missing field `seed`"), "{}", text(&o));

    let mut v = free_chain();
    v["experiment"] = json!("wegner");
    v["replicas"] = json!(0);
    let o = run(&write_config(dir.path(), "b.json", &v), &dir.path().join("b"), 1);
    assert_eq!(o.status.code(), Some(2));
    let t = text(&o);
    assert!(t.contains("replicas: must be at least 1") && t.contains("epsilon: required"), "{t}");
}

#[test]
fn threads_fall_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = free_chain();
    v["sizes"] = json!([1000]);
    let cfg = write_config(dir.path(), "c.json", &v);
    let out = dir.path().join("out");
    let o = exe()
        .args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env("STRIPLAB_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", text(&o));
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["threads"], 2);
}

/// Every experiment type at toy scale: runs, writes its files and
/// re-verifies through `report`.
#[test]
fn every_experiment_runs_at_toy_scale() {
    let dir = tempfile::tempdir().unwrap();
    let strong = uniform(1, 4.0);
    let refs = json!({"reference_steps": 2000, "reference_replicas": 4});
    let cases = [
        json!({"experiment": "ldp-tail", "ensemble": uniform(1, 1.0), "energies": {"lo": 0.0, "hi": 0.0, "points": 1},
               "sizes": [20, 40], "replicas": 200, "seed": 1, "epsilon_fraction": 0.5, "options": refs}),
        json!({"experiment": "green-oracle", "ensemble": uniform(2, 1.0), "energies": {"lo": -1.0, "hi": 1.0, "points": 2},
               "sizes": [2, 5], "replicas": 10, "seed": 2}),
        json!({"experiment": "wegner", "ensemble": uniform(1, 1.0), "energies": {"lo": 0.0, "hi": 0.0, "points": 1},
               "sizes": [5, 10], "replicas": 100, "seed": 3, "epsilon": 0.1}),
        json!({"experiment": "resonance-map", "ensemble": strong, "energies": {"lo": 0.0, "hi": 0.0, "points": 1},
               "sizes": [2, 3], "replicas": 3, "seed": 4, "tau_fraction": 0.3, "options": refs}),
        json!({"experiment": "decay-rates", "ensemble": strong, "energies": {"lo": -0.5, "hi": 0.5, "points": 3},
               "sizes": [60], "replicas": 2, "seed": 5, "options": {"reference_steps": 2000, "reference_replicas": 4, "grid_tau": 1.0}}),
        json!({"experiment": "correlator", "ensemble": strong, "energies": {"lo": -0.5, "hi": 0.5, "points": 3},
               "sizes": [60], "replicas": 2, "seed": 6,
               "options": {"reference_steps": 2000, "reference_replicas": 4, "grid_tau": 1.0, "fit_range": [5, 20]}}),
        json!({"experiment": "fractional-moment", "ensemble": uniform(1, 2.0), "energies": {"lo": -0.5, "hi": 0.5, "points": 1},
               "sizes": [12], "replicas": 1, "seed": 7, "options": {"separations": [0, 3], "epsilons": [0.2, 0.1]}}),
    ];
    for v in cases {
        let name = v["experiment"].as_str().unwrap().to_string();
        let cfg = write_config(dir.path(), &format!("{name}.json"), &v);
        let out = dir.path().join(&name);
        let o = run(&cfg, &out, 2);
        assert!(matches!(o.status.code(), Some(0 | 1)), "{name}: {}", text(&o));
        assert!(out.join(format!("{name}.csv")).exists(), "{name}");
        assert!(out.join(format!("{name}.svg")).exists(), "{name}");
        let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        assert!(m["tasks"].as_array().unwrap().iter().all(|t| t["ok"] == true), "{name}: {m}");
        let r = report(&out.join("manifest.json"));
        assert_eq!(r.status.code(), o.status.code(), "{name}: {}", text(&r));
        assert!(text(&r).contains("[PASS] tasks"), "{name}: {}", text(&r));
    }
}
