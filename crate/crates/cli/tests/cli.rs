use std::path::Path;
use std::process::{Command, Output};

fn cqnls(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqnls"))
        .args(args)
        .output()
        .expect("spawn cqnls")
}

fn golden(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("golden")
        .join(format!("{name}.toml"))
        .display()
        .to_string()
}

fn summary(dir: &Path) -> String {
    std::fs::read_to_string(dir.join("summary.txt")).unwrap()
}

fn value(summary: &str, key: &str) -> String {
    summary
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from\n{summary}"))
        .to_string()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(cqnls(&["--help"]).status.code(), Some(0));
    assert_eq!(cqnls(&["--version"]).status.code(), Some(0));
    assert_eq!(cqnls(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cqnls(&["gen", "--bogus"]).status.code(), Some(1));
    assert_eq!(cqnls(&[]).status.code(), Some(1));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "schema_version = 1\n[grid]\nsize = 3\n").unwrap();
    let out = cqnls(&["gen", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let out = cqnls(&["gen", "--override", "schema_version=2", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn constant_state_has_no_drift() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cqnls(&[
        "simulate",
        "--config",
        &golden("simulate"),
        "--override",
        "data.amplitude=0",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(tmp.path());
    assert_eq!(value(&s, "energy_drift"), "0.0");
    assert_eq!(value(&s, "mass_drift"), "0.0");
}

#[test]
fn normal_form_round_trip_on_a_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let gen_dir = tmp.path().join("gen");
    let out = cqnls(&[
        "gen",
        "--config",
        &golden("normal_form"),
        "--out",
        gen_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let nf_dir = tmp.path().join("nf");
    let snap = gen_dir.join("u.bin");
    let out = cqnls(&[
        "normal-form",
        "--snapshot",
        snap.to_str().unwrap(),
        "--out",
        nf_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&nf_dir);
    let rt: f64 = value(&s, "round_trip_rm").parse().unwrap();
    assert!(rt <= 1e-9, "{rt}");
    assert_eq!(value(&s, "passes"), "true");
}

#[test]
fn scatter_small_rejects_large_data() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cqnls(&[
        "scatter-small",
        "--config",
        &golden("scatter_small"),
        "--override",
        "scattering.eta=1e-4",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("X_1 norm"), "{err}");
    let x1: f64 = value(&summary(tmp.path()), "x1_norm").parse().unwrap();
    assert!(x1 > 1e-4);
}

#[test]
fn divergence_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cqnls(&[
        "normal-form",
        "--config",
        &golden("normal_form"),
        "--override",
        "data.amplitude=8.5",
        "--override",
        "normal_form.max_iters=30",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(value(&summary(tmp.path()), "status"), "error");
}

#[test]
fn seed_flag_controls_generated_data() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |seed: &str, dir: &str| {
        let d = tmp.path().join(dir);
        let out = cqnls(&["gen", "--config", &golden("gen"), "--seed", seed, "--out", d.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        std::fs::read(d.join("u.bin")).unwrap()
    };
    let a = run("5", "a");
    let b = run("5", "b");
    let c = run("6", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
    let manifest = std::fs::read_to_string(tmp.path().join("a/manifest.toml")).unwrap();
    assert!(manifest.starts_with("# cqnls "));
    assert!(manifest.contains("seed = 5"));
}
