use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("refugia-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

const SMALL_RING: &str = r#"
[domain]
kind = "ring1d"
circumference = 6.283185307179586
refuge_length = 3.141592653589793
nodes = 64

[model]
lambda = 1.0
mu = 2.0
b = 1.0
c = 1.0
alpha = 1.0
"#;

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

fn refugia(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_refugia"))
        .args(args)
        .arg("--out")
        .arg(dir.join("out"))
        .env("REFUGIA_THREADS", "1")
        .output()
        .unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/manifest.json")).unwrap()).unwrap()
}

fn assert_manifest_lists_every_output(dir: &Path) {
    let m = manifest(dir);
    let listed: Vec<String> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    for entry in fs::read_dir(dir.join("out")).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if name != "manifest.json" {
            assert!(listed.contains(&name), "{name} missing from manifest");
        }
    }
    for name in &listed {
        assert!(dir.join("out").join(name).exists(), "{name} listed but absent");
    }
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = scratch("usage");
    let out = refugia(&dir, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_configs_exit_with_the_config_code() {
    let dir = scratch("badcfg");
    let cfg = write_config(&dir, &SMALL_RING.replace("b = 1.0", "b = -1.0"));
    let out = refugia(&dir, &["--config", cfg.to_str().unwrap(), "eig"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("b must be positive"));

    let cfg = write_config(&dir, &format!("{SMALL_RING}\nsurprise = 1\n"));
    let out = refugia(&dir, &["--config", cfg.to_str().unwrap(), "eig"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("surprise"));
}

#[test]
fn eig_is_reproducible_and_stamped() {
    let dir = scratch("eig");
    let cfg = write_config(&dir, SMALL_RING);
    let args = ["--config", cfg.to_str().unwrap(), "eig", "--mu-grid", "0.1:100:12:log"];
    let out = refugia(&dir, &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = fs::read(dir.join("out/eig.csv")).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    let hash = manifest(&dir)["config_hash"].as_str().unwrap().to_string();
    assert!(text.lines().next().unwrap().contains(&hash));
    assert_eq!(text.lines().count(), 2 + 12);
    assert_eq!(manifest(&dir)["summary"]["increasing"], true);
    assert_manifest_lists_every_output(&dir);

    let again = refugia(&dir, &args);
    assert!(again.status.success());
    assert_eq!(first, fs::read(dir.join("out/eig.csv")).unwrap());
}

#[test]
fn regions_writes_table_and_diagram() {
    let dir = scratch("regions");
    let cfg = write_config(&dir, SMALL_RING);
    let out = refugia(
        &dir,
        &[
            "--config",
            cfg.to_str().unwrap(),
            "regions",
            "--lambda",
            "0.1:2:5",
            "--mu",
            "-2:3:6",
            "--alpha",
            "2",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("out/regions.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 30);
    assert!(csv.contains("nonexistence_growth_bound") && csv.contains("existence_guaranteed"));
    let svg = fs::read_to_string(dir.join("out/regions.svg")).unwrap();
    assert!(svg.contains("lambda = sigma1(b mu)") && svg.contains("lambda = |mu|/c"));
    assert_manifest_lists_every_output(&dir);
}

#[test]
fn steady_reports_a_positive_solution() {
    let dir = scratch("steady");
    let cfg = write_config(&dir, SMALL_RING);
    let out = refugia(&dir, &["--config", cfg.to_str().unwrap(), "steady", "--lambda", "1.2", "--fields"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sol: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/solution.json")).unwrap()).unwrap();
    let s = &sol["solutions"][0];
    assert_eq!(s["positive"], true);
    assert_eq!(s["u_within_bound"], true);
    assert_eq!(s["v_within_bound"], true);
    assert!(s["residual"].as_f64().unwrap() < 1e-8);
    assert!(dir.join("out/fields_0.csv").exists());
    assert_manifest_lists_every_output(&dir);
}

#[test]
fn strong_flux_branch_has_a_fold() {
    let dir = scratch("continue");
    let cfg = write_config(&dir, SMALL_RING);
    let out = refugia(
        &dir,
        &["--config", cfg.to_str().unwrap(), "continue", "--from", "gamma-v", "--alpha", "100"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&dir);
    let folds = m["summary"]["folds"].as_array().unwrap();
    assert!(!folds.is_empty());
    assert!(folds[0].as_f64().unwrap() < m["summary"]["origin"].as_f64().unwrap());
    let csv = fs::read_to_string(dir.join("out/branch.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("s,lambda,u_max"));
    assert!(fs::read_to_string(dir.join("out/branch.svg")).unwrap().contains(">fold<"));
}

#[test]
fn prey_only_branch_requires_negative_mu() {
    let dir = scratch("gammau");
    let cfg = write_config(&dir, SMALL_RING);
    let out = refugia(&dir, &["--config", cfg.to_str().unwrap(), "continue", "--from", "gamma-u"]);
    assert_eq!(out.status.code(), Some(3));
    let out = refugia(
        &dir,
        &["--config", cfg.to_str().unwrap(), "continue", "--from", "gamma-u", "--mu", "-1"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn evolve_exit_code_tells_steady_from_time_limit() {
    let dir = scratch("evolve");
    let cfg = write_config(&dir, SMALL_RING);
    let c = cfg.to_str().unwrap();
    let out = refugia(&dir, &["--config", c, "evolve", "--T", "0.5", "--snapshots", "2"]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("out/snapshot_0000.csv").exists());
    assert_manifest_lists_every_output(&dir);

    let long = scratch("evolve-long");
    let out = refugia(&long, &["--config", c, "evolve", "--T", "500"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn asymptotic_limit_probe_reports_unit_slope() {
    let dir = scratch("lambda0");
    let cfg = write_config(&dir, SMALL_RING);
    let out = refugia(&dir, &["--config", cfg.to_str().unwrap(), "asymptotics", "--mode", "lambda0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&dir);
    assert!((m["summary"]["slope"].as_f64().unwrap() - 1.0).abs() < 0.1);
    assert!(m["summary"]["det_j"].as_f64().unwrap() < 0.0);
    assert!(dir.join("out/lambda0_scaling.svg").exists());
}
