use std::path::Path;
use std::process::{Command, Output};

use tempoflow_core::{load_container, load_field};

const BIN: &str = env!("CARGO_BIN_EXE_tempoflow");

const SMALL: &str = r#"{
    "grid": {"nx": 16, "ny": 16, "nz": 16, "dx": 2.0, "nt_hr": 8, "dt_hr": 80.0},
    "phantoms": {"n_train": 1, "n_val": 1, "n_test": 1},
    "acquisition": {"n_coils_total": 8, "n_coils_active": 2},
    "recon": {"fista": {"n_iter": 5}},
    "patches": {"geometry": {"size": 8, "frames": 4, "overlap": 2},
                "train": {"n_patches": 8}, "eval": {"n_patches": 4}},
    "training": {"network": {"filters": 4, "n_res_lr": 1, "n_res_hr": 1},
                 "adam": {"epochs": 1, "batch_size": 4}}
}"#;

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("run tempoflow")
}

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.json");
    std::fs::write(&p, SMALL).unwrap();
    p.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let o = run(&[
        "phantom",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--set",
        "grid.nq=3",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nq"));
}

#[test]
fn unreadable_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(
        run(&["phantom", "--config", missing.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn invalid_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = run(&["phantom", "--config", &cfg, "--set", "grid.nt_hr=7"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_inputs_are_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("empty");
    let o = run(&["recon", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn provenance_line_and_manifest_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let o = run(&[
        "phantom",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "11",
    ]);
    assert!(o.status.success());
    let line = stdout(&o).lines().next().unwrap().to_string();
    assert!(
        line.starts_with("provenance command=phantom config_sha256="),
        "{line}"
    );
    assert!(line.contains(" seed=11 "), "{line}");
    let hash = line
        .split("config_sha256=")
        .nth(1)
        .unwrap()
        .split(' ')
        .next()
        .unwrap();
    assert_eq!(hash.len(), 64);

    let c = load_container(out.join("phantoms/test_00_hr.f4d")).unwrap();
    let p: serde_json::Value = c.meta("provenance").unwrap();
    assert_eq!(p["stage"], "phantom");
    assert_eq!(p["config_sha256"], hash);
    assert_eq!(p["seed"], 11);

    // the seed is part of the resolved config
    let o2 = run(&[
        "phantom",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "12",
    ]);
    let line2 = stdout(&o2).lines().next().unwrap().to_string();
    assert_ne!(line, line2);
}

#[test]
fn seed_flag_controls_phantoms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let read = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        assert!(run(&[
            "phantom",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed
        ])
        .status
        .success());
        load_field(out.join("phantoms/train_00_hr.f4d")).unwrap().v
    };
    assert_eq!(read("3", "a"), read("3", "b"));
    assert_ne!(read("3", "c"), read("4", "d"));
}

#[test]
fn evaluate_refuses_grid_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let o = run(&["pipeline", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "reports/test_00/table2.csv",
        "reports/test_00/kr2_series.csv",
        "reports/test_00/plane_flow.csv",
        "model.f4d",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let lr = out.join("phantoms/test_00_lr.f4d");
    let o = run(&[
        "evaluate",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--sr",
        lr.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid"));
}

#[test]
fn table_has_region_method_component_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    assert!(
        run(&["pipeline", "--config", &cfg, "--out", out.to_str().unwrap()])
            .status
            .success()
    );
    let mut rdr = csv::Reader::from_path(out.join("reports/test_00/table2.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let all: Vec<_> = rows.iter().filter(|r| &r[0] == "all").collect();
    assert_eq!(all.len(), 3 * 3 * 3);
    for r in &all {
        let rmse: f64 = r[4].parse().unwrap();
        let mae: f64 = r[5].parse().unwrap();
        assert!(rmse >= mae && mae >= 0.0);
    }
}
