use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn gkdv(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gkdv"))
        .args(args)
        .current_dir(dir)
        .env_remove("GKDV_THREADS")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn base_config() -> Value {
    json!({
        "schema_version": 1,
        "problem": { "g": [[3, -1.0]], "gamma": 0.5, "forcing": "cos1" },
        "grid": { "n": 16 },
        "solver": { "dt": 1e-3, "t_end": 0.5, "stride": 50 },
        "initial": { "profile": "modes", "modes": [[1, 0.0, -0.5], [2, 0.1, 0.0]] },
        "diagnostics": { "s": [0, 1, 1.5], "rho": [0.5] },
        "seed": 42
    })
}

fn linear_config() -> Value {
    let mut cfg = base_config();
    cfg["problem"] = json!({ "g": [], "gamma": 0.5 });
    cfg
}

fn run_with(cfg: &Value, command: &str, extra: &[&str]) -> (TempDir, Output) {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "cfg.json", cfg);
    let mut args = vec![command, "--config", path.to_str().unwrap(), "--out", "out"];
    args.extend_from_slice(extra);
    let out = gkdv(&args, dir.path());
    (dir, out)
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn missing_key_exits_1_and_names_it() {
    let mut cfg = base_config();
    cfg["problem"].as_object_mut().unwrap().remove("gamma");
    let (_dir, out) = run_with(&cfg, "simulate", &[]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("gamma"), "{}", stderr(&out));
}

#[test]
fn unknown_key_exits_1() {
    let mut cfg = base_config();
    cfg["solver"]["tolerance"] = json!(1e-6);
    let (_dir, out) = run_with(&cfg, "simulate", &[]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("tolerance"));
}

#[test]
fn bad_usage_exits_1() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&gkdv(&["simulate"], dir.path())), 1);
    assert_eq!(code(&gkdv(&["frobnicate"], dir.path())), 1);
    let missing = gkdv(&["simulate", "--config", "nope.json"], dir.path());
    assert_eq!(code(&missing), 1);
}

#[test]
fn linear_run_has_zero_smoothing_metric() {
    let (dir, out) = run_with(&linear_config(), "simulate", &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = csv_rows(&dir.path().join("out/run.csv"));
    let col = header.iter().position(|h| h == "metric_rho0.5").unwrap();
    let theta = header.iter().position(|h| h == "theta").unwrap();
    assert_eq!(rows.len(), 11);
    for row in &rows {
        assert_eq!(row[0], "1");
        assert!(row[col].parse::<f64>().unwrap() <= 1e-12);
        assert_eq!(row[theta].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn simulate_writes_documented_columns_and_summary() {
    let (dir, out) = run_with(&base_config(), "simulate", &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, _) = csv_rows(&dir.path().join("out/run.csv"));
    let expected = [
        "schema_version",
        "run_id",
        "step",
        "t",
        "theta",
        "mass",
        "momentum",
        "energy",
        "norm_h0",
        "norm_h1",
        "norm_h1.5",
        "metric_rho0.5",
    ];
    assert_eq!(header, expected);

    let summary = read_json(&dir.path().join("out/summary.json"));
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["aborted"], false);
    assert_eq!(summary["run_id"], "run-000000000000002a");
    for key in ["mass_max_abs", "momentum_rel_drift", "energy_rel_drift"] {
        assert!(summary["drift"][key].is_number(), "{key}");
    }
    for key in ["rate", "residual", "points", "unforced_rate"] {
        assert!(summary["decay_fit"][key].is_number(), "{key}");
    }
    assert_eq!(summary["decay_fit"]["unforced_rate"], 1.0);
}

#[test]
fn seed_flag_overrides_config() {
    let (dir, out) = run_with(&base_config(), "simulate", &["--seed", "7"]);
    assert_eq!(code(&out), 0);
    let summary = read_json(&dir.path().join("out/summary.json"));
    assert_eq!(summary["run_id"], "run-0000000000000007");
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let mut cfg = base_config();
    cfg["initial"] = json!({ "profile": "rough", "exponent": 1.51 });
    let (a, out_a) = run_with(&cfg, "simulate", &[]);
    let (b, out_b) = run_with(&cfg, "simulate", &[]);
    assert_eq!(code(&out_a), 0);
    assert_eq!(code(&out_b), 0);
    for file in ["run.csv", "summary.json"] {
        let x = std::fs::read(a.path().join("out").join(file)).unwrap();
        let y = std::fs::read(b.path().join("out").join(file)).unwrap();
        assert_eq!(x, y, "{file}");
    }
}

#[test]
fn blow_up_exits_2_and_keeps_partial_output() {
    let mut cfg = base_config();
    cfg["solver"]["blowup_cap"] = json!(0.1);
    let (dir, out) = run_with(&cfg, "simulate", &[]);
    assert_eq!(code(&out), 2);
    let summary = read_json(&dir.path().join("out/summary.json"));
    assert_eq!(summary["aborted"], true);
    assert_eq!(summary["abort"]["kind"], "blow-up");
}

#[test]
fn unwritable_output_exits_4() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "cfg.json", &base_config());
    std::fs::write(dir.path().join("blocker"), "").unwrap();
    let out = gkdv(
        &["simulate", "--config", path.to_str().unwrap(), "--out", "blocker/out"],
        dir.path(),
    );
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn quadratic_decompose_has_no_r2_and_exact_partitions() {
    let mut cfg = base_config();
    cfg["problem"]["g"] = json!([[2, 1.0]]);
    cfg["grid"]["n"] = json!(12);
    cfg["initial"] = json!({ "profile": "rough", "exponent": 1.0 });
    let (dir, out) = run_with(&cfg, "decompose", &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = read_json(&dir.path().join("out/decompose_report.json"));
    let p = &report["partition"];
    let scale = p["scale"].as_f64().unwrap();
    assert!(p["resonance_residual"].as_f64().unwrap() <= 1e-12 * scale);
    assert!(p["high_low_residual"].as_f64().unwrap() <= 1e-12 * scale);
    let components = report["components"].as_array().unwrap();
    let r2 = components.iter().find(|c| c["name"] == "r2").unwrap();
    for norm in r2["norms"].as_array().unwrap() {
        assert!(norm["value"].as_f64().unwrap() <= 1e-12 * scale);
    }
}

#[test]
fn zero_field_decomposes_to_zero() {
    let mut cfg = base_config();
    cfg["initial"] = json!({ "profile": "zero" });
    let (dir, out) = run_with(&cfg, "decompose", &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = read_json(&dir.path().join("out/decompose_report.json"));
    for c in report["components"].as_array().unwrap() {
        for norm in c["norms"].as_array().unwrap() {
            assert_eq!(norm["value"].as_f64().unwrap(), 0.0, "{}", c["name"]);
        }
    }
}

#[test]
fn oversized_enumeration_exits_3() {
    let mut cfg = base_config();
    cfg["problem"]["g"] = json!([[5, 1.0]]);
    cfg["grid"]["n"] = json!(128);
    let (_dir, out) = run_with(&cfg, "decompose", &[]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

fn cases(degree: &str, bound: &str) -> (TempDir, Output) {
    let dir = TempDir::new().unwrap();
    let out = gkdv(&["cases", "--degree", degree, "--bound", bound, "--out", "out"], dir.path());
    (dir, out)
}

#[test]
fn quadratic_case_scan_is_fully_covered() {
    let (dir, out) = cases("2", "50");
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = read_json(&dir.path().join("out/cases_report.json"));
    assert_eq!(report["uncovered"], 0);
    // pairs with k_1 + k_2 = 0 have no output frequency
    assert_eq!(report["tuples"], 100 * 100 - 100);
    assert!(report["certified_constant"].as_f64().unwrap() > 0.0);
    assert!(report["h3_factorization_failures"].is_null());
}

#[test]
fn cubic_scan_at_bound_one_covers_the_constant_tuple() {
    let (dir, out) = cases("3", "1");
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = read_json(&dir.path().join("out/cases_report.json"));
    assert_eq!(report["uncovered"], 0);
    assert_eq!(report["tuples"], 8);
    assert!(report["count_a"].as_u64().unwrap() >= 1);
    assert_eq!(report["h3_factorization_failures"], 0);
}

#[test]
fn degree_outside_range_exits_1() {
    assert_eq!(code(&cases("1", "5").1), 1);
    assert_eq!(code(&cases("6", "2").1), 1);
}

fn study_config(resolutions: &[usize]) -> Value {
    let mut cfg = linear_config();
    cfg["solver"] = json!({ "dt": 1e-2, "t_end": 0.2, "stride": 5 });
    cfg["study"] = json!({ "resolutions": resolutions, "rho": 0.5, "exponent": 1.51 });
    cfg
}

#[test]
fn linear_control_study_passes() {
    let (dir, out) = run_with(&study_config(&[8, 16, 32]), "smoothing-study", &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = read_json(&dir.path().join("out/study.json"));
    assert_eq!(report["verdict"], "pass");
    assert_eq!(report["data_norm_increasing"], true);
    let (header, rows) = csv_rows(&dir.path().join("out/study.csv"));
    assert_eq!(header, ["schema_version", "n", "data_norm", "data_h1_norm", "sup_metric", "aborted"]);
    assert_eq!(rows.len(), 3);
}

#[test]
fn single_resolution_study_is_insufficient() {
    let (dir, out) = run_with(&study_config(&[16]), "smoothing-study", &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = read_json(&dir.path().join("out/study.json"));
    assert_eq!(report["verdict"], "insufficient-points");
}

fn ensemble_config(count: usize) -> Value {
    let mut cfg = linear_config();
    cfg["problem"]["forcing"] = json!("none");
    cfg["solver"] = json!({ "dt": 1e-2, "t_end": 6.0, "stride": 1 });
    cfg["ensemble"] = json!({ "count": count, "h1_min": 1.0, "h1_max": 4.0, "radius": 0.5 });
    cfg
}

#[test]
fn unforced_ensemble_enters_at_log_ratio_over_gamma() {
    let (dir, out) = run_with(&ensemble_config(3), "ensemble", &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = read_json(&dir.path().join("out/ensemble.json"));
    assert_eq!(report["all_entered"], true);
    assert_eq!(report["radius_from_config"], true);
    for run in report["runs"].as_array().unwrap() {
        let h1 = run["initial_h1"].as_f64().unwrap();
        let expected = (h1 / 0.5).ln() / 0.5;
        let entry = run["entry_time"].as_f64().unwrap();
        assert!((entry - expected).abs() <= 0.011, "entry {entry} vs {expected}");
    }
    let (_, rows) = csv_rows(&dir.path().join("out/ensemble.csv"));
    assert_eq!(rows.len(), 3);
}

#[test]
fn ensemble_count_override_and_minimum() {
    let (_dir, out) = run_with(&ensemble_config(3), "ensemble", &["--count", "1"]);
    assert_eq!(code(&out), 1);
    let (_dir, out) = run_with(&ensemble_config(1), "ensemble", &[]);
    assert_eq!(code(&out), 1);
    let (dir, out) = run_with(&ensemble_config(1), "ensemble", &["--count", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(read_json(&dir.path().join("out/ensemble.json"))["count"], 2);
}

#[test]
fn thread_override_is_validated_and_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "cfg.json", &ensemble_config(3));
    let run = |threads: &str, out: &str| {
        Command::new(env!("CARGO_BIN_EXE_gkdv"))
            .args(["ensemble", "--config", path.to_str().unwrap(), "--out", out])
            .current_dir(dir.path())
            .env("GKDV_THREADS", threads)
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("many", "bad")), 1);
    assert_eq!(code(&run("0", "bad")), 1);
    assert_eq!(code(&run("1", "one")), 0);
    assert_eq!(code(&run("3", "three")), 0);
    let a = std::fs::read(dir.path().join("one/ensemble.csv")).unwrap();
    let b = std::fs::read(dir.path().join("three/ensemble.csv")).unwrap();
    assert_eq!(a, b);
}
