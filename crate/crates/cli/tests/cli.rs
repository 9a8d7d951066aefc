// Copyright 2026 Blockade Contributors
// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn blockade(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blockade"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write_config(dir: &TempDir, name: &str, json: &Value) -> String {
    let p = dir.path().join(name);
    fs::write(&p, serde_json::to_string_pretty(json).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

/// The only run directory below `out`.
fn run_dir(out: &Path) -> PathBuf {
    let dirs: Vec<_> = fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn universality_reports_u3_for_r2() {
    let tmp = TempDir::new().unwrap();
    let o = blockade(
        &[
            "universality",
            "--config",
            repo_config("universality.json").to_str().unwrap(),
            "--out",
            "runs",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("r=2 U(3): yes, closure rank 9"), "{}", stdout(&o));
    let dir = run_dir(&tmp.path().join("runs"));
    let name = dir.file_name().unwrap().to_string_lossy().into_owned();
    assert!(name.ends_with("_seed0"), "{name}");
    let m = read_json(&dir.join("manifest.json"));
    assert_eq!(m["tool"], "blockade");
    assert_eq!(m["command"], "universality");
    assert_eq!(m["seed"], 0);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(m["config"]["universality"]["r_max"], 4);
    let rows = read_json(&dir.join("universality.json"));
    assert_eq!(rows.as_array().unwrap().len(), 4);
}

#[test]
fn unknown_key_is_rejected_without_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "bad.json",
        &serde_json::json!({ "system": { "chi": 1.0, "r": 1 }, "universality": { "r_max": 2, "extra": true } }),
    );
    let o = blockade(&["universality", "--config", &cfg, "--out", "runs"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn non_unitary_target_is_rejected_without_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "bad.json",
        &serde_json::json!({
            "system": { "chi": 1.0, "r": 1 },
            "synthesize": {
                "target": { "kind": "matrix", "rows": [[[1, 0], [1, 0]], [[0, 0], [1, 0]]] },
                "duration": 1.0
            }
        }),
    );
    let o = blockade(&["synthesize", "--config", &cfg, "--out", "runs"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn missing_pulse_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "sim.json",
        &serde_json::json!({
            "system": { "chi": 1.0, "r": 1 },
            "simulate": { "mode": "pulse", "target": { "kind": "fock", "from": 0, "to": 1 } }
        }),
    );
    let o = blockade(&["simulate", "--config", &cfg, "--out", "runs"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn misplaced_flags_exit_2() {
    let tmp = TempDir::new().unwrap();
    let o = blockade(&["universality", "--eta", "0.01", "--out", "runs"], tmp.path());
    assert_eq!(code(&o), 2);
    let o = blockade(&["universality", "--si", "--out", "runs"], tmp.path());
    assert_eq!(code(&o), 2);
    let o = blockade(&["trotter-scan", "--profile", "square", "--out", "runs"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn drift_target_from_zero_pulse_succeeds_immediately() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "drift.json",
        &serde_json::json!({
            "system": { "chi": 1.0, "r": 2 },
            "synthesize": {
                "target": { "kind": "drift" },
                "duration": 2.0,
                "k_max": 3,
                "initial": [[0, 0], [0, 0], [0, 0]]
            }
        }),
    );
    let o = blockade(&["synthesize", "--config", &cfg, "--out", "runs"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&run_dir(&tmp.path().join("runs")).join("report.json"));
    assert_eq!(report["converged"], true);
    let first = &report["traces"][0];
    assert_eq!(first["iterations"], 0);
    assert_eq!(first["stop"], "fidelity_goal");
    assert!(first["fidelity"].as_f64().unwrap() > 1.0 - 1e-12);
}

#[test]
fn permutation_config_reaches_threshold() {
    let tmp = TempDir::new().unwrap();
    let o = blockade(
        &[
            "synthesize",
            "--config",
            repo_config("permutation.json").to_str().unwrap(),
            "--out",
            "runs",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(&tmp.path().join("runs"));
    let report = read_json(&dir.join("report.json"));
    assert!(report["best_fidelity"].as_f64().unwrap() > 1.0 - 1e-4);
    assert!(dir.join("drive_program.csv").exists());
    assert!(dir.join("drive_single.csv").exists());
    let csv = fs::read_to_string(dir.join("drive_program.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,re_lambda1,im_lambda1,re_lambda2,im_lambda2,theta"
    );
    assert_eq!(lines.count(), 1001);
}

#[test]
fn not_converged_writes_outputs_and_exits_3() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "syn.json",
        &serde_json::json!({
            "system": { "chi": 1.0, "r": 2 },
            "synthesize": {
                "target": { "kind": "permutation" },
                "duration": 0.2,
                "k_max": 2,
                "restarts": 1,
                "max_iterations": 2
            }
        }),
    );
    let o = blockade(&["synthesize", "--config", &cfg, "--out", "runs"], tmp.path());
    assert_eq!(code(&o), 3);
    let dir = run_dir(&tmp.path().join("runs"));
    for f in ["manifest.json", "report.json", "pulse.json", "drive_program.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    assert_eq!(read_json(&dir.join("report.json"))["converged"], false);
}

#[test]
fn synthesize_then_simulate_round_trip() {
    let tmp = TempDir::new().unwrap();
    let system = serde_json::json!({ "chi": 1.0, "r": 1 });
    let cfg = write_config(
        &tmp,
        "syn.json",
        &serde_json::json!({
            "system": system,
            "seed": 11,
            "synthesize": { "target": { "kind": "fock", "from": 0, "to": 1 }, "duration": 2.0, "k_max": 3, "restarts": 4 }
        }),
    );
    let o = blockade(&["synthesize", "--config", &cfg, "--out", "syn"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let syn = run_dir(&tmp.path().join("syn"));
    let pulse = syn.join("pulse.json");
    let fidelity = read_json(&pulse)["fidelity"].as_f64().unwrap();

    let cfg = write_config(
        &tmp,
        "sim.json",
        &serde_json::json!({
            "system": system,
            "simulate": { "mode": "pulse", "pulse": { "file": pulse }, "trajectory": true }
        }),
    );
    let o = blockade(&["simulate", "--config", &cfg, "--out", "sim"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sim = run_dir(&tmp.path().join("sim"));
    let replayed = read_json(&sim.join("simulation.json"))["lossless_fidelity"]
        .as_f64()
        .unwrap();
    assert!((replayed - fidelity).abs() <= 1e-9, "{replayed} vs {fidelity}");
    let traj = fs::read_to_string(sim.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 201);

    // same pulse with loss: fidelity drops, stays close
    let cfg = write_config(
        &tmp,
        "lossy.json",
        &serde_json::json!({
            "system": { "chi": 1.0, "r": 1, "kappa_i": 0.001 },
            "simulate": { "mode": "pulse", "pulse": { "file": pulse } }
        }),
    );
    let o = blockade(&["simulate", "--config", &cfg, "--out", "lossy"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = read_json(&run_dir(&tmp.path().join("lossy")).join("simulation.json"));
    let f = s["lossy_fidelity"].as_f64().unwrap();
    assert!(f < fidelity && f > fidelity - 0.01, "{f}");
}

#[test]
fn replay_reproduces_outputs_bit_for_bit() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "syn.json",
        &serde_json::json!({
            "system": { "chi": 1.0, "r": 1 },
            "seed": 3,
            "synthesize": { "target": { "kind": "fourier" }, "duration": 3.0, "k_max": 4, "restarts": 4 }
        }),
    );
    let o = blockade(
        &["synthesize", "--config", &cfg, "--out", "a", "--format", "json"],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let a = run_dir(&tmp.path().join("a"));
    let manifest = a.join("manifest.json");
    let o = blockade(&["replay", manifest.to_str().unwrap(), "--out", "b"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let b = run_dir(&tmp.path().join("b"));
    for f in ["report.json", "pulse.json", "drive_program.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (ma, mb) = (read_json(&manifest), read_json(&b.join("manifest.json")));
    assert_eq!(ma["config"], mb["config"]);
    assert_eq!(ma["flags"], mb["flags"]);

    let o = blockade(&["replay", manifest.to_str().unwrap(), "--seed", "4"], tmp.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn fock1_loss_gives_three_eighths() {
    let tmp = TempDir::new().unwrap();
    let o = blockade(
        &[
            "simulate",
            "--config",
            repo_config("fock1-loss.json").to_str().unwrap(),
            "--out",
            "runs",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = read_json(&run_dir(&tmp.path().join("runs")).join("simulation.json"));
    let c1 = s["eps_over_kappa_t"].as_f64().unwrap();
    assert!((c1 / 0.375 - 1.0).abs() < 0.01, "{c1}");
}

#[test]
fn eta_sweep_fidelity_decreases() {
    let tmp = TempDir::new().unwrap();
    let o = blockade(
        &[
            "simulate",
            "--config",
            repo_config("fock1-eta.json").to_str().unwrap(),
            "--out",
            "runs",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(run_dir(&tmp.path().join("runs")).join("eta_scan.csv")).unwrap();
    let fids: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(fids.len(), 4);
    assert!(fids.windows(2).all(|w| w[1] < w[0]), "{fids:?}");

    // --eta replaces the configured list
    let o = blockade(
        &[
            "simulate",
            "--config",
            repo_config("fock1-eta.json").to_str().unwrap(),
            "--out",
            "one",
            "--eta",
            "-0.001",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(run_dir(&tmp.path().join("one")).join("eta_scan.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn feasibility_on_bundled_catalog() {
    let tmp = TempDir::new().unwrap();
    let o = blockade(&["feasibility", "--out", "runs"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(&tmp.path().join("runs"));
    let rows = read_json(&dir.join("feasibility.json"));
    let eps = |name: &str| {
        rows.as_array().unwrap().iter().find(|r| r["platform"] == name).unwrap()["eps_min"]
            .as_f64()
            .unwrap()
    };
    // ε_min = 3π(κ_i/|χ|)^{2/3} / (16 Q_i^{1/3}) from the catalog rows
    let catalog: Value = serde_json::from_str(include_str!("../../core/data/platforms.json")).unwrap();
    for row in catalog["platforms"].as_array().unwrap() {
        let (w, chi, k) = (
            row["omega_c_hz"].as_f64().unwrap(),
            row["chi_hz"].as_f64().unwrap(),
            row["kappa_i_hz"].as_f64().unwrap(),
        );
        let want = 3.0 * std::f64::consts::PI * (k / chi.abs()).powf(2.0 / 3.0) / (16.0 * (w / k).cbrt());
        let got = eps(row["name"].as_str().unwrap());
        assert!((got / want - 1.0).abs() < 1e-12, "{got} vs {want}");
    }
    assert!(fs::read_to_string(dir.join("feasibility.txt"))
        .unwrap()
        .contains("eps_min"));

    let cfg = write_config(
        &tmp,
        "ge.json",
        &serde_json::json!({ "feasibility": { "platforms": ["Ge"], "fidelity_target": 0.9 } }),
    );
    let o = blockade(&["feasibility", "--config", &cfg, "--out", "ge"], tmp.path());
    assert_eq!(code(&o), 4);
}

#[test]
fn budget_without_external_coupling_is_infeasible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "b.json",
        &serde_json::json!({ "system": { "chi": 1.0, "r": 1, "kappa_i": 0.01 }, "budget": { "p_in": 100.0 } }),
    );
    let o = blockade(&["budget", "--config", &cfg, "--out", "runs"], tmp.path());
    assert_eq!(code(&o), 4);

    let o = blockade(
        &[
            "budget",
            "--config",
            repo_config("budget.json").to_str().unwrap(),
            "--out",
            "ok",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let b = read_json(&run_dir(&tmp.path().join("ok")).join("budget.json"));
    let opt = &b["optimum"];
    let sum = opt["eps_loss"].as_f64().unwrap() + opt["eps_tt"].as_f64().unwrap();
    assert!((opt["eps_tot"].as_f64().unwrap() - sum).abs() < 1e-15);
    // P^{-2/15}: the power quoted for ε_target gives back ε_target
    let p = b["power_for_target"].as_f64().unwrap();
    let eps_at_one = opt["eps_opt"].as_f64().unwrap() * 1000f64.powf(2.0 / 15.0);
    assert!((eps_at_one * p.powf(-2.0 / 15.0) / 1e-3 - 1.0).abs() < 1e-9);

    let o = blockade(
        &[
            "budget",
            "--si",
            "--config",
            repo_config("budget.json").to_str().unwrap(),
            "--out",
            "si",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 2, "SI mode needs omega_c");
}

#[test]
fn modulate_exports_single_drive() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "m.json",
        &serde_json::json!({
            "system": { "chi": 1.0, "r": 1 },
            "modulate": {
                "pulse": { "duration": 1.0, "coefficients": [[0.5, 0.0], [0.1, -0.2]] },
                "periods": 20,
                "samples": 101
            }
        }),
    );
    let o = blockade(&["modulate", "--config", &cfg, "--out", "none"], tmp.path());
    assert_eq!(code(&o), 2, "a profile is required");
    for p in ["double_pump", "semi_rotation", "two_point"] {
        let out = format!("out_{p}");
        let o = blockade(
            &[
                "modulate",
                "--config",
                &cfg,
                "--out",
                &out,
                "--profile",
                p,
                "--format",
                "json",
            ],
            tmp.path(),
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let dir = run_dir(&tmp.path().join(&out));
        assert_eq!(read_json(&dir.join("profile_check.json"))["passed"], true);
        let prog = read_json(&dir.join("drive_single.json"));
        assert_eq!(prog["times"].as_array().unwrap().len(), 101);
        assert!(prog["lambda2"]
            .as_array()
            .unwrap()
            .iter()
            .all(|z| z[0] == 0.0 && z[1] == 0.0));
    }
}

#[test]
fn trotter_scan_writes_fit_summary() {
    let tmp = TempDir::new().unwrap();
    let o = blockade(
        &[
            "trotter-scan",
            "--config",
            repo_config("trotter-scan.json").to_str().unwrap(),
            "--out",
            "runs",
        ],
        tmp.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(&tmp.path().join("runs"));
    let fit = read_json(&dir.join("fit.json"));
    for k in ["c2", "slope_m", "slope_chi_t", "fitted_points"] {
        assert!(fit[k].is_number(), "{k}");
    }
    let scan = fs::read_to_string(dir.join("scan.csv")).unwrap();
    assert_eq!(scan.lines().count(), 1 + 12);
}

fn schema() -> jsonschema::Validator {
    let s: Value = serde_json::from_str(include_str!("../schema/run-config.schema.json")).unwrap();
    jsonschema::validator_for(&s).expect("schema compiles")
}

#[test]
fn shipped_configs_match_schema() {
    let v = schema();
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        let cfg = read_json(&p);
        let errors: Vec<String> = v.iter_errors(&cfg).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{}: {errors:?}", p.display());
        n += 1;
    }
    assert!(n >= 5);
}

#[test]
fn schema_rejects_what_the_parser_rejects() {
    let v = schema();
    let bad = [
        serde_json::json!({ "bogus": 1 }),
        serde_json::json!({ "version": 2 }),
        serde_json::json!({ "system": { "chi": 1.0, "r": 1, "kapa_i": 0.1 } }),
        serde_json::json!({ "synthesize": { "target": { "kind": "permutation", "n": 3 }, "duration": 1.0 } }),
        serde_json::json!({ "simulate": { "mode": "fock1" } }),
        serde_json::json!({ "universality": { "r_max": 3, "x": 1 } }),
    ];
    let tmp = TempDir::new().unwrap();
    for (i, b) in bad.iter().enumerate() {
        assert!(!v.is_valid(b), "schema accepted {b}");
        let cfg = write_config(&tmp, &format!("bad{i}.json"), b);
        let o = blockade(&["universality", "--config", &cfg, "--out", "runs"], tmp.path());
        assert_eq!(code(&o), 2, "parser accepted {b}");
    }
    assert!(!tmp.path().join("runs").exists());
}
