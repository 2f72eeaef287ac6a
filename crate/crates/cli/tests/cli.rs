use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn wfr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wfr")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

/// Gaussian blob of total mass `mass` on 32 cells of `[-1, 1]`.
fn write_blob(path: &Path, mass: f64) {
    let n = 32;
    let h = 2.0 / n as f64;
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let x = -1.0 + (i as f64 + 0.5) * h;
            (-(x * x) / (2.0 * 0.1f64.powi(2))).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum::<f64>() * h;
    let values: Vec<f64> = raw.iter().map(|v| v * mass / total).collect();
    let doc = json!({ "dim": 1, "shape": [n], "spacing": [h], "origin": [-1.0], "values": values });
    std::fs::write(path, doc.to_string()).unwrap();
}

#[test]
fn every_command_has_help() {
    for cmd in [&[][..], &["distance"], &["dirac"], &["geodesic"], &["flow"], &["hessian"], &["beckner"], &["verify"]] {
        let mut args = cmd.to_vec();
        args.push("--help");
        let out = wfr(&args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(wfr(&["dirac", "--k0", "1"]).status.code(), Some(1));
    assert_eq!(wfr(&["frobnicate"]).status.code(), Some(1));
    // the Beckner estimate is random, so the seed is mandatory
    assert_eq!(wfr(&["beckner", "--nx", "16"]).status.code(), Some(1));
    assert_eq!(wfr(&["dirac", "--k0", "-1", "--k1", "1", "--xi", "1"]).status.code(), Some(1));
    assert_eq!(wfr(&["distance", "--rho0", "/nonexistent.json", "--rho1", "/nonexistent.json"]).status.code(), Some(1));
}

#[test]
fn dirac_closed_forms() {
    let out = wfr(&["dirac", "--k0", "1", "--k1", "1", "--xi", "1.5707963"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert!((v["d2"].as_f64().unwrap() - (8.0 - 4.0 * 2f64.sqrt())).abs() < 1e-6);
    assert_eq!(v["strategy"], "transport");

    let v = stdout_json(&wfr(&["dirac", "--k0", "1", "--k1", "1", "--xi", "4.0"]));
    assert_eq!(v["d2"].as_f64().unwrap(), 8.0);
    assert_eq!(v["strategy"], "stationary");
    assert!(v["a"].is_null());

    let v = stdout_json(&wfr(&["dirac", "--k0", "1", "--k1", "1", "--xi", "3.14159265"]));
    assert_eq!(v["strategy"], "mixed");
}

#[test]
fn distance_examples() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let z = dir.path().join("zero.json");
    write_blob(&a, 1.5);
    write_blob(&z, 0.0);
    let (a_s, z_s) = (a.to_str().unwrap(), z.to_str().unwrap());

    let out = wfr(&["distance", "--rho0", a_s, "--rho1", a_s]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let d: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    assert!(d.abs() < 1e-6, "{d}");

    let frames = dir.path().join("frames");
    let report = dir.path().join("report.json");
    let out = wfr(&[
        "distance",
        "--rho0",
        a_s,
        "--rho1",
        z_s,
        "--nt",
        "16",
        "--emit-path",
        frames.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let d: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    let target = 2.0 * 1.5f64.sqrt();
    assert!((d - target).abs() < 0.05 * target, "{d} vs {target}");
    // nt intervals give nt + 1 frames, plus the index
    assert_eq!(std::fs::read_dir(&frames).unwrap().count(), 17 + 1);
    assert!(frames.join("index.json").exists());
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert!(rep["d2"].is_number() && rep["iterations"].is_number());
}

#[test]
fn distance_rejects_unknown_option_keys() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    write_blob(&a, 1.0);
    let opts = dir.path().join("opts.json");
    std::fs::write(&opts, r#"{"nt": 8, "colour": "blue"}"#).unwrap();
    let a_s = a.to_str().unwrap();
    let out = wfr(&["distance", "--rho0", a_s, "--rho1", a_s, "--options", opts.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn geodesic_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("traj.csv");
    let out = wfr(&["geodesic", "--k0", "1", "--k1", "1", "--xi", "1.5707963", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert!(v["max_error"].as_f64().unwrap() <= 1e-8);
    assert!((v["particle_energy"].as_f64().unwrap() - v["d2"].as_f64().unwrap()).abs() <= 1e-6);
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().next(), Some("t,particle_id,x0,k"));
    assert_eq!(text.lines().count(), 1 + 1001);
}

#[test]
fn flow_reports_bound() {
    let dir = tempfile::tempdir().unwrap();
    let n = 16;
    let h = 1.0 / n as f64;
    let field = |f: &dyn Fn(f64) -> f64| {
        let values: Vec<f64> = (0..n).map(|i| f((i as f64 + 0.5) * h)).collect();
        json!({ "dim": 1, "shape": [n], "spacing": [h], "origin": [0.0], "values": values }).to_string()
    };
    let m = dir.path().join("m.json");
    let rho0 = dir.path().join("rho0.json");
    std::fs::write(&m, field(&|x| 1.0 + 0.3 * (3.0 * x).cos())).unwrap();
    std::fs::write(&rho0, field(&|x| 0.4 + 0.3 * (2.0 * x).sin())).unwrap();
    let csv = dir.path().join("trace.csv");
    let args = [
        "flow",
        "--m",
        m.to_str().unwrap(),
        "--rho0",
        rho0.to_str().unwrap(),
        "--t-end",
        "0.5",
        "--sample-every",
        "20",
        "--seed",
        "3",
        "--trials",
        "30",
        "--out",
        csv.to_str().unwrap(),
    ];
    let out = wfr(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    for key in ["fitted_rate", "phi_c0", "c0", "C_Omega"] {
        assert!(v[key].is_number(), "{key}");
    }
    assert_eq!(v["bound_holds"], true);
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("t,entropy,dissipation,mass,l2_error,min_rho\n"));
    // same inputs and seed give the same bytes
    let first = std::fs::read(&csv).unwrap();
    assert_eq!(wfr(&args).stdout, out.stdout);
    assert_eq!(std::fs::read(&csv).unwrap(), first);

    let out = wfr(&["flow", "--m", m.to_str().unwrap(), "--rho0", rho0.to_str().unwrap(), "--dt", "1.0", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn beckner_certificate_round_trips_into_flow() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    let out = wfr(&["beckner", "--nx", "24", "--trials", "20", "--validate", "20", "--seed", "9", "--out", cert.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    assert!(v["C_Omega"].as_f64().unwrap() > 0.0);
    assert_eq!(v["samples_checked"], 20);
    assert!(v["min_margin"].as_f64().unwrap() >= 0.0);

    let g = |v: f64| json!({ "dim": 1, "shape": [24], "spacing": [1.0 / 24.0], "origin": [0.0], "values": vec![v; 24] }).to_string();
    let m = dir.path().join("m.json");
    let rho0 = dir.path().join("rho0.json");
    std::fs::write(&m, g(1.0)).unwrap();
    std::fs::write(&rho0, g(0.5)).unwrap();
    let out = wfr(&[
        "flow",
        "--m",
        m.to_str().unwrap(),
        "--rho0",
        rho0.to_str().unwrap(),
        "--certificate",
        cert.to_str().unwrap(),
        "--t-end",
        "0.2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["bound_holds"], true);
}

#[test]
fn hessian_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let n = 200;
    let h = 1.0 / n as f64;
    let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
    let rho: Vec<f64> = xs.iter().map(|x| 1.0 + 0.3 * (std::f64::consts::PI * x).cos()).collect();
    let u: Vec<f64> = xs.iter().map(|x| 0.5 * (2.0 * std::f64::consts::PI * x).cos()).collect();
    // centered differences with mirror ghosts
    let grad: Vec<f64> = (0..n)
        .map(|i| {
            let l = if i == 0 { u[0] } else { u[i - 1] };
            let r = if i + 1 == n { u[n - 1] } else { u[i + 1] };
            (r - l) / (2.0 * h)
        })
        .collect();
    let grid = json!({ "shape": [n], "spacing": [h], "origin": [0.0] });
    let rho_path = dir.path().join("rho.json");
    let pot_path = dir.path().join("u.json");
    std::fs::write(&rho_path, json!({ "dim": 1, "shape": [n], "spacing": [h], "origin": [0.0], "values": rho }).to_string()).unwrap();
    std::fs::write(&pot_path, json!({ "grid": grid, "u": u, "grad": [grad], "layout": "collocated" }).to_string()).unwrap();
    let out = wfr(&["hessian", "--rho", rho_path.to_str().unwrap(), "--potential", pot_path.to_str().unwrap(), "--energy", "cubic"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["energy"], "cubic");
    assert!(v["rel_err"].as_f64().unwrap() < 0.05, "{v}");
}

#[test]
fn verify_suites() {
    let out = wfr(&["verify", "--suite", "none"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 cases, 0 failed"));

    let dir = tempfile::tempdir().unwrap();
    let r1 = dir.path().join("r1.xml");
    let r2 = dir.path().join("r2.xml");
    for r in [&r1, &r2] {
        let out = wfr(&["verify", "--suite", "closed_form,trajectories", "--seed", "4", "--report", r.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    }
    let xml = std::fs::read_to_string(&r1).unwrap();
    assert!(xml.starts_with("<?xml") && xml.contains("<testsuite name=\"closed_form\""));
    assert_eq!(xml, std::fs::read_to_string(&r2).unwrap());

    assert_eq!(wfr(&["verify", "--suite", "bogus"]).status.code(), Some(1));
}

#[test]
fn thread_cap_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_wfr"))
        .args(["dirac", "--k0", "1", "--k1", "1", "--xi", "1"])
        .env("WFR_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = Command::new(env!("CARGO_BIN_EXE_wfr"))
        .args(["dirac", "--k0", "1", "--k1", "1", "--xi", "1"])
        .env("WFR_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
}
