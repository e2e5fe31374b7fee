use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn polywell(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polywell")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn short_run<'a>(out: &'a str) -> Vec<&'a str> {
    vec!["simulate", "--figure", "5", "--tmax", "10", "--dx", "0.04", "--dt", "0.05", "--snapshots", "5,10", "--out-dir", out]
}

#[test]
fn spectrum_prints_five_states() {
    let o = polywell(&["spectrum", "--mass", "20", "--depth", "1", "--half-width", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).take_while(|l| !l.starts_with("nearest")).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].contains("even") && rows[1].contains("odd"));
    assert!(text.contains("detuning"));
}

#[test]
fn dry_run_echo_reparses_to_the_same_config() {
    let dir = tempfile::tempdir().unwrap();
    for figure in ["1", "6", "8"] {
        let first = polywell(&["simulate", "--figure", figure, "--dry-run"]);
        assert!(first.status.success());
        let path = dir.path().join(format!("fig{figure}.txt"));
        fs::write(&path, stdout(&first)).unwrap();
        let second = polywell(&["simulate", "--config", path.to_str().unwrap(), "--dry-run"]);
        assert!(second.status.success());
        assert_eq!(stdout(&first), stdout(&second));
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.txt");
    fs::write(&path, "figure = 2\nq = 0.9\nmass = 15\n").unwrap();
    let o = polywell(&["simulate", "--config", path.to_str().unwrap(), "--q", "1.3", "--dry-run"]);
    let text = stdout(&o);
    assert!(text.contains("q = 1.3\n"));
    assert!(text.contains("mass = 15\n"));
    assert!(text.contains("figure = 2\n"));
}

#[test]
fn errors_are_machine_readable() {
    let o = polywell(&["simulate", "--figure", "9"]);
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "invalid_config");
    let o = polywell(&["simulate", "--figure", "5", "--dx", "0.5", "--dry-run"]);
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "under_resolved");
    let o = polywell(&["diagnose", "--input", "/nonexistent/psi.csv"]);
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "io");
}

#[test]
fn simulate_writes_deterministic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    let read_all = |dir: &str| -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<_> = fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect();
        files.sort();
        files
    };
    assert!(polywell(&short_run(out)).status.success());
    let first = read_all(out);
    assert!(polywell(&short_run(out)).status.success());
    assert_eq!(first, read_all(out));

    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["config.txt", "psi_t10.csv", "psi_t5.csv", "report.json"]);
    let csv = String::from_utf8(first[1].1.clone()).unwrap();
    assert!(csv.starts_with("x,re,im,abs2\n"));
    assert!(!csv.contains('\r'));
    let report: serde_json::Value = serde_json::from_slice(&first[3].1).unwrap();
    assert_eq!(report["diagnostics"]["time"], 10.0);
    assert_eq!(report["run"]["steps"], 200);
    assert_eq!(report["snapshots"][0], "psi_t5.csv");
    let track = report["diagnostics"]["track"].as_array().unwrap();
    assert_eq!(track.len(), 101);

    // the snapshot feeds the diagnose command
    let diag_dir = dir.path().join("diag");
    let csv_path = Path::new(out).join("psi_t10.csv");
    let o = polywell(&[
        "diagnose",
        "--input",
        csv_path.to_str().unwrap(),
        "--time",
        "10",
        "--figure",
        "5",
        "--out-dir",
        diag_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let diag: serde_json::Value = serde_json::from_slice(&fs::read(diag_dir.join("diagnostics.json")).unwrap()).unwrap();
    let from_run = &report["diagnostics"];
    let close = |a: &serde_json::Value, b: &serde_json::Value| (a.as_f64().unwrap() - b.as_f64().unwrap()).abs() < 1e-12;
    assert!(close(&diag["p_refl"], &from_run["p_refl"]));
    assert!(close(&diag["p_trans"], &from_run["p_trans"]));
    assert_eq!(diag["peaks"].as_array().unwrap().len(), from_run["peaks"].as_array().unwrap().len());
}

#[test]
fn oracle_command_writes_a_normalized_profile() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("oracle");
    let o = polywell(&[
        "oracle",
        "--figure",
        "8",
        "--tmax",
        "0",
        "--xmin",
        "-12",
        "--xmax",
        "-8",
        "--dx",
        "0.01",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("psi_t0.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv.lines().skip(1).map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    // inside the box |ψ|² = 1/(2d) = 1
    let inside: Vec<&Vec<f64>> = rows.iter().filter(|r| (r[0] + 10.0).abs() < 0.45).collect();
    assert!(!inside.is_empty());
    assert!(inside.iter().all(|r| (r[3] - 1.0).abs() < 1e-4));
}

#[test]
fn sweep_runs_in_parameter_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = Command::new(env!("CARGO_BIN_EXE_polywell"))
        .env("POLYWELL_THREADS", "2")
        .args([
            "sweep", "--param", "q", "--values", "1.2,0.8", "--figure", "5", "--tmax", "5", "--dx", "0.04", "--dt", "0.05", "--out-dir",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let entries: serde_json::Value = serde_json::from_slice(&fs::read(out.join("sweep.json")).unwrap()).unwrap();
    let entries = entries.as_array().unwrap();
    assert_eq!(entries.len(), 2);
    assert_eq!(entries[0]["value"], "1.2");
    assert_eq!(entries[0]["config"]["packet"]["q"], 1.2);
    assert_eq!(entries[1]["config"]["packet"]["q"], 0.8);

    let o = Command::new(env!("CARGO_BIN_EXE_polywell"))
        .env("POLYWELL_THREADS", "zero")
        .args(["sweep", "--param", "q", "--values", "1", "--figure", "5", "--tmax", "1", "--dx", "0.04", "--dt", "0.05"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}
