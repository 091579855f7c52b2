use std::path::Path;
use std::process::{Command, Output};

fn eqm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eqm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn malformed_potential_exits_2_with_offset() {
    let dir = tempfile::tempdir().unwrap();
    let o = eqm(&["solve", "--potential", "x^", "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let err = text(&o.stderr);
    assert!(err.contains('2'), "offset missing: {err}");
    assert!(!dir.path().join("density.csv").exists());
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"command": "solve", "mass": 1, "colour": "red"}"#).unwrap();
    let o = eqm(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("colour"));
}

#[test]
fn backwards_scan_range_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = eqm(&[
        "scan", "--s-from", "1", "--s-to", "0.5", "--s-step", "0.1", "--out",
        &out_arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn overfull_cap_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = eqm(&[
        "solve", "--domain", "[-1,1]", "--theta", "0.4", "--mass", "1", "--out",
        &out_arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn forced_cap_fills_the_domain() {
    let dir = tempfile::tempdir().unwrap();
    let o = eqm(&[
        "solve", "--domain", "[-1,1]", "--theta", "0.5", "--mass", "1", "--n", "200", "--format",
        "csv", "--out", &out_arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("density.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let psi: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((psi - 0.5).abs() < 1e-12, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 200);
}

#[test]
fn quadratic_solve_is_regular() {
    let dir = tempfile::tempdir().unwrap();
    let o = eqm(&[
        "solve", "--potential", "x^2", "--n", "2000", "--out", &out_arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let report = json(&dir.path().join("solution.json"));
    assert_eq!(report["verdict"], "Regular");
    assert_eq!(report["converged"], true);
    let svg = std::fs::read_to_string(dir.path().join("density.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn single_mass_scan_matches_solve() {
    let dir = tempfile::tempdir().unwrap();
    let scan_dir = dir.path().join("scan");
    let solve_dir = dir.path().join("solve");
    let common = ["--builtin", "quartic_double_well", "--n", "600"];
    let mut scan = vec!["scan"];
    scan.extend(common);
    scan.extend(["--s-from", "1", "--s-to", "1.05", "--s-step", "0.1", "--format", "json"]);
    let scan_out = out_arg(&scan_dir);
    scan.extend(["--out", &scan_out]);
    let o = eqm(&scan);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let mut solve = vec!["solve"];
    solve.extend(common);
    solve.extend(["--mass", "1", "--format", "json"]);
    let solve_out = out_arg(&solve_dir);
    solve.extend(["--out", &solve_out]);
    let o = eqm(&solve);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let scan = json(&scan_dir.join("scan.json"));
    let solve = json(&solve_dir.join("solution.json"));
    assert_eq!(scan["rows"].as_array().unwrap().len(), 1);
    assert_eq!(scan["rows"][0]["verdict"], solve["verdict"]);
}

#[test]
fn classify_writes_edge_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = eqm(&["classify", "--n", "800", "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let edges = std::fs::read_to_string(dir.path().join("edges.csv")).unwrap();
    assert!(edges.starts_with("location,side,kind,exponent"));
    assert_eq!(edges.lines().count(), 3);
}

#[test]
fn perturbed_kernel_fails_certification() {
    let o = eqm(&["selftest", "--debug-kernel-scale", "1.01", "--only", "3"]);
    assert_eq!(o.status.code(), Some(1));
    let out = text(&o.stdout);
    assert!(out.contains("FAIL  3 KKT certification"), "{out}");
}
