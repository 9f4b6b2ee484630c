use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn wpd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wpd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Value printed on the `label` row of a report summary.
fn summary_value<'a>(text: &'a str, label: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(label).filter(|rest| rest.starts_with(' ')))
        .unwrap_or_else(|| panic!("no {label} row in {text}"))
        .trim()
}

#[test]
fn curves_disc_row_at_p_point_six() {
    let dir = tempfile::tempdir().unwrap();
    let out = wpd(&["curves", "--grid", "101", "--out-dir", p(dir.path())]);
    assert!(out.status.success());
    let both = fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert_eq!(both.lines().next(), Some("P,V,space"));
    let row = both
        .lines()
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|f| f[2] == "disc" && f[0].parse::<f64>().unwrap() == 0.6)
        .expect("disc row at P = 0.6");
    assert!((row[1].parse::<f64>().unwrap() - 0.8).abs() <= 1e-9);
    for name in ["disc", "diamond", "square", "polygon6", "noncontextual"] {
        assert!(dir.path().join(format!("{name}.csv")).exists(), "{name}");
    }
}

#[test]
fn witness_verdicts() {
    let out = wpd(&["witness", "--r", "0.75"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(&summary_value(&text, "V + P")[..6], "1.3660");
    assert_eq!(
        summary_value(&text, "verdict"),
        "violates noncontextual bound"
    );

    let text = stdout(&wpd(&["witness", "--r", "0.5"]));
    assert_eq!(summary_value(&text, "V + P"), "1.000000");
    assert_eq!(
        summary_value(&text, "verdict"),
        "bound saturated, no violation"
    );

    let text = stdout(&wpd(&["witness", "--r", "0.75", "--noise", "0.3"]));
    assert_eq!(
        summary_value(&text, "verdict"),
        "satisfies noncontextual bound"
    );
}

#[test]
fn validation_errors_exit_two_as_json() {
    let out = wpd(&["--json", "witness", "--r", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "validation_error");
    assert_eq!(err["exit_code"], 2);
    assert!(err["message"]
        .as_str()
        .unwrap()
        .contains("r must lie in [0, 1]"));

    let out = wpd(&["witness", "--r", "0.5", "--noise", "-0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}

#[test]
fn nothing_is_written_when_validation_fails() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("nested").join("out.json");
    let out = wpd(&["witness", "--r", "2", "--out", p(&target)]);
    assert_eq!(out.status.code(), Some(2));
    let curves = dir.path().join("curves");
    let out = wpd(&["curves", "--grid", "1", "--out-dir", p(&curves)]);
    assert_eq!(out.status.code(), Some(2));
    let out = wpd(&["pipeline", "--shots", "0", "--out-dir", p(&curves)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn orbit_check_and_nc_model_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let saved = dir.path().join("witness.json");
    assert!(wpd(&["witness", "--r", "0.75", "--out", p(&saved)])
        .status
        .success());
    let doc: Value = serde_json::from_str(&fs::read_to_string(&saved).unwrap()).unwrap();
    let quad = dir.path().join("quad.json");
    fs::write(&quad, doc["secondary"]["quadruple"].to_string()).unwrap();

    let out = wpd(&["orbit-check", "--in", p(&quad)]);
    assert!(out.status.success());
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["pass"], true);

    for space in ["deterministic", "coin-flips", "grid16"] {
        let out = wpd(&["nc-model", "--in", p(&quad), "--space", space]);
        assert!(out.status.success(), "{space}");
        let res: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(res["status"], "infeasible", "{space}");
        assert!(res["certificate"]["multipliers"].is_array(), "{space}");
    }
}

#[test]
fn tomography_then_secondary() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    let fit = dir.path().join("fit.json");
    let args = [
        "simulate", "--r", "0.75", "--shots", "100000", "--seed", "3", "--noise", "0.05",
    ];
    let mut sim = args.to_vec();
    sim.extend(["--out", p(&counts)]);
    assert!(wpd(&sim).status.success());
    assert_eq!(stdout(&wpd(&args)), fs::read_to_string(&counts).unwrap());

    let out = wpd(&["tomography", "--in", p(&counts), "--out", p(&fit)]);
    assert!(out.status.success());
    assert!(stdout(&out).starts_with("rank 4 "));

    let out = wpd(&["secondary", "--fit", p(&fit)]);
    assert!(out.status.success());
    assert_eq!(
        summary_value(&stdout(&out), "verdict"),
        "violates noncontextual bound"
    );

    // A single pure preparation has no orbit in its hull: solver failure.
    let out = wpd(&[
        "--json",
        "secondary",
        "--fit",
        p(&fit),
        "--preps",
        "orbit-1",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "solver_failure");
    assert_eq!(err["exit_code"], 3);

    let out = wpd(&["secondary", "--fit", p(&fit), "--preps", "nowhere"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pipeline_outputs_are_byte_identical() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let outs: Vec<Output> = dirs
        .iter()
        .map(|d| wpd(&["pipeline", "--seed", "5", "--out-dir", p(d.path())]))
        .collect();
    assert!(outs.iter().all(|o| o.status.success()));
    assert_eq!(outs[0].stdout, outs[1].stdout);
    for name in [
        "counts.csv",
        "fit.json",
        "aligned_fit.json",
        "secondary.json",
        "report.json",
    ] {
        let a = fs::read(dirs[0].path().join(name)).unwrap();
        let b = fs::read(dirs[1].path().join(name)).unwrap();
        assert!(!a.is_empty() && a == b, "{name}");
    }
    assert_eq!(
        summary_value(&stdout(&outs[0]), "verdict"),
        "violates noncontextual bound"
    );
}
