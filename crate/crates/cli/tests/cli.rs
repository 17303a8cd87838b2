use std::path::Path;
use std::process::{Command, Output};

use tensorfill::grid::Reliability;
use tensorfill::io::read_stack;

fn tensorfill(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tensorfill"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn synth_then_reconstruct_is_gap_free() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&tensorfill(&["synth", "scene", "--width", "10", "--height", "9", "--years", "3", "--seed", "4"], d));
    let scene = read_stack(&d.join("scene")).unwrap();
    assert!(scene.reliability.iter().any(|c| !c.is_valid()));

    ok(&tensorfill(&["reconstruct", "scene", "out", "--workers", "1", "--lambda", "0.01"], d));
    let out = read_stack(&d.join("out")).unwrap();
    assert!(out.same_grid(&scene));
    assert!(out.reliability.iter().all(|&c| c == Reliability::Good));
}

#[test]
fn out_of_range_tau_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = tensorfill(&["reconstruct", "in", "out", "--tau", "1.5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--tau"));
}

#[test]
fn failed_command_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&tensorfill(&["synth", "scene", "--width", "6", "--height", "6", "--years", "2", "--seed", "1"], d));
    let out = tensorfill(&["scenario", "scene", "gaps", "--block", "4", "4", "5", "0", "3"], d);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.trim().lines().count(), 1, "{stderr}");
    assert!(!d.join("gaps").exists());

    let out = tensorfill(&["reconstruct", "missing", "rec"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("rec").exists());
}

#[test]
fn scenario_and_gap_scoring() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&tensorfill(&["synth", "scene", "--width", "8", "--height", "8", "--years", "4", "--seed", "2"], d));
    ok(&tensorfill(&["scenario", "scene", "gaps", "--random-rate", "0.5", "--seed", "3"], d));
    ok(&tensorfill(&["reconstruct", "gaps", "filled", "--lambda", "0"], d));
    let out = tensorfill(&["evaluate", "scene", "filled", "--gaps-only", "gaps/scenario.json"], d);
    ok(&out);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let mae = report["mae_mean"].as_f64().unwrap();
    assert!(mae > 0.0 && mae < 0.05, "{mae}");
    assert_eq!(report["mae_map"].as_array().unwrap().len(), 64);

    // identical input gives an identical report
    let again = tensorfill(&["evaluate", "scene", "filled", "--gaps-only", "gaps/scenario.json"], d);
    assert_eq!(again.stdout, out.stdout);
}

#[test]
fn reference_and_contamination() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&tensorfill(&["synth", "scene", "--width", "5", "--height", "5", "--years", "6", "--seed", "7"], d));
    ok(&tensorfill(&["reference", "scene", "ref"], d));
    ok(&tensorfill(&["contaminate", "ref", "scene", "sim"], d));
    assert_eq!(read_stack(&d.join("ref")).unwrap().ny(), 1);
    let sim = read_stack(&d.join("sim")).unwrap();
    let scene = read_stack(&d.join("scene")).unwrap();
    assert_eq!(sim.reliability, scene.reliability);
    ok(&tensorfill(&["reconstruct", "sim", "rec", "--lambda", "0.01"], d));
    let out = tensorfill(&["evaluate", "ref", "rec"], d);
    ok(&out);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["mae_mean"].as_f64().unwrap() < 0.05);
}

#[test]
fn rate_sweep_has_twelve_rows_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&tensorfill(&["synth", "scene", "--width", "4", "--height", "4", "--years", "4", "--seed", "5"], d));
    let args = ["sweep", "scene", "--rates", "25:80:5", "--methods", "tensor,linear", "--out", "a.csv", "--patch-size", "4"];
    ok(&tensorfill(&args, d));
    let csv = std::fs::read_to_string(d.join("a.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "setting,method,mae_mean,seconds");
    assert_eq!(lines.iter().filter(|l| l.contains(",tensor,")).count(), 12);
    assert_eq!(lines.iter().filter(|l| l.contains(",linear,")).count(), 12);

    let mut again = args;
    again[7] = "b.csv";
    ok(&tensorfill(&again, d));
    assert_eq!(std::fs::read(d.join("a.csv")).unwrap(), std::fs::read(d.join("b.csv")).unwrap());
}

#[test]
fn smooth_series_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut csv = String::from("t,value,ri\n");
    for t in 0..30 {
        match t {
            10 => csv.push_str("10,,3\n"),
            20 => csv.push_str("20,0.5,1\n"),
            _ => csv.push_str(&format!("{t},0.8,0\n")),
        }
    }
    std::fs::write(d.join("s.csv"), csv).unwrap();
    ok(&tensorfill(&["smooth", "s.csv", "z.csv"], d));
    let out = std::fs::read_to_string(d.join("z.csv")).unwrap();
    let values: Vec<f64> = out.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 30);
    assert!(values.iter().all(|v| (v - 0.8).abs() < 0.02), "{values:?}");

    std::fs::write(d.join("bad.csv"), "t,value,ri\n0,0.5,2\n").unwrap();
    let out = tensorfill(&["smooth", "bad.csv", "y.csv"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(!d.join("y.csv").exists());
}
