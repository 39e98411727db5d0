use std::process::{Command, Output};

use fogsched::experiment::CSV_COLUMNS;
use fogsched::scenario::parse_scenario;

fn fogsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fogsched"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn show_prints_a_parsable_preset() {
    let out = fogsched(&["show", "--scenario", "fig2"]);
    assert!(out.status.success());
    let s = parse_scenario(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(s.random.unwrap().count, 500);
}

#[test]
fn csv_goes_to_stdout_with_fixed_header() {
    let out = fogsched(&[
        "simulate",
        "--scenario",
        "fig1",
        "--policy",
        "pier",
        "--h",
        "1",
        "--dist",
        "det",
        "--horizon",
        "400",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
    let row = lines.next().unwrap();
    assert!(row.starts_with("fig1,pier,1,det,"), "{row}");
    assert!(lines.next().is_none());
    assert!(!text.contains('\r'));
}

#[test]
fn invalid_file_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mut v: serde_json::Value = serde_json::from_str(
        &String::from_utf8(fogsched(&["show", "--scenario", "fig1"]).stdout).unwrap(),
    )
    .unwrap();
    v["network"]["groups"][2]["capacity"] = serde_json::json!(-1);
    std::fs::write(&path, v.to_string()).unwrap();
    let out = fogsched(&["simulate", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("network.groups[2].capacity"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(
        fogsched(&["simulate", "--scenario", "fig1", "--dist", "pareto:0.5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        fogsched(&["simulate", "--scenario", "fig1", "--policy", "fifo"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        fogsched(&["simulate", "--scenario", "fig1", "--count", "3"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(fogsched(&["--help"]).status.code(), Some(0));
}
