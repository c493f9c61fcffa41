use std::fs;
use std::process::{Command, Output};

fn dyntrace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyntrace"))
        .args(args)
        .output()
        .expect("binary runs")
}

const SMALL: [&str; 6] = ["--nodes", "20", "--steps", "4", "--budget", "400"];

#[test]
fn writes_csv_to_out_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs/synth.csv");
    let mut args = vec!["synth", "--out", out.to_str().unwrap()];
    args.extend(SMALL);
    let r = dyntrace(&args);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(r.stdout.is_empty());
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().any(|l| l == "# estimator=deltashift_auto"));
    assert!(text.lines().any(|l| l == "# gamma_probes=held_out"));
    let rows = text.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 1 + 4);
}

#[test]
fn moments_writes_one_file_per_degree() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    let mut args = vec![
        "moments",
        "--degrees",
        "1,3",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend(SMALL);
    let r = dyntrace(&args);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(dir.path().join("m_T1.csv").exists());
    assert!(dir.path().join("m_T3.csv").exists());
    assert!(!out.exists());
}

#[test]
fn shared_gamma_probe_flag_reaches_header() {
    let mut args = vec!["synth", "--shared-gamma-probes"];
    args.extend(SMALL);
    let r = dyntrace(&args);
    assert!(r.status.success());
    let text = String::from_utf8(r.stdout).unwrap();
    assert!(text.lines().any(|l| l == "# gamma_probes=shared"));
}

#[test]
fn errors_exit_nonzero() {
    let cases: [&[&str]; 5] = [
        &["synth", "--budget", "3", "--steps", "10"],
        &["synth", "--estimator", "nope"],
        &["synth", "--config", "/nonexistent/c.toml"],
        &["moments", "--degrees", "1,2"],
        &["triangles", "--graph", "/nonexistent/g.txt"],
    ];
    for args in cases {
        let r = dyntrace(args);
        assert!(!r.status.success(), "{args:?}");
        assert!(!r.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn sweep_summary_lists_every_cell() {
    let mut args = vec![
        "sweep",
        "--budgets",
        "200,400",
        "--seeds",
        "1,2",
        "--estimators",
        "hutchinson,deltashift_auto",
    ];
    args.extend(SMALL[..4].iter());
    let r = dyntrace(&args);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = String::from_utf8(r.stdout).unwrap();
    let rows = text.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 1 + 2 * 2 * 2);
}
