use std::path::Path;
use std::process::{Command, Output};

fn nwidth(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nwidth"))
        .args(args)
        .current_dir(dir)
        .env_remove("NWIDTH_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn r1_width_on_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = nwidth(&["compute", "--r", "1", "--n", "3"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let d3: f64 = row[3].parse().unwrap();
    let exact = 1.0 / (3.0 * std::f64::consts::PI);
    assert!((d3 - exact).abs() / exact < 5e-6);
    assert_eq!(row[9], "ok");
}

#[test]
fn validation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["compute", "--r", "0", "--n", "1"][..],
        &["compute", "--r", "2", "--n", "3", "--unknown"],
        &["compute", "--r", "two", "--n", "3"],
        &["knots", "--r", "2", "--k", "3", "--interval", "1,-1"],
    ] {
        let out = nwidth(args, dir.path());
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert!(!err.trim().is_empty());
    }
    let out = nwidth(&["compute", "--r", "0", "--n", "1"], dir.path());
    assert!(String::from_utf8(out.stderr).unwrap().contains("r ≥ 1"));
}

#[test]
fn under_resolved_knots_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = nwidth(
        &[
            "knots", "--r", "20", "--k", "20", "--m", "30", "--out", "k.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("k.csv").exists());
}

#[test]
fn thread_env_var_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let base = nwidth(
        &["compute", "--r", "3", "--n", "3..6", "--m", "301"],
        dir.path(),
    );
    let env = Command::new(env!("CARGO_BIN_EXE_nwidth"))
        .args(["compute", "--r", "3", "--n", "3..6", "--m", "301"])
        .env("NWIDTH_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(env.status.code(), Some(0));
    assert_eq!(base.stdout, env.stdout);
    let bad = Command::new(env!("CARGO_BIN_EXE_nwidth"))
        .args(["compute", "--r", "3", "--n", "3"])
        .env("NWIDTH_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn convergence_writes_errors_summary_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = nwidth(
        &[
            "convergence",
            "--r",
            "2",
            "--n",
            "2..3",
            "--h-list",
            "2^-3,2^-4,2^-5",
            "--h-ref",
            "2^-7",
            "--out",
            "conv.csv",
            "--gnuplot",
            "conv.dat",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let errors = std::fs::read_to_string(dir.path().join("conv.csv")).unwrap();
    assert_eq!(errors.lines().next(), Some("r,n,h,error"));
    assert_eq!(errors.lines().count(), 1 + 2 * 3);
    let summary = std::fs::read_to_string(dir.path().join("conv_summary.csv")).unwrap();
    assert_eq!(summary.lines().next(), Some("r,n,fitted_order,points_used"));
    assert_eq!(summary.lines().count(), 3);
    let plot = std::fs::read_to_string(dir.path().join("conv.dat")).unwrap();
    assert!(plot.contains("# guide"));
}

#[test]
fn eigenfunctions_one_file_per_rank() {
    let dir = tempfile::tempdir().unwrap();
    let out = nwidth(
        &[
            "eigenfunctions",
            "--r",
            "1",
            "--k",
            "1..3",
            "--m",
            "15",
            "--out",
            "phi.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    for k in 1..=3 {
        let text = std::fs::read_to_string(dir.path().join(format!("phi_k{k}.csv"))).unwrap();
        assert_eq!(text.lines().next(), Some("x,phi"));
        assert_eq!(text.lines().count(), 1 + 17);
    }
}

#[test]
fn matrix_dump() {
    let dir = tempfile::tempdir().unwrap();
    let out = nwidth(
        &[
            "compute",
            "--r",
            "1",
            "--n",
            "1",
            "--m",
            "3",
            "--dump-matrix",
            "a.txt",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("a.txt")).unwrap();
    let first: Vec<f64> = text
        .lines()
        .next()
        .unwrap()
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect();
    assert_eq!(first, vec![0.046875, 0.03125, 0.015625]);
}
