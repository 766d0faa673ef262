use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hmo_core::scenario::VDP_CONFIG;

fn hmo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmo")).args(args).env("HMO_THREADS", "2").output().expect("spawn hmo")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

/// Bundled VdP config with text substitutions, written next to the bank file.
fn vdp_variant(dir: &Path, edits: &[(&str, &str)]) -> PathBuf {
    let mut text = VDP_CONFIG.to_string();
    for (from, to) in edits {
        assert!(text.contains(from), "{from}");
        text = text.replacen(from, to, 1);
    }
    let p = dir.join("scenario.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn verify_assumptions_reports_threshold() {
    let o = hmo(&["verify-assumptions", configs().join("vdp.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("152.50"), "{}", stdout(&o));
}

#[test]
fn failed_check_exits_4_only_in_check_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = vdp_variant(dir.path(), &[("h = 200.0", "h = 100.0")]);
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&hmo(&["verify-assumptions", cfg])), 0);
    assert_eq!(code(&hmo(&["--check", "verify-assumptions", cfg])), 4);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&hmo(&["run", "/nonexistent/scenario.toml"])), 2);
    let cfg = vdp_variant(dir.path(), &[("nu = 5.0", "nu = 60.0")]);
    let o = hmo(&["run", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha"));
    let cfg = vdp_variant(dir.path(), &[("[solver]", "[solver]\nbogus = 1")]);
    assert_eq!(code(&hmo(&["run", cfg.to_str().unwrap()])), 2);
    assert_eq!(code(&hmo(&["montecarlo", cfg.to_str().unwrap(), "--runs", "2", "--seed", "1", "--reset", "3"])), 2);
}

#[test]
fn solver_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // A strongly destabilizing extra gain overflows its estimate.
    let cfg = vdp_variant(dir.path(), &[("h = -1.0", "h = -1000.0"), ("t_end = 100.0", "t_end = 5.0")]);
    let o = hmo(&["run", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn run_writes_trace_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = vdp_variant(dir.path(), &[("t_end = 100.0", "t_end = 1.0")]);
    let out = dir.path().join("out");
    let o = hmo(&["--check", "run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--svg"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(out.join("trace.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header.len(), 2 + 18 + 4);
    assert_eq!(&header[..4], ["t", "j", "x1", "x2"]);
    assert_eq!(header[19], "sigma");
    let rows = rdr.records().count();
    assert!(rows > 1000);
    let svg = std::fs::read_to_string(out.join("plot.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn montecarlo_prints_table_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = vdp_variant(dir.path(), &[("t_end = 100.0", "t_end = 1.0")]);
    let csv_path = dir.path().join("mc.csv");
    let args = ["--check", "montecarlo", cfg.to_str().unwrap(), "--runs", "3", "--seed", "5", "--reset", "1"];
    let o = hmo(&[&args[..], &["--out", csv_path.to_str().unwrap()]].concat());
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("reset r = 1") && text.contains("MAE") && text.contains("RMSE"), "{text}");
    assert_eq!(csv::Reader::from_path(&csv_path).unwrap().records().count(), 3);
    // Same seed, same table.
    assert_eq!(stdout(&hmo(&args)), text);
}

#[test]
fn design_gains_writes_bank() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = vdp_variant(dir.path(), &[("horizon = 5.0", "horizon = 0.5"), ("iters = 40", "iters = 5")]);
    let bank = configs().join("vdp_bank.csv");
    let gains = dir.path().join("gains.csv");
    let o = hmo(&["--check", "design-gains", cfg.to_str().unwrap(), "--bank", bank.to_str().unwrap(), "--out", gains.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&gains).unwrap();
    assert!(text.starts_with("L1_1,L2_1,worst_case_cost"));
    assert_eq!(text.lines().count(), 2);

    let missing = hmo(&["design-gains", cfg.to_str().unwrap(), "--bank", "/nonexistent.csv"]);
    assert_eq!(code(&missing), 2);
}
