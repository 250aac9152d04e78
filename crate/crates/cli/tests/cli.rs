use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atomsqueeze")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

#[test]
fn zero_rabi_beam_splitter_is_a_calibration_failure() {
    let o = run(&["calibrate", "--pulse", "bs", "--rabi", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no diffraction at zero Rabi frequency"), "{}", stderr(&o));
}

#[test]
fn beam_splitter_calibration_is_balanced() {
    let o = run(&["calibrate", "--pulse", "bs", "--rabi", "9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let residual: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("residual = "))
        .expect("residual line")
        .parse()
        .unwrap();
    assert!(residual.abs() < 1e-6);
}

#[test]
fn mirror_bypass_is_echoed() {
    let o = run(&["calibrate", "--pulse", "mirror", "--bypass", "omega=12.5", "tau=0.45"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("omega0 = 1.2500000000000000e1"));
    assert!(text.contains("tau = 4.5000000000000001e-1"));
    assert!(text.contains("bypass = true"));
    assert!(text.contains("transfer = "));
}

#[test]
fn two_point_grid_gives_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[sweep]\ndp = [0.05]\nrest_node = false\nomega0 = [7.0, 8.0]\n");
    let out = dir.path().join("out");
    let o = run(&["--config", &cfg, "--out", out.to_str().unwrap(), "sweep-rabi"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("sweep_rabi.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(
        lines[0],
        "omega0,tau_bs,dp,n_atoms,mu_opt,xi_opt,dphi,gain_sqrtN,gain_db,survival_1,survival_2,slope,error"
    );
    assert!(out.join("sweep_rabi.manifest.json").exists());
    let manifest = std::fs::read_to_string(out.join("sweep_rabi.manifest.json")).unwrap();
    assert!(manifest.contains("\"csv_schema\""));
    assert!(manifest.contains("\"omega0\""));
}

#[test]
fn zero_width_is_rejected_at_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[sweep]\ndp = [0.0]\n");
    let o = run(&["--config", &cfg, "--out", dir.path().to_str().unwrap(), "sweep-rabi"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("use the single-node q=0 mode explicitly"));
    assert!(!dir.path().join("sweep_rabi.csv").exists());
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[sweep]\nomega0 = \"many\"\n");
    assert_eq!(run(&["--config", &cfg, "verify"]).status.code(), Some(1));
    let missing = dir.path().join("absent.toml");
    assert_eq!(run(&["--config", missing.to_str().unwrap(), "verify"]).status.code(), Some(1));
}

#[test]
fn all_failed_points_still_write_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["--out", out.to_str().unwrap(), "sweep-rabi", "--rabi", "0.5", "--dp", "0.05"]);
    assert_eq!(o.status.code(), Some(2));
    let csv = std::fs::read_to_string(out.join("sweep_rabi.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().skip(1).all(|l| l.contains("NaN") && !l.ends_with(',')));
}

#[test]
fn verify_passes_and_is_seed_reproducible() {
    let a = run(&["verify", "--seed", "7"]);
    let b = run(&["verify", "--seed", "7"]);
    assert!(a.status.success(), "{}", stdout(&a));
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stdout(&a).contains("seed = 7"));
    assert!(!stdout(&a).contains("FAIL"));
    let c = run(&["verify", "--seed", "8"]);
    assert_ne!(stdout(&a), stdout(&c));
}

#[test]
fn injected_fault_is_caught() {
    let o = run(&["verify", "--inject-fault"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn moments_reports_requested_squeezing() {
    let o = run(&["moments", "--n", "500", "--xi", "0.3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let xi: f64 = stdout(&o).lines().find_map(|l| l.strip_prefix("xi = ")).unwrap().parse().unwrap();
    assert!((xi - 0.3).abs() < 1e-9);
    let too_low = run(&["moments", "--n", "500", "--xi", "0.01"]);
    assert_eq!(too_low.status.code(), Some(1));
}

#[test]
fn ideal_sensitivity_matches_the_standard_limit() {
    let o = run(&["sensitivity", "--ideal-blocks", "--n", "400", "--mu", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let gain: f64 = stdout(&o).lines().find_map(|l| l.strip_prefix("gain_sqrtN = ")).unwrap().parse().unwrap();
    assert!((gain - 1.0).abs() < 1e-12);
}
