use std::path::Path;
use std::process::{Command, Output};

fn hamsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hamsim")).args(args).current_dir(dir).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SCAN: &str = "\
[experiment]
kind = trotter-scan
name = scan
seed = 5
[hamiltonian]
n = 4
[time]
start = 0.02
stop = 0.3
count = 12
spacing = log
[trotter]
orders = 2
";

#[test]
fn info_output_is_a_valid_config() {
    let dir = tempfile::tempdir().unwrap();
    let info = hamsim(&["info"], dir.path());
    assert!(info.status.success());
    std::fs::write(dir.path().join("defaults.cfg"), &info.stdout).unwrap();
    let v = hamsim(&["validate", "--config", "defaults.cfg"], dir.path());
    assert_eq!(v.status.code(), Some(0), "{}", stderr(&v));
    assert_eq!(String::from_utf8_lossy(&v.stdout).trim(), "ok");
}

#[test]
fn validate_reports_named_keys_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("neg.cfg"), "[experiment]\nkind = optimize-sliced\n[slicing]\nslices = -5\n").unwrap();
    let o = hamsim(&["validate", "--config", "neg.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("slices"), "{}", stderr(&o));
    std::fs::write(dir.path().join("big.cfg"), "[experiment]\nkind = metric-scan\n[hamiltonian]\nn = 20\n[time]\npoints = 0.1\n").unwrap();
    let o = hamsim(&["validate", "--config", "big.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n <= 14"), "{}", stderr(&o));
    let o = hamsim(&["validate", "--config", "absent.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_then_refit() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("scan.cfg"), SCAN).unwrap();
    let o = hamsim(&["run", "--config", "scan.cfg", "--out", "res", "--seed", "99", "--threads", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("res/scan.csv")).unwrap();
    assert!(csv.starts_with("# hamsim "));
    assert!(csv.contains("# seed = 99\n"));
    assert!(csv.contains("\nt,tJ,metric_name,value,n,L,S,scheme,optimizer\n"));
    assert!(csv.contains(",fit_m:approx,"));
    let o = hamsim(&["fit", "--input", "res/scan.csv", "--out", "refit"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let refit = std::fs::read_dir(dir.path().join("refit")).unwrap().count();
    assert!(refit >= 1);
}

#[test]
fn missing_fit_input_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = hamsim(&["fit", "--input", "nothing.csv"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
