use std::path::Path;

use hamsim::experiment::{parse_config, run, Overrides, RunError, RunOptions};

fn run_text(text: &str, out: &Path, threads: usize) -> Result<hamsim::experiment::RunOutput, RunError> {
    let cfg = parse_config(text, &Overrides::default()).map_err(RunError::Config)?;
    run(&cfg, &RunOptions { out_dir: out.to_path_buf(), threads, base_dir: out.to_path_buf() })
}

const TROTTER_SCAN: &str = "\
[experiment]
kind = trotter-scan
name = scan
[hamiltonian]
n = 5
[time]
start = 0.02
stop = 0.3
count = 20
spacing = log
[trotter]
orders = 1
";

#[test]
fn trotter_scan_gives_twenty_rows_and_a_first_order_fit() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_text(TROTTER_SCAN, dir.path(), 1).unwrap();
    let curve: Vec<_> = out.rows.iter().filter(|r| r.metric == "approx").collect();
    assert_eq!(curve.len(), 20);
    assert!(curve.iter().all(|r| r.scheme == "trotter1" && r.layers == Some(1) && r.n == 5));
    let m = out.rows.iter().find(|r| r.metric == "fit_m:approx").unwrap().value;
    assert!((m - 1.98).abs() < 0.1, "m = {m}");
    let csv = std::fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    assert!(csv.starts_with("# hamsim "));
    assert!(csv.contains("\nt,tJ,metric_name,value,n,L,S,scheme,optimizer\n"));
    assert!(csv.contains("#   orders = 1\n"));
    let json = std::fs::read_to_string(dir.path().join("scan.fit.json")).unwrap();
    assert!(json.trim_start().starts_with("{\n  \"header\""));
    // Part files are merged away.
    let names: Vec<String> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert!(names.iter().all(|n| !n.contains(".part")), "{names:?}");
}

const SLICED: &str = "\
[experiment]
kind = optimize-sliced
name = sliced
seed = 11
[hamiltonian]
n = 4
[ansatz]
layers = 1, 2
init = random
[slicing]
total = 0.2
slices = 2, 3
scheme = wI
[optimizer]
method = lbfgs
[metrics]
names = approx, phase, start_gradient
[output]
snapshots = true
";

#[test]
fn outputs_are_identical_across_runs_and_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_text(SLICED, a.path(), 1).unwrap();
    run_text(SLICED, b.path(), 3).unwrap();
    for f in ["sliced.csv", "sliced.trace.json", "sliced.snapshots/n4_L2_S3_0003.circuit"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
    let rows = hamsim::experiment::read_csv(&a.path().join("sliced.csv")).unwrap();
    assert_eq!(rows.iter().filter(|r| r.metric == "approx").count(), 2 * (2 + 3));
    assert!(rows.iter().any(|r| r.metric == "start_grad_median" && r.slices == Some(3)));
    let snap = std::fs::read_to_string(a.path().join("sliced.snapshots/n4_L1_S2_0001.circuit")).unwrap();
    let c = hamsim::circuits::ParamCircuit::from_text(&snap).unwrap();
    assert_eq!(c.num_params(), 15);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_text("[experiment]\nkind = optimize-exact\n", dir.path(), 1).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("empty time grid"));
}

#[test]
fn missing_input_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let bad = "[experiment]\nkind = metric-scan\n[scan]\ntarget = circuit\ncircuit = missing.circuit\n[time]\npoints = 0.1\n";
    let err = run_text(bad, dir.path(), 1).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn refit_reproduces_inline_fit() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_text(TROTTER_SCAN, dir.path(), 1).unwrap();
    let inline: Vec<_> = out.rows.iter().filter(|r| r.metric.starts_with("fit_")).cloned().collect();
    let refit = "[experiment]\nkind = fit\nname = refit\n[fit]\ninput = scan.csv\n";
    let again = run_text(refit, dir.path(), 1).unwrap();
    assert_eq!(again.rows, inline);
}

#[test]
fn noise_floor_and_defect_scans() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[experiment]\nkind = noise-floor\n[hamiltonian]\nn = 14\n[ansatz]\nlayers = 1\n[noise]\np = 0.001\n";
    let out = run_text(cfg, dir.path(), 1).unwrap();
    assert_eq!(out.rows.len(), 1);
    assert!((out.rows[0].value - 0.013).abs() < 1e-3, "{}", out.rows[0].value);
    let cfg = "[experiment]\nkind = metric-scan\n[hamiltonian]\nn = 4\n[slicing]\nscheme = wI\n[time]\npoints = 0.01, 0.02, 0.04\n";
    let out = run_text(cfg, dir.path(), 1).unwrap();
    let m = out.rows.iter().find(|r| r.metric == "fit_m:defect").unwrap().value;
    assert!((m - 2.0).abs() < 0.2, "m = {m}");
}
