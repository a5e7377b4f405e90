use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "grid.nx = 16\ngrid.ny = 16\ntime.dt = 0.015625\ntime.t_final = 0.0625\noutput.dump_every = 2\n";

fn chns(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chns")).args(args).env("CHNS_THREADS", "2").output().unwrap()
}

fn config(dir: &Path, extra: &str) -> String {
    let p = dir.join("run.cfg");
    std::fs::write(&p, format!("{SMALL}{extra}")).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn simulate_writes_csv_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let out = dir.path().join("o");
    let r = chns(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,energy,mass,grad_u_sq,grad_mu_sq,cost");
    assert_eq!(lines.len(), 1 + 5);
    for l in &lines[1..] {
        assert!(l.split(',').all(|v| v.parse::<f64>().unwrap().is_finite()));
    }
    for n in [0, 2, 4] {
        let vtk = std::fs::read_to_string(out.join(format!("phi_{n:05}.vtk"))).unwrap();
        assert!(vtk.contains("DIMENSIONS 16 16 1"));
        assert!(out.join(format!("u_{n:05}.vtk")).exists());
    }
}

#[test]
fn optimize_reports_monotone_history() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "init.u0 = vortex:0.5\noptimizer.max_iters = 5\n");
    let out = dir.path().join("o");
    let r = chns(&["optimize", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(out.join("optimization.csv")).unwrap();
    let costs: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(!costs.is_empty());
    assert!(costs.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn verification_subcommands_pass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    for sub in ["grad-check", "taylor-test", "adjoint-duality", "assumptions-check"] {
        let out = dir.path().join(sub);
        let r = chns(&[sub, "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "3"]);
        assert_eq!(r.status.code(), Some(0), "{sub}: {}", String::from_utf8_lossy(&r.stdout));
    }
}

#[test]
fn second_order_on_small_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "optimizer.max_iters = 3\ncheck.samples = 3\n");
    let out = dir.path().join("o");
    let r = chns(&["second-order", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stdout));
    assert!(String::from_utf8_lossy(&r.stdout).contains("necessary condition holds"));
}

#[test]
fn bad_input_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(chns(&["nonsense"]).status.code(), Some(64));
    let cfg = config(dir.path(), "physics.nu = -1\n");
    let r = chns(&["simulate", "--config", &cfg]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("physics.nu"));
    let cfg = config(dir.path(), "grid.nz = 4\n");
    assert_eq!(chns(&["simulate", "--config", &cfg]).status.code(), Some(1));
}
