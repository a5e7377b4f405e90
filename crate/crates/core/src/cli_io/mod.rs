//! Command-line surface, configuration files and output writers.

pub mod checks;
mod config;
mod output;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::warn;

pub use config::{PhaseProfile, RunConfig, VelocityProfile};
pub use output::{diagnostics_rows, write_diagnostics_csv, write_field_vtk, DiagnosticsRow, VtkField};

use crate::control::{check_necessary, check_sufficient, optimize, random_probes, reduced_gradient, running_cost, Problem};
use crate::error::{ChnsError, Result};
use crate::forward::{ControlTrajectory, StateTrajectory};
use crate::physics::validate_assumptions;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Parser, Debug)]
#[command(name = "chns", version, about = "Nonlocal Cahn-Hilliard-Navier-Stokes simulation and optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Uncontrolled forward run; writes diagnostics.csv and VTK snapshots.
    Simulate(Common),
    /// Projected-gradient optimization of the distributed control.
    Optimize(Common),
    /// Finite differences of the reduced cost against the adjoint gradient.
    GradCheck(Common),
    /// Remainder of the linearized solution map.
    TaylorTest(Common),
    /// Pairing of linearized and adjoint solutions.
    AdjointDuality(Common),
    /// Second-order conditions at an optimized control.
    SecondOrder(Common),
    /// Convexity and kernel assumptions of the model.
    AssumptionsCheck(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Configuration file (`section.key = value`); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn exit_code(e: &ChnsError) -> i32 {
    match e {
        ChnsError::SolverDivergence { .. } | ChnsError::NonFinite { .. } => EXIT_SOLVER,
        _ => EXIT_VALIDATION,
    }
}

fn init_threads() {
    if let Some(n) = std::env::var("CHNS_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        if rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().is_err() {
            warn!("thread pool already initialised; CHNS_THREADS ignored");
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_threads();
    match run(cli.command) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_VALIDATION,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

struct Context {
    config: RunConfig,
    out: PathBuf,
    seed: u64,
}

impl Context {
    fn load(c: &Common) -> Result<Self> {
        let config = match &c.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let out = c.out.clone().unwrap_or_else(|| config.directory.clone());
        Ok(Self { config, out, seed: c.seed })
    }

    fn problem(&self) -> Result<Problem> {
        let c = &self.config;
        let g = c.grid();
        Ok(Problem {
            u0: c.u0.build(g),
            phi0: c.phi0.build(g, self.seed),
            scheme: c.scheme()?,
            params: c.physics()?,
            cost: Arc::new(c.cost()?),
        })
    }

    fn zero_controls(&self) -> Result<ControlTrajectory> {
        let c = &self.config;
        ControlTrajectory::zeros(c.grid(), c.steps(), c.dt).with_bounds(c.box_min, c.box_max)
    }

    fn random_controls(&self) -> ControlTrajectory {
        let c = &self.config;
        ControlTrajectory::random_smooth(c.grid(), c.steps(), c.dt, 0.5, self.seed)
    }
}

fn write_trajectory(dir: &Path, pb: &Problem, traj: &StateTrajectory, controls: &ControlTrajectory, dump_every: usize) -> Result<()> {
    let costs = running_cost(traj, controls, pb.cost.as_ref());
    write_diagnostics_csv(&diagnostics_rows(traj, &costs), &dir.join("diagnostics.csv"))?;
    if dump_every > 0 {
        for (n, s) in traj.states.iter().enumerate().step_by(dump_every) {
            write_field_vtk(&s.phi, "phi", &dir.join(format!("phi_{n:05}.vtk")))?;
            write_field_vtk(&s.u, "u", &dir.join(format!("u_{n:05}.vtk")))?;
            if let Some(c) = controls.values.get(n) {
                write_field_vtk(c, "control", &dir.join(format!("control_{n:05}.vtk")))?;
            }
        }
    }
    Ok(())
}

fn run(command: Command) -> Result<bool> {
    match command {
        Command::Simulate(c) => {
            let ctx = Context::load(&c)?;
            let pb = ctx.problem()?;
            let controls = ctx.zero_controls()?;
            let traj = pb.simulate(&controls)?;
            write_trajectory(&ctx.out, &pb, &traj, &controls, ctx.config.dump_every)?;
            let (first, last) = (&traj.diagnostics[0], traj.last_diag());
            println!("steps {}", traj.steps());
            println!("energy {:.10e} -> {:.10e}", first.energy, last.energy);
            println!("mass drift {:.3e}", (last.mass - first.mass).abs());
            println!("wrote {}", ctx.out.join("diagnostics.csv").display());
            Ok(true)
        }
        Command::Optimize(c) => {
            let ctx = Context::load(&c)?;
            let pb = ctx.problem()?;
            let (u, traj, rep) = optimize(&ctx.zero_controls()?, &ctx.config.optimizer(), &pb)?;
            write_trajectory(&ctx.out, &pb, &traj, &u, ctx.config.dump_every)?;
            let mut s = String::from("iteration,cost,stationarity,step\n");
            for (k, (j, g)) in rep.cost_history.iter().zip(&rep.gradient_norms).enumerate() {
                let step = if k == 0 { 0.0 } else { rep.step_sizes[k - 1] };
                let _ = writeln!(s, "{k},{},{},{}", output::num(*j), output::num(*g), output::num(step));
            }
            std::fs::write(ctx.out.join("optimization.csv"), s)?;
            println!("iterations {}", rep.iterations);
            println!("cost {:.10e} -> {:.10e}", rep.cost_history[0], rep.cost_history.last().unwrap());
            println!("converged {}", rep.converged);
            if rep.line_search_failed {
                println!("line search failed; best iterate kept");
            }
            println!("pontryagin residual {:.3e}", rep.pontryagin_residual);
            Ok(true)
        }
        Command::GradCheck(c) => {
            let ctx = Context::load(&c)?;
            let pb = ctx.problem()?;
            let eps = [1e-1, 1e-2, 1e-3, 1e-4];
            let gc = checks::gradient_check(&pb, &ctx.random_controls(), &eps, ctx.config.samples, ctx.seed)?;
            println!("direction eps relative_error");
            for (k, row) in gc.errors.iter().enumerate() {
                for (e, r) in eps.iter().zip(row) {
                    println!("{k} {e:.1e} {r:.3e}");
                }
                println!("{k} slope {:.3}", gc.slopes[k]);
            }
            let best = gc.errors.iter().map(|r| r.iter().copied().fold(f64::INFINITY, f64::min)).fold(0.0, f64::max);
            println!("worst best-eps error {best:.3e}");
            Ok(best <= 1e-3)
        }
        Command::TaylorTest(c) => {
            let ctx = Context::load(&c)?;
            let pb = ctx.problem()?;
            let eps = [1e-1, 5e-2, 2.5e-2, 1.25e-2];
            let tt = checks::taylor_test(&pb, &ctx.random_controls(), &eps, ctx.config.samples, ctx.seed)?;
            for (k, row) in tt.remainders.iter().enumerate() {
                let r: Vec<String> = row.iter().map(|v| format!("{v:.3e}")).collect();
                println!("{k} remainders {} slope {:.3}", r.join(" "), tt.slopes[k]);
            }
            Ok(tt.slopes.iter().all(|s| (s - 2.0).abs() <= 0.1))
        }
        Command::AdjointDuality(c) => {
            let ctx = Context::load(&c)?;
            let pb = ctx.problem()?;
            let errs = checks::adjoint_duality(&pb, &ctx.random_controls(), ctx.config.samples, ctx.seed)?;
            for (k, e) in errs.iter().enumerate() {
                println!("{k} relative mismatch {e:.3e}");
            }
            Ok(errs.iter().all(|e| *e <= 1e-3))
        }
        Command::SecondOrder(c) => {
            let ctx = Context::load(&c)?;
            let pb = ctx.problem()?;
            let (u, _, rep) = optimize(&ctx.zero_controls()?, &ctx.config.optimizer(), &pb)?;
            println!("candidate: {} iterations, converged {}", rep.iterations, rep.converged);
            let ev = reduced_gradient(&u, &pb)?;
            let n = ctx.config.samples;
            let probes = random_probes(&ev, &pb, n, 0.5, ctx.seed)?;
            let nec = check_necessary(&ev, &probes, pb.cost.as_ref(), &pb.params, 1e-6)?;
            for (k, (m, s)) in nec.minima.iter().zip(&nec.scales).enumerate() {
                println!("probe {k} min form {m:.6e} scale {s:.6e}");
            }
            println!("necessary condition {}", if nec.pass { "holds on all probes" } else { "violated" });
            let suf = check_sufficient(&ev, &pb, n, 0.5, ctx.seed.wrapping_add(1_000_000))?;
            if let (Some(i), Some(th), Some(m)) = (suf.argmin_sample, suf.argmin_theta, suf.min) {
                println!("smallest sampled value {m:.6e} at sample {i}, theta {th:?}");
            }
            println!("{}", suf.summary());
            Ok(nec.pass)
        }
        Command::AssumptionsCheck(c) => {
            let ctx = Context::load(&c)?;
            let pb = ctx.problem()?;
            let mut rep = validate_assumptions(&pb.params, pb.scheme.phi_range)?;
            if let Some((c7, c8)) = pb.cost.coercivity() {
                rep = rep.with_coercivity(c7, c8);
            }
            println!("{rep}");
            Ok(rep.pass)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("run.cfg");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn usage_errors_exit_64() {
        assert_eq!(run_cli(["chns", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run_cli(["chns", "simulate", "--bogus"]), EXIT_USAGE);
        assert_eq!(run_cli(["chns"]), EXIT_USAGE);
    }

    #[test]
    fn bad_config_exits_1() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_config(dir.path(), "physics.nu = -1\n");
        assert_eq!(run_cli(["chns", "simulate", "--config", p.to_str().unwrap()]), EXIT_VALIDATION);
        let missing = dir.path().join("nope.cfg");
        assert_eq!(run_cli(["chns", "simulate", "--config", missing.to_str().unwrap()]), EXIT_VALIDATION);
    }

    #[test]
    fn zero_simulation_has_constant_energy() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_config(
            dir.path(),
            "grid.nx = 8\ngrid.ny = 8\ntime.dt = 0.05\ntime.t_final = 0.2\ninit.phi0 = zero\noutput.dump_every = 2\n",
        );
        let out = dir.path().join("out");
        assert_eq!(run_cli(["chns", "simulate", "--config", p.to_str().unwrap(), "--out", out.to_str().unwrap()]), EXIT_OK);
        let text = std::fs::read_to_string(out.join("diagnostics.csv")).unwrap();
        let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|t| t.parse().unwrap()).collect()).collect();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r[1] == rows[0][1] && r[2..].iter().all(|v| *v == 0.0)));
        assert!(rows.windows(2).all(|w| w[1][0] > w[0][0]));
        assert!(out.join("phi_00002.vtk").exists() && out.join("u_00004.vtk").exists());
    }

    #[test]
    fn assumptions_check_gate() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_config(dir.path(), "grid.nx = 16\ngrid.ny = 16\n");
        assert_eq!(run_cli(["chns", "assumptions-check", "--config", p.to_str().unwrap()]), EXIT_OK);
        let p = write_config(dir.path(), "grid.nx = 16\ngrid.ny = 16\nphysics.kernel.beta = 0\n");
        assert_eq!(run_cli(["chns", "assumptions-check", "--config", p.to_str().unwrap()]), EXIT_VALIDATION);
    }

    #[test]
    fn solver_failures_exit_2() {
        assert_eq!(exit_code(&ChnsError::SolverDivergence { iterations: 3, residual: 1.0 }), EXIT_SOLVER);
        assert_eq!(exit_code(&ChnsError::NonFinite { step: 1, field: "phi" }), EXIT_SOLVER);
        assert_eq!(exit_code(&ChnsError::Config("x".into())), EXIT_VALIDATION);
    }
}
