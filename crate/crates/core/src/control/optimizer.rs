use log::{debug, info, warn};

use super::{pontryagin_residual, reduced_gradient, GradientEval, Problem};
use crate::error::{ChnsError, Result};
use crate::forward::{ControlTrajectory, StateTrajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Fixed(f64),
    /// Backtracking on `J(U(a)) <= J(U) + c (G, U(a) - U)` with `U(a) = clip(U - a G)`.
    Armijo {
        c: f64,
        backtrack: f64,
        initial: f64,
        max_backtracks: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub step: StepRule,
    /// Stop when `max |U - clip(U - G)| <= tol`.
    pub tol: f64,
    pub bounds: (f64, f64),
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            step: StepRule::Armijo { c: 1e-4, backtrack: 0.5, initial: 1.0, max_backtracks: 30 },
            tol: 1e-6,
            bounds: (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| Err(ChnsError::InvalidParameter { key: key.into(), reason });
        if !(self.tol > 0.0) {
            return bad("optimizer.tol", format!("must be positive, got {}", self.tol));
        }
        if !(self.bounds.0 <= self.bounds.1) {
            return bad("control.box_min", format!("empty box [{}, {}]", self.bounds.0, self.bounds.1));
        }
        match self.step {
            StepRule::Fixed(a) if !(a > 0.0) => bad("optimizer.step", format!("must be positive, got {a}")),
            StepRule::Armijo { c, backtrack, initial, .. } => {
                if !(c > 0.0 && c < 1.0) {
                    bad("optimizer.armijo_c", format!("must lie in (0, 1), got {c}"))
                } else if !(backtrack > 0.0 && backtrack < 1.0) {
                    bad("optimizer.armijo_backtrack", format!("must lie in (0, 1), got {backtrack}"))
                } else if !(initial > 0.0) {
                    bad("optimizer.step", format!("must be positive, got {initial}"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeReport {
    /// Reduced cost of every accepted iterate, starting with `U0`.
    pub cost_history: Vec<f64>,
    /// `max |U - clip(U - G)|` at every accepted iterate.
    pub gradient_norms: Vec<f64>,
    pub step_sizes: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub line_search_failed: bool,
    pub pontryagin_residual: f64,
}

fn stationarity(ev: &GradientEval) -> f64 {
    let u = &ev.controls;
    let mut trial = u.sub(&ev.gradient);
    trial.bounds = u.bounds;
    trial.clip().sub(u).max_abs()
}

/// Projected gradient descent on the reduced cost.
pub fn optimize(
    u0: &ControlTrajectory,
    config: &OptimizerConfig,
    problem: &Problem,
) -> Result<(ControlTrajectory, StateTrajectory, OptimizeReport)> {
    config.validate()?;
    let mut u = u0.clone();
    u.bounds = config.bounds;
    if !u.is_admissible() {
        u = u.clip();
    }
    let mut ev = reduced_gradient(&u, problem)?;
    let mut report = OptimizeReport {
        cost_history: vec![ev.cost],
        gradient_norms: vec![stationarity(&ev)],
        step_sizes: Vec::new(),
        iterations: 0,
        converged: false,
        line_search_failed: false,
        pontryagin_residual: 0.0,
    };
    let mut alpha_prev = match config.step {
        StepRule::Fixed(a) => a,
        StepRule::Armijo { initial, .. } => initial,
    };
    for it in 0..config.max_iters {
        let stat = *report.gradient_norms.last().unwrap();
        if stat <= config.tol {
            report.converged = true;
            break;
        }
        let candidate = |alpha: f64| -> ControlTrajectory {
            let mut trial = ev.controls.sub(&ev.gradient.scaled(alpha));
            trial.bounds = config.bounds;
            trial.clip()
        };
        let next = match config.step {
            StepRule::Fixed(alpha) => Some((alpha, reduced_gradient(&candidate(alpha), problem)?)),
            StepRule::Armijo { c, backtrack, initial, max_backtracks } => {
                let mut alpha = (alpha_prev / backtrack).min(initial);
                let mut found = None;
                for _ in 0..=max_backtracks {
                    let trial = candidate(alpha);
                    let decrease = ev.gradient.inner(&trial.sub(&ev.controls));
                    match problem.cost_of(&trial) {
                        Ok(j) if j <= ev.cost + c * decrease => {
                            found = Some((alpha, reduced_gradient(&trial, problem)?));
                            break;
                        }
                        Ok(j) => debug!("step {alpha:.3e} rejected, cost {j:.6e}"),
                        Err(e @ ChnsError::InvalidParameter { .. }) => return Err(e),
                        Err(e) => debug!("step {alpha:.3e} rejected: {e}"),
                    }
                    alpha *= backtrack;
                }
                found
            }
        };
        let Some((alpha, next)) = next else {
            warn!("line search failed at iteration {it}");
            report.line_search_failed = true;
            break;
        };
        alpha_prev = alpha;
        ev = next;
        report.iterations = it + 1;
        report.step_sizes.push(alpha);
        report.cost_history.push(ev.cost);
        report.gradient_norms.push(stationarity(&ev));
        info!("iteration {}: cost {:.10e}, stationarity {:.3e}, step {alpha:.3e}", it + 1, ev.cost, report.gradient_norms.last().unwrap());
    }
    if !report.converged && *report.gradient_norms.last().unwrap() <= config.tol {
        report.converged = true;
    }
    report.pontryagin_residual = pontryagin_residual(&ev.controls, &ev.adjoint, problem.cost.as_ref());
    Ok((ev.controls, ev.trajectory, report))
}

#[cfg(test)]
mod tests {
    use super::super::testing::problem;
    use super::super::QuadraticCost;
    use super::*;
    use crate::fields::{ScalarBc, ScalarField, VectorBc, VectorField};

    #[test]
    fn zero_problem_converges_immediately() {
        let mut pb = problem(10, 0.05, QuadraticCost::unit());
        let g = pb.u0.grid;
        pb.u0 = VectorField::zeros(g, VectorBc::NoSlip);
        pb.phi0 = ScalarField::zeros(g, ScalarBc::NeumannZero);
        let (u, _, rep) = optimize(&ControlTrajectory::zeros(g, 4, 0.05), &OptimizerConfig::default(), &pb).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn rejects_bad_config() {
        let c = OptimizerConfig { tol: 0.0, ..Default::default() };
        assert!(c.validate().is_err());
        let c =
            OptimizerConfig { step: StepRule::Armijo { c: 1.5, backtrack: 0.5, initial: 1.0, max_backtracks: 3 }, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn cost_history_is_monotone_and_stays_in_box() {
        let pb = problem(12, 0.05, QuadraticCost::unit());
        let g = pb.u0.grid;
        let config = OptimizerConfig { max_iters: 6, bounds: (-0.05, 0.05), ..Default::default() };
        let (u, _, rep) = optimize(&ControlTrajectory::zeros(g, 4, 0.05), &config, &pb).unwrap();
        assert!(rep.cost_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(rep.cost_history.last().unwrap() < &rep.cost_history[0]);
        assert!(u.is_admissible());
    }

    #[test]
    fn control_shrinks_as_lambda_grows() {
        let mut norms = Vec::new();
        for lambda in [1.0, 10.0, 100.0] {
            let pb = problem(10, 0.05, QuadraticCost::new(1.0, 1.0, lambda).unwrap());
            let g = pb.u0.grid;
            let config = OptimizerConfig { max_iters: 40, tol: 1e-8, ..Default::default() };
            let (u, _, _) = optimize(&ControlTrajectory::zeros(g, 4, 0.05), &config, &pb).unwrap();
            norms.push(u.norm());
        }
        assert!(norms[0] > norms[1] && norms[1] > norms[2], "{norms:?}");
    }

    #[test]
    fn converged_run_satisfies_minimum_principle() {
        let pb = problem(10, 0.05, QuadraticCost::unit());
        let g = pb.u0.grid;
        let config = OptimizerConfig { max_iters: 60, tol: 1e-7, ..Default::default() };
        let (_, _, rep) = optimize(&ControlTrajectory::zeros(g, 4, 0.05), &config, &pb).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!(rep.pontryagin_residual <= 10.0 * config.tol);
    }
}
