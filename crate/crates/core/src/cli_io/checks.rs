//! Verification pipelines shared by the command line and the test suites.

use crate::control::{reduced_gradient, Problem};
use crate::error::Result;
use crate::fields::{ScalarBc, ScalarField, VectorBc, VectorField};
use crate::forward::ControlTrajectory;
use crate::physics::Forcing;
use crate::sensitivity::{solve_adjoint, solve_linearized, source_pairing};

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub eps: Vec<f64>,
    /// `errors[k][i]`: direction `k`, step `eps[i]`.
    pub errors: Vec<Vec<f64>>,
    pub slopes: Vec<f64>,
}

impl GradientCheck {
    /// Largest relative error over directions at step `eps[i]`.
    pub fn worst_at(&self, i: usize) -> f64 {
        self.errors.iter().map(|e| e[i]).fold(0.0, f64::max)
    }
}

/// Central differences of the reduced cost against `(G, delta)` for
/// `directions` smooth random directions.
pub fn gradient_check(problem: &Problem, base: &ControlTrajectory, eps: &[f64], directions: usize, seed: u64) -> Result<GradientCheck> {
    let ev = reduced_gradient(base, problem)?;
    let g = problem.u0.grid;
    let mut errors = Vec::with_capacity(directions);
    let mut slopes = Vec::with_capacity(directions);
    for k in 0..directions {
        let d = ControlTrajectory::random_smooth(g, base.steps(), base.dt, 1.0, seed.wrapping_add(1 + k as u64));
        let ad = ev.gradient.inner(&d);
        let mut row = Vec::with_capacity(eps.len());
        for &e in eps {
            let jp = problem.cost_of(&base.add(&d.scaled(e)))?;
            let jm = problem.cost_of(&base.sub(&d.scaled(e)))?;
            let fd = (jp - jm) / (2.0 * e);
            row.push((fd - ad).abs() / ad.abs().max(f64::MIN_POSITIVE));
        }
        slopes.push(loglog_slope(eps, &row.iter().map(|v| v.max(f64::MIN_POSITIVE)).collect::<Vec<_>>()));
        errors.push(row);
    }
    Ok(GradientCheck { eps: eps.to_vec(), errors, slopes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorTest {
    pub eps: Vec<f64>,
    /// `remainders[k][i]`: sup over levels of `|S(U + e d) - S(U) - e L(d)|`.
    pub remainders: Vec<Vec<f64>>,
    pub slopes: Vec<f64>,
}

/// Remainder of the first-order expansion of the solution map.
pub fn taylor_test(problem: &Problem, base: &ControlTrajectory, eps: &[f64], directions: usize, seed: u64) -> Result<TaylorTest> {
    let traj = problem.simulate(base)?;
    let g = problem.u0.grid;
    let w0 = VectorField::zeros(g, VectorBc::NoSlip);
    let psi0 = ScalarField::zeros(g, ScalarBc::NeumannZero);
    let mut remainders = Vec::with_capacity(directions);
    let mut slopes = Vec::with_capacity(directions);
    for k in 0..directions {
        let d = ControlTrajectory::random_smooth(g, base.steps(), base.dt, 1.0, seed.wrapping_add(1 + k as u64));
        let lin = solve_linearized(&traj, &w0, &psi0, &d, &Forcing::Zero, &problem.scheme, &problem.params)?;
        let mut row = Vec::with_capacity(eps.len());
        for &e in eps {
            let pert = problem.simulate(&base.add(&d.scaled(e)))?;
            let mut r = 0.0f64;
            for (n, s) in pert.states.iter().enumerate() {
                let mut du = s.u.sub(&traj.states[n].u);
                du.axpy(-e, &lin[n].w);
                let mut dp = s.phi.sub(&traj.states[n].phi);
                dp.axpy(-e, &lin[n].psi);
                r = r.max((du.norm_sq() + dp.norm_sq()).sqrt());
            }
            row.push(r);
        }
        slopes.push(loglog_slope(eps, &row));
        remainders.push(row);
    }
    Ok(TaylorTest { eps: eps.to_vec(), remainders, slopes })
}

/// Relative mismatch between the tangent pairing with the cost sources and
/// the control pairing with `p`, one entry per random direction.
pub fn adjoint_duality(problem: &Problem, base: &ControlTrajectory, draws: usize, seed: u64) -> Result<Vec<f64>> {
    let traj = problem.simulate(base)?;
    let adj = solve_adjoint(&traj, problem.cost.as_ref(), &problem.scheme, &problem.params)?;
    let g = problem.u0.grid;
    let w0 = VectorField::zeros(g, VectorBc::NoSlip);
    let psi0 = ScalarField::zeros(g, ScalarBc::NeumannZero);
    (0..draws)
        .map(|k| {
            let d = ControlTrajectory::random_smooth(g, base.steps(), base.dt, 1.0, seed.wrapping_add(1 + k as u64));
            let lin = solve_linearized(&traj, &w0, &psi0, &d, &Forcing::Zero, &problem.scheme, &problem.params)?;
            let lhs = source_pairing(&traj, &lin, problem.cost.as_ref());
            let rhs = (0..base.steps()).map(|n| d.values[n].inner(&adj.states[n].p)).sum::<f64>() * base.dt;
            Ok((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 0.5, 0.25, 0.125];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        assert!((loglog_slope(&x, &y) - 2.0).abs() < 1e-12);
    }
}
