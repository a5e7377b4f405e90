//! Cost functional, reduced gradient, projected-gradient optimizer,
//! Hamiltonian and second-order optimality checks.

mod cost;
mod optimizer;
mod pontryagin;
mod second_order;

use std::sync::Arc;

pub use cost::{evaluate_cost, running_cost, CostSpec, QuadraticCost};
pub use optimizer::{optimize, OptimizeReport, OptimizerConfig, StepRule};
pub use pontryagin::{hamiltonian, pontryagin_residual, pontryagin_residual_sampled};
pub use second_order::{
    check_necessary, check_sufficient, random_probes, second_order_form, FormValues, FormVariant, NecessaryReport, SecondOrderProbe,
    SufficientReport,
};

use crate::error::Result;
use crate::fields::{ScalarField, VectorField};
use crate::forward::{simulate, ControlTrajectory, StateTrajectory, TimeScheme};
use crate::physics::PhysicsParams;
use crate::sensitivity::{solve_adjoint, AdjointTrajectory};

/// Everything the reduced cost needs besides the control.
#[derive(Clone)]
pub struct Problem {
    pub u0: VectorField,
    pub phi0: ScalarField,
    pub scheme: TimeScheme,
    pub params: PhysicsParams,
    pub cost: Arc<dyn CostSpec>,
}

impl Problem {
    pub fn simulate(&self, controls: &ControlTrajectory) -> Result<StateTrajectory> {
        simulate(&self.u0, &self.phi0, controls, &self.scheme, &self.params)
    }

    /// Reduced cost `J(U)`.
    pub fn cost_of(&self, controls: &ControlTrajectory) -> Result<f64> {
        evaluate_cost(&self.simulate(controls)?, controls, self.cost.as_ref())
    }
}

/// Forward and adjoint solves at one control, with the reduced gradient.
#[derive(Debug, Clone)]
pub struct GradientEval {
    pub controls: ControlTrajectory,
    pub trajectory: StateTrajectory,
    pub adjoint: AdjointTrajectory,
    pub cost: f64,
    /// `G^n = l_U(U^n) + p^n`.
    pub gradient: ControlTrajectory,
}

pub fn reduced_gradient(controls: &ControlTrajectory, problem: &Problem) -> Result<GradientEval> {
    let trajectory = problem.simulate(controls)?;
    let cost = evaluate_cost(&trajectory, controls, problem.cost.as_ref())?;
    let adjoint = solve_adjoint(&trajectory, problem.cost.as_ref(), &problem.scheme, &problem.params)?;
    let mut gradient = controls.clone();
    for (n, g) in gradient.values.iter_mut().enumerate() {
        let mut v = problem.cost.l_u(&controls.values[n]);
        v.axpy(1.0, &adjoint.states[n].p);
        v.bc = crate::fields::VectorBc::None;
        *g = v;
    }
    Ok(GradientEval { controls: controls.clone(), trajectory, adjoint, cost, gradient })
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use crate::fields::{Grid2D, Kernel, ScalarBc, VectorBc};
    use crate::physics::Potential;
    use std::f64::consts::PI;

    pub fn problem(n: usize, dt: f64, cost: QuadraticCost) -> Problem {
        let g = Grid2D::unit(n);
        Problem {
            u0: VectorField::from_fn(g, VectorBc::NoSlip, |x, y| {
                (0.3 * (PI * x).sin().powi(2) * (2.0 * PI * y).sin(), -0.3 * (2.0 * PI * x).sin() * (PI * y).sin().powi(2))
            }),
            phi0: ScalarField::from_fn(g, ScalarBc::NeumannZero, |x, y| 0.2 + 0.4 * (PI * x).cos() * (PI * y).cos()),
            scheme: TimeScheme::new(dt).unwrap(),
            params: PhysicsParams::new(0.1, Kernel::default_for(g), Potential::double_well()).unwrap(),
            cost: Arc::new(cost),
        }
    }
}
