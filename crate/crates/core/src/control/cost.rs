use crate::error::{ChnsError, Result};
use crate::fields::{ScalarField, VectorField};
use crate::forward::{ControlTrajectory, StateTrajectory};

/// Running cost `g(t,u) + h(t,phi) + l(U)` with first and second derivatives.
/// Second derivatives are quadratic forms: `g_uu(t, u, v) = (g''(u) v, v)`.
pub trait CostSpec: Send + Sync {
    fn g(&self, t: f64, u: &VectorField) -> f64;
    fn g_u(&self, t: f64, u: &VectorField) -> VectorField;
    fn g_uu(&self, t: f64, u: &VectorField, v: &VectorField) -> f64;

    fn h(&self, t: f64, phi: &ScalarField) -> f64;
    fn h_phi(&self, t: f64, phi: &ScalarField) -> ScalarField;
    fn h_phiphi(&self, t: f64, phi: &ScalarField, psi: &ScalarField) -> f64;

    fn l(&self, control: &VectorField) -> f64;
    fn l_u(&self, control: &VectorField) -> VectorField;
    fn l_uu(&self, control: &VectorField, v: &VectorField) -> f64;

    /// True when all three second derivatives are constant.
    fn is_quadratic(&self) -> bool {
        false
    }

    /// Constants `(C7, C8)` with `l(U) >= C7 |U|^2 - C8`, when known.
    fn coercivity(&self) -> Option<(f64, f64)> {
        None
    }

    /// Pointwise minimizer of `l(W) + (p, W)` over the box, when available in
    /// closed form.
    fn control_minimizer(&self, _p: &VectorField, _bounds: (f64, f64)) -> Option<VectorField> {
        None
    }

    /// Weight of `l` for the pure control-cost curvature, if `l = lambda/2 |U|^2`.
    fn lambda(&self) -> Option<f64> {
        None
    }
}

/// `g = alpha_u/2 |u|^2`, `h = alpha_phi/2 |phi|^2`, `l = lambda/2 |U|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCost {
    pub alpha_u: f64,
    pub alpha_phi: f64,
    pub lambda: f64,
}

impl QuadraticCost {
    pub fn new(alpha_u: f64, alpha_phi: f64, lambda: f64) -> Result<Self> {
        for (key, v) in [("cost.alpha_u", alpha_u), ("cost.alpha_phi", alpha_phi)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ChnsError::InvalidParameter { key: key.into(), reason: format!("must be nonnegative, got {v}") });
            }
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(ChnsError::InvalidParameter { key: "cost.lambda_u".into(), reason: format!("must be positive, got {lambda}") });
        }
        Ok(Self { alpha_u, alpha_phi, lambda })
    }

    /// Unit weights.
    pub fn unit() -> Self {
        Self { alpha_u: 1.0, alpha_phi: 1.0, lambda: 1.0 }
    }
}

impl CostSpec for QuadraticCost {
    fn g(&self, _t: f64, u: &VectorField) -> f64 {
        0.5 * self.alpha_u * u.norm_sq()
    }
    fn g_u(&self, _t: f64, u: &VectorField) -> VectorField {
        u.scaled(self.alpha_u)
    }
    fn g_uu(&self, _t: f64, _u: &VectorField, v: &VectorField) -> f64 {
        self.alpha_u * v.norm_sq()
    }
    fn h(&self, _t: f64, phi: &ScalarField) -> f64 {
        0.5 * self.alpha_phi * phi.norm_sq()
    }
    fn h_phi(&self, _t: f64, phi: &ScalarField) -> ScalarField {
        phi.scaled(self.alpha_phi)
    }
    fn h_phiphi(&self, _t: f64, _phi: &ScalarField, psi: &ScalarField) -> f64 {
        self.alpha_phi * psi.norm_sq()
    }
    fn l(&self, control: &VectorField) -> f64 {
        0.5 * self.lambda * control.norm_sq()
    }
    fn l_u(&self, control: &VectorField) -> VectorField {
        control.scaled(self.lambda)
    }
    fn l_uu(&self, _control: &VectorField, v: &VectorField) -> f64 {
        self.lambda * v.norm_sq()
    }
    fn is_quadratic(&self) -> bool {
        true
    }
    fn coercivity(&self) -> Option<(f64, f64)> {
        Some((self.lambda / 2.0, 0.0))
    }
    fn control_minimizer(&self, p: &VectorField, bounds: (f64, f64)) -> Option<VectorField> {
        Some(p.scaled(-1.0 / self.lambda).clamp(bounds.0, bounds.1))
    }
    fn lambda(&self) -> Option<f64> {
        Some(self.lambda)
    }
}

/// Left-endpoint quadrature `sum_{n<N} dt [g(u^n) + h(phi^n) + l(U^n)]`.
pub fn evaluate_cost(traj: &StateTrajectory, controls: &ControlTrajectory, cost: &dyn CostSpec) -> Result<f64> {
    if traj.steps() != controls.steps() {
        return Err(ChnsError::GridMismatch(format!("trajectory has {} steps, control has {}", traj.steps(), controls.steps())));
    }
    Ok(running_cost(traj, controls, cost).iter().sum())
}

/// Cost contribution of each step, `dt [g + h + l]` at level `n`.
pub fn running_cost(traj: &StateTrajectory, controls: &ControlTrajectory, cost: &dyn CostSpec) -> Vec<f64> {
    let dt = traj.dt;
    traj.states.iter().zip(&controls.values).map(|(s, c)| dt * (cost.g(s.t, &s.u) + cost.h(s.t, &s.phi) + cost.l(c))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Grid2D, Kernel, ScalarBc, VectorBc};
    use crate::forward::{simulate, Diagnostics, State, TimeScheme};
    use crate::physics::{PhysicsParams, Potential};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trajectory_of(states: Vec<State>, dt: f64, p: &PhysicsParams) -> StateTrajectory {
        let diagnostics = states.iter().map(|s| Diagnostics::of(s, p).unwrap()).collect();
        StateTrajectory { dt, states, diagnostics }
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(QuadraticCost::new(-1.0, 0.0, 1.0).is_err());
        assert!(QuadraticCost::new(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn zero_everything_costs_nothing() {
        let g = Grid2D::unit(8);
        let p = PhysicsParams::new(0.1, Kernel::default_for(g), Potential::double_well()).unwrap();
        let c = ControlTrajectory::zeros(g, 4, 0.1);
        let tr = simulate(
            &VectorField::zeros(g, VectorBc::NoSlip),
            &ScalarField::zeros(g, ScalarBc::NeumannZero),
            &c,
            &TimeScheme::new(0.1).unwrap(),
            &p,
        )
        .unwrap();
        assert_eq!(evaluate_cost(&tr, &c, &QuadraticCost::unit()).unwrap(), 0.0);
    }

    #[test]
    fn unit_phase_cost_is_half_t_area() {
        let g = Grid2D::new(8, 10, 2.0, 1.5).unwrap();
        let p = PhysicsParams::new(0.1, Kernel::default_for(g), Potential::double_well()).unwrap();
        let steps = 8;
        let dt = 0.5 / steps as f64;
        let c = ControlTrajectory::zeros(g, steps, dt);
        let tr = simulate(
            &VectorField::zeros(g, VectorBc::NoSlip),
            &ScalarField::constant(g, 1.0, ScalarBc::NeumannZero),
            &c,
            &TimeScheme::new(dt).unwrap(),
            &p,
        )
        .unwrap();
        let j = evaluate_cost(&tr, &c, &QuadraticCost::unit()).unwrap();
        assert!((j - 0.5 * 0.5 * 3.0).abs() < 1e-13);
    }

    #[test]
    fn matches_single_loop_oracle() {
        let g = Grid2D::unit(9);
        let p = PhysicsParams::new(0.1, Kernel::default_for(g), Potential::double_well()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dt = 0.03;
        let steps = 5;
        let states: Vec<State> = (0..=steps)
            .map(|n| {
                let mut f = || (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
                State {
                    u: VectorField { grid: g, x: f(), y: f(), bc: VectorBc::NoSlip },
                    phi: ScalarField { grid: g, values: f(), bc: ScalarBc::NeumannZero },
                    mu: ScalarField::zeros(g, ScalarBc::NeumannZero),
                    pi: ScalarField::zeros(g, ScalarBc::NeumannZero),
                    t: n as f64 * dt,
                }
            })
            .collect();
        let tr = trajectory_of(states, dt, &p);
        let c = ControlTrajectory::random_smooth(g, steps, dt, 1.0, 4);
        let cost = QuadraticCost::new(0.7, 1.3, 0.2).unwrap();
        let j = evaluate_cost(&tr, &c, &cost).unwrap();
        let area = g.cell_area();
        let mut want = 0.0;
        for n in 0..steps {
            let s = &tr.states[n];
            for k in 0..g.len() {
                want += dt
                    * area
                    * 0.5
                    * (0.7 * (s.u.x[k].powi(2) + s.u.y[k].powi(2))
                        + 1.3 * s.phi.values[k].powi(2)
                        + 0.2 * (c.values[n].x[k].powi(2) + c.values[n].y[k].powi(2)));
            }
        }
        assert!((j - want).abs() <= 1e-13 * want.abs());
    }

    #[test]
    fn quadratic_derivatives_are_consistent() {
        let g = Grid2D::unit(8);
        let cost = QuadraticCost::new(0.5, 2.0, 3.0).unwrap();
        let u = VectorField::from_fn(g, VectorBc::None, |x, y| (x, y * y));
        let v = VectorField::from_fn(g, VectorBc::None, |x, y| (y, -x));
        let eps = 1e-6;
        let fd = (cost.g(0.0, &u.add(&v.scaled(eps))) - cost.g(0.0, &u.add(&v.scaled(-eps)))) / (2.0 * eps);
        assert!((fd - cost.g_u(0.0, &u).inner(&v)).abs() < 1e-8);
        let fd = (cost.l(&u.add(&v.scaled(eps))) - cost.l(&u.add(&v.scaled(-eps)))) / (2.0 * eps);
        assert!((fd - cost.l_u(&u).inner(&v)).abs() < 1e-8);
        assert!((cost.l_uu(&u, &v) - 3.0 * v.norm_sq()).abs() < 1e-14);
        let m = cost.control_minimizer(&v, (-0.1, 0.1)).unwrap();
        assert!(m.max_abs() <= 0.1);
    }
}
