//! First-order IMEX time stepping of the controlled state system.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ChnsError, Result};
use crate::fields::solvers::{pcg, solve_separable, Op1D};
use crate::fields::{
    convect, convolve, face_gradient_sq, gradient, project_divfree, vector_face_gradient_sq, Grid2D, ScalarBc, ScalarField, VectorBc,
    VectorField,
};
use crate::physics::{chemical_potential, energy, PhysicsParams};

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: VectorField,
    pub phi: ScalarField,
    pub mu: ScalarField,
    pub pi: ScalarField,
    pub t: f64,
}

impl State {
    /// Initial state: projects `u0` and derives `mu`; pressure starts at zero.
    pub fn initial(u0: &VectorField, phi0: &ScalarField, params: &PhysicsParams) -> Result<Self> {
        u0.grid.check_same(&phi0.grid, "initial data")?;
        if !u0.is_finite() {
            return Err(ChnsError::NonFinite { step: 0, field: "u" });
        }
        if !phi0.is_finite() {
            return Err(ChnsError::NonFinite { step: 0, field: "phi" });
        }
        let u = project_divfree(u0)?.field;
        let phi = phi0.clone().with_bc(ScalarBc::NeumannZero);
        let mu = chemical_potential(&phi, params)?;
        let pi = ScalarField::zeros(phi.grid, ScalarBc::NeumannZero);
        Ok(Self { u, phi, mu, pi, t: 0.0 })
    }

    pub fn grid(&self) -> Grid2D {
        self.phi.grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeScheme {
    pub dt: f64,
    /// Stabilization shift `S` of the implicit diffusion.
    pub stabilization: f64,
    /// Bound on `|div u|` accepted after projection.
    pub projection_tol: f64,
    /// Relative residual of the phase-field solve.
    pub solve_tol: f64,
    /// Admissible range of the initial phase field.
    pub phi_range: (f64, f64),
    pub cfl_limit: f64,
}

impl TimeScheme {
    pub fn new(dt: f64) -> Result<Self> {
        let s = Self { dt, stabilization: 2.0, projection_tol: 1e-8, solve_tol: 1e-10, phi_range: (-1.5, 1.5), cfl_limit: 0.5 };
        s.validate()?;
        Ok(s)
    }

    pub fn with_stabilization(mut self, s: f64) -> Result<Self> {
        self.stabilization = s;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ChnsError::InvalidParameter { key: "time.dt".into(), reason: format!("must be positive, got {}", self.dt) });
        }
        if !(self.stabilization >= 0.0 && self.stabilization.is_finite()) {
            return Err(ChnsError::InvalidParameter {
                key: "time.stabilization".into(),
                reason: format!("must be nonnegative, got {}", self.stabilization),
            });
        }
        if !(self.solve_tol > 0.0 && self.projection_tol > 0.0) {
            return Err(ChnsError::InvalidParameter { key: "time.tolerance".into(), reason: "tolerances must be positive".into() });
        }
        Ok(())
    }

    pub(crate) fn max_iter(&self, g: &Grid2D) -> usize {
        10 * g.len()
    }
}

/// Piecewise-constant-in-time control: `values[n]` acts on step `n -> n+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrajectory {
    pub dt: f64,
    pub values: Vec<VectorField>,
    /// Componentwise box `[lo, hi]`; infinite bounds mean no constraint.
    pub bounds: (f64, f64),
}

impl ControlTrajectory {
    pub fn zeros(grid: Grid2D, steps: usize, dt: f64) -> Self {
        Self { dt, values: vec![VectorField::zeros(grid, VectorBc::None); steps], bounds: (f64::NEG_INFINITY, f64::INFINITY) }
    }

    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) || lo.is_nan() || hi.is_nan() {
            return Err(ChnsError::InvalidParameter { key: "control.box_min/box_max".into(), reason: format!("empty box [{lo}, {hi}]") });
        }
        self.bounds = (lo, hi);
        Ok(self)
    }

    /// Smooth random field per step: a few low Fourier modes with uniform
    /// coefficients in `[-amp, amp]`, independent across steps.
    pub fn random_smooth(grid: Grid2D, steps: usize, dt: f64, amp: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..steps)
            .map(|_| {
                let modes: Vec<(f64, f64, f64, f64)> = (0..4)
                    .map(|_| (rng.gen_range(-amp..amp), rng.gen_range(-amp..amp), rng.gen_range(0.5..2.5), rng.gen_range(0.5..2.5)))
                    .collect();
                let (lx, ly) = (grid.lx, grid.ly);
                VectorField::from_fn(grid, VectorBc::None, |x, y| {
                    let mut vx = 0.0;
                    let mut vy = 0.0;
                    for &(cx, cy, kx, ky) in &modes {
                        let s = (std::f64::consts::PI * kx * x / lx).sin() * (std::f64::consts::PI * ky * y / ly).cos();
                        let c = (std::f64::consts::PI * kx * x / lx).cos() * (std::f64::consts::PI * ky * y / ly).sin();
                        vx += cx * s;
                        vy += cy * c;
                    }
                    (vx / 2.0, vy / 2.0)
                })
            })
            .collect();
        Self { dt, values, bounds: (f64::NEG_INFINITY, f64::INFINITY) }
    }

    pub fn steps(&self) -> usize {
        self.values.len()
    }

    pub fn grid(&self) -> Option<Grid2D> {
        self.values.first().map(|v| v.grid)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.values.len()).map(|n| n as f64 * self.dt).collect()
    }

    pub fn clip(&self) -> Self {
        let (lo, hi) = self.bounds;
        Self { dt: self.dt, values: self.values.iter().map(|v| v.clamp(lo, hi)).collect(), bounds: self.bounds }
    }

    pub fn is_admissible(&self) -> bool {
        let (lo, hi) = self.bounds;
        self.values.iter().all(|v| v.x.iter().chain(&v.y).all(|&c| c >= lo && c <= hi))
    }

    /// Time-discrete `L2(0,T; L2)` inner product, left-endpoint rule.
    pub fn inner(&self, other: &ControlTrajectory) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a.inner(b)).sum::<f64>() * self.dt
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.max_abs()).fold(0.0, f64::max)
    }

    pub fn axpy(&mut self, s: f64, other: &ControlTrajectory) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            a.axpy(s, b);
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { dt: self.dt, values: self.values.iter().map(|v| v.scaled(s)).collect(), bounds: self.bounds }
    }

    pub fn sub(&self, other: &ControlTrajectory) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn add(&self, other: &ControlTrajectory) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub t: f64,
    pub energy: f64,
    pub mass: f64,
    pub grad_u_sq: f64,
    pub grad_mu_sq: f64,
}

impl Diagnostics {
    pub fn of(state: &State, params: &PhysicsParams) -> Result<Self> {
        Ok(Self {
            t: state.t,
            energy: energy(&state.u, &state.phi, params)?,
            mass: state.phi.integral(),
            grad_u_sq: vector_face_gradient_sq(&state.u),
            grad_mu_sq: face_gradient_sq(&state.mu),
        })
    }
}

#[derive(Debug, Clone)]
pub struct StateTrajectory {
    pub dt: f64,
    pub states: Vec<State>,
    pub diagnostics: Vec<Diagnostics>,
}

impl StateTrajectory {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn last_diag(&self) -> &Diagnostics {
        self.diagnostics.last().expect("nonempty trajectory")
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("nonempty trajectory")
    }

    /// Per-step energy residuals `|E(n+1) - E(n) + dt (nu |grad u|^2 + |grad mu|^2)(n+1)|`.
    pub fn energy_residuals(&self, nu: f64) -> Vec<f64> {
        self.diagnostics.windows(2).map(|w| (w[1].energy - w[0].energy + self.dt * (nu * w[1].grad_u_sq + w[1].grad_mu_sq)).abs()).collect()
    }
}

/// Solver for `(diag(w) - dt lap) z = b` with `w = 1/(a+S)`; the Laplacian
/// uses mirrored ghosts unless built with `with_bc`.
pub(crate) struct PhiOperator {
    grid: Grid2D,
    pub(crate) w: Vec<f64>,
    w_mean: f64,
    dt: f64,
    tol: f64,
    max_iter: usize,
    bc: ScalarBc,
}

impl PhiOperator {
    pub(crate) fn new(params: &PhysicsParams, scheme: &TimeScheme) -> Self {
        let a = params.a();
        let w: Vec<f64> = a.values.iter().map(|a| 1.0 / (a + scheme.stabilization)).collect();
        let w_mean = w.iter().sum::<f64>() / w.len() as f64;
        Self {
            grid: a.grid,
            w,
            w_mean,
            dt: scheme.dt,
            tol: scheme.solve_tol,
            max_iter: scheme.max_iter(&a.grid),
            bc: ScalarBc::NeumannZero,
        }
    }

    pub(crate) fn with_bc(mut self, bc: ScalarBc) -> Self {
        self.bc = bc;
        self
    }

    pub(crate) fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = x.iter().zip(&self.w).map(|(x, w)| x * w).collect();
        if self.bc == ScalarBc::NeumannZero {
            crate::fields::add_neumann_laplacian_flux(&mut out, x, &self.grid, -self.dt);
        } else {
            let f = ScalarField { grid: self.grid, values: x.to_vec(), bc: self.bc };
            out.iter_mut().zip(&crate::fields::laplacian(&f).values).for_each(|(o, l)| *o -= self.dt * l);
        }
        out
    }

    pub(crate) fn solve(&self, b: &[f64], x0: Option<Vec<f64>>) -> Result<Vec<f64>> {
        let g = self.grid;
        let (dt, wm) = (self.dt, self.w_mean);
        let op = if self.bc == ScalarBc::NeumannZero { Op1D::NeumannLap } else { Op1D::DirichletLap };
        let pre = move |r: &[f64]| solve_separable(&g, op, wm, -dt, r);
        let (x, _) = pcg(|x| self.apply(x), pre, b, x0, self.tol, self.max_iter)?;
        Ok(x)
    }
}

/// `(I/dt - nu lap_D)^{-1}` applied per component.
pub(crate) fn helmholtz_solve(v: &VectorField, dt: f64, nu: f64) -> VectorField {
    let g = v.grid;
    VectorField {
        grid: g,
        x: solve_separable(&g, Op1D::DirichletLap, 1.0 / dt, -nu, &v.x),
        y: solve_separable(&g, Op1D::DirichletLap, 1.0 / dt, -nu, &v.y),
        bc: VectorBc::NoSlip,
    }
}

/// `P (I/dt - nu lap_D)^{-1} P r`: gradient parts of the right-hand side are
/// removed before the viscous solve and once more after it. Returns the new
/// velocity and the pressure `phi1 + phi2/dt` of the two projections.
pub(crate) fn stokes_update(r: &VectorField, dt: f64, nu: f64) -> Result<(VectorField, ScalarField)> {
    let first = project_divfree(r)?;
    let second = project_divfree(&helmholtz_solve(&first.field, dt, nu))?;
    let mut pi = first.potential;
    pi.axpy(1.0 / dt, &second.potential);
    Ok((second.field, pi))
}

fn check_finite(step: usize, s: &State) -> Result<()> {
    if !s.phi.is_finite() {
        return Err(ChnsError::NonFinite { step, field: "phi" });
    }
    if !s.mu.is_finite() {
        return Err(ChnsError::NonFinite { step, field: "mu" });
    }
    if !s.u.is_finite() {
        return Err(ChnsError::NonFinite { step, field: "u" });
    }
    if !s.pi.is_finite() {
        return Err(ChnsError::NonFinite { step, field: "pi" });
    }
    Ok(())
}

/// One step `n -> n+1`. `forcing` is the body force at step `n`.
pub fn step(s: &State, control: &VectorField, scheme: &TimeScheme, params: &PhysicsParams, forcing: Option<&VectorField>) -> Result<State> {
    step_with(s, control, scheme, params, forcing, &PhiOperator::new(params, scheme))
}

pub(crate) fn step_with(
    s: &State,
    control: &VectorField,
    scheme: &TimeScheme,
    params: &PhysicsParams,
    forcing: Option<&VectorField>,
    op: &PhiOperator,
) -> Result<State> {
    let g = s.grid();
    g.check_same(&control.grid, "control")?;
    let dt = scheme.dt;
    let umax = s.u.max_abs();
    if dt * umax / g.hx().min(g.hy()) > scheme.cfl_limit {
        warn!("CFL number {:.3} exceeds {} at t = {}", dt * umax / g.hx().min(g.hy()), scheme.cfl_limit, s.t);
    }
    let sshift = scheme.stabilization;
    let pot = &params.potential;

    // phase field: implicit (a+S)-weighted diffusion, explicit rest
    let jphi = convolve(&params.kernel, &s.phi)?;
    let flux = s.u.mul_scalar(&s.phi).with_bc(VectorBc::NoSlip);
    let adv = crate::fields::divergence(&flux);
    let n = g.len();
    let mut e = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut guess = vec![0.0; n];
    for k in 0..n {
        let p = s.phi.values[k];
        e[k] = -jphi.values[k] + pot.d1(p) - sshift * p;
        rhs[k] = p - dt * adv.values[k] + e[k] * op.w[k];
        guess[k] = p / op.w[k] + e[k];
    }
    let z = op.solve(&rhs, Some(guess))?;
    let mut phi_new = s.phi.values.clone();
    crate::fields::add_neumann_laplacian_flux(&mut phi_new, &z, &g, dt);
    crate::fields::sub_noslip_divergence_flux(&mut phi_new, &flux, dt);
    let phi = ScalarField { grid: g, values: phi_new, bc: ScalarBc::NeumannZero };
    let mu = chemical_potential(&phi, params)?;

    // momentum: explicit convection and forces, implicit viscosity, projection
    let mut r = s.u.scaled(1.0 / dt);
    r.axpy(-1.0, &convect(&s.u, &s.u));
    r.axpy(1.0, &gradient(&phi).mul_scalar(&mu));
    r.axpy(1.0, control);
    if let Some(f) = forcing {
        r.axpy(1.0, f);
    }
    let (u, pi) = stokes_update(&r, dt, params.nu)?;
    Ok(State { u, phi, mu, pi, t: s.t + dt })
}

fn check_controls(u0: &VectorField, controls: &ControlTrajectory, scheme: &TimeScheme) -> Result<()> {
    if (controls.dt - scheme.dt).abs() > 1e-12 * scheme.dt {
        return Err(ChnsError::GridMismatch(format!("control dt {} vs scheme dt {}", controls.dt, scheme.dt)));
    }
    for v in &controls.values {
        u0.grid.check_same(&v.grid, "control")?;
        if !v.is_finite() {
            return Err(ChnsError::NonFinite { step: 0, field: "control" });
        }
    }
    Ok(())
}

/// Marches the state over the horizon of `controls`.
pub fn simulate(
    u0: &VectorField,
    phi0: &ScalarField,
    controls: &ControlTrajectory,
    scheme: &TimeScheme,
    params: &PhysicsParams,
) -> Result<StateTrajectory> {
    check_controls(u0, controls, scheme)?;
    let (lo, hi) = scheme.phi_range;
    if phi0.values.iter().any(|&p| p < lo || p > hi) {
        return Err(ChnsError::InvalidParameter { key: "init.phi0".into(), reason: format!("initial phase field leaves [{lo}, {hi}]") });
    }
    let op = PhiOperator::new(params, scheme);
    let mut s = State::initial(u0, phi0, params)?;
    check_finite(0, &s)?;
    let mut diagnostics = vec![Diagnostics::of(&s, params)?];
    let mut states = Vec::with_capacity(controls.steps() + 1);
    for (n, c) in controls.values.iter().enumerate() {
        let next = step_with(&s, c, scheme, params, params.forcing.at(n), &op)?;
        check_finite(n + 1, &next)?;
        let d = crate::fields::divergence(&next.u).max_abs();
        if d > scheme.projection_tol {
            warn!("divergence {d:.3e} after step {} exceeds projection tolerance", n + 1);
        }
        diagnostics.push(Diagnostics::of(&next, params)?);
        states.push(std::mem::replace(&mut s, next));
    }
    states.push(s);
    Ok(StateTrajectory { dt: scheme.dt, states, diagnostics })
}

/// Difference of two feasible triples `(u_z - u, phi_z - phi, U_z - U)`.
#[derive(Debug, Clone)]
pub struct FeasibleDifference {
    pub u: Vec<VectorField>,
    pub phi: Vec<ScalarField>,
    pub control: ControlTrajectory,
}

impl FeasibleDifference {
    pub fn between(base: &StateTrajectory, base_u: &ControlTrajectory, other: &StateTrajectory, other_u: &ControlTrajectory) -> Self {
        Self {
            u: other.states.iter().zip(&base.states).map(|(a, b)| a.u.sub(&b.u)).collect(),
            phi: other.states.iter().zip(&base.states).map(|(a, b)| a.phi.sub(&b.phi)).collect(),
            control: other_u.sub(base_u),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            u: self.u.iter().map(|v| v.scaled(s)).collect(),
            phi: self.phi.iter().map(|v| v.scaled(s)).collect(),
            control: self.control.scaled(s),
        }
    }

    /// `max(|u|, |phi|, |U|)` over the horizon.
    pub fn max_abs(&self) -> f64 {
        let a = self.u.iter().map(|v| v.max_abs()).fold(0.0, f64::max);
        let b = self.phi.iter().map(|v| v.max_abs()).fold(0.0, f64::max);
        a.max(b).max(self.control.max_abs())
    }

    /// Squared time-discrete `L2` norm of the triple.
    pub fn norm_sq(&self, dt: f64) -> f64 {
        let n = self.control.steps();
        let mut s = 0.0;
        for k in 0..n {
            s += self.u[k].norm_sq() + self.phi[k].norm_sq() + self.control.values[k].norm_sq();
        }
        s * dt
    }
}

/// Runs both controls and returns the feasible difference `perturbed - base`.
pub fn feasible_difference(
    base: &ControlTrajectory,
    perturbed: &ControlTrajectory,
    u0: &VectorField,
    phi0: &ScalarField,
    scheme: &TimeScheme,
    params: &PhysicsParams,
) -> Result<FeasibleDifference> {
    if !base.is_admissible() || !perturbed.is_admissible() {
        return Err(ChnsError::Rejected("feasible difference needs admissible controls".into()));
    }
    let a = simulate(u0, phi0, base, scheme, params)?;
    let b = simulate(u0, phi0, perturbed, scheme, params)?;
    Ok(FeasibleDifference::between(&a, base, &b, perturbed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{divergence, Kernel};
    use crate::physics::Potential;

    fn setup(n: usize) -> (Grid2D, PhysicsParams) {
        let g = Grid2D::unit(n);
        (g, PhysicsParams::new(0.1, Kernel::default_for(g), Potential::double_well()).unwrap())
    }

    fn smooth_phi(g: Grid2D) -> ScalarField {
        ScalarField::from_fn(g, ScalarBc::NeumannZero, |x, y| {
            0.2 + 0.6 * ((2.0 * std::f64::consts::PI * x).cos() * (std::f64::consts::PI * y).cos())
        })
    }

    fn smooth_u(g: Grid2D) -> VectorField {
        let psi = |x: f64, y: f64| (std::f64::consts::PI * x).sin().powi(2) * (std::f64::consts::PI * y).sin().powi(2);
        VectorField::from_fn(g, VectorBc::NoSlip, |x, y| {
            let h = 1e-6;
            ((psi(x, y + h) - psi(x, y - h)) / (2.0 * h), -(psi(x + h, y) - psi(x - h, y)) / (2.0 * h))
        })
    }

    #[test]
    fn pure_phase_is_stationary() {
        let (g, p) = setup(16);
        let scheme = TimeScheme::new(0.01).unwrap();
        for c in [1.0, -1.0] {
            let s =
                State::initial(&VectorField::zeros(g, VectorBc::NoSlip), &ScalarField::constant(g, c, ScalarBc::NeumannZero), &p).unwrap();
            let next = step(&s, &VectorField::zeros(g, VectorBc::None), &scheme, &p, None).unwrap();
            assert!(next.phi.sub(&s.phi).max_abs() <= 1e-13);
            assert!(next.u.max_abs() <= 1e-13);
        }
    }

    #[test]
    fn uniform_state_is_stationary() {
        let (g, p) = setup(12);
        let scheme = TimeScheme::new(0.01).unwrap();
        let s =
            State::initial(&VectorField::zeros(g, VectorBc::NoSlip), &ScalarField::constant(g, 0.3, ScalarBc::NeumannZero), &p).unwrap();
        let next = step(&s, &VectorField::zeros(g, VectorBc::None), &scheme, &p, None).unwrap();
        assert!(next.phi.sub(&s.phi).max_abs() <= 1e-12);
        assert!(next.u.max_abs() <= 1e-12);
    }

    #[test]
    fn zero_data_stays_zero() {
        let (g, p) = setup(12);
        let scheme = TimeScheme::new(0.01).unwrap();
        let controls = ControlTrajectory::zeros(g, 5, 0.01);
        let tr = simulate(&VectorField::zeros(g, VectorBc::NoSlip), &ScalarField::zeros(g, ScalarBc::NeumannZero), &controls, &scheme, &p)
            .unwrap();
        for s in &tr.states {
            assert_eq!(s.phi.max_abs(), 0.0);
            assert_eq!(s.u.max_abs(), 0.0);
        }
        for d in &tr.diagnostics {
            assert!((d.energy - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_is_conserved_and_velocity_solenoidal() {
        let (g, p) = setup(24);
        let scheme = TimeScheme::new(1.0 / 64.0).unwrap();
        let controls = ControlTrajectory::random_smooth(g, 12, scheme.dt, 1.0, 3);
        let tr = simulate(&smooth_u(g), &smooth_phi(g), &controls, &scheme, &p).unwrap();
        let m0 = tr.diagnostics[0].mass;
        for (s, d) in tr.states.iter().zip(&tr.diagnostics) {
            assert!((d.mass - m0).abs() <= 1e-12 * m0.abs(), "mass drift {}", d.mass - m0);
            assert!(divergence(&s.u).max_abs() <= scheme.projection_tol);
        }
    }

    #[test]
    fn energy_decays_without_forcing() {
        let (g, p) = setup(24);
        let scheme = TimeScheme::new(1.0 / 64.0).unwrap();
        let controls = ControlTrajectory::zeros(g, 16, scheme.dt);
        let tr = simulate(&smooth_u(g).scaled(0.5), &smooth_phi(g), &controls, &scheme, &p).unwrap();
        for w in tr.diagnostics.windows(2) {
            assert!(w[1].energy <= w[0].energy, "{} -> {}", w[0].energy, w[1].energy);
        }
    }

    #[test]
    fn first_order_in_time() {
        let (g, p) = setup(16);
        let t_end = 1.0 / 32.0;
        let run = |m: usize| {
            let dt = t_end / m as f64;
            let scheme = TimeScheme::new(dt).unwrap();
            let c = ControlTrajectory::zeros(g, m, dt);
            simulate(&smooth_u(g), &smooth_phi(g), &c, &scheme, &p).unwrap().last().clone()
        };
        let reference = run(16 * 64);
        let errs: Vec<f64> = [16usize, 32, 64]
            .iter()
            .map(|&m| {
                let s = run(m);
                s.phi.sub(&reference.phi).max_abs().max(s.u.sub(&reference.u).max_abs())
            })
            .collect();
        let order = (errs[0] / errs[2]).ln() / 4f64.ln();
        assert!((order - 1.0).abs() <= 0.15, "order {order}, errors {errs:?}");
    }

    #[test]
    fn rejects_out_of_range_phase_field() {
        let (g, p) = setup(8);
        let scheme = TimeScheme::new(0.1).unwrap();
        let c = ControlTrajectory::zeros(g, 1, 0.1);
        let phi = ScalarField::constant(g, 1.6, ScalarBc::NeumannZero);
        assert!(simulate(&VectorField::zeros(g, VectorBc::NoSlip), &phi, &c, &scheme, &p).is_err());
    }

    #[test]
    fn feasible_difference_trivial_and_antisymmetric() {
        let (g, p) = setup(12);
        let scheme = TimeScheme::new(0.05).unwrap();
        let a = ControlTrajectory::zeros(g, 4, 0.05);
        let b = ControlTrajectory::random_smooth(g, 4, 0.05, 1.0, 1);
        let (u0, phi0) = (smooth_u(g), smooth_phi(g));
        let z = feasible_difference(&a, &a, &u0, &phi0, &scheme, &p).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        let ab = feasible_difference(&a, &b, &u0, &phi0, &scheme, &p).unwrap();
        let ba = feasible_difference(&b, &a, &u0, &phi0, &scheme, &p).unwrap();
        for (x, y) in ab.phi.iter().zip(&ba.phi) {
            assert!(x.add(y).max_abs() <= 1e-12);
        }
        for (x, y) in ab.u.iter().zip(&ba.u) {
            assert!(x.add(y).max_abs() <= 1e-12);
        }
    }
}
