//! Directional derivatives of the solution map (tangent march) and gradients
//! of the reduced cost (backward adjoint march).
//!
//! Both marches are derived from the forward step itself, so the tangent is
//! the exact derivative of `forward::step` and the adjoint is its exact
//! transpose in the node inner product.

use crate::control::CostSpec;
use crate::error::{ChnsError, Result};
use crate::fields::{convect, convolve, divergence, gradient, laplacian, project_divfree, ScalarBc, ScalarField, VectorBc, VectorField};
use crate::forward::{helmholtz_solve, stokes_update, ControlTrajectory, PhiOperator, StateTrajectory, TimeScheme};
use crate::physics::{Forcing, PhysicsParams};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedState {
    pub w: VectorField,
    pub psi: ScalarField,
    pub mu_tilde: ScalarField,
}

/// `mu~ = a psi - J*psi + F''(phi) psi`
fn linearized_mu(psi: &ScalarField, phi: &ScalarField, params: &PhysicsParams) -> Result<ScalarField> {
    let j = convolve(&params.kernel, psi)?;
    let a = params.a();
    let values = (0..psi.values.len()).map(|k| (a.values[k] + params.potential.d2(phi.values[k])) * psi.values[k] - j.values[k]).collect();
    Ok(ScalarField { grid: psi.grid, values, bc: ScalarBc::NeumannZero })
}

fn tangent_step(
    base: &StateTrajectory,
    n: usize,
    cur: &LinearizedState,
    du: &VectorField,
    df: Option<&VectorField>,
    scheme: &TimeScheme,
    params: &PhysicsParams,
    op: &PhiOperator,
) -> Result<LinearizedState> {
    let s0 = &base.states[n];
    let s1 = &base.states[n + 1];
    let g = s0.grid();
    let dt = scheme.dt;
    let pot = &params.potential;

    let mut flux = cur.w.mul_scalar(&s0.phi);
    flux.axpy(1.0, &s0.u.mul_scalar(&cur.psi));
    let flux = flux.with_bc(VectorBc::NoSlip);
    let adv = divergence(&flux);
    let jpsi = convolve(&params.kernel, &cur.psi)?;
    let n_nodes = g.len();
    let mut rhs = vec![0.0; n_nodes];
    for k in 0..n_nodes {
        let p = cur.psi.values[k];
        let de = -jpsi.values[k] + (pot.d2(s0.phi.values[k]) - scheme.stabilization) * p;
        rhs[k] = p - dt * adv.values[k] + de * op.w[k];
    }
    let z = op.solve(&rhs, None)?;
    let mut psi = cur.psi.values.clone();
    crate::fields::add_neumann_laplacian_flux(&mut psi, &z, &g, dt);
    crate::fields::sub_noslip_divergence_flux(&mut psi, &flux, dt);
    let psi = ScalarField { grid: g, values: psi, bc: ScalarBc::NeumannZero };
    let mu_tilde = linearized_mu(&psi, &s1.phi, params)?;

    let w = cur.w.clone().with_bc(VectorBc::NoSlip);
    let mut r = w.scaled(1.0 / dt);
    r.axpy(-1.0, &convect(&w, &s0.u));
    r.axpy(-1.0, &convect(&s0.u, &w));
    r.axpy(1.0, &gradient(&s1.phi).mul_scalar(&mu_tilde));
    r.axpy(1.0, &gradient(&psi).mul_scalar(&s1.mu));
    r.axpy(1.0, du);
    if let Some(f) = df {
        r.axpy(1.0, f);
    }
    let (w, _) = stokes_update(&r, dt, params.nu)?;
    Ok(LinearizedState { w, psi, mu_tilde })
}

/// Tangent march along `base` for initial perturbations `(w0, psi0)`, control
/// perturbation `du` and forcing perturbation `df`.
pub fn solve_linearized(
    base: &StateTrajectory,
    w0: &VectorField,
    psi0: &ScalarField,
    du: &ControlTrajectory,
    df: &Forcing,
    scheme: &TimeScheme,
    params: &PhysicsParams,
) -> Result<Vec<LinearizedState>> {
    if du.steps() != base.steps() {
        return Err(ChnsError::GridMismatch(format!("control has {} steps, trajectory {}", du.steps(), base.steps())));
    }
    let g = base.states[0].grid();
    let op = PhiOperator::new(params, scheme);
    let psi = psi0.clone().with_bc(ScalarBc::NeumannZero);
    let first = LinearizedState { w: project_divfree(w0)?.field, mu_tilde: linearized_mu(&psi, &base.states[0].phi, params)?, psi };
    let mut out = Vec::with_capacity(base.steps() + 1);
    out.push(first);
    for n in 0..base.steps() {
        g.check_same(&du.values[n].grid, "control perturbation")?;
        let next = tangent_step(base, n, &out[n], &du.values[n], df.at(n), scheme, params, &op)?;
        if !(next.w.is_finite() && next.psi.is_finite()) {
            return Err(ChnsError::NonFinite { step: n + 1, field: "linearized state" });
        }
        out.push(next);
    }
    Ok(out)
}

/// Boundary rule used for the phase adjoint `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EtaBoundary {
    /// Mirrored ghosts: the exact transpose of the forward scheme.
    #[default]
    Neumann,
    /// Negated ghosts in every Laplacian and gradient acting on `eta`.
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointState {
    pub p: VectorField,
    pub eta: ScalarField,
    pub q: ScalarField,
}

#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    pub dt: f64,
    /// Levels `0..=N`; level `n` holds the multipliers of step `n -> n+1`,
    /// level `N` is the zero terminal state.
    pub states: Vec<AdjointState>,
}

impl AdjointTrajectory {
    pub fn p(&self) -> Vec<&VectorField> {
        self.states.iter().map(|s| &s.p).collect()
    }
}

/// `(d/du [(u.grad)u])^T rho` for the convection stencil of the forward step:
/// `sum_c rho_c grad_D u_c - div_R(u rho_c)` per component.
fn convection_transpose(u: &VectorField, rho: &VectorField) -> VectorField {
    let g = u.grid;
    let u = u.clone().with_bc(VectorBc::NoSlip);
    let ux = gradient(&u.component(0));
    let uy = gradient(&u.component(1));
    let mut out = VectorField::zeros(g, VectorBc::None);
    for k in 0..g.len() {
        out.x[k] = rho.x[k] * ux.x[k] + rho.y[k] * uy.x[k];
        out.y[k] = rho.x[k] * ux.y[k] + rho.y[k] * uy.y[k];
    }
    for (c, dst) in [(0usize, &mut out.x), (1usize, &mut out.y)] {
        let rc = if c == 0 { &rho.x } else { &rho.y };
        let field = VectorField {
            grid: g,
            x: u.x.iter().zip(rc).map(|(a, b)| a * b).collect(),
            y: u.y.iter().zip(rc).map(|(a, b)| a * b).collect(),
            bc: VectorBc::Reflect,
        };
        let d = divergence(&field);
        dst.iter_mut().zip(&d.values).for_each(|(o, v)| *o -= v);
    }
    out
}

/// Backward march for the multipliers of the reduced cost. The gradient of
/// the reduced cost with respect to `U^n` in the time-discrete `L2` product
/// is `l_U(U^n) + p^n`.
pub fn solve_adjoint(
    base: &StateTrajectory,
    cost: &dyn CostSpec,
    scheme: &TimeScheme,
    params: &PhysicsParams,
) -> Result<AdjointTrajectory> {
    solve_adjoint_with(base, cost, scheme, params, EtaBoundary::Neumann)
}

pub fn solve_adjoint_with(
    base: &StateTrajectory,
    cost: &dyn CostSpec,
    scheme: &TimeScheme,
    params: &PhysicsParams,
    eta_bc: EtaBoundary,
) -> Result<AdjointTrajectory> {
    let nsteps = base.steps();
    let g = base.states[0].grid();
    let dt = scheme.dt;
    let bc = match eta_bc {
        EtaBoundary::Neumann => ScalarBc::NeumannZero,
        EtaBoundary::Dirichlet => ScalarBc::DirichletZero,
    };
    let op = PhiOperator::new(params, scheme).with_bc(bc);
    let a = params.a();
    let pot = &params.potential;
    let zero = AdjointState {
        p: VectorField::zeros(g, VectorBc::NoSlip),
        eta: ScalarField::zeros(g, bc),
        q: ScalarField::zeros(g, ScalarBc::NeumannZero),
    };
    let mut states = vec![zero.clone(); nsteps + 1];
    // multipliers of (u, phi) at level n+1
    let mut lam_u = VectorField::zeros(g, VectorBc::NoSlip);
    let mut lam_phi = ScalarField::zeros(g, bc);
    for n in (0..nsteps).rev() {
        let s0 = &base.states[n];
        let s1 = &base.states[n + 1];

        // momentum: rho = P H^{-1} P lam_u, the multiplier of the right-hand side
        let first = project_divfree(&lam_u)?;
        let second = project_divfree(&helmholtz_solve(&first.field, dt, params.nu))?;
        let rho = second.field;
        let mut q = first.potential.scaled(1.0 / dt);
        q.axpy(1.0 / (dt * dt), &second.potential);

        // capillary force mu grad(phi) at level n+1
        let s = rho.dot_field(&gradient(&s1.phi)).with_bc(ScalarBc::NeumannZero);
        let js = convolve(&params.kernel, &s)?;
        let back = divergence(&rho.mul_scalar(&s1.mu).with_bc(VectorBc::NoSlip));
        let mut beta = lam_phi.clone();
        for k in 0..g.len() {
            beta.values[k] += (a.values[k] + pot.d2(s1.phi.values[k])) * s.values[k] - js.values[k] - back.values[k];
        }
        beta.bc = bc;

        // phase-field solve
        let lap_beta = laplacian(&beta);
        let rhs: Vec<f64> = lap_beta.values.iter().map(|v| dt * v).collect();
        let y = op.solve(&rhs, None)?;
        let eta = ScalarField { grid: g, values: beta.values.iter().zip(&y).map(|(b, y)| b + y).collect(), bc };
        let m = ScalarField { grid: g, values: y.iter().zip(&op.w).map(|(y, w)| y * w).collect(), bc };
        let geta = gradient(&eta);

        // multipliers at level n
        let jm = convolve(&params.kernel, &m)?;
        let hphi = cost.h_phi(s0.t, &s0.phi);
        let mut next_phi = eta.clone();
        let udg = s0.u.dot_field(&geta);
        for k in 0..g.len() {
            next_phi.values[k] +=
                dt * hphi.values[k] + dt * udg.values[k] - jm.values[k] + (pot.d2(s0.phi.values[k]) - scheme.stabilization) * m.values[k];
        }
        let mut next_u = rho.scaled(1.0 / dt);
        next_u.axpy(-1.0, &convection_transpose(&s0.u, &rho));
        next_u.axpy(dt, &geta.mul_scalar(&s0.phi));
        next_u.axpy(dt, &cost.g_u(s0.t, &s0.u));
        next_u.bc = VectorBc::NoSlip;

        if !(rho.is_finite() && eta.is_finite() && next_u.is_finite() && next_phi.is_finite()) {
            return Err(ChnsError::NonFinite { step: n, field: "adjoint" });
        }
        q.subtract_mean();
        states[n] = AdjointState { p: rho.scaled(1.0 / dt), eta, q };
        lam_u = next_u;
        lam_phi = next_phi;
    }
    Ok(AdjointTrajectory { dt, states })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointRegularity {
    pub p: f64,
    pub grad_p: f64,
    pub eta: f64,
    pub grad_eta: f64,
    pub lap_eta: f64,
}

/// Sup-in-time of `|p|`, `|grad p|`, `|eta|`, `|grad eta|`, `|lap eta|` (L2 norms).
pub fn adjoint_regularity_report(adj: &AdjointTrajectory) -> AdjointRegularity {
    let mut r = AdjointRegularity { p: 0.0, grad_p: 0.0, eta: 0.0, grad_eta: 0.0, lap_eta: 0.0 };
    for s in &adj.states {
        r.p = r.p.max(s.p.norm());
        let gp = crate::fields::vector_face_gradient_sq(&s.p.clone().with_bc(VectorBc::NoSlip));
        r.grad_p = r.grad_p.max(gp.max(0.0).sqrt());
        r.eta = r.eta.max(s.eta.norm());
        r.grad_eta = r.grad_eta.max(crate::fields::face_gradient_sq(&s.eta).max(0.0).sqrt());
        r.lap_eta = r.lap_eta.max(laplacian(&s.eta).norm());
    }
    r
}

/// `sum_n dt [(g_u(u^n), w^n) + (h_phi(phi^n), psi^n)]` for `n < N`: the
/// source pairing on the state side of the duality identity.
pub fn source_pairing(base: &StateTrajectory, lin: &[LinearizedState], cost: &dyn CostSpec) -> f64 {
    let dt = base.dt;
    (0..base.steps())
        .map(|n| {
            let s = &base.states[n];
            cost.g_u(s.t, &s.u).inner(&lin[n].w) + cost.h_phi(s.t, &s.phi).inner(&lin[n].psi)
        })
        .sum::<f64>()
        * dt
}
