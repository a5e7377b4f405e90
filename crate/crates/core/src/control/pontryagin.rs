use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CostSpec;
use crate::error::Result;
use crate::fields::{ScalarField, VectorBc, VectorField};
use crate::forward::ControlTrajectory;
use crate::physics::{n1_n2, PhysicsParams};
use crate::sensitivity::AdjointTrajectory;

/// Distance of `U` from the pointwise minimizer of `l(W) + (p, W)` over the
/// box, `max_n |U^n - argmin|_inf`. Falls back to the sampled residual when
/// the cost has no closed-form minimizer.
pub fn pontryagin_residual(controls: &ControlTrajectory, adj: &AdjointTrajectory, cost: &dyn CostSpec) -> f64 {
    let mut r = 0.0f64;
    for (n, u) in controls.values.iter().enumerate() {
        match cost.control_minimizer(&adj.states[n].p, controls.bounds) {
            Some(w) => r = r.max(u.sub(&w).max_abs()),
            None => return pontryagin_residual_sampled(controls, adj, cost, 64, 0),
        }
    }
    r
}

/// `max_n max(0, l(U) + (p, U) - min_W [l(W) + (p, W)])` over `samples`
/// random admissible `W` per step.
pub fn pontryagin_residual_sampled(
    controls: &ControlTrajectory,
    adj: &AdjointTrajectory,
    cost: &dyn CostSpec,
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = controls.bounds;
    let mut r = 0.0f64;
    for (n, u) in controls.values.iter().enumerate() {
        let p = &adj.states[n].p;
        let at = |w: &VectorField| cost.l(w) + p.inner(w);
        let base = at(u);
        let scale = u.max_abs().max(p.max_abs()).max(1.0);
        for _ in 0..samples {
            let spread = scale * rng.gen_range(0.01..1.0);
            let mut draw = || rng.gen_range(-spread..spread);
            let mut w = u.clone();
            for v in w.x.iter_mut().chain(w.y.iter_mut()) {
                *v += draw();
            }
            let w = if lo.is_finite() || hi.is_finite() { w.clamp(lo, hi) } else { w };
            r = r.max(base - at(&w));
        }
    }
    r.max(0.0)
}

/// `H = g + h + l + (p, N1) + (eta, N2)` at time `t`.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian(
    t: f64,
    u: &VectorField,
    phi: &ScalarField,
    control: &VectorField,
    pi: &ScalarField,
    p: &VectorField,
    eta: &ScalarField,
    cost: &dyn CostSpec,
    params: &PhysicsParams,
) -> Result<f64> {
    let (n1, n2) = n1_n2(u, phi, control, pi, params)?;
    let mut control = control.clone();
    control.bc = VectorBc::None;
    Ok(cost.g(t, u) + cost.h(t, phi) + cost.l(&control) + p.inner(&n1) + eta.inner(&n2))
}
