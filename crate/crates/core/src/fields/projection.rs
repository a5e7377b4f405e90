use super::solvers::{solve_separable, Op1D};
use super::{divergence, gradient, ScalarBc, ScalarField, VectorBc, VectorField};
use crate::error::{ChnsError, Result};

/// Divergence-free part of a field and the zero-mean potential removed from it.
#[derive(Debug, Clone)]
pub struct Projection {
    pub field: VectorField,
    pub potential: ScalarField,
}

/// Discrete Helmholtz-Hodge projection `v - grad(phi)` where `phi` solves
/// `div grad phi = div v` with the same centered operators used everywhere
/// else. The result is exactly divergence-free up to roundoff, and the map
/// is an orthogonal projector in the node inner product.
pub fn project_divfree(v: &VectorField) -> Result<Projection> {
    let g = v.grid;
    let v = v.clone().with_bc(VectorBc::NoSlip);
    let d = divergence(&v);
    let phi = solve_separable(&g, Op1D::WideNeumann, 0.0, 1.0, &d.values);
    let mut potential = ScalarField { grid: g, values: phi, bc: ScalarBc::NeumannZero };
    if !potential.is_finite() {
        return Err(ChnsError::SolverDivergence { iterations: 0, residual: f64::NAN });
    }
    potential.subtract_mean();
    let mut field = v;
    field.axpy(-1.0, &gradient(&potential));
    Ok(Projection { field, potential })
}
