//! Potential, chemical potential, capillary force, free energy and the
//! runtime check of the kernel/potential hypotheses.

use std::fmt;
use std::sync::Arc;

use crate::error::{ChnsError, Result};
use crate::fields::{convect, convolve, gradient, laplacian, vector_laplacian, Kernel, ScalarBc, ScalarField, VectorBc, VectorField};

type Scalar1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Bulk free-energy density `F` with its first three derivatives.
#[derive(Clone)]
pub struct Potential {
    pub name: String,
    f: Scalar1,
    f1: Scalar1,
    f2: Scalar1,
    f3: Option<Scalar1>,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential").field("name", &self.name).field("has_f3", &self.f3.is_some()).finish()
    }
}

impl Potential {
    /// `F(s) = (s^2 - 1)^2`
    pub fn double_well() -> Self {
        Self {
            name: "double-well".into(),
            f: Arc::new(|s| (s * s - 1.0) * (s * s - 1.0)),
            f1: Arc::new(|s| 4.0 * s * s * s - 4.0 * s),
            f2: Arc::new(|s| 12.0 * s * s - 4.0),
            f3: Some(Arc::new(|s| 24.0 * s)),
        }
    }

    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f2: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f3: Option<Scalar1>,
    ) -> Self {
        Self { name: name.into(), f: Arc::new(f), f1: Arc::new(f1), f2: Arc::new(f2), f3 }
    }

    /// Same potential with the third derivative replaced.
    pub fn with_third(mut self, f3: Option<Scalar1>) -> Self {
        self.f3 = f3;
        self
    }

    #[inline]
    pub fn f(&self, s: f64) -> f64 {
        (self.f)(s)
    }

    #[inline]
    pub fn d1(&self, s: f64) -> f64 {
        (self.f1)(s)
    }

    #[inline]
    pub fn d2(&self, s: f64) -> f64 {
        (self.f2)(s)
    }

    pub fn d3(&self, s: f64) -> Result<f64> {
        self.f3.as_ref().map(|f| f(s)).ok_or(ChnsError::MissingThirdDerivative)
    }

    pub fn has_third(&self) -> bool {
        self.f3.is_some()
    }
}

/// Body forcing `f` in the momentum equation, indexed by time step.
#[derive(Debug, Clone, Default)]
pub enum Forcing {
    #[default]
    Zero,
    Steady(VectorField),
    Sequence(Vec<VectorField>),
}

impl Forcing {
    /// Forcing at step `n`; `None` means zero. A sequence shorter than the
    /// horizon is zero afterwards.
    pub fn at(&self, n: usize) -> Option<&VectorField> {
        match self {
            Forcing::Zero => None,
            Forcing::Steady(f) => Some(f),
            Forcing::Sequence(v) => v.get(n),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhysicsParams {
    pub nu: f64,
    pub kernel: Kernel,
    pub potential: Potential,
    pub forcing: Forcing,
}

impl PhysicsParams {
    pub fn new(nu: f64, kernel: Kernel, potential: Potential) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(ChnsError::InvalidParameter { key: "physics.nu".into(), reason: format!("viscosity must be positive, got {nu}") });
        }
        Ok(Self { nu, kernel, potential, forcing: Forcing::Zero })
    }

    pub fn with_forcing(mut self, forcing: Forcing) -> Self {
        self.forcing = forcing;
        self
    }

    pub fn a(&self) -> &ScalarField {
        self.kernel.a()
    }
}

/// `mu = a phi - J*phi + F'(phi)`, tagged with zero normal derivative.
pub fn chemical_potential(phi: &ScalarField, params: &PhysicsParams) -> Result<ScalarField> {
    let jphi = convolve(&params.kernel, phi)?;
    let a = params.a();
    let values = (0..phi.values.len()).map(|k| a.values[k] * phi.values[k] - jphi.values[k] + params.potential.d1(phi.values[k])).collect();
    Ok(ScalarField { grid: phi.grid, values, bc: ScalarBc::NeumannZero })
}

/// Capillary force `mu grad(phi)`.
pub fn korteweg_force(mu: &ScalarField, phi: &ScalarField) -> VectorField {
    gradient(phi).mul_scalar(mu).with_bc(VectorBc::None)
}

/// Free energy `1/2 |u|^2 + 1/4 sum J(x-y)(phi(x)-phi(y))^2 + int F(phi)`,
/// with the double sum written as `1/2 (a phi, phi) - 1/2 (phi, J*phi)`.
pub fn energy(u: &VectorField, phi: &ScalarField, params: &PhysicsParams) -> Result<f64> {
    u.grid.check_same(&phi.grid, "energy")?;
    let jphi = convolve(&params.kernel, phi)?;
    let a = params.a();
    let n = phi.values.len();
    let mut terms = Vec::with_capacity(n);
    for k in 0..n {
        let p = phi.values[k];
        terms.push(0.5 * a.values[k] * p * p - 0.5 * p * jphi.values[k] + params.potential.f(p));
    }
    let bulk = crate::fields::compensated_sum(&terms) * phi.grid.cell_area();
    Ok(0.5 * u.norm_sq() + bulk)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// `min F''(s) + a(x)` over sampled `s` and all nodes.
    pub c0_estimate: f64,
    pub min_f2: f64,
    pub min_a: f64,
    pub a_nonnegative: bool,
    pub kernel_symmetric: bool,
    /// Discrete `L1` norms of `J` and `grad J`.
    pub kernel_l1: f64,
    pub kernel_grad_l1: f64,
    pub s_range: (f64, f64),
    /// Coercivity constants `(C7, C8)` of the control cost, when known.
    pub coercivity: Option<(f64, f64)>,
    pub pass: bool,
}

impl AssumptionReport {
    pub fn with_coercivity(mut self, c7: f64, c8: f64) -> Self {
        self.coercivity = Some((c7, c8));
        self.pass = self.pass && c7 > 0.0;
        self
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "C0 estimate      {:.6e}", self.c0_estimate)?;
        writeln!(f, "min F'' on [{}, {}] {:.6e}", self.s_range.0, self.s_range.1, self.min_f2)?;
        writeln!(f, "min a            {:.6e}", self.min_a)?;
        writeln!(f, "a >= 0           {}", self.a_nonnegative)?;
        writeln!(f, "J symmetric      {}", self.kernel_symmetric)?;
        writeln!(f, "|J|_1, |grad J|_1 {:.6e} {:.6e}", self.kernel_l1, self.kernel_grad_l1)?;
        if let Some((c7, c8)) = self.coercivity {
            writeln!(f, "C7, C8           {c7:.6e} {c8:.6e}")?;
        }
        write!(f, "pass             {}", self.pass)
    }
}

const S_SAMPLES: usize = 2001;

/// Samples `F''` on `s_range` and the kernel mass on the grid.
pub fn validate_assumptions(params: &PhysicsParams, s_range: (f64, f64)) -> Result<AssumptionReport> {
    let (lo, hi) = s_range;
    if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
        return Err(ChnsError::InvalidParameter { key: "s_range".into(), reason: format!("empty or non-finite interval [{lo}, {hi}]") });
    }
    let min_f2 = (0..S_SAMPLES)
        .map(|k| lo + (hi - lo) * k as f64 / (S_SAMPLES - 1) as f64)
        .map(|s| params.potential.d2(s))
        .fold(f64::INFINITY, f64::min);
    let a = params.a();
    let min_a = a.min();
    let (kernel_l1, kernel_grad_l1) = params.kernel.l1_norms();
    let c0_estimate = min_f2 + min_a;
    let a_nonnegative = min_a >= 0.0;
    let kernel_symmetric = params.kernel.is_symmetric();
    Ok(AssumptionReport {
        c0_estimate,
        min_f2,
        min_a,
        a_nonnegative,
        kernel_symmetric,
        kernel_l1,
        kernel_grad_l1,
        s_range,
        coercivity: None,
        pass: c0_estimate > 0.0 && a_nonnegative && kernel_symmetric,
    })
}

/// Right-hand sides of the state equations, as used by the Hamiltonian:
///
/// `N1 = nu lap u - (u.grad)u - grad pi - (J*phi) grad phi - grad(a) phi^2/2 + U`
/// `N2 = -u.grad phi + lap(a phi - J*phi + F'(phi))`
pub fn n1_n2(
    u: &VectorField,
    phi: &ScalarField,
    control: &VectorField,
    pi: &ScalarField,
    params: &PhysicsParams,
) -> Result<(VectorField, ScalarField)> {
    let u = u.clone().with_bc(VectorBc::NoSlip);
    let phi = phi.clone().with_bc(ScalarBc::NeumannZero);
    let pi = pi.clone().with_bc(ScalarBc::NeumannZero);
    let gphi = gradient(&phi);
    let jphi = convolve(&params.kernel, &phi)?;
    let ga = gradient(params.a());
    let mut n1 = vector_laplacian(&u).scaled(params.nu);
    n1.axpy(-1.0, &convect(&u, &u));
    n1.axpy(-1.0, &gradient(&pi));
    n1.axpy(-1.0, &gphi.mul_scalar(&jphi));
    n1.axpy(-0.5, &ga.mul_scalar(&phi.mul(&phi)));
    n1.axpy(1.0, control);
    n1.bc = VectorBc::None;
    let mu = chemical_potential(&phi, params)?;
    let mut n2 = laplacian(&mu);
    n2.axpy(-1.0, &u.dot_field(&gphi));
    n2.bc = ScalarBc::None;
    Ok((n1, n2))
}
