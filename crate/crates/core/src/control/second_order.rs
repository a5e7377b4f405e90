use rayon::prelude::*;

use super::{CostSpec, GradientEval, Problem};
use crate::error::{ChnsError, Result};
use crate::fields::{convect, convolve, gradient, laplacian, ScalarBc, VectorBc};
use crate::forward::{ControlTrajectory, FeasibleDifference};
use crate::physics::PhysicsParams;

/// Discretization of the nonlinear coupling terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FormVariant {
    /// `-2 ((u.grad)u + grad(a) phi^2/2 + (J*phi) grad phi, p)`, the capillary
    /// part written after integration by parts.
    #[default]
    Continuous,
    /// Second derivative of the discrete capillary force `mu grad phi` as the
    /// forward step evaluates it.
    Discrete,
}

/// One feasible direction and the sample points for `theta_1..theta_4`.
#[derive(Debug, Clone)]
pub struct SecondOrderProbe {
    pub direction: FeasibleDifference,
    pub thetas: Vec<f64>,
}

impl SecondOrderProbe {
    pub fn new(direction: FeasibleDifference) -> Self {
        Self { direction, thetas: vec![0.0, 0.5, 1.0] }
    }

    pub fn with_thetas(mut self, thetas: Vec<f64>) -> Result<Self> {
        if thetas.is_empty() || thetas.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(ChnsError::InvalidParameter { key: "probe.thetas".into(), reason: "need values in [0, 1]".into() });
        }
        self.thetas = thetas;
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormValues {
    /// `((theta_1, theta_2, theta_3, theta_4), value)`.
    pub tuples: Vec<([f64; 4], f64)>,
    pub min: f64,
    pub argmin: [f64; 4],
    /// Convection and capillary term.
    pub convective: f64,
    /// Advection term against `eta`.
    pub advective: f64,
    /// Third-derivative term for each `theta_4`.
    pub third_order: Vec<(f64, f64)>,
    /// Squared norm of the direction.
    pub scale: f64,
}

/// Evaluates the second-order form on `probe` at the candidate.
pub fn second_order_form(
    probe: &SecondOrderProbe,
    candidate: &GradientEval,
    cost: &dyn CostSpec,
    params: &PhysicsParams,
    variant: FormVariant,
) -> Result<FormValues> {
    let base = &candidate.trajectory;
    let adj = &candidate.adjoint;
    let d = &probe.direction;
    let steps = candidate.controls.steps();
    if d.control.steps() != steps || d.phi.len() != steps + 1 || d.u.len() != steps + 1 {
        return Err(ChnsError::GridMismatch("probe horizon differs from candidate".into()));
    }
    if !params.potential.has_third() {
        return Err(ChnsError::MissingThirdDerivative);
    }
    let dt = base.dt;
    let pot = &params.potential;
    let a = params.a();
    let ga = gradient(a);

    let mut convective = 0.0;
    let mut advective = 0.0;
    let mut laps = Vec::with_capacity(steps);
    let mut korteweg_weights = Vec::with_capacity(steps);
    for n in 0..steps {
        let p = &adj.states[n].p;
        let eta = &adj.states[n].eta;
        let du = d.u[n].clone().with_bc(VectorBc::NoSlip);
        let dphi = d.phi[n].clone().with_bc(ScalarBc::NeumannZero);
        let dnext = d.phi[n + 1].clone().with_bc(ScalarBc::NeumannZero);
        let gnext = gradient(&dnext);
        let jnext = convolve(&params.kernel, &dnext)?;
        let mut t4 = -2.0 * p.inner(&convect(&du, &du));
        match variant {
            FormVariant::Continuous => {
                let mut v = ga.mul_scalar(&dnext.mul(&dnext));
                v.scale(0.5);
                v.axpy(1.0, &gnext.mul_scalar(&jnext));
                t4 -= 2.0 * p.inner(&v);
                korteweg_weights.push(None);
            }
            FormVariant::Discrete => {
                let phi1 = &base.states[n + 1].phi;
                let mut dmu = dnext.clone();
                for k in 0..dmu.values.len() {
                    let x = dnext.values[k];
                    dmu.values[k] = (a.values[k] + pot.d2(phi1.values[k])) * x - jnext.values[k];
                }
                t4 += 2.0 * p.inner(&gnext.mul_scalar(&dmu));
                korteweg_weights.push(Some(p.dot_field(&gradient(phi1))));
            }
        }
        let flux = du.mul_scalar(&dphi).with_bc(VectorBc::NoSlip);
        let t5 = -2.0 * eta.inner(&crate::fields::divergence(&flux));
        convective += dt * t4;
        advective += dt * t5;
        let lap = laplacian(eta);
        if !lap.is_finite() {
            return Err(ChnsError::Rejected("non-finite laplacian of eta".into()));
        }
        laps.push(lap);
    }

    let mut third_order = Vec::with_capacity(probe.thetas.len());
    for &th in &probe.thetas {
        let mut t6 = 0.0;
        for n in 0..steps {
            let phi = &base.states[n].phi;
            let dphi = &d.phi[n];
            let mut s = 0.0;
            for k in 0..phi.values.len() {
                let x = dphi.values[k];
                s += pot.d3(phi.values[k] + th * x)? * x * x * laps[n].values[k];
            }
            t6 += dt * s * phi.grid.cell_area();
            if let Some(w) = &korteweg_weights[n] {
                let phi1 = &base.states[n + 1].phi;
                let dn = &d.phi[n + 1];
                let mut s = 0.0;
                for k in 0..phi1.values.len() {
                    let x = dn.values[k];
                    s += pot.d3(phi1.values[k] + th * x)? * x * x * w.values[k];
                }
                t6 += dt * s * phi1.grid.cell_area();
            }
        }
        third_order.push((th, t6));
    }

    let sum_over = |th: f64, f: &dyn Fn(usize, f64) -> f64| -> f64 { (0..steps).map(|n| f(n, th)).sum::<f64>() * dt };
    let t1 = |th: f64| {
        sum_over(th, &|n, th| {
            let s = &base.states[n];
            let mut at = s.u.clone();
            at.axpy(th, &d.u[n]);
            cost.g_uu(s.t, &at, &d.u[n])
        })
    };
    let t2 = |th: f64| {
        sum_over(th, &|n, th| {
            let s = &base.states[n];
            let mut at = s.phi.clone();
            at.axpy(th, &d.phi[n]);
            cost.h_phiphi(s.t, &at, &d.phi[n])
        })
    };
    let t3 = |th: f64| {
        sum_over(th, &|n, th| {
            let mut at = candidate.controls.values[n].clone();
            at.axpy(th, &d.control.values[n]);
            cost.l_uu(&at, &d.control.values[n])
        })
    };
    let outer: Vec<f64> = if cost.is_quadratic() { vec![0.0] } else { probe.thetas.clone() };
    let v1: Vec<f64> = outer.iter().map(|&t| t1(t)).collect();
    let v2: Vec<f64> = outer.iter().map(|&t| t2(t)).collect();
    let v3: Vec<f64> = outer.iter().map(|&t| t3(t)).collect();
    let mut tuples = Vec::new();
    for (i1, &th1) in outer.iter().enumerate() {
        for (i2, &th2) in outer.iter().enumerate() {
            for (i3, &th3) in outer.iter().enumerate() {
                for &(th4, t6) in &third_order {
                    let v = v1[i1] + v2[i2] + v3[i3] + convective + advective + t6;
                    tuples.push(([th1, th2, th3, th4], v));
                }
            }
        }
    }
    if tuples.iter().any(|(_, v)| !v.is_finite()) {
        return Err(ChnsError::Rejected("non-finite second-order form".into()));
    }
    let (argmin, min) = tuples.iter().fold(([0.0; 4], f64::INFINITY), |acc, &(t, v)| if v < acc.1 { (t, v) } else { acc });
    Ok(FormValues { tuples, min, argmin, convective, advective, third_order, scale: d.norm_sq(dt) })
}

/// Random feasible differences around the candidate: smooth control
/// perturbations with amplitudes cycling through `amp`, `amp/10`, `amp/100`,
/// clipped to the box, each run through the nonlinear solver.
pub fn random_probes(candidate: &GradientEval, problem: &Problem, n: usize, amp: f64, seed: u64) -> Result<Vec<SecondOrderProbe>> {
    let c = &candidate.controls;
    let Some(g) = c.grid() else { return Ok(Vec::new()) };
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mag = amp * [1.0, 0.1, 0.01][i % 3];
            let delta = ControlTrajectory::random_smooth(g, c.steps(), c.dt, mag, seed.wrapping_add(i as u64));
            let perturbed = c.add(&delta).clip();
            let traj = problem.simulate(&perturbed)?;
            Ok(SecondOrderProbe::new(FeasibleDifference::between(&candidate.trajectory, c, &traj, &perturbed)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NecessaryReport {
    pub minima: Vec<f64>,
    pub scales: Vec<f64>,
    pub rel_tol: f64,
    pub pass: bool,
}

/// Every probe must satisfy `min_theta form >= -rel_tol * |probe|^2`.
pub fn check_necessary(
    candidate: &GradientEval,
    probes: &[SecondOrderProbe],
    cost: &dyn CostSpec,
    params: &PhysicsParams,
    rel_tol: f64,
) -> Result<NecessaryReport> {
    let vals: Vec<FormValues> =
        probes.par_iter().map(|p| second_order_form(p, candidate, cost, params, FormVariant::default())).collect::<Result<_>>()?;
    let minima: Vec<f64> = vals.iter().map(|v| v.min).collect();
    let scales: Vec<f64> = vals.iter().map(|v| v.scale).collect();
    let pass = minima.iter().zip(&scales).all(|(m, s)| *m >= -rel_tol * s);
    Ok(NecessaryReport { minima, scales, rel_tol, pass })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SufficientReport {
    pub samples: usize,
    pub values: Vec<f64>,
    pub min: Option<f64>,
    pub argmin_sample: Option<usize>,
    pub argmin_theta: Option<[f64; 4]>,
    pub violations: usize,
}

impl SufficientReport {
    /// Evidence only: a finite sample cannot certify the condition.
    pub fn summary(&self) -> String {
        if self.violations == 0 {
            format!("no violation found among {} samples", self.samples)
        } else {
            format!("{} of {} samples violate nonnegativity", self.violations, self.samples)
        }
    }
}

/// Samples `n` feasible differences and records the form minimum of each.
pub fn check_sufficient(candidate: &GradientEval, problem: &Problem, n: usize, amp: f64, seed: u64) -> Result<SufficientReport> {
    let probes = random_probes(candidate, problem, n, amp, seed)?;
    let vals: Vec<FormValues> = probes
        .par_iter()
        .map(|p| second_order_form(p, candidate, problem.cost.as_ref(), &problem.params, FormVariant::default()))
        .collect::<Result<_>>()?;
    let values: Vec<f64> = vals.iter().map(|v| v.min).collect();
    let argmin_sample = (0..values.len()).min_by(|&a, &b| values[a].total_cmp(&values[b]));
    Ok(SufficientReport {
        samples: n,
        min: argmin_sample.map(|i| values[i]),
        argmin_theta: argmin_sample.map(|i| vals[i].argmin),
        argmin_sample,
        violations: values.iter().filter(|v| **v < 0.0).count(),
        values,
    })
}
