//! Direct solvers for constant-coefficient separable operators and a
//! preconditioned conjugate gradient for the rest.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, SymmetricEigen};
use once_cell::sync::Lazy;

use super::{dot, Grid2D};
use crate::error::{ChnsError, Result};

/// One-dimensional building blocks of the separable operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Op1D {
    /// Three-point second difference with mirrored ghosts.
    NeumannLap,
    /// Three-point second difference with negated ghosts.
    DirichletLap,
    /// Centered divergence after centered gradient (two-cell stencil).
    WideNeumann,
}

struct Eig1D {
    q: DMatrix<f64>,
    lam: Vec<f64>,
}

type Key = (Op1D, usize, u64);

static CACHE: Lazy<Mutex<HashMap<Key, Arc<Eig1D>>>> = Lazy::new(|| Mutex::new(HashMap::new()));

fn matrix_1d(op: Op1D, n: usize, h: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    match op {
        Op1D::NeumannLap | Op1D::DirichletLap => {
            let ghost = if op == Op1D::NeumannLap { 1.0 } else { -1.0 };
            let c = 1.0 / (h * h);
            for i in 0..n {
                m[(i, i)] = -2.0 * c;
                if i > 0 {
                    m[(i, i - 1)] = c;
                }
                if i + 1 < n {
                    m[(i, i + 1)] = c;
                }
            }
            m[(0, 0)] += ghost * c;
            m[(n - 1, n - 1)] += ghost * c;
        }
        Op1D::WideNeumann => {
            let c = 1.0 / (2.0 * h);
            let mut g: DMatrix<f64> = DMatrix::zeros(n, n);
            for i in 0..n {
                // neighbours with mirrored ghosts
                let ip = if i + 1 < n { i + 1 } else { n - 1 };
                let im = if i > 0 { i - 1 } else { 0 };
                g[(i, ip)] += c;
                g[(i, im)] -= c;
            }
            m = -(g.transpose() * g);
        }
    }
    m
}

fn eig1d(op: Op1D, n: usize, h: f64) -> Arc<Eig1D> {
    let key = (op, n, h.to_bits());
    if let Some(e) = CACHE.lock().unwrap().get(&key) {
        return e.clone();
    }
    let se = SymmetricEigen::new(matrix_1d(op, n, h));
    let e = Arc::new(Eig1D { q: se.eigenvectors, lam: se.eigenvalues.iter().cloned().collect() });
    CACHE.lock().unwrap().entry(key).or_insert(e).clone()
}

/// Solves `(c0 I + c1 (A_x + A_y)) u = rhs` where `A_x`, `A_y` are the one
/// dimensional operators of kind `op` along each axis. Modes whose
/// eigenvalue vanishes are set to zero, which yields the minimum-norm
/// solution for singular operators with compatible data.
pub(crate) fn solve_separable(g: &Grid2D, op: Op1D, c0: f64, c1: f64, rhs: &[f64]) -> Vec<f64> {
    let ex = eig1d(op, g.nx, g.hx());
    let ey = eig1d(op, g.ny, g.hy());
    let f = DMatrix::from_row_slice(g.ny, g.nx, rhs);
    let mut fh = ex_transform(&ey.q, &ex.q, &f);
    let scale = ex.lam.iter().chain(&ey.lam).fold(c0.abs(), |m, l| m.max((c1 * l).abs()));
    for j in 0..g.ny {
        for i in 0..g.nx {
            let d = c0 + c1 * (ex.lam[i] + ey.lam[j]);
            fh[(j, i)] = if d.abs() <= 1e-12 * scale { 0.0 } else { fh[(j, i)] / d };
        }
    }
    let u = &ey.q * fh * ex.q.transpose();
    // back to row-major storage
    let mut out = vec![0.0; g.len()];
    for j in 0..g.ny {
        for i in 0..g.nx {
            out[j * g.nx + i] = u[(j, i)];
        }
    }
    out
}

fn ex_transform(qy: &DMatrix<f64>, qx: &DMatrix<f64>, f: &DMatrix<f64>) -> DMatrix<f64> {
    qy.transpose() * f * qx
}

/// Preconditioned conjugate gradient for a symmetric positive definite
/// operator. Stops on `||r|| <= tol * ||b||`.
pub(crate) fn pcg(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x0: Option<Vec<f64>>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let bnorm = dot(b, b).sqrt();
    let n = b.len();
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let mut x = x0.unwrap_or_else(|| vec![0.0; n]);
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut rnorm = dot(&r, &r).sqrt();
    if rnorm <= tol * bnorm {
        return Ok((x, 0));
    }
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(ChnsError::SolverDivergence { iterations: it, residual: rnorm / bnorm });
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        rnorm = dot(&r, &r).sqrt();
        if !rnorm.is_finite() {
            break;
        }
        if rnorm <= tol * bnorm {
            return Ok((x, it));
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(ChnsError::SolverDivergence { iterations: max_iter, residual: rnorm / bnorm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{laplacian, ScalarBc, ScalarField};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn dirichlet_helmholtz_inverts_stencil() {
        let g = Grid2D::new(12, 10, 1.0, 0.8).unwrap();
        let b = random(g.len(), 1);
        let (c0, c1) = (50.0, -0.1);
        let u = solve_separable(&g, Op1D::DirichletLap, c0, c1, &b);
        let f = ScalarField::from_values(g, u.clone(), ScalarBc::DirichletZero).unwrap();
        let lap = laplacian(&f);
        for k in 0..g.len() {
            let r = c0 * u[k] + c1 * lap.values[k] - b[k];
            assert!(r.abs() < 1e-11, "residual {r}");
        }
    }

    #[test]
    fn neumann_singular_mode_is_dropped() {
        let g = Grid2D::unit(9);
        let mut b = random(g.len(), 2);
        let m = b.iter().sum::<f64>() / b.len() as f64;
        b.iter_mut().for_each(|v| *v -= m);
        let u = solve_separable(&g, Op1D::NeumannLap, 0.0, 1.0, &b);
        let f = ScalarField::from_values(g, u, ScalarBc::NeumannZero).unwrap();
        assert!(f.mean().abs() < 1e-12);
        let lap = laplacian(&f);
        for k in 0..g.len() {
            assert!((lap.values[k] - b[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn pcg_solves_spd_system() {
        let g = Grid2D::unit(10);
        let sigma: Vec<f64> = random(g.len(), 3).iter().map(|v| 1.5 + v).collect();
        let dt = 0.01;
        let apply = |x: &[f64]| {
            let f = ScalarField::from_values(g, x.to_vec(), ScalarBc::NeumannZero).unwrap();
            let l = laplacian(&f);
            (0..x.len()).map(|k| sigma[k] * x[k] - dt * l.values[k]).collect::<Vec<_>>()
        };
        let b = random(g.len(), 4);
        let pre = |r: &[f64]| solve_separable(&g, Op1D::NeumannLap, 1.5, -dt, r);
        let (x, it) = pcg(apply, pre, &b, None, 1e-12, 1000).unwrap();
        assert!(it < 30, "iterations {it}");
        let ax = apply(&x);
        let err = ax.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn pcg_reports_divergence() {
        let b = vec![1.0, 1.0];
        let apply = |x: &[f64]| vec![-x[0], -x[1]];
        let id = |r: &[f64]| r.to_vec();
        assert!(matches!(pcg(apply, id, &b, None, 1e-10, 5), Err(ChnsError::SolverDivergence { .. })));
    }
}
