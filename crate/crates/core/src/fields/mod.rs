//! Grid geometry, grid-sampled fields and the discrete operators acting on them.
//!
//! Nodes are cell centres of a uniform `nx x ny` partition of `(0,lx)x(0,ly)`.
//! Boundary conditions are imposed through ghost values one cell outside the
//! domain, so the physical wall sits on the cell faces.

mod kernel;
mod ops;
mod projection;
pub(crate) mod solvers;

pub use kernel::{convolve, convolve_direct, convolve_grad, convolve_vector_reduce, Kernel, KernelShape};
pub(crate) use ops::{add_neumann_laplacian_flux, sub_noslip_divergence_flux};
pub use ops::{convect, divergence, face_gradient_sq, gradient, laplacian, vector_face_gradient_sq, vector_laplacian};
pub use projection::{project_divfree, Projection};

use crate::error::{ChnsError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 8 || ny < 8 {
            return Err(ChnsError::InvalidParameter {
                key: "grid.nx/grid.ny".into(),
                reason: format!("need at least 8 cells per direction, got {nx}x{ny}"),
            });
        }
        if !(lx > 0.0 && lx.is_finite() && ly > 0.0 && ly.is_finite()) {
            return Err(ChnsError::InvalidParameter {
                key: "grid.lx/grid.ly".into(),
                reason: format!("edge lengths must be positive, got {lx} x {ly}"),
            });
        }
        Ok(Self { nx, ny, lx, ly })
    }

    /// Unit square with `n x n` cells.
    pub fn unit(n: usize) -> Self {
        Self::new(n, n, 1.0, 1.0).expect("unit grid")
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    /// Quadrature weight of a single node.
    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx()
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy()
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    /// Iterator over `(i, j, x, y)` in storage order.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize, f64, f64)> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| (i, j, self.x(i), self.y(j))))
    }

    pub(crate) fn check_same(&self, other: &Grid2D, what: &str) -> Result<()> {
        if self != other {
            return Err(ChnsError::GridMismatch(format!(
                "{what}: {}x{} on {}x{} vs {}x{} on {}x{}",
                self.nx, self.ny, self.lx, self.ly, other.nx, other.ny, other.lx, other.ly
            )));
        }
        Ok(())
    }
}

/// Ghost-value rule for scalar fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarBc {
    /// Zero normal derivative at the wall: ghost mirrors the first interior node.
    NeumannZero,
    /// Zero value at the wall: ghost is the negated first interior node.
    DirichletZero,
    /// No condition: second-order extrapolation.
    None,
}

/// Ghost-value rule for vector fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorBc {
    /// Both components vanish on the wall.
    NoSlip,
    /// Both components mirrored.
    Reflect,
    None,
}

impl ScalarBc {
    #[inline]
    pub(crate) fn ghost(self, first: f64, second: f64, third: f64) -> f64 {
        match self {
            ScalarBc::NeumannZero => first,
            ScalarBc::DirichletZero => -first,
            ScalarBc::None => 3.0 * first - 3.0 * second + third,
        }
    }
}

impl VectorBc {
    pub(crate) fn component_bc(self) -> ScalarBc {
        match self {
            VectorBc::NoSlip => ScalarBc::DirichletZero,
            VectorBc::Reflect => ScalarBc::NeumannZero,
            VectorBc::None => ScalarBc::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid2D,
    pub values: Vec<f64>,
    pub bc: ScalarBc,
}

impl ScalarField {
    pub fn zeros(grid: Grid2D, bc: ScalarBc) -> Self {
        Self { grid, values: vec![0.0; grid.len()], bc }
    }

    pub fn constant(grid: Grid2D, c: f64, bc: ScalarBc) -> Self {
        Self { grid, values: vec![c; grid.len()], bc }
    }

    pub fn from_fn(grid: Grid2D, bc: ScalarBc, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = grid.nodes().map(|(_, _, x, y)| f(x, y)).collect();
        Self { grid, values, bc }
    }

    pub fn from_values(grid: Grid2D, values: Vec<f64>, bc: ScalarBc) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(ChnsError::GridMismatch(format!("expected {} values, got {}", grid.len(), values.len())));
        }
        Ok(Self { grid, values, bc })
    }

    pub fn with_bc(mut self, bc: ScalarBc) -> Self {
        self.bc = bc;
        self
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect(), bc: self.bc }
    }

    /// Nodewise combination of two fields; the result keeps `self`'s tag.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self { grid: self.grid, values, bc: self.bc }
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &ScalarField) {
        debug_assert_eq!(self.grid, other.grid);
        self.values.iter_mut().zip(&other.values).for_each(|(a, b)| *a += s * b);
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    /// L2 inner product with the node quadrature.
    pub fn inner(&self, other: &ScalarField) -> f64 {
        dot(&self.values, &other.values) * self.grid.cell_area()
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn integral(&self) -> f64 {
        compensated_sum(&self.values) * self.grid.cell_area()
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(&self.values) / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn subtract_mean(&mut self) {
        let m = self.mean();
        self.values.iter_mut().for_each(|v| *v -= m);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid2D,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub bc: VectorBc,
}

impl VectorField {
    pub fn zeros(grid: Grid2D, bc: VectorBc) -> Self {
        Self { grid, x: vec![0.0; grid.len()], y: vec![0.0; grid.len()], bc }
    }

    pub fn from_fn(grid: Grid2D, bc: VectorBc, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let (x, y) = grid.nodes().map(|(_, _, x, y)| f(x, y)).unzip();
        Self { grid, x, y, bc }
    }

    pub fn from_components(a: ScalarField, b: ScalarField, bc: VectorBc) -> Self {
        debug_assert_eq!(a.grid, b.grid);
        Self { grid: a.grid, x: a.values, y: b.values, bc }
    }

    pub fn with_bc(mut self, bc: VectorBc) -> Self {
        self.bc = bc;
        self
    }

    /// Component as a scalar field carrying the matching ghost rule.
    pub fn component(&self, c: usize) -> ScalarField {
        let values = if c == 0 { self.x.clone() } else { self.y.clone() };
        ScalarField { grid: self.grid, values, bc: self.bc.component_bc() }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }

    pub fn scale(&mut self, s: f64) {
        self.x.iter_mut().chain(self.y.iter_mut()).for_each(|v| *v *= s);
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    pub fn axpy(&mut self, s: f64, other: &VectorField) {
        debug_assert_eq!(self.grid, other.grid);
        self.x.iter_mut().zip(&other.x).for_each(|(a, b)| *a += s * b);
        self.y.iter_mut().zip(&other.y).for_each(|(a, b)| *a += s * b);
    }

    pub fn add(&self, other: &VectorField) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &VectorField) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Multiply both components nodewise by a scalar field.
    pub fn mul_scalar(&self, s: &ScalarField) -> Self {
        debug_assert_eq!(self.grid, s.grid);
        let x = self.x.iter().zip(&s.values).map(|(a, b)| a * b).collect();
        let y = self.y.iter().zip(&s.values).map(|(a, b)| a * b).collect();
        Self { grid: self.grid, x, y, bc: self.bc }
    }

    /// Pointwise dot product.
    pub fn dot_field(&self, other: &VectorField) -> ScalarField {
        let values = (0..self.grid.len()).map(|k| self.x[k] * other.x[k] + self.y[k] * other.y[k]).collect();
        ScalarField { grid: self.grid, values, bc: ScalarBc::None }
    }

    pub fn inner(&self, other: &VectorField) -> f64 {
        (dot(&self.x, &other.x) + dot(&self.y, &other.y)) * self.grid.cell_area()
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.x.iter().chain(&self.y).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Nodewise clamp of both components into `[lo, hi]`.
    pub fn clamp(&self, lo: f64, hi: f64) -> Self {
        let x = self.x.iter().map(|v| v.clamp(lo, hi)).collect();
        let y = self.y.iter().map(|v| v.clamp(lo, hi)).collect();
        Self { grid: self.grid, x, y, bc: self.bc }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Neumaier-compensated sum; keeps mass diagnostics free of summation drift.
pub(crate) fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}
