use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{Grid2D, ScalarBc, ScalarField, VectorBc, VectorField};
use crate::error::{ChnsError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelShape {
    /// `beta * exp(-|z|^2 / (2 sigma^2))`
    Gaussian { sigma: f64, beta: f64 },
    /// Discrete identity: `1/(hx hy)` at the zero offset.
    Delta,
    /// User supplied lattice table.
    Tabulated,
}

/// Interaction kernel tabulated on the lattice of node offsets, together with
/// its lattice gradient and the kernel mass `a(x) = sum_y J(x-y) hx hy`.
///
/// The gradient table is the centered difference of the `J` table, so that
/// `grad J * 1` coincides with the centered gradient of `a` at interior nodes.
#[derive(Clone)]
pub struct Kernel {
    pub shape: KernelShape,
    grid: Grid2D,
    half_x: usize,
    half_y: usize,
    table: Vec<f64>,
    grad_x: Vec<f64>,
    grad_y: Vec<f64>,
    a: ScalarField,
    fft: Arc<Fft2>,
    spec_j: Vec<Complex<f64>>,
    spec_gx: Vec<Complex<f64>>,
    spec_gy: Vec<Complex<f64>>,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel").field("shape", &self.shape).field("grid", &self.grid).field("min_a", &self.a.min()).finish()
    }
}

struct Fft2 {
    w: usize,
    h: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(w: usize, h: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            w,
            h,
            fwd_x: planner.plan_fft_forward(w),
            fwd_y: planner.plan_fft_forward(h),
            inv_x: planner.plan_fft_inverse(w),
            inv_y: planner.plan_fft_inverse(h),
        }
    }

    fn run(&self, data: &mut [Complex<f64>], forward: bool) {
        let (fx, fy) = if forward { (&self.fwd_x, &self.fwd_y) } else { (&self.inv_x, &self.inv_y) };
        fx.process(data);
        let mut col = vec![Complex::new(0.0, 0.0); self.h];
        for i in 0..self.w {
            for j in 0..self.h {
                col[j] = data[j * self.w + i];
            }
            fy.process(&mut col);
            for j in 0..self.h {
                data[j * self.w + i] = col[j];
            }
        }
    }
}

impl Kernel {
    /// Gaussian kernel with explicit amplitude.
    pub fn gaussian(grid: Grid2D, sigma: f64, beta: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(ChnsError::InvalidParameter { key: "kernel.sigma".into(), reason: format!("must be positive, got {sigma}") });
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(ChnsError::InvalidParameter { key: "kernel.beta".into(), reason: format!("must be nonnegative, got {beta}") });
        }
        let (hx, hy) = (grid.hx(), grid.hy());
        let s2 = 2.0 * sigma * sigma;
        let mut k = Self::from_fn(grid, grid.nx, grid.ny, |di, dj| {
            let (zx, zy) = (di as f64 * hx, dj as f64 * hy);
            beta * (-(zx * zx + zy * zy) / s2).exp()
        });
        k.shape = KernelShape::Gaussian { sigma, beta };
        Ok(k)
    }

    /// Gaussian kernel whose amplitude is chosen so that `min a >= min_a`.
    pub fn gaussian_with_min_mass(grid: Grid2D, sigma: f64, min_a: f64) -> Result<Self> {
        let unit = Self::gaussian(grid, sigma, 1.0)?;
        let mut beta = min_a / unit.a.min();
        loop {
            let k = Self::gaussian(grid, sigma, beta)?;
            if k.a.min() >= min_a {
                return Ok(k);
            }
            beta *= 1.0 + 4.0 * f64::EPSILON;
        }
    }

    /// Default kernel: width four cells, amplitude giving `min a >= 5`.
    pub fn default_for(grid: Grid2D) -> Self {
        let sigma = 4.0 * grid.hx().max(grid.hy());
        Self::gaussian_with_min_mass(grid, sigma, 5.0).expect("default kernel")
    }

    pub fn delta(grid: Grid2D) -> Self {
        let c = 1.0 / grid.cell_area();
        let mut k = Self::from_fn(grid, grid.nx, grid.ny, |di, dj| if di == 0 && dj == 0 { c } else { 0.0 });
        k.shape = KernelShape::Delta;
        k
    }

    /// Kernel from a table over offsets `-half_x..=half_x` by `-half_y..=half_y`
    /// (row-major, x fastest). The table must cover every offset between two
    /// nodes of `grid`.
    pub fn from_table(grid: Grid2D, half_x: usize, half_y: usize, values: Vec<f64>) -> Result<Self> {
        if half_x + 1 < grid.nx || half_y + 1 < grid.ny {
            return Err(ChnsError::IncompleteKernel { nx: grid.nx, ny: grid.ny });
        }
        let (tw, th) = (2 * half_x + 1, 2 * half_y + 1);
        if values.len() != tw * th {
            return Err(ChnsError::GridMismatch(format!("kernel table needs {} entries, got {}", tw * th, values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ChnsError::InvalidParameter { key: "kernel.table".into(), reason: "non-finite entry".into() });
        }
        let hx = half_x as isize;
        let hy = half_y as isize;
        let mut k = Self::from_fn(grid, half_x, half_y, |di, dj| values[((dj + hy) as usize) * tw + (di + hx) as usize]);
        k.shape = KernelShape::Tabulated;
        Ok(k)
    }

    fn from_fn(grid: Grid2D, half_x: usize, half_y: usize, j: impl Fn(isize, isize) -> f64) -> Self {
        let (tw, th) = (2 * half_x + 1, 2 * half_y + 1);
        let (hxi, hyi) = (half_x as isize, half_y as isize);
        let mut table = vec![0.0; tw * th];
        for dj in -hyi..=hyi {
            for di in -hxi..=hxi {
                table[((dj + hyi) as usize) * tw + (di + hxi) as usize] = j(di, dj);
            }
        }
        let at = |di: isize, dj: isize| table[((dj + hyi) as usize) * tw + (di + hxi) as usize];
        let mut grad_x = vec![0.0; tw * th];
        let mut grad_y = vec![0.0; tw * th];
        let (hx, hy) = (grid.hx(), grid.hy());
        for dj in -hyi..=hyi {
            for di in -hxi..=hxi {
                let k = ((dj + hyi) as usize) * tw + (di + hxi) as usize;
                grad_x[k] = if di == -hxi {
                    (at(di + 1, dj) - at(di, dj)) / hx
                } else if di == hxi {
                    (at(di, dj) - at(di - 1, dj)) / hx
                } else {
                    (at(di + 1, dj) - at(di - 1, dj)) / (2.0 * hx)
                };
                grad_y[k] = if dj == -hyi {
                    (at(di, dj + 1) - at(di, dj)) / hy
                } else if dj == hyi {
                    (at(di, dj) - at(di, dj - 1)) / hy
                } else {
                    (at(di, dj + 1) - at(di, dj - 1)) / (2.0 * hy)
                };
            }
        }
        let fft = Arc::new(Fft2::new(2 * grid.nx, 2 * grid.ny));
        let mut k = Self {
            shape: KernelShape::Tabulated,
            grid,
            half_x,
            half_y,
            table,
            grad_x,
            grad_y,
            a: ScalarField::zeros(grid, ScalarBc::NeumannZero),
            fft,
            spec_j: Vec::new(),
            spec_gx: Vec::new(),
            spec_gy: Vec::new(),
        };
        k.spec_j = k.spectrum(&k.table);
        k.spec_gx = k.spectrum(&k.grad_x);
        k.spec_gy = k.spectrum(&k.grad_y);
        let ones = vec![1.0; grid.len()];
        k.a = ScalarField { grid, values: k.apply(&k.spec_j, &ones), bc: ScalarBc::NeumannZero };
        k
    }

    /// Wraps the offset table onto the padded periodic lattice and transforms it.
    fn spectrum(&self, tab: &[f64]) -> Vec<Complex<f64>> {
        let g = &self.grid;
        let (pw, ph) = (self.fft.w, self.fft.h);
        let mut buf = vec![Complex::new(0.0, 0.0); pw * ph];
        let (nx, ny) = (g.nx as isize, g.ny as isize);
        for dj in -(ny - 1)..ny {
            for di in -(nx - 1)..nx {
                let pi = di.rem_euclid(pw as isize) as usize;
                let pj = dj.rem_euclid(ph as isize) as usize;
                buf[pj * pw + pi] = Complex::new(self.tab_at(tab, di, dj), 0.0);
            }
        }
        self.fft.run(&mut buf, true);
        buf
    }

    #[inline]
    fn tab_at(&self, tab: &[f64], di: isize, dj: isize) -> f64 {
        let tw = 2 * self.half_x + 1;
        tab[((dj + self.half_y as isize) as usize) * tw + (di + self.half_x as isize) as usize]
    }

    fn apply(&self, spectrum: &[Complex<f64>], f: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let (pw, ph) = (self.fft.w, self.fft.h);
        let mut buf = vec![Complex::new(0.0, 0.0); pw * ph];
        for j in 0..g.ny {
            for i in 0..g.nx {
                buf[j * pw + i] = Complex::new(f[j * g.nx + i], 0.0);
            }
        }
        self.fft.run(&mut buf, true);
        for (b, s) in buf.iter_mut().zip(spectrum) {
            *b *= s;
        }
        self.fft.run(&mut buf, false);
        let scale = g.cell_area() / (pw * ph) as f64;
        let mut out = vec![0.0; g.len()];
        for j in 0..g.ny {
            for i in 0..g.nx {
                out[j * g.nx + i] = buf[j * pw + i].re * scale;
            }
        }
        out
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    /// `J` at lattice offset `(di, dj)`; zero outside the table.
    pub fn j(&self, di: isize, dj: isize) -> f64 {
        if di.unsigned_abs() > self.half_x || dj.unsigned_abs() > self.half_y {
            return 0.0;
        }
        self.tab_at(&self.table, di, dj)
    }

    pub fn grad_j(&self, di: isize, dj: isize) -> (f64, f64) {
        if di.unsigned_abs() > self.half_x || dj.unsigned_abs() > self.half_y {
            return (0.0, 0.0);
        }
        (self.tab_at(&self.grad_x, di, dj), self.tab_at(&self.grad_y, di, dj))
    }

    /// Kernel mass `a = J * 1`.
    pub fn a(&self) -> &ScalarField {
        &self.a
    }

    /// Exact lattice symmetry `J(z) == J(-z)` over the whole table.
    pub fn is_symmetric(&self) -> bool {
        let (hx, hy) = (self.half_x as isize, self.half_y as isize);
        (-hy..=hy).all(|dj| (-hx..=hx).all(|di| self.j(di, dj) == self.j(-di, -dj)))
    }

    /// Discrete `L1` norms of `J` and `grad J` over the offsets that occur in the domain.
    pub fn l1_norms(&self) -> (f64, f64) {
        let (nx, ny) = (self.grid.nx as isize, self.grid.ny as isize);
        let mut lj = 0.0;
        let mut lg = 0.0;
        for dj in -(ny - 1)..ny {
            for di in -(nx - 1)..nx {
                lj += self.j(di, dj).abs();
                let (gx, gy) = self.grad_j(di, dj);
                lg += gx.hypot(gy);
            }
        }
        (lj * self.grid.cell_area(), lg * self.grid.cell_area())
    }

    fn check(&self, grid: &Grid2D) -> Result<()> {
        self.grid.check_same(grid, "kernel vs field")
    }
}

/// Truncated convolution `(J*f)_i = sum_j J(x_i - x_j) f_j hx hy` through a
/// zero-padded transform.
pub fn convolve(k: &Kernel, f: &ScalarField) -> Result<ScalarField> {
    k.check(&f.grid)?;
    Ok(ScalarField { grid: f.grid, values: k.apply(&k.spec_j, &f.values), bc: ScalarBc::NeumannZero })
}

/// Same sum evaluated directly in `O(N^2)`.
pub fn convolve_direct(k: &Kernel, f: &ScalarField) -> Result<ScalarField> {
    k.check(&f.grid)?;
    let g = f.grid;
    let mut out = vec![0.0; g.len()];
    for jo in 0..g.ny {
        for io in 0..g.nx {
            let mut s = 0.0;
            for ji in 0..g.ny {
                for ii in 0..g.nx {
                    s += k.j(io as isize - ii as isize, jo as isize - ji as isize) * f.values[ji * g.nx + ii];
                }
            }
            out[jo * g.nx + io] = s * g.cell_area();
        }
    }
    Ok(ScalarField { grid: g, values: out, bc: ScalarBc::NeumannZero })
}

/// `grad J * f` with the tabulated kernel gradient.
pub fn convolve_grad(k: &Kernel, f: &ScalarField) -> Result<VectorField> {
    k.check(&f.grid)?;
    Ok(VectorField { grid: f.grid, x: k.apply(&k.spec_gx, &f.values), y: k.apply(&k.spec_gy, &f.values), bc: VectorBc::None })
}

/// `J * (p . v)`, the convolution of a pointwise dot product.
pub fn convolve_vector_reduce(k: &Kernel, p: &VectorField, v: &VectorField) -> Result<ScalarField> {
    p.grid.check_same(&v.grid, "vector reduce")?;
    convolve(k, &p.dot_field(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::gradient;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_scalar(g: Grid2D, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScalarField { grid: g, values: (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(), bc: ScalarBc::NeumannZero }
    }

    fn direct_grad(k: &Kernel, f: &ScalarField) -> VectorField {
        let g = f.grid;
        let mut out = VectorField::zeros(g, VectorBc::None);
        for jo in 0..g.ny {
            for io in 0..g.nx {
                let (mut sx, mut sy) = (0.0, 0.0);
                for ji in 0..g.ny {
                    for ii in 0..g.nx {
                        let (gx, gy) = k.grad_j(io as isize - ii as isize, jo as isize - ji as isize);
                        sx += gx * f.values[ji * g.nx + ii];
                        sy += gy * f.values[ji * g.nx + ii];
                    }
                }
                out.x[g.idx(io, jo)] = sx * g.cell_area();
                out.y[g.idx(io, jo)] = sy * g.cell_area();
            }
        }
        out
    }

    #[test]
    fn constant_field_gives_scaled_mass() {
        let g = Grid2D::new(12, 10, 1.0, 0.9).unwrap();
        let k = Kernel::gaussian(g, 0.2, 3.0).unwrap();
        let c = convolve(&k, &ScalarField::constant(g, 2.5, ScalarBc::NeumannZero)).unwrap();
        for (v, a) in c.values.iter().zip(&k.a().values) {
            assert!((v - 2.5 * a).abs() <= 1e-13 * a);
        }
        assert_eq!(convolve(&k, &ScalarField::constant(g, 1.0, ScalarBc::NeumannZero)).unwrap().values, k.a().values);
    }

    #[test]
    fn delta_kernel_is_identity() {
        let g = Grid2D::unit(9);
        let k = Kernel::delta(g);
        let f = random_scalar(g, 1);
        let c = convolve(&k, &f).unwrap();
        assert!(c.sub(&f).max_abs() < 1e-14);
    }

    #[test]
    fn fast_path_matches_direct_sum() {
        let g = Grid2D::new(14, 11, 1.3, 1.0).unwrap();
        let k = Kernel::default_for(g);
        for seed in 0..4 {
            let f = random_scalar(g, seed);
            let fast = convolve(&k, &f).unwrap();
            let slow = convolve_direct(&k, &f).unwrap();
            let rel = fast.sub(&slow).norm() / slow.norm();
            assert!(rel <= 1e-12, "relative error {rel}");
        }
    }

    #[test]
    fn gradient_kernel_matches_direct_sum_and_gradient_of_mass() {
        let g = Grid2D::unit(12);
        let k = Kernel::gaussian(g, 0.15, 2.0).unwrap();
        let f = random_scalar(g, 7);
        let fast = convolve_grad(&k, &f).unwrap();
        let slow = direct_grad(&k, &f);
        assert!(fast.sub(&slow).max_abs() <= 1e-12 * slow.max_abs());
        let c = 1.7;
        let gc = convolve_grad(&k, &ScalarField::constant(g, c, ScalarBc::NeumannZero)).unwrap();
        let ga = gradient(k.a()).scaled(c);
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                let n = g.idx(i, j);
                assert!((gc.x[n] - ga.x[n]).abs() <= 1e-10);
                assert!((gc.y[n] - ga.y[n]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn vector_reduce_of_zero_is_zero() {
        let g = Grid2D::unit(8);
        let k = Kernel::default_for(g);
        let p = VectorField::zeros(g, VectorBc::NoSlip);
        let v = VectorField::from_fn(g, VectorBc::None, |x, y| (x, y * y));
        assert_eq!(convolve_vector_reduce(&k, &p, &v).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn default_kernel_is_symmetric_nonnegative_with_mass_five() {
        let g = Grid2D::new(16, 12, 1.0, 1.0).unwrap();
        let k = Kernel::default_for(g);
        assert!(k.is_symmetric());
        assert!(k.a().min() >= 5.0);
        assert!(k.a().min() < 5.0 * (1.0 + 1e-12));
        let (lj, lg) = k.l1_norms();
        assert!(lj.is_finite() && lg.is_finite() && lj > 0.0);
    }

    #[test]
    fn incomplete_table_is_rejected() {
        let g = Grid2D::unit(8);
        let err = Kernel::from_table(g, 3, 7, vec![0.0; 7 * 15]).unwrap_err();
        assert!(matches!(err, ChnsError::IncompleteKernel { .. }));
        assert!(Kernel::from_table(g, 7, 7, vec![1.0; 15 * 15]).is_ok());
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let k = Kernel::default_for(Grid2D::unit(8));
        assert!(convolve(&k, &ScalarField::zeros(Grid2D::unit(9), ScalarBc::NeumannZero)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn convolution_is_self_adjoint(seed in any::<u64>(), n in 8usize..16) {
            let g = Grid2D::unit(n);
            let k = Kernel::default_for(g);
            let f = random_scalar(g, seed);
            let h = random_scalar(g, seed.wrapping_add(1));
            let lhs = convolve(&k, &f).unwrap().inner(&h);
            let rhs = f.inner(&convolve(&k, &h).unwrap());
            let scale = convolve(&k, &f).unwrap().norm() * h.norm();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }
    }
}
