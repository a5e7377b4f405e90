use super::{Grid2D, ScalarBc, ScalarField, VectorBc, VectorField};

/// Node value with ghost extension by at most one cell in one direction.
#[inline]
fn sample(values: &[f64], g: &Grid2D, bc: ScalarBc, i: isize, j: isize) -> f64 {
    let (nx, ny) = (g.nx as isize, g.ny as isize);
    let at = |i: isize, j: isize| values[(j * nx + i) as usize];
    if i < 0 {
        bc.ghost(at(0, j), at(1, j), at(2, j))
    } else if i >= nx {
        bc.ghost(at(nx - 1, j), at(nx - 2, j), at(nx - 3, j))
    } else if j < 0 {
        bc.ghost(at(i, 0), at(i, 1), at(i, 2))
    } else if j >= ny {
        bc.ghost(at(i, ny - 1), at(i, ny - 2), at(i, ny - 3))
    } else {
        at(i, j)
    }
}

/// Centered difference along x (`axis == 0`) or y.
pub(crate) fn centered_diff(values: &[f64], g: &Grid2D, bc: ScalarBc, axis: usize) -> Vec<f64> {
    let mut out = vec![0.0; g.len()];
    let (h2, di, dj) = if axis == 0 { (2.0 * g.hx(), 1, 0) } else { (2.0 * g.hy(), 0, 1) };
    for j in 0..g.ny as isize {
        for i in 0..g.nx as isize {
            let fp = sample(values, g, bc, i + di, j + dj);
            let fm = sample(values, g, bc, i - di, j - dj);
            out[(j as usize) * g.nx + i as usize] = (fp - fm) / h2;
        }
    }
    out
}

/// Second-order centered gradient; ghosts follow the field's tag.
pub fn gradient(f: &ScalarField) -> VectorField {
    let g = &f.grid;
    VectorField { grid: *g, x: centered_diff(&f.values, g, f.bc, 0), y: centered_diff(&f.values, g, f.bc, 1), bc: VectorBc::None }
}

/// Centered divergence. With `NoSlip` ghosts this is exactly the negative
/// transpose of `gradient` on `NeumannZero` fields.
pub fn divergence(v: &VectorField) -> ScalarField {
    let g = &v.grid;
    let cb = v.bc.component_bc();
    let dx = centered_diff(&v.x, g, cb, 0);
    let dy = centered_diff(&v.y, g, cb, 1);
    ScalarField { grid: *g, values: dx.iter().zip(&dy).map(|(a, b)| a + b).collect(), bc: ScalarBc::None }
}

fn laplacian_values(values: &[f64], g: &Grid2D, bc: ScalarBc) -> Vec<f64> {
    let (ihx2, ihy2) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    let mut out = vec![0.0; g.len()];
    for j in 0..g.ny as isize {
        for i in 0..g.nx as isize {
            let c = values[(j as usize) * g.nx + i as usize];
            let e = sample(values, g, bc, i + 1, j);
            let w = sample(values, g, bc, i - 1, j);
            let n = sample(values, g, bc, i, j + 1);
            let s = sample(values, g, bc, i, j - 1);
            out[(j as usize) * g.nx + i as usize] = (e - 2.0 * c + w) * ihx2 + (n - 2.0 * c + s) * ihy2;
        }
    }
    out
}

/// Five-point Laplacian; result keeps the input tag.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    ScalarField { grid: f.grid, values: laplacian_values(&f.values, &f.grid, f.bc), bc: f.bc }
}

pub fn vector_laplacian(v: &VectorField) -> VectorField {
    let cb = v.bc.component_bc();
    VectorField { grid: v.grid, x: laplacian_values(&v.x, &v.grid, cb), y: laplacian_values(&v.y, &v.grid, cb), bc: v.bc }
}

/// `(a . grad) b` with the ghost rule of `b`.
pub fn convect(a: &VectorField, b: &VectorField) -> VectorField {
    let g = &b.grid;
    let cb = b.bc.component_bc();
    let bxx = centered_diff(&b.x, g, cb, 0);
    let bxy = centered_diff(&b.x, g, cb, 1);
    let byx = centered_diff(&b.y, g, cb, 0);
    let byy = centered_diff(&b.y, g, cb, 1);
    let n = g.len();
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    for k in 0..n {
        x[k] = a.x[k] * bxx[k] + a.y[k] * bxy[k];
        y[k] = a.x[k] * byx[k] + a.y[k] * byy[k];
    }
    VectorField { grid: *g, x, y, bc: VectorBc::None }
}

/// `-(f, lap f)`: the squared face-difference gradient norm implied by the
/// five-point stencil and the field's ghost rule.
pub fn face_gradient_sq(f: &ScalarField) -> f64 {
    -f.inner(&laplacian(f))
}

pub fn vector_face_gradient_sq(v: &VectorField) -> f64 {
    -v.inner(&vector_laplacian(v))
}

/// Flux-form update `out += s * lap f` accumulated face by face, so that the
/// increments sum to zero up to a few roundings per node (Neumann ghosts).
pub(crate) fn add_neumann_laplacian_flux(out: &mut [f64], f: &[f64], g: &Grid2D, s: f64) {
    let (ihx2, ihy2) = (s / (g.hx() * g.hx()), s / (g.hy() * g.hy()));
    for j in 0..g.ny {
        for i in 0..g.nx - 1 {
            let k = j * g.nx + i;
            let flux = (f[k + 1] - f[k]) * ihx2;
            out[k] += flux;
            out[k + 1] -= flux;
        }
    }
    for j in 0..g.ny - 1 {
        for i in 0..g.nx {
            let k = j * g.nx + i;
            let flux = (f[k + g.nx] - f[k]) * ihy2;
            out[k] += flux;
            out[k + g.nx] -= flux;
        }
    }
}

/// Flux-form update `out -= s * div(q)` for a no-slip flux `q`, i.e. the
/// centered divergence written as half-sums across faces.
pub(crate) fn sub_noslip_divergence_flux(out: &mut [f64], q: &VectorField, s: f64) {
    let g = &q.grid;
    let (cx, cy) = (s / (2.0 * g.hx()), s / (2.0 * g.hy()));
    // interior faces carry (q_k + q_{k+1}) / 2h; wall faces carry zero
    for j in 0..g.ny {
        for i in 0..g.nx - 1 {
            let k = j * g.nx + i;
            let flux = (q.x[k] + q.x[k + 1]) * cx;
            out[k] -= flux;
            out[k + 1] += flux;
        }
    }
    for j in 0..g.ny - 1 {
        for i in 0..g.nx {
            let k = j * g.nx + i;
            let flux = (q.y[k] + q.y[k + g.nx]) * cy;
            out[k] -= flux;
            out[k + g.nx] += flux;
        }
    }
}
