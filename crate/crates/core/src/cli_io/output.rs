use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{ChnsError, Result};
use crate::fields::{Grid2D, ScalarField, VectorField};
use crate::forward::{Diagnostics, StateTrajectory};

/// One line of the diagnostics file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub energy: f64,
    pub mass: f64,
    pub grad_u_sq: f64,
    pub grad_mu_sq: f64,
    /// Running cost accumulated up to `t`.
    pub cost: f64,
}

impl DiagnosticsRow {
    pub fn new(d: &Diagnostics, cost: f64) -> Self {
        Self { t: d.t, energy: d.energy, mass: d.mass, grad_u_sq: d.grad_u_sq, grad_mu_sq: d.grad_mu_sq, cost }
    }
}

/// Rows for a trajectory; `step_costs[n]` is the cost of step `n -> n+1`.
pub fn diagnostics_rows(traj: &StateTrajectory, step_costs: &[f64]) -> Vec<DiagnosticsRow> {
    let mut acc = 0.0;
    traj.diagnostics
        .iter()
        .enumerate()
        .map(|(n, d)| {
            if n > 0 {
                acc += step_costs.get(n - 1).copied().unwrap_or(0.0);
            }
            DiagnosticsRow::new(d, acc)
        })
        .collect()
}

/// Seventeen significant digits.
pub(crate) fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).map_err(|e| ChnsError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn write_diagnostics_csv(rows: &[DiagnosticsRow], path: &Path) -> Result<()> {
    let mut s = String::from("t,energy,mass,grad_u_sq,grad_mu_sq,cost\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", num(r.t), num(r.energy), num(r.mass), num(r.grad_u_sq), num(r.grad_mu_sq), num(r.cost));
    }
    write_file(path, &s)
}

/// Anything that can be written as a single VTK point-data block.
pub trait VtkField {
    fn grid(&self) -> Grid2D;
    fn write_block(&self, name: &str, out: &mut String);
}

impl VtkField for ScalarField {
    fn grid(&self) -> Grid2D {
        self.grid
    }
    fn write_block(&self, name: &str, out: &mut String) {
        let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in &self.values {
            let _ = writeln!(out, "{}", num(*v));
        }
    }
}

impl VtkField for VectorField {
    fn grid(&self) -> Grid2D {
        self.grid
    }
    fn write_block(&self, name: &str, out: &mut String) {
        let _ = writeln!(out, "VECTORS {name} double");
        for (x, y) in self.x.iter().zip(&self.y) {
            let _ = writeln!(out, "{} {} {}", num(*x), num(*y), num(0.0));
        }
    }
}

/// Legacy ASCII VTK, `STRUCTURED_POINTS`, x index fastest.
pub fn write_field_vtk<F: VtkField>(field: &F, name: &str, path: &Path) -> Result<()> {
    let g = field.grid();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\n{name}\nASCII\nDATASET STRUCTURED_POINTS");
    let _ = writeln!(s, "DIMENSIONS {} {} 1", g.nx, g.ny);
    let _ = writeln!(s, "SPACING {} {} 1", num(g.hx()), num(g.hy()));
    let _ = writeln!(s, "ORIGIN 0 0 0\nPOINT_DATA {}", g.len());
    field.write_block(name, &mut s);
    write_file(path, &s)
}
