use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{OptimizerConfig, QuadraticCost, StepRule};
use crate::error::{ChnsError, Result};
use crate::fields::{Grid2D, Kernel, ScalarBc, ScalarField, VectorBc, VectorField};
use crate::forward::TimeScheme;
use crate::physics::{PhysicsParams, Potential};

/// Initial phase-field profile.
#[derive(Debug, Clone, PartialEq)]
pub enum PhaseProfile {
    Zero,
    Constant(f64),
    /// `tanh((|x - c| - r) / eps)`
    TanhCircle {
        cx: f64,
        cy: f64,
        r: f64,
        eps: f64,
    },
    /// `tanh((x - x0) / eps)`
    TanhPlane {
        x0: f64,
        eps: f64,
    },
    /// `mean + amp cos(kx pi x / lx) cos(ky pi y / ly)`
    Cosine {
        mean: f64,
        amp: f64,
        kx: f64,
        ky: f64,
    },
    /// Uniform noise in `[mean - amp, mean + amp]`, seeded.
    Random {
        mean: f64,
        amp: f64,
    },
}

/// Initial velocity profile.
#[derive(Debug, Clone, PartialEq)]
pub enum VelocityProfile {
    Zero,
    /// Curl of `amp sin^2(pi x / lx) sin^2(pi y / ly)`.
    Vortex {
        amp: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub nu: f64,
    /// `None` selects the default width `4 max(hx, hy)`.
    pub kernel_sigma: Option<f64>,
    /// `None` selects the amplitude giving `min a >= 5`.
    pub kernel_beta: Option<f64>,
    pub potential: String,
    pub dt: f64,
    pub t_final: f64,
    pub phi0: PhaseProfile,
    pub u0: VelocityProfile,
    pub alpha_u: f64,
    pub alpha_phi: f64,
    pub lambda_u: f64,
    pub box_min: f64,
    pub box_max: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub armijo_c: f64,
    pub armijo_backtrack: f64,
    pub directory: PathBuf,
    pub dump_every: usize,
    /// Number of random directions or probes used by the check subcommands.
    pub samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            nx: 48,
            ny: 48,
            lx: 1.0,
            ly: 1.0,
            nu: 0.1,
            kernel_sigma: None,
            kernel_beta: None,
            potential: "double_well".into(),
            dt: 1.0 / 256.0,
            t_final: 0.0625,
            phi0: PhaseProfile::TanhCircle { cx: 0.5, cy: 0.5, r: 0.25, eps: 0.1 },
            u0: VelocityProfile::Zero,
            alpha_u: 1.0,
            alpha_phi: 1.0,
            lambda_u: 1.0,
            box_min: f64::NEG_INFINITY,
            box_max: f64::INFINITY,
            max_iters: 50,
            tol: 1e-6,
            armijo_c: 1e-4,
            armijo_backtrack: 0.5,
            directory: PathBuf::from("out"),
            dump_every: 0,
            samples: 10,
        }
    }
}

fn invalid(key: &str, reason: impl Into<String>) -> ChnsError {
    ChnsError::InvalidParameter { key: key.into(), reason: reason.into() }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    match v.trim() {
        "inf" | "+inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        s => s.parse().map_err(|_| invalid(key, format!("not a number: {s:?}"))),
    }
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim().parse().map_err(|_| invalid(key, format!("not a nonnegative integer: {v:?}")))
}

fn parse_args<const N: usize>(key: &str, args: &str, defaults: [f64; N]) -> Result<[f64; N]> {
    let mut out = defaults;
    let parts: Vec<&str> = if args.trim().is_empty() { Vec::new() } else { args.split(',').collect() };
    if parts.len() > N {
        return Err(invalid(key, format!("expected at most {N} arguments, got {}", parts.len())));
    }
    for (o, p) in out.iter_mut().zip(parts) {
        *o = parse_f64(key, p)?;
    }
    Ok(out)
}

fn split_descriptor(v: &str) -> (&str, &str) {
    match v.split_once(':') {
        Some((name, args)) => (name.trim(), args),
        None => (v.trim(), ""),
    }
}

impl PhaseProfile {
    /// `zero`, `constant:c`, `tanh_circle[:cx,cy,r,eps]`, `tanh_plane[:x0,eps]`,
    /// `cosine[:mean,amp,kx,ky]`, `random[:mean,amp]`. Lengths are fractions
    /// of the domain for the tanh profiles.
    pub fn parse(key: &str, v: &str) -> Result<Self> {
        let (name, args) = split_descriptor(v);
        Ok(match name {
            "zero" => PhaseProfile::Zero,
            "constant" => PhaseProfile::Constant(parse_args(key, args, [0.0])?[0]),
            "tanh_circle" => {
                let [cx, cy, r, eps] = parse_args(key, args, [0.5, 0.5, 0.25, 0.1])?;
                if !(eps > 0.0) {
                    return Err(invalid(key, "interface width must be positive"));
                }
                PhaseProfile::TanhCircle { cx, cy, r, eps }
            }
            "tanh_plane" => {
                let [x0, eps] = parse_args(key, args, [0.5, 0.1])?;
                if !(eps > 0.0) {
                    return Err(invalid(key, "interface width must be positive"));
                }
                PhaseProfile::TanhPlane { x0, eps }
            }
            "cosine" => {
                let [mean, amp, kx, ky] = parse_args(key, args, [0.0, 0.5, 1.0, 1.0])?;
                PhaseProfile::Cosine { mean, amp, kx, ky }
            }
            "random" => {
                let [mean, amp] = parse_args(key, args, [0.0, 0.05])?;
                PhaseProfile::Random { mean, amp }
            }
            other => return Err(invalid(key, format!("unknown profile {other:?}"))),
        })
    }

    pub fn build(&self, g: Grid2D, seed: u64) -> ScalarField {
        let bc = ScalarBc::NeumannZero;
        let (lx, ly) = (g.lx, g.ly);
        match *self {
            PhaseProfile::Zero => ScalarField::zeros(g, bc),
            PhaseProfile::Constant(c) => ScalarField::constant(g, c, bc),
            PhaseProfile::TanhCircle { cx, cy, r, eps } => ScalarField::from_fn(g, bc, |x, y| {
                let d = ((x / lx - cx).powi(2) + (y / ly - cy).powi(2)).sqrt();
                ((d - r) / eps).tanh()
            }),
            PhaseProfile::TanhPlane { x0, eps } => ScalarField::from_fn(g, bc, |x, _| ((x / lx - x0) / eps).tanh()),
            PhaseProfile::Cosine { mean, amp, kx, ky } => {
                ScalarField::from_fn(g, bc, |x, y| mean + amp * (kx * PI * x / lx).cos() * (ky * PI * y / ly).cos())
            }
            PhaseProfile::Random { mean, amp } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let values = (0..g.len()).map(|_| mean + amp * rng.gen_range(-1.0..=1.0)).collect();
                ScalarField { grid: g, values, bc }
            }
        }
    }
}

impl VelocityProfile {
    /// `zero` or `vortex[:amp]`.
    pub fn parse(key: &str, v: &str) -> Result<Self> {
        let (name, args) = split_descriptor(v);
        Ok(match name {
            "zero" => VelocityProfile::Zero,
            "vortex" => VelocityProfile::Vortex { amp: parse_args(key, args, [1.0])?[0] },
            other => return Err(invalid(key, format!("unknown profile {other:?}"))),
        })
    }

    pub fn build(&self, g: Grid2D) -> VectorField {
        match *self {
            VelocityProfile::Zero => VectorField::zeros(g, VectorBc::NoSlip),
            VelocityProfile::Vortex { amp } => {
                let (lx, ly) = (g.lx, g.ly);
                VectorField::from_fn(g, VectorBc::NoSlip, |x, y| {
                    let (sx, sy) = ((PI * x / lx).sin(), (PI * y / ly).sin());
                    let (s2x, s2y) = ((2.0 * PI * x / lx).sin(), (2.0 * PI * y / ly).sin());
                    (amp * sx * sx * s2y * PI / ly, -amp * s2x * sy * sy * PI / lx)
                })
            }
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ChnsError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ChnsError::Config(format!("line {}: expected `key = value`", lineno + 1)));
            };
            let k = k.trim().to_string();
            if entries.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(ChnsError::Config(format!("line {}: duplicate key {k}", lineno + 1)));
            }
        }
        let mut c = RunConfig::default();
        for (k, v) in &entries {
            let k = k.as_str();
            match k {
                "grid.nx" => c.nx = parse_usize(k, v)?,
                "grid.ny" => c.ny = parse_usize(k, v)?,
                "grid.lx" => c.lx = parse_f64(k, v)?,
                "grid.ly" => c.ly = parse_f64(k, v)?,
                "physics.nu" => c.nu = parse_f64(k, v)?,
                "physics.kernel.sigma" => c.kernel_sigma = if v == "auto" { None } else { Some(parse_f64(k, v)?) },
                "physics.kernel.beta" => c.kernel_beta = if v == "auto" { None } else { Some(parse_f64(k, v)?) },
                "physics.potential.type" => c.potential = v.clone(),
                "time.dt" => c.dt = parse_f64(k, v)?,
                "time.t_final" => c.t_final = parse_f64(k, v)?,
                "init.phi0" => c.phi0 = PhaseProfile::parse(k, v)?,
                "init.u0" => c.u0 = VelocityProfile::parse(k, v)?,
                "cost.alpha_u" => c.alpha_u = parse_f64(k, v)?,
                "cost.alpha_phi" => c.alpha_phi = parse_f64(k, v)?,
                "cost.lambda_u" => c.lambda_u = parse_f64(k, v)?,
                "control.box_min" => c.box_min = parse_f64(k, v)?,
                "control.box_max" => c.box_max = parse_f64(k, v)?,
                "optimizer.max_iters" => c.max_iters = parse_usize(k, v)?,
                "optimizer.tol" => c.tol = parse_f64(k, v)?,
                "optimizer.armijo_c" => c.armijo_c = parse_f64(k, v)?,
                "optimizer.armijo_backtrack" => c.armijo_backtrack = parse_f64(k, v)?,
                "output.directory" => c.directory = PathBuf::from(v),
                "output.dump_every" => c.dump_every = parse_usize(k, v)?,
                "check.samples" => c.samples = parse_usize(k, v)?,
                other => return Err(ChnsError::Config(format!("unknown key {other}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        Grid2D::new(self.nx, self.ny, self.lx, self.ly)?;
        let positive = [
            ("physics.nu", self.nu),
            ("time.dt", self.dt),
            ("time.t_final", self.t_final),
            ("cost.lambda_u", self.lambda_u),
            ("optimizer.tol", self.tol),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(key, format!("must be positive, got {v}")));
            }
        }
        for (key, v) in [("cost.alpha_u", self.alpha_u), ("cost.alpha_phi", self.alpha_phi)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(key, format!("must be nonnegative, got {v}")));
            }
        }
        if let Some(s) = self.kernel_sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(invalid("physics.kernel.sigma", format!("must be positive, got {s}")));
            }
        }
        if let Some(b) = self.kernel_beta {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(invalid("physics.kernel.beta", format!("must be nonnegative, got {b}")));
            }
        }
        if self.potential != "double_well" {
            return Err(invalid("physics.potential.type", format!("unsupported potential {:?}", self.potential)));
        }
        if self.dt > self.t_final {
            return Err(invalid("time.dt", format!("dt {} exceeds t_final {}", self.dt, self.t_final)));
        }
        let steps = self.t_final / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps {
            return Err(invalid("time.t_final", "must be an integer multiple of time.dt"));
        }
        if !(self.box_min <= self.box_max) {
            return Err(invalid("control.box_min", format!("empty box [{}, {}]", self.box_min, self.box_max)));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(invalid("optimizer.armijo_c", format!("must lie in (0, 1), got {}", self.armijo_c)));
        }
        if !(self.armijo_backtrack > 0.0 && self.armijo_backtrack < 1.0) {
            return Err(invalid("optimizer.armijo_backtrack", format!("must lie in (0, 1), got {}", self.armijo_backtrack)));
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid2D {
        Grid2D::new(self.nx, self.ny, self.lx, self.ly).expect("validated grid")
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn kernel(&self) -> Result<Kernel> {
        let g = self.grid();
        let sigma = self.kernel_sigma.unwrap_or(4.0 * g.hx().max(g.hy()));
        match self.kernel_beta {
            Some(beta) => Kernel::gaussian(g, sigma, beta),
            None => Kernel::gaussian_with_min_mass(g, sigma, 5.0),
        }
    }

    pub fn physics(&self) -> Result<PhysicsParams> {
        PhysicsParams::new(self.nu, self.kernel()?, Potential::double_well())
    }

    pub fn scheme(&self) -> Result<TimeScheme> {
        TimeScheme::new(self.dt)
    }

    pub fn cost(&self) -> Result<QuadraticCost> {
        QuadraticCost::new(self.alpha_u, self.alpha_phi, self.lambda_u)
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            max_iters: self.max_iters,
            step: StepRule::Armijo { c: self.armijo_c, backtrack: self.armijo_backtrack, initial: 1.0, max_backtracks: 30 },
            tol: self.tol,
            bounds: (self.box_min, self.box_max),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_file() {
        let text = "# demo\n\
            grid.nx = 16\ngrid.ny = 12\ngrid.lx = 2.0\n\
            physics.nu = 0.05   # viscosity\nphysics.kernel.beta = 0\n\
            time.dt = 0.01\ntime.t_final = 0.1\n\
            init.phi0 = tanh_plane:0.4,0.05\ninit.u0 = vortex:0.3\n\
            cost.lambda_u = 2\ncontrol.box_min = -1\ncontrol.box_max = 1\n\
            optimizer.max_iters = 7\noutput.directory = results\noutput.dump_every = 5\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!((c.nx, c.ny, c.lx, c.ly), (16, 12, 2.0, 1.0));
        assert_eq!(c.kernel_beta, Some(0.0));
        assert_eq!(c.phi0, PhaseProfile::TanhPlane { x0: 0.4, eps: 0.05 });
        assert_eq!(c.u0, VelocityProfile::Vortex { amp: 0.3 });
        assert_eq!(c.steps(), 10);
        assert_eq!(c.directory, PathBuf::from("results"));
        assert_eq!(c.optimizer().bounds, (-1.0, 1.0));
    }

    #[test]
    fn errors_name_the_key() {
        for (text, key) in [
            ("physics.nu = -1", "physics.nu"),
            ("time.dt = 1\ntime.t_final = 0.5", "time.dt"),
            ("cost.alpha_phi = -2", "cost.alpha_phi"),
            ("control.box_min = 1\ncontrol.box_max = 0", "control.box_min"),
            ("optimizer.armijo_c = 2", "optimizer.armijo_c"),
            ("init.phi0 = blob", "init.phi0"),
            ("grid.nx = x", "grid.nx"),
        ] {
            let e = RunConfig::parse(text).unwrap_err().to_string();
            assert!(e.contains(key), "{e}");
        }
        assert!(RunConfig::parse("nonsense.key = 1").unwrap_err().to_string().contains("nonsense.key"));
        assert!(RunConfig::parse("grid.nx 3").is_err());
    }

    #[test]
    fn vortex_is_discretely_smooth_and_vanishes_on_walls() {
        let div = |n: usize| {
            let u = VelocityProfile::Vortex { amp: 1.0 }.build(Grid2D::unit(n));
            crate::fields::divergence(&u).max_abs()
        };
        assert!(div(16) / div(32) > 1.8);
        let g = Grid2D::unit(32);
        let u = VelocityProfile::Vortex { amp: 1.0 }.build(g);
        assert!(u.x[g.idx(0, 16)].abs() < 0.05 * u.max_abs());
    }

    #[test]
    fn random_profile_is_seeded() {
        let g = Grid2D::unit(8);
        let p = PhaseProfile::Random { mean: 0.1, amp: 0.2 };
        assert_eq!(p.build(g, 3), p.build(g, 3));
        assert_ne!(p.build(g, 3), p.build(g, 4));
    }
}
