//! Finite-dimensional Wiener process and additive noise coefficients.
//!
//! Gaussian increments come from a counter-based construction: every draw is
//! a pure function of `(seed, step, mode)`, so ensembles are reproducible no
//! matter how samples are scheduled. The 3D coefficients are the retracts of
//! the 2D ones and all thicknesses consume the same increments, which couples
//! the 3D runs to the 2D run pathwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::avgops::retract;
use crate::error::{Error, Result};
use crate::grid::{divergence, Grid2D, Grid3D, VField2D, VField3D};

/// Largest number of driving Brownian motions accepted.
pub const MAX_MODES: usize = 64;

/// Standard normal draw keyed by `(seed, step, mode)`.
pub fn keyed_normal(seed: u64, step: u64, mode: u64) -> f64 {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&step.to_le_bytes());
    key[16..24].copy_from_slice(&mode.to_le_bytes());
    key[24..].copy_from_slice(b"brownian");
    ChaCha8Rng::from_seed(key).sample(StandardNormal)
}

/// Increments of an `N`-dimensional Brownian motion on a uniform time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrownianPaths {
    pub n_modes: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub seed: u64,
    /// Row-major `n_steps x n_modes`, each entry `N(0, dt)`.
    pub increments: Vec<f64>,
}

/// Number of steps of size `dt` covering `[0, t_final]`; `dt` must divide
/// `t_final` up to rounding.
pub fn step_count(dt: f64, t_final: f64) -> Result<usize> {
    if !(dt > 0.0 && t_final > 0.0 && dt.is_finite() && t_final.is_finite()) {
        return Err(Error::InvalidConfig(format!("dt and T must be positive (got {dt}, {t_final})")));
    }
    let n = (t_final / dt).round();
    if (n * dt - t_final).abs() > 1e-9 * t_final || n < 1.0 {
        return Err(Error::InvalidConfig(format!("dt = {dt} does not divide T = {t_final}")));
    }
    Ok(n as usize)
}

pub fn make_paths(n_modes: usize, dt: f64, t_final: f64, seed: u64) -> Result<BrownianPaths> {
    let n_steps = step_count(dt, t_final)?;
    if n_modes > MAX_MODES {
        return Err(Error::InvalidConfig(format!("at most {MAX_MODES} noise modes are supported")));
    }
    let sd = dt.sqrt();
    let increments = (0..n_steps)
        .flat_map(|s| (0..n_modes).map(move |j| sd * keyed_normal(seed, s as u64, j as u64)))
        .collect();
    Ok(BrownianPaths { n_modes, dt, n_steps, seed, increments })
}

impl BrownianPaths {
    pub fn increment(&self, step: usize) -> Result<&[f64]> {
        if step >= self.n_steps {
            return Err(Error::IndexOutOfRange { index: step, limit: self.n_steps });
        }
        Ok(&self.increments[step * self.n_modes..(step + 1) * self.n_modes])
    }

    /// `W_j(t_step)`, with `W(0) = 0`.
    pub fn value(&self, step: usize, mode: usize) -> f64 {
        (0..step.min(self.n_steps)).map(|s| self.increments[s * self.n_modes + mode]).sum()
    }
}

/// Builds a discretely divergence-free field from a stream function sampled
/// at cell corners, forced to zero on the boundary: `u1 = d_y psi`,
/// `u2 = -d_x psi`.
pub fn field_from_stream(grid: Grid2D, psi: impl Fn(f64, f64) -> f64) -> VField2D {
    let (nx, ny) = (grid.nx, grid.ny);
    let corner = |i: usize, j: usize| {
        if i == 0 || j == 0 || i == nx || j == ny {
            0.0
        } else {
            psi(i as f64 * grid.dx, j as f64 * grid.dy)
        }
    };
    let mut u = VField2D::zeros(grid);
    for i in 0..=nx {
        for j in 0..ny {
            u.comps[0][i * ny + j] = (corner(i, j + 1) - corner(i, j)) / grid.dy;
        }
    }
    for i in 0..nx {
        for j in 0..=ny {
            u.comps[1][i * (ny + 1) + j] = -(corner(i + 1, j) - corner(i, j)) / grid.dx;
        }
    }
    u
}

/// Analytic or file-based description of one coefficient field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModeSpec {
    /// Stream function `A sin(kx pi x/lx) sin(ky pi y/ly) sin(pi x/lx) sin(pi y/ly)`.
    Trig { kx: u32, ky: u32, amplitude: f64 },
    /// Gaussian bump stream function damped by `sin(pi x/lx) sin(pi y/ly)`.
    Bump { cx: f64, cy: f64, width: f64, amplitude: f64 },
    /// Field dump written by [`crate::dump::write_field`].
    Dump { dir: String, name: String },
}

impl ModeSpec {
    pub fn build(&self, grid: Grid2D) -> Result<VField2D> {
        let pi = std::f64::consts::PI;
        let (lx, ly) = (grid.lx, grid.ly);
        let envelope = move |x: f64, y: f64| (pi * x / lx).sin() * (pi * y / ly).sin();
        match *self {
            ModeSpec::Trig { kx, ky, amplitude } => Ok(field_from_stream(grid, |x, y| {
                amplitude
                    * (kx as f64 * pi * x / lx).sin()
                    * (ky as f64 * pi * y / ly).sin()
                    * envelope(x, y)
            })),
            ModeSpec::Bump { cx, cy, width, amplitude } => {
                if !(width > 0.0) {
                    return Err(Error::InvalidConfig("bump width must be positive".into()));
                }
                Ok(field_from_stream(grid, |x, y| {
                    let r2 = (x - cx).powi(2) + (y - cy).powi(2);
                    amplitude * (-r2 / (2.0 * width * width)).exp() * envelope(x, y)
                }))
            }
            ModeSpec::Dump { ref dir, ref name } => crate::dump::read_field(std::path::Path::new(dir), name, grid),
        }
    }
}

/// Rejects fields that are not admissible and discretely divergence free.
pub fn check_solenoidal(v: &VField2D) -> Result<()> {
    let scale = v.max_abs() / v.grid.dx.min(v.grid.dy);
    let div = divergence(v).max_abs();
    if v.normal_trace_max() > 0.0 || div > 1e-10 * scale.max(1e-300) {
        return Err(Error::NotSolenoidal(div));
    }
    Ok(())
}

/// Noise coefficients and deterministic forcing, in 2D and lifted to every
/// thickness of the ladder.
#[derive(Clone, Debug)]
pub struct ForcingFamily {
    pub g2d: Vec<VField2D>,
    pub f2d: VField2D,
    pub grids: Vec<Grid3D>,
    /// `lifts[r][j] = retract(g2d[j])` on `grids[r]`.
    pub lifts: Vec<Vec<VField3D>>,
    pub f3d: Vec<VField3D>,
}

pub fn make_forcing(g2d: Vec<VField2D>, f2d: VField2D, grids: &[Grid3D]) -> Result<ForcingFamily> {
    if g2d.len() > MAX_MODES {
        return Err(Error::InvalidConfig(format!("at most {MAX_MODES} noise modes are supported")));
    }
    for g in g2d.iter().chain(std::iter::once(&f2d)) {
        if g.grid != f2d.grid {
            return Err(Error::GridMismatch);
        }
    }
    for g in &g2d {
        check_solenoidal(g)?;
    }
    let mut lifts = Vec::with_capacity(grids.len());
    let mut f3d = Vec::with_capacity(grids.len());
    for grid in grids {
        lifts.push(g2d.iter().map(|g| retract(g, *grid)).collect::<Result<Vec<_>>>()?);
        f3d.push(retract(&f2d, *grid)?);
    }
    Ok(ForcingFamily { g2d, f2d, grids: grids.to_vec(), lifts, f3d })
}

fn combine<G: crate::grid::Geometry>(fields: &[crate::grid::VField<G>], dw: &[f64], grid: G) -> crate::grid::VField<G> {
    let mut out = crate::grid::VField::zeros(grid);
    for (g, w) in fields.iter().zip(dw) {
        out.axpy(*w, g).expect("same grid");
    }
    out
}

impl ForcingFamily {
    pub fn n_modes(&self) -> usize {
        self.g2d.len()
    }

    fn check_paths(&self, paths: &BrownianPaths) -> Result<()> {
        if paths.n_modes != self.n_modes() {
            return Err(Error::InvalidConfig(format!(
                "paths carry {} modes but the family has {}",
                paths.n_modes,
                self.n_modes()
            )));
        }
        Ok(())
    }

    /// `sum_j g^j dW_j` on the base grid.
    pub fn increment_2d(&self, paths: &BrownianPaths, step: usize) -> Result<VField2D> {
        self.check_paths(paths)?;
        Ok(combine(&self.g2d, paths.increment(step)?, self.f2d.grid))
    }

    /// `sum_j retract(g^j) dW_j` on rung `rung` of the ladder, with the same
    /// increments as the 2D run.
    pub fn increment_3d(&self, rung: usize, paths: &BrownianPaths, step: usize) -> Result<VField3D> {
        self.check_paths(paths)?;
        let lifts = self.lifts.get(rung).ok_or(Error::IndexOutOfRange { index: rung, limit: self.lifts.len() })?;
        Ok(combine(lifts, paths.increment(step)?, self.grids[rung]))
    }

    /// Hilbert-Schmidt norm `sum_j ||g^j||^2`.
    pub fn hs_norm_sq_2d(&self) -> f64 {
        self.g2d.iter().map(|g| g.norm_sq()).sum()
    }

    pub fn hs_norm_sq_3d(&self, rung: usize) -> f64 {
        self.lifts[rung].iter().map(|g| g.norm_sq()).sum()
    }
}
