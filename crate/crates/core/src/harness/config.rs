//! Experiment configuration, read from TOML or JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, Grid3D, VField2D, VField3D};
use crate::noise::{make_forcing, ForcingFamily, ModeSpec};
use crate::nse::{AdvectionScheme, PoissonMethod, SolverParams};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    /// Vertical cells, the same on every rung so `dz` shrinks with `eps`.
    pub nz: usize,
    #[serde(default = "one")]
    pub lx: f64,
    #[serde(default = "one")]
    pub ly: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSpec {
    /// Noise coefficients `g^1 .. g^N`.
    #[serde(default)]
    pub noise: Vec<ModeSpec>,
    /// Deterministic body force; zero when absent.
    #[serde(default)]
    pub body: Option<ModeSpec>,
}

/// 2D initial velocity `u0` and the z-dependent perturbation added on each
/// rung. The perturbation is the horizontal field of `shape` times
/// `cos(pi z / eps)`, rescaled to `L^2(Q_eps)` norm
/// `relative_size * ||u0||_{L^2(Q)} * eps^(1/2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub base: Option<ModeSpec>,
    #[serde(default)]
    pub perturbation: Option<ModeSpec>,
    #[serde(default = "one")]
    pub relative_size: f64,
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec { base: None, perturbation: None, relative_size: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    /// Sample seeds are derived from this when `list` is absent.
    #[serde(default)]
    pub base: u64,
    #[serde(default)]
    pub list: Option<Vec<u64>>,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { base: 0, list: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Per-step energy residual relative to `||u^n||^2`.
    #[serde(default = "tol_energy")]
    pub energy: f64,
    #[serde(default = "tol_poisson")]
    pub poisson: f64,
    #[serde(default = "tol_err_slope")]
    pub err_slope: f64,
    #[serde(default = "tol_beta_p2")]
    pub beta_p2_slope: f64,
    #[serde(default = "tol_beta_p4")]
    pub beta_p4_slope: f64,
    /// Largest tolerated downward log-log slope for quantities that must not
    /// grow as `eps` decreases.
    #[serde(default = "tol_trend")]
    pub trend: f64,
}

fn tol_energy() -> f64 {
    1e-8
}
fn tol_poisson() -> f64 {
    1e-10
}
fn tol_err_slope() -> f64 {
    0.5
}
fn tol_beta_p2() -> f64 {
    0.9
}
fn tol_beta_p4() -> f64 {
    1.8
}
fn tol_trend() -> f64 {
    0.1
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            energy: tol_energy(),
            poisson: tol_poisson(),
            err_slope: tol_err_slope(),
            beta_p2_slope: tol_beta_p2(),
            beta_p4_slope: tol_beta_p4(),
            trend: tol_trend(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "schema")]
    pub schema_version: u32,
    pub grid: GridSpec,
    pub eps_ladder: Vec<f64>,
    pub nu: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub dt: f64,
    pub n_samples: usize,
    #[serde(default)]
    pub forcing: ForcingSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_p_list")]
    pub p_list: Vec<u32>,
    /// Window lengths for the modulus-of-continuity diagnostic.
    #[serde(default)]
    pub modulus_deltas: Vec<f64>,
    #[serde(default)]
    pub advection: AdvectionScheme,
    #[serde(default)]
    pub poisson: PoissonMethod,
}

fn schema() -> u32 {
    CONFIG_SCHEMA_VERSION
}

fn default_p_list() -> Vec<u32> {
    vec![2, 4]
}

/// splitmix64 finaliser, used to spread consecutive sample indices.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SimConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: SimConfig = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let c: SimConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    /// Reads JSON when the extension is `.json`, TOML otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {}", self.schema_version));
        }
        if self.eps_ladder.is_empty() {
            return bad("eps_ladder is empty".into());
        }
        if self.eps_ladder.iter().any(|e| !(*e > 0.0 && *e < 0.5)) {
            return bad("eps values must lie in (0, 1/2)".into());
        }
        if self.eps_ladder.windows(2).any(|w| w[1] >= w[0]) {
            return bad("eps_ladder must be strictly decreasing".into());
        }
        if self.n_samples == 0 {
            return bad("n_samples must be at least 1".into());
        }
        if self.p_list.iter().any(|p| *p < 2) {
            return bad("moment orders must be at least 2".into());
        }
        if let Some(list) = &self.seeds.list {
            if list.len() < self.n_samples {
                return bad(format!("{} seeds listed for {} samples", list.len(), self.n_samples));
            }
        }
        if self.initial.relative_size < 0.0 || !self.initial.relative_size.is_finite() {
            return bad("initial.relative_size must be non-negative".into());
        }
        if self.modulus_deltas.iter().any(|d| !(*d >= 0.0 && *d <= self.t_final)) {
            return bad("modulus_deltas must lie in [0, T]".into());
        }
        self.solver_params().validate()?;
        self.base_grid()?;
        for e in &self.eps_ladder {
            self.grid3d(*e)?;
        }
        Ok(())
    }

    pub fn solver_params(&self) -> SolverParams {
        let mut p = SolverParams::new(self.nu, self.dt, self.t_final);
        p.poisson_tol = self.tolerances.poisson;
        p.energy_tol = self.tolerances.energy;
        p.advection = self.advection;
        p.poisson = self.poisson;
        p
    }

    pub fn base_grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly)
    }

    pub fn grid3d(&self, eps: f64) -> Result<Grid3D> {
        Grid3D::new(self.grid.nx, self.grid.ny, self.grid.nz, self.grid.lx, self.grid.ly, eps)
    }

    pub fn ladder_grids(&self) -> Result<Vec<Grid3D>> {
        self.eps_ladder.iter().map(|e| self.grid3d(*e)).collect()
    }

    pub fn sample_seeds(&self) -> Vec<u64> {
        match &self.seeds.list {
            Some(list) => list[..self.n_samples].to_vec(),
            None => (0..self.n_samples as u64).map(|i| mix(self.seeds.base ^ mix(i))).collect(),
        }
    }

    /// Forcing family on the given thin grids.
    pub fn family(&self, grids: &[Grid3D]) -> Result<ForcingFamily> {
        let g2 = self.base_grid()?;
        let modes = self.forcing.noise.iter().map(|m| m.build(g2)).collect::<Result<Vec<_>>>()?;
        let body = match &self.forcing.body {
            Some(m) => m.build(g2)?,
            None => VField2D::zeros(g2),
        };
        make_forcing(modes, body, grids)
    }

    pub fn initial_2d(&self) -> Result<VField2D> {
        let g2 = self.base_grid()?;
        match &self.initial.base {
            Some(m) => m.build(g2),
            None => Ok(VField2D::zeros(g2)),
        }
    }

    /// `retract(u0)` plus the scaled z-dependent perturbation on `grid`.
    pub fn initial_3d(&self, grid: Grid3D) -> Result<VField3D> {
        let u0 = self.initial_2d()?;
        let mut u = crate::avgops::retract(&u0, grid)?;
        if let Some(shape) = &self.initial.perturbation {
            let size = self.initial.relative_size * u0.norm() * grid.eps.sqrt();
            u.axpy(1.0, &vertical_perturbation(&shape.build(grid.base())?, grid, size)?)?;
        }
        Ok(u)
    }
}

/// `h(x, y) cos(pi z / eps)` with zero vertical velocity, rescaled to
/// `L^2` norm `size`. Divergence free because `h` is, and its vertical mean
/// vanishes in every column, so it only changes the oscillating part.
pub fn vertical_perturbation(h: &VField2D, grid: Grid3D, size: f64) -> Result<VField3D> {
    if !grid.pairs_with(&h.grid) {
        return Err(Error::GridMismatch);
    }
    let nz = grid.nz;
    let profile: Vec<f64> =
        (0..nz).map(|k| (std::f64::consts::PI * (k as f64 + 0.5) / nz as f64).cos()).collect();
    let mut u = VField3D::zeros(grid);
    for c in 0..2 {
        u.comps[c] = h.comps[c].iter().flat_map(|v| profile.iter().map(move |p| v * p)).collect();
    }
    let n = u.norm();
    if n > 0.0 {
        u.scale(size / n);
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::avgops::{circ_m, tilde_n};
    use crate::grid::divergence;

    const MINIMAL: &str = r#"
        eps_ladder = [0.25, 0.125]
        nu = 0.05
        T = 0.1
        dt = 0.01
        n_samples = 3
        [grid]
        nx = 8
        ny = 8
        nz = 4
        [forcing]
        noise = [{ kind = "trig", kx = 1, ky = 1, amplitude = 0.5 }]
        [initial]
        base = { kind = "trig", kx = 1, ky = 2, amplitude = 1.0 }
        perturbation = { kind = "trig", kx = 2, ky = 1, amplitude = 1.0 }
        [seeds]
        base = 5
    "#;

    #[test]
    fn parses_and_builds_initial_data() {
        let c = SimConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.p_list, vec![2, 4]);
        assert_eq!(c.tolerances, Tolerances::default());
        let seeds = c.sample_seeds();
        assert_eq!(seeds.len(), 3);
        assert!(seeds[0] != seeds[1] && seeds[1] != seeds[2]);
        let u0 = c.initial_2d().unwrap();
        for g in c.ladder_grids().unwrap() {
            let u = c.initial_3d(g).unwrap();
            assert!(circ_m(&u).sub(&u0).unwrap().max_abs() < 1e-14);
            let b = tilde_n(&u).norm();
            assert!((b - u0.norm() * g.eps.sqrt()).abs() < 1e-12 * b);
            assert!(divergence(&u).max_abs() < 1e-10 * u.max_abs() / g.dz);
        }
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(SimConfig::from_json_str(&json).unwrap(), c);
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            MINIMAL.replace("[0.25, 0.125]", "[0.125, 0.25]"),
            MINIMAL.replace("[0.25, 0.125]", "[0.5, 0.25]"),
            MINIMAL.replace("n_samples = 3", "n_samples = 0"),
            MINIMAL.replace("dt = 0.01", "dt = 0.03"),
            MINIMAL.replace("nu = 0.05", "nu = 0.05\nbogus = 1"),
            MINIMAL.replace("nz = 4", "nz = 1"),
        ];
        for text in cases {
            assert!(SimConfig::from_toml_str(&text).is_err(), "{text}");
        }
    }
}
