//! Semi-implicit Euler-Maruyama integrators for the stochastic
//! Navier-Stokes equations on the thin domain and on its 2D base.
//!
//! Both dimensions run through one generic stepper. Each step
//!
//! 1. adds the noise increment, `v = u^n + G dW`;
//! 2. advects explicitly, `w = v - dt B(v, v)`;
//! 3. solves `(I - nu dt laplacian) u^{n+1} + grad q = w + dt f`, `div u^{n+1} = 0`.
//!
//! Step 3 is an exact saddle-point solve, so the new state is discretely
//! divergence free and the pressure is the Lagrange multiplier of that
//! constraint. Testing step 3 with `u^{n+1}` gives the pathwise energy
//! balance recorded in [`StepDiagnostics`]; the only term without a sign is
//! `dt^2 ||B(v, v)||^2` from the explicit advection.

use serde::{Deserialize, Serialize};

use crate::advect::{bilinear, trilinear};
use crate::error::{Error, Result};
use crate::grid::{grad_norm_sq, Geometry, Grid2D, Grid3D, SField, VField, VField2D, VField3D};
use crate::noise::{BrownianPaths, ForcingFamily};
use crate::stokes::{inverse_laplacian_norm_sq, project_cg, Projector, StokesSolver};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdvectionScheme {
    /// Skew-symmetric centred advection.
    #[default]
    Skew,
    /// Linear Stokes dynamics.
    Off,
}

/// How [`project_div_free`] solves the pressure Poisson problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PoissonMethod {
    /// Exact solve in the discrete cosine eigenbasis.
    #[default]
    Spectral,
    /// Jacobi-preconditioned conjugate gradients.
    Cg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverParams {
    pub nu: f64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(default = "default_poisson_tol")]
    pub poisson_tol: f64,
    #[serde(default = "default_poisson_max_iter")]
    pub poisson_max_iter: usize,
    #[serde(default)]
    pub poisson: PoissonMethod,
    #[serde(default)]
    pub advection: AdvectionScheme,
    /// Relative tolerance on the per-step energy residual.
    #[serde(default = "default_energy_tol")]
    pub energy_tol: f64,
    /// Keep every `snapshot_every`-th state (0 keeps only the endpoints).
    #[serde(default)]
    pub snapshot_every: usize,
}

fn default_poisson_tol() -> f64 {
    1e-10
}
fn default_poisson_max_iter() -> usize {
    10_000
}
fn default_energy_tol() -> f64 {
    1e-8
}

impl SolverParams {
    pub fn new(nu: f64, dt: f64, t_final: f64) -> Self {
        SolverParams {
            nu,
            dt,
            t_final,
            poisson_tol: default_poisson_tol(),
            poisson_max_iter: default_poisson_max_iter(),
            poisson: PoissonMethod::Spectral,
            advection: AdvectionScheme::Skew,
            energy_tol: default_energy_tol(),
            snapshot_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive and finite (got {v})")))
            }
        };
        positive("nu", self.nu)?;
        positive("dt", self.dt)?;
        positive("T", self.t_final)?;
        positive("poisson_tol", self.poisson_tol)?;
        positive("energy_tol", self.energy_tol)?;
        if self.poisson_max_iter == 0 {
            return Err(Error::InvalidConfig("poisson_max_iter must be at least 1".into()));
        }
        crate::noise::step_count(self.dt, self.t_final)?;
        Ok(())
    }

    pub fn n_steps(&self) -> Result<usize> {
        crate::noise::step_count(self.dt, self.t_final)
    }
}

/// Skew-symmetric trilinear form on the thin domain.
pub fn trilinear_b3(u: &VField3D, v: &VField3D, w: &VField3D) -> Result<f64> {
    trilinear(u, v, w)
}

/// Skew-symmetric trilinear form on the base domain.
pub fn trilinear_b2(u: &VField2D, v: &VField2D, w: &VField2D) -> Result<f64> {
    trilinear(u, v, w)
}

/// Leray projection `(u - grad phi, phi)` with the method chosen in `params`.
pub fn project_div_free<G: Geometry>(u: &VField<G>, params: &SolverParams) -> Result<(VField<G>, SField<G>)> {
    match params.poisson {
        PoissonMethod::Spectral => Ok(Projector::new(u.grid).project(u)),
        PoissonMethod::Cg => project_cg(u, params.poisson_tol, params.poisson_max_iter),
    }
}

/// Terms of the discrete energy balance for one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// `||u^{n+1}||^2`.
    pub energy: f64,
    /// `||grad u^{n+1}||^2`.
    pub enstrophy: f64,
    /// `<G dW, u^n>`.
    pub noise_work: f64,
    /// `||G dW||^2`, the realised quadratic variation of the noise.
    pub noise_qv: f64,
    /// `||u^{n+1}||^2 + nu dt ||grad u^{n+1}||^2`.
    pub lhs: f64,
    /// `||u^n||^2 + (dt/nu) ||f||_*^2 + 2 <G dW, u^n> + ||G dW||^2`.
    pub rhs: f64,
    /// `max(0, lhs - rhs)`.
    pub residual: f64,
}

/// Reusable per-grid integrator state.
pub struct Stepper<G: Geometry> {
    params: SolverParams,
    stokes: StokesSolver<G>,
    forcing: VField<G>,
    forcing_dual_sq: f64,
}

impl<G: Geometry> Stepper<G> {
    pub fn new(params: &SolverParams, forcing: VField<G>) -> Result<Self> {
        params.validate()?;
        let stokes = StokesSolver::new(forcing.grid, 1.0, params.nu * params.dt)?;
        let forcing_dual_sq = inverse_laplacian_norm_sq(stokes.bases(), &forcing);
        Ok(Stepper { params: params.clone(), stokes, forcing, forcing_dual_sq })
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    pub fn grid(&self) -> G {
        self.forcing.grid
    }

    /// Squared discrete `H^{-1}` norm of the forcing.
    pub fn forcing_dual_sq(&self) -> f64 {
        self.forcing_dual_sq
    }

    /// Advances `u` by one step; `step` only labels errors.
    pub fn step(&self, u: &VField<G>, noise_inc: &VField<G>, step: usize) -> Result<(VField<G>, StepDiagnostics)> {
        if u.grid != self.grid() || noise_inc.grid != self.grid() {
            return Err(Error::GridMismatch);
        }
        let (nu, dt) = (self.params.nu, self.params.dt);
        let energy_before = u.norm_sq();
        let noise_work = noise_inc.inner(u)?;
        let noise_qv = noise_inc.norm_sq();

        let v = u.add(noise_inc)?;
        let mut r = v.clone();
        if self.params.advection == AdvectionScheme::Skew {
            r.axpy(-dt, &bilinear(&v, &v)?)?;
        }
        r.axpy(dt, &self.forcing)?;
        let (next, _) = self.stokes.solve(&r)?;
        if !next.is_finite() {
            return Err(Error::NonFinite { step });
        }

        let energy = next.norm_sq();
        let enstrophy = grad_norm_sq(&next);
        let lhs = energy + nu * dt * enstrophy;
        let rhs = energy_before + dt / nu * self.forcing_dual_sq + 2.0 * noise_work + noise_qv;
        let diag = StepDiagnostics {
            energy,
            enstrophy,
            noise_work,
            noise_qv,
            lhs,
            rhs,
            residual: (lhs - rhs).max(0.0),
        };
        Ok((next, diag))
    }
}

/// One step of the 3D scheme. Builds the implicit solver on every call; use
/// [`Stepper`] inside loops.
pub fn step_em(state: &VField3D, params: &SolverParams, forcing_f: &VField3D, noise_inc: &VField3D) -> Result<VField3D> {
    Ok(Stepper::new(params, forcing_f.clone())?.step(state, noise_inc, 0)?.0)
}

/// One step of the 2D scheme.
pub fn step_em_2d(state: &VField2D, params: &SolverParams, forcing_f: &VField2D, noise_inc: &VField2D) -> Result<VField2D> {
    Ok(Stepper::new(params, forcing_f.clone())?.step(state, noise_inc, 0)?.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot<G: Geometry> {
    pub step: usize,
    pub t: f64,
    pub state: VField<G>,
}

/// Time series of one run. Every series has one entry per time level,
/// starting at `t = 0`; cumulative quantities and residuals are 0 there.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<G: Geometry> {
    pub times: Vec<f64>,
    pub snapshots: Vec<Snapshot<G>>,
    pub energy: Vec<f64>,
    pub enstrophy: Vec<f64>,
    /// Running `sum <G dW, u^n>`.
    pub noise_work: Vec<f64>,
    /// Running `sum ||G||_HS^2 dt`, the expected quadratic variation.
    pub noise_qv: Vec<f64>,
    /// Running `sum ||G dW||^2`, the realised quadratic variation.
    pub noise_qv_realized: Vec<f64>,
    pub energy_residual: Vec<f64>,
    /// Largest `residual / ||u^n||^2` over the run (0 for a zero state).
    pub max_relative_residual: f64,
    /// Number of steps whose residual exceeded `energy_tol * ||u^n||^2`.
    pub energy_violations: usize,
    pub final_state: VField<G>,
}

pub type Trajectory3D = Trajectory<Grid3D>;
pub type Trajectory2D = Trajectory<Grid2D>;

impl<G: Geometry> Trajectory<G> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `sup_t ||u||^2` over the recorded time levels.
    pub fn sup_energy(&self) -> f64 {
        self.energy.iter().cloned().fold(0.0, f64::max)
    }

    /// Left-endpoint sum of `||grad u||^2 dt` over the steps, matching the
    /// implicit dissipation of the scheme.
    pub fn dissipation(&self, dt: f64) -> f64 {
        self.enstrophy[1..].iter().sum::<f64>() * dt
    }

    /// Writes `t, energy, enstrophy, energy_residual` as CSV.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "energy", "enstrophy", "energy_residual"])?;
        for n in 0..self.len() {
            w.write_record(&[
                format!("{:e}", self.times[n]),
                format!("{:e}", self.energy[n]),
                format!("{:e}", self.enstrophy[n]),
                format!("{:e}", self.energy_residual[n]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Drives `stepper` from `u0` with noise increments from `noise(step)`,
/// calling `observe(step, t, state)` on every time level including `t = 0`.
pub fn integrate<G: Geometry>(
    stepper: &Stepper<G>,
    u0: &VField<G>,
    hs_norm_sq: f64,
    mut noise: impl FnMut(usize) -> Result<VField<G>>,
    mut observe: impl FnMut(usize, f64, &VField<G>) -> Result<()>,
) -> Result<Trajectory<G>> {
    let params = stepper.params();
    let n_steps = params.n_steps()?;
    if u0.grid != stepper.grid() {
        return Err(Error::GridMismatch);
    }
    if !u0.is_finite() {
        return Err(Error::NonFinite { step: 0 });
    }
    let keep = |n: usize| n == 0 || n == n_steps || (params.snapshot_every > 0 && n % params.snapshot_every == 0);
    let mut traj = Trajectory {
        times: Vec::with_capacity(n_steps + 1),
        snapshots: vec![],
        energy: Vec::with_capacity(n_steps + 1),
        enstrophy: Vec::with_capacity(n_steps + 1),
        noise_work: Vec::with_capacity(n_steps + 1),
        noise_qv: Vec::with_capacity(n_steps + 1),
        noise_qv_realized: Vec::with_capacity(n_steps + 1),
        energy_residual: Vec::with_capacity(n_steps + 1),
        max_relative_residual: 0.0,
        energy_violations: 0,
        final_state: u0.clone(),
    };
    traj.times.push(0.0);
    traj.energy.push(u0.norm_sq());
    traj.enstrophy.push(grad_norm_sq(u0));
    traj.noise_work.push(0.0);
    traj.noise_qv.push(0.0);
    traj.noise_qv_realized.push(0.0);
    traj.energy_residual.push(0.0);
    traj.snapshots.push(Snapshot { step: 0, t: 0.0, state: u0.clone() });
    observe(0, 0.0, u0)?;

    let mut u = u0.clone();
    for n in 0..n_steps {
        let inc = noise(n)?;
        let (next, d) = stepper.step(&u, &inc, n)?;
        let before = traj.energy[n];
        if before > 0.0 {
            traj.max_relative_residual = traj.max_relative_residual.max(d.residual / before);
        }
        if d.residual > params.energy_tol * before {
            traj.energy_violations += 1;
        }
        let t = (n + 1) as f64 * params.dt;
        traj.times.push(t);
        traj.energy.push(d.energy);
        traj.enstrophy.push(d.enstrophy);
        traj.noise_work.push(traj.noise_work[n] + d.noise_work);
        traj.noise_qv.push(traj.noise_qv[n] + hs_norm_sq * params.dt);
        traj.noise_qv_realized.push(traj.noise_qv_realized[n] + d.noise_qv);
        traj.energy_residual.push(d.residual);
        observe(n + 1, t, &next)?;
        if keep(n + 1) {
            traj.snapshots.push(Snapshot { step: n + 1, t, state: next.clone() });
        }
        u = next;
    }
    traj.final_state = u;
    Ok(traj)
}

fn check_paths(paths: &BrownianPaths, params: &SolverParams) -> Result<()> {
    if paths.n_steps != params.n_steps()? || (paths.dt - params.dt).abs() > 1e-15 * params.dt {
        return Err(Error::InvalidConfig("Brownian paths do not match the time grid".into()));
    }
    Ok(())
}

fn rung_of(family: &ForcingFamily, grid: Grid3D) -> Result<usize> {
    family.grids.iter().position(|g| *g == grid).ok_or(Error::GridMismatch)
}

/// Runs the 3D system on the rung of `family` matching `u0.grid`.
pub fn run3d(u0: &VField3D, params: &SolverParams, family: &ForcingFamily, paths: &BrownianPaths) -> Result<Trajectory3D> {
    let rung = rung_of(family, u0.grid)?;
    check_paths(paths, params)?;
    let stepper = Stepper::new(params, family.f3d[rung].clone())?;
    run3d_with(&stepper, u0, family, paths, |_, _, _| Ok(()))
}

/// [`run3d`] with a prebuilt stepper and an observer.
pub fn run3d_with(
    stepper: &Stepper<Grid3D>,
    u0: &VField3D,
    family: &ForcingFamily,
    paths: &BrownianPaths,
    observe: impl FnMut(usize, f64, &VField3D) -> Result<()>,
) -> Result<Trajectory3D> {
    let rung = rung_of(family, u0.grid)?;
    check_paths(paths, stepper.params())?;
    integrate(stepper, u0, family.hs_norm_sq_3d(rung), |n| family.increment_3d(rung, paths, n), observe)
}

/// Runs the 2D limit system driven by the same Brownian paths.
pub fn run2d(u0: &VField2D, params: &SolverParams, family: &ForcingFamily, paths: &BrownianPaths) -> Result<Trajectory2D> {
    check_paths(paths, params)?;
    let stepper = Stepper::new(params, family.f2d.clone())?;
    run2d_with(&stepper, u0, family, paths, |_, _, _| Ok(()))
}

pub fn run2d_with(
    stepper: &Stepper<Grid2D>,
    u0: &VField2D,
    family: &ForcingFamily,
    paths: &BrownianPaths,
    observe: impl FnMut(usize, f64, &VField2D) -> Result<()>,
) -> Result<Trajectory2D> {
    if u0.grid != family.f2d.grid {
        return Err(Error::GridMismatch);
    }
    check_paths(paths, stepper.params())?;
    integrate(stepper, u0, family.hs_norm_sq_2d(), |n| family.increment_2d(paths, n), observe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::avgops::{circ_m, retract, tilde_n};
    use crate::grid::{divergence, make_grid2d, make_grid3d};
    use crate::noise::{make_forcing, make_paths, ModeSpec};

    fn family(g2: Grid2D, grids: &[Grid3D], n_modes: u32, forcing: f64) -> ForcingFamily {
        let modes = (1..=n_modes).map(|k| ModeSpec::Trig { kx: k, ky: 1, amplitude: 0.3 }.build(g2).unwrap()).collect();
        let f = ModeSpec::Trig { kx: 1, ky: 2, amplitude: forcing }.build(g2).unwrap();
        make_forcing(modes, f, grids).unwrap()
    }

    #[test]
    fn zero_data_stays_zero() {
        let g = make_grid3d(6, 6, 2, 1.0, 1.0, 0.1).unwrap();
        let p = SolverParams::new(0.1, 0.01, 0.05);
        let z = VField3D::zeros(g);
        assert_eq!(step_em(&z, &p, &z, &z).unwrap(), z);
        let fam = family(g.base(), &[g], 0, 0.0);
        let traj = run3d(&z, &p, &fam, &make_paths(0, 0.01, 0.05, 3).unwrap()).unwrap();
        assert_eq!(traj.len(), 6);
        assert!(traj.energy.iter().all(|e| *e == 0.0));
        assert_eq!(traj.snapshots.len(), 2);
    }

    #[test]
    fn forced_noisy_run_keeps_energy_balance_and_divergence() {
        let g2 = make_grid2d(10, 10, 1.0, 1.0).unwrap();
        let g3 = make_grid3d(10, 10, 4, 1.0, 1.0, 0.2).unwrap();
        let fam = family(g2, &[g3], 3, 2.0);
        let mut p = SolverParams::new(0.05, 0.01, 0.3);
        p.snapshot_every = 10;
        let paths = make_paths(3, p.dt, p.t_final, 11).unwrap();
        let u0 = retract(&ModeSpec::Trig { kx: 2, ky: 2, amplitude: 0.5 }.build(g2).unwrap(), g3).unwrap();
        let t = run3d(&u0, &p, &fam, &paths).unwrap();
        assert_eq!(t.energy_violations, 0, "max rel residual {}", t.max_relative_residual);
        assert_eq!(t.snapshots.len(), 4);
        for s in &t.snapshots {
            assert!(divergence(&s.state).max_abs() < 1e-10 * s.state.max_abs().max(1.0) / g3.dz);
        }
        let again = run3d(&u0, &p, &fam, &paths).unwrap();
        assert_eq!(t, again);
        let t2 = run2d(&circ_m(&u0), &p, &fam, &paths).unwrap();
        assert!(circ_m(&t.final_state).sub(&t2.final_state).unwrap().max_abs() < 1e-12);
        assert!(tilde_n(&t.final_state).max_abs() < 1e-12);
        assert_eq!(t2.energy_violations, 0);
    }

    #[test]
    fn viscous_decay_is_monotone() {
        let g2 = make_grid2d(8, 8, 1.0, 1.0).unwrap();
        let fam = family(g2, &[], 0, 0.0);
        let p = SolverParams::new(0.5, 0.01, 0.2);
        let u0 = ModeSpec::Bump { cx: 0.5, cy: 0.5, width: 0.2, amplitude: 1.0 }.build(g2).unwrap();
        let t = run2d(&u0, &p, &fam, &make_paths(0, p.dt, p.t_final, 0).unwrap()).unwrap();
        assert!(t.energy.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let g2 = make_grid2d(6, 6, 1.0, 1.0).unwrap();
        let g3 = make_grid3d(6, 6, 2, 1.0, 1.0, 0.1).unwrap();
        let fam = family(g2, &[g3], 1, 0.0);
        let p = SolverParams::new(0.1, 0.01, 0.05);
        let u0 = VField3D::zeros(g3.with_eps(0.2).unwrap());
        let paths = make_paths(1, 0.01, 0.05, 0).unwrap();
        assert!(matches!(run3d(&u0, &p, &fam, &paths), Err(Error::GridMismatch)));
        let short = make_paths(1, 0.01, 0.04, 0).unwrap();
        assert!(run3d(&VField3D::zeros(g3), &p, &fam, &short).is_err());
        assert!(SolverParams::new(-1.0, 0.01, 0.05).validate().is_err());
        let mut bad = VField2D::zeros(g2);
        bad.comps[0][10] = f64::NAN;
        assert!(matches!(run2d(&bad, &p, &fam, &paths), Err(Error::NonFinite { step: 0 })));
    }
}
