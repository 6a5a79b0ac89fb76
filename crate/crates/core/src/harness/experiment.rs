//! The thin-domain convergence experiment: coupled 2D and 3D ensembles,
//! error integrals, scaling ledgers and slope fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::avgops::{circ_m, tilde_n};
use crate::error::{Error, Result};
use crate::grid::{grad_norm_sq, Geometry, Grid2D, Grid3D, VField2D, VField3D};
use crate::harness::config::SimConfig;
use crate::harness::report::{CheckRow, ConvergenceReport, IncompleteCell, LedgerRow, SlopeRow, REPORT_SCHEMA_VERSION};
use crate::noise::{make_paths, ForcingFamily};
use crate::nse::{run2d_with, run3d_with, Stepper, Trajectory};
use crate::stats::{loglog_fit, mean, std_error};
use crate::stokes::StokesSolver;

/// Trapezoidal rule on a uniform grid.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => dt * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}

/// Per-sample, per-thickness statistics of one coupled 3D run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RungStats {
    /// `int_0^T ||alpha - u||^2_{L^2(Q)} dt`.
    pub err_l2: f64,
    /// `sup_t ||alpha||^2_{L^2(Q)}`.
    pub sup_alpha: f64,
    /// `int_0^T ||grad' alpha||^2 dt`.
    pub diss_alpha: f64,
    /// `sup_t ||beta||^2_{L^2(Q_eps)}`.
    pub sup_beta: f64,
    /// `int_0^T ||grad beta||^2 dt`.
    pub diss_beta: f64,
    /// `sup_t ||u||^p` for each configured `p`.
    pub sup_u_p: Vec<f64>,
    /// `int_0^T ||u||^(p-2) ||grad u||^2 dt` for each `p`.
    pub int_u_p: Vec<f64>,
    pub max_relative_residual: f64,
    pub energy_violations: usize,
    pub steps: usize,
    /// Modulus of continuity of `alpha` for each configured window.
    pub modulus: Vec<f64>,
}

impl RungStats {
    /// `sup_t ||beta||^p`, exact since `sup` commutes with monotone powers.
    pub fn sup_beta_p(&self, p: u32) -> f64 {
        self.sup_beta.powf(p as f64 / 2.0)
    }
}

/// Largest lag-`k` distance `max_n ||z_{n+k} - z_n||` for `k = 1..=max_lag`.
fn lag_profile(z: &[VField2D], max_lag: usize) -> Vec<f64> {
    (1..=max_lag)
        .map(|k| {
            z.iter()
                .zip(z.iter().skip(k))
                .map(|(a, b)| b.sub(a).expect("same grid").norm())
                .fold(0.0, f64::max)
        })
        .collect()
}

fn window(delta: f64, dt: f64) -> Result<usize> {
    if delta == 0.0 {
        return Ok(0);
    }
    if !(delta >= dt * (1.0 - 1e-12)) {
        return Err(Error::Domain(format!("modulus window {delta} is shorter than the time step {dt}")));
    }
    Ok((delta / dt * (1.0 + 1e-12)).floor() as usize)
}

/// Series `A^{-1} alpha(t_n)` used by the negative-norm modulus of continuity.
pub struct DualSeries {
    dt: f64,
    z: Vec<VField2D>,
}

impl DualSeries {
    /// `inverse` must be the Stokes solver with `alpha = 0, beta = 1`.
    pub fn new(series: &[VField2D], dt: f64, inverse: &StokesSolver<Grid2D>) -> Result<Self> {
        if inverse.coefficients() != (0.0, 1.0) {
            return Err(Error::InvalidConfig("modulus of continuity needs the plain Stokes operator".into()));
        }
        let z = series.iter().map(|a| inverse.solve(a).map(|r| r.0)).collect::<Result<Vec<_>>>()?;
        Ok(DualSeries { dt, z })
    }

    /// `sup_{|t - s| <= delta} ||A^{-1}(alpha(t) - alpha(s))||` over the grid times.
    pub fn modulus(&self, delta: f64) -> Result<f64> {
        let w = window(delta, self.dt)?.min(self.z.len().saturating_sub(1));
        Ok(lag_profile(&self.z, w).into_iter().fold(0.0, f64::max))
    }

    pub fn moduli(&self, deltas: &[f64]) -> Result<Vec<f64>> {
        let ws = deltas.iter().map(|d| window(*d, self.dt)).collect::<Result<Vec<_>>>()?;
        let cap = self.z.len().saturating_sub(1);
        let lags = lag_profile(&self.z, ws.iter().copied().max().unwrap_or(0).min(cap));
        Ok(ws.iter().map(|w| lags[..(*w).min(cap)].iter().cloned().fold(0.0, f64::max)).collect())
    }
}

/// Modulus of continuity of a uniformly sampled 2D series in the dual norm
/// `||A^{-1} .||`, with `A` the discrete Stokes operator.
pub fn modulus_of_continuity(series: &[VField2D], dt: f64, delta: f64) -> Result<f64> {
    let Some(first) = series.first() else { return Ok(0.0) };
    window(delta, dt)?;
    if delta == 0.0 {
        return Ok(0.0);
    }
    let inverse = StokesSolver::new(first.grid, 0.0, 1.0)?;
    DualSeries::new(series, dt, &inverse)?.modulus(delta)
}

/// Pathwise energy balance of a single trajectory, telescoped over steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    /// `max_n ( ||u^n||^2 + nu dt sum_{k <= n} ||grad u^k||^2 )`.
    pub lhs: f64,
    /// `||u_0||^2 + (T/nu) ||f||_*^2 + 2 max_n M_n + sum ||G dW||^2`, with
    /// `M_n` the discrete noise martingale.
    pub rhs: f64,
    /// Largest violation of the telescoped inequality at any time level,
    /// relative to `sup_t ||u||^2` (0 when it holds everywhere).
    pub worst_gap: f64,
    pub max_relative_residual: f64,
    pub violations: usize,
}

pub fn energy_ledger<G: Geometry>(traj: &Trajectory<G>, forcing_dual_sq: f64, nu: f64, dt: f64) -> EnergyLedger {
    let n = traj.len();
    let scale = traj.sup_energy();
    let mut worst: f64 = 0.0;
    let mut diss = 0.0;
    let mut lhs_max = traj.energy[0];
    for k in 1..n {
        diss += nu * dt * traj.enstrophy[k];
        let lhs = traj.energy[k] + diss;
        lhs_max = lhs_max.max(lhs);
        let rhs = traj.energy[0]
            + k as f64 * dt / nu * forcing_dual_sq
            + 2.0 * traj.noise_work[k]
            + traj.noise_qv_realized[k];
        if scale > 0.0 {
            worst = worst.max((lhs - rhs) / scale);
        }
    }
    let sup_m = traj.noise_work.iter().fold(0.0f64, |a, b| a.max(*b));
    let t = dt * (n.saturating_sub(1)) as f64;
    EnergyLedger {
        lhs: lhs_max,
        rhs: traj.energy[0] + t / nu * forcing_dual_sq + 2.0 * sup_m + traj.noise_qv_realized.last().copied().unwrap_or(0.0),
        worst_gap: worst,
        max_relative_residual: traj.max_relative_residual,
        violations: traj.energy_violations,
    }
}

/// Everything shared by the samples of one experiment.
pub struct Experiment {
    pub config: SimConfig,
    pub grids: Vec<Grid3D>,
    pub family: ForcingFamily,
    stepper2d: Stepper<Grid2D>,
    steppers3d: Vec<Stepper<Grid3D>>,
    inverse: Option<StokesSolver<Grid2D>>,
    u0_2d: VField2D,
    u0_3d: Vec<VField3D>,
}

impl Experiment {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let grids = config.ladder_grids()?;
        let family = config.family(&grids)?;
        let params = config.solver_params();
        let stepper2d = Stepper::new(&params, family.f2d.clone())?;
        let steppers3d =
            family.f3d.iter().map(|f| Stepper::new(&params, f.clone())).collect::<Result<Vec<_>>>()?;
        let inverse = if config.modulus_deltas.is_empty() {
            None
        } else {
            Some(StokesSolver::new(family.f2d.grid, 0.0, 1.0)?)
        };
        let u0_2d = config.initial_2d()?;
        let u0_3d = grids.iter().map(|g| config.initial_3d(*g)).collect::<Result<Vec<_>>>()?;
        let exp = Experiment { config: config.clone(), grids, family, stepper2d, steppers3d, inverse, u0_2d, u0_3d };
        exp.check_coupling()?;
        Ok(exp)
    }

    /// The averaged 3D increment must equal the 2D increment bit for bit.
    fn check_coupling(&self) -> Result<()> {
        let c = &self.config;
        let paths = make_paths(self.family.n_modes(), c.dt, c.t_final, c.sample_seeds()[0])?;
        let two = self.family.increment_2d(&paths, 0)?;
        for r in 0..self.grids.len() {
            if circ_m(&self.family.increment_3d(r, &paths, 0)?) != two {
                return Err(Error::Domain(format!("noise coupling broken on rung eps = {}", self.grids[r].eps)));
            }
        }
        Ok(())
    }

    /// Runs one sample: the 2D system, then every rung against it.
    pub fn run_sample(&self, seed: u64) -> Vec<Result<RungStats>> {
        let rungs = self.grids.len();
        let c = &self.config;
        let paths = match make_paths(self.family.n_modes(), c.dt, c.t_final, seed) {
            Ok(p) => p,
            Err(e) => return (0..rungs).map(|_| Err(e.clone_shallow())).collect(),
        };
        let mut limit = Vec::new();
        if let Err(e) = run2d_with(&self.stepper2d, &self.u0_2d, &self.family, &paths, |_, _, u| {
            limit.push(u.clone());
            Ok(())
        }) {
            return (0..rungs).map(|_| Err(e.clone_shallow())).collect();
        }
        (0..rungs).map(|r| self.run_rung(r, &paths, &limit)).collect()
    }

    fn run_rung(&self, r: usize, paths: &crate::noise::BrownianPaths, limit: &[VField2D]) -> Result<RungStats> {
        let c = &self.config;
        let n = limit.len();
        let mut err = Vec::with_capacity(n);
        let mut alpha_e = Vec::with_capacity(n);
        let mut alpha_g = Vec::with_capacity(n);
        let mut beta_e = Vec::with_capacity(n);
        let mut beta_g = Vec::with_capacity(n);
        let mut u_sq = Vec::with_capacity(n);
        let mut alphas = Vec::new();
        let keep_alpha = self.inverse.is_some();
        let traj = run3d_with(&self.steppers3d[r], &self.u0_3d[r], &self.family, paths, |k, _, u| {
            let alpha = circ_m(u);
            let beta = tilde_n(u);
            err.push(alpha.sub(&limit[k])?.norm_sq());
            alpha_e.push(alpha.norm_sq());
            alpha_g.push(grad_norm_sq(&alpha));
            beta_e.push(beta.norm_sq());
            beta_g.push(grad_norm_sq(&beta));
            u_sq.push(u.norm_sq());
            if keep_alpha {
                alphas.push(alpha);
            }
            Ok(())
        })?;
        let dt = c.dt;
        let sup = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
        let mut sup_u_p = vec![];
        let mut int_u_p = vec![];
        for &p in &c.p_list {
            let pf = p as f64;
            sup_u_p.push(u_sq.iter().map(|v| v.powf(pf / 2.0)).fold(0.0, f64::max));
            let integrand: Vec<f64> =
                u_sq.iter().zip(&traj.enstrophy).map(|(nsq, g)| nsq.powf(pf / 2.0 - 1.0) * g).collect();
            int_u_p.push(trapezoid(&integrand, dt));
        }
        let modulus = match &self.inverse {
            Some(inv) => DualSeries::new(&alphas, dt, inv)?.moduli(&c.modulus_deltas)?,
            None => vec![],
        };
        Ok(RungStats {
            err_l2: trapezoid(&err, dt),
            sup_alpha: sup(&alpha_e),
            diss_alpha: trapezoid(&alpha_g, dt),
            sup_beta: sup(&beta_e),
            diss_beta: trapezoid(&beta_g, dt),
            sup_u_p,
            int_u_p,
            max_relative_residual: traj.max_relative_residual,
            energy_violations: traj.energy_violations,
            steps: traj.len() - 1,
            modulus,
        })
    }
}

impl Error {
    /// Copies an error for fan-out to several report cells.
    fn clone_shallow(&self) -> Error {
        Error::Domain(self.to_string())
    }
}

fn row(eps: f64, metric: &str, samples: &[f64]) -> LedgerRow {
    LedgerRow { eps: Some(eps), metric: metric.to_string(), value: mean(samples), stderr: std_error(samples), n: samples.len() }
}

fn slope_row(metric: &str, eps: &[f64], values: &[f64]) -> Option<SlopeRow> {
    let fit = loglog_fit(eps, values)?;
    Some(SlopeRow { metric: metric.to_string(), slope: fit.slope, stderr: fit.slope_stderr, intercept: fit.intercept, n_points: eps.len() })
}

/// Per-thickness `E sup ||beta||^2 / eps`, `E int ||grad beta||^2 / eps`
/// and, for each `p`, the raw and `eps^{p/2}`-normalised `E sup ||beta||^p`.
pub fn beta_scaling_ledger(eps: f64, samples: &[RungStats], p_list: &[u32]) -> Result<Vec<LedgerRow>> {
    if samples.is_empty() {
        return Err(Error::Domain("beta ledger needs at least one sample".into()));
    }
    let pick = |f: &dyn Fn(&RungStats) -> f64| samples.iter().map(f).collect::<Vec<_>>();
    let mut rows = vec![
        row(eps, "beta_sup_over_eps", &pick(&|s| s.sup_beta / eps)),
        row(eps, "beta_grad_over_eps", &pick(&|s| s.diss_beta / eps)),
    ];
    for &p in p_list {
        let norm = eps.powf(p as f64 / 2.0);
        rows.push(row(eps, &format!("beta_sup_p{p}"), &pick(&|s| s.sup_beta_p(p))));
        rows.push(row(eps, &format!("beta_sup_p{p}_normalized"), &pick(&|s| s.sup_beta_p(p) / norm)));
    }
    Ok(rows)
}

/// Energy rows for `alpha` and the pathwise residual bookkeeping.
pub fn energy_rows(eps: f64, samples: &[RungStats], nu: f64) -> Vec<LedgerRow> {
    let pick = |f: &dyn Fn(&RungStats) -> f64| samples.iter().map(f).collect::<Vec<_>>();
    let steps: usize = samples.iter().map(|s| s.steps).sum();
    let bad: usize = samples.iter().map(|s| s.energy_violations).sum();
    let worst = samples.iter().map(|s| s.max_relative_residual).fold(0.0, f64::max);
    let mut rows = vec![
        row(eps, "sup_energy_alpha", &pick(&|s| s.sup_alpha)),
        row(eps, "energy_alpha", &pick(&|s| s.sup_alpha + nu * s.diss_alpha)),
    ];
    rows.push(LedgerRow { eps: Some(eps), metric: "energy_max_relative_residual".into(), value: worst, stderr: 0.0, n: samples.len() });
    rows.push(LedgerRow {
        eps: Some(eps),
        metric: "energy_violation_fraction".into(),
        value: if steps == 0 { 0.0 } else { bad as f64 / steps as f64 },
        stderr: 0.0,
        n: samples.len(),
    });
    rows
}

/// `E sup ||u||^p` and `E int ||u||^(p-2) ||grad u||^2`, both divided by
/// `eps^{p/2}` so that thicknesses are comparable.
pub fn moment_ledger(eps: f64, samples: &[RungStats], p_list: &[u32]) -> Vec<LedgerRow> {
    let mut rows = vec![];
    for (i, &p) in p_list.iter().enumerate() {
        let norm = eps.powf(p as f64 / 2.0);
        let sup: Vec<f64> = samples.iter().map(|s| s.sup_u_p[i] / norm).collect();
        let int: Vec<f64> = samples.iter().map(|s| s.int_u_p[i] / norm).collect();
        rows.push(row(eps, &format!("moment_sup_p{p}_normalized"), &sup));
        rows.push(row(eps, &format!("moment_int_p{p}_normalized"), &int));
    }
    rows
}

/// Runs the full ensemble. Samples run in parallel; the reduction visits
/// them in index order so the report does not depend on scheduling.
pub fn run_convergence(config: &SimConfig) -> Result<ConvergenceReport> {
    let exp = Experiment::new(config)?;
    let seeds = config.sample_seeds();
    let results: Vec<Vec<Result<RungStats>>> = seeds.par_iter().map(|s| exp.run_sample(*s)).collect();
    Ok(assemble(config, &seeds, results))
}

fn assemble(config: &SimConfig, seeds: &[u64], results: Vec<Vec<Result<RungStats>>>) -> ConvergenceReport {
    let ladder = &config.eps_ladder;
    let mut per_rung: Vec<Vec<RungStats>> = vec![vec![]; ladder.len()];
    let mut incomplete = vec![];
    for (i, sample) in results.into_iter().enumerate() {
        for (r, res) in sample.into_iter().enumerate() {
            match res {
                Ok(s) => per_rung[r].push(s),
                Err(e) => incomplete.push(IncompleteCell { sample: i, seed: seeds[i], eps: ladder[r], reason: e.to_string() }),
            }
        }
    }

    let mut rows = vec![];
    for (r, samples) in per_rung.iter().enumerate() {
        let eps = ladder[r];
        if samples.is_empty() {
            continue;
        }
        rows.push(row(eps, "err_L2", &samples.iter().map(|s| s.err_l2).collect::<Vec<_>>()));
        rows.extend(energy_rows(eps, samples, config.nu));
        rows.extend(beta_scaling_ledger(eps, samples, &config.p_list).expect("non-empty"));
        rows.extend(moment_ledger(eps, samples, &config.p_list));
        for (j, d) in config.modulus_deltas.iter().enumerate() {
            let sup = samples.iter().map(|s| s.modulus[j]).fold(0.0, f64::max);
            rows.push(LedgerRow { eps: Some(eps), metric: format!("modulus_delta_{d}"), value: sup, stderr: 0.0, n: samples.len() });
        }
    }

    let complete = per_rung.iter().all(|s| !s.is_empty());
    let series = |metric: &str| -> Vec<f64> {
        ladder
            .iter()
            .map(|e| rows.iter().find(|r| r.eps == Some(*e) && r.metric == metric).map_or(f64::NAN, |r| r.value))
            .collect()
    };
    let mut slopes = vec![];
    let mut checks = vec![];
    let tol = &config.tolerances;

    let err = series("err_L2");
    let mut slope_metrics = vec!["err_L2".to_string(), "energy_alpha".to_string()];
    for p in &config.p_list {
        slope_metrics.push(format!("beta_sup_p{p}"));
        slope_metrics.push(format!("moment_sup_p{p}_normalized"));
    }
    if complete && ladder.len() >= 2 {
        for m in &slope_metrics {
            if let Some(s) = slope_row(m, ladder, &series(m)) {
                slopes.push(s);
            }
        }
    }
    let slope_of = |m: &str| slopes.iter().find(|s: &&SlopeRow| s.metric == m).map(|s| s.slope);
    let bound = |name: &str, value: Option<f64>, threshold: f64, strict: bool, detail: &str| {
        let passed = value.is_some_and(|v| if strict { v > threshold } else { v >= threshold });
        CheckRow { name: name.into(), passed, value: value.unwrap_or(f64::NAN), threshold, detail: detail.into() }
    };

    let decreasing = complete && err.windows(2).all(|w| w[1] < w[0]);
    checks.push(CheckRow {
        name: "err_L2_strictly_decreasing".into(),
        passed: decreasing,
        value: err.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max),
        threshold: 1.0,
        detail: "largest ratio err(eps_{k+1}) / err(eps_k)".into(),
    });
    checks.push(bound("err_L2_slope", slope_of("err_L2"), tol.err_slope, true, "log-log slope of err_L2 against eps"));
    if config.p_list.contains(&2) {
        checks.push(bound("beta_p2_slope", slope_of("beta_sup_p2"), tol.beta_p2_slope, false, "log-log slope of E sup ||beta||^2"));
    }
    if config.p_list.contains(&4) {
        checks.push(bound("beta_p4_slope", slope_of("beta_sup_p4"), tol.beta_p4_slope, false, "log-log slope of E sup ||beta||^4"));
    }
    let violations: usize = per_rung.iter().flatten().map(|s| s.energy_violations).sum();
    let worst = per_rung.iter().flatten().map(|s| s.max_relative_residual).fold(0.0, f64::max);
    checks.push(CheckRow {
        name: "energy_inequality_pathwise".into(),
        passed: complete && violations == 0,
        value: worst,
        threshold: tol.energy,
        detail: format!("{violations} steps over tolerance"),
    });
    checks.push(bound(
        "energy_alpha_no_upward_trend",
        slope_of("energy_alpha"),
        -tol.trend,
        false,
        "log-log slope of E[sup ||alpha||^2 + nu int ||grad alpha||^2]",
    ));
    for p in &config.p_list {
        let m = format!("moment_sup_p{p}_normalized");
        checks.push(bound(&format!("{m}_no_upward_trend"), slope_of(&m), -tol.trend, false, "log-log slope against eps"));
    }
    if config.modulus_deltas.len() >= 2 {
        let mut order: Vec<usize> = (0..config.modulus_deltas.len()).collect();
        order.sort_by(|a, b| config.modulus_deltas[*a].total_cmp(&config.modulus_deltas[*b]));
        let monotone = ladder.iter().all(|e| {
            let vals: Vec<f64> = order
                .iter()
                .map(|j| series_at(&rows, *e, &format!("modulus_delta_{}", config.modulus_deltas[*j])))
                .collect();
            vals.windows(2).all(|w| w[0] <= w[1])
        });
        checks.push(CheckRow {
            name: "modulus_shrinks_with_delta".into(),
            passed: complete && monotone,
            value: f64::NAN,
            threshold: f64::NAN,
            detail: "ensemble sup of the modulus is non-decreasing in delta on every rung".into(),
        });
    }

    ConvergenceReport {
        schema_version: REPORT_SCHEMA_VERSION,
        eps_ladder: ladder.clone(),
        n_samples: config.n_samples,
        seeds: seeds.to_vec(),
        rows,
        slopes,
        checks,
        incomplete,
        config: config.clone(),
    }
}

fn series_at(rows: &[LedgerRow], eps: f64, metric: &str) -> f64 {
    rows.iter().find(|r| r.eps == Some(eps) && r.metric == metric).map_or(f64::NAN, |r| r.value)
}
