//! Oracles for the time integrators: discrete Stokes eigenmodes, projection
//! fixed points and kernels, z-invariance and 2D/3D parity.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thinflow::avgops::{circ_m, retract, tilde_n};
use thinflow::noise::{make_forcing, make_paths, ModeSpec};
use thinflow::nse::*;
use thinflow::stokes::Projector;
use thinflow::*;

mod common;
use common::eigen_decay_error;

#[test]
fn stokes_eigenmodes_decay_by_the_implicit_factor() {
    let e3 = eigen_decay_error(make_grid3d(5, 4, 3, 1.0, 1.3, 0.2).unwrap(), 0.3, 0.02);
    let e2 = eigen_decay_error(make_grid2d(7, 6, 1.0, 0.8).unwrap(), 0.3, 0.02);
    assert!(e3 < 1e-10 && e2 < 1e-10, "{e3:e} {e2:e}");
}

#[test]
fn projection_fixed_points_and_kernel() {
    let g = make_grid3d(12, 10, 6, 1.0, 1.0, 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = SolverParams::new(0.1, 0.01, 0.01);
    let mut cg = params.clone();
    cg.poisson = PoissonMethod::Cg;
    cg.poisson_tol = 1e-13;

    let u = VField3D::random(g, &mut rng);
    for p in [&params, &cg] {
        let (w, _) = project_div_free(&u, p).unwrap();
        assert!(divergence(&w).max_abs() * g.dz <= 1e-10 * u.max_abs());
        let (ww, _) = project_div_free(&w, p).unwrap();
        assert!(ww.sub(&w).unwrap().max_abs() <= 1e-10 * w.max_abs());
    }

    // a discrete gradient of a cell field is annihilated
    let psi = SField3D::from_fn(g, |x| (3.0 * x[0]).sin() * (x[1] * x[1]) + (x[2] / g.eps).cos());
    let grad = gradient(&psi);
    for p in [&params, &cg] {
        let (w, _) = project_div_free(&grad, p).unwrap();
        assert!(w.max_abs() <= 1e-9 * grad.max_abs(), "{}", w.max_abs());
    }

    let mut starved = cg.clone();
    starved.poisson_max_iter = 1;
    assert!(matches!(project_div_free(&u, &starved), Err(Error::SolverDiverged { .. })));
}

#[test]
fn trilinear_cancellation_on_solenoidal_fields() {
    let g = make_grid3d(10, 9, 4, 1.0, 1.0, 0.05).unwrap();
    let pr = Projector::new(g);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let u = pr.project(&VField3D::random(g, &mut rng)).0;
        let v = pr.project(&VField3D::random(g, &mut rng)).0;
        let w = VField3D::random(g, &mut rng);
        let scale = u.max_abs() * v.norm() * v.norm() / g.dz;
        assert!(trilinear_b3(&u, &v, &v).unwrap().abs() <= 1e-12 * scale);
        let anti = trilinear_b3(&u, &v, &w).unwrap() + trilinear_b3(&u, &w, &v).unwrap();
        assert!(anti.abs() <= 1e-12 * u.max_abs() * v.norm() * w.norm() / g.dz);
        assert_eq!(trilinear_b3(&VField3D::zeros(g), &v, &w).unwrap(), 0.0);
        let u2 = Projector::new(g.base()).project(&VField2D::random(g.base(), &mut rng)).0;
        assert!(trilinear_b2(&u2, &u2, &u2).unwrap().abs() <= 1e-12 * u2.max_abs() * u2.norm_sq() / g.dx);
    }
}

fn small_family(g2: Grid2D, grids: &[Grid3D], amp: f64, body: f64) -> noise::ForcingFamily {
    let modes = [(1, 1), (2, 1), (1, 3)]
        .iter()
        .map(|&(kx, ky)| ModeSpec::Trig { kx, ky, amplitude: amp }.build(g2).unwrap())
        .collect();
    let f = ModeSpec::Bump { cx: 0.3, cy: 0.6, width: 0.15, amplitude: body }.build(g2).unwrap();
    make_forcing(modes, f, grids).unwrap()
}

#[test]
fn z_independent_data_stays_z_independent() {
    let g2 = make_grid2d(16, 16, 1.0, 1.0).unwrap();
    let g3 = make_grid3d(16, 16, 4, 1.0, 1.0, 0.1).unwrap();
    let fam = small_family(g2, &[g3], 0.0, 3.0);
    let p = SolverParams::new(0.02, 0.005, 0.5);
    let u0 = ModeSpec::Trig { kx: 1, ky: 2, amplitude: 0.6 }.build(g2).unwrap();
    let paths = make_paths(3, p.dt, p.t_final, 4).unwrap();
    let mut worst: f64 = 0.0;
    let traj = run3d_with(&Stepper::new(&p, fam.f3d[0].clone()).unwrap(), &retract(&u0, g3).unwrap(), &fam, &paths, |_, _, u| {
        worst = worst.max(tilde_n(u).norm());
        Ok(())
    })
    .unwrap();
    assert_eq!(traj.len(), 101);
    assert!(worst <= 1e-10, "{worst:e}");
}

#[test]
fn coupled_noise_keeps_the_trivial_extension() {
    let g2 = make_grid2d(12, 12, 1.0, 1.0).unwrap();
    let grids: Vec<Grid3D> = [0.2, 0.05].iter().map(|e| make_grid3d(12, 12, 3, 1.0, 1.0, *e).unwrap()).collect();
    let fam = small_family(g2, &grids, 0.4, 1.0);
    let p = SolverParams::new(0.05, 0.01, 0.4);
    let paths = make_paths(3, p.dt, p.t_final, 9).unwrap();
    let u0 = ModeSpec::Trig { kx: 2, ky: 1, amplitude: 0.5 }.build(g2).unwrap();
    let mut limit = vec![];
    run2d_with(&Stepper::new(&p, fam.f2d.clone()).unwrap(), &u0, &fam, &paths, |_, _, u| {
        limit.push(u.clone());
        Ok(())
    })
    .unwrap();
    for (r, g) in grids.iter().enumerate() {
        let mut worst: f64 = 0.0;
        run3d_with(&Stepper::new(&p, fam.f3d[r].clone()).unwrap(), &retract(&u0, *g).unwrap(), &fam, &paths, |k, _, u| {
            worst = worst.max(circ_m(u).sub(&limit[k])?.norm());
            Ok(())
        })
        .unwrap();
        assert!(worst <= 1e-8, "eps {}: {worst:e}", g.eps);
    }
}

#[test]
fn two_layer_grid_matches_the_2d_kernels() {
    // The thinnest admissible 3D grid, with z-independent data, reproduces
    // the 2D trajectory step by step.
    let g2 = make_grid2d(10, 8, 1.0, 0.8).unwrap();
    let g3 = make_grid3d(10, 8, 2, 1.0, 0.8, 0.3).unwrap();
    let fam = small_family(g2, &[g3], 0.3, 0.5);
    let p = SolverParams::new(0.03, 0.01, 0.3);
    let paths = make_paths(3, p.dt, p.t_final, 1).unwrap();
    let u0 = ModeSpec::Bump { cx: 0.4, cy: 0.4, width: 0.2, amplitude: 1.0 }.build(g2).unwrap();
    let t2 = run2d(&u0, &p, &fam, &paths).unwrap();
    let mut k2 = vec![];
    run2d_with(&Stepper::new(&p, fam.f2d.clone()).unwrap(), &u0, &fam, &paths, |_, _, u| {
        k2.push(u.clone());
        Ok(())
    })
    .unwrap();
    let mut worst: f64 = 0.0;
    let t3 = run3d_with(&Stepper::new(&p, fam.f3d[0].clone()).unwrap(), &retract(&u0, g3).unwrap(), &fam, &paths, |k, _, u| {
        worst = worst.max(circ_m(u).sub(&k2[k])?.max_abs());
        Ok(())
    })
    .unwrap();
    assert!(worst <= 1e-10, "{worst:e}");
    for (e3, e2) in t3.energy.iter().zip(&t2.energy) {
        assert!((e3 - g3.eps * e2).abs() <= 1e-10 * e3.max(1e-300));
    }
}

#[test]
fn energy_balance_holds_pathwise_with_forcing_and_noise() {
    let g2 = make_grid2d(12, 12, 1.0, 1.0).unwrap();
    let g3 = make_grid3d(12, 12, 4, 1.0, 1.0, 0.1).unwrap();
    let fam = small_family(g2, &[g3], 0.5, 5.0);
    let p = SolverParams::new(0.05, 0.005, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u0 = Projector::new(g3).project(&VField3D::random(g3, &mut rng)).0.scaled(0.3);
    for seed in 0..3 {
        let paths = make_paths(3, p.dt, p.t_final, seed).unwrap();
        let t = run3d(&u0, &p, &fam, &paths).unwrap();
        assert_eq!(t.energy_violations, 0, "seed {seed}: {:e}", t.max_relative_residual);
        let ledger = thinflow::harness::energy_ledger(&t, Stepper::new(&p, fam.f3d[0].clone()).unwrap().forcing_dual_sq(), p.nu, p.dt);
        assert!(ledger.worst_gap <= 1e-8, "{ledger:?}");
        assert!(ledger.lhs <= ledger.rhs, "{ledger:?}");
    }
}

#[test]
fn unforced_energy_ledger_reduces_to_initial_energy() {
    let g2 = make_grid2d(10, 10, 1.0, 1.0).unwrap();
    let fam = small_family(g2, &[], 0.0, 0.0);
    let p = SolverParams::new(0.2, 0.01, 0.3);
    let u0 = ModeSpec::Trig { kx: 1, ky: 1, amplitude: 1.0 }.build(g2).unwrap();
    let t = run2d(&u0, &p, &fam, &make_paths(3, p.dt, p.t_final, 0).unwrap()).unwrap();
    let ledger = thinflow::harness::energy_ledger(&t, 0.0, p.nu, p.dt);
    assert_eq!(ledger.rhs, u0.norm_sq());
    assert!(ledger.lhs <= ledger.rhs);
    assert!(t.energy.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn runs_are_deterministic() {
    let g2 = make_grid2d(8, 8, 1.0, 1.0).unwrap();
    let g3 = make_grid3d(8, 8, 4, 1.0, 1.0, 0.1).unwrap();
    let fam = small_family(g2, &[g3], 0.5, 1.0);
    let p = SolverParams::new(0.05, 0.01, 0.2);
    let u0 = VField3D::zeros(g3);
    let a = run3d(&u0, &p, &fam, &make_paths(3, p.dt, p.t_final, 42).unwrap()).unwrap();
    let b = run3d(&u0, &p, &fam, &make_paths(3, p.dt, p.t_final, 42).unwrap()).unwrap();
    assert_eq!(a, b);
    let c = run3d(&u0, &p, &fam, &make_paths(3, p.dt, p.t_final, 43).unwrap()).unwrap();
    assert_ne!(a.final_state, c.final_state);
}
