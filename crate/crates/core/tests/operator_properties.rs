//! Randomised invariants of the grid calculus, the averaging operators and
//! the advection form, over random grid shapes and random fields.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thinflow::advect::{bilinear, trilinear};
use thinflow::avgops::{check_pythagoras, circ_m, hat_m, hat_n, retract, tilde_m, tilde_n};
use thinflow::stokes::Projector;
use thinflow::*;

fn grid_strategy() -> impl Strategy<Value = Grid3D> {
    (2usize..9, 2usize..9, 2usize..6, 0.5f64..2.0, 0.5f64..2.0, 0.01f64..0.45)
        .prop_map(|(nx, ny, nz, lx, ly, eps)| make_grid3d(nx, ny, nz, lx, ly, eps).unwrap())
}

fn rel(a: f64, scale: f64) -> f64 {
    a.abs() / scale.max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn averaging_projections(g in grid_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = SField3D::random(g, &mut rng);
        let m = hat_m(&psi);
        let n = hat_n(&psi);
        let scale = psi.norm();
        for (a, b) in hat_m(&m).data.iter().zip(&m.data) {
            prop_assert!((a - b).abs() <= 1e-13 * scale.max(1.0));
        }
        prop_assert!(rel(m.inner(&n).unwrap(), scale * scale) < 1e-12);
        let u = VField3D::random(g, &mut rng);
        let (tm, tn) = (tilde_m(&u), tilde_n(&u));
        prop_assert!(rel(tm.inner(&tn).unwrap(), u.norm_sq()) < 1e-12);
        let p = check_pythagoras(&u);
        prop_assert!(p.value.passed && p.gradient.passed, "{:?}", p);
    }

    #[test]
    fn retract_is_a_right_inverse_and_scales_norms(g in grid_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = VField2D::random(g.base(), &mut rng);
        let r = retract(&v, g).unwrap();
        prop_assert_eq!(circ_m(&r), v.clone());
        prop_assert!(rel(r.norm_sq() - g.eps * v.norm_sq(), r.norm_sq()) < 1e-12);
        prop_assert!(rel(grad_norm_sq(&r) - g.eps * grad_norm_sq(&v), grad_norm_sq(&r)) < 1e-12);
        prop_assert_eq!(tilde_n(&r).max_abs(), 0.0);
    }

    #[test]
    fn advection_is_skew(g in grid_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, v, w) = (VField3D::random(g, &mut rng), VField3D::random(g, &mut rng), VField3D::random(g, &mut rng));
        let scale = bilinear(&u, &v).unwrap().norm() * w.norm() + bilinear(&u, &w).unwrap().norm() * v.norm();
        let s = trilinear(&u, &v, &w).unwrap() + trilinear(&u, &w, &v).unwrap();
        prop_assert!(rel(s, scale) < 1e-12);
        prop_assert!(rel(trilinear(&u, &v, &v).unwrap(), bilinear(&u, &v).unwrap().norm() * v.norm()) < 1e-12);
    }

    #[test]
    fn projection_is_idempotent_and_solenoidal(g in grid_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pr = Projector::new(g);
        let u = VField3D::random(g, &mut rng);
        let (p, _) = pr.project(&u);
        let h = g.dx.min(g.dy).min(g.dz);
        prop_assert!(divergence(&p).max_abs() * h <= 1e-10 * u.max_abs());
        let (pp, _) = pr.project(&p);
        prop_assert!(pp.sub(&p).unwrap().max_abs() <= 1e-10 * p.max_abs().max(1e-300));
        // orthogonal projection: the removed part is orthogonal to the image
        let removed = u.sub(&p).unwrap();
        prop_assert!(rel(removed.inner(&p).unwrap(), u.norm_sq()) < 1e-10);
    }

    #[test]
    fn laplacian_is_symmetric_negative(g in grid_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, v) = (VField3D::random(g, &mut rng), VField3D::random(g, &mut rng));
        let a = laplacian(&u).inner(&v).unwrap();
        let b = u.inner(&laplacian(&v)).unwrap();
        prop_assert!(rel(a - b, laplacian(&u).norm() * v.norm()) < 1e-12);
        prop_assert!(laplacian(&u).inner(&u).unwrap() <= 0.0);
        prop_assert!(rel(laplacian(&u).inner(&u).unwrap() + grad_norm_sq(&u), grad_norm_sq(&u)) < 1e-12);
    }
}
