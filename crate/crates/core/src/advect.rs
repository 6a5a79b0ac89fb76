//! Skew-symmetric discrete advection.
//!
//! `N(u)` is the centred convective operator `v -> (u . grad) v` with the
//! transport velocity interpolated to each face; `B(u, v) = (N(u) v - N(u)^T v) / 2`
//! is its skew part, so `<B(u, v), w> = -<B(u, w), v>` holds for every `u`,
//! not only divergence-free ones. For divergence-free `u` the two forms agree
//! to truncation error.

use crate::error::{Error, Result};
use crate::grid::{lin, unlin, Geometry, Mesh, VField};

/// Transport velocity component `a` at sample `idx` of component `c`.
#[inline]
fn transport(u: &VField<impl Geometry>, m: &Mesh, c: usize, a: usize, idx: [usize; 3], q: usize) -> f64 {
    if a == c {
        return u.comps[c][q];
    }
    let s = m.comp_shape(a);
    let ua = &u.comps[a];
    let mut acc = 0.0;
    for da in 0..2 {
        for dc in 0..2 {
            let mut j = idx;
            j[a] += da;
            j[c] = idx[c] + dc - 1;
            acc += ua[lin(s, j[0], j[1], j[2])];
        }
    }
    0.25 * acc
}

/// Visits every coupling `(q, g, coef)` of `N(u)`: `N(u) v [q] += coef * v[g]`.
fn for_each_coupling<G: Geometry>(u: &VField<G>, mut visit: impl FnMut(usize, usize, usize, f64)) {
    let m = u.mesh();
    for c in 0..m.dim {
        let s = m.comp_shape(c);
        let stride = [s[1] * s[2], s[2], 1];
        for q in 0..m.comp_len(c) {
            let idx = unlin(s, q);
            if idx[c] == 0 || idx[c] == m.n[c] {
                continue;
            }
            for a in 0..m.dim {
                let k = transport(u, &m, c, a, idx, q) / (2.0 * m.h[a]);
                if k == 0.0 {
                    continue;
                }
                let ghost = m.wall(a).ghost_sign();
                // upper neighbour
                if idx[a] + 1 < s[a] {
                    if !(a == c && idx[a] + 1 == m.n[c]) {
                        visit(c, q, q + stride[a], k);
                    }
                } else {
                    visit(c, q, q, k * ghost);
                }
                // lower neighbour
                if idx[a] > 0 {
                    if !(a == c && idx[a] == 1) {
                        visit(c, q, q - stride[a], -k);
                    }
                } else {
                    visit(c, q, q, -k * ghost);
                }
            }
        }
    }
}

/// Centred convective term `N(u) v`, not skew-symmetrised.
pub fn convective<G: Geometry>(u: &VField<G>, v: &VField<G>) -> Result<VField<G>> {
    if u.grid != v.grid {
        return Err(Error::GridMismatch);
    }
    let mut out = VField::zeros(u.grid);
    for_each_coupling(u, |c, q, g, k| out.comps[c][q] += k * v.comps[c][g]);
    Ok(out)
}

/// Skew-symmetric advection `B(u, v)`.
pub fn bilinear<G: Geometry>(u: &VField<G>, v: &VField<G>) -> Result<VField<G>> {
    if u.grid != v.grid {
        return Err(Error::GridMismatch);
    }
    let mut out = VField::zeros(u.grid);
    for_each_coupling(u, |c, q, g, k| {
        let h = 0.5 * k;
        let oc = &mut out.comps[c];
        let vc = &v.comps[c];
        oc[q] += h * vc[g];
        oc[g] -= h * vc[q];
    });
    Ok(out)
}

/// Trilinear form `b(u, v, w) = <B(u, v), w>`.
pub fn trilinear<G: Geometry>(u: &VField<G>, v: &VField<G>, w: &VField<G>) -> Result<f64> {
    bilinear(u, v)?.inner(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid2d, make_grid3d, VField};
    use crate::stokes::Projector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn skew_symmetry_holds_for_arbitrary_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = make_grid3d(6, 5, 4, 1.0, 1.0, 0.2).unwrap();
        let (u, v, w) = (VField::random(g, &mut rng), VField::random(g, &mut rng), VField::random(g, &mut rng));
        let a = trilinear(&u, &v, &w).unwrap();
        let b = trilinear(&u, &w, &v).unwrap();
        let scale = bilinear(&u, &v).unwrap().norm() * w.norm();
        assert!((a + b).abs() < 1e-13 * scale);
        assert!(trilinear(&u, &v, &v).unwrap().abs() < 1e-13 * scale);
        assert_eq!(trilinear(&VField::zeros(g), &v, &w).unwrap(), 0.0);
    }

    #[test]
    fn skew_form_matches_convective_form_for_smooth_solenoidal_transport() {
        // u = curl of a stream function, v smooth: B(u,v) -> (u.grad)v
        let pi = std::f64::consts::PI;
        let mut errs = vec![];
        for n in [16usize, 32] {
            let g = make_grid2d(n, n, 1.0, 1.0).unwrap();
            let psi = |x: f64, y: f64| (pi * x).sin().powi(2) * (pi * y).sin().powi(2);
            let h = g.dx;
            let mut u = VField::from_fn(g, |c, x| {
                if c == 0 {
                    (psi(x[0], x[1] + h / 2.0) - psi(x[0], x[1] - h / 2.0)) / h
                } else {
                    -(psi(x[0] + h / 2.0, x[1]) - psi(x[0] - h / 2.0, x[1])) / h
                }
            });
            u.apply_bc();
            let b = bilinear(&u, &u).unwrap();
            let nv = convective(&u, &u).unwrap();
            // compare away from the walls
            let m = g.mesh();
            let mut e: f64 = 0.0;
            for c in 0..2 {
                let s = m.comp_shape(c);
                for q in 0..m.comp_len(c) {
                    let i = unlin(s, q);
                    if i[0] > 2 && i[1] > 2 && i[0] + 3 < s[0] && i[1] + 3 < s[1] {
                        e = e.max((b.comps[c][q] - nv.comps[c][q]).abs());
                    }
                }
            }
            errs.push(e);
        }
        assert!(errs[1] < 0.35 * errs[0], "{errs:?}");
    }

    #[test]
    fn z_independent_fields_advect_like_2d() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g2 = make_grid2d(6, 7, 1.0, 1.0).unwrap();
        let g3 = make_grid3d(6, 7, 3, 1.0, 1.0, 0.1).unwrap();
        let pr = Projector::new(g2);
        let u = pr.project(&VField::random(g2, &mut rng)).0;
        let v = VField::random(g2, &mut rng);
        let lift = |f: &VField<_>| crate::avgops::retract(f, g3).unwrap();
        let b3 = bilinear(&lift(&u), &lift(&v)).unwrap();
        let b2 = bilinear(&u, &v).unwrap();
        assert_eq!(b3, lift(&b2));
    }
}
