//! Vertical averaging operators on the thin domain and executable checks of
//! their identities and inequalities.
//!
//! With the midpoint rule the vertical mean of a column is the plain mean of
//! its `nz` cell values, so every scaling and orthogonality identity below is
//! exact up to rounding rather than up to quadrature error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dirichlet_form, divergence, partial_inner, Geometry, Grid3D, SField2D, SField3D, VField2D, VField3D};
use crate::stats::loglog_fit;
use crate::stokes::Projector;

// Accumulates deviations from the first entry so constant columns average
// to themselves exactly.
fn column_mean(data: &[f64], nz: usize) -> Vec<f64> {
    data.chunks_exact(nz)
        .map(|c| c[0] + c.iter().map(|v| v - c[0]).sum::<f64>() / nz as f64)
        .collect()
}

fn replicate(data: &[f64], nz: usize) -> Vec<f64> {
    data.iter().flat_map(|v| std::iter::repeat_n(*v, nz)).collect()
}

/// Vertical average `M_eps`.
pub fn m_eps(psi: &SField3D) -> SField2D {
    SField2D { grid: psi.grid.base(), data: column_mean(&psi.data, psi.grid.nz) }
}

/// `M_eps` replicated along the vertical.
pub fn hat_m(psi: &SField3D) -> SField3D {
    SField3D { grid: psi.grid, data: replicate(&column_mean(&psi.data, psi.grid.nz), psi.grid.nz) }
}

/// `psi - hat_m(psi)`: zero vertical mean in every column.
pub fn hat_n(psi: &SField3D) -> SField3D {
    let m = hat_m(psi);
    SField3D { grid: psi.grid, data: psi.data.iter().zip(&m.data).map(|(a, b)| a - b).collect() }
}

/// `(hat_m u1, hat_m u2, 0)`.
pub fn tilde_m(u: &VField3D) -> VField3D {
    let nz = u.grid.nz;
    let mut out = VField3D::zeros(u.grid);
    for c in 0..2 {
        out.comps[c] = replicate(&column_mean(&u.comps[c], nz), nz);
    }
    out
}

/// `u - tilde_m(u) = (hat_n u1, hat_n u2, u3)`.
pub fn tilde_n(u: &VField3D) -> VField3D {
    u.sub(&tilde_m(u)).expect("same grid")
}

/// Vertical average of the horizontal components as a field on `Q`.
pub fn circ_m(u: &VField3D) -> VField2D {
    let nz = u.grid.nz;
    VField2D {
        grid: u.grid.base(),
        comps: (0..2).map(|c| column_mean(&u.comps[c], nz)).collect(),
    }
}

/// z-independent lift with zero vertical component.
pub fn retract(v: &VField2D, grid: Grid3D) -> Result<VField3D> {
    if !grid.pairs_with(&v.grid) {
        return Err(Error::GridMismatch);
    }
    let mut out = VField3D::zeros(grid);
    for c in 0..2 {
        out.comps[c] = replicate(&v.comps[c], grid.nz);
    }
    Ok(out)
}

/// `int grad psi . grad xi` for cell fields, differences between adjacent
/// cells only (no boundary condition).
pub fn cell_gradient_inner<G: Geometry>(
    psi: &crate::grid::SField<G>,
    xi: &crate::grid::SField<G>,
) -> Result<f64> {
    if psi.grid != xi.grid {
        return Err(Error::GridMismatch);
    }
    let m = psi.grid.mesh();
    let s = m.n;
    let stride = [s[1] * s[2], s[2], 1];
    let mut total = 0.0;
    for a in 0..m.dim {
        let mut acc = 0.0;
        for p in 0..m.n_cells() {
            let idx = crate::grid::unlin(s, p);
            if idx[a] + 1 < s[a] {
                let q = p + stride[a];
                acc += (psi.data[q] - psi.data[p]) * (xi.data[q] - xi.data[p]);
            }
        }
        total += acc / (m.h[a] * m.h[a]);
    }
    Ok(total * m.dv())
}

/// How a report's verdict is decided.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// `|lhs - rhs| <= tolerance * max(1, |rhs|)`.
    Identity,
    /// `lhs <= rhs * (1 + tolerance)`.
    Inequality,
    /// An empirical constant `ratio = lhs / rhs`; passes when it is finite.
    Estimate,
}

/// Verdict on one identity or inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorReport {
    pub name: String,
    pub kind: CheckKind,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub applicable: bool,
}

fn ratio_of(lhs: f64, rhs: f64) -> f64 {
    if rhs != 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::MAX
    }
}

impl OperatorReport {
    pub fn identity(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let passed = (lhs - rhs).abs() <= tolerance * rhs.abs().max(1.0);
        OperatorReport {
            name: name.into(),
            kind: CheckKind::Identity,
            lhs,
            rhs,
            ratio: ratio_of(lhs, rhs),
            tolerance,
            passed,
            applicable: true,
        }
    }

    pub fn inequality(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        OperatorReport {
            name: name.into(),
            kind: CheckKind::Inequality,
            lhs,
            rhs,
            ratio: ratio_of(lhs, rhs),
            tolerance,
            passed: lhs <= rhs * (1.0 + tolerance),
            applicable: true,
        }
    }

    pub fn estimate(name: &str, lhs: f64, rhs: f64) -> Self {
        let ratio = ratio_of(lhs, rhs);
        OperatorReport {
            name: name.into(),
            kind: CheckKind::Estimate,
            lhs,
            rhs,
            ratio,
            tolerance: 0.0,
            passed: rhs > 0.0 && ratio.is_finite(),
            applicable: true,
        }
    }

    pub fn inapplicable(name: &str, kind: CheckKind) -> Self {
        OperatorReport {
            name: name.into(),
            kind,
            lhs: 0.0,
            rhs: 0.0,
            ratio: 0.0,
            tolerance: 0.0,
            passed: false,
            applicable: false,
        }
    }

    /// Size of the violation in the units of the tolerance test.
    pub fn deviation(&self) -> f64 {
        match self.kind {
            CheckKind::Identity => (self.lhs - self.rhs).abs() / self.rhs.abs().max(1.0),
            CheckKind::Inequality => self.ratio - 1.0,
            CheckKind::Estimate => self.ratio,
        }
    }
}

/// Both Pythagoras identities for one field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PythagorasReport {
    pub value: OperatorReport,
    pub gradient: OperatorReport,
}

/// `||tilde_m u||^2 + ||tilde_n u||^2 = ||u||^2` and the same for gradients,
/// reported relative to the right-hand side.
pub fn check_pythagoras(u: &VField3D) -> PythagorasReport {
    const TOL: f64 = 1e-12;
    let (mu, nu) = (tilde_m(u), tilde_n(u));
    let total = u.norm_sq();
    let value = if total > 0.0 {
        OperatorReport::identity("pythagoras_values", (mu.norm_sq() + nu.norm_sq()) / total, 1.0, TOL)
    } else {
        OperatorReport::identity("pythagoras_values", mu.norm_sq() + nu.norm_sq(), 0.0, TOL)
    };
    let g = |v: &VField3D| dirichlet_form(v, v).expect("same grid");
    let gt = g(u);
    let gradient = if gt > 0.0 {
        OperatorReport::identity("pythagoras_gradients", (g(&mu) + g(&nu)) / gt, 1.0, TOL)
    } else {
        OperatorReport::identity("pythagoras_gradients", g(&mu) + g(&nu), 0.0, TOL)
    };
    PythagorasReport { value, gradient }
}

/// Poincare inequality `||tilde_n u|| <= eps ||d3 tilde_n u||` reported as the
/// ratio against 1 with slack `5 dz^2`. Needs `u3 = 0` on the top and bottom.
pub fn check_poincare(u: &VField3D) -> OperatorReport {
    let g = u.grid;
    let tol = 5.0 * g.dz * g.dz;
    let s = g.mesh().comp_shape(2);
    let top_bottom = u.comps[2]
        .iter()
        .enumerate()
        .filter(|(p, _)| {
            let k = p % s[2];
            k == 0 || k == g.nz
        })
        .fold(0.0f64, |m, (_, v)| m.max(v.abs()));
    if top_bottom > 0.0 {
        return OperatorReport::inapplicable("poincare", CheckKind::Inequality);
    }
    let w = tilde_n(u);
    let lhs = w.norm();
    let rhs = g.eps * partial_inner(&w, &w, 2).expect("same grid").max(0.0).sqrt();
    if rhs == 0.0 {
        return OperatorReport::inequality("poincare", lhs, 0.0, tol);
    }
    OperatorReport::inequality("poincare", lhs / rhs, 1.0, tol)
}

/// Empirical constants of the anisotropic Ladyzhenskaya inequality and its
/// corollaries, evaluated on `w = tilde_n(u)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadyzhenskayaSample {
    /// `||w||_6 / [(||w||/eps + ||d3 w||)^(1/3) (||w|| + ||d1 w|| + ||d2 w||)^(2/3)]`
    pub aniso: f64,
    /// `||w||_6 / ||w||_V`
    pub sobolev: f64,
    /// `||w||_3^2 / (eps ||w||_V^2)`
    pub l3: f64,
}

/// Returns `None` when a denominator vanishes (for instance `tilde_n u = 0`).
pub fn check_ladyzhenskaya(u: &VField3D) -> Option<LadyzhenskayaSample> {
    let w = tilde_n(u);
    let eps = u.grid.eps;
    let l2 = w.norm();
    let d = |a| partial_inner(&w, &w, a).expect("same grid").max(0.0).sqrt();
    let (d1, d2, d3) = (d(0), d(1), d(2));
    let v_norm_sq = l2 * l2 + d1 * d1 + d2 * d2 + d3 * d3;
    let aniso_rhs = (l2 / eps + d3).cbrt() * (l2 + d1 + d2).powf(2.0 / 3.0);
    if l2 == 0.0 || aniso_rhs == 0.0 || v_norm_sq == 0.0 {
        return None;
    }
    let l6 = w.lp_norm(6.0);
    let l3 = w.lp_norm(3.0);
    Some(LadyzhenskayaSample {
        aniso: l6 / aniso_rhs,
        sobolev: l6 / v_norm_sq.sqrt(),
        l3: l3 * l3 / (eps * v_norm_sq),
    })
}

/// Random admissible divergence-free field.
pub fn random_solenoidal<G: Geometry, R: Rng + ?Sized>(grid: G, projector: &Projector, rng: &mut R) -> crate::grid::VField<G> {
    projector.project(&crate::grid::VField::random(grid, rng)).0
}

/// Ladyzhenskaya constants over an eps ladder at fixed resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadyzhenskayaBattery {
    pub eps: Vec<f64>,
    pub max_aniso: Vec<f64>,
    pub max_sobolev: Vec<f64>,
    pub max_l3: Vec<f64>,
    pub slope_aniso: f64,
    pub slope_sobolev: f64,
    pub slope_l3: f64,
    pub skipped: usize,
    /// `|slope_aniso| <= 0.1` and the corollary constants do not grow as eps
    /// decreases (slopes `>= -0.1`).
    pub passed: bool,
}

pub fn ladyzhenskaya_battery(base: Grid3D, eps_list: &[f64], n_fields: usize, seed: u64) -> Result<LadyzhenskayaBattery> {
    if eps_list.len() < 2 {
        return Err(Error::InvalidConfig("the eps ladder needs at least two rungs".into()));
    }
    let mut out = LadyzhenskayaBattery {
        eps: eps_list.to_vec(),
        max_aniso: vec![],
        max_sobolev: vec![],
        max_l3: vec![],
        slope_aniso: 0.0,
        slope_sobolev: 0.0,
        slope_l3: 0.0,
        skipped: 0,
        passed: false,
    };
    for (r, &eps) in eps_list.iter().enumerate() {
        let g = base.with_eps(eps)?;
        let pr = Projector::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(r as u64 + 1)));
        let (mut a, mut s, mut l) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..n_fields {
            match check_ladyzhenskaya(&random_solenoidal(g, &pr, &mut rng)) {
                Some(x) => {
                    a = a.max(x.aniso);
                    s = s.max(x.sobolev);
                    l = l.max(x.l3);
                }
                None => out.skipped += 1,
            }
        }
        out.max_aniso.push(a);
        out.max_sobolev.push(s);
        out.max_l3.push(l);
    }
    let slope = |y: &[f64]| loglog_fit(eps_list, y).map(|f| f.slope).unwrap_or(f64::NAN);
    out.slope_aniso = slope(&out.max_aniso);
    out.slope_sobolev = slope(&out.max_sobolev);
    out.slope_l3 = slope(&out.max_l3);
    out.passed = out.slope_aniso.abs() <= 0.1 && out.slope_sobolev >= -0.1 && out.slope_l3 >= -0.1;
    Ok(out)
}

/// Worst case of each identity over `n_fields` random fields on one grid.
pub fn identity_suite(grid: Grid3D, n_fields: usize, seed: u64) -> Vec<OperatorReport> {
    const TOL: f64 = 1e-12;
    const DIV_TOL: f64 = 1e-10;
    let eps = grid.eps;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pr3 = Projector::new(grid);
    let pr2 = Projector::new(grid.base());
    let mut worst: Vec<OperatorReport> = Vec::new();
    let mut record = |r: OperatorReport| match worst.iter_mut().find(|w| w.name == r.name) {
        Some(w) => {
            if !r.passed || (w.passed && r.deviation() > w.deviation()) {
                *w = r;
            }
        }
        None => worst.push(r),
    };
    let sdiff = |a: &SField3D, b: &SField3D| -> f64 {
        a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            / b.data.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300)
    };
    for _ in 0..n_fields {
        let psi = SField3D::random(grid, &mut rng);
        let xi = SField3D::random(grid, &mut rng);
        let (mp, np) = (hat_m(&psi), hat_n(&psi));
        let pn = psi.norm();
        record(OperatorReport::identity("hat_m_idempotent", sdiff(&hat_m(&mp), &mp), 0.0, TOL));
        record(OperatorReport::identity("hat_n_idempotent", sdiff(&hat_n(&np), &np), 0.0, TOL));
        record(OperatorReport::identity("hat_m_hat_n_zero", hat_m(&np).norm() / pn, 0.0, TOL));
        record(OperatorReport::identity("hat_n_hat_m_zero", hat_n(&mp).norm() / pn, 0.0, TOL));
        record(OperatorReport::identity("m_eps_hat_n_zero", m_eps(&np).norm() * eps.sqrt() / pn, 0.0, TOL));
        let sc = pn * xi.norm();
        record(OperatorReport::identity(
            "hat_m_self_adjoint",
            mp.inner(&xi).unwrap() / sc,
            psi.inner(&hat_m(&xi)).unwrap() / sc,
            TOL,
        ));
        record(OperatorReport::identity("scalar_orthogonality", mp.inner(&hat_n(&xi)).unwrap() / sc, 0.0, TOL));
        let gsc = (cell_gradient_inner(&psi, &psi).unwrap() * cell_gradient_inner(&xi, &xi).unwrap()).sqrt();
        record(OperatorReport::identity(
            "scalar_gradient_orthogonality",
            cell_gradient_inner(&mp, &hat_n(&xi)).unwrap() / gsc,
            0.0,
            TOL,
        ));
        let m2 = m_eps(&psi);
        record(OperatorReport::identity("scaling_scalar", mp.inner(&mp).unwrap() / (eps * m2.norm().powi(2)), 1.0, TOL));
        record(OperatorReport::inequality("m_eps_continuity", eps * m2.norm().powi(2) / (pn * pn), 1.0, 0.0));

        let u = VField3D::random(grid, &mut rng);
        let v = VField3D::random(grid, &mut rng);
        let (mu, nu) = (tilde_m(&u), tilde_n(&u));
        let un = u.norm();
        let vsc = un * v.norm();
        let vd = |a: &VField3D, b: &VField3D| a.sub(b).unwrap().norm() / b.norm().max(1e-300);
        record(OperatorReport::identity("tilde_m_idempotent", vd(&tilde_m(&mu), &mu), 0.0, TOL));
        record(OperatorReport::identity("tilde_n_idempotent", vd(&tilde_n(&nu), &nu), 0.0, TOL));
        record(OperatorReport::identity("vector_orthogonality", mu.inner(&tilde_n(&v)).unwrap() / vsc, 0.0, TOL));
        let gu = dirichlet_form(&u, &u).unwrap().sqrt();
        let gv = dirichlet_form(&v, &v).unwrap().sqrt();
        record(OperatorReport::identity(
            "vector_gradient_orthogonality",
            dirichlet_form(&mu, &tilde_n(&v)).unwrap() / (gu * gv),
            0.0,
            TOL,
        ));
        let p = check_pythagoras(&u);
        record(p.value);
        record(p.gradient);
        let cu = circ_m(&u);
        record(OperatorReport::identity("scaling_vector", mu.norm_sq() / (eps * cu.norm_sq()), 1.0, TOL));
        record(OperatorReport::identity(
            "scaling_vector_gradient",
            dirichlet_form(&mu, &mu).unwrap() / (eps * dirichlet_form(&cu, &cu).unwrap()),
            1.0,
            TOL,
        ));

        let w = VField2D::random(grid.base(), &mut rng);
        let rw = retract(&w, grid).unwrap();
        record(OperatorReport::identity("retract_scaling", rw.norm_sq() / (eps * w.norm_sq()), 1.0, TOL));
        record(OperatorReport::identity(
            "retract_gradient_scaling",
            dirichlet_form(&rw, &rw).unwrap() / (eps * dirichlet_form(&w, &w).unwrap()),
            1.0,
            TOL,
        ));
        record(OperatorReport::identity("circ_m_retract_identity", circ_m(&rw).sub(&w).unwrap().norm() / w.norm(), 0.0, TOL));
        let dsc = eps.sqrt() * w.norm() * un;
        record(OperatorReport::identity(
            "retract_dual",
            rw.inner(&u).unwrap() / dsc,
            eps * w.inner(&cu).unwrap() / dsc,
            TOL,
        ));

        // divergence preservation, up to the projection's rounding level
        let s = random_solenoidal(grid, &pr3, &mut rng);
        let s2 = random_solenoidal(grid.base(), &pr2, &mut rng);
        let gs = dirichlet_form(&s, &s).unwrap().sqrt();
        let gs2 = dirichlet_form(&s2, &s2).unwrap().sqrt();
        let div3 = |f: &VField3D| divergence(f).norm() / gs;
        record(OperatorReport::identity("div_free_tilde_m", div3(&tilde_m(&s)), 0.0, DIV_TOL));
        record(OperatorReport::identity("div_free_tilde_n", div3(&tilde_n(&s)), 0.0, DIV_TOL));
        record(OperatorReport::identity(
            "div_free_circ_m",
            divergence(&circ_m(&s)).norm() * eps.sqrt() / gs,
            0.0,
            DIV_TOL,
        ));
        record(OperatorReport::identity(
            "div_free_retract",
            divergence(&retract(&s2, grid).unwrap()).norm() / (eps.sqrt() * gs2),
            0.0,
            DIV_TOL,
        ));
    }
    worst
}
