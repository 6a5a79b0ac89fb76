//! Linear solvers: Leray projection, the coupled Stokes (Helmholtz plus
//! pressure) problem and the inverse vector Laplacian.
//!
//! All velocity components and the pressure are diagonalised along every
//! axis except that the divergence constraint couples the horizontal
//! directions. Vertically the problem separates exactly: in the cosine basis
//! of the free-slip direction each vertical mode `m` gives an independent
//! horizontal saddle-point problem, solved through its dense pressure Schur
//! complement (factored once with Cholesky).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{divergence, gradient, Geometry, Mesh, SField, VField, Wall};
use crate::spectral::{apply_axis, gemm, Basis, Mat, Transform1D};

/// Per-component eigenbases of the vector Laplacian plus the pressure basis.
#[derive(Clone, Debug)]
pub struct Bases {
    pub mesh: Mesh,
    pub vel: Vec<[Transform1D; 3]>,
    pub pres: [Transform1D; 3],
}

impl Bases {
    pub fn new(mesh: Mesh) -> Self {
        let vel = (0..mesh.dim)
            .map(|c| {
                std::array::from_fn(|a| {
                    let basis = if a == c {
                        Basis::Face
                    } else if a < mesh.dim && mesh.wall(a) == Wall::NoSlip {
                        Basis::Odd
                    } else {
                        Basis::Even
                    };
                    Transform1D::new(basis, mesh.n[a], mesh.h[a])
                })
            })
            .collect();
        let pres = std::array::from_fn(|a| Transform1D::new(Basis::Even, mesh.n[a], mesh.h[a]));
        Bases { mesh, vel, pres }
    }

    fn forward3(t: &[Transform1D; 3], x: &[f64], shape: [usize; 3]) -> (Vec<f64>, [usize; 3]) {
        let (y, s) = apply_axis(x, shape, 0, t[0].forward());
        let (y, s) = apply_axis(&y, s, 1, t[1].forward());
        apply_axis(&y, s, 2, t[2].forward())
    }

    fn inverse3(t: &[Transform1D; 3], x: &[f64], shape: [usize; 3]) -> (Vec<f64>, [usize; 3]) {
        let (y, s) = apply_axis(x, shape, 2, t[2].inverse());
        let (y, s) = apply_axis(&y, s, 1, t[1].inverse());
        apply_axis(&y, s, 0, t[0].inverse())
    }
}

/// Exact Leray projection via the Neumann pressure Poisson problem
/// `div grad phi = div u`, diagonal in the cosine basis.
#[derive(Clone, Debug)]
pub struct Projector {
    bases: Bases,
}

impl Projector {
    pub fn new<G: Geometry>(grid: G) -> Self {
        Projector { bases: Bases::new(grid.mesh()) }
    }

    /// Solves `div grad phi = rhs` with zero-mean `phi`; `rhs` is assumed to
    /// have zero mean (its mean is discarded).
    pub fn solve_neumann<G: Geometry>(&self, rhs: &SField<G>) -> SField<G> {
        let m = self.bases.mesh;
        let t = &self.bases.pres;
        let (mut y, s) = Bases::forward3(t, &rhs.data, m.n);
        for (p, v) in y.iter_mut().enumerate() {
            let i = crate::grid::unlin(s, p);
            let lam = t[0].eig[i[0]] + t[1].eig[i[1]] + t[2].eig[i[2]];
            *v = if p == 0 { 0.0 } else { -*v / lam };
        }
        let (x, _) = Bases::inverse3(t, &y, s);
        SField { grid: rhs.grid, data: x }
    }

    /// Returns `(u - grad phi, phi)` with `div grad phi = div u`.
    pub fn project<G: Geometry>(&self, u: &VField<G>) -> (VField<G>, SField<G>) {
        let phi = self.solve_neumann(&divergence(u));
        let mut out = u.clone();
        out.axpy(-1.0, &gradient(&phi)).expect("same grid");
        out.apply_bc();
        (out, phi)
    }
}

/// Jacobi-preconditioned conjugate gradients for the Neumann Poisson problem.
/// Slower than [`Projector`] but independent of the spectral machinery.
pub fn poisson_cg<G: Geometry>(rhs: &SField<G>, tol: f64, max_iter: usize) -> Result<SField<G>> {
    let m = rhs.grid.mesh();
    let mean = rhs.data.iter().sum::<f64>() / rhs.data.len() as f64;
    let b: Vec<f64> = rhs.data.iter().map(|v| -(v - mean)).collect();
    // operator K = -div grad, positive semidefinite with constant kernel
    let apply = |x: &[f64]| -> Vec<f64> {
        let f = SField { grid: rhs.grid, data: x.to_vec() };
        divergence(&gradient(&f)).data.into_iter().map(|v| -v).collect()
    };
    let diag: Vec<f64> = (0..m.n_cells())
        .map(|p| {
            let idx = crate::grid::unlin(m.n, p);
            (0..m.dim)
                .map(|a| {
                    let nb = (idx[a] > 0) as usize + (idx[a] + 1 < m.n[a]) as usize;
                    nb as f64 / (m.h[a] * m.h[a])
                })
                .sum()
        })
        .collect();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; b.len()];
    if bnorm == 0.0 {
        return Ok(SField { grid: rhs.grid, data: x });
    }
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut res = 1.0;
    for _ in 0..max_iter {
        let ap = apply(&p);
        let alpha = rz / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        // keep the iterate orthogonal to the kernel
        let rm = r.iter().sum::<f64>() / r.len() as f64;
        r.iter_mut().for_each(|v| *v -= rm);
        res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
        if res <= tol {
            let xm = x.iter().sum::<f64>() / x.len() as f64;
            x.iter_mut().for_each(|v| *v -= xm);
            return Ok(SField { grid: rhs.grid, data: x });
        }
        z = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverDiverged { residual: res, iterations: max_iter })
}

/// Projection through [`poisson_cg`].
pub fn project_cg<G: Geometry>(u: &VField<G>, tol: f64, max_iter: usize) -> Result<(VField<G>, SField<G>)> {
    let phi = poisson_cg(&divergence(u), tol, max_iter)?;
    let mut out = u.clone();
    out.axpy(-1.0, &gradient(&phi))?;
    out.apply_bc();
    Ok((out, phi))
}

/// `<f, (-laplacian)^{-1} f>`, the squared discrete `H^{-1}` norm.
pub fn inverse_laplacian_norm_sq<G: Geometry>(bases: &Bases, f: &VField<G>) -> f64 {
    let m = bases.mesh;
    let mut total = 0.0;
    for c in 0..m.dim {
        let t = &bases.vel[c];
        let (y, s) = Bases::forward3(t, &f.comps[c], m.comp_shape(c));
        for (p, v) in y.iter().enumerate() {
            let i = crate::grid::unlin(s, p);
            total += v * v / (t[0].eig[i[0]] + t[1].eig[i[1]] + t[2].eig[i[2]]);
        }
    }
    total * m.dv()
}

/// One vertical mode of the saddle-point problem.
struct ModeBlock {
    /// `(component, vertical coefficient index)` present in this mode.
    comps: Vec<(usize, usize)>,
    /// Divergence scale per component (1 horizontally, `d_m` for `u3`).
    coef: Vec<f64>,
    /// `1 / (alpha + beta * lambda)` per component on its horizontal mode grid.
    inv_lambda: Vec<Vec<f64>>,
    /// Inverse Schur complement, one dense block per reflection-parity sector.
    sectors: Vec<Sector>,
}

/// Cells `(i, j)` of the parity coordinates with `i` in `xr` and `j` in `yr`.
struct Sector {
    xr: std::ops::Range<usize>,
    yr: std::ops::Range<usize>,
    inv: Vec<f64>,
}

/// Orthogonal change of basis to even/odd combinations under `i -> n-1-i`;
/// rows `0..ceil(n/2)` are even, the rest odd.
fn parity_matrix(n: usize) -> Mat {
    let mut q = Mat::zeros(n, n);
    let half = n / 2;
    let ne = n - half;
    let r2 = std::f64::consts::FRAC_1_SQRT_2;
    for r in 0..half {
        q.data[r * n + r] = r2;
        q.data[r * n + n - 1 - r] = r2;
        q.data[(ne + r) * n + r] = r2;
        q.data[(ne + r) * n + n - 1 - r] = -r2;
    }
    if n % 2 == 1 {
        q.data[half * n + half] = 1.0;
    }
    q
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

/// Solver for `(alpha - beta * laplacian) u + grad q = r`, `div u = 0`,
/// with the wall conditions of the grid. `alpha = 1, beta = nu dt` is the
/// implicit viscous step; `alpha = 0, beta = 1` inverts the Stokes operator.
pub struct StokesSolver<G: Geometry> {
    grid: G,
    alpha: f64,
    beta: f64,
    bases: Bases,
    /// Horizontal factors `W_c v = L_c v R_c` of the divergence in spectral space.
    left: Vec<Mat>,
    right: Vec<Mat>,
    xf: Vec<Mat>,
    yf: Vec<Mat>,
    qx: Mat,
    qy: Mat,
    modes: Vec<ModeBlock>,
}

impl<G: Geometry> StokesSolver<G> {
    pub fn new(grid: G, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "Stokes coefficients must satisfy alpha >= 0, beta > 0 (got {alpha}, {beta})"
            )));
        }
        let mesh = grid.mesh();
        let bases = Bases::new(mesh);
        let (nx, ny, nz) = (mesh.n[0], mesh.n[1], mesh.n[2]);
        let qx = parity_matrix(nx);
        let qy = parity_matrix(ny);
        let mut left = Vec::new();
        let mut right = Vec::new();
        let mut xf = Vec::new();
        let mut yf = Vec::new();
        for c in 0..mesh.dim {
            let x = Mat::from_transform(&bases.vel[c][0]);
            let y = Mat::from_transform(&bases.vel[c][1]);
            let (l, r) = match c {
                0 => (Mat::face_difference(nx, mesh.h[0]).mul(&x.t()), y.clone()),
                1 => (x.t(), y.mul(&Mat::face_difference(ny, mesh.h[1]).t())),
                _ => (x.t(), y.clone()),
            };
            // work in reflection-parity coordinates of the pressure cells
            left.push(qx.mul(&l));
            right.push(r.mul(&qy.t()));
            xf.push(x);
            yf.push(y);
        }
        // vertical coupling of u3 modes to pressure modes
        let mut dcoef = vec![0.0; nz];
        if mesh.dim == 3 {
            let zp = Mat::from_transform(&bases.pres[2]);
            let z3 = Mat::from_transform(&bases.vel[2][2]);
            let dz = zp.mul(&Mat::face_difference(nz, mesh.h[2])).mul(&z3.t());
            for m in 1..nz {
                dcoef[m] = dz.at(m, m - 1);
            }
        }
        let ncell = nx * ny;
        let mut modes = Vec::with_capacity(nz);
        for m in 0..nz {
            let mut comps = vec![(0, m), (1, m)];
            let mut coef = vec![1.0, 1.0];
            if mesh.dim == 3 && m >= 1 {
                comps.push((2, m - 1));
                coef.push(dcoef[m]);
            }
            let mut s = vec![0.0; ncell * ncell];
            let mut inv_lambda = Vec::new();
            for (&(c, mz), &k) in comps.iter().zip(&coef) {
                let t = &bases.vel[c];
                let (mx, my) = (t[0].n_modes, t[1].n_modes);
                let il: Vec<f64> = (0..mx * my)
                    .map(|p| {
                        let lam = t[0].eig[p / my] + t[1].eig[p % my] + t[2].eig[mz];
                        1.0 / (alpha + beta * lam)
                    })
                    .collect();
                accumulate_schur(&mut s, &left[c], &right[c], &il, k * k, nx, ny);
                inv_lambda.push(il);
            }
            if m == 0 {
                // pin the constant pressure mode, which lives in the even-even sector
                let ones = |q: &Mat| -> Vec<f64> { (0..q.rows).map(|r| q.data[r * q.cols..(r + 1) * q.cols].iter().sum()).collect() };
                let (vx, vy) = (ones(&qx), ones(&qy));
                let v: Vec<f64> = vx.iter().flat_map(|a| vy.iter().map(move |b| a * b)).collect();
                let shift = s[0] / ncell as f64;
                for (r, vr) in v.iter().enumerate() {
                    for (c, vc) in v.iter().enumerate() {
                        s[r * ncell + c] += shift * vr * vc;
                    }
                }
            }
            let (hx, hy) = (nx - nx / 2, ny - ny / 2);
            let mut sectors = Vec::with_capacity(4);
            for xr in [0..hx, hx..nx] {
                for yr in [0..hy, hy..ny] {
                    let cells: Vec<usize> =
                        xr.clone().flat_map(|i| yr.clone().map(move |j| i * ny + j)).collect();
                    let nb = cells.len();
                    if nb == 0 {
                        continue;
                    }
                    let block = DMatrix::from_fn(nb, nb, |r, c| s[cells[r] * ncell + cells[c]]);
                    let chol = block.cholesky().ok_or_else(|| {
                        Error::Domain(format!(
                            "pressure Schur complement of vertical mode {m} is not positive definite"
                        ))
                    })?;
                    // symmetric, so the column-major storage reads as row-major
                    let inv = chol.inverse().as_slice().to_vec();
                    sectors.push(Sector { xr: xr.clone(), yr: yr.clone(), inv });
                }
            }
            modes.push(ModeBlock { comps, coef, inv_lambda, sectors });
        }
        Ok(StokesSolver { grid, alpha, beta, bases, left, right, xf, yf, qx, qy, modes })
    }

    pub fn grid(&self) -> G {
        self.grid
    }

    pub fn coefficients(&self) -> (f64, f64) {
        (self.alpha, self.beta)
    }

    pub fn bases(&self) -> &Bases {
        &self.bases
    }

    /// `alpha u - beta laplacian(u)`.
    pub fn apply(&self, u: &VField<G>) -> VField<G> {
        let mut out = crate::grid::laplacian(u);
        out.scale(-self.beta);
        out.axpy(self.alpha, u).expect("same grid");
        out.apply_bc();
        out
    }

    /// Solves the saddle-point problem, returning velocity and pressure.
    pub fn solve(&self, r: &VField<G>) -> Result<(VField<G>, SField<G>)> {
        if r.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        let mesh = self.bases.mesh;
        let (nx, ny, nz) = (mesh.n[0], mesh.n[1], mesh.n[2]);
        let mut rz = Vec::new();
        let mut uz = Vec::new();
        for c in 0..mesh.dim {
            let (y, s) = apply_axis(&r.comps[c], mesh.comp_shape(c), 2, self.bases.vel[c][2].forward());
            uz.push((vec![0.0; y.len()], s));
            rz.push((y, s));
        }
        let mut pz = vec![0.0; nx * ny * nz];
        for (m, block) in self.modes.iter().enumerate() {
            let mut rhat = Vec::with_capacity(block.comps.len());
            let mut b = vec![0.0; nx * ny];
            for (slot, &(c, mz)) in block.comps.iter().enumerate() {
                let (data, s) = &rz[c];
                let slice = gather(data, *s, mz);
                let (x, y) = (&self.xf[c], &self.yf[c]);
                let rh = mul3(x, false, &slice, s[0], s[1], y, true);
                let scaled: Vec<f64> = rh.iter().zip(&block.inv_lambda[slot]).map(|(a, l)| a * l).collect();
                let w = mul3(&self.left[c], false, &scaled, x.rows, y.rows, &self.right[c], false);
                let k = block.coef[slot];
                b.iter_mut().zip(&w).for_each(|(bv, wv)| *bv -= k * wv);
                rhat.push(rh);
            }
            let mut qp = vec![0.0; nx * ny];
            for sec in &block.sectors {
                let bs: Vec<f64> =
                    sec.xr.clone().flat_map(|i| sec.yr.clone().map(move |j| i * ny + j)).map(|p| b[p]).collect();
                let nb = bs.len();
                let mut r = 0;
                for i in sec.xr.clone() {
                    for j in sec.yr.clone() {
                        qp[i * ny + j] = dot(&sec.inv[r * nb..(r + 1) * nb], &bs);
                        r += 1;
                    }
                }
            }
            let q = &qp;
            for (slot, &(c, mz)) in block.comps.iter().enumerate() {
                let k = block.coef[slot];
                let (x, y) = (&self.xf[c], &self.yf[c]);
                let wt = mul3(&self.left[c], true, q, nx, ny, &self.right[c], true);
                let uh: Vec<f64> = rhat[slot]
                    .iter()
                    .zip(&wt)
                    .zip(&block.inv_lambda[slot])
                    .map(|((a, w), l)| (a + k * w) * l)
                    .collect();
                let phys = mul3(x, true, &uh, x.rows, y.rows, y, false);
                let (data, s) = &mut uz[c];
                scatter(data, *s, mz, &phys);
            }
            let qphys = mul3(&self.qx, true, q, nx, ny, &self.qy, false);
            scatter(&mut pz, [nx, ny, nz], m, &qphys);
        }
        let mut u = VField::zeros(self.grid);
        for c in 0..mesh.dim {
            let (data, s) = &uz[c];
            u.comps[c] = apply_axis(data, *s, 2, self.bases.vel[c][2].inverse()).0;
        }
        let p = apply_axis(&pz, [nx, ny, nz], 2, self.bases.pres[2].inverse()).0;
        Ok((u, SField { grid: self.grid, data: p }))
    }
}

/// Adds `k * W diag(il) W^T` to the Schur complement `s` (cells x cells),
/// with `W v = L v R`. Uses the Kronecker structure: the entry for cells
/// `(i,j),(i',j')` is `sum_{p,q} L[i,p] L[i',p] il[p,q] R[q,j] R[q,j']`.
fn accumulate_schur(s: &mut [f64], l: &Mat, r: &Mat, il: &[f64], k: f64, nx: usize, ny: usize) {
    let (mx, my) = (l.cols, r.rows);
    let mut ll = vec![0.0; nx * nx * mx];
    for i in 0..nx {
        for i2 in 0..nx {
            for p in 0..mx {
                ll[(i * nx + i2) * mx + p] = l.at(i, p) * l.at(i2, p);
            }
        }
    }
    let mut rr = vec![0.0; my * ny * ny];
    for q in 0..my {
        for j in 0..ny {
            for j2 in 0..ny {
                rr[(q * ny + j) * ny + j2] = r.at(q, j) * r.at(q, j2);
            }
        }
    }
    let mut w = vec![0.0; nx * nx * my];
    gemm(nx * nx, mx, my, &ll, false, il, false, &mut w);
    let mut s4 = vec![0.0; nx * nx * ny * ny];
    gemm(nx * nx, my, ny * ny, &w, false, &rr, false, &mut s4);
    let ncell = nx * ny;
    for i in 0..nx {
        for i2 in 0..nx {
            for j in 0..ny {
                let src = ((i * nx + i2) * ny + j) * ny;
                let dst = (i * ny + j) * ncell + i2 * ny;
                for j2 in 0..ny {
                    s[dst + j2] += k * s4[src + j2];
                }
            }
        }
    }
}

/// `op(a) * x * op(b)` where `x` is `rows x cols` row-major.
fn mul3(a: &Mat, ta: bool, x: &[f64], rows: usize, cols: usize, b: &Mat, tb: bool) -> Vec<f64> {
    let (am, ak) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    debug_assert_eq!(ak, rows);
    let (bk, bn) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
    debug_assert_eq!(bk, cols);
    let mut t = vec![0.0; am * cols];
    gemm(am, rows, cols, &a.data, ta, x, false, &mut t);
    let mut out = vec![0.0; am * bn];
    gemm(am, cols, bn, &t, false, &b.data, tb, &mut out);
    out
}

fn gather(data: &[f64], s: [usize; 3], k: usize) -> Vec<f64> {
    (0..s[0] * s[1]).map(|p| data[p * s[2] + k]).collect()
}

fn scatter(data: &mut [f64], s: [usize; 3], k: usize, v: &[f64]) {
    for (p, x) in v.iter().enumerate() {
        data[p * s[2] + k] = *x;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid2d, make_grid3d, laplacian};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn projection_kills_divergence_and_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = make_grid3d(8, 6, 4, 1.0, 1.2, 0.2).unwrap();
        let pr = Projector::new(g);
        let u = VField::random(g, &mut rng);
        let (pu, _) = pr.project(&u);
        assert!(divergence(&pu).max_abs() < 1e-10);
        let (ppu, _) = pr.project(&pu);
        assert!(ppu.sub(&pu).unwrap().max_abs() < 1e-10);
        let psi = SField::random(g, &mut rng);
        let (z, _) = pr.project(&gradient(&psi));
        assert!(z.max_abs() < 1e-9);
        let (cu, _) = project_cg(&u, 1e-12, 2000).unwrap();
        assert!(cu.sub(&pu).unwrap().max_abs() < 1e-8);
        assert!(matches!(project_cg(&u, 1e-14, 2), Err(Error::SolverDiverged { .. })));
    }

    fn check_stokes<G: Geometry>(g: G, alpha: f64, beta: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let st = StokesSolver::new(g, alpha, beta).unwrap();
        let r = VField::random(g, &mut rng);
        let (u, q) = st.solve(&r).unwrap();
        assert!(divergence(&u).max_abs() < 1e-9 * r.max_abs());
        let mut res = st.apply(&u);
        res.axpy(1.0, &gradient(&q)).unwrap();
        res.axpy(-1.0, &r).unwrap();
        assert!(res.max_abs() < 1e-9 * r.max_abs(), "residual {}", res.max_abs());
        assert_eq!(u.normal_trace_max(), 0.0);
    }

    #[test]
    fn stokes_solves_the_saddle_problem() {
        check_stokes(make_grid3d(6, 5, 4, 1.0, 0.8, 0.25).unwrap(), 1.0, 0.01, 1);
        check_stokes(make_grid3d(4, 4, 2, 1.0, 1.0, 0.1).unwrap(), 0.0, 1.0, 2);
        check_stokes(make_grid2d(7, 6, 1.0, 1.0).unwrap(), 1.0, 0.3, 3);
        check_stokes(make_grid2d(5, 5, 1.0, 1.0).unwrap(), 0.0, 1.0, 4);
    }

    #[test]
    fn dual_norm_inverts_laplacian() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = make_grid3d(6, 5, 3, 1.0, 1.0, 0.2).unwrap();
        let bases = Bases::new(g.mesh());
        let u = VField::random(g, &mut rng);
        let f = laplacian(&u).scaled(-1.0);
        let lhs = inverse_laplacian_norm_sq(&bases, &f);
        let rhs = f.inner(&u).unwrap();
        assert!((lhs - rhs).abs() < 1e-10 * rhs.abs());
    }
}
