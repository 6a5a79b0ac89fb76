//! Staggered (MAC) grids for the thin domain `Q x (0, eps)` and the base
//! rectangle `Q`, with face-centred vector fields, cell-centred scalars and
//! the discrete calculus acting on them.
//!
//! Storage convention: component `c` of a vector field lives on the faces
//! normal to axis `c`, so its array has `n[c] + 1` entries along that axis
//! and `n[a]` along the others. Boundary faces are stored explicitly; an
//! admissible field has them equal to zero. Arrays are row-major with the
//! last axis fastest. A 2D field is stored as a single layer (`nz = 1`) with
//! two components, which lets the 2D and 3D solvers share every kernel.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary condition on the pair of walls normal to one axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wall {
    /// All velocity components vanish; tangential components get an odd ghost.
    NoSlip,
    /// Normal component vanishes, tangential components get an even ghost.
    FreeSlip,
}

impl Wall {
    /// Ghost-cell reflection sign for a tangential component.
    pub fn ghost_sign(self) -> f64 {
        match self {
            Wall::NoSlip => -1.0,
            Wall::FreeSlip => 1.0,
        }
    }
}

/// Thin-domain grid `(0,lx) x (0,ly) x (0,eps)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid3D {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub lx: f64,
    pub ly: f64,
    pub eps: f64,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

/// Base-domain grid `(0,lx) x (0,ly)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Grid3D {
    pub fn new(nx: usize, ny: usize, nz: usize, lx: f64, ly: f64, eps: f64) -> Result<Self> {
        if nx < 2 || ny < 2 || nz < 2 {
            return Err(Error::InvalidGrid(format!(
                "cell counts must be at least 2, got ({nx},{ny},{nz})"
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidGrid(format!("extents must be positive, got ({lx},{ly})")));
        }
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::InvalidGrid(format!("thickness must lie in (0, 1/2), got {eps}")));
        }
        Ok(Grid3D {
            nx,
            ny,
            nz,
            lx,
            ly,
            eps,
            dx: lx / nx as f64,
            dy: ly / ny as f64,
            dz: eps / nz as f64,
        })
    }

    /// The paired horizontal grid.
    pub fn base(&self) -> Grid2D {
        Grid2D {
            nx: self.nx,
            ny: self.ny,
            lx: self.lx,
            ly: self.ly,
            dx: self.dx,
            dy: self.dy,
        }
    }

    /// Same horizontal and vertical resolution, different thickness.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Grid3D::new(self.nx, self.ny, self.nz, self.lx, self.ly, eps)
    }

    pub fn pairs_with(&self, g: &Grid2D) -> bool {
        self.base() == *g
    }
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!("cell counts must be at least 2, got ({nx},{ny})")));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidGrid(format!("extents must be positive, got ({lx},{ly})")));
        }
        Ok(Grid2D {
            nx,
            ny,
            lx,
            ly,
            dx: lx / nx as f64,
            dy: ly / ny as f64,
        })
    }
}

pub fn make_grid3d(nx: usize, ny: usize, nz: usize, lx: f64, ly: f64, eps: f64) -> Result<Grid3D> {
    Grid3D::new(nx, ny, nz, lx, ly, eps)
}

pub fn make_grid2d(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Grid2D> {
    Grid2D::new(nx, ny, lx, ly)
}

/// Dimension-agnostic description of a grid used by the kernels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mesh {
    pub n: [usize; 3],
    pub h: [f64; 3],
    pub dim: usize,
}

impl Mesh {
    pub fn wall(&self, axis: usize) -> Wall {
        if axis < 2 {
            Wall::NoSlip
        } else {
            Wall::FreeSlip
        }
    }

    /// Array shape of velocity component `c`.
    pub fn comp_shape(&self, c: usize) -> [usize; 3] {
        let mut s = self.n;
        s[c] += 1;
        s
    }

    pub fn comp_len(&self, c: usize) -> usize {
        let s = self.comp_shape(c);
        s[0] * s[1] * s[2]
    }

    pub fn n_cells(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    /// Cell volume (cell area for the 2D mesh).
    pub fn dv(&self) -> f64 {
        self.h[..self.dim].iter().product()
    }

    /// Coordinates of a sample of component `c` (pass `c = 3` for cell centres).
    pub fn position(&self, c: usize, idx: [usize; 3]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for a in 0..3 {
            x[a] = if a == c {
                idx[a] as f64 * self.h[a]
            } else {
                (idx[a] as f64 + 0.5) * self.h[a]
            };
        }
        x
    }
}

#[inline]
pub(crate) fn lin(s: [usize; 3], i: usize, j: usize, k: usize) -> usize {
    (i * s[1] + j) * s[2] + k
}

#[inline]
pub(crate) fn unlin(s: [usize; 3], p: usize) -> [usize; 3] {
    [p / (s[1] * s[2]), (p / s[2]) % s[1], p % s[2]]
}

/// Grids that fields can live on.
pub trait Geometry: Copy + PartialEq + std::fmt::Debug + Send + Sync + 'static {
    const DIM: usize;
    fn mesh(&self) -> Mesh;
}

impl Geometry for Grid3D {
    const DIM: usize = 3;
    fn mesh(&self) -> Mesh {
        Mesh {
            n: [self.nx, self.ny, self.nz],
            h: [self.dx, self.dy, self.dz],
            dim: 3,
        }
    }
}

impl Geometry for Grid2D {
    const DIM: usize = 2;
    fn mesh(&self) -> Mesh {
        Mesh {
            n: [self.nx, self.ny, 1],
            h: [self.dx, self.dy, 1.0],
            dim: 2,
        }
    }
}

/// Face-centred vector field.
#[derive(Clone, Debug, PartialEq)]
pub struct VField<G: Geometry> {
    pub grid: G,
    pub comps: Vec<Vec<f64>>,
}

/// Cell-centred scalar field.
#[derive(Clone, Debug, PartialEq)]
pub struct SField<G: Geometry> {
    pub grid: G,
    pub data: Vec<f64>,
}

pub type VField3D = VField<Grid3D>;
pub type VField2D = VField<Grid2D>;
pub type SField3D = SField<Grid3D>;
pub type SField2D = SField<Grid2D>;

impl<G: Geometry> SField<G> {
    pub fn zeros(grid: G) -> Self {
        SField { grid, data: vec![0.0; grid.mesh().n_cells()] }
    }

    pub fn from_fn(grid: G, f: impl Fn([f64; 3]) -> f64) -> Self {
        let m = grid.mesh();
        let data = (0..m.n_cells()).map(|p| f(m.position(3, unlin(m.n, p)))).collect();
        SField { grid, data }
    }

    pub fn from_vec(grid: G, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.mesh().n_cells() {
            return Err(Error::InvalidGrid(format!(
                "scalar data has length {}, expected {}",
                data.len(),
                grid.mesh().n_cells()
            )));
        }
        Ok(SField { grid, data })
    }

    pub fn random<R: Rng + ?Sized>(grid: G, rng: &mut R) -> Self {
        let n = grid.mesh().n_cells();
        SField { grid, data: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() }
    }

    pub fn get(&self, idx: [usize; 3]) -> f64 {
        self.data[lin(self.grid.mesh().n, idx[0], idx[1], idx[2])]
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let s: f64 = self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum();
        Ok(s * self.grid.mesh().dv())
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).unwrap_or(0.0).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl<G: Geometry> VField<G> {
    pub fn zeros(grid: G) -> Self {
        let m = grid.mesh();
        VField { grid, comps: (0..m.dim).map(|c| vec![0.0; m.comp_len(c)]).collect() }
    }

    /// Samples `f(c, x)` at the location of every stored value of component `c`.
    /// Boundary conditions are not applied.
    pub fn from_fn(grid: G, f: impl Fn(usize, [f64; 3]) -> f64) -> Self {
        let m = grid.mesh();
        let comps = (0..m.dim)
            .map(|c| {
                let s = m.comp_shape(c);
                (0..m.comp_len(c)).map(|p| f(c, m.position(c, unlin(s, p)))).collect()
            })
            .collect();
        VField { grid, comps }
    }

    pub fn from_components(grid: G, comps: Vec<Vec<f64>>) -> Result<Self> {
        let m = grid.mesh();
        if comps.len() != m.dim || comps.iter().enumerate().any(|(c, v)| v.len() != m.comp_len(c)) {
            return Err(Error::InvalidGrid("component arrays do not match the staggered layout".into()));
        }
        Ok(VField { grid, comps })
    }

    /// Uniform random values in `[-1, 1)` with the boundary conditions applied.
    pub fn random<R: Rng + ?Sized>(grid: G, rng: &mut R) -> Self {
        let m = grid.mesh();
        let comps = (0..m.dim)
            .map(|c| (0..m.comp_len(c)).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut u = VField { grid, comps };
        u.apply_bc();
        u
    }

    pub fn mesh(&self) -> Mesh {
        self.grid.mesh()
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.comps[c]
    }

    pub fn get(&self, c: usize, idx: [usize; 3]) -> f64 {
        let s = self.mesh().comp_shape(c);
        self.comps[c][lin(s, idx[0], idx[1], idx[2])]
    }

    /// Zero the faces lying on the boundary (no-penetration on every wall).
    pub fn apply_bc(&mut self) {
        let m = self.mesh();
        for c in 0..m.dim {
            let s = m.comp_shape(c);
            let u = &mut self.comps[c];
            for p in 0..u.len() {
                let idx = unlin(s, p);
                if idx[c] == 0 || idx[c] == m.n[c] {
                    u[p] = 0.0;
                }
            }
        }
    }

    /// Largest stored value on a boundary face.
    pub fn normal_trace_max(&self) -> f64 {
        let m = self.mesh();
        let mut r: f64 = 0.0;
        for c in 0..m.dim {
            let s = m.comp_shape(c);
            for (p, v) in self.comps[c].iter().enumerate() {
                let idx = unlin(s, p);
                if idx[c] == 0 || idx[c] == m.n[c] {
                    r = r.max(v.abs());
                }
            }
        }
        r
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Self) -> Result<()> {
        self.check(x)?;
        for (u, v) in self.comps.iter_mut().zip(&x.comps) {
            for (p, q) in u.iter_mut().zip(v) {
                *p += a * q;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        self.comps.iter_mut().flatten().for_each(|v| *v *= a);
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut r = self.clone();
        r.scale(a);
        r
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut r = self.clone();
        r.axpy(-1.0, other)?;
        Ok(r)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut r = self.clone();
        r.axpy(1.0, other)?;
        Ok(r)
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().flatten().all(|v| v.is_finite())
    }

    /// Midpoint-rule `L^2` inner product. Faces on the boundary normal to the
    /// component carry half weight, so constants integrate to the volume.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check(other)?;
        Ok(weighted_sum(self, |c, p| self.comps[c][p] * other.comps[c][p]))
    }

    pub fn norm_sq(&self) -> f64 {
        weighted_sum(self, |c, p| self.comps[c][p] * self.comps[c][p])
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `(sum_c int |u_c|^p)^(1/p)` with the same quadrature as the `L^2` norm.
    pub fn lp_norm(&self, p: f64) -> f64 {
        weighted_sum(self, |c, q| self.comps[c][q].abs().powf(p)).powf(1.0 / p)
    }
}

fn weighted_sum<G: Geometry>(u: &VField<G>, f: impl Fn(usize, usize) -> f64) -> f64 {
    let m = u.mesh();
    let mut total = 0.0;
    for c in 0..m.dim {
        let s = m.comp_shape(c);
        let mut interior = 0.0;
        let mut edge = 0.0;
        for p in 0..u.comps[c].len() {
            let i = unlin(s, p)[c];
            if i == 0 || i == m.n[c] {
                edge += f(c, p);
            } else {
                interior += f(c, p);
            }
        }
        total += interior + 0.5 * edge;
    }
    total * m.dv()
}

/// Cell-centred divergence using the stored face values.
pub fn divergence<G: Geometry>(u: &VField<G>) -> SField<G> {
    let m = u.mesh();
    let n = m.n;
    let mut out = vec![0.0; m.n_cells()];
    for c in 0..m.dim {
        let s = m.comp_shape(c);
        let inv = 1.0 / m.h[c];
        let uc = &u.comps[c];
        for i in 0..n[0] {
            for j in 0..n[1] {
                for k in 0..n[2] {
                    let mut hi = [i, j, k];
                    hi[c] += 1;
                    out[lin(n, i, j, k)] +=
                        (uc[lin(s, hi[0], hi[1], hi[2])] - uc[lin(s, i, j, k)]) * inv;
                }
            }
        }
    }
    SField { grid: u.grid, data: out }
}

/// Face-centred gradient; boundary faces are set to zero so that the result
/// is admissible and `<grad p, u> = -<p, div u>` holds exactly.
pub fn gradient<G: Geometry>(p: &SField<G>) -> VField<G> {
    let m = p.grid.mesh();
    let n = m.n;
    let mut u = VField::zeros(p.grid);
    for c in 0..m.dim {
        let s = m.comp_shape(c);
        let inv = 1.0 / m.h[c];
        let uc = &mut u.comps[c];
        for q in 0..uc.len() {
            let idx = unlin(s, q);
            if idx[c] == 0 || idx[c] == n[c] {
                continue;
            }
            let mut lo = idx;
            lo[c] -= 1;
            uc[q] = (p.data[lin(n, idx[0], idx[1], idx[2])] - p.data[lin(n, lo[0], lo[1], lo[2])]) * inv;
        }
    }
    u
}

/// Vector Laplacian with the wall conditions: along its own axis a component
/// uses the stored boundary faces; across a wall it uses an odd (no-slip) or
/// even (free-slip) ghost. Boundary-face rows are zero.
pub fn laplacian<G: Geometry>(u: &VField<G>) -> VField<G> {
    let m = u.mesh();
    let mut out = VField::zeros(u.grid);
    for c in 0..m.dim {
        let s = m.comp_shape(c);
        let uc = &u.comps[c];
        let oc = &mut out.comps[c];
        let stride = [s[1] * s[2], s[2], 1];
        for q in 0..uc.len() {
            let idx = unlin(s, q);
            if idx[c] == 0 || idx[c] == m.n[c] {
                continue;
            }
            let mut acc = 0.0;
            for a in 0..m.dim {
                let ih2 = 1.0 / (m.h[a] * m.h[a]);
                let centre = uc[q];
                let lo = if idx[a] > 0 {
                    uc[q - stride[a]]
                } else {
                    m.wall(a).ghost_sign() * centre
                };
                let hi = if idx[a] + 1 < s[a] {
                    uc[q + stride[a]]
                } else {
                    m.wall(a).ghost_sign() * centre
                };
                acc += (hi - 2.0 * centre + lo) * ih2;
            }
            oc[q] = acc;
        }
    }
    out
}

/// Contribution of axis `a` to the Dirichlet form, `int d_a u . d_a v`,
/// for admissible fields. Summed over axes this equals `<-laplacian(u), v>`.
pub fn partial_inner<G: Geometry>(u: &VField<G>, v: &VField<G>, a: usize) -> Result<f64> {
    u.check(v)?;
    let m = u.mesh();
    if a >= m.dim {
        return Err(Error::IndexOutOfRange { index: a, limit: m.dim });
    }
    let ih2 = 1.0 / (m.h[a] * m.h[a]);
    let mut total = 0.0;
    for c in 0..m.dim {
        let s = m.comp_shape(c);
        let stride = [s[1] * s[2], s[2], 1];
        let (uc, vc) = (&u.comps[c], &v.comps[c]);
        for q in 0..uc.len() {
            let idx = unlin(s, q);
            if idx[a] + 1 < s[a] {
                let p = q + stride[a];
                if a != c && (idx[c] == 0 || idx[c] == m.n[c]) {
                    continue;
                }
                total += (uc[p] - uc[q]) * (vc[p] - vc[q]);
            }
            if a != c && m.wall(a) == Wall::NoSlip && (idx[c] != 0 && idx[c] != m.n[c]) {
                // half cell between the wall ghost and the first cell: the
                // one-sided difference is 2u/h over half the weight
                if idx[a] == 0 || idx[a] + 1 == s[a] {
                    total += 2.0 * uc[q] * vc[q];
                }
            }
        }
    }
    Ok(total * ih2 * m.dv())
}

/// Dirichlet form `a(u, v) = int grad u : grad v`.
pub fn dirichlet_form<G: Geometry>(u: &VField<G>, v: &VField<G>) -> Result<f64> {
    let mut s = 0.0;
    for a in 0..u.mesh().dim {
        s += partial_inner(u, v, a)?;
    }
    Ok(s)
}

/// `||grad u||^2`.
pub fn grad_norm_sq<G: Geometry>(u: &VField<G>) -> f64 {
    dirichlet_form(u, u).unwrap_or(0.0)
}

pub fn inner_l2_3d(a: &VField3D, b: &VField3D) -> Result<f64> {
    a.inner(b)
}
pub fn inner_l2_2d(a: &VField2D, b: &VField2D) -> Result<f64> {
    a.inner(b)
}
pub fn divergence3d(u: &VField3D) -> SField3D {
    divergence(u)
}
pub fn divergence2d(u: &VField2D) -> SField2D {
    divergence(u)
}
pub fn gradient3d(p: &SField3D) -> VField3D {
    gradient(p)
}
pub fn gradient2d(p: &SField2D) -> VField2D {
    gradient(p)
}
pub fn laplacian3d(u: &VField3D) -> VField3D {
    laplacian(u)
}
pub fn laplacian2d(u: &VField2D) -> VField2D {
    laplacian(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g3() -> Grid3D {
        make_grid3d(8, 8, 4, 1.0, 1.0, 0.25).unwrap()
    }

    #[test]
    fn grid_spacings() {
        assert_eq!(g3().dz, 0.0625);
        let g = make_grid3d(16, 16, 8, 1.0, 1.0, 0.125).unwrap();
        assert_eq!(g.dz, 0.015625);
        assert!(make_grid3d(8, 8, 4, 1.0, 1.0, 0.6).is_err());
        assert!(make_grid3d(8, 8, 4, 1.0, 1.0, 0.5).is_err());
        assert!(make_grid3d(1, 8, 4, 1.0, 1.0, 0.25).is_err());
        assert!(make_grid3d(8, 8, 4, 0.0, 1.0, 0.25).is_err());
        assert!(make_grid2d(8, 0, 1.0, 1.0).is_err());
        assert!(g3().pairs_with(&make_grid2d(8, 8, 1.0, 1.0).unwrap()));
    }

    #[test]
    fn constant_field_integrates_to_volume() {
        let u = VField::from_fn(g3(), |c, _| if c == 0 { 1.0 } else { 0.0 });
        assert!((u.norm_sq() - 0.25).abs() < 1e-15);
        assert_eq!(VField::zeros(g3()).inner(&u).unwrap(), 0.0);
    }

    #[test]
    fn inner_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = g3();
        let mut a = VField::random(g, &mut rng);
        let b = VField::random(g, &mut rng);
        // put something on the boundary faces too, they carry half weight
        a.comps[0][0] = 0.7;
        let mut naive = 0.0;
        let m = g.mesh();
        for c in 0..3 {
            let s = m.comp_shape(c);
            for i in 0..s[0] {
                for j in 0..s[1] {
                    for k in 0..s[2] {
                        let idx = [i, j, k];
                        let w = if idx[c] == 0 || idx[c] == m.n[c] { 0.5 } else { 1.0 };
                        naive += w * a.get(c, idx) * b.get(c, idx) * g.dx * g.dy * g.dz;
                    }
                }
            }
        }
        let fast = a.inner(&b).unwrap();
        assert!((fast - naive).abs() <= 1e-13 * naive.abs().max(1e-300));
        assert!(matches!(
            a.inner(&VField::zeros(g.with_eps(0.125).unwrap())),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn shear_is_divergence_free_and_linear_pressure_has_unit_gradient() {
        let g = g3();
        let u = VField::from_fn(g, |c, x| if c == 0 { x[1] } else { 0.0 });
        assert!(divergence(&u).max_abs() < 1e-14);
        let p = SField::from_fn(g, |x| x[0]);
        let gp = gradient(&p);
        let m = g.mesh();
        let s = m.comp_shape(0);
        for q in 0..gp.comps[0].len() {
            let idx = unlin(s, q);
            if idx[0] > 0 && idx[0] < m.n[0] {
                assert!((gp.comps[0][q] - 1.0).abs() < 1e-12);
            }
        }
        assert!(gp.comps[1].iter().chain(&gp.comps[2]).all(|v| v.abs() < 1e-14));
        let g2 = make_grid2d(8, 6, 1.0, 2.0).unwrap();
        let gp2 = gradient(&SField::from_fn(g2, |x| x[1]));
        let s2 = g2.mesh().comp_shape(1);
        for q in 0..gp2.comps[1].len() {
            let idx = unlin(s2, q);
            if idx[1] > 0 && idx[1] < 6 {
                assert!((gp2.comps[1][q] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn laplacian_of_linear_field_vanishes_inside() {
        let g = g3();
        let u = VField::from_fn(g, |c, x| [1.0 + x[1] - 2.0 * x[2], x[0] + 3.0 * x[2], x[0] - x[1]][c]);
        let l = laplacian(&u);
        let m = g.mesh();
        for c in 0..3 {
            let s = m.comp_shape(c);
            for q in 0..l.comps[c].len() {
                let idx = unlin(s, q);
                if (0..3).all(|a| idx[a] >= 1 && idx[a] + 1 < s[a]) {
                    assert!(l.comps[c][q].abs() < 1e-9, "{c} {idx:?} {}", l.comps[c][q]);
                }
            }
        }
    }

    #[test]
    fn zero_field_calculus_is_zero() {
        let g = make_grid2d(6, 5, 1.0, 1.0).unwrap();
        let z = VField::zeros(g);
        assert_eq!(laplacian(&z).max_abs(), 0.0);
        assert_eq!(divergence(&z).max_abs(), 0.0);
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn adjointness_and_dirichlet_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for g in [g3(), make_grid3d(5, 7, 3, 1.3, 0.7, 0.1).unwrap()] {
            let u = VField::random(g, &mut rng);
            let v = VField::random(g, &mut rng);
            let p = SField::random(g, &mut rng);
            let lhs = gradient(&p).inner(&u).unwrap();
            let rhs = -p.inner(&divergence(&u)).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()));
            let a = dirichlet_form(&u, &v).unwrap();
            let b = -laplacian(&u).inner(&v).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            assert!(grad_norm_sq(&u) > 0.0);
        }
        let g = make_grid2d(7, 9, 1.0, 1.0).unwrap();
        let u = VField::random(g, &mut rng);
        let p = SField::random(g, &mut rng);
        let lhs = gradient2d(&p).inner(&u).unwrap();
        let rhs = -p.inner(&divergence2d(&u)).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
        let a = dirichlet_form(&u, &u).unwrap();
        let b = -laplacian2d(&u).inner(&u).unwrap();
        assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn apply_bc_clears_normal_trace() {
        let g = g3();
        let mut u = VField::from_fn(g, |_, _| 1.0);
        assert_eq!(u.normal_trace_max(), 1.0);
        u.apply_bc();
        assert_eq!(u.normal_trace_max(), 0.0);
    }
}
