//! Helpers shared by the integration tests.

use nalgebra::{DMatrix, SymmetricEigen};
use thinflow::*;

/// Interior faces of every component, as `(component, flat index)`.
fn interior_faces<G: Geometry>(grid: G) -> Vec<(usize, usize)> {
    let m = grid.mesh();
    let mut out = vec![];
    for c in 0..m.dim {
        let s = m.comp_shape(c);
        for q in 0..m.comp_len(c) {
            let idx = [q / (s[1] * s[2]), (q / s[2]) % s[1], q % s[2]];
            if idx[c] != 0 && idx[c] != m.n[c] {
                out.push((c, q));
            }
        }
    }
    out
}

/// Eigenpairs `(lambda, phi)` of the discrete Stokes operator, from a dense
/// reduction of `-laplacian` to the null space of the divergence.
pub fn stokes_eigenpairs<G: Geometry>(grid: G) -> Vec<(f64, VField<G>)> {
    let faces = interior_faces(grid);
    let nf = faces.len();
    let unit = |j: usize| {
        let mut u = VField::zeros(grid);
        let (c, q) = faces[j];
        u.comps[c][q] = 1.0;
        u
    };
    let ncell = grid.mesh().n_cells();
    let mut d = DMatrix::zeros(ncell, nf);
    let mut l = DMatrix::zeros(nf, nf);
    for j in 0..nf {
        let e = unit(j);
        for (i, v) in divergence(&e).data.iter().enumerate() {
            d[(i, j)] = *v;
        }
        let le = laplacian(&e);
        for (i, &(c, q)) in faces.iter().enumerate() {
            l[(i, j)] = -le.comps[c][q];
        }
    }
    assert!((&l - l.transpose()).abs().max() < 1e-9 * l.abs().max());
    // null space of the divergence from the spectrum of D^T D
    let dtd = SymmetricEigen::new(d.transpose() * &d);
    let top = dtd.eigenvalues.max();
    let basis: Vec<_> = (0..nf)
        .filter(|&k| dtd.eigenvalues[k] < 1e-10 * top)
        .map(|k| dtd.eigenvectors.column(k).into_owned())
        .collect();
    let smax = top.sqrt();
    let z = DMatrix::from_columns(&basis);
    assert!((&d * &z).abs().max() < 1e-9 * smax);
    let k = z.transpose() * &l * &z;
    let eig = SymmetricEigen::new(0.5 * (&k + k.transpose()));
    let mut pairs: Vec<(f64, VField<G>)> = (0..eig.eigenvalues.len())
        .map(|i| {
            let phi = &z * eig.eigenvectors.column(i);
            let mut u = VField::zeros(grid);
            for (j, &(c, q)) in faces.iter().enumerate() {
                u.comps[c][q] = phi[j];
            }
            (eig.eigenvalues[i], u)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}


/// Largest relative deviation, over a spread of discrete Stokes eigenmodes,
/// between one linear implicit step and the factor `1 / (1 + nu dt lambda)`.
pub fn eigen_decay_error<G: Geometry>(grid: G, nu: f64, dt: f64) -> f64 {
    use thinflow::nse::{AdvectionScheme, SolverParams, Stepper};
    let mut p = SolverParams::new(nu, dt, dt);
    p.advection = AdvectionScheme::Off;
    let stepper = Stepper::new(&p, VField::zeros(grid)).unwrap();
    let pairs = stokes_eigenpairs(grid);
    let picks = [0, 1, pairs.len() / 3, pairs.len() / 2, pairs.len() - 1];
    let mut worst: f64 = 0.0;
    for &i in &picks {
        let (lambda, phi) = &pairs[i];
        let (next, _) = stepper.step(phi, &VField::zeros(grid), 0).unwrap();
        let expected = phi.scaled(1.0 / (1.0 + nu * dt * lambda));
        worst = worst.max(next.sub(&expected).unwrap().norm() / phi.norm());
    }
    worst
}
