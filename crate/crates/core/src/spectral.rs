//! Discrete sine/cosine eigenbases of the one-dimensional second-difference
//! operators that appear on the staggered grid, and helpers to apply them
//! along one axis of a flat 3D array.
//!
//! Each basis is computed numerically and normalised, so the transforms are
//! orthogonal matrices to rounding error. Transforms go through `dgemm`.

/// Which 1D eigenbasis a sample line uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Basis {
    /// Cell values, even ghost: `cos(pi m (i+1/2)/n)`, `m = 0..n`.
    Even,
    /// Cell values, odd ghost: `sin(pi m (i+1/2)/n)`, `m = 1..=n`.
    Odd,
    /// Face values with zero end faces: `sin(pi m i/n)`, `m = 1..n`, stored
    /// over all `n + 1` faces with the end columns identically zero.
    Face,
}

/// Orthogonal transform for one line of samples.
#[derive(Clone, Debug)]
pub struct Transform1D {
    pub basis: Basis,
    pub n_store: usize,
    pub n_modes: usize,
    /// Row-major `n_modes x n_store`; rows are orthonormal eigenvectors.
    pub mat: Vec<f64>,
    /// Eigenvalues of the negative second difference, `4 sin^2(pi m / 2n) / h^2`.
    pub eig: Vec<f64>,
}

impl Transform1D {
    pub fn new(basis: Basis, n: usize, h: f64) -> Self {
        let nf = n as f64;
        let pi = std::f64::consts::PI;
        let (n_store, modes): (usize, Vec<usize>) = match basis {
            Basis::Even => (n, (0..n).collect()),
            Basis::Odd => (n, (1..=n).collect()),
            Basis::Face => (n + 1, (1..n).collect()),
        };
        let mut mat = vec![0.0; modes.len() * n_store];
        for (r, &m) in modes.iter().enumerate() {
            let row = &mut mat[r * n_store..(r + 1) * n_store];
            for (i, v) in row.iter_mut().enumerate() {
                let x = i as f64;
                *v = match basis {
                    Basis::Even => (pi * m as f64 * (x + 0.5) / nf).cos(),
                    Basis::Odd => (pi * m as f64 * (x + 0.5) / nf).sin(),
                    Basis::Face if i == 0 || i == n => 0.0,
                    Basis::Face => (pi * m as f64 * x / nf).sin(),
                };
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.iter_mut().for_each(|v| *v /= norm);
        }
        let eig = modes
            .iter()
            .map(|&m| {
                let s = (pi * m as f64 / (2.0 * nf)).sin();
                4.0 * s * s / (h * h)
            })
            .collect();
        Transform1D { basis, n_store, n_modes: modes.len(), mat, eig }
    }

    /// Operator view mapping samples to coefficients.
    pub fn forward(&self) -> Op<'_> {
        Op { data: &self.mat, out: self.n_modes, inp: self.n_store, rs: self.n_store as isize, cs: 1 }
    }

    /// Operator view mapping coefficients back to samples.
    pub fn inverse(&self) -> Op<'_> {
        Op { data: &self.mat, out: self.n_store, inp: self.n_modes, rs: 1, cs: self.n_store as isize }
    }
}

/// Strided view of a dense `out x inp` matrix.
#[derive(Clone, Copy, Debug)]
pub struct Op<'a> {
    pub data: &'a [f64],
    pub out: usize,
    pub inp: usize,
    pub rs: isize,
    pub cs: isize,
}

/// Applies `op` along `axis` of the row-major array `x` of shape `shape`.
pub fn apply_axis(x: &[f64], shape: [usize; 3], axis: usize, op: Op<'_>) -> (Vec<f64>, [usize; 3]) {
    assert_eq!(shape[axis], op.inp, "axis length does not match operator");
    let mut oshape = shape;
    oshape[axis] = op.out;
    let mut y = vec![0.0; oshape[0] * oshape[1] * oshape[2]];
    if y.is_empty() || x.is_empty() {
        return (y, oshape);
    }
    // SAFETY: all strides and extents below describe views that lie inside
    // `x`, `y` and `op.data`, whose lengths were checked by construction.
    unsafe {
        match axis {
            0 => {
                let r = shape[1] * shape[2];
                matrixmultiply::dgemm(
                    op.out, op.inp, r, 1.0,
                    op.data.as_ptr(), op.rs, op.cs,
                    x.as_ptr(), r as isize, 1,
                    0.0, y.as_mut_ptr(), r as isize, 1,
                );
            }
            1 => {
                let r = shape[2];
                for i in 0..shape[0] {
                    matrixmultiply::dgemm(
                        op.out, op.inp, r, 1.0,
                        op.data.as_ptr(), op.rs, op.cs,
                        x.as_ptr().add(i * shape[1] * r), r as isize, 1,
                        0.0, y.as_mut_ptr().add(i * op.out * r), r as isize, 1,
                    );
                }
            }
            _ => {
                let r = shape[0] * shape[1];
                matrixmultiply::dgemm(
                    r, op.inp, op.out, 1.0,
                    x.as_ptr(), shape[2] as isize, 1,
                    op.data.as_ptr(), op.cs, op.rs,
                    0.0, y.as_mut_ptr(), op.out as isize, 1,
                );
            }
        }
    }
    (y, oshape)
}

/// Small row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_transform(t: &Transform1D) -> Self {
        Mat { rows: t.n_modes, cols: t.n_store, data: t.mat.clone() }
    }

    /// Forward difference from `n + 1` faces to `n` cells.
    pub fn face_difference(n: usize, h: f64) -> Self {
        let mut d = Mat::zeros(n, n + 1);
        for i in 0..n {
            d.data[i * (n + 1) + i] = -1.0 / h;
            d.data[i * (n + 1) + i + 1] = 1.0 / h;
        }
        d
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn t(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn mul(&self, b: &Mat) -> Mat {
        assert_eq!(self.cols, b.rows);
        let mut out = Mat::zeros(self.rows, b.cols);
        gemm(self.rows, self.cols, b.cols, &self.data, false, &b.data, false, &mut out.data);
        out
    }
}

/// `c = op(a) * op(b)` for row-major slices, with optional transposition.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every addressed element exists.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), rsa, csa,
            b.as_ptr(), rsb, csb,
            0.0, c.as_mut_ptr(), n as isize, 1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn second_difference(basis: Basis, n: usize, h: f64, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        match basis {
            Basis::Face => {
                for i in 1..n {
                    out[i] = -(v[i + 1] - 2.0 * v[i] + v[i - 1]) / (h * h);
                }
            }
            _ => {
                let s = if basis == Basis::Even { 1.0 } else { -1.0 };
                for i in 0..n {
                    let lo = if i == 0 { s * v[0] } else { v[i - 1] };
                    let hi = if i + 1 == n { s * v[n - 1] } else { v[i + 1] };
                    out[i] = -(hi - 2.0 * v[i] + lo) / (h * h);
                }
            }
        }
        out
    }

    #[test]
    fn bases_are_orthonormal_eigenvectors() {
        for basis in [Basis::Even, Basis::Odd, Basis::Face] {
            for n in [1usize, 2, 5, 8] {
                if basis == Basis::Face && n < 2 {
                    continue;
                }
                let h = 0.3;
                let t = Transform1D::new(basis, n, h);
                let m = Mat::from_transform(&t);
                let g = m.mul(&m.t());
                for r in 0..t.n_modes {
                    for c in 0..t.n_modes {
                        let e = if r == c { 1.0 } else { 0.0 };
                        assert!((g.at(r, c) - e).abs() < 1e-13);
                    }
                    let row = &t.mat[r * t.n_store..(r + 1) * t.n_store];
                    let lv = second_difference(basis, n, h, row);
                    for (a, b) in lv.iter().zip(row) {
                        assert!((a - t.eig[r] * b).abs() < 1e-10 * (1.0 + t.eig[r]));
                    }
                }
            }
        }
    }

    #[test]
    fn axis_transforms_round_trip() {
        let shape = [4, 5, 3];
        let x: Vec<f64> = (0..60).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        for axis in 0..3 {
            let t = Transform1D::new(Basis::Even, shape[axis], 1.0);
            let (y, s) = apply_axis(&x, shape, axis, t.forward());
            let (z, s2) = apply_axis(&y, s, axis, t.inverse());
            assert_eq!(s2, shape);
            for (a, b) in x.iter().zip(&z) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn axis_transform_matches_loops() {
        let shape = [3, 4, 5];
        let x: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).sin()).collect();
        let t = Transform1D::new(Basis::Face, 3, 1.0); // 4 faces, 2 modes
        let (y, s) = apply_axis(&x, shape, 1, t.forward());
        assert_eq!(s, [3, 2, 5]);
        for i in 0..3 {
            for m in 0..2 {
                for k in 0..5 {
                    let mut acc = 0.0;
                    for j in 0..4 {
                        acc += t.mat[m * 4 + j] * x[(i * 4 + j) * 5 + k];
                    }
                    assert!((acc - y[(i * 2 + m) * 5 + k]).abs() < 1e-14);
                }
            }
        }
    }
}
