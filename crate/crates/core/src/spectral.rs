//! Exact diagonalization of the discrete Laplacians on a box.
//!
//! On every axis the three-point Laplacian (with periodic wrap, mirrored
//! cell-centered ghosts, or vanishing boundary faces) has a known orthonormal
//! eigenbasis: real Fourier modes, DCT-II modes and DST-I modes. The tensor
//! products of these bases diagonalize the full operator, so Poisson-type
//! problems reduce to two sequences of dense per-axis transforms.

use ndarray::{Array2, ArrayView2};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// `n` equispaced periodic samples.
    Periodic,
    /// `n` cell centers with mirrored ghosts (homogeneous Neumann).
    NeumannCell,
    /// The `n - 1` interior faces of an axis with `n` cells, zero on the
    /// two boundary faces (homogeneous Dirichlet).
    DirichletFace,
}

#[derive(Debug, Clone)]
pub struct Basis1D {
    pub kind: BasisKind,
    /// Columns are orthonormal eigenvectors.
    pub vectors: Array2<f64>,
    pub eigenvalues: Vec<f64>,
    /// Physical wavenumber of each mode.
    pub wavenumbers: Vec<f64>,
}

impl Basis1D {
    /// `n` is the number of cells along the axis.
    pub fn new(kind: BasisKind, n: usize, h: f64) -> Self {
        let length = n as f64 * h;
        let lam = |theta: f64| -(2.0 / h * (theta / 2.0).sin()).powi(2);
        match kind {
            BasisKind::NeumannCell => {
                let mut v = Array2::zeros((n, n));
                let mut ev = Vec::with_capacity(n);
                let mut wn = Vec::with_capacity(n);
                for k in 0..n {
                    let c = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
                    for j in 0..n {
                        v[[j, k]] = c * (PI * k as f64 * (j as f64 + 0.5) / n as f64).cos();
                    }
                    ev.push(lam(PI * k as f64 / n as f64));
                    wn.push(PI * k as f64 / length);
                }
                Basis1D { kind, vectors: v, eigenvalues: ev, wavenumbers: wn }
            }
            BasisKind::DirichletFace => {
                let m = n - 1;
                let mut v = Array2::zeros((m, m));
                let mut ev = Vec::with_capacity(m);
                let mut wn = Vec::with_capacity(m);
                let c = (2.0 / n as f64).sqrt();
                for k in 1..n {
                    for j in 1..n {
                        v[[j - 1, k - 1]] = c * (PI * (k * j) as f64 / n as f64).sin();
                    }
                    ev.push(lam(PI * k as f64 / n as f64));
                    wn.push(PI * k as f64 / length);
                }
                Basis1D { kind, vectors: v, eigenvalues: ev, wavenumbers: wn }
            }
            BasisKind::Periodic => {
                let mut v = Array2::zeros((n, n));
                let mut ev = Vec::with_capacity(n);
                let mut wn = Vec::with_capacity(n);
                let mut col = 0;
                let mut push = |v: &mut Array2<f64>, f: &dyn Fn(usize) -> f64, m: usize| {
                    for j in 0..n {
                        v[[j, col]] = f(j);
                    }
                    ev.push(lam(2.0 * PI * m as f64 / n as f64));
                    wn.push(2.0 * PI * m as f64 / length);
                    col += 1;
                };
                let c0 = (1.0 / n as f64).sqrt();
                let c = (2.0 / n as f64).sqrt();
                push(&mut v, &|_| c0, 0);
                for m in 1..=(n - 1) / 2 {
                    let th = 2.0 * PI * m as f64 / n as f64;
                    push(&mut v, &|j| c * (th * j as f64).cos(), m);
                    push(&mut v, &|j| c * (th * j as f64).sin(), m);
                }
                if n.is_multiple_of(2) {
                    push(&mut v, &|j| if j % 2 == 0 { c0 } else { -c0 }, n / 2);
                }
                Basis1D { kind, vectors: v, eigenvalues: ev, wavenumbers: wn }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

/// Apply `m` to every line along `axis` of a row-major array.
fn apply_axis(data: &[f64], shape: [usize; 3], axis: usize, m: ArrayView2<f64>) -> Vec<f64> {
    let n = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    if inner == 1 {
        let a = ArrayView2::from_shape((outer, n), data).expect("shape");
        let out = a.dot(&m.t());
        out.as_standard_layout().iter().copied().collect()
    } else if outer == 1 {
        let a = ArrayView2::from_shape((n, inner), data).expect("shape");
        let out = m.dot(&a);
        out.as_standard_layout().iter().copied().collect()
    } else {
        let mut res = Vec::with_capacity(data.len());
        for o in 0..outer {
            let slab = &data[o * n * inner..(o + 1) * n * inner];
            let a = ArrayView2::from_shape((n, inner), slab).expect("shape");
            res.extend(m.dot(&a).as_standard_layout().iter().copied());
        }
        res
    }
}

/// Tensor-product eigenbasis of a separable Laplacian.
#[derive(Debug, Clone)]
pub struct SpectralSolver {
    pub shape: [usize; 3],
    pub bases: Vec<Basis1D>,
    forward: Vec<Array2<f64>>,
    eigen_sum: Vec<f64>,
}

impl SpectralSolver {
    pub fn new(bases: Vec<Basis1D>) -> Self {
        let mut shape = [1usize; 3];
        for (a, b) in bases.iter().enumerate() {
            shape[a] = b.len();
        }
        let forward = bases.iter().map(|b| b.vectors.t().to_owned()).collect();
        let mut eigen_sum = Vec::with_capacity(shape.iter().product());
        let ev = |a: usize, k: usize| bases.get(a).map_or(0.0, |b| b.eigenvalues[k]);
        for i in 0..shape[0] {
            for j in 0..shape[1] {
                for k in 0..shape[2] {
                    eigen_sum.push(ev(0, i) + ev(1, j) + ev(2, k));
                }
            }
        }
        SpectralSolver { shape, bases, forward, eigen_sum }
    }

    pub fn len(&self) -> usize {
        self.eigen_sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigen_sum.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen_sum
    }

    pub fn to_modes(&self, data: &[f64]) -> Vec<f64> {
        let mut cur = data.to_vec();
        for a in 0..self.bases.len() {
            cur = apply_axis(&cur, self.shape, a, self.forward[a].view());
        }
        cur
    }

    pub fn from_modes(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut cur = coeffs.to_vec();
        for a in 0..self.bases.len() {
            cur = apply_axis(&cur, self.shape, a, self.bases[a].vectors.view());
        }
        cur
    }

    /// Solve `f(Λ) x = rhs` mode by mode; modes where `f` vanishes (the
    /// Laplacian kernel) are set to zero.
    pub fn solve_symbol(&self, rhs: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut c = self.to_modes(rhs);
        for (ci, &lam) in c.iter_mut().zip(&self.eigen_sum) {
            let s = f(lam);
            *ci = if s == 0.0 { 0.0 } else { *ci / s };
        }
        self.from_modes(&c)
    }

    /// Physical wavenumber magnitude of every tensor mode.
    pub fn wavenumber_norms(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let w = |a: usize, k: usize| self.bases.get(a).map_or(0.0, |b| b.wavenumbers[k]);
        for i in 0..self.shape[0] {
            for j in 0..self.shape[1] {
                for k in 0..self.shape[2] {
                    out.push((w(0, i).powi(2) + w(1, j).powi(2) + w(2, k).powi(2)).sqrt());
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_matrix(kind: BasisKind, n: usize, h: f64) -> Array2<f64> {
        let m = if kind == BasisKind::DirichletFace { n - 1 } else { n };
        let mut a = Array2::zeros((m, m));
        let s = 1.0 / (h * h);
        for j in 0..m {
            a[[j, j]] = -2.0 * s;
            match kind {
                BasisKind::Periodic => {
                    a[[j, (j + 1) % m]] += s;
                    a[[j, (j + m - 1) % m]] += s;
                }
                _ => {
                    if j + 1 < m {
                        a[[j, j + 1]] = s;
                    } else if kind == BasisKind::NeumannCell {
                        a[[j, j]] += s;
                    }
                    if j > 0 {
                        a[[j, j - 1]] = s;
                    } else if kind == BasisKind::NeumannCell {
                        a[[j, j]] += s;
                    }
                }
            }
        }
        a
    }

    #[test]
    fn bases_are_orthonormal_eigenvectors() {
        for kind in [BasisKind::Periodic, BasisKind::NeumannCell, BasisKind::DirichletFace] {
            for n in [4usize, 5, 8, 9] {
                let h = 0.3;
                let b = Basis1D::new(kind, n, h);
                let v = &b.vectors;
                let gram = v.t().dot(v);
                for i in 0..b.len() {
                    for j in 0..b.len() {
                        let e = if i == j { 1.0 } else { 0.0 };
                        assert!((gram[[i, j]] - e).abs() < 1e-12, "{kind:?} n={n}");
                    }
                }
                let a = laplacian_matrix(kind, n, h);
                let av = a.dot(v);
                for k in 0..b.len() {
                    for j in 0..b.len() {
                        assert!((av[[j, k]] - b.eigenvalues[k] * v[[j, k]]).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn transforms_round_trip() {
        let s = SpectralSolver::new(vec![
            Basis1D::new(BasisKind::Periodic, 6, 0.1),
            Basis1D::new(BasisKind::NeumannCell, 5, 0.2),
            Basis1D::new(BasisKind::DirichletFace, 7, 0.1),
        ]);
        let x: Vec<f64> = (0..s.len()).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let back = s.from_modes(&s.to_modes(&x));
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
