//! Small dense complex linear-algebra helpers shared by the solver and the
//! beamforming code.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::C64;

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// `(M + M^H) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigen-decomposition of a Hermitian matrix. Eigenvalues ascending, with
/// matching eigenvector columns.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in idx.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// `V diag(values) V^H`.
pub fn from_eigen(values: &[f64], vectors: &CMatrix) -> CMatrix {
    let n = vectors.nrows();
    let mut out = CMatrix::zeros(n, n);
    for (k, &lam) in values.iter().enumerate() {
        if lam == 0.0 {
            continue;
        }
        let v = vectors.column(k);
        for j in 0..n {
            let vj = v[j].conj() * lam;
            for i in 0..n {
                out[(i, j)] += v[i] * vj;
            }
        }
    }
    out
}

/// `a a^H`.
pub fn outer(a: &CVector) -> CMatrix {
    a * a.adjoint()
}

/// Real Frobenius inner product `Re tr(A^H B)`.
pub fn frob_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// `Re(a^H M a)`; for Hermitian `M` this is the exact quadratic form.
pub fn quad_form(m: &CMatrix, a: &CVector) -> f64 {
    let ma = m * a;
    a.iter().zip(ma.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// `|a^H w|^2`.
pub fn gain(a: &CVector, w: &CVector) -> f64 {
    a.dotc(w).norm_sqr()
}

/// Euclidean projection of `x` onto `{y >= 0, sum(y) <= cap}`.
pub fn project_capped_simplex(x: &mut [f64], cap: f64) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total: f64 = x.iter().sum();
    if total <= cap {
        return;
    }
    project_simplex(x, cap);
}

/// Euclidean projection of `x` onto `{y >= 0, sum(y) = total}`.
pub fn project_simplex(x: &mut [f64], total: f64) {
    let mut sorted: Vec<f64> = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cumsum += s;
        let t = (cumsum - total) / (i + 1) as f64;
        if s - t > 0.0 {
            tau = t;
        }
    }
    for v in x.iter_mut() {
        *v = (*v - tau).max(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn eigen_reconstructs() {
        let m = CMatrix::from_row_slice(
            3,
            3,
            &[
                c(2.0, 0.0),
                c(0.5, 1.0),
                c(0.0, -0.3),
                c(0.5, -1.0),
                c(-1.0, 0.0),
                c(0.2, 0.2),
                c(0.0, 0.3),
                c(0.2, -0.2),
                c(0.7, 0.0),
            ],
        );
        let (vals, vecs) = hermitian_eigen(&m);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let r = from_eigen(&vals, &vecs);
        assert!((r - m).norm() < 1e-12);
    }

    #[test]
    fn capped_simplex_projection() {
        let mut x = [3.0, 1.0, -2.0];
        project_capped_simplex(&mut x, 2.0);
        assert!((x[0] - 2.0).abs() < 1e-12 && x[1].abs() < 1e-12 && x[2] == 0.0);

        let mut y = [0.2, 0.3, -1.0];
        project_capped_simplex(&mut y, 2.0);
        assert_eq!(y, [0.2, 0.3, 0.0]);

        let mut z = [1.0, 1.0];
        project_capped_simplex(&mut z, 1.0);
        assert!((z[0] - 0.5).abs() < 1e-12 && (z[1] - 0.5).abs() < 1e-12);

        let mut w = [0.1, 0.0, -0.5];
        project_simplex(&mut w, 1.0);
        assert!((w[0] - 0.55).abs() < 1e-12 && (w[1] - 0.45).abs() < 1e-12 && w[2] == 0.0);
    }

    #[test]
    fn gain_and_quad_form_agree() {
        let a = CVector::from_vec(alloc::vec![c(1.0, 2.0), c(-0.5, 0.1)]);
        let w = CVector::from_vec(alloc::vec![c(0.3, -0.2), c(1.0, 1.0)]);
        let lhs = gain(&a, &w);
        let rhs = quad_form(&outer(&w), &a);
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
