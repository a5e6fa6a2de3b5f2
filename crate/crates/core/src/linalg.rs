//! Dense hermitian helpers backed by nalgebra.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// Eigenpairs of a hermitian matrix, eigenvalues ascending, eigenvectors as columns.
pub fn hermitian_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = m.clone().symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `exp(-i H t)` for hermitian `H` via its eigendecomposition.
pub fn expm_hermitian(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let (values, vectors) = hermitian_eigen(h);
    let n = h.nrows();
    let mut scaled = vectors.clone();
    for (c, &e) in values.iter().enumerate() {
        let phase = C64::new(0.0, -e * t).exp();
        for r in 0..n {
            scaled[(r, c)] *= phase;
        }
    }
    scaled * vectors.adjoint()
}

/// Largest entry of `|M - M†|`.
pub fn hermitian_deviation(m: &DMatrix<C64>) -> f64 {
    let mut dev = 0.0f64;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            dev = dev.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    dev
}
