use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::{Operator, Tolerances};
use crate::error::{Error, Result};

fn to_nalgebra(x: &Operator) -> DMatrix<C64> {
    let n = x.dim();
    DMatrix::from_fn(n, n, |i, j| x.get(i, j))
}

/// Ascending eigenvalues of the Hermitian part of `x`.
pub fn hermitian_eigenvalues(x: &Operator) -> Vec<f64> {
    let h = x.hermitian_part();
    let eig = to_nalgebra(&h).symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    vals
}

/// Eigen-decomposition of the Hermitian part: (eigenvalues, eigenvectors as columns).
pub fn hermitian_eigen(x: &Operator) -> (Vec<f64>, Vec<Vec<C64>>) {
    let h = x.hermitian_part();
    let eig = to_nalgebra(&h).symmetric_eigen();
    let n = x.dim();
    let vals = eig.eigenvalues.iter().copied().collect();
    let vecs = (0..n).map(|c| (0..n).map(|r| eig.eigenvectors[(r, c)]).collect()).collect();
    (vals, vecs)
}

/// Smallest eigenvalue of (x + x†)/2, after checking that x is Hermitian.
pub fn spectral_floor(x: &Operator, tol: &Tolerances) -> Result<f64> {
    let dev = x.hermiticity_deviation();
    if dev > tol.herm {
        return Err(Error::NotHermitian { deviation: dev });
    }
    Ok(hermitian_eigenvalues(x)[0])
}

/// ½‖a − b‖₁ for Hermitian a, b.
pub fn trace_distance(a: &Operator, b: &Operator) -> f64 {
    let d = a - b;
    0.5 * hermitian_eigenvalues(&d).iter().map(|v| v.abs()).sum::<f64>()
}

/// Tr{ρ²} for Hermitian ρ.
pub fn purity(rho: &Operator) -> f64 {
    rho.as_slice().iter().map(|z| z.norm_sqr()).sum()
}

/// Largest singular value of a general complex matrix given row-major.
pub fn spectral_norm(n_rows: usize, n_cols: usize, data: &[C64]) -> f64 {
    let m = DMatrix::from_fn(n_rows, n_cols, |i, j| data[i * n_cols + j]);
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Projects onto the PSD cone by clipping negative eigenvalues, then
/// renormalizes to unit trace.
pub fn clip_to_psd(x: &Operator) -> Operator {
    let (vals, vecs) = hermitian_eigen(x);
    let n = x.dim();
    let mut out = Operator::zeros(n);
    for (v, u) in vals.iter().zip(&vecs) {
        if *v > 0.0 {
            out.axpy(C64::new(*v, 0.0), &Operator::outer(u, u));
        }
    }
    let tr = out.trace().re;
    if tr > 0.0 {
        out.scale_in_place(C64::new(1.0 / tr, 0.0));
    }
    out
}
