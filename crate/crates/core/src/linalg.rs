//! Small dense complex linear-algebra helpers shared by the solvers.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Relative ridge applied when a Hermitian matrix fails to factor.
pub const RIDGE: f64 = 1e-12;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    CMat::zeros(r, c)
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * c(0.5, 0.0)
}

pub fn real_trace(a: &CMat) -> f64 {
    a.diagonal().iter().map(|z| z.re).sum()
}

pub fn fro2(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Real diagonal of `a` as an owned vector.
pub fn real_diag(a: &CMat) -> Vec<f64> {
    a.diagonal().iter().map(|z| z.re).collect()
}

pub fn diag_real(d: &[f64]) -> CMat {
    let n = d.len();
    CMat::from_fn(n, n, |r, col| if r == col { c(d[r], 0.0) } else { c(0.0, 0.0) })
}

/// Cholesky factor of a Hermitian positive (semi)definite matrix. Falls back to
/// a relative ridge `RIDGE * tr(A) / n` when the plain factorization fails.
pub fn cholesky(a: &CMat, what: &'static str) -> Result<Cholesky<C64, nalgebra::Dyn>> {
    let h = hermitian_part(a);
    if let Some(ch) = Cholesky::new(h.clone()) {
        return Ok(ch);
    }
    let n = h.nrows().max(1) as f64;
    let tr = real_trace(&h).abs();
    let ridge = if tr > 0.0 { RIDGE * tr / n } else { RIDGE };
    let mut r = h;
    for i in 0..r.nrows() {
        r[(i, i)] += c(ridge, 0.0);
    }
    Cholesky::new(r).ok_or(Error::Singular(what))
}

pub fn solve_hpd(a: &CMat, b: &CMat, what: &'static str) -> Result<CMat> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "{what}: lhs {}x{} vs rhs {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(cholesky(a, what)?.solve(b))
}

pub fn inv_hpd(a: &CMat, what: &'static str) -> Result<CMat> {
    Ok(cholesky(a, what)?.inverse())
}

/// Natural log-determinant of a Hermitian positive definite matrix.
pub fn ln_det_hpd(a: &CMat, what: &'static str) -> Result<f64> {
    let ch = Cholesky::new(hermitian_part(a)).ok_or(Error::Singular(what))?;
    Ok(ch.l().diagonal().iter().map(|z| 2.0 * z.re.ln()).sum())
}

/// Eigen-decomposition of the Hermitian part of `a`, eigenvalues ascending.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(hermitian_part(a));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    (values, vectors)
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Column-major vectorization.
pub fn vec_of(a: &CMat) -> Vec<C64> {
    a.as_slice().to_vec()
}

pub fn unvec(v: &[C64], rows: usize, cols: usize) -> CMat {
    CMat::from_column_slice(rows, cols, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_det_matches_eigenvalues() {
        let a = CMat::from_row_slice(2, 2, &[c(3.0, 0.0), c(1.0, 1.0), c(1.0, -1.0), c(2.0, 0.0)]);
        let (vals, _) = hermitian_eigen(&a);
        let want: f64 = vals.iter().map(|v| v.ln()).sum();
        assert!((ln_det_hpd(&a, "t").unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn eigen_reconstructs() {
        let a = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 2.0), c(0.5, -2.0), c(-1.0, 0.0)]);
        let (vals, q) = hermitian_eigen(&a);
        assert!(vals[0] <= vals[1]);
        let back = &q * diag_real(&vals) * q.adjoint();
        assert!(max_abs_diff(&back, &a) < 1e-12);
    }

    #[test]
    fn singular_psd_gets_ridge() {
        let a = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(cholesky(&a, "t").is_ok());
        assert!(cholesky(&zeros(2, 2), "t").is_ok());
    }
}
