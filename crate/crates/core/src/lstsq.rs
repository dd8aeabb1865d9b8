//! Complex least squares by Householder QR.

use num_complex::Complex;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::matrix::CMatrix;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct LstsqSolution<T> {
    pub x: Vec<Complex<T>>,
    /// Mean squared residual `|Ax - b|² / rows`.
    pub residual: f64,
}

/// Minimizes `|A·x - b|² + ridge·|x|²`.
///
/// Fails with [`Error::UnderDetermined`] when fewer rows than columns are given (and no ridge)
/// or when a pivot of `R` is negligible relative to the largest.
pub fn solve_least_squares<T: Real>(a: &CMatrix<T>, b: &[Complex<T>], ridge: f64) -> Result<LstsqSolution<T>> {
    let (rows, cols) = (a.rows(), a.cols());
    if b.len() != rows {
        return Err(Error::InvalidArgument(format!("rhs has {} entries for {rows} rows", b.len())));
    }
    if cols == 0 {
        return Err(Error::InvalidArgument("no unknowns".into()));
    }
    let extra = if ridge > 0.0 { cols } else { 0 };
    if rows + extra < cols {
        return Err(Error::UnderDetermined(format!("{rows} equations for {cols} unknowns")));
    }
    let m = rows + extra;
    // column-major working copy in f64
    let mut q: Vec<Vec<Complex<f64>>> = (0..cols)
        .map(|c| {
            let mut col: Vec<Complex<f64>> =
                (0..rows).map(|r| Complex::new(a[(r, c)].re.as_f64(), a[(r, c)].im.as_f64())).collect();
            col.resize(m, Complex::zero());
            if extra > 0 {
                col[rows + c] = Complex::new(ridge.sqrt(), 0.0);
            }
            col
        })
        .collect();
    let mut rhs: Vec<Complex<f64>> = b.iter().map(|v| Complex::new(v.re.as_f64(), v.im.as_f64())).collect();
    rhs.resize(m, Complex::zero());

    let mut diag = vec![Complex::<f64>::zero(); cols];
    for k in 0..cols {
        let norm = q[k][k..].iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            diag[k] = Complex::zero();
            continue;
        }
        let x0 = q[k][k];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { Complex::new(1.0, 0.0) };
        let alpha = -phase * norm;
        let mut v: Vec<Complex<f64>> = q[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        diag[k] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        let reflect = |col: &mut [Complex<f64>]| {
            let dot: Complex<f64> = v.iter().zip(col.iter()).map(|(vi, ci)| vi.conj() * ci).sum();
            let f = dot * 2.0 / vnorm2;
            for (ci, vi) in col.iter_mut().zip(&v) {
                *ci -= f * vi;
            }
        };
        for col in q.iter_mut().skip(k + 1) {
            reflect(&mut col[k..]);
        }
        reflect(&mut rhs[k..]);
    }
    let biggest = diag.iter().map(|d| d.norm()).fold(0.0, f64::max);
    let tol = biggest * 1e-12 * m.max(cols) as f64;
    if let Some(k) = diag.iter().position(|d| d.norm() <= tol) {
        return Err(Error::UnderDetermined(format!("probe set is rank deficient at column {k}")));
    }
    let mut x = vec![Complex::<f64>::zero(); cols];
    for k in (0..cols).rev() {
        let mut s = rhs[k];
        for j in k + 1..cols {
            s -= q[j][k] * x[j];
        }
        x[k] = s / diag[k];
    }
    let residual = (0..rows)
        .map(|r| {
            let fit: Complex<f64> =
                (0..cols).map(|c| Complex::new(a[(r, c)].re.as_f64(), a[(r, c)].im.as_f64()) * x[c]).sum();
            (fit - Complex::new(b[r].re.as_f64(), b[r].im.as_f64())).norm_sqr()
        })
        .sum::<f64>()
        / rows.max(1) as f64;
    Ok(LstsqSolution { x: x.into_iter().map(|v| Complex::new(T::of(v.re), T::of(v.im))).collect(), residual })
}
