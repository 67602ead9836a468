use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// `scale * H diag(w) H^H + shift I`.
pub(crate) fn weighted_gram(h: &DMatrix<Complex64>, w: &[f64], scale: f64, shift: f64) -> DMatrix<Complex64> {
    debug_assert_eq!(h.ncols(), w.len());
    let mut x = h.clone();
    for (c, &wc) in w.iter().enumerate() {
        x.column_mut(c).scale_mut((wc * scale).max(0.0).sqrt());
    }
    let mut a = &x * x.adjoint();
    for d in 0..a.nrows() {
        a[(d, d)] += Complex64::from(shift);
    }
    a
}

/// `(scale * H diag(w) H^H + shift I)^-1 B` via Cholesky.
pub(crate) fn regularized_solve(
    h: &DMatrix<Complex64>,
    w: &[f64],
    scale: f64,
    shift: f64,
    b: &DMatrix<Complex64>,
) -> Option<DMatrix<Complex64>> {
    let a = weighted_gram(h, w, scale, shift);
    a.cholesky().map(|c| c.solve(b))
}

/// Real dense solve through LU; `None` if singular or non-finite.
pub(crate) fn solve_real(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let x = a.lu().solve(b)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}
