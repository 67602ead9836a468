//! Deterministic equivalents for the resolvent of a weighted Gram matrix.
//!
//! For `X` with i.i.d. `CN(0, 1/Nt)` entries and `T = diag(t)`, the normalized
//! trace `(1/Nt) tr (X T X^H + z I)^-1` converges to the unique positive root
//! `m` of
//!
//! ```text
//! m = 1 / ( (1/Nt) sum_k t_k / (1 + t_k m) + z )
//! ```
//!
//! and `(1/Nt) tr (X T X^H + z I)^-2` converges to `m'` given by
//! [`m_bar_prime`].

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RmtError {
    #[error("loads must be finite and non-negative")]
    InvalidLoads,
    #[error("regularization z must be positive, got {0}")]
    InvalidShift(f64),
    #[error("antenna count must be positive")]
    NoAntennas,
    #[error("fixed point did not converge in {0} iterations")]
    NonConvergence(usize),
    #[error("derivative denominator {0:e} is not positive")]
    Degenerate(f64),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
}

/// Loads `t_k` seen by one BS, the antenna count and the shift `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    pub loads: Vec<f64>,
    pub antennas: usize,
    pub z: f64,
}

impl LoadProfile {
    pub fn new(loads: Vec<f64>, antennas: usize, z: f64) -> Self {
        Self { loads, antennas, z }
    }

    fn check(&self) -> Result<(), RmtError> {
        if self.antennas == 0 {
            return Err(RmtError::NoAntennas);
        }
        if !(self.z.is_finite() && self.z > 0.0) {
            return Err(RmtError::InvalidShift(self.z));
        }
        if self.loads.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(RmtError::InvalidLoads);
        }
        Ok(())
    }
}

const MAX_NEWTON: usize = 500;

/// Solves for `m̄`.
///
/// Works on the equivalent form `psi(m) = z m + (1/Nt) sum t m / (1 + t m) - 1`,
/// which is increasing and concave in `m`. Newton started at `m = 0` then
/// increases monotonically to the root. Plain substitution contracts with
/// factor close to `1 - z m` and stalls when the loads are heavy.
pub fn solve_m_bar(profile: &LoadProfile) -> Result<f64, RmtError> {
    profile.check()?;
    let inv_nt = 1.0 / profile.antennas as f64;
    let z = profile.z;
    let mut m = 0.0f64;
    for _ in 0..MAX_NEWTON {
        let (mut s1, mut s2) = (0.0, 0.0);
        for &t in &profile.loads {
            let d = 1.0 + t * m;
            s1 += t * m / d;
            s2 += t / (d * d);
        }
        let psi = z * m + inv_nt * s1 - 1.0;
        if psi >= 0.0 {
            // Iterates approach from below; reaching the sign change means
            // rounding has caught up with the root.
            return Ok(m);
        }
        let next = m - psi / (z + inv_nt * s2);
        if next - m <= 4.0 * f64::EPSILON * next {
            return Ok(next.min(1.0 / z));
        }
        m = next;
    }
    Err(RmtError::NonConvergence(MAX_NEWTON))
}

/// `m̄' = m̄^2 / (1 - (m̄^2/Nt) sum t^2 / (1 + t m̄)^2)`.
pub fn m_bar_prime(profile: &LoadProfile, m_bar: f64) -> Result<f64, RmtError> {
    profile.check()?;
    let inv_nt = 1.0 / profile.antennas as f64;
    let s: f64 = profile
        .loads
        .iter()
        .map(|&t| {
            let r = t * m_bar / (1.0 + t * m_bar);
            r * r
        })
        .sum();
    let denom = 1.0 - inv_nt * s;
    if denom <= 1e-12 {
        return Err(RmtError::Degenerate(denom));
    }
    Ok(m_bar * m_bar / denom)
}

/// Solves for both `m̄` and `m̄'`.
pub fn solve(profile: &LoadProfile) -> Result<(f64, f64), RmtError> {
    let m = solve_m_bar(profile)?;
    Ok((m, m_bar_prime(profile, m)?))
}

/// `Ḡ = sigma / (1 + mu sigma m̄)^2`.
#[inline]
pub fn g_bar(sigma: f64, mu: f64, m_bar: f64) -> f64 {
    let d = 1.0 + mu * sigma * m_bar;
    sigma / (d * d)
}

fn resolvent(h: &DMatrix<Complex64>, loads: &[f64], z: f64) -> Result<DMatrix<Complex64>, RmtError> {
    let nt = h.nrows();
    let a = crate::linalg::weighted_gram(h, loads, 1.0 / nt as f64, z);
    a.cholesky()
        .map(|c| c.inverse())
        .ok_or(RmtError::NotPositiveDefinite)
}

/// `(1/Nt) tr ((1/Nt) H diag(loads) H^H + z I)^-1` for an `Nt x M` matrix `H`.
pub fn empirical_stieltjes(h: &DMatrix<Complex64>, loads: &[f64], z: f64) -> Result<f64, RmtError> {
    let inv = resolvent(h, loads, z)?;
    Ok(inv.trace().re / h.nrows() as f64)
}

/// `(1/Nt) tr ((1/Nt) H diag(loads) H^H + z I)^-2`, the sample counterpart of `m̄'`.
pub fn empirical_stieltjes_prime(h: &DMatrix<Complex64>, loads: &[f64], z: f64) -> Result<f64, RmtError> {
    let inv = resolvent(h, loads, z)?;
    let sq: f64 = inv.iter().map(|x| x.norm_sqr()).sum();
    Ok(sq / h.nrows() as f64)
}
