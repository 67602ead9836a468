//! Sufficient feasibility conditions for statistics-based beamforming and
//! the closed forms of two special cases.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{GeometryError, PathlossMap};
use crate::SinrTargets;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeasibilityError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    /// Left-hand side of the per-cell condition; feasible when all are below 1.
    pub loads: Vec<f64>,
    /// Strongest cross gain `max_k sigma(i, n, k)`, indexed `i * N + n`; zero on the diagonal.
    pub sigma_max: Vec<f64>,
    pub feasible: bool,
}

/// Evaluates the sufficient per-cell condition
///
/// ```text
/// (1/Nt) sum_k g(i,k)/(1+g(i,k)) + (1/Nt) sum_{n != i} sum_k r g(n,k)/(1 + r g(n,k)) < 1,
/// r = sigma_max(i, n) / sigma(n, n, k).
/// ```
pub fn robf_feasible(
    pathloss: &PathlossMap,
    targets: &SinrTargets,
    antennas: usize,
) -> Result<FeasibilityReport, FeasibilityError> {
    let (n, k) = (pathloss.n_cells(), pathloss.users_per_cell());
    if targets.n_cells() != n || targets.users_per_cell() != k {
        return Err(FeasibilityError::Dimension("targets and pathloss disagree".into()));
    }
    if antennas == 0 {
        return Err(FeasibilityError::InvalidArgument("antenna count must be positive".into()));
    }
    let nt = antennas as f64;
    let mut sigma_max = vec![0.0; n * n];
    for i in 0..n {
        for c in (0..n).filter(|&c| c != i) {
            sigma_max[i * n + c] = (0..k).map(|u| pathloss.get(i, c, u)).fold(0.0, f64::max);
        }
    }
    let loads: Vec<f64> = (0..n)
        .map(|i| {
            let own: f64 = (0..k).map(|u| targets.get(i, u) / (1.0 + targets.get(i, u))).sum();
            let cross: f64 = (0..n)
                .filter(|&c| c != i)
                .flat_map(|c| (0..k).map(move |u| (c, u)))
                .map(|(c, u)| {
                    let x = sigma_max[i * n + c] / pathloss.get(c, c, u) * targets.get(c, u);
                    x / (1.0 + x)
                })
                .sum();
            (own + cross) / nt
        })
        .collect();
    let feasible = loads.iter().all(|&l| l < 1.0);
    Ok(FeasibilityReport {
        loads,
        sigma_max,
        feasible,
    })
}

/// Largest common target for a single cell, `(K / min(Nt, K) - 1)^-1`.
/// Infinite when `Nt >= K`.
pub fn single_cell_gamma_max(antennas: usize, users: usize) -> f64 {
    if antennas >= users {
        return f64::INFINITY;
    }
    1.0 / (users as f64 / antennas as f64 - 1.0)
}

/// Two-cell symmetric pathloss map: unit intra-cell, `epsilon` inter-cell.
pub fn wyner_pathloss(users_per_cell: usize, epsilon: f64) -> Result<PathlossMap, FeasibilityError> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(FeasibilityError::InvalidArgument(format!("epsilon must be non-negative, got {epsilon}")));
    }
    Ok(PathlossMap::wyner(users_per_cell, epsilon)?)
}

/// Largest common target of the two-cell symmetric model, the root of
/// `(K/Nt) (g/(1+g) + eps g/(1+eps g)) = 1`. Infinite when the left side
/// stays at or below 1 for every `g`.
pub fn wyner_cutoff(antennas: usize, users_per_cell: usize, epsilon: f64) -> f64 {
    let ratio = users_per_cell as f64 / antennas as f64;
    let lhs = |g: f64| ratio * (g / (1.0 + g) + epsilon * g / (1.0 + epsilon * g));
    let sup = ratio * if epsilon > 0.0 { 2.0 } else { 1.0 };
    if sup <= 1.0 {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while lhs(hi) < 1.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if lhs(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Perron root of a non-negative square matrix by power iteration on
/// `I + A`, stopped when the Collatz-Wielandt bounds meet within `1e-10`.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut x = DVector::from_element(n, 1.0);
    let mut prev_upper = f64::INFINITY;
    for _ in 0..1_000_000 {
        let y = a * &x + &x;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (yi, xi) in y.iter().zip(x.iter()) {
            let r = yi / xi;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if hi - lo <= 1e-10 * hi || (prev_upper - hi).abs() <= 1e-14 * hi {
            return hi - 1.0;
        }
        prev_upper = hi;
        let norm = y.max();
        x = y / norm;
    }
    prev_upper - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_limit() {
        assert!((single_cell_gamma_max(30, 50) - 1.5).abs() < 1e-12);
        assert!(single_cell_gamma_max(50, 50).is_infinite());
    }

    #[test]
    fn wyner_root_satisfies_equation() {
        let g = wyner_cutoff(60, 50, 0.5);
        let lhs = 50.0 / 60.0 * (g / (1.0 + g) + 0.5 * g / (1.0 + 0.5 * g));
        assert!((lhs - 1.0).abs() < 1e-12);
        // Clearing denominators: eps (2 - c) g^2 + (1 + eps)(1 - c) g - c = 0, c = Nt/K.
        let (c, e) = (1.2f64, 0.5f64);
        let (qa, qb, qc) = (e * (2.0 - c), (1.0 + e) * (1.0 - c), -c);
        let root = (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa);
        assert!((g - root).abs() < 1e-12);
        assert!((g - 2.147_18).abs() < 1e-5);
        assert!(wyner_cutoff(100, 50, 0.5).is_infinite());
    }

    #[test]
    fn periodic_matrix_radius() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 4.0, 1.0, 0.0]);
        assert!((spectral_radius(&a) - 2.0).abs() < 1e-9);
        assert_eq!(spectral_radius(&DMatrix::zeros(3, 3)), 0.0);
    }
}
