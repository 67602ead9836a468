//! Statistics-based coordinated beamforming.
//!
//! Uplink powers `mu` and downlink scalings `delta_bar` come from pathloss
//! statistics alone. Only the beam directions need instantaneous local CSI.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::{ChannelSet, PathlossMap};
use crate::linalg;
use crate::rmt::{self, LoadProfile, RmtError};
use crate::SinrTargets;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RobfError {
    #[error("targets infeasible: uplink powers diverge after {iterations} iterations")]
    Infeasible { iterations: usize },
    #[error("uplink iteration did not converge in {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("scaling system is singular")]
    Singular,
    #[error("scaling system has a non-positive solution")]
    NegativeSolution,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Rmt(#[from] RmtError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct UplinkOptions {
    /// Per-cell regularization added to the unit noise, zero by default.
    pub alpha: Vec<f64>,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Warm start for `mu`.
    pub initial: Option<Vec<f64>>,
}

impl UplinkOptions {
    pub fn new(n_cells: usize) -> Self {
        Self {
            alpha: vec![0.0; n_cells],
            tolerance: 1e-12,
            max_iterations: 200_000,
            initial: None,
        }
    }
}

/// Converged uplink powers with the per-cell quantities they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct UplinkSolution {
    pub mu: Vec<f64>,
    pub m_bar: Vec<f64>,
    pub m_bar_prime: Vec<f64>,
    pub alpha: Vec<f64>,
    pub antennas: usize,
    pub iterations: usize,
}

impl UplinkSolution {
    /// `Ḡ(i, n, k)`.
    pub fn g_bar(&self, pathloss: &PathlossMap, i: usize, n: usize, k: usize) -> f64 {
        let kk = pathloss.users_per_cell();
        rmt::g_bar(pathloss.get(i, n, k), self.mu[n * kk + k], self.m_bar[i])
    }
}

fn check_dims(pathloss: &PathlossMap, targets: &SinrTargets) -> Result<(), RobfError> {
    if pathloss.n_cells() != targets.n_cells() || pathloss.users_per_cell() != targets.users_per_cell() {
        return Err(RobfError::Dimension("targets and pathloss disagree".into()));
    }
    Ok(())
}

/// Load profile seen by BS `i` for uplink powers `mu`.
pub fn cell_profile(pathloss: &PathlossMap, mu: &[f64], i: usize, antennas: usize, alpha: f64) -> LoadProfile {
    let loads = pathloss.row(i).iter().zip(mu).map(|(s, m)| s * m).collect();
    LoadProfile::new(loads, antennas, 1.0 + alpha)
}

/// `m̄_i` for every cell.
pub fn m_bars(pathloss: &PathlossMap, mu: &[f64], antennas: usize, alpha: &[f64]) -> Result<Vec<f64>, RmtError> {
    (0..pathloss.n_cells())
        .map(|i| rmt::solve_m_bar(&cell_profile(pathloss, mu, i, antennas, alpha[i])))
        .collect()
}

/// One application of the uplink map `mu -> gamma / (sigma(i,i,j) m̄_i(mu))`.
pub fn uplink_map(
    pathloss: &PathlossMap,
    targets: &SinrTargets,
    antennas: usize,
    alpha: &[f64],
    mu: &[f64],
) -> Result<Vec<f64>, RobfError> {
    check_dims(pathloss, targets)?;
    let m = m_bars(pathloss, mu, antennas, alpha)?;
    Ok(apply_map(pathloss, targets, &m))
}

fn apply_map(pathloss: &PathlossMap, targets: &SinrTargets, m: &[f64]) -> Vec<f64> {
    let k = pathloss.users_per_cell();
    (0..pathloss.total_users())
        .map(|u| {
            let i = u / k;
            targets.as_slice()[u] / (pathloss.get(i, i, u % k) * m[i])
        })
        .collect()
}

fn finish(
    pathloss: &PathlossMap,
    mu: Vec<f64>,
    antennas: usize,
    alpha: &[f64],
    iterations: usize,
) -> Result<UplinkSolution, RobfError> {
    let mut m_bar = Vec::with_capacity(pathloss.n_cells());
    let mut m_bar_prime = Vec::with_capacity(pathloss.n_cells());
    for i in 0..pathloss.n_cells() {
        let p = cell_profile(pathloss, &mu, i, antennas, alpha[i]);
        let (m, mp) = rmt::solve(&p)?;
        m_bar.push(m);
        m_bar_prime.push(mp);
    }
    Ok(UplinkSolution {
        mu,
        m_bar,
        m_bar_prime,
        alpha: alpha.to_vec(),
        antennas,
        iterations,
    })
}

/// Uplink powers with default options.
pub fn uplink_powers(pathloss: &PathlossMap, targets: &SinrTargets, antennas: usize) -> Result<UplinkSolution, RobfError> {
    uplink_powers_with(pathloss, targets, antennas, &UplinkOptions::new(pathloss.n_cells()))
}

/// Fixed-point iteration `mu <- gamma / (sigma(i,i,j) m̄_i(mu))`.
pub fn uplink_powers_with(
    pathloss: &PathlossMap,
    targets: &SinrTargets,
    antennas: usize,
    opts: &UplinkOptions,
) -> Result<UplinkSolution, RobfError> {
    check_dims(pathloss, targets)?;
    if opts.alpha.len() != pathloss.n_cells() || opts.alpha.iter().any(|a| !(*a >= 0.0)) {
        return Err(RobfError::Dimension("alpha must be non-negative, one per cell".into()));
    }
    let total = pathloss.total_users();
    let zero = vec![0.0; total];
    let first = uplink_map(pathloss, targets, antennas, &opts.alpha, &zero)?;
    let cap = first.iter().cloned().fold(0.0, f64::max) * 1e6;
    let mut mu = match &opts.initial {
        Some(init) if init.len() == total => init.clone(),
        Some(_) => return Err(RobfError::Dimension("warm start has the wrong length".into())),
        None => first,
    };
    for it in 1..=opts.max_iterations {
        let m = m_bars(pathloss, &mu, antennas, &opts.alpha)?;
        if m.iter().any(|&v| v < 1e-9) {
            return Err(RobfError::Infeasible { iterations: it });
        }
        let next = apply_map(pathloss, targets, &m);
        let change = next
            .iter()
            .zip(&mu)
            .map(|(a, b)| (a - b).abs() / a)
            .fold(0.0, f64::max);
        mu = next;
        if mu.iter().any(|&v| v > cap) {
            return Err(RobfError::Infeasible { iterations: it });
        }
        if change <= opts.tolerance {
            return finish(pathloss, mu, antennas, &opts.alpha, it);
        }
    }
    Err(RobfError::NonConvergence {
        iterations: opts.max_iterations,
    })
}

/// Matrix `M = Γ Δ'^T` and vector `κ` of the uplink linear system
/// `mu = M mu + κ`, with coefficients evaluated at `sol`.
pub fn uplink_linear_system(
    pathloss: &PathlossMap,
    targets: &SinrTargets,
    sol: &UplinkSolution,
) -> (DMatrix<f64>, DVector<f64>) {
    let (n, k) = (pathloss.n_cells(), pathloss.users_per_cell());
    let nt = sol.antennas as f64;
    let total = n * k;
    let mut m = DMatrix::zeros(total, total);
    let mut kappa = DVector::zeros(total);
    for i in 0..n {
        let (mb, mp, z) = (sol.m_bar[i], sol.m_bar_prime[i], 1.0 + sol.alpha[i]);
        for j in 0..k {
            let row = i * k + j;
            let s = pathloss.get(i, i, j);
            let g_own = sol.g_bar(pathloss, i, i, j);
            let gamma = targets.get(i, j);
            let big_gamma = gamma / (s * g_own * mb * mb);
            for c in 0..n {
                for u in 0..k {
                    m[(row, c * k + u)] = big_gamma * sol.g_bar(pathloss, i, c, u) * g_own * mp / nt;
                }
            }
            kappa[row] = gamma * z * mp / (s * mb * mb);
        }
    }
    (m, kappa)
}

/// Uplink powers by repeated solves of `(I - M(mu)) mu' = κ(mu)` with the
/// coefficients frozen at the previous iterate. An independent route to the
/// fixed point of [`uplink_powers`].
pub fn uplink_powers_linear(
    pathloss: &PathlossMap,
    targets: &SinrTargets,
    antennas: usize,
    alpha: &[f64],
) -> Result<Vec<f64>, RobfError> {
    check_dims(pathloss, targets)?;
    let total = pathloss.total_users();
    let mut mu = uplink_map(pathloss, targets, antennas, alpha, &vec![0.0; total])?;
    for it in 1..=500 {
        let sol = finish(pathloss, mu.clone(), antennas, alpha, it)?;
        let (m, kappa) = uplink_linear_system(pathloss, targets, &sol);
        let a = DMatrix::identity(total, total) - m;
        let next = linalg::solve_real(a, &kappa).ok_or(RobfError::Singular)?;
        if next.iter().any(|&v| v <= 0.0) {
            return Err(RobfError::Infeasible { iterations: it });
        }
        let change = next
            .iter()
            .zip(&mu)
            .map(|(a, b)| (a - b).abs() / a)
            .fold(0.0, f64::max);
        mu = next.iter().cloned().collect();
        if change <= 1e-13 {
            return Ok(mu);
        }
    }
    Err(RobfError::NonConvergence { iterations: 500 })
}

/// The downlink scaling system `(I - Γ Δ) δ̄ = ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingSolution {
    pub delta_bar: Vec<f64>,
    /// `Γ Δ`.
    pub gamma_delta: DMatrix<f64>,
    pub rho: Vec<f64>,
}

/// Builds `Γ Δ` and `ρ` for a converged uplink solution.
pub fn scaling_system(
    pathloss: &PathlossMap,
    targets: &SinrTargets,
    uplink: &UplinkSolution,
    noise: f64,
) -> (DMatrix<f64>, Vec<f64>) {
    let (n, k) = (pathloss.n_cells(), pathloss.users_per_cell());
    let nt = uplink.antennas as f64;
    let total = n * k;
    let mut gd = DMatrix::zeros(total, total);
    let mut rho = vec![0.0; total];
    for i in 0..n {
        let mb = uplink.m_bar[i];
        for j in 0..k {
            let row = i * k + j;
            let s = pathloss.get(i, i, j);
            let g_own = uplink.g_bar(pathloss, i, i, j);
            let big_gamma = targets.get(i, j) / (s * g_own * mb * mb);
            rho[row] = targets.get(i, j) * noise / (s * g_own * mb * mb);
            for c in 0..n {
                let g_cross = uplink.g_bar(pathloss, c, i, j);
                let mp = uplink.m_bar_prime[c];
                for u in 0..k {
                    let col = c * k + u;
                    if col != row {
                        gd[(row, col)] = big_gamma * g_cross * uplink.g_bar(pathloss, c, c, u) * mp / nt;
                    }
                }
            }
        }
    }
    (gd, rho)
}

/// Solves for `δ̄`.
pub fn scaling_factors(
    pathloss: &PathlossMap,
    targets: &SinrTargets,
    uplink: &UplinkSolution,
    noise: f64,
) -> Result<ScalingSolution, RobfError> {
    check_dims(pathloss, targets)?;
    let (gd, rho) = scaling_system(pathloss, targets, uplink, noise);
    let total = rho.len();
    let a = DMatrix::identity(total, total) - &gd;
    let x = linalg::solve_real(a, &DVector::from_vec(rho.clone())).ok_or(RobfError::Singular)?;
    if x.iter().any(|&v| v <= 0.0) {
        return Err(RobfError::NegativeSolution);
    }
    Ok(ScalingSolution {
        delta_bar: x.iter().cloned().collect(),
        gamma_delta: gd,
        rho,
    })
}

/// Large-system downlink SINR for scalings `delta_bar`.
pub fn asymptotic_dl_sinr(pathloss: &PathlossMap, uplink: &UplinkSolution, delta_bar: &[f64], noise: f64) -> Vec<f64> {
    let (n, k) = (pathloss.n_cells(), pathloss.users_per_cell());
    let nt = uplink.antennas as f64;
    let mut out = Vec::with_capacity(n * k);
    for i in 0..n {
        for j in 0..k {
            let row = i * k + j;
            let mb = uplink.m_bar[i];
            let signal = delta_bar[row] * pathloss.get(i, i, j) * uplink.g_bar(pathloss, i, i, j) * mb * mb;
            let mut interference = 0.0;
            for c in 0..n {
                let g_cross = uplink.g_bar(pathloss, c, i, j);
                for u in 0..k {
                    if c * k + u != row {
                        interference +=
                            delta_bar[c * k + u] * g_cross * uplink.g_bar(pathloss, c, c, u) * uplink.m_bar_prime[c] / nt;
                    }
                }
            }
            out.push(signal / (interference + noise));
        }
    }
    out
}

/// Large-system transmit power of each BS, `sum_j δ̄(i,j) Ḡ(i,i,j) m̄'_i / Nt`.
pub fn asymptotic_dl_power(pathloss: &PathlossMap, uplink: &UplinkSolution, delta_bar: &[f64]) -> Vec<f64> {
    let (n, k) = (pathloss.n_cells(), pathloss.users_per_cell());
    let nt = uplink.antennas as f64;
    (0..n)
        .map(|i| {
            (0..k)
                .map(|j| delta_bar[i * k + j] * uplink.g_bar(pathloss, i, i, j) * uplink.m_bar_prime[i] / nt)
                .sum()
        })
        .collect()
}

/// Statistics-only part of the solution: powers and scalings.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticalSolution {
    pub uplink: UplinkSolution,
    pub scaling: ScalingSolution,
}

pub fn solve_statistics(
    pathloss: &PathlossMap,
    targets: &SinrTargets,
    antennas: usize,
    noise: f64,
) -> Result<StatisticalSolution, RobfError> {
    let uplink = uplink_powers(pathloss, targets, antennas)?;
    let scaling = scaling_factors(pathloss, targets, &uplink, noise)?;
    Ok(StatisticalSolution { uplink, scaling })
}

/// Unnormalized directions `Φ_i^-1 h(i,i,j)`, `Φ_i = (1/Nt) sum mu h h^H + (1 + α_i) I`.
fn directions(channels: &ChannelSet, uplink: &UplinkSolution, bs: usize) -> Result<DMatrix<Complex64>, RobfError> {
    let nt = channels.antennas() as f64;
    linalg::regularized_solve(
        channels.matrix(bs),
        &uplink.mu,
        1.0 / nt,
        1.0 + uplink.alpha[bs],
        &channels.own(bs),
    )
    .ok_or(RobfError::Rmt(RmtError::NotPositiveDefinite))
}

fn check_channels(channels: &ChannelSet, uplink: &UplinkSolution) -> Result<(), RobfError> {
    if channels.n_cells() * channels.users_per_cell() != uplink.mu.len() || channels.antennas() != uplink.antennas {
        return Err(RobfError::Dimension("channels do not match the uplink solution".into()));
    }
    Ok(())
}

/// Uplink MMSE receive filters `(1/(N0 sqrt(Nt))) Φ_i^-1 h(i,i,j)`, one
/// `Nt x K` matrix per BS.
pub fn receive_filters(
    channels: &ChannelSet,
    uplink: &UplinkSolution,
    noise: f64,
) -> Result<Vec<DMatrix<Complex64>>, RobfError> {
    check_channels(channels, uplink)?;
    let scale = Complex64::from(1.0 / (noise * (channels.antennas() as f64).sqrt()));
    (0..channels.n_cells())
        .map(|i| directions(channels, uplink, i).map(|d| d * scale))
        .collect()
}

/// Downlink beamformers and their power.
#[derive(Debug, Clone, PartialEq)]
pub struct DownlinkSolution {
    /// One `Nt x K` matrix per BS; column `j` serves user `(i, j)`.
    pub beamformers: Vec<DMatrix<Complex64>>,
    pub per_bs_power: Vec<f64>,
}

impl DownlinkSolution {
    pub fn from_beamformers(beamformers: Vec<DMatrix<Complex64>>) -> Self {
        let per_bs_power = beamformers.iter().map(|w| w.norm_squared()).collect();
        Self {
            beamformers,
            per_bs_power,
        }
    }

    pub fn total_power(&self) -> f64 {
        self.per_bs_power.iter().sum()
    }
}

/// Downlink beamformers `sqrt(δ̄/Nt) (1/sqrt(Nt)) Φ_i^-1 h(i,i,j)`.
///
/// This is the noise-normalized receive filter. Its large-system gains are
/// the ones the scaling system is built from.
pub fn beamformers(
    channels: &ChannelSet,
    uplink: &UplinkSolution,
    scaling: &ScalingSolution,
) -> Result<DownlinkSolution, RobfError> {
    check_channels(channels, uplink)?;
    let nt = channels.antennas() as f64;
    let k = channels.users_per_cell();
    let mut out = Vec::with_capacity(channels.n_cells());
    for i in 0..channels.n_cells() {
        let mut d = directions(channels, uplink, i)?;
        for j in 0..k {
            let f = (scaling.delta_bar[i * k + j] / nt).sqrt() / nt.sqrt();
            d.column_mut(j).scale_mut(f);
        }
        out.push(d);
    }
    Ok(DownlinkSolution::from_beamformers(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wyner_m(k: usize, nt: usize, eps: f64, gamma: f64) -> f64 {
        1.0 - (k as f64 / nt as f64) * (gamma / (1.0 + gamma) + eps * gamma / (1.0 + eps * gamma))
    }

    #[test]
    fn single_cell_symmetric_closed_form() {
        // K = Nt, gamma = 1: m̄ = 1 - K/(2 Nt) = 1/2 and mu = 2.
        let pl = PathlossMap::new(1, 8, vec![1.0; 8]).unwrap();
        let t = SinrTargets::uniform(1, 8, 1.0).unwrap();
        let sol = uplink_powers(&pl, &t, 8).unwrap();
        assert!((sol.m_bar[0] - 0.5).abs() < 1e-11);
        for m in &sol.mu {
            assert!((m - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn wyner_closed_form() {
        let (k, nt, eps, gamma) = (20, 60, 0.5, 1.5);
        let pl = PathlossMap::wyner(k, eps).unwrap();
        let t = SinrTargets::uniform(2, k, gamma).unwrap();
        let sol = uplink_powers(&pl, &t, nt).unwrap();
        let m = wyner_m(k, nt, eps, gamma);
        assert!((sol.m_bar[0] / m - 1.0).abs() < 1e-10);
        assert!((sol.mu[3] / (gamma / m) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn linear_route_agrees() {
        let pl = PathlossMap::from_fn(2, 5, |i, n, k| if i == n { 1.0 + 0.2 * k as f64 } else { 0.1 + 0.05 * k as f64 })
            .unwrap();
        let t = SinrTargets::new(2, 5, (0..10).map(|u| 0.5 + 0.1 * u as f64).collect()).unwrap();
        let a = uplink_powers(&pl, &t, 12).unwrap();
        let b = uplink_powers_linear(&pl, &t, 12, &[0.0, 0.0]).unwrap();
        for (x, y) in a.mu.iter().zip(&b) {
            assert!((x / y - 1.0).abs() < 1e-9);
        }
        let (m, kappa) = uplink_linear_system(&pl, &t, &a);
        let rhs = &m * DVector::from_vec(a.mu.clone()) + kappa;
        for (x, y) in rhs.iter().zip(&a.mu) {
            assert!((x / y - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn infeasible_wyner_is_flagged() {
        let pl = PathlossMap::wyner(50, 0.5).unwrap();
        let t = SinrTargets::uniform(2, 50, 3.0).unwrap();
        assert!(matches!(uplink_powers(&pl, &t, 60), Err(RobfError::Infeasible { .. })));
    }

    #[test]
    fn scaling_hits_targets_asymptotically() {
        let pl = PathlossMap::from_fn(2, 4, |i, n, k| if i == n { 2.0 - 0.3 * k as f64 } else { 0.2 + 0.1 * k as f64 })
            .unwrap();
        let t = SinrTargets::uniform(2, 4, 2.0).unwrap();
        let st = solve_statistics(&pl, &t, 10, 0.7).unwrap();
        let sinr = asymptotic_dl_sinr(&pl, &st.uplink, &st.scaling.delta_bar, 0.7);
        for s in sinr {
            assert!((s / 2.0 - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn scaling_matches_neumann_series() {
        let pl = PathlossMap::from_fn(2, 3, |i, n, k| if i == n { 1.0 } else { 0.3 + 0.1 * k as f64 }).unwrap();
        let t = SinrTargets::uniform(2, 3, 1.0).unwrap();
        let st = solve_statistics(&pl, &t, 12, 1.0).unwrap();
        let gd = &st.scaling.gamma_delta;
        let rho = DVector::from_vec(st.scaling.rho.clone());
        let mut term = rho.clone();
        let mut sum = rho.clone();
        for _ in 0..200 {
            term = gd * term;
            sum += &term;
        }
        for (a, b) in sum.iter().zip(&st.scaling.delta_bar) {
            assert!((a / b - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let pl = PathlossMap::wyner(3, 0.1).unwrap();
        let t = SinrTargets::uniform(2, 4, 1.0).unwrap();
        assert!(matches!(uplink_powers(&pl, &t, 8), Err(RobfError::Dimension(_))));
    }
}
