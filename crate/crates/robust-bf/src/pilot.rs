//! Statistics-based beamforming with pilot-contaminated channel estimates.
//!
//! User `k` of every cell reuses pilot `k`, so BS `i` sees the estimates
//! `ĥ(i, n, k)` of one pilot group as scaled copies of each other. Its filter
//! is therefore built on the own-cell estimates only,
//! `Ψ_i = (1/Nt) sum_k xi(i,k) ĥ(i,i,k) ĥ(i,i,k)^H + I`, where
//! `xi(i,k) = sum_n sigma(i,n,k) mu(n,k) / sigma(i,i,k)` aggregates the pilot
//! group. The large-system SINR keeps the co-pilot interference, which does
//! not vanish as `Nt` grows.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{self, EstimateSet, GeometryError, PathlossMap};
use crate::linalg;
use crate::rmt::{self, LoadProfile, RmtError};
use crate::robf::{self, DownlinkSolution, RobfError, UplinkSolution};
use crate::SinrTargets;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PilotError {
    #[error("targets infeasible under pilot contamination after {iterations} iterations")]
    Infeasible { iterations: usize },
    #[error("uplink iteration did not converge in {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("scaling system is singular")]
    Singular,
    #[error("scaling system has a non-positive solution")]
    NegativeSolution,
    #[error("estimate covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Rmt(#[from] RmtError),
    #[error(transparent)]
    Robf(#[from] RobfError),
}

/// Large-system quantities of the estimate-based filters.
#[derive(Debug, Clone, PartialEq)]
pub struct EstStatistics {
    pub sigma_prime: PathlossMap,
    pub sigma_hat: PathlossMap,
    /// `xi(i, k)`, flat `i * K + k`.
    pub xi: Vec<f64>,
    pub m_bar: Vec<f64>,
    pub m_bar_prime: Vec<f64>,
    /// `Ĝ(i, k) = 1 / (1 + xi(i,k) sigma_hat(i,i,k) m̄_i)`, flat.
    pub g_hat: Vec<f64>,
    pub antennas: usize,
}

impl EstStatistics {
    fn k(&self) -> usize {
        self.sigma_hat.users_per_cell()
    }

    fn gh(&self, i: usize, k: usize) -> f64 {
        self.g_hat[i * self.k() + k]
    }

    fn xi_at(&self, i: usize, k: usize) -> f64 {
        self.xi[i * self.k() + k]
    }

    /// `sigma_hat(i,i,j) Ĝ(i,j) m̄_i`, the normalized desired-signal gain.
    pub fn signal_gain(&self, i: usize, j: usize) -> f64 {
        self.sigma_hat.get(i, i, j) * self.gh(i, j) * self.m_bar[i]
    }
}

/// Statistics of the estimate-based filters for uplink powers `mu`.
pub fn est_statistics(
    pathloss: &PathlossMap,
    mu: &[f64],
    train_power: f64,
    noise: f64,
    antennas: usize,
) -> Result<EstStatistics, PilotError> {
    let (sigma_prime, sigma_hat) = geometry::estimation_gains(pathloss, train_power, noise)?;
    stats_from_gains(pathloss, sigma_prime, sigma_hat, mu, antennas)
}

fn stats_from_gains(
    pathloss: &PathlossMap,
    sigma_prime: PathlossMap,
    sigma_hat: PathlossMap,
    mu: &[f64],
    antennas: usize,
) -> Result<EstStatistics, PilotError> {
    let (n, k) = (pathloss.n_cells(), pathloss.users_per_cell());
    if mu.len() != n * k {
        return Err(PilotError::Dimension("one power per user expected".into()));
    }
    let mut xi = vec![0.0; n * k];
    for i in 0..n {
        for u in 0..k {
            xi[i * k + u] = (0..n).map(|c| pathloss.get(i, c, u) * mu[c * k + u]).sum::<f64>() / pathloss.get(i, i, u);
        }
    }
    let mut m_bar = Vec::with_capacity(n);
    let mut m_bar_prime = Vec::with_capacity(n);
    let mut g_hat = vec![0.0; n * k];
    for i in 0..n {
        let loads = (0..k).map(|u| xi[i * k + u] * sigma_hat.get(i, i, u)).collect();
        let profile = LoadProfile::new(loads, antennas, 1.0);
        let (m, mp) = rmt::solve(&profile)?;
        for u in 0..k {
            g_hat[i * k + u] = 1.0 / (1.0 + profile.loads[u] * m);
        }
        m_bar.push(m);
        m_bar_prime.push(mp);
    }
    Ok(EstStatistics {
        sigma_prime,
        sigma_hat,
        xi,
        m_bar,
        m_bar_prime,
        g_hat,
        antennas,
    })
}

/// Residual interference coefficient at user `(i, j)` of a non-co-pilot
/// beam of BS `n`.
pub fn b_coefficient(pathloss: &PathlossMap, stats: &EstStatistics, n: usize, i: usize, j: usize) -> f64 {
    let s = pathloss.get(n, i, j);
    let sp = stats.sigma_prime.get(n, n, j);
    let gm = stats.gh(n, j) * stats.m_bar[n];
    let xi = stats.xi_at(n, j);
    let a = xi * s * sp * gm;
    s + stats.sigma_hat.get(n, n, j) * a * a - 2.0 * xi * (s * sp) * (s * sp) * gm
}

/// Co-pilot gain at user `(i, j)` of the beam BS `n` steers to user `(n, j)`.
fn copilot_gain(pathloss: &PathlossMap, stats: &EstStatistics, n: usize, i: usize, j: usize) -> f64 {
    let x = pathloss.get(n, i, j) * stats.sigma_prime.get(n, n, j) * stats.gh(n, j) * stats.m_bar[n];
    x * x
}

/// Power-normalized gain of user `(n, k)`'s beam when it leaks to a non-co-pilot user.
fn leak_gain(stats: &EstStatistics, n: usize, k: usize) -> f64 {
    let g = stats.gh(n, k);
    stats.sigma_hat.get(n, n, k) * g * g * stats.m_bar_prime[n] / stats.antennas as f64
}

/// Large-system downlink SINR for scalings `delta_bar`.
pub fn asymptotic_dl_sinr_est(
    pathloss: &PathlossMap,
    stats: &EstStatistics,
    delta_bar: &[f64],
    noise: f64,
) -> Vec<f64> {
    let (n, k) = (pathloss.n_cells(), pathloss.users_per_cell());
    let mut out = Vec::with_capacity(n * k);
    for i in 0..n {
        for j in 0..k {
            let sg = stats.signal_gain(i, j);
            let signal = delta_bar[i * k + j] * sg * sg;
            let mut interference = noise;
            for c in 0..n {
                if c != i {
                    interference += delta_bar[c * k + j] * copilot_gain(pathloss, stats, c, i, j);
                }
                let b = b_coefficient(pathloss, stats, c, i, j);
                for u in (0..k).filter(|&u| u != j) {
                    interference += delta_bar[c * k + u] * leak_gain(stats, c, u) * b;
                }
            }
            out.push(signal / interference);
        }
    }
    out
}

/// Residual interference coefficient at BS `i`, for user `(i, j)`'s filter, of user `(n, k)`.
fn b_prime(pathloss: &PathlossMap, stats: &EstStatistics, i: usize, n: usize, k: usize) -> f64 {
    let s = pathloss.get(i, n, k);
    let sp = stats.sigma_prime.get(i, i, k);
    let gm = stats.gh(i, k) * stats.m_bar[i];
    let xi = stats.xi_at(i, k);
    let a = xi * s * sp * gm;
    s + stats.sigma_hat.get(i, i, k) * a * a - 2.0 * xi * (s * sp) * (s * sp) * gm
}

/// Interference-plus-noise seen by user `(i, j)`'s estimate-based uplink
/// filter, normalized like the signal gain squared.
fn uplink_interference(pathloss: &PathlossMap, stats: &EstStatistics, mu: &[f64], i: usize, j: usize) -> f64 {
    let (n, k) = (pathloss.n_cells(), pathloss.users_per_cell());
    let g = stats.gh(i, j);
    let leak = stats.sigma_hat.get(i, i, j) * g * g * stats.m_bar_prime[i];
    let nt = stats.antennas as f64;
    let mut total = leak;
    for c in 0..n {
        if c != i {
            let x = pathloss.get(i, c, j) * stats.sigma_prime.get(i, i, j) * g * stats.m_bar[i];
            total += mu[c * k + j] * x * x;
        }
        for u in 0..k {
            // The own user is kept in the residual sum; it makes the
            // perfect-CSI single-cell case coincide with `mu sigma m̄ = gamma`.
            if u != j || c == i {
                total += mu[c * k + u] / nt * leak * b_prime(pathloss, stats, i, c, u);
            }
        }
    }
    total
}

/// Large-system uplink SINR of the estimate-based filters.
pub fn asymptotic_ul_sinr_est(pathloss: &PathlossMap, stats: &EstStatistics, mu: &[f64]) -> Vec<f64> {
    let (n, k) = (pathloss.n_cells(), pathloss.users_per_cell());
    (0..n * k)
        .map(|u| {
            let (i, j) = (u / k, u % k);
            let sg = stats.signal_gain(i, j);
            mu[u] * sg * sg / uplink_interference(pathloss, stats, mu, i, j)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrobfUplink {
    pub mu: Vec<f64>,
    pub stats: EstStatistics,
    pub iterations: usize,
}

const MAX_UPLINK_ITERATIONS: usize = 100_000;

/// Uplink powers meeting the targets under contamination, by the iteration
/// `mu(i,j) <- gamma(i,j) I(i,j)(mu) / (sigma_hat Ĝ m̄)^2`. Switches to
/// half-step damping once the update size stops shrinking.
pub fn mrobf_uplink_powers(
    pathloss: &PathlossMap,
    targets: &SinrTargets,
    train_power: f64,
    noise: f64,
    antennas: usize,
) -> Result<MrobfUplink, PilotError> {
    let (n, k) = (pathloss.n_cells(), pathloss.users_per_cell());
    if targets.n_cells() != n || targets.users_per_cell() != k {
        return Err(PilotError::Dimension("targets and pathloss disagree".into()));
    }
    let (sigma_prime, sigma_hat) = geometry::estimation_gains(pathloss, train_power, noise)?;
    let mut mu: Vec<f64> = (0..n * k)
        .map(|u| targets.as_slice()[u] / pathloss.get(u / k, u / k, u % k))
        .collect();
    let cap = mu.iter().cloned().fold(0.0, f64::max) * 1e8;
    let mut damping = 1.0;
    let mut previous_change = f64::INFINITY;
    let mut growing = 0usize;
    for it in 1..=MAX_UPLINK_ITERATIONS {
        let stats = stats_from_gains(pathloss, sigma_prime.clone(), sigma_hat.clone(), &mu, antennas)?;
        if stats.m_bar.iter().any(|&m| m < 1e-9) {
            return Err(PilotError::Infeasible { iterations: it });
        }
        let mut change = 0.0f64;
        let next: Vec<f64> = (0..n * k)
            .map(|u| {
                let (i, j) = (u / k, u % k);
                let sg = stats.signal_gain(i, j);
                let target = targets.as_slice()[u] * uplink_interference(pathloss, &stats, &mu, i, j) / (sg * sg);
                let v = mu[u] + damping * (target - mu[u]);
                change = change.max((v - mu[u]).abs() / v);
                v
            })
            .collect();
        if next.iter().any(|&v| !(v > 0.0 && v <= cap)) {
            return Err(PilotError::Infeasible { iterations: it });
        }
        mu = next;
        if change <= 1e-12 {
            let stats = stats_from_gains(pathloss, sigma_prime, sigma_hat, &mu, antennas)?;
            return Ok(MrobfUplink {
                mu,
                stats,
                iterations: it,
            });
        }
        if change >= previous_change {
            growing += 1;
            if growing >= 3 {
                damping = 0.5;
            }
        } else {
            growing = 0;
        }
        previous_change = change;
    }
    Err(PilotError::NonConvergence {
        iterations: MAX_UPLINK_ITERATIONS,
    })
}

/// Downlink scalings that meet the targets in the large-system SINR. Row
/// `(i,j)` of the system reads `δ̄(i,j) (sigma_hat Ĝ m̄)^2 / gamma(i,j) -
/// interference(i,j) = N0`.
pub fn mrobf_scaling(
    pathloss: &PathlossMap,
    targets: &SinrTargets,
    stats: &EstStatistics,
    noise: f64,
) -> Result<Vec<f64>, PilotError> {
    let (n, k) = (pathloss.n_cells(), pathloss.users_per_cell());
    if targets.n_cells() != n || targets.users_per_cell() != k {
        return Err(PilotError::Dimension("targets and pathloss disagree".into()));
    }
    let total = n * k;
    let mut f = DMatrix::zeros(total, total);
    for i in 0..n {
        for j in 0..k {
            let row = i * k + j;
            let sg = stats.signal_gain(i, j);
            f[(row, row)] = sg * sg / targets.get(i, j);
            for c in 0..n {
                if c != i {
                    f[(row, c * k + j)] = -copilot_gain(pathloss, stats, c, i, j);
                }
                let b = b_coefficient(pathloss, stats, c, i, j);
                for u in (0..k).filter(|&u| u != j) {
                    f[(row, c * k + u)] = -leak_gain(stats, c, u) * b;
                }
            }
        }
    }
    let x = linalg::solve_real(f, &DVector::from_element(total, noise)).ok_or(PilotError::Singular)?;
    if x.iter().any(|&v| v <= 0.0) {
        return Err(PilotError::NegativeSolution);
    }
    Ok(x.iter().cloned().collect())
}

/// Powers and scalings of the contamination-aware scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct MrobfSolution {
    pub mu: Vec<f64>,
    pub stats: EstStatistics,
    pub delta_bar: Vec<f64>,
}

pub fn mrobf(
    pathloss: &PathlossMap,
    targets: &SinrTargets,
    train_power: f64,
    antennas: usize,
    noise: f64,
) -> Result<MrobfSolution, PilotError> {
    let up = mrobf_uplink_powers(pathloss, targets, train_power, noise, antennas)?;
    let delta_bar = mrobf_scaling(pathloss, targets, &up.stats, noise)?;
    Ok(MrobfSolution {
        mu: up.mu,
        stats: up.stats,
        delta_bar,
    })
}

/// Perfect-CSI uplink powers with the downlink scalings recomputed for the
/// contaminated estimates.
pub fn robf_dl_adaptation(
    pathloss: &PathlossMap,
    targets: &SinrTargets,
    train_power: f64,
    antennas: usize,
    noise: f64,
) -> Result<(UplinkSolution, MrobfSolution), PilotError> {
    let uplink = robf::uplink_powers(pathloss, targets, antennas)?;
    let stats = est_statistics(pathloss, &uplink.mu, train_power, noise, antennas)?;
    let delta_bar = mrobf_scaling(pathloss, targets, &stats, noise)?;
    let sol = MrobfSolution {
        mu: uplink.mu.clone(),
        stats,
        delta_bar,
    };
    Ok((uplink, sol))
}

/// Beamformers `sqrt(δ̄/Nt) (1/sqrt(Nt)) Ψ_i^-1 ĥ(i,i,j)` built from estimates.
pub fn estimate_beamformers(
    estimates: &EstimateSet,
    stats: &EstStatistics,
    delta_bar: &[f64],
) -> Result<DownlinkSolution, PilotError> {
    let ch = &estimates.estimates;
    let (n, k) = (ch.n_cells(), ch.users_per_cell());
    if stats.xi.len() != n * k || delta_bar.len() != n * k || stats.antennas != ch.antennas() {
        return Err(PilotError::Dimension("estimates and statistics disagree".into()));
    }
    let nt = ch.antennas() as f64;
    let mut beams = Vec::with_capacity(n);
    for i in 0..n {
        let own = ch.own(i);
        let w = &stats.xi[i * k..(i + 1) * k];
        let mut d = linalg::regularized_solve(&own, w, 1.0 / nt, 1.0, &own).ok_or(PilotError::NotPositiveDefinite)?;
        for j in 0..k {
            d.column_mut(j).scale_mut((delta_bar[i * k + j] / nt).sqrt() / nt.sqrt());
        }
        beams.push(d);
    }
    Ok(DownlinkSolution::from_beamformers(beams))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_cell() -> (PathlossMap, SinrTargets) {
        let pl = PathlossMap::new(1, 6, vec![1.0, 0.8, 0.6, 1.2, 0.5, 0.9]).unwrap();
        let t = SinrTargets::new(1, 6, vec![1.0, 2.0, 1.5, 0.5, 1.0, 2.5]).unwrap();
        (pl, t)
    }

    #[test]
    fn reduces_to_perfect_csi_uplink() {
        let (pl, t) = single_cell();
        let robf = robf::uplink_powers(&pl, &t, 12).unwrap();
        let m = mrobf_uplink_powers(&pl, &t, f64::INFINITY, 1.0, 12).unwrap();
        for (a, b) in robf.mu.iter().zip(&m.mu) {
            assert!((a / b - 1.0).abs() < 1e-9, "{a} vs {b}");
        }
        assert!((m.stats.m_bar[0] / robf.m_bar[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn reduces_to_perfect_csi_scaling() {
        let (pl, t) = single_cell();
        let st = robf::solve_statistics(&pl, &t, 12, 0.3).unwrap();
        let m = mrobf(&pl, &t, f64::INFINITY, 12, 0.3).unwrap();
        for (a, b) in st.scaling.delta_bar.iter().zip(&m.delta_bar) {
            assert!((a / b - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn b_reduces_to_g_bar_without_contamination() {
        let (pl, t) = single_cell();
        let up = robf::uplink_powers(&pl, &t, 12).unwrap();
        let stats = est_statistics(&pl, &up.mu, f64::INFINITY, 1.0, 12).unwrap();
        for j in 0..6 {
            let b = b_coefficient(&pl, &stats, 0, 0, j);
            assert!((b / up.g_bar(&pl, 0, 0, j) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_meets_targets() {
        let pl = PathlossMap::from_fn(2, 4, |i, n, k| if i == n { 1.0 + 0.1 * k as f64 } else { 0.1 }).unwrap();
        let t = SinrTargets::uniform(2, 4, 2.0).unwrap();
        let sol = mrobf(&pl, &t, 100.0, 16, 0.2).unwrap();
        for s in asymptotic_dl_sinr_est(&pl, &sol.stats, &sol.delta_bar, 0.2) {
            assert!((s / 2.0 - 1.0).abs() < 1e-10);
        }
        for s in asymptotic_ul_sinr_est(&pl, &sol.stats, &sol.mu) {
            assert!((s / 2.0 - 1.0).abs() < 1e-9);
        }
    }
}
