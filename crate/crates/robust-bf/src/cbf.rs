//! Coordinated beamforming from instantaneous CSI.
//!
//! The virtual uplink powers `lambda` solve a standard-function fixed point.
//! The MMSE receive filters give the beam directions, and a linear system
//! on the actual channels gives the downlink scalings.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::ChannelSet;
use crate::linalg;
use crate::robf::DownlinkSolution;
use crate::SinrTargets;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CbfError {
    #[error("targets infeasible: uplink powers diverge after {iterations} iterations")]
    Infeasible { iterations: usize },
    #[error("uplink iteration did not converge in {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("downlink scaling system is singular")]
    Singular,
    #[error("downlink scaling system has a non-positive solution")]
    NegativeSolution,
    #[error("covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbfOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Warm start for `lambda`; the fixed point does not depend on it.
    pub initial: Option<Vec<f64>>,
}

impl Default for CbfOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 20_000,
            initial: None,
        }
    }
}

fn check_dims(channels: &ChannelSet, targets: &SinrTargets) -> Result<(), CbfError> {
    if channels.n_cells() != targets.n_cells() || channels.users_per_cell() != targets.users_per_cell() {
        return Err(CbfError::Dimension("targets and channels disagree".into()));
    }
    Ok(())
}

/// `lambda(i,j) <- 1 / ((1/Nt)(1 + 1/gamma) h^H (Σ_i + I)^-1 h)`, with
/// `Σ_i = (1/Nt) sum lambda h(i,n,k) h(i,n,k)^H` and `h = h(i,i,j)`.
pub fn uplink_map(channels: &ChannelSet, targets: &SinrTargets, lambda: &[f64]) -> Result<Vec<f64>, CbfError> {
    check_dims(channels, targets)?;
    let nt = channels.antennas() as f64;
    let k = channels.users_per_cell();
    let mut out = vec![0.0; lambda.len()];
    for i in 0..channels.n_cells() {
        let own = channels.own(i);
        let x = linalg::regularized_solve(channels.matrix(i), lambda, 1.0 / nt, 1.0, &own)
            .ok_or(CbfError::NotPositiveDefinite)?;
        for j in 0..k {
            let q = own.column(j).dotc(&x.column(j)).re;
            let g = targets.get(i, j);
            out[i * k + j] = nt / ((1.0 + 1.0 / g) * q);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbfUplink {
    pub lambda: Vec<f64>,
    pub iterations: usize,
}

pub fn uplink_powers(channels: &ChannelSet, targets: &SinrTargets, opts: &CbfOptions) -> Result<CbfUplink, CbfError> {
    let total = channels.n_cells() * channels.users_per_cell();
    let first = uplink_map(channels, targets, &vec![0.0; total])?;
    let cap = first.iter().cloned().fold(0.0, f64::max) * 1e6;
    let mut lambda = match &opts.initial {
        Some(init) if init.len() == total => init.clone(),
        Some(_) => return Err(CbfError::Dimension("warm start has the wrong length".into())),
        None => first,
    };
    for it in 1..=opts.max_iterations {
        let next = uplink_map(channels, targets, &lambda)?;
        let change = next
            .iter()
            .zip(&lambda)
            .map(|(a, b)| (a - b).abs() / a)
            .fold(0.0, f64::max);
        lambda = next;
        if lambda.iter().any(|&v| !(v <= cap)) {
            return Err(CbfError::Infeasible { iterations: it });
        }
        if change <= opts.tolerance {
            return Ok(CbfUplink { lambda, iterations: it });
        }
    }
    Err(CbfError::NonConvergence {
        iterations: opts.max_iterations,
    })
}

/// MMSE receive filters `(1/sqrt(Nt)) (sum (lambda N0/Nt) h h^H + N0 I)^-1 h(i,i,j)`.
pub fn receive_filters(channels: &ChannelSet, lambda: &[f64], noise: f64) -> Result<Vec<DMatrix<Complex64>>, CbfError> {
    let nt = channels.antennas() as f64;
    let scale = Complex64::from(1.0 / (noise * nt.sqrt()));
    (0..channels.n_cells())
        .map(|i| {
            linalg::regularized_solve(channels.matrix(i), lambda, 1.0 / nt, 1.0, &channels.own(i))
                .map(|x| x * scale)
                .ok_or(CbfError::NotPositiveDefinite)
        })
        .collect()
}

/// Solves `F δ = N0 1` where `F` has diagonal `|ŵ^H h(i,i,j)|^2 / (gamma Nt)`
/// and off-diagonal `-(1/Nt) |ŵ(n,k)^H h(n,i,j)|^2`.
pub fn downlink_scaling(
    channels: &ChannelSet,
    filters: &[DMatrix<Complex64>],
    targets: &SinrTargets,
    noise: f64,
) -> Result<Vec<f64>, CbfError> {
    check_dims(channels, targets)?;
    let (n, k) = (channels.n_cells(), channels.users_per_cell());
    let nt = channels.antennas() as f64;
    let total = n * k;
    let mut f = DMatrix::zeros(total, total);
    for c in 0..n {
        // gains[(u, col)] = ŵ(c,u)^H h(c, col)
        let gains = filters[c].adjoint() * channels.matrix(c);
        for u in 0..k {
            let col = c * k + u;
            for row in 0..total {
                let g = gains[(u, row)].norm_sqr() / nt;
                f[(row, col)] = if row == col { g / targets.as_slice()[row] } else { -g };
            }
        }
    }
    let delta = linalg::solve_real(f, &DVector::from_element(total, noise)).ok_or(CbfError::Singular)?;
    if delta.iter().any(|&v| v <= 0.0) {
        return Err(CbfError::NegativeSolution);
    }
    Ok(delta.iter().cloned().collect())
}

/// Full instantaneous-CSI solution.
#[derive(Debug, Clone, PartialEq)]
pub struct CbfSolution {
    pub uplink: CbfUplink,
    pub delta: Vec<f64>,
    pub downlink: DownlinkSolution,
}

pub fn solve(channels: &ChannelSet, targets: &SinrTargets, noise: f64, opts: &CbfOptions) -> Result<CbfSolution, CbfError> {
    let uplink = uplink_powers(channels, targets, opts)?;
    let filters = receive_filters(channels, &uplink.lambda, noise)?;
    let delta = downlink_scaling(channels, &filters, targets, noise)?;
    let nt = channels.antennas() as f64;
    let k = channels.users_per_cell();
    let beams = filters
        .into_iter()
        .enumerate()
        .map(|(i, mut w)| {
            for j in 0..k {
                w.column_mut(j).scale_mut((delta[i * k + j] / nt).sqrt());
            }
            w
        })
        .collect();
    Ok(CbfSolution {
        uplink,
        delta,
        downlink: DownlinkSolution::from_beamformers(beams),
    })
}
