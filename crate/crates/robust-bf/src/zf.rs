//! Zero-forcing baseline: every BS nulls its beams towards all users of all
//! cells, so each user sees only its own signal and noise.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::ChannelSet;
use crate::robf::DownlinkSolution;
use crate::SinrTargets;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZfError {
    #[error("{antennas} antennas cannot null {users} users")]
    InsufficientDoF { antennas: usize, users: usize },
    #[error("channel Gram matrix is singular")]
    Singular,
    #[error("effective channel of user {0} vanishes")]
    DegenerateChannel(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Unit-norm zero-forcing directions, one `Nt x K` matrix per BS.
pub fn zf_beamformers(channels: &ChannelSet) -> Result<Vec<DMatrix<Complex64>>, ZfError> {
    let nt = channels.antennas();
    let users = channels.n_cells() * channels.users_per_cell();
    if nt < users {
        return Err(ZfError::InsufficientDoF { antennas: nt, users });
    }
    let k = channels.users_per_cell();
    (0..channels.n_cells())
        .map(|i| {
            let h = channels.matrix(i);
            let gram = h.adjoint() * h;
            let chol = gram.cholesky().ok_or(ZfError::Singular)?;
            // Columns of H (H^H H)^-1 for the own users only.
            let mut sel = DMatrix::zeros(users, k);
            for j in 0..k {
                sel[(i * k + j, j)] = Complex64::from(1.0);
            }
            let mut w = h * chol.solve(&sel);
            for j in 0..k {
                let norm = w.column(j).norm();
                if !(norm.is_finite() && norm > 0.0) {
                    return Err(ZfError::Singular);
                }
                w.column_mut(j).unscale_mut(norm);
            }
            Ok(w)
        })
        .collect()
}

/// Per-user powers `gamma N0 / |h(i,i,j)^H w(i,j)|^2`, flat user order.
pub fn zf_powers(
    channels: &ChannelSet,
    beams: &[DMatrix<Complex64>],
    targets: &SinrTargets,
    noise: f64,
) -> Result<Vec<f64>, ZfError> {
    if targets.n_cells() != channels.n_cells() || targets.users_per_cell() != channels.users_per_cell() {
        return Err(ZfError::Dimension("targets and channels disagree".into()));
    }
    let k = channels.users_per_cell();
    let mut out = Vec::with_capacity(targets.as_slice().len());
    for i in 0..channels.n_cells() {
        for j in 0..k {
            let h = channels.h(i, i, j);
            let g = h.dotc(&beams[i].column(j)).norm();
            if g < 1e-12 * h.norm() {
                return Err(ZfError::DegenerateChannel(i * k + j));
            }
            out.push(targets.get(i, j) * noise / (g * g));
        }
    }
    Ok(out)
}

/// Scaled zero-forcing beamformers meeting the targets.
pub fn solve(channels: &ChannelSet, targets: &SinrTargets, noise: f64) -> Result<DownlinkSolution, ZfError> {
    let mut beams = zf_beamformers(channels)?;
    let p = zf_powers(channels, &beams, targets, noise)?;
    let k = channels.users_per_cell();
    for (i, w) in beams.iter_mut().enumerate() {
        for j in 0..k {
            w.column_mut(j).scale_mut(p[i * k + j].sqrt());
        }
    }
    Ok(DownlinkSolution::from_beamformers(beams))
}
