//! SINR evaluation on actual channels, power bookkeeping and signaling load.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::ChannelSet;
use crate::linalg;
use crate::robf::DownlinkSolution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Per-user SINR with its decomposition, flat user order.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrReport {
    pub sinr: Vec<f64>,
    pub signal: Vec<f64>,
    pub intra_cell: Vec<f64>,
    pub inter_cell: Vec<f64>,
    pub noise: f64,
}

impl SinrReport {
    pub fn min(&self) -> f64 {
        self.sinr.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

fn check_beams(channels: &ChannelSet, beams: &[DMatrix<Complex64>]) -> Result<(), MetricsError> {
    let ok = beams.len() == channels.n_cells()
        && beams
            .iter()
            .all(|w| w.nrows() == channels.antennas() && w.ncols() == channels.users_per_cell());
    if ok {
        Ok(())
    } else {
        Err(MetricsError::Dimension("beamformers do not match channels".into()))
    }
}

/// Downlink SINR of every user for beamformers `beams` (one `Nt x K` matrix per BS).
pub fn downlink_sinr(channels: &ChannelSet, beams: &[DMatrix<Complex64>], noise: f64) -> Result<SinrReport, MetricsError> {
    check_beams(channels, beams)?;
    let (n, k) = (channels.n_cells(), channels.users_per_cell());
    let total = n * k;
    let mut signal = vec![0.0; total];
    let mut intra = vec![0.0; total];
    let mut inter = vec![0.0; total];
    for c in 0..n {
        // gains[(u, col)] = w(c,u)^H h(c, col)
        let gains = beams[c].adjoint() * channels.matrix(c);
        for col in 0..total {
            let target_cell = col / k;
            for u in 0..k {
                let p = gains[(u, col)].norm_sqr();
                if c == target_cell {
                    if u == col % k {
                        signal[col] += p;
                    } else {
                        intra[col] += p;
                    }
                } else {
                    inter[col] += p;
                }
            }
        }
    }
    let sinr = (0..total).map(|u| signal[u] / (intra[u] + inter[u] + noise)).collect();
    Ok(SinrReport {
        sinr,
        signal,
        intra_cell: intra,
        inter_cell: inter,
        noise,
    })
}

/// Uplink SINR in both of its forms.
#[derive(Debug, Clone, PartialEq)]
pub struct UplinkSinr {
    /// Filter ratio `(p/Nt)|w^H h|^2 / (sum_{other} (p/Nt)|w^H h|^2 + |w|^2)`.
    pub ratio_form: Vec<f64>,
    /// Quadratic form `(p/Nt) h^H (Σ' + I)^-1 h` with the own term removed from `Σ'`.
    pub quadratic_form: Vec<f64>,
}

/// Uplink SINR for filters `filters` (one `Nt x K` matrix per BS), powers
/// `powers` (flat) and unit noise.
pub fn uplink_sinr(
    channels: &ChannelSet,
    filters: &[DMatrix<Complex64>],
    powers: &[f64],
) -> Result<UplinkSinr, MetricsError> {
    check_beams(channels, filters)?;
    let (n, k) = (channels.n_cells(), channels.users_per_cell());
    let total = n * k;
    if powers.len() != total {
        return Err(MetricsError::Dimension("one power per user expected".into()));
    }
    let nt = channels.antennas() as f64;
    let mut ratio = Vec::with_capacity(total);
    let mut quad = Vec::with_capacity(total);
    for i in 0..n {
        let h = channels.matrix(i);
        let gains = filters[i].adjoint() * h;
        for j in 0..k {
            let own = i * k + j;
            let mut interference = filters[i].column(j).norm_squared();
            for col in (0..total).filter(|&c| c != own) {
                interference += powers[col] / nt * gains[(j, col)].norm_sqr();
            }
            ratio.push(powers[own] / nt * gains[(j, own)].norm_sqr() / interference);

            let mut w = powers.to_vec();
            w[own] = 0.0;
            let hj = h.column(own).into_owned();
            let x = linalg::regularized_solve(h, &w, 1.0 / nt, 1.0, &DMatrix::from_column_slice(h.nrows(), 1, hj.as_slice()))
                .ok_or(MetricsError::NotPositiveDefinite)?;
            quad.push(powers[own] / nt * hj.dotc(&x.column(0)).re);
        }
    }
    Ok(UplinkSinr {
        ratio_form: ratio,
        quadratic_form: quad,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSummary {
    pub downlink_total: f64,
    pub per_bs: Vec<f64>,
    /// `sum mu N0 / Nt`.
    pub uplink_total: f64,
    /// `|downlink - uplink| / uplink`.
    pub relative_gap: f64,
}

pub fn power_summary(downlink: &DownlinkSolution, mu: &[f64], noise: f64, antennas: usize) -> PowerSummary {
    let uplink_total = mu.iter().sum::<f64>() * noise / antennas as f64;
    let downlink_total = downlink.total_power();
    PowerSummary {
        downlink_total,
        per_bs: downlink.per_bs_power.clone(),
        uplink_total,
        relative_gap: (downlink_total - uplink_total).abs() / uplink_total,
    }
}

/// Scalars exchanged per second between BSs.
#[derive(Debug, Clone, PartialEq)]
pub struct Overhead {
    /// Instantaneous-CSI scheme: `2 N Nt K / tau_coh`.
    pub cbf: f64,
    /// Statistics-based scheme: `N K / tau_lt`, or `N Nt K / tau_lt` with correlated antennas.
    pub robf: f64,
    pub ratio: f64,
}

pub fn overhead(
    n_cells: usize,
    antennas: usize,
    users_per_cell: usize,
    tau_coherence: f64,
    tau_long_term: f64,
    correlated: bool,
) -> Result<Overhead, MetricsError> {
    if !(tau_coherence > 0.0 && tau_long_term > 0.0) {
        return Err(MetricsError::InvalidArgument("time scales must be positive".into()));
    }
    let (n, nt, k) = (n_cells as f64, antennas as f64, users_per_cell as f64);
    let cbf = 2.0 * n * nt * k / tau_coherence;
    let robf = if correlated { n * nt * k } else { n * k } / tau_long_term;
    Ok(Overhead {
        cbf,
        robf,
        ratio: cbf / robf,
    })
}

/// Mean and standard deviation of a sample (population form).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Median of a sample; `NaN` when empty.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
