//! Statistics-based beamforming under per-BS power caps.
//!
//! Each capped BS carries a multiplier `alpha_i` that enters as extra
//! regularization `1 + alpha_i` in its filters and deterministic
//! equivalents. The multipliers follow a projected subgradient step on the
//! normalized cap violation `(P_i - P_max_i) / P_max_i`.

use thiserror::Error;

use crate::geometry::{ChannelSet, PathlossMap};
use crate::robf::{self, DownlinkSolution, RobfError, ScalingSolution, UplinkOptions, UplinkSolution};
use crate::SinrTargets;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstrainedError {
    #[error("caps not met after {iterations} iterations")]
    MaxIterations { iterations: usize, trace: Vec<ConstrainedStep> },
    #[error("invalid constraint configuration: {0}")]
    InvalidConfig(String),
    #[error("inner solve failed: {0}")]
    InnerInfeasible(#[from] RobfError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintConfig {
    /// Cap per BS in mW; `f64::INFINITY` leaves a BS unconstrained.
    pub p_max: Vec<f64>,
    pub step: f64,
    /// Allowed relative deviation from an active cap.
    pub tolerance: f64,
    pub max_outer: usize,
}

impl ConstraintConfig {
    pub fn new(p_max: Vec<f64>) -> Self {
        Self {
            p_max,
            step: 0.5,
            tolerance: 0.01,
            max_outer: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedStep {
    pub iteration: usize,
    pub alpha: Vec<f64>,
    pub per_bs_power: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedSolution {
    pub uplink: UplinkSolution,
    pub scaling: ScalingSolution,
    pub downlink: DownlinkSolution,
    pub alpha: Vec<f64>,
    pub iterations: usize,
    pub trace: Vec<ConstrainedStep>,
}

fn caps_met(alpha: &[f64], power: &[f64], cfg: &ConstraintConfig) -> bool {
    alpha.iter().zip(power).zip(&cfg.p_max).all(|((&a, &p), &cap)| {
        if a == 0.0 {
            p <= cap * (1.0 + cfg.tolerance)
        } else {
            (p - cap).abs() <= cfg.tolerance * cap
        }
    })
}

/// Runs the multiplier iteration on one channel realization.
pub fn solve(
    pathloss: &PathlossMap,
    channels: &ChannelSet,
    targets: &SinrTargets,
    noise: f64,
    cfg: &ConstraintConfig,
) -> Result<ConstrainedSolution, ConstrainedError> {
    let n = pathloss.n_cells();
    if cfg.p_max.len() != n || cfg.p_max.iter().any(|p| !(*p > 0.0)) {
        return Err(ConstrainedError::InvalidConfig("one positive cap per BS expected".into()));
    }
    if !(cfg.step > 0.0 && cfg.tolerance > 0.0) || cfg.max_outer == 0 {
        return Err(ConstrainedError::InvalidConfig("step, tolerance and iteration budget must be positive".into()));
    }
    let mut opts = UplinkOptions::new(n);
    let mut trace = Vec::new();
    for it in 0..cfg.max_outer {
        let uplink = robf::uplink_powers_with(pathloss, targets, channels.antennas(), &opts)?;
        let scaling = robf::scaling_factors(pathloss, targets, &uplink, noise)?;
        let downlink = robf::beamformers(channels, &uplink, &scaling)?;
        trace.push(ConstrainedStep {
            iteration: it,
            alpha: opts.alpha.clone(),
            per_bs_power: downlink.per_bs_power.clone(),
        });
        if caps_met(&opts.alpha, &downlink.per_bs_power, cfg) {
            return Ok(ConstrainedSolution {
                alpha: opts.alpha.clone(),
                uplink,
                scaling,
                downlink,
                iterations: it,
                trace,
            });
        }
        for i in 0..n {
            let violation = if cfg.p_max[i].is_finite() {
                (downlink.per_bs_power[i] - cfg.p_max[i]) / cfg.p_max[i]
            } else {
                -1.0
            };
            opts.alpha[i] = (opts.alpha[i] + cfg.step * violation).max(0.0);
        }
        opts.initial = Some(uplink.mu);
    }
    Err(ConstrainedError::MaxIterations {
        iterations: cfg.max_outer,
        trace,
    })
}
