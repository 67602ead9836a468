//! Coordinated downlink beamforming for multi-cell systems with large antenna
//! arrays.
//!
//! The crate offers two families of power-minimizing beamformers that meet
//! per-user SINR targets:
//!
//! * [`cbf`]: the instantaneous-CSI coordinated beamformer, solved through
//!   uplink-downlink duality with a fixed-point power iteration.
//! * [`robf`]: a large-system approximation whose powers depend only on
//!   pathloss statistics, built on the deterministic equivalents of [`rmt`].
//!
//! Around them sit a zero-forcing baseline ([`zf`]), feasibility tests
//! ([`feasibility`]), per-BS power caps ([`power_constrained`]), a variant
//! for pilot-contaminated estimates ([`pilot`]) and evaluation helpers
//! ([`metrics`]).
//!
//! Indexing follows one convention throughout. A network has `N` cells with
//! `K` users each. User `(n, k)` is the `k`-th user of cell `n`, stored at
//! flat index `n * K + k`. A gain `sigma(i, n, k)` is the pathloss from user
//! `(n, k)` to BS `i`. Powers are linear milliwatts.

pub mod cbf;
pub mod feasibility;
pub mod geometry;
mod linalg;
pub mod metrics;
pub mod pilot;
pub mod power_constrained;
pub mod rmt;
pub mod robf;
pub mod units;
pub mod zf;

pub use geometry::{ChannelSet, EstimateSet, NetworkConfig, NetworkInstance, PathlossMap};
pub use num_complex::Complex64;

/// Per-user SINR targets, linear scale, indexed like users.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrTargets {
    n_cells: usize,
    users_per_cell: usize,
    gamma: Vec<f64>,
}

impl SinrTargets {
    /// Targets from a flat vector. Returns `None` on a size mismatch or a
    /// non-positive target.
    pub fn new(n_cells: usize, users_per_cell: usize, gamma: Vec<f64>) -> Option<Self> {
        if gamma.len() != n_cells * users_per_cell
            || gamma.iter().any(|g| !(g.is_finite() && *g > 0.0))
        {
            return None;
        }
        Some(Self {
            n_cells,
            users_per_cell,
            gamma,
        })
    }

    /// The same linear target for every user.
    pub fn uniform(n_cells: usize, users_per_cell: usize, gamma: f64) -> Option<Self> {
        Self::new(n_cells, users_per_cell, vec![gamma; n_cells * users_per_cell])
    }

    /// The same target for every user, in dB.
    pub fn uniform_db(n_cells: usize, users_per_cell: usize, gamma_db: f64) -> Option<Self> {
        Self::uniform(n_cells, users_per_cell, units::db_to_linear(gamma_db))
    }

    /// The same spectral-efficiency target (bits/s/Hz) for every user.
    pub fn uniform_rate(n_cells: usize, users_per_cell: usize, rate: f64) -> Option<Self> {
        Self::uniform(n_cells, users_per_cell, units::rate_to_sinr(rate))
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn users_per_cell(&self) -> usize {
        self.users_per_cell
    }

    pub fn get(&self, cell: usize, user: usize) -> f64 {
        self.gamma[cell * self.users_per_cell + user]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gamma
    }
}

/// Version of this library.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
