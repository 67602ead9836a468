//! Hexagonal cell layout, distance-based pathloss and Rayleigh channels.
//!
//! BSs sit on a hexagonal lattice with spacing `inter_bs_distance_m`. Every
//! user of cell `n` is dropped uniformly at random inside the hexagon of
//! circumradius `d_max_m` centred on BS `n`, at least `d_min_m` away from it.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::units;

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("training power must be positive, got {0}")]
    InvalidTrainingPower(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub n_cells: usize,
    pub users_per_cell: usize,
    pub antennas: usize,
    pub inter_bs_distance_m: f64,
    pub d_min_m: f64,
    /// Circumradius of the hexagon users are dropped in.
    pub d_max_m: f64,
    pub pathloss_exponent: f64,
    /// Linear gain at 1 m.
    pub reference_gain: f64,
    pub noise_power_mw: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_cells: 2,
            users_per_cell: 10,
            antennas: 60,
            inter_bs_distance_m: 500.0,
            d_min_m: 20.0,
            d_max_m: 500.0 / SQRT3,
            pathloss_exponent: 3.6,
            reference_gain: 10f64.powf(-3.53),
            noise_power_mw: units::dbm_to_mw(-104.0),
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: &str| Err(GeometryError::InvalidConfig(msg.to_string()));
        if self.n_cells == 0 || self.users_per_cell == 0 || self.antennas == 0 {
            return bad("cell, user and antenna counts must be positive");
        }
        let positive = [
            self.inter_bs_distance_m,
            self.d_min_m,
            self.d_max_m,
            self.pathloss_exponent,
            self.reference_gain,
            self.noise_power_mw,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("distances, exponent, reference gain and noise must be positive");
        }
        if self.d_min_m >= self.d_max_m * SQRT3 / 2.0 {
            return bad("d_min must be smaller than the hexagon apothem");
        }
        if self.n_cells > 1 && self.d_max_m > self.inter_bs_distance_m / SQRT3 * (1.0 + 1e-9) {
            return bad("hexagons overlap: d_max exceeds inter-BS distance / sqrt(3)");
        }
        Ok(())
    }

    pub fn total_users(&self) -> usize {
        self.n_cells * self.users_per_cell
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// BS coordinates: cell 0 at the origin, then hexagonal rings outward.
/// Cell 1 sits at `(d, 0)`.
pub fn bs_positions(n_cells: usize, d: f64) -> Vec<Point2> {
    let mut out = vec![Point2::new(0.0, 0.0)];
    let corner = |r: f64, m: usize| {
        let a = std::f64::consts::FRAC_PI_3 * m as f64;
        Point2::new(r * d * a.cos(), r * d * a.sin())
    };
    let mut ring = 1usize;
    while out.len() < n_cells {
        let r = ring as f64;
        for m in 0..6 {
            let (c0, c1) = (corner(r, m), corner(r, m + 1));
            for s in 0..ring {
                let t = s as f64 / r;
                out.push(Point2::new(c0.x + t * (c1.x - c0.x), c0.y + t * (c1.y - c0.y)));
            }
        }
        ring += 1;
    }
    out.truncate(n_cells);
    out
}

/// Whether `p` (relative to the hexagon centre) lies in the pointy-top
/// hexagon of circumradius `radius`.
pub fn in_hexagon(p: Point2, radius: f64) -> bool {
    let apothem = radius * SQRT3 / 2.0 * (1.0 + 1e-12);
    let s = SQRT3 / 2.0;
    p.x.abs() <= apothem
        && (0.5 * p.x + s * p.y).abs() <= apothem
        && (-0.5 * p.x + s * p.y).abs() <= apothem
}

/// Pathloss gains `sigma(i, n, k)` from user `(n, k)` to BS `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathlossMap {
    n_cells: usize,
    users_per_cell: usize,
    gains: Vec<f64>,
}

impl PathlossMap {
    pub fn new(n_cells: usize, users_per_cell: usize, gains: Vec<f64>) -> Result<Self, GeometryError> {
        if gains.len() != n_cells * n_cells * users_per_cell {
            return Err(GeometryError::Dimension(format!(
                "expected {} gains, got {}",
                n_cells * n_cells * users_per_cell,
                gains.len()
            )));
        }
        if gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(GeometryError::InvalidConfig("gains must be finite and non-negative".into()));
        }
        Ok(Self {
            n_cells,
            users_per_cell,
            gains,
        })
    }

    pub fn from_fn(
        n_cells: usize,
        users_per_cell: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self, GeometryError> {
        let mut gains = Vec::with_capacity(n_cells * n_cells * users_per_cell);
        for i in 0..n_cells {
            for n in 0..n_cells {
                for k in 0..users_per_cell {
                    gains.push(f(i, n, k));
                }
            }
        }
        Self::new(n_cells, users_per_cell, gains)
    }

    /// Symmetric two-cell model: unit gain to the own BS, `epsilon` to the
    /// other one.
    pub fn wyner(users_per_cell: usize, epsilon: f64) -> Result<Self, GeometryError> {
        Self::from_fn(2, users_per_cell, |i, n, _| if i == n { 1.0 } else { epsilon })
    }

    #[inline]
    pub fn get(&self, bs: usize, cell: usize, user: usize) -> f64 {
        self.gains[(bs * self.n_cells + cell) * self.users_per_cell + user]
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn users_per_cell(&self) -> usize {
        self.users_per_cell
    }

    pub fn total_users(&self) -> usize {
        self.n_cells * self.users_per_cell
    }

    /// Gains at BS `bs` from every user, flat user order.
    pub fn row(&self, bs: usize) -> &[f64] {
        let len = self.n_cells * self.users_per_cell;
        &self.gains[bs * len..(bs + 1) * len]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInstance {
    pub config: NetworkConfig,
    pub bs_positions: Vec<Point2>,
    /// User positions in flat user order.
    pub ut_positions: Vec<Point2>,
    pub pathloss: PathlossMap,
}

impl NetworkInstance {
    /// Builds an instance from explicit positions.
    pub fn from_positions(
        config: NetworkConfig,
        bs_positions: Vec<Point2>,
        ut_positions: Vec<Point2>,
    ) -> Result<Self, GeometryError> {
        if bs_positions.len() != config.n_cells || ut_positions.len() != config.total_users() {
            return Err(GeometryError::Dimension("position counts do not match config".into()));
        }
        let k = config.users_per_cell;
        let pathloss = PathlossMap::from_fn(config.n_cells, k, |i, n, u| {
            let d = bs_positions[i].distance(&ut_positions[n * k + u]);
            config.reference_gain * d.powf(-config.pathloss_exponent)
        })?;
        Ok(Self {
            config,
            bs_positions,
            ut_positions,
            pathloss,
        })
    }

    pub fn draw_channels(&self, seed: u64) -> ChannelSet {
        draw_channels(&self.pathloss, self.config.antennas, seed)
    }
}

/// Drops all users of a network. Deterministic for a given seed.
pub fn drop_network(config: &NetworkConfig, seed: u64) -> Result<NetworkInstance, GeometryError> {
    config.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let bs = bs_positions(config.n_cells, config.inter_bs_distance_m);
    let r = config.d_max_m;
    let apothem = r * SQRT3 / 2.0;
    let mut uts = Vec::with_capacity(config.total_users());
    for centre in &bs {
        for _ in 0..config.users_per_cell {
            loop {
                let p = Point2::new(rng.random_range(-apothem..apothem), rng.random_range(-r..r));
                if in_hexagon(p, r) && p.x.hypot(p.y) >= config.d_min_m {
                    uts.push(Point2::new(centre.x + p.x, centre.y + p.y));
                    break;
                }
            }
        }
    }
    NetworkInstance::from_positions(config.clone(), bs, uts)
}

/// Channels seen by every BS. `matrix(i)` is `Nt x (N K)`; column `n*K + k`
/// holds `h(i, n, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    n_cells: usize,
    users_per_cell: usize,
    antennas: usize,
    per_bs: Vec<DMatrix<Complex64>>,
}

impl ChannelSet {
    pub fn new(
        n_cells: usize,
        users_per_cell: usize,
        per_bs: Vec<DMatrix<Complex64>>,
    ) -> Result<Self, GeometryError> {
        let antennas = per_bs.first().map_or(0, |m| m.nrows());
        if per_bs.len() != n_cells
            || per_bs
                .iter()
                .any(|m| m.nrows() != antennas || m.ncols() != n_cells * users_per_cell)
        {
            return Err(GeometryError::Dimension("channel matrices have inconsistent shapes".into()));
        }
        Ok(Self {
            n_cells,
            users_per_cell,
            antennas,
            per_bs,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn users_per_cell(&self) -> usize {
        self.users_per_cell
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn matrix(&self, bs: usize) -> &DMatrix<Complex64> {
        &self.per_bs[bs]
    }

    /// Channel from user `(cell, user)` to BS `bs`.
    pub fn h(&self, bs: usize, cell: usize, user: usize) -> nalgebra::DVectorView<'_, Complex64> {
        self.per_bs[bs].column(cell * self.users_per_cell + user)
    }

    /// Channels from BS `bs` to its own users, `Nt x K`.
    pub fn own(&self, bs: usize) -> DMatrix<Complex64> {
        self.per_bs[bs]
            .columns(bs * self.users_per_cell, self.users_per_cell)
            .into_owned()
    }
}

pub(crate) fn complex_normal<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Independent Rayleigh draws `h(i, n, k) ~ CN(0, sigma(i, n, k) I)`.
pub fn draw_channels(pathloss: &PathlossMap, antennas: usize, seed: u64) -> ChannelSet {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let (n, k) = (pathloss.n_cells(), pathloss.users_per_cell());
    let per_bs = (0..n)
        .map(|i| {
            let row = pathloss.row(i);
            DMatrix::from_fn(antennas, n * k, |_, c| complex_normal(&mut rng) * row[c].sqrt())
        })
        .collect();
    ChannelSet {
        n_cells: n,
        users_per_cell: k,
        antennas,
        per_bs,
    }
}

/// Channel estimates after uplink training with reused pilots, together
/// with the statistics of the estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSet {
    pub estimates: ChannelSet,
    /// `sigma'(i, n, k) = sigma(i, n, k) / (sum_b sigma(i, b, k) + N0/P_tr)`.
    pub sigma_prime: PathlossMap,
    /// Per-entry variance of the estimate, `sigma' * sigma`.
    pub sigma_hat: PathlossMap,
    pub train_power: f64,
}

/// `(sigma', sigma_hat)` for a training power in mW and noise power `N0` in mW.
/// `f64::INFINITY` means noiseless training.
pub fn estimation_gains(
    pathloss: &PathlossMap,
    train_power: f64,
    noise: f64,
) -> Result<(PathlossMap, PathlossMap), GeometryError> {
    if !(train_power > 0.0) {
        return Err(GeometryError::InvalidTrainingPower(train_power));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(GeometryError::InvalidConfig(format!("noise power {noise} must be finite and non-negative")));
    }
    let (n, k) = (pathloss.n_cells(), pathloss.users_per_cell());
    let inv_p = noise / train_power;
    let prime = PathlossMap::from_fn(n, k, |i, c, u| {
        let total: f64 = (0..n).map(|b| pathloss.get(i, b, u)).sum();
        pathloss.get(i, c, u) / (total + inv_p)
    })?;
    let hat = PathlossMap::from_fn(n, k, |i, c, u| prime.get(i, c, u) * pathloss.get(i, c, u))?;
    Ok((prime, hat))
}

/// MMSE estimates when user `k` of every cell shares pilot `k`.
///
/// BS `i` observes `y(i, k) = sum_b h(i, b, k) + n / sqrt(P_tr)` with
/// `n ~ CN(0, N0 I)` and estimates `h(i, n, k)` as `sigma'(i, n, k) y(i, k)`.
pub fn estimate_channels(
    channels: &ChannelSet,
    pathloss: &PathlossMap,
    train_power: f64,
    noise: f64,
    seed: u64,
) -> Result<EstimateSet, GeometryError> {
    if pathloss.n_cells() != channels.n_cells || pathloss.users_per_cell() != channels.users_per_cell {
        return Err(GeometryError::Dimension("pathloss and channels disagree".into()));
    }
    let (sigma_prime, sigma_hat) = estimation_gains(pathloss, train_power, noise)?;
    let (n, k, nt) = (channels.n_cells, channels.users_per_cell, channels.antennas);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let noise_scale = if train_power.is_finite() { (noise / train_power).sqrt() } else { 0.0 };
    let mut per_bs = Vec::with_capacity(n);
    for i in 0..n {
        let h = &channels.per_bs[i];
        let mut est = DMatrix::zeros(nt, n * k);
        for u in 0..k {
            let mut y = nalgebra::DVector::from_fn(nt, |_, _| complex_normal(&mut rng) * noise_scale);
            for b in 0..n {
                y += h.column(b * k + u);
            }
            for c in 0..n {
                est.set_column(c * k + u, &(&y * Complex64::from(sigma_prime.get(i, c, u))));
            }
        }
        per_bs.push(est);
    }
    Ok(EstimateSet {
        estimates: ChannelSet {
            n_cells: n,
            users_per_cell: k,
            antennas: nt,
            per_bs,
        },
        sigma_prime,
        sigma_hat,
        train_power,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_user_pathloss_matches_formula() {
        let cfg = NetworkConfig {
            n_cells: 1,
            users_per_cell: 1,
            ..NetworkConfig::default()
        };
        let inst = NetworkInstance::from_positions(cfg.clone(), vec![Point2::new(0.0, 0.0)], vec![Point2::new(100.0, 0.0)])
            .unwrap();
        let expected = 10f64.powf(-3.53) * 100f64.powf(-3.6);
        assert!((inst.pathloss.get(0, 0, 0) / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lattice_has_expected_spacing() {
        let p = bs_positions(7, 500.0);
        assert_eq!(p[1], Point2::new(500.0, 0.0));
        for q in &p[1..] {
            assert!((q.distance(&p[0]) - 500.0).abs() < 1e-9);
        }
        let p19 = bs_positions(19, 1.0);
        for a in 0..19 {
            for b in 0..a {
                assert!(p19[a].distance(&p19[b]) > 1.0 - 1e-9);
            }
        }
    }

    #[test]
    fn users_stay_in_their_hexagon() {
        let cfg = NetworkConfig {
            n_cells: 3,
            users_per_cell: 40,
            ..NetworkConfig::default()
        };
        let inst = drop_network(&cfg, 7).unwrap();
        for n in 0..3 {
            let c = inst.bs_positions[n];
            for k in 0..40 {
                let u = inst.ut_positions[n * 40 + k];
                let rel = Point2::new(u.x - c.x, u.y - c.y);
                assert!(in_hexagon(rel, cfg.d_max_m));
                let d = u.distance(&c);
                assert!(d >= cfg.d_min_m && d <= cfg.d_max_m + 1e-9);
            }
        }
    }

    #[test]
    fn drops_are_reproducible() {
        let cfg = NetworkConfig::default();
        assert_eq!(drop_network(&cfg, 11).unwrap(), drop_network(&cfg, 11).unwrap());
        assert_ne!(drop_network(&cfg, 11).unwrap(), drop_network(&cfg, 12).unwrap());
    }

    #[test]
    fn overlapping_hexagons_rejected() {
        let cfg = NetworkConfig {
            d_max_m: 500.0,
            ..NetworkConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(GeometryError::InvalidConfig(_))));
    }

    #[test]
    fn noiseless_single_cell_estimate_is_exact() {
        let pl = PathlossMap::new(1, 3, vec![1.0, 0.5, 2.0]).unwrap();
        let ch = draw_channels(&pl, 8, 3);
        let est = estimate_channels(&ch, &pl, f64::INFINITY, 1.0, 4).unwrap();
        let diff = (est.estimates.matrix(0) - ch.matrix(0)).norm();
        assert!(diff < 1e-12);
        assert!(estimation_gains(&pl, 0.0, 1.0).is_err());
    }

    #[test]
    fn copilot_estimates_are_collinear() {
        let pl = PathlossMap::from_fn(2, 2, |i, n, k| 1.0 + i as f64 + 0.3 * n as f64 + 0.1 * k as f64).unwrap();
        let ch = draw_channels(&pl, 6, 9);
        let est = estimate_channels(&ch, &pl, 10.0, 1.0, 10).unwrap();
        for i in 0..2 {
            for k in 0..2 {
                let own = est.estimates.h(i, i, k).into_owned();
                let other = est.estimates.h(i, 1 - i, k).into_owned();
                let ratio = pl.get(i, 1 - i, k) / pl.get(i, i, k);
                assert!((other - own * Complex64::from(ratio)).norm() < 1e-12);
            }
        }
    }
}
