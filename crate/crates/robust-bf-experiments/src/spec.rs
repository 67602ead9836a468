//! Scenario descriptions, the preset catalog and config-file ingestion.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use robust_bf::geometry::NetworkConfig;
use robust_bf::units;
use serde::{Deserialize, Serialize};

use crate::ExperimentError;

/// Default number of channel realizations per sweep point.
pub const DEFAULT_TRIALS: usize = 500;
/// Trials per point in the desk-scale presets.
pub const DESK_TRIALS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    Fig1,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
    Fig9,
    Custom,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 9] = [
        ScenarioId::Fig1,
        ScenarioId::Fig3,
        ScenarioId::Fig4,
        ScenarioId::Fig5,
        ScenarioId::Fig6,
        ScenarioId::Fig7,
        ScenarioId::Fig8,
        ScenarioId::Fig9,
        ScenarioId::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::Fig1 => "fig1",
            ScenarioId::Fig3 => "fig3",
            ScenarioId::Fig4 => "fig4",
            ScenarioId::Fig5 => "fig5",
            ScenarioId::Fig6 => "fig6",
            ScenarioId::Fig7 => "fig7",
            ScenarioId::Fig8 => "fig8",
            ScenarioId::Fig9 => "fig9",
            ScenarioId::Custom => "custom",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| ExperimentError::InvalidSpec(format!("unknown scenario '{s}'")))
    }
}

/// Algorithms a scenario can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Statistics-based beamformer evaluated on channel draws.
    Robf,
    /// Large-system power of the statistics-based solution, no channels.
    RobfAsymptotic,
    Cbf,
    Zf,
    RobfConstrained,
    /// Contamination-aware variant on estimated channels.
    Mrobf,
    /// Perfect-CSI uplink powers with scalings recomputed for estimates.
    RobfDlAdaptation,
    /// Instantaneous-CSI scheme run on the channel estimates.
    CbfEstimated,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Robf => "robf",
            Algorithm::RobfAsymptotic => "robf_asymptotic",
            Algorithm::Cbf => "cbf",
            Algorithm::Zf => "zf",
            Algorithm::RobfConstrained => "robf_constrained",
            Algorithm::Mrobf => "mrobf",
            Algorithm::RobfDlAdaptation => "robf_dl_adaptation",
            Algorithm::CbfEstimated => "cbf_estimated",
        }
    }

    /// True when the algorithm produces one row per drop rather than per draw.
    pub fn statistics_only(self) -> bool {
        matches!(self, Algorithm::RobfAsymptotic)
    }

    pub fn needs_estimates(self) -> bool {
        matches!(self, Algorithm::Mrobf | Algorithm::RobfDlAdaptation | Algorithm::CbfEstimated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Antennas,
    UsersPerCell,
    TargetDb,
    TargetRate,
    InterBsDistanceM,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Hex,
    Wyner,
}

/// SINR target shared by all users.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSpec {
    SinrDb(f64),
    /// Spectral efficiency, `gamma = 2^rate - 1`.
    RateBpsHz(f64),
}

impl TargetSpec {
    pub fn linear(self) -> f64 {
        match self {
            TargetSpec::SinrDb(db) => units::db_to_linear(db),
            TargetSpec::RateBpsHz(r) => units::rate_to_sinr(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub n_cells: usize,
    pub users_per_cell: usize,
    pub antennas: usize,
    pub inter_bs_distance_m: f64,
    pub d_min_m: f64,
    pub d_max_m: f64,
    pub pathloss_exponent: f64,
    pub reference_gain_db: f64,
    pub noise_dbm: f64,
    pub layout: Layout,
    /// Cross-cell gain of the Wyner layout.
    pub wyner_epsilon: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        let c = NetworkConfig::default();
        Self {
            n_cells: c.n_cells,
            users_per_cell: c.users_per_cell,
            antennas: c.antennas,
            inter_bs_distance_m: c.inter_bs_distance_m,
            d_min_m: c.d_min_m,
            d_max_m: c.d_max_m,
            pathloss_exponent: c.pathloss_exponent,
            reference_gain_db: units::linear_to_db(c.reference_gain),
            noise_dbm: units::mw_to_dbm(c.noise_power_mw),
            layout: Layout::Hex,
            wyner_epsilon: 0.5,
        }
    }
}

impl NetworkSpec {
    pub fn to_config(&self) -> NetworkConfig {
        NetworkConfig {
            n_cells: self.n_cells,
            users_per_cell: self.users_per_cell,
            antennas: self.antennas,
            inter_bs_distance_m: self.inter_bs_distance_m,
            d_min_m: self.d_min_m,
            d_max_m: self.d_max_m,
            pathloss_exponent: self.pathloss_exponent,
            reference_gain: units::db_to_linear(self.reference_gain_db),
            noise_power_mw: units::dbm_to_mw(self.noise_dbm),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub p_max_dbm: Vec<f64>,
    pub step: f64,
    pub tolerance: f64,
    pub max_outer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotSpec {
    pub train_power_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub scenario: ScenarioId,
    pub seed: u64,
    /// Channel realizations per sweep point.
    pub trials: usize,
    /// Realizations sharing one user drop.
    pub draws_per_drop: usize,
    pub algorithms: Vec<Algorithm>,
    pub targets: TargetSpec,
    pub network: NetworkSpec,
    pub sweep: Sweep,
    /// Optional outer sweep; each value yields a separate curve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<Sweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<ConstraintSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot: Option<PilotSpec>,
}

fn range(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|i| start + step * i as f64).collect()
}

impl ScenarioSpec {
    /// Full-scale preset of a scenario.
    pub fn preset(id: ScenarioId) -> Self {
        let net = |k: usize, nt: usize| NetworkSpec {
            users_per_cell: k,
            antennas: nt,
            ..NetworkSpec::default()
        };
        let base = |algorithms: Vec<Algorithm>, targets, network, sweep| ScenarioSpec {
            scenario: id,
            seed: 1,
            trials: DEFAULT_TRIALS,
            draws_per_drop: 10,
            algorithms,
            targets,
            network,
            sweep,
            series: None,
            constraint: None,
            pilot: None,
        };
        let antennas = |grid: Vec<f64>| Sweep {
            variable: SweepVariable::Antennas,
            grid,
        };
        let rate3 = TargetSpec::RateBpsHz(3.0);
        match id {
            ScenarioId::Fig1 => ScenarioSpec {
                trials: 1,
                draws_per_drop: 1,
                series: Some(antennas(vec![60.0, 80.0, 100.0])),
                ..base(
                    vec![Algorithm::RobfAsymptotic],
                    TargetSpec::SinrDb(0.0),
                    NetworkSpec {
                        layout: Layout::Wyner,
                        ..net(50, 60)
                    },
                    Sweep {
                        variable: SweepVariable::TargetDb,
                        grid: range(-10.0, 30.0, 0.5),
                    },
                )
            },
            ScenarioId::Fig3 => base(
                vec![Algorithm::Robf],
                TargetSpec::SinrDb(3.0),
                net(25, 60),
                antennas(vec![40.0, 60.0, 80.0, 100.0]),
            ),
            ScenarioId::Fig4 => base(
                vec![Algorithm::Robf, Algorithm::Cbf, Algorithm::Zf],
                rate3,
                net(25, 60),
                antennas(range(40.0, 100.0, 10.0)),
            ),
            ScenarioId::Fig5 => {
                let mut grid = range(5.0, 60.0, 5.0);
                grid.extend([31.0, 52.0, 54.0, 56.0, 58.0]);
                grid.sort_by(f64::total_cmp);
                ScenarioSpec {
                    draws_per_drop: 1,
                    series: Some(Sweep {
                        variable: SweepVariable::InterBsDistanceM,
                        grid: vec![500.0, 1000.0],
                    }),
                    ..base(
                        vec![Algorithm::Robf, Algorithm::Zf],
                        rate3,
                        net(25, 60),
                        Sweep {
                            variable: SweepVariable::UsersPerCell,
                            grid,
                        },
                    )
                }
            }
            ScenarioId::Fig6 => ScenarioSpec {
                draws_per_drop: 1,
                ..base(
                    vec![Algorithm::Robf, Algorithm::Zf],
                    rate3,
                    net(25, 60),
                    Sweep {
                        variable: SweepVariable::UsersPerCell,
                        grid: range(5.0, 25.0, 5.0),
                    },
                )
            },
            ScenarioId::Fig7 => ScenarioSpec {
                draws_per_drop: 1,
                constraint: Some(ConstraintSpec {
                    p_max_dbm: vec![20.0, 10.0],
                    step: 0.5,
                    tolerance: 0.01,
                    max_outer: 500,
                }),
                ..base(
                    vec![Algorithm::Robf, Algorithm::RobfConstrained],
                    rate3,
                    net(50, 100),
                    antennas(vec![100.0]),
                )
            },
            ScenarioId::Fig8 | ScenarioId::Fig9 => ScenarioSpec {
                draws_per_drop: 5,
                pilot: Some(PilotSpec { train_power_mw: 1e4 }),
                ..base(
                    if id == ScenarioId::Fig8 {
                        vec![Algorithm::Mrobf, Algorithm::CbfEstimated]
                    } else {
                        vec![Algorithm::Mrobf, Algorithm::RobfDlAdaptation]
                    },
                    TargetSpec::SinrDb(0.0),
                    net(30, 60),
                    Sweep {
                        variable: SweepVariable::TargetDb,
                        grid: range(0.0, if id == ScenarioId::Fig8 { 8.0 } else { 10.0 }, 1.0),
                    },
                )
            },
            ScenarioId::Custom => base(
                vec![Algorithm::Robf],
                TargetSpec::SinrDb(3.0),
                net(10, 60),
                antennas(vec![60.0]),
            ),
        }
    }

    /// Desk-scale preset: the full-scale one with fewer trials.
    pub fn desk(id: ScenarioId) -> Self {
        let mut s = Self::preset(id);
        s.trials = s.trials.min(DESK_TRIALS);
        s
    }

    /// Reads a TOML config. Keys missing from the file fall back to the
    /// preset named by its `scenario` key (`custom` when absent).
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let overrides: toml::Table = toml::from_str(text)?;
        let id = match overrides.get("scenario") {
            Some(toml::Value::String(s)) => s.parse()?,
            Some(_) => return Err(ExperimentError::InvalidSpec("'scenario' must be a string".into())),
            None => ScenarioId::Custom,
        };
        Self::preset(id).merged(overrides)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Overlays the keys of `overrides` onto this spec.
    pub fn merged(&self, overrides: toml::Table) -> Result<Self, ExperimentError> {
        let mut base = toml::Table::try_from(self).map_err(|e| ExperimentError::InvalidSpec(e.to_string()))?;
        merge(&mut base, overrides);
        let spec: ScenarioSpec = base.try_into()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario specs always serialize")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::InvalidSpec(m.to_string()));
        if self.sweep.grid.is_empty() {
            return bad("sweep grid must not be empty");
        }
        if self.series.as_ref().is_some_and(|s| s.grid.is_empty()) {
            return bad("series grid must not be empty");
        }
        if self.trials == 0 || self.draws_per_drop == 0 {
            return bad("trials and draws_per_drop must be at least 1");
        }
        if self.algorithms.is_empty() {
            return bad("at least one algorithm is required");
        }
        let grids = std::iter::once(&self.sweep).chain(self.series.as_ref());
        for s in grids {
            if s.grid.iter().any(|v| !v.is_finite()) {
                return bad("grid values must be finite");
            }
            let integral = matches!(s.variable, SweepVariable::Antennas | SweepVariable::UsersPerCell);
            if integral && s.grid.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
                return bad("antenna and user grids must hold non-negative integers");
            }
        }
        if self.algorithms.contains(&Algorithm::RobfConstrained) {
            match &self.constraint {
                Some(c) if c.p_max_dbm.len() == self.network.n_cells => {}
                Some(_) => return bad("constraint needs one cap per cell"),
                None => return bad("robf_constrained needs a [constraint] section"),
            }
        }
        if self.algorithms.iter().any(|a| a.needs_estimates()) && self.pilot.is_none() {
            return bad("estimate-based algorithms need a [pilot] section");
        }
        if self.network.layout == Layout::Wyner && self.network.n_cells != 2 {
            return bad("the Wyner layout has exactly two cells");
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, overrides: toml::Table) {
    for (key, value) in overrides {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if key != "targets" => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for id in ScenarioId::ALL {
            let s = ScenarioSpec::preset(id);
            s.validate().unwrap();
            assert_eq!(ScenarioSpec::from_toml_str(&s.to_toml_string()).unwrap(), s);
            assert_eq!(id.name().parse::<ScenarioId>().unwrap(), id);
        }
    }

    #[test]
    fn overrides_keep_unlisted_keys() {
        let s = ScenarioSpec::from_toml_str(
            "scenario = \"fig4\"\ntrials = 7\n[network]\nnoise_dbm = -100.0\n[targets]\nsinr_db = 5.0\n",
        )
        .unwrap();
        assert_eq!(s.scenario, ScenarioId::Fig4);
        assert_eq!(s.trials, 7);
        assert_eq!(s.network.noise_dbm, -100.0);
        assert_eq!(s.network.users_per_cell, 25);
        assert_eq!(s.targets, TargetSpec::SinrDb(5.0));
        assert_eq!(s.algorithms.len(), 3);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(ScenarioSpec::from_toml_str("scenario = \"fig10\"").is_err());
        assert!(ScenarioSpec::from_toml_str("trials = 0").is_err());
        assert!(ScenarioSpec::from_toml_str("[sweep]\nvariable = \"antennas\"\ngrid = []").is_err());
        assert!(ScenarioSpec::from_toml_str("[sweep]\nvariable = \"antennas\"\ngrid = [60.5]").is_err());
        assert!(ScenarioSpec::from_toml_str("algorithms = [\"robf_constrained\"]").is_err());
        assert!(ScenarioSpec::from_toml_str("unknown_key = 1").is_err());
    }

    #[test]
    fn desk_presets_are_small() {
        assert_eq!(ScenarioSpec::desk(ScenarioId::Fig4).trials, DESK_TRIALS);
        assert_eq!(ScenarioSpec::desk(ScenarioId::Fig1).trials, 1);
    }
}
