//! Monte Carlo execution of a scenario.
//!
//! Work is split into tasks of one user drop at one sweep point. Drops are
//! keyed by `(series, drop)` only, so every point of a sweep sees the same
//! user positions.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use robust_bf::cbf::{self, CbfError, CbfOptions};
use robust_bf::geometry::{self, ChannelSet, EstimateSet, GeometryError, PathlossMap};
use robust_bf::metrics;
use robust_bf::pilot::{self, MrobfSolution, PilotError};
use robust_bf::power_constrained::{self, ConstrainedError, ConstraintConfig};
use robust_bf::robf::{self, DownlinkSolution, RobfError, StatisticalSolution};
use robust_bf::zf::{self, ZfError};
use robust_bf::{units, SinrTargets};

use crate::seed::{derive_seed, Purpose};
use crate::spec::{Algorithm, Layout, NetworkSpec, ScenarioSpec, SweepVariable, TargetSpec};
use crate::table::{ResultRow, ResultTable, TraceRow};
use crate::ExperimentError;

/// Execution knobs that do not affect results.
#[derive(Debug, Clone, Default)]
pub struct RunControl {
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Set to stop scheduling new tasks; finished tasks are kept.
    pub interrupt: Arc<AtomicBool>,
}

/// One point of the sweep grid, with its series value applied.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSetup {
    pub series: usize,
    pub series_value: Option<f64>,
    pub point: usize,
    pub sweep_value: f64,
    pub network: NetworkSpec,
    pub target: TargetSpec,
}

fn apply(variable: SweepVariable, value: f64, network: &mut NetworkSpec, target: &mut TargetSpec) {
    match variable {
        SweepVariable::Antennas => network.antennas = value as usize,
        SweepVariable::UsersPerCell => network.users_per_cell = value as usize,
        SweepVariable::TargetDb => *target = TargetSpec::SinrDb(value),
        SweepVariable::TargetRate => *target = TargetSpec::RateBpsHz(value),
        SweepVariable::InterBsDistanceM => network.inter_bs_distance_m = value,
    }
}

/// Expands the series and sweep grids into concrete points.
pub fn point_setups(spec: &ScenarioSpec) -> Vec<PointSetup> {
    let series: Vec<Option<f64>> = match &spec.series {
        Some(s) => s.grid.iter().map(|v| Some(*v)).collect(),
        None => vec![None],
    };
    let mut out = Vec::new();
    for (si, sv) in series.into_iter().enumerate() {
        for (pi, &pv) in spec.sweep.grid.iter().enumerate() {
            let mut network = spec.network.clone();
            let mut target = spec.targets;
            if let (Some(s), Some(v)) = (&spec.series, sv) {
                apply(s.variable, v, &mut network, &mut target);
            }
            apply(spec.sweep.variable, pv, &mut network, &mut target);
            out.push(PointSetup {
                series: si,
                series_value: sv,
                point: pi,
                sweep_value: pv,
                network,
                target,
            });
        }
    }
    out
}

pub fn drops_per_point(spec: &ScenarioSpec) -> usize {
    spec.trials.div_ceil(spec.draws_per_drop)
}

/// Runs every task of the scenario. Rows come back in task order whatever
/// the thread count.
pub fn run_experiment(spec: &ScenarioSpec, control: &RunControl) -> Result<ResultTable, ExperimentError> {
    spec.validate()?;
    let setups = point_setups(spec);
    let drops = drops_per_point(spec);
    let tasks: Vec<(usize, usize)> = (0..setups.len())
        .flat_map(|p| (0..drops).map(move |d| (p, d)))
        .collect();
    let work = || -> Vec<Option<TaskOutput>> {
        tasks
            .par_iter()
            .map(|&(p, d)| {
                if control.interrupt.load(Ordering::Relaxed) {
                    None
                } else {
                    Some(run_task(spec, &setups[p], d))
                }
            })
            .collect()
    };
    let outputs = match control.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| ExperimentError::ThreadPool(e.to_string()))?
            .install(work),
        None => work(),
    };
    let mut table = ResultTable {
        scenario: spec.scenario.name().to_string(),
        ..Default::default()
    };
    for out in outputs {
        match out {
            Some(o) => {
                table.rows.extend(o.rows);
                table.traces.extend(o.traces);
            }
            None => table.interrupted = true,
        }
    }
    Ok(table)
}

struct TaskOutput {
    rows: Vec<ResultRow>,
    traces: Vec<TraceRow>,
}

struct Failure {
    tag: &'static str,
    message: String,
}

impl Failure {
    fn new(tag: &'static str, e: impl std::fmt::Display) -> Self {
        Self {
            tag,
            message: e.to_string(),
        }
    }
}

impl From<RobfError> for Failure {
    fn from(e: RobfError) -> Self {
        let tag = match e {
            RobfError::Infeasible { .. } | RobfError::NegativeSolution => "infeasible",
            RobfError::NonConvergence { .. } => "non_convergence",
            _ => "numerical",
        };
        Failure::new(tag, e)
    }
}

impl From<CbfError> for Failure {
    fn from(e: CbfError) -> Self {
        let tag = match e {
            CbfError::Infeasible { .. } | CbfError::NegativeSolution => "infeasible",
            CbfError::NonConvergence { .. } => "non_convergence",
            _ => "numerical",
        };
        Failure::new(tag, e)
    }
}

impl From<ZfError> for Failure {
    fn from(e: ZfError) -> Self {
        let tag = match e {
            ZfError::InsufficientDoF { .. } => "insufficient_dof",
            _ => "numerical",
        };
        Failure::new(tag, e)
    }
}

impl From<PilotError> for Failure {
    fn from(e: PilotError) -> Self {
        let tag = match e {
            PilotError::Infeasible { .. } | PilotError::NegativeSolution => "infeasible",
            PilotError::Robf(RobfError::Infeasible { .. } | RobfError::NegativeSolution) => "infeasible",
            PilotError::NonConvergence { .. } => "non_convergence",
            _ => "numerical",
        };
        Failure::new(tag, e)
    }
}

impl From<ConstrainedError> for Failure {
    fn from(e: ConstrainedError) -> Self {
        match e {
            ConstrainedError::MaxIterations { .. } => Failure::new("max_iterations", e),
            ConstrainedError::InnerInfeasible(inner) => inner.into(),
            ConstrainedError::InvalidConfig(_) => Failure::new("invalid_config", e),
        }
    }
}

impl From<GeometryError> for Failure {
    fn from(e: GeometryError) -> Self {
        Failure::new("invalid_config", e)
    }
}

/// Measured quantities of a successful evaluation.
#[derive(Default)]
struct Measured {
    sinr: Option<Vec<f64>>,
    total_power_mw: f64,
    per_bs_power_mw: Vec<f64>,
    duality_gap: Option<f64>,
    iterations: Option<usize>,
}

impl Measured {
    fn from_downlink(dl: &DownlinkSolution, channels: &ChannelSet, noise: f64) -> Result<Self, Failure> {
        let report = metrics::downlink_sinr(channels, &dl.beamformers, noise).map_err(|e| Failure::new("numerical", e))?;
        Ok(Self {
            sinr: Some(report.sinr),
            total_power_mw: dl.total_power(),
            per_bs_power_mw: dl.per_bs_power.clone(),
            ..Default::default()
        })
    }
}

struct Ctx<'a> {
    setup: &'a PointSetup,
    drop: usize,
    users: usize,
}

impl Ctx<'_> {
    fn row(&self, algorithm: Algorithm, trial: usize, result: Result<Measured, Failure>) -> ResultRow {
        let s = self.setup;
        let mut row = ResultRow {
            series: s.series,
            series_value: s.series_value,
            point: s.point,
            sweep_value: s.sweep_value,
            algorithm: algorithm.name(),
            trial,
            drop: self.drop,
            status: "ok".into(),
            error: None,
            sinr_mean_db: None,
            sinr_std_db: None,
            sinr_min_db: None,
            users: self.users,
            total_power_mw: None,
            per_bs_power_mw: Vec::new(),
            duality_gap: None,
            iterations: None,
        };
        match result {
            Ok(m) => {
                if let Some(sinr) = m.sinr.filter(|v| !v.is_empty()) {
                    let db: Vec<f64> = sinr.iter().map(|&x| units::linear_to_db(x)).collect();
                    let (mean, std) = metrics::mean_std(&db);
                    row.sinr_mean_db = Some(mean);
                    row.sinr_std_db = Some(std);
                    row.sinr_min_db = db.iter().cloned().reduce(f64::min);
                }
                row.total_power_mw = Some(m.total_power_mw);
                row.per_bs_power_mw = m.per_bs_power_mw;
                row.duality_gap = m.duality_gap;
                row.iterations = m.iterations;
            }
            Err(f) => {
                row.status = f.tag.to_string();
                row.error = Some(f.message);
            }
        }
        row
    }
}

/// Statistics-only solutions shared by all draws of a drop.
struct DropState {
    robf: Option<Result<StatisticalSolution, RobfError>>,
    mrobf: Option<Result<MrobfSolution, PilotError>>,
    adaptation: Option<Result<MrobfSolution, PilotError>>,
}

fn run_task(spec: &ScenarioSpec, setup: &PointSetup, drop: usize) -> TaskOutput {
    let net = &setup.network;
    let k = net.users_per_cell;
    let ctx = Ctx {
        setup,
        drop,
        users: net.n_cells * k,
    };
    let first = drop * spec.draws_per_drop;
    let last = (first + spec.draws_per_drop).min(spec.trials);
    let mut out = TaskOutput {
        rows: Vec::new(),
        traces: Vec::new(),
    };
    let each_row = |out: &mut TaskOutput, f: &mut dyn FnMut(Algorithm, usize) -> Result<Measured, Failure>| {
        for trial in first..last {
            for &alg in &spec.algorithms {
                if alg.statistics_only() && trial != first {
                    continue;
                }
                let r = f(alg, trial);
                out.rows.push(ctx.row(alg, trial, r));
            }
        }
    };

    if k == 0 {
        each_row(&mut out, &mut |_, _| {
            Ok(Measured {
                per_bs_power_mw: vec![0.0; net.n_cells],
                ..Default::default()
            })
        });
        return out;
    }

    let config = net.to_config();
    let noise = config.noise_power_mw;
    let nt = net.antennas;
    let drop_seed = derive_seed(spec.seed, setup.series as u64, drop as u64, Purpose::Drop);
    let pathloss = match net.layout {
        Layout::Hex => geometry::drop_network(&config, drop_seed).map(|inst| inst.pathloss),
        Layout::Wyner => PathlossMap::wyner(k, net.wyner_epsilon),
    };
    let pathloss = match pathloss {
        Ok(p) => p,
        Err(e) => {
            let msg = e.to_string();
            each_row(&mut out, &mut |_, _| Err(Failure::new("invalid_config", &msg)));
            return out;
        }
    };
    let Some(targets) = SinrTargets::uniform(net.n_cells, k, setup.target.linear()) else {
        each_row(&mut out, &mut |_, _| Err(Failure::new("invalid_config", "SINR target must be positive")));
        return out;
    };
    let uses = |a: Algorithm| spec.algorithms.contains(&a);
    let train_power = spec.pilot.as_ref().map(|p| p.train_power_mw).unwrap_or(f64::INFINITY);
    let state = DropState {
        robf: (uses(Algorithm::Robf) || uses(Algorithm::RobfAsymptotic) || uses(Algorithm::Cbf))
            .then(|| robf::solve_statistics(&pathloss, &targets, nt, noise)),
        mrobf: uses(Algorithm::Mrobf).then(|| pilot::mrobf(&pathloss, &targets, train_power, nt, noise)),
        adaptation: uses(Algorithm::RobfDlAdaptation)
            .then(|| pilot::robf_dl_adaptation(&pathloss, &targets, train_power, nt, noise).map(|(_, s)| s)),
    };
    let needs_estimates = spec.algorithms.iter().any(|a| a.needs_estimates());
    let mut traces = Vec::new();

    each_row(&mut out, &mut |alg, trial| {
        let channel_seed = derive_seed(spec.seed, setup.series as u64, trial as u64, Purpose::Channel);
        // Channels are drawn lazily: statistics-only rows never need them.
        let channels = || geometry::draw_channels(&pathloss, nt, channel_seed);
        let estimates = |ch: &ChannelSet| -> Result<EstimateSet, Failure> {
            let seed = derive_seed(spec.seed, setup.series as u64, trial as u64, Purpose::Estimate);
            Ok(geometry::estimate_channels(ch, &pathloss, train_power, noise, seed)?)
        };
        match alg {
            Algorithm::RobfAsymptotic => {
                let st = state.robf.as_ref().expect("prepared").clone()?;
                let p = robf::asymptotic_dl_power(&pathloss, &st.uplink, &st.scaling.delta_bar);
                Ok(Measured {
                    sinr: Some(robf::asymptotic_dl_sinr(&pathloss, &st.uplink, &st.scaling.delta_bar, noise)),
                    total_power_mw: p.iter().sum(),
                    per_bs_power_mw: p,
                    iterations: Some(st.uplink.iterations),
                    ..Default::default()
                })
            }
            Algorithm::Robf => {
                let st = state.robf.as_ref().expect("prepared").clone()?;
                let ch = channels();
                let dl = robf::beamformers(&ch, &st.uplink, &st.scaling)?;
                let mut m = Measured::from_downlink(&dl, &ch, noise)?;
                m.duality_gap = Some(metrics::power_summary(&dl, &st.uplink.mu, noise, nt).relative_gap);
                m.iterations = Some(st.uplink.iterations);
                Ok(m)
            }
            Algorithm::Cbf => {
                let ch = channels();
                let opts = CbfOptions {
                    initial: state.robf.as_ref().and_then(|r| r.as_ref().ok()).map(|s| s.uplink.mu.clone()),
                    ..CbfOptions::default()
                };
                let sol = cbf::solve(&ch, &targets, noise, &opts)?;
                let mut m = Measured::from_downlink(&sol.downlink, &ch, noise)?;
                m.duality_gap = Some(metrics::power_summary(&sol.downlink, &sol.uplink.lambda, noise, nt).relative_gap);
                m.iterations = Some(sol.uplink.iterations);
                Ok(m)
            }
            Algorithm::Zf => {
                let ch = channels();
                let dl = zf::solve(&ch, &targets, noise)?;
                Measured::from_downlink(&dl, &ch, noise)
            }
            Algorithm::RobfConstrained => {
                let c = spec.constraint.as_ref().expect("validated");
                let caps: Vec<f64> = c.p_max_dbm.iter().map(|&d| units::dbm_to_mw(d)).collect();
                let cfg = ConstraintConfig {
                    p_max: caps.clone(),
                    step: c.step,
                    tolerance: c.tolerance,
                    max_outer: c.max_outer,
                };
                let ch = channels();
                let result = power_constrained::solve(&pathloss, &ch, &targets, noise, &cfg);
                let steps = match &result {
                    Ok(sol) => sol.trace.clone(),
                    Err(ConstrainedError::MaxIterations { trace, .. }) => trace.clone(),
                    Err(_) => Vec::new(),
                };
                for s in steps {
                    for (bs, (&alpha, &power)) in s.alpha.iter().zip(&s.per_bs_power).enumerate() {
                        traces.push(TraceRow {
                            series: setup.series,
                            point: setup.point,
                            trial,
                            iteration: s.iteration,
                            bs,
                            alpha,
                            power_mw: power,
                            cap_mw: caps[bs],
                        });
                    }
                }
                let sol = result?;
                let mut m = Measured::from_downlink(&sol.downlink, &ch, noise)?;
                m.iterations = Some(sol.iterations);
                Ok(m)
            }
            Algorithm::Mrobf | Algorithm::RobfDlAdaptation => {
                let prepared = if alg == Algorithm::Mrobf { &state.mrobf } else { &state.adaptation };
                let sol = prepared.as_ref().expect("prepared").clone()?;
                let ch = channels();
                let est = estimates(&ch)?;
                let dl = pilot::estimate_beamformers(&est, &sol.stats, &sol.delta_bar)?;
                Measured::from_downlink(&dl, &ch, noise)
            }
            Algorithm::CbfEstimated => {
                debug_assert!(needs_estimates);
                let ch = channels();
                let est = estimates(&ch)?;
                let sol = cbf::solve(&est.estimates, &targets, noise, &CbfOptions::default())?;
                let mut m = Measured::from_downlink(&sol.downlink, &ch, noise)?;
                m.iterations = Some(sol.uplink.iterations);
                Ok(m)
            }
        }
    });
    out.traces = traces;
    out
}
