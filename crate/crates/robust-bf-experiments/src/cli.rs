//! Command-line interface.
//!
//! Exit codes: 0 on success, 1 on usage or I/O errors, 2 when every trial
//! of a run failed.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::Ordering;

use clap::{Args, Parser, Subcommand, ValueEnum};
use robust_bf::geometry::{self, PathlossMap};
use robust_bf::{feasibility, metrics, units, SinrTargets};

use crate::manifest::Manifest;
use crate::runner::{run_experiment, RunControl};
use crate::spec::{Layout, ScenarioId, ScenarioSpec, TargetSpec};
use crate::table::{self, format_sig, ResultTable};
use crate::ExperimentError;

#[derive(Debug, Parser)]
#[command(name = "robust-bf", version, about = "Multi-cell downlink beamforming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its results.
    Run(RunArgs),
    /// Report whether SINR targets are supportable for a configuration.
    Feasibility(FeasibilityArgs),
    /// Signaling-overhead comparison of the two coordination schemes.
    Overhead(OverheadArgs),
    /// Print the TOML of a preset, a starting point for config files.
    Preset {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        desk: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Preset to start from (fig1, fig3 .. fig9, custom).
    #[arg(long)]
    scenario: Option<String>,
    /// TOML file whose keys override the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Channel realizations per sweep point.
    #[arg(long)]
    trials: Option<usize>,
    /// Start from the desk-scale preset.
    #[arg(long)]
    desk: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct FeasibilityArgs {
    /// Scenario TOML; its network and targets are used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    cells: usize,
    #[arg(long, default_value_t = 10)]
    users: usize,
    #[arg(long, default_value_t = 60)]
    antennas: usize,
    #[arg(long, conflicts_with = "rate")]
    target_db: Option<f64>,
    /// Target spectral efficiency in bits/s/Hz.
    #[arg(long)]
    rate: Option<f64>,
    /// Use the two-cell Wyner layout with this cross gain.
    #[arg(long)]
    wyner_epsilon: Option<f64>,
    #[arg(long, default_value_t = 500.0)]
    distance_m: f64,
    /// Seed of the user drop for hexagonal layouts.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct OverheadArgs {
    #[arg(long = "N")]
    n: usize,
    #[arg(long = "Nt")]
    nt: usize,
    #[arg(long = "K")]
    k: usize,
    #[arg(long, default_value_t = 0.18)]
    tau_coh_s: f64,
    #[arg(long, default_value_t = 22.6)]
    tau_lt_s: f64,
    #[arg(long)]
    correlated: bool,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut stdout = std::io::stdout().lock();
    let result = match cli.command {
        Command::Run(a) => run(a, &mut stdout),
        Command::Feasibility(a) => feasibility_report(a, &mut stdout).map(|_| 0),
        Command::Overhead(a) => overhead_report(a, &mut stdout).map(|_| 0),
        Command::Preset { scenario, desk } => scenario.parse::<ScenarioId>().and_then(|id| {
            let spec = if desk { ScenarioSpec::desk(id) } else { ScenarioSpec::preset(id) };
            write!(stdout, "{}", spec.to_toml_string()).map_err(|e| ExperimentError::Io(e.to_string()))?;
            Ok(0)
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_spec(a: &RunArgs) -> Result<ScenarioSpec, ExperimentError> {
    let preset = |id: ScenarioId| if a.desk { ScenarioSpec::desk(id) } else { ScenarioSpec::preset(id) };
    let mut spec = match (&a.scenario, &a.config) {
        (None, None) => return Err(ExperimentError::InvalidSpec("give --scenario, --config or both".into())),
        (Some(s), None) => preset(s.parse()?),
        (Some(s), Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
            let mut overrides: toml::Table = toml::from_str(&text)?;
            overrides.remove("scenario");
            preset(s.parse()?).merged(overrides)?
        }
        (None, Some(path)) => ScenarioSpec::from_toml_file(path)?,
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if let Some(trials) = a.trials {
        spec.trials = trials;
    }
    spec.validate()?;
    Ok(spec)
}

/// `dir/stem.suffix` next to `out`.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "results".into());
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn create(path: &Path) -> Result<BufWriter<File>, ExperimentError> {
    File::create(path).map(BufWriter::new).map_err(|e| ExperimentError::io(path, e))
}

/// Writes the result files and returns their paths.
pub fn write_outputs(table: &ResultTable, out: &Path, json: bool) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut written = vec![out.to_path_buf()];
    if json {
        table::write_json(table, create(out)?)?;
        return Ok(written);
    }
    table::write_rows_csv(table, create(out)?)?;
    let summary = sibling(out, "summary.csv");
    table::write_summary_csv(table, create(&summary)?)?;
    written.push(summary);
    if !table.traces.is_empty() {
        let trace = sibling(out, "trace.csv");
        table::write_trace_csv(table, create(&trace)?)?;
        written.push(trace);
    }
    Ok(written)
}

fn run(a: RunArgs, stdout: &mut impl Write) -> Result<i32, ExperimentError> {
    let spec = load_spec(&a)?;
    let control = RunControl {
        threads: a.threads,
        ..RunControl::default()
    };
    let flag = control.interrupt.clone();
    // A handler may already be installed when called more than once in a process.
    let _ = ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed));
    let table = run_experiment(&spec, &control)?;
    let json = a.format == Format::Json;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    }
    let mut manifest = Manifest::new(&spec, a.threads, if json { "json" } else { "csv" });
    manifest.outputs = write_outputs(&table, &a.out, json)?;
    manifest.rows = table.rows.len();
    manifest.failed_rows = table.rows.len() - table.ok_rows();
    manifest.interrupted = table.interrupted;
    let manifest_path = sibling(&a.out, "manifest.json");
    let mut w = create(&manifest_path)?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.flush().map_err(|e| ExperimentError::io(&manifest_path, e))?;
    let io = |e: std::io::Error| ExperimentError::Io(e.to_string());
    writeln!(
        stdout,
        "{}: {} rows ({} failed){} -> {}",
        spec.scenario,
        manifest.rows,
        manifest.failed_rows,
        if table.interrupted { ", interrupted" } else { "" },
        a.out.display()
    )
    .map_err(io)?;
    Ok(if !table.rows.is_empty() && table.ok_rows() == 0 { 2 } else { 0 })
}

fn feasibility_report(a: FeasibilityArgs, out: &mut impl Write) -> Result<(), ExperimentError> {
    let (network, target) = match &a.config {
        Some(path) => {
            let spec = ScenarioSpec::from_toml_file(path)?;
            (spec.network, spec.targets)
        }
        None => {
            let target = match (a.target_db, a.rate) {
                (_, Some(r)) => TargetSpec::RateBpsHz(r),
                (Some(d), None) => TargetSpec::SinrDb(d),
                (None, None) => TargetSpec::SinrDb(0.0),
            };
            let mut net = crate::spec::NetworkSpec {
                n_cells: a.cells,
                users_per_cell: a.users,
                antennas: a.antennas,
                inter_bs_distance_m: a.distance_m,
                ..Default::default()
            };
            if let Some(eps) = a.wyner_epsilon {
                net.layout = Layout::Wyner;
                net.wyner_epsilon = eps;
                net.n_cells = 2;
            }
            (net, target)
        }
    };
    let gamma = target.linear();
    let (n, k, nt) = (network.n_cells, network.users_per_cell, network.antennas);
    let io = |e: std::io::Error| ExperimentError::Io(e.to_string());
    let db = |g: f64| {
        if g.is_finite() {
            format!("{} dB", format_sig(units::linear_to_db(g)))
        } else {
            "unbounded".to_string()
        }
    };
    writeln!(out, "cells = {n}, users per cell = {k}, antennas = {nt}").map_err(io)?;
    writeln!(out, "target gamma = {} ({})", format_sig(gamma), db(gamma)).map_err(io)?;
    let verdict = |ok: bool| if ok { "feasible" } else { "infeasible" };
    if n == 1 {
        let g = feasibility::single_cell_gamma_max(nt, k);
        writeln!(out, "gamma_max = {} linear ({})", format_sig(g), db(g)).map_err(io)?;
        writeln!(out, "verdict: {}", verdict(gamma < g)).map_err(io)?;
        return Ok(());
    }
    let targets = SinrTargets::uniform(n, k, gamma)
        .ok_or_else(|| ExperimentError::InvalidSpec("SINR target must be positive".into()))?;
    let pathloss: PathlossMap = match network.layout {
        Layout::Wyner => {
            let g = feasibility::wyner_cutoff(nt, k, network.wyner_epsilon);
            writeln!(out, "wyner cutoff gamma* = {} linear ({})", format_sig(g), db(g)).map_err(io)?;
            PathlossMap::wyner(k, network.wyner_epsilon).map_err(|e| ExperimentError::InvalidSpec(e.to_string()))?
        }
        Layout::Hex => {
            geometry::drop_network(&network.to_config(), a.seed)
                .map_err(|e| ExperimentError::InvalidSpec(e.to_string()))?
                .pathloss
        }
    };
    let report = feasibility::robf_feasible(&pathloss, &targets, nt).map_err(|e| ExperimentError::InvalidSpec(e.to_string()))?;
    for (i, l) in report.loads.iter().enumerate() {
        writeln!(out, "bs {i}: sufficient-condition load = {}", format_sig(*l)).map_err(io)?;
    }
    writeln!(out, "sufficient condition: {}", verdict(report.feasible)).map_err(io)?;
    let solved = robust_bf::robf::uplink_powers(&pathloss, &targets, nt).is_ok();
    writeln!(out, "uplink fixed point: {}", if solved { "converged" } else { "diverged" }).map_err(io)?;
    Ok(())
}

fn overhead_report(a: OverheadArgs, out: &mut impl Write) -> Result<(), ExperimentError> {
    let o = metrics::overhead(a.n, a.nt, a.k, a.tau_coh_s, a.tau_lt_s, a.correlated)
        .map_err(|e| ExperimentError::InvalidSpec(e.to_string()))?;
    let io = |e: std::io::Error| ExperimentError::Io(e.to_string());
    writeln!(out, "cbf  = {} ({:.1e}) real coefficients/s", format_sig(o.cbf), o.cbf).map_err(io)?;
    writeln!(out, "robf = {} ({:.1}) real coefficients/s", format_sig(o.robf), o.robf).map_err(io)?;
    writeln!(out, "ratio = {}", format_sig(o.ratio)).map_err(io)?;
    Ok(())
}
