//! Helpers shared by the acceptance runs in `tests/acceptance.rs`.

use std::io::Write;
use std::time::{Duration, Instant};

use robust_bf_experiments::seed::{derive_seed, Purpose};
use robust_bf_experiments::{run_experiment, ResultTable, RunControl, ScenarioSpec, SummaryRow};

/// Writes one `criterion N [PASS|FAIL]` line to stderr, bypassing test
/// output capture, and returns whether every check passed.
pub fn report(id: u32, title: &str, checks: &[(&str, bool)], detail: &str) -> bool {
    let pass = checks.iter().all(|(_, ok)| *ok);
    let parts: Vec<String> = checks
        .iter()
        .map(|(name, ok)| format!("{name}={}", if *ok { "ok" } else { "no" }))
        .collect();
    let line = format!(
        "criterion {id:>2} [{}] {title}: {} | {detail}\n",
        if pass { "PASS" } else { "FAIL" },
        parts.join(", ")
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    pass
}

/// Runs a validated scenario and summarizes it, timing the run.
pub fn run(spec: &ScenarioSpec) -> (ResultTable, Vec<SummaryRow>, Duration) {
    spec.validate().unwrap();
    let start = Instant::now();
    let table = run_experiment(spec, &RunControl::default()).unwrap();
    let elapsed = start.elapsed();
    let summary = table.summarize();
    (table, summary, elapsed)
}

pub fn pick<'a>(summary: &'a [SummaryRow], series: usize, alg: &str) -> Vec<&'a SummaryRow> {
    summary.iter().filter(|r| r.series == series && r.algorithm == alg).collect()
}

pub fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

pub fn fmt(xs: &[f64]) -> String {
    let v: Vec<String> = xs.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", v.join(", "))
}

/// Uniform in `[lo, hi)` from a derived stream.
pub fn uniform(seed: u64, index: u64, lo: f64, hi: f64) -> f64 {
    let bits = derive_seed(seed, 0xACCE, index, Purpose::Drop) >> 11;
    lo + (hi - lo) * bits as f64 / (1u64 << 53) as f64
}
