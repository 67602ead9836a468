//! Result rows, per-point summaries and their CSV/JSON encodings.

use std::io::Write;

use robust_bf::units;
use serde::Serialize;

use crate::ExperimentError;

/// Outcome of one algorithm on one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub series: usize,
    /// Value of the outer sweep variable, when the scenario has one.
    pub series_value: Option<f64>,
    pub point: usize,
    pub sweep_value: f64,
    pub algorithm: &'static str,
    pub trial: usize,
    pub drop: usize,
    /// `ok`, or a short tag naming the failure.
    pub status: String,
    pub error: Option<String>,
    /// Mean, spread and minimum of the per-user SINR in dB.
    pub sinr_mean_db: Option<f64>,
    pub sinr_std_db: Option<f64>,
    pub sinr_min_db: Option<f64>,
    pub users: usize,
    pub total_power_mw: Option<f64>,
    pub per_bs_power_mw: Vec<f64>,
    /// Relative gap between downlink power and dual uplink power.
    pub duality_gap: Option<f64>,
    pub iterations: Option<usize>,
}

impl ResultRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn power_per_user_mw(&self) -> Option<f64> {
        self.total_power_mw.map(|p| if self.users == 0 { 0.0 } else { p / self.users as f64 })
    }
}

/// One entry of a multiplier trace of the power-capped solver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub series: usize,
    pub point: usize,
    pub trial: usize,
    pub iteration: usize,
    pub bs: usize,
    pub alpha: f64,
    pub power_mw: f64,
    pub cap_mw: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ResultTable {
    pub scenario: String,
    pub rows: Vec<ResultRow>,
    pub traces: Vec<TraceRow>,
    /// True when an interrupt stopped the run before every task finished.
    pub interrupted: bool,
}

/// Aggregate of one `(series, point, algorithm)` cell over its trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub series: usize,
    pub series_value: Option<f64>,
    pub point: usize,
    pub sweep_value: f64,
    pub algorithm: &'static str,
    pub trials: usize,
    pub failures: usize,
    pub outage_fraction: f64,
    pub sinr_mean_db: Option<f64>,
    /// Spread of per-user SINR pooled over all successful trials.
    pub sinr_std_db: Option<f64>,
    /// Mean over successful trials of the per-user power in dBm.
    pub power_per_ut_dbm: Option<f64>,
    pub duality_gap_median: Option<f64>,
    pub iterations_mean: Option<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

impl ResultTable {
    pub fn ok_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.ok()).count()
    }

    pub fn summarize(&self) -> Vec<SummaryRow> {
        let mut out: Vec<SummaryRow> = Vec::new();
        let mut groups: Vec<Vec<&ResultRow>> = Vec::new();
        for row in &self.rows {
            let key = (row.series, row.point, row.algorithm);
            match out
                .iter()
                .position(|s| (s.series, s.point, s.algorithm) == key)
            {
                Some(i) => groups[i].push(row),
                None => {
                    out.push(SummaryRow {
                        series: row.series,
                        series_value: row.series_value,
                        point: row.point,
                        sweep_value: row.sweep_value,
                        algorithm: row.algorithm,
                        trials: 0,
                        failures: 0,
                        outage_fraction: 0.0,
                        sinr_mean_db: None,
                        sinr_std_db: None,
                        power_per_ut_dbm: None,
                        duality_gap_median: None,
                        iterations_mean: None,
                    });
                    groups.push(vec![row]);
                }
            }
        }
        for (s, rows) in out.iter_mut().zip(groups) {
            let good: Vec<&ResultRow> = rows.iter().copied().filter(|r| r.ok()).collect();
            s.trials = rows.len();
            s.failures = rows.len() - good.len();
            s.outage_fraction = s.failures as f64 / s.trials as f64;
            let means: Vec<f64> = good.iter().filter_map(|r| r.sinr_mean_db).collect();
            s.sinr_mean_db = mean(&means);
            let vars: Vec<f64> = good.iter().filter_map(|r| r.sinr_std_db.map(|x| x * x)).collect();
            if let (Some(m), Some(within)) = (s.sinr_mean_db, mean(&vars)) {
                let between = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / means.len() as f64;
                s.sinr_std_db = Some((within + between).sqrt());
            }
            let powers: Vec<f64> = good
                .iter()
                .filter_map(|r| r.power_per_user_mw())
                .map(units::mw_to_dbm)
                .collect();
            s.power_per_ut_dbm = mean(&powers);
            let gaps: Vec<f64> = good.iter().filter_map(|r| r.duality_gap).collect();
            s.duality_gap_median = (!gaps.is_empty()).then(|| robust_bf::metrics::median(&gaps));
            let its: Vec<f64> = good.iter().filter_map(|r| r.iterations.map(|i| i as f64)).collect();
            s.iterations_mean = mean(&its);
        }
        out
    }
}

/// Formats a float with 9 significant digits, switching to exponent form
/// outside `[1e-5, 1e9)`.
pub fn format_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let s = format!("{:.*}", (8 - exp).max(0) as usize, x);
        trim_zeros(&s).to_string()
    } else {
        let s = format!("{:.8e}", x);
        let (mantissa, e) = s.split_once('e').expect("exponent form");
        format!("{}e{}", trim_zeros(mantissa), e)
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_sig).unwrap_or_default()
}

fn dbm(x: Option<f64>) -> String {
    opt(x.map(units::mw_to_dbm))
}

pub const ROW_HEADER: [&str; 18] = [
    "scenario",
    "series",
    "series_value",
    "point",
    "sweep_value",
    "algorithm",
    "trial",
    "drop",
    "status",
    "error",
    "sinr_mean_db",
    "sinr_std_db",
    "sinr_min_db",
    "power_per_ut_dbm",
    "total_power_dbm",
    "per_bs_power_dbm",
    "duality_gap",
    "iterations",
];

pub fn write_rows_csv<W: Write>(table: &ResultTable, out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ROW_HEADER)?;
    for r in &table.rows {
        let per_bs = r
            .per_bs_power_mw
            .iter()
            .map(|&p| format_sig(units::mw_to_dbm(p)))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            table.scenario.clone(),
            r.series.to_string(),
            opt(r.series_value),
            r.point.to_string(),
            format_sig(r.sweep_value),
            r.algorithm.to_string(),
            r.trial.to_string(),
            r.drop.to_string(),
            r.status.clone(),
            r.error.clone().unwrap_or_default(),
            opt(r.sinr_mean_db),
            opt(r.sinr_std_db),
            opt(r.sinr_min_db),
            dbm(r.power_per_user_mw()),
            dbm(r.total_power_mw),
            per_bs,
            opt(r.duality_gap),
            r.iterations.map(|i| i.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| ExperimentError::Io(e.to_string()))?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(table: &ResultTable, out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "scenario",
        "series",
        "series_value",
        "point",
        "sweep_value",
        "algorithm",
        "trials",
        "failures",
        "outage_fraction",
        "sinr_mean_db",
        "sinr_std_db",
        "power_per_ut_dbm",
        "duality_gap_median",
        "iterations_mean",
    ])?;
    for s in table.summarize() {
        w.write_record([
            table.scenario.clone(),
            s.series.to_string(),
            opt(s.series_value),
            s.point.to_string(),
            format_sig(s.sweep_value),
            s.algorithm.to_string(),
            s.trials.to_string(),
            s.failures.to_string(),
            format_sig(s.outage_fraction),
            opt(s.sinr_mean_db),
            opt(s.sinr_std_db),
            opt(s.power_per_ut_dbm),
            opt(s.duality_gap_median),
            opt(s.iterations_mean),
        ])?;
    }
    w.flush().map_err(|e| ExperimentError::Io(e.to_string()))?;
    Ok(())
}

pub fn write_trace_csv<W: Write>(table: &ResultTable, out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "point", "trial", "iteration", "bs", "alpha", "power_dbm", "cap_dbm"])?;
    for t in &table.traces {
        w.write_record([
            t.series.to_string(),
            t.point.to_string(),
            t.trial.to_string(),
            t.iteration.to_string(),
            t.bs.to_string(),
            format_sig(t.alpha),
            format_sig(units::mw_to_dbm(t.power_mw)),
            format_sig(units::mw_to_dbm(t.cap_mw)),
        ])?;
    }
    w.flush().map_err(|e| ExperimentError::Io(e.to_string()))?;
    Ok(())
}

/// Rows and summaries as one JSON document.
pub fn write_json<W: Write>(table: &ResultTable, out: W) -> Result<(), ExperimentError> {
    #[derive(Serialize)]
    struct Doc<'a> {
        scenario: &'a str,
        interrupted: bool,
        rows: &'a [ResultRow],
        summary: Vec<SummaryRow>,
        traces: &'a [TraceRow],
    }
    let doc = Doc {
        scenario: &table.scenario,
        interrupted: table.interrupted,
        rows: &table.rows,
        summary: table.summarize(),
        traces: &table.traces,
    };
    serde_json::to_writer_pretty(out, &doc)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(point: usize, status: &str, sinr: f64, std: f64, power: f64) -> ResultRow {
        ResultRow {
            series: 0,
            series_value: None,
            point,
            sweep_value: point as f64,
            algorithm: "robf",
            trial: 0,
            drop: 0,
            status: status.into(),
            error: None,
            sinr_mean_db: Some(sinr),
            sinr_std_db: Some(std),
            sinr_min_db: Some(sinr),
            users: 2,
            total_power_mw: Some(power),
            per_bs_power_mw: vec![power],
            duality_gap: None,
            iterations: Some(4),
        }
    }

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(3.0), "3");
        assert_eq!(format_sig(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig(-123456.7891234), "-123456.789");
        assert_eq!(format_sig(2.5e-7), "2.5e-7");
        assert_eq!(format_sig(1.23456789012e12), "1.23456789e12");
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn summary_pools_and_counts_outages() {
        let mut failed = row(0, "infeasible", 0.0, 0.0, 1.0);
        failed.sinr_mean_db = None;
        let t = ResultTable {
            scenario: "x".into(),
            rows: vec![row(0, "ok", 1.0, 1.0, 2.0), row(0, "ok", 3.0, 1.0, 20.0), failed],
            ..Default::default()
        };
        let s = &t.summarize()[0];
        assert_eq!((s.trials, s.failures), (3, 1));
        assert!((s.outage_fraction - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.sinr_mean_db, Some(2.0));
        assert!((s.sinr_std_db.unwrap() - 2f64.sqrt()).abs() < 1e-12);
        // per-user powers 1 mW and 10 mW average to 5 dBm
        assert!((s.power_per_ut_dbm.unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn csv_has_fixed_header() {
        let t = ResultTable {
            scenario: "fig3".into(),
            rows: vec![row(0, "ok", 3.0, 0.5, 2.0)],
            ..Default::default()
        };
        let mut buf = Vec::new();
        write_rows_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), ROW_HEADER.join(","));
        assert_eq!(lines.next().unwrap(), "fig3,0,,0,0,robf,0,0,ok,,3,0.5,3,0,3.01029996,3.01029996,,4");
    }
}
