use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn robust_bf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robust-bf")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = r#"
scenario = "custom"
trials = 6
draws_per_drop = 3
algorithms = ["robf", "cbf", "zf"]

[network]
users_per_cell = 4
antennas = 16

[sweep]
variable = "antennas"
grid = [12, 16]
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn run_writes_results_summary_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("res/small.csv");
    let o = robust_bf(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = fs::read_to_string(&out).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 6 * 3);
    assert!(rows.starts_with("scenario,series,series_value,point,sweep_value,algorithm,trial,drop,status"));
    let summary = fs::read_to_string(dir.path().join("res/small.summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 3);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("res/small.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["rows"], 36);
    assert_eq!(manifest["spec"]["network"]["antennas"], 16);
    assert!(!dir.path().join("res/small.trace.csv").exists());
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let mut outputs = Vec::new();
    for threads in ["1", "3", "1"] {
        let out = dir.path().join(format!("t{}.csv", outputs.len()));
        let o = robust_bf(&["run", "--config", &cfg, "--threads", threads, "--seed", "5", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn seed_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    robust_bf(&["run", "--config", &cfg, "--seed", "1", "--out", a.to_str().unwrap()]);
    robust_bf(&["run", "--config", &cfg, "--seed", "2", "--out", b.to_str().unwrap()]);
    assert_ne!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn json_output_holds_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f3.json");
    let o = robust_bf(&["run", "--scenario", "fig3", "--trials", "4", "--format", "json", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["rows"].as_array().unwrap().len(), 16);
    assert_eq!(doc["summary"].as_array().unwrap().len(), 4);
}

#[test]
fn constrained_run_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
scenario = "fig7"
trials = 1
[network]
users_per_cell = 20
antennas = 40
[constraint]
p_max_dbm = [100.0, 100.0]
"#,
    );
    let out = dir.path().join("f7.csv");
    let o = robust_bf(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = fs::read_to_string(dir.path().join("f7.trace.csv")).unwrap();
    assert!(trace.lines().count() >= 3);
}

#[test]
fn all_failed_run_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
trials = 3
algorithms = ["zf"]
[network]
users_per_cell = 10
antennas = 12
[sweep]
variable = "antennas"
grid = [12]
"#,
    );
    let out = dir.path().join("zf.csv");
    let o = robust_bf(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let rows = fs::read_to_string(&out).unwrap();
    assert!(rows.lines().skip(1).all(|l| l.contains("insufficient_dof")));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(robust_bf(&["run", "--out", "x.csv"]).status.code(), Some(1));
    assert_eq!(robust_bf(&["run", "--scenario", "nope", "--out", "x.csv"]).status.code(), Some(1));
    assert_eq!(robust_bf(&["frobnicate"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "trials = 0\n");
    let o = robust_bf(&["run", "--config", &cfg, "--out", dir.path().join("o.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let cfg = write_config(dir.path(), "colour = \"blue\"\n");
    let o = robust_bf(&["run", "--config", &cfg, "--out", dir.path().join("o.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(robust_bf(&["--help"]).status.code(), Some(0));
}

#[test]
fn feasibility_reports() {
    let o = robust_bf(&["feasibility", "--antennas", "30", "--users", "50"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("gamma_max = 1.5 linear"));

    let o = robust_bf(&["feasibility", "--wyner-epsilon", "0.5", "--antennas", "100", "--users", "50", "--target-db", "10"]);
    let text = stdout(&o);
    assert!(text.contains("wyner cutoff gamma* = "));
    assert!(text.contains("sufficient condition:"));

    let o = robust_bf(&["feasibility", "--cells", "2", "--antennas", "60", "--users", "10", "--target-db", "3"]);
    let text = stdout(&o);
    assert!(text.contains("sufficient condition: feasible"), "{text}");
    assert!(text.contains("uplink fixed point: converged"));
}

#[test]
fn overhead_reproduces_reference_rates() {
    let o = robust_bf(&["overhead", "--N", "3", "--Nt", "100", "--K", "40", "--tau-coh-s", "0.18", "--tau-lt-s", "22.6"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("cbf  = 133333.333 (1.3e5)"), "{text}");
    assert!(text.contains("robf = 5.30973451 (5.3)"), "{text}");
}
