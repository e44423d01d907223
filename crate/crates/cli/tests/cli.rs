use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_ris-hybrid");

const SMALL: &str = r#"
num_airfl = 2
num_noma = 1
num_elements = 4
noise_power_dbm = -110.0
"#;

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn small_scenario(dir: &Path) -> String {
    let p = dir.join("small.toml");
    std::fs::write(&p, SMALL).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn default_scenario_is_accepted_as_a_scenario_file() {
    let out = run(&["default-scenario"]);
    assert!(out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("default.toml");
    std::fs::write(&p, &out.stdout).unwrap();
    let out = run(&["solve", "--scenario", p.to_str().unwrap(), "--noise-dbm", "-110", "--seed", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("discrete-ris,"));
}

#[test]
fn solve_prints_one_line_per_scheme_and_writes_records() {
    let dir = tempfile::tempdir().unwrap();
    let scen = small_scenario(dir.path());
    let rec = dir.path().join("records");
    let out = run(&["solve", "--scenario", &scen, "--schemes", "all", "--seed", "0", "--records", rec.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 5);
    for label in ["discrete-ris", "continuous-ris", "random-ris", "relaxed-qos", "relaxed-mse"] {
        assert!(text.contains(label));
        assert!(rec.join(format!("{label}-seed0.csv")).exists());
    }
}

#[test]
fn sweep_then_plot_reproduces_the_image() {
    let dir = tempfile::tempdir().unwrap();
    let scen = small_scenario(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "sweep", "--scenario", &scen, "--sweep", "power_budget_dbm", "--grid", "20,23", "--trials", "2", "--seed", "3",
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = out_dir.join("power_budget_dbm.csv");
    let svg = out_dir.join("power_budget_dbm.svg");
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.starts_with("sweep_value,scheme,mean_rate,std_err,mean_iters"));
    assert_eq!(table.lines().count(), 1 + 2 * 2);
    let first = std::fs::read(&svg).unwrap();

    let replot = dir.path().join("replot");
    let out = run(&["plot", "--input", csv.to_str().unwrap(), "--out", replot.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(std::fs::read(replot.join("power_budget_dbm.svg")).unwrap(), first);
}

#[test]
fn failures_exit_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    // literal defaults at -80 dBm leave no feasible point
    let out = run(&["solve", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out.stderr.is_empty());

    let out = run(&["solve", "--scenario", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let scen = small_scenario(dir.path());
    let out = run(&["sweep", "--scenario", &scen, "--sweep", "weight_lambda", "--grid", "0.5", "--trials", "1", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["sweep", "--sweep", "weight_lambda", "--grid", "0.7,0.2", "--trials", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("increasing"));
}
