use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const PUT: &str = r#"{"type":"put","K":100,"r":0.05}"#;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robust-american")).args(args).env_remove("RA_THREADS").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

#[test]
fn filtration_demo_prints_its_value() {
    let o = run(&["demo", "sec52"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("Phi = Psi = 3.600000"), "{text}");
    assert!(text.contains("published hedge: feasible = true, cost = 3.600000"), "{text}");
    assert!(text.trim_end().ends_with("PASS"));
}

#[test]
fn timing_demo_prints_its_value() {
    let o = run(&["demo", "eg11"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("34.000000"), "{text}");
    assert!(text.contains("(seed model): 32.000000"), "{text}");
}

#[test]
fn demo_json_is_structured() {
    let o = run(&["demo", "sec26", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["phi"].as_f64(), Some(35.625));
    assert_eq!(v["passed"], Value::Bool(true));
}

#[test]
fn malformed_json_is_a_parse_error_with_a_location() {
    let dir = scratch("malformed");
    let bad = dir.join("surface.json");
    fs::write(&bad, "{\"s0\": 100,\n \"strikes\": [70, 80,\n").unwrap();
    let o = run(&["bound", "--input", bad.to_str().unwrap(), "--payoff", PUT]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
}

#[test]
fn arbitrage_is_a_validation_error() {
    let dir = scratch("arbitrage");
    let bad = dir.join("surface.json");
    // the call at 70 costs more than the stock
    fs::write(&bad, r#"{"s0": 100, "strikes": [70, 80], "maturities": [1], "calls": [[101], [20]]}"#).unwrap();
    for args in [vec!["validate", "--input"], vec!["bound", "--payoff", PUT, "--input"]] {
        let mut args = args.clone();
        args.push(bad.to_str().unwrap());
        let o = run(&args);
        assert_eq!(o.status.code(), Some(3), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn valid_surface_validates() {
    let o = run(&["validate", "--input", fixture("quarterly_bs.json").to_str().unwrap(), "--mode", "strict"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["status"], "strictly-valid");
}

#[test]
fn bound_output_is_deterministic_and_complete() {
    let input = fixture("quarterly_bs.json");
    let args = ["bound", "--input", input.to_str().unwrap(), "--payoff", PUT];
    let (a, b) = (run(&args), run(&args));
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    for key in ["phi", "psi", "gap", "variant", "model", "hedge", "diagnostics"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!((v["phi"].as_f64().unwrap() - 7.66).abs() < 0.01);
    assert_eq!(v["variant"], "extended");
}

#[test]
fn certify_passes_and_repeats_byte_for_byte() {
    let input = fixture("quarterly_bs.json");
    let args =
        ["certify", "--input", input.to_str().unwrap(), "--payoff", PUT, "--trials", "5000", "--paths", "100000", "--seed", "3"];
    let (a, b) = (run(&args), run(&args));
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["passed"], Value::Bool(true));
    assert_eq!(v["verification"].as_array().unwrap().len(), 4);
    assert!(v["verification"][0].get("elapsed").is_none());
}

#[test]
fn grid_payoff_on_direct_marginals() {
    let payoff = r#"{"type":"grid","values":[[0,0],[1,0],[0,0],[0,0],[0,8]]}"#;
    let input = fixture("two_period_marginals.json");
    let o = run(&["bound", "--input", input.to_str().unwrap(), "--payoff", payoff]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!((json(&o)["phi"].as_f64().unwrap() - 3.6).abs() < 1e-8);
}

#[test]
fn example_payoff_needs_no_surface() {
    let o = run(&["bound", "--payoff", r#"{"type":"example","name":"sec26"}"#]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!((json(&o)["phi"].as_f64().unwrap() - 35.625).abs() < 1e-8);
}

#[test]
fn unknown_example_is_a_parse_error() {
    let o = run(&["bound", "--payoff", r#"{"type":"example","name":"nope"}"#]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn simulate_reports_an_estimate() {
    let o = run(&["simulate", "--payoff", r#"{"type":"example","name":"sec26"}"#, "--trials", "200000", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&o);
    let (est, se) = (v["estimate"].as_f64().unwrap(), v["stderr"].as_f64().unwrap());
    assert!((est - 35.625).abs() <= 3.0 * se, "{est} +- {se}");
    assert_eq!(v["paths"], 200_000);
}

#[test]
fn lp_dumps_are_written() {
    let dir = scratch("dump");
    let o = run(&["bound", "--payoff", r#"{"type":"example","name":"sec52"}"#, "--dump-lp", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["pricing.lp", "hedging.lp"] {
        let text = fs::read_to_string(dir.join(name)).unwrap();
        assert!(!text.is_empty());
    }
}

#[test]
fn bad_thread_count_is_a_parse_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_robust-american")).args(["demo", "sec52"]).env("RA_THREADS", "many").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_a_parse_error() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = scratch("unwritable");
    let target = dir.join("missing").join("out.json");
    let o = run(&["demo", "sec52", "--out", target.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn premium_table_csv_matches_the_schema() {
    let dir = scratch("bench");
    let out = dir.join("moneyness.csv");
    let o = run(&["bench-table", "--table", "moneyness", "--steps", "200", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(&out).unwrap();
    let header = fs::read_to_string(fixture("premium_moneyness_header.csv")).unwrap();
    assert_eq!(csv.lines().next(), header.lines().next());
    assert_eq!(csv.lines().count(), 6);
    let sidecar: Value = serde_json::from_str(&fs::read_to_string(dir.join("moneyness.json")).unwrap()).unwrap();
    assert_eq!(sidecar["rows"].as_array().unwrap().len(), 5);
    assert_eq!(sidecar["configs"][0]["steps"], 200);
}

#[test]
fn mesh_table_header_matches_the_schema() {
    let o = run(&["bench-table", "--table", "mesh", "--steps", "200", "--max-maturities", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let header = fs::read_to_string(fixture("premium_mesh_header.csv")).unwrap();
    let text = stdout(&o);
    assert_eq!(text.lines().next(), header.lines().next());
    // the single-strike row has no interval
    assert!(text.lines().nth(1).unwrap().starts_with("2,100.0,100.0,-,"), "{text}");
}
