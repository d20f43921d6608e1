use std::path::Path;
use std::process::Command;

use miopf::bench::parse_results_csv;
use miopf::cli::{run, EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE};
use miopf::{bundled, serialize_case, Method};

fn invoke(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("miopf").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn solve_with_explicit_weights_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let (code, stdout, _) = invoke(&[
        "solve",
        "--case",
        "case3_congested",
        "--method",
        "deflation",
        "--w1",
        "1e10",
        "--w2",
        "1e6",
        "--w3",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(stdout.contains("feasible    true"));
    assert!(stdout.contains("curtailment"));
    let rows = parse_results_csv(&std::fs::read(out.join("results.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].method, Method::Deflation);
    assert!(out.join("trajectory_case3_congested_deflation.csv").exists());
    let sol: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("solution.json")).unwrap()).unwrap();
    assert_eq!(sol["feasible"], true);
    assert_eq!(sol["assignment"].as_array().unwrap().len(), 2);
}

#[test]
fn infeasible_case_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = bundled::get("case3_congested").unwrap();
    for b in c.buses.iter_mut().skip(1) {
        b.v_min = 0.5;
        b.v_max = 0.6;
    }
    let path = write(dir.path(), "tight.json", &serialize_case(&c));
    let (code, stdout, _) = invoke(&["solve", "--case", &path, "--method", "two-step"]);
    assert_eq!(code, EXIT_INFEASIBLE);
    assert!(stdout.contains("feasible    false"));
}

#[test]
fn validate_lists_every_field_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: serde_json::Value = serde_json::from_str(bundled::text("case3_congested").unwrap()).unwrap();
    v["branches"][0]["s_max"] = serde_json::json!(0.0);
    v["step_gens"][0]["steps"] = serde_json::json!([0.0, 18.0, 9.0, 30.0]);
    let path = write(dir.path(), "bad.json", &v.to_string());
    let (code, _, stderr) = invoke(&["validate", "--case", &path]);
    assert_eq!(code, EXIT_USAGE);
    assert!(stderr.contains("2 problem(s)"), "{stderr}");
    assert!(stderr.contains("branches[0]") && stderr.contains("step_gens[0]"), "{stderr}");

    let path = write(dir.path(), "syntax.json", r#"{"base_mva": "high"}"#);
    let (code, _, stderr) = invoke(&["validate", "--case", &path]);
    assert_eq!(code, EXIT_USAGE);
    assert!(stderr.contains("base_mva"), "{stderr}");

    let (code, stdout, _) = invoke(&["validate", "--case", "case30"]);
    assert_eq!(code, EXIT_OK);
    assert!(stdout.starts_with("valid: 30 buses"));
}

#[test]
fn usage_errors_exit_two() {
    let (code, _, stderr) = invoke(&["solve", "--case", "case3", "--bogus"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(stderr.contains("Usage"));
    let (code, _, _) = invoke(&["solve", "--case", "case3", "--method", "greedy"]);
    assert_eq!(code, EXIT_USAGE);
    let (code, _, stderr) = invoke(&["solve", "--case", "/no/such/case.json"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(stderr.contains("/no/such/case.json"));
    let (code, _, _) = invoke(&["solve", "--case", "case3", "--w1", "-5"]);
    assert_eq!(code, EXIT_USAGE);
    let (code, _, _) = invoke(&[]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn oracle_guard_refuses_through_the_cli() {
    // Nine four-step devices give 4⁹ = 262 144 combinations.
    let mut c = bundled::get("case3_congested").unwrap();
    let g = c.step_gens[1].clone();
    c.step_gens = vec![g; 9];
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "nine.json", &serialize_case(&c));
    let (code, _, stderr) = invoke(&["solve", "--case", &path, "--method", "oracle"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(stderr.contains("262144") && stderr.contains("--max-combos"), "{stderr}");

    // Eight devices give 65 536, under the default limit but over a lowered one.
    c.step_gens.truncate(8);
    let path = write(dir.path(), "eight.json", &serialize_case(&c));
    let (code, _, stderr) = invoke(&["solve", "--case", &path, "--method", "oracle", "--max-combos", "1000"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(stderr.contains("65536"), "{stderr}");
}

#[test]
fn solve_on_generated_scenario() {
    let (code, stdout, _) = invoke(&["solve", "--case", "case4", "--seed", "1", "--method", "two-step"]);
    assert_eq!(code, EXIT_OK);
    assert!(stdout.starts_with("case        case4-k2-s1"));
}

#[test]
fn bench_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"cases": ["case3_congested"], "scenarios": [{"base": "case4", "seed": 1, "n_stepwise": 2, "congestion_factor": 2.0}]}"#,
    );
    let out = dir.path().join("out");
    let (code, stdout, _) = invoke(&["bench", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{stdout}");
    let rows = parse_results_csv(&std::fs::read(out.join("results.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 6);
    let ratio = std::fs::read_to_string(out.join("ratio.csv")).unwrap();
    assert!(ratio.starts_with("scenario,n_stepwise,ratio\n"));
    assert_eq!(ratio.lines().count(), 3);
    for m in Method::ALL {
        assert!(out.join(format!("trajectory_case4-k2-s1_{m}.csv")).exists());
    }

    let (code, _, stderr) = invoke(&["bench", "--config", "/no/such/config.json"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(!stderr.is_empty());
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_miopf");
    let ok = Command::new(bin).args(["validate", "--case", "case4"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(EXIT_OK));
    let bad = Command::new(bin).args(["frobnicate"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("Usage"));
}
