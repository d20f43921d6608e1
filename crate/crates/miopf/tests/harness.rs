use miopf::bench::{parse_ratio_csv, parse_results_csv, ratio_csv, results_csv, Sweep};
use miopf::scenario::{build_scenario, uncontrolled_violations};
use miopf::*;
use miopf_core::{solve_power_flow, InjectionProfile, VoltageState};

fn small_config() -> BenchConfig {
    BenchConfig {
        cases: vec!["case3_congested".into()],
        sweeps: vec![Sweep {
            base: "case4".into(),
            seeds: vec![1, 2],
            n_stepwise: vec![2],
            congestion_factor: 2.0,
            step_fractions: vec![0.0, 0.3, 0.6, 1.0],
        }],
        ..BenchConfig::default()
    }
}

fn without_wall_time(bytes: &[u8]) -> Vec<BenchRow> {
    let mut rows = parse_results_csv(bytes).unwrap();
    for r in &mut rows {
        r.wall_time_s = 0.0;
    }
    rows
}

#[test]
fn scenarios_are_deterministic_per_seed() {
    let spec = ScenarioSpec::new("case10", 1, 3, 1.6);
    assert_eq!(generate_scenario(&spec).unwrap(), generate_scenario(&spec).unwrap());
    let other = ScenarioSpec { seed: 2, ..spec.clone() };
    assert_ne!(generate_scenario(&spec).unwrap(), generate_scenario(&other).unwrap());
}

#[test]
fn generated_scenarios_are_congested() {
    for spec in BenchConfig::load("dominance".as_ref()).unwrap().expanded_scenarios() {
        let case = generate_scenario(&spec).unwrap();
        assert!(!uncontrolled_violations(&case).unwrap().is_clean(), "{}", spec.id());
        assert_eq!(case.step_gens.len(), spec.n_stepwise);
        for g in &case.step_gens {
            let expected: Vec<f64> = spec.step_fractions.iter().map(|f| f * g.p_act).collect();
            assert_eq!(g.steps, expected);
        }
    }
}

#[test]
fn factor_one_on_uncongested_base_is_rejected() {
    let spec = ScenarioSpec::new("case4", 1, 1, 1.0);
    let err = generate_scenario(&spec).unwrap_err();
    assert!(matches!(err, ScenarioError::NoCongestion));
    assert!(err.to_string().contains("no congestion"));
}

#[test]
fn all_generators_stepwise() {
    let base = bundled::get("case4").unwrap();
    let n = base.cont_gens.len();
    let case = build_scenario(&ScenarioSpec::new("case4", 1, n, 2.0)).unwrap();
    assert!(case.cont_gens.is_empty());
    assert_eq!(case.step_gens.len(), n);
}

#[test]
fn one_scenario_three_methods_three_rows() {
    let cfg = BenchConfig {
        cases: vec!["case3_congested".into()],
        ..BenchConfig::default()
    };
    let rep = run_benchmark(&cfg);
    assert_eq!(rep.rows.len(), 3);
    assert!(rep.failures.is_empty());
    let obj = |m| rep.row("case3_congested", m).unwrap().objective_mw;
    let ratio = rep.ratios[0].ratio;
    assert_eq!(ratio, obj(Method::Deflation) / obj(Method::TwoStep));
    assert!(ratio > 0.0 && ratio <= 1.0);
}

#[test]
fn failing_scenarios_do_not_abort_the_batch() {
    let mut cfg = small_config();
    cfg.cases.push("missing_case".into());
    cfg.scenarios.push(ScenarioSpec::new("case4", 1, 1, 1.0));
    let rep = run_benchmark(&cfg);
    let pairs = 3 * (1 + 2 + 1 + 1);
    assert_eq!(rep.rows.len(), pairs);
    assert_eq!(rep.failures.len(), 6);
    assert!(rep.failures.iter().any(|f| f.error.contains("no congestion")));
    let mut seen: Vec<_> = rep.rows.iter().map(|r| (r.scenario.clone(), r.method)).collect();
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), pairs);
}

#[test]
fn csv_round_trips() {
    let rep = run_benchmark(&small_config());
    assert_eq!(parse_results_csv(&results_csv(&rep.rows).unwrap()).unwrap(), rep.rows);
    let back = parse_ratio_csv(&ratio_csv(&rep.ratios).unwrap()).unwrap();
    assert_eq!(back.len(), rep.ratios.len());
    for (a, b) in back.iter().zip(&rep.ratios) {
        assert_eq!((&a.scenario, a.n_stepwise), (&b.scenario, b.n_stepwise));
        assert!(a.ratio == b.ratio || (a.ratio.is_nan() && b.ratio.is_nan()));
    }
}

#[test]
fn batches_are_reproducible_apart_from_wall_time() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_benchmark(&small_config()).write(d1.path()).unwrap();
    run_benchmark(&small_config()).write(d2.path()).unwrap();
    let r1 = std::fs::read(d1.path().join("results.csv")).unwrap();
    let r2 = std::fs::read(d2.path().join("results.csv")).unwrap();
    assert_eq!(without_wall_time(&r1), without_wall_time(&r2));
    let mut names: Vec<_> = std::fs::read_dir(d1.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in names.iter().filter(|n| n != &"results.csv") {
        assert_eq!(
            std::fs::read(d1.path().join(n)).unwrap(),
            std::fs::read(d2.path().join(n)).unwrap(),
            "{n:?}"
        );
    }
}

#[test]
fn solve_counts_grow_linearly_and_power_flows_faster() {
    let mut cfg = BenchConfig {
        methods: vec![Method::Deflation],
        ..BenchConfig::default()
    };
    cfg.sweeps.push(Sweep {
        base: "case10".into(),
        seeds: vec![2],
        n_stepwise: (1..=6).collect(),
        congestion_factor: 1.6,
        step_fractions: vec![0.0, 0.3, 0.6, 1.0],
    });
    let rep = run_benchmark(&cfg);
    assert!(rep.failures.is_empty(), "{:?}", rep.failures);
    let rows: Vec<_> = rep.rows.iter().filter(|r| r.feasible).collect();
    assert_eq!(rows.len(), 6);
    for (k, r) in (1..).zip(&rows) {
        let o = &rep.outcomes[k - 1];
        let retries = o.results[0].1.as_ref().unwrap().retries;
        assert_eq!(r.nlp_solves, 3 * k + 1 + retries);
    }
    let pf: Vec<usize> = rows.iter().map(|r| r.power_flows).collect();
    let steps: Vec<usize> = pf.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(steps.windows(2).all(|w| w[1] >= w[0]), "{pf:?}");
}

#[test]
fn presets_load_by_name() {
    for name in bundled::preset_names() {
        let cfg = BenchConfig::load(name.as_ref()).unwrap();
        assert!(cfg.expanded_scenarios().len() >= 10);
    }
    assert!(BenchConfig::load("nonexistent-preset".as_ref()).is_err());
}

#[test]
fn bundled_cases_are_well_formed() {
    for name in bundled::names() {
        let case = bundled::get(name).unwrap();
        let y = miopf_core::build_admittance(&case);
        for i in 0..y.dim() {
            for j in 0..y.dim() {
                assert!((y.g[(i, j)] - y.g[(j, i)]).abs() <= 1e-12 && (y.b[(i, j)] - y.b[(j, i)]).abs() <= 1e-12);
            }
        }
        let back = parse_case(&serialize_case(&case)).unwrap();
        assert_eq!(back, case, "{name}");
        let pf = solve_power_flow(&case, &InjectionProfile::zeros(case.num_buses()), &VoltageState::flat(case.num_buses()))
            .unwrap();
        assert!(pf.converged, "{name}");
    }
}
