mod common;

use common::*;
use miopf_core::opf::build_relaxed_problem;
use miopf_core::*;

/// Chain with `k` stepwise devices (L = 4) on the weak line.
fn chain_with_devices(k: usize) -> GridCase {
    let mut c = congested3();
    let sizes = [30.0, 20.0, 12.0];
    c.step_gens = sizes[..k].iter().map(|&p| stepped(3, &quarter_steps(p), 0.0)).collect();
    c
}

/// Candidates on non-singleton devices at each iteration, replayed from the
/// removal order.
fn replayed_power_flows(case: &GridCase, removals: &[(usize, usize)]) -> (usize, Vec<usize>) {
    let mut cand = CandidateSet::full(case);
    let mut per_iter = Vec::new();
    for &(k, l) in removals {
        per_iter.push(
            cand.per_device
                .iter()
                .filter(|c| c.len() > 1)
                .map(|c| c.len())
                .sum(),
        );
        assert!(cand.remove(k, l));
    }
    assert!(cand.all_singleton());
    (per_iter.iter().sum(), per_iter)
}

#[test]
fn deflation_count_laws() {
    for k in 1..=3 {
        let case = chain_with_devices(k);
        let r = run_deflation(&case, &Weights::default()).unwrap();
        assert!(r.feasible, "K={k}");
        assert_eq!(r.retries, 0);
        let total_steps: usize = case.step_counts().iter().sum();
        assert_eq!(r.removals.len(), total_steps - k);
        assert_eq!(r.nlp_solve_count, total_steps - k + 1, "K={k}");
        let (pf, per_iter) = replayed_power_flows(&case, &r.removals);
        assert_eq!(r.power_flow_count, pf, "K={k}");
        assert_eq!(r.evaluations_per_iteration, per_iter);
        assert_eq!(r.trajectory.len(), r.nlp_solve_count);
    }
}

#[test]
fn two_step_devices_with_two_steps() {
    let mut c = congested3();
    c.step_gens = vec![stepped(3, &[0.0, 30.0], 0.0)];
    let r = run_deflation(&c, &Weights::default()).unwrap();
    assert_eq!((r.removals.len(), r.nlp_solve_count), (1, 2));
    assert_eq!(r.power_flow_count, 2);
}

#[test]
fn two_step_on_uncongested_case_keeps_top_steps() {
    let c = loose3();
    let r = run_two_step(&c).unwrap();
    assert!(r.feasible);
    assert_eq!(r.nlp_solve_count, 2);
    assert_eq!(r.assignment.unwrap().0, vec![3, 3]);
    assert!(r.objective.abs() < 1e-6);
}

#[test]
fn two_step_rounds_the_relaxation_down() {
    let c = congested3();
    let r = run_two_step(&c).unwrap();
    let relaxed = solve_nlp(&build_relaxed_problem(&c, &CandidateSet::full(&c)).unwrap(), None);
    let expected: Vec<usize> = c
        .step_gens
        .iter()
        .zip(&relaxed.step_equiv)
        .map(|(g, &p)| g.steps.iter().rposition(|&s| s <= p + 1e-6).unwrap_or(0))
        .collect();
    assert_eq!(r.assignment.unwrap().0, expected);
    assert!((r.trajectory[0] - relaxed.objective).abs() < 1e-6);
}

#[test]
fn deflation_starts_at_the_two_step_relaxation() {
    for k in 1..=3 {
        let c = chain_with_devices(k);
        let d = run_deflation(&c, &Weights::default()).unwrap();
        let t = run_two_step(&c).unwrap();
        assert!((d.trajectory[0] - t.trajectory[0]).abs() <= 1e-6);
        for w in d.trajectory.windows(2) {
            assert!(w[1] >= w[0] - 1e-6 * w[0].abs().max(1.0), "{:?}", d.trajectory);
        }
    }
}

#[test]
fn oracle_enumerates_every_combination() {
    let c = congested3();
    let r = run_oracle(&c, DEFAULT_MAX_COMBOS).unwrap();
    assert_eq!(r.nlp_solve_count, 16);
    assert!(r.feasible);
    for w in r.trajectory.windows(2) {
        assert!(w[1] <= w[0]);
    }
}

#[test]
fn oracle_with_one_device_is_the_best_fixed_solve() {
    let c = chain_with_devices(1);
    let r = run_oracle(&c, DEFAULT_MAX_COMBOS).unwrap();
    let best = (0..4)
        .filter_map(|l| {
            let s = solve_nlp(&build_relaxed_problem(&c, &CandidateSet::fixed(&[l])).unwrap(), None);
            s.is_optimal().then_some((s.objective, l))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap();
    assert_eq!(r.assignment.unwrap().0, vec![best.1]);
    assert!((r.objective - best.0).abs() < 1e-9);
}

#[test]
fn oracle_on_uncongested_case() {
    let r = run_oracle(&loose3(), DEFAULT_MAX_COMBOS).unwrap();
    assert_eq!(r.assignment.unwrap().0, vec![3, 3]);
    assert!(r.objective.abs() < 1e-6);
}

#[test]
fn oracle_guard_refuses_large_enumerations() {
    let mut c = congested3();
    c.step_gens = (0..9).map(|_| stepped(3, &quarter_steps(2.0), 0.0)).collect();
    assert_eq!(
        run_oracle(&c, DEFAULT_MAX_COMBOS).unwrap_err(),
        StrategyError::TooManyCombinations {
            combos: 262_144,
            limit: DEFAULT_MAX_COMBOS
        }
    );
    assert!(matches!(run_oracle(&congested3(), 15), Err(StrategyError::TooManyCombinations { .. })));
}

#[test]
fn oracle_reports_infeasible_when_nothing_fits() {
    let mut c = congested3();
    c.branches[1].s_max = 1.0;
    c.step_gens = vec![stepped(3, &[5.0, 30.0], 0.0)];
    let r = run_oracle(&c, DEFAULT_MAX_COMBOS).unwrap();
    assert!(!r.feasible);
    assert!(r.objective.is_infinite());
}

#[test]
fn oracle_bounds_both_heuristics() {
    for k in 1..=3 {
        let c = chain_with_devices(k);
        let o = run_oracle(&c, DEFAULT_MAX_COMBOS).unwrap();
        let d = run_deflation(&c, &Weights::default()).unwrap();
        let t = run_two_step(&c).unwrap();
        assert!(o.objective <= d.objective + 1e-6 && o.objective <= t.objective + 1e-6);
        assert!(d.trajectory[0] <= o.objective + 1e-4);
    }
}

#[test]
fn runs_are_deterministic() {
    let c = chain_with_devices(3);
    let a = run_deflation(&c, &Weights::default()).unwrap();
    let b = run_deflation(&c, &Weights::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn invalid_weights_are_rejected() {
    let w = Weights {
        w1: -1.0,
        ..Weights::default()
    };
    assert_eq!(run_deflation(&congested3(), &w).unwrap_err(), StrategyError::InvalidWeights);
}

#[test]
fn exact_candidate_has_only_objective_score() {
    let c = congested3();
    let prob = build_relaxed_problem(&c, &CandidateSet::fixed(&[2, 1])).unwrap();
    let sol = solve_nlp(&prob, None);
    let w = Weights::default();
    let rec = evaluate_candidate(&c, &sol, 0, 2, &w).unwrap();
    assert!(!rec.pf_failed);
    assert_eq!((rec.volt_sq, rec.load_sq), (0.0, 0.0));
    assert!((rec.objective - 1000.0 * sol.objective).abs() < 1e-6);
    assert_eq!(rec.score, w.w3 * rec.objective);
    assert!(matches!(
        evaluate_candidate(&c, &sol, 0, 3, &w),
        Err(StrategyError::NotACandidate { device: 0, step: 3 })
    ));
}

#[test]
fn violating_candidate_scores_worse() {
    let c = congested3();
    let sol = solve_nlp(&build_relaxed_problem(&c, &CandidateSet::full(&c)).unwrap(), None);
    let w = Weights::default();
    let top = evaluate_candidate(&c, &sol, 0, 3, &w).unwrap();
    let bottom = evaluate_candidate(&c, &sol, 0, 0, &w).unwrap();
    assert!(top.load_sq > 0.0 && bottom.load_sq == 0.0);
    assert!(top.score > bottom.score);
    assert_eq!(select_removal(&[bottom, top]).unwrap(), (0, 3));
}

#[test]
fn score_is_the_weighted_sum() {
    // 0.02 pu above the band at 110 kV with 1000 kW curtailed.
    let w = Weights::default();
    let volt_sq = (0.02_f64 * 110_000.0).powi(2);
    assert!((volt_sq - 4.84e6).abs() < 1e-6);
    let rec = EvaluationRecord {
        device: 0,
        step: 0,
        volt_sq,
        load_sq: 0.0,
        objective: 1000.0,
        score: w.w1 * volt_sq + w.w3 * 1000.0,
        pf_failed: false,
    };
    assert_eq!(rec.score, 1e10 * 4.84e6 + 10.0 * 1000.0);
}
