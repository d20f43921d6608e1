//! Strategies that turn the relaxed OPF into a discrete assignment of steps.
//!
//! * [`run_two_step`]: solve the full relaxation, round every stepwise device
//!   down to the nearest step, re-solve with the steps fixed.
//! * [`run_deflation`]: repeatedly solve the relaxation over the remaining
//!   candidates, score every open candidate with a power flow and drop the
//!   worst one, until each device has a single step left.
//! * [`run_oracle`]: solve the fixed problem for every combination of steps.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::grid::GridCase;
use crate::opf::{build_relaxed_problem, curtailment_mw, solve_nlp, CandidateSet, OpfError, RelaxedSolution, Weights};
use crate::powerflow::{injections_from_dispatch, solve_power_flow, violation_metrics, PfError};

/// Largest enumeration `run_oracle` accepts unless told otherwise.
pub const DEFAULT_MAX_COMBOS: u64 = 100_000;

/// Relaxed step values within this many MW above a step still round to it.
const ROUND_TOL_MW: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StrategyError {
    #[error(transparent)]
    Opf(#[from] OpfError),
    #[error(transparent)]
    PowerFlow(#[from] PfError),
    #[error("{combos} step combinations exceed the oracle limit of {limit}")]
    TooManyCombinations { combos: u64, limit: u64 },
    #[error("weights must be finite and non-negative")]
    InvalidWeights,
    #[error("no evaluation records to select from")]
    EmptyRecords,
    #[error("relaxed solution is not optimal")]
    NotOptimal,
    #[error("step {step} is not a remaining candidate of device {device}")]
    NotACandidate { device: usize, step: usize },
}

/// Chosen step index (0-based) per stepwise device.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn steps_mw(&self, case: &GridCase) -> Vec<f64> {
        case.step_gens.iter().zip(&self.0).map(|(g, &l)| g.steps[l]).collect()
    }
}

/// Power-flow based evaluation of one candidate step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationRecord {
    pub device: usize,
    pub step: usize,
    /// Squared voltage band violation, V².
    pub volt_sq: f64,
    /// Squared loading violation, kW².
    pub load_sq: f64,
    /// Curtailment of the trial dispatch, kW.
    pub objective: f64,
    /// `w1 · volt_sq + w2 · load_sq + w3 · objective`, or `+∞` when the trial
    /// power flow failed.
    pub score: f64,
    pub pf_failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyResult {
    pub assignment: Option<Assignment>,
    /// Solution with every device fixed.
    pub final_solution: Option<RelaxedSolution>,
    /// Total curtailment in MW, `+∞` when no feasible assignment was found.
    pub objective: f64,
    pub feasible: bool,
    pub nlp_solve_count: usize,
    pub power_flow_count: usize,
    /// Objective after each relaxed solve (deflation, two-step) or the best
    /// objective so far (oracle), MW.
    pub trajectory: Vec<f64>,
    /// Removed `(device, step)` pairs in order.
    pub removals: Vec<(usize, usize)>,
    /// Open candidates scored in each deflation iteration.
    pub evaluations_per_iteration: Vec<usize>,
    /// Extra solves caused by infeasible removals or warm-start fallbacks.
    pub retries: usize,
    /// Filled in by callers that time the run.
    pub wall_time_s: Option<f64>,
}

impl StrategyResult {
    fn empty() -> Self {
        Self {
            assignment: None,
            final_solution: None,
            objective: f64::INFINITY,
            feasible: false,
            nlp_solve_count: 0,
            power_flow_count: 0,
            trajectory: Vec::new(),
            removals: Vec::new(),
            evaluations_per_iteration: Vec::new(),
            retries: 0,
            wall_time_s: None,
        }
    }

    /// Relaxed objective of the first solve, when there was one.
    pub fn relaxed_objective(&self) -> Option<f64> {
        self.trajectory.first().copied()
    }

    fn finish(&mut self, assignment: Vec<usize>, sol: RelaxedSolution) {
        self.feasible = sol.is_optimal();
        self.objective = if self.feasible { sol.objective } else { f64::INFINITY };
        self.assignment = Some(Assignment(assignment));
        self.final_solution = Some(sol);
    }
}

/// Solves over `cand`, retrying once from the flat point when a warm start
/// does not reach optimality. Returns the solution and the number of solves.
fn solve_candidates(
    case: &GridCase,
    cand: &CandidateSet,
    warm: Option<&RelaxedSolution>,
) -> Result<(RelaxedSolution, usize), OpfError> {
    let prob = build_relaxed_problem(case, cand)?;
    let sol = solve_nlp(&prob, warm);
    if sol.is_optimal() || warm.is_none() {
        return Ok((sol, 1));
    }
    Ok((solve_nlp(&prob, None), 2))
}

/// Index of the largest step not above `value`; the lowest step when `value`
/// lies below all of them.
pub fn round_down(steps: &[f64], value: f64) -> usize {
    steps.iter().rposition(|&s| s <= value + ROUND_TOL_MW).unwrap_or(0)
}

pub fn run_two_step(case: &GridCase) -> Result<StrategyResult, StrategyError> {
    let mut res = StrategyResult::empty();
    let (relaxed, n1) = solve_candidates(case, &CandidateSet::full(case), None)?;
    res.nlp_solve_count += n1;
    if !relaxed.is_optimal() {
        res.final_solution = Some(relaxed);
        return Ok(res);
    }
    res.trajectory.push(relaxed.objective);

    let assignment: Vec<usize> = case
        .step_gens
        .iter()
        .zip(&relaxed.step_equiv)
        .map(|(g, &p)| round_down(&g.steps, p))
        .collect();
    let (fixed, n2) = solve_candidates(case, &CandidateSet::fixed(&assignment), Some(&relaxed))?;
    res.nlp_solve_count += n2;
    res.retries += n2 - 1;
    if fixed.is_optimal() {
        res.trajectory.push(fixed.objective);
    }
    res.finish(assignment, fixed);
    Ok(res)
}

pub fn run_deflation(case: &GridCase, w: &Weights) -> Result<StrategyResult, StrategyError> {
    if !w.is_valid() {
        return Err(StrategyError::InvalidWeights);
    }
    let mut res = StrategyResult::empty();
    let mut cand = CandidateSet::full(case);
    let (mut sol, n) = solve_candidates(case, &cand, None)?;
    res.nlp_solve_count += n;
    if !sol.is_optimal() {
        res.final_solution = Some(sol);
        return Ok(res);
    }
    res.trajectory.push(sol.objective);

    loop {
        if let Some(assignment) = cand.assignment() {
            res.finish(assignment, sol);
            return Ok(res);
        }
        let mut records = Vec::with_capacity(cand.open_candidates());
        for (k, c) in cand.per_device.iter().enumerate() {
            if c.len() > 1 {
                for &l in c {
                    records.push(evaluate_candidate(case, &sol, k, l, w)?);
                }
            }
        }
        res.power_flow_count += records.len();
        res.evaluations_per_iteration.push(records.len());

        let mut next = None;
        for (k, l) in ranking(&records) {
            cand.remove(k, l);
            let (trial, n) = solve_candidates(case, &cand, Some(&sol))?;
            res.nlp_solve_count += n;
            res.retries += n - 1;
            if trial.is_optimal() {
                res.removals.push((k, l));
                next = Some(trial);
                break;
            }
            cand.restore(k, l);
            res.retries += 1;
        }
        match next {
            Some(s) => {
                res.trajectory.push(s.objective);
                sol = s;
            }
            None => {
                res.final_solution = Some(sol);
                return Ok(res);
            }
        }
    }
}

/// Runs a power flow with device `k` at step `l`, the other stepwise devices
/// at their relaxed equivalents and continuous generators at the relaxed
/// dispatch, and scores the outcome.
pub fn evaluate_candidate(
    case: &GridCase,
    sol: &RelaxedSolution,
    k: usize,
    l: usize,
    w: &Weights,
) -> Result<EvaluationRecord, StrategyError> {
    if !sol.is_optimal() {
        return Err(StrategyError::NotOptimal);
    }
    if !sol.candidates.per_device.get(k).is_some_and(|c| c.contains(&l)) {
        return Err(StrategyError::NotACandidate { device: k, step: l });
    }
    let mut step_p = sol.step_equiv.clone();
    step_p[k] = case.step_gens[k].steps[l];
    let objective = 1000.0 * curtailment_mw(case, &sol.cont_p, &step_p);
    let failed = EvaluationRecord {
        device: k,
        step: l,
        volt_sq: f64::INFINITY,
        load_sq: f64::INFINITY,
        objective,
        score: f64::INFINITY,
        pf_failed: true,
    };
    let inj = injections_from_dispatch(case, &sol.cont_p, &step_p)?;
    let pf = match solve_power_flow(case, &inj, &sol.state) {
        Ok(pf) if pf.converged => pf,
        Ok(_) | Err(PfError::SingularJacobian { .. }) => return Ok(failed),
        Err(e) => return Err(e.into()),
    };
    let rep = violation_metrics(case, &pf)?;
    Ok(EvaluationRecord {
        device: k,
        step: l,
        volt_sq: rep.volt_sq,
        load_sq: rep.load_sq,
        objective,
        score: w.w1 * rep.volt_sq + w.w2 * rep.load_sq + w.w3 * objective,
        pf_failed: false,
    })
}

fn score_key(r: &EvaluationRecord) -> f64 {
    if r.score.is_nan() {
        f64::INFINITY
    } else {
        r.score
    }
}

/// Worst first: descending score, ties by ascending device then step.
fn compare(a: &EvaluationRecord, b: &EvaluationRecord) -> Ordering {
    score_key(b)
        .total_cmp(&score_key(a))
        .then(a.device.cmp(&b.device))
        .then(a.step.cmp(&b.step))
}

fn ranking(records: &[EvaluationRecord]) -> Vec<(usize, usize)> {
    let mut sorted = records.to_vec();
    sorted.sort_by(compare);
    sorted.into_iter().map(|r| (r.device, r.step)).collect()
}

/// The candidate to remove: highest score, ties to the smallest device and step.
pub fn select_removal(records: &[EvaluationRecord]) -> Result<(usize, usize), StrategyError> {
    records
        .iter()
        .min_by(|a, b| compare(a, b))
        .map(|r| (r.device, r.step))
        .ok_or(StrategyError::EmptyRecords)
}

/// Number of step combinations, saturating at `u64::MAX`.
pub fn combination_count(case: &GridCase) -> u64 {
    case.step_gens
        .iter()
        .fold(1u64, |acc, g| acc.saturating_mul(g.steps.len() as u64))
}

pub fn run_oracle(case: &GridCase, max_combos: u64) -> Result<StrategyResult, StrategyError> {
    let combos = combination_count(case);
    if combos > max_combos {
        return Err(StrategyError::TooManyCombinations {
            combos,
            limit: max_combos,
        });
    }
    let counts = case.step_counts();
    let mut res = StrategyResult::empty();
    let mut idx = vec![0usize; counts.len()];
    let mut best: Option<(Vec<usize>, RelaxedSolution)> = None;
    loop {
        let prob = build_relaxed_problem(case, &CandidateSet::fixed(&idx))?;
        let sol = solve_nlp(&prob, None);
        res.nlp_solve_count += 1;
        if sol.is_optimal() && best.as_ref().is_none_or(|(_, b)| sol.objective < b.objective) {
            best = Some((idx.clone(), sol));
        }
        if let Some((_, b)) = &best {
            res.trajectory.push(b.objective);
        }
        // Odometer over step indices, last device fastest.
        let mut d = counts.len();
        loop {
            if d == 0 {
                match best {
                    Some((a, s)) => res.finish(a, s),
                    None => res.assignment = None,
                }
                return Ok(res);
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < counts[d] {
                break;
            }
            idx[d] = 0;
        }
    }
}
