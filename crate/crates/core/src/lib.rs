//! Mixed-integer AC optimal power flow for grids with stepwise controllable
//! generators.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! parts: the grid data model, a Newton–Raphson power flow, a dense primal-dual
//! interior-point NLP solver, the continuously relaxed OPF and the three
//! strategies that resolve discrete setpoints (two-step rounding, iterative
//! deflation and a brute-force oracle). File formats, scenario generation and
//! the command line live in the `miopf` crate.
#![no_std]

extern crate alloc;

pub mod admittance;
pub mod grid;
pub mod ipm;
pub mod linalg;
pub mod network;
pub mod opf;
pub mod powerflow;
pub mod strategy;

pub use admittance::{build_admittance, AdmittanceMatrix};
pub use grid::{Branch, Bus, ContGen, FieldError, GridCase, StepGen, ValidationErrors};
pub use opf::{
    build_relaxed_problem, extract_dispatch, solve_nlp, CandidateSet, NlpProblem, OpfError,
    RelaxedSolution, SolveStatus, Weights,
};
pub use powerflow::{
    branch_flows, injections_from_dispatch, solve_power_flow, violation_metrics, BranchFlow,
    BranchFlowSet, InjectionProfile, PfError, PowerFlowSolution, ViolationReport, VoltageState,
};
pub use strategy::{
    evaluate_candidate, run_deflation, run_oracle, run_two_step, select_removal, Assignment,
    EvaluationRecord, StrategyError, StrategyResult, DEFAULT_MAX_COMBOS,
};
