//! Seeded congestion scenarios built from a base case.
//!
//! Every controllable generator of the base case (its `cont_gens`) gets an
//! availability drawn around a common wind level, scaled by the congestion
//! factor. Loads are scaled by a common draw with per-bus jitter. The first
//! `n_stepwise` controllable generators become stepwise devices whose steps
//! are fractions of their feed-in.

use miopf_core::{
    injections_from_dispatch, solve_power_flow, violation_metrics, GridCase, PfError, StepGen,
    ValidationErrors, ViolationReport, VoltageState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::case_file::{load_case, CaseError};

pub const DEFAULT_STEP_FRACTIONS: [f64; 4] = [0.0, 0.3, 0.6, 1.0];
const MAX_CONGESTION_FACTOR: f64 = 10.0;

fn default_step_fractions() -> Vec<f64> {
    DEFAULT_STEP_FRACTIONS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    /// Bundled case name or case-file path.
    pub base: String,
    pub seed: u64,
    pub n_stepwise: usize,
    pub congestion_factor: f64,
    #[serde(default = "default_step_fractions")]
    pub step_fractions: Vec<f64>,
}

impl ScenarioSpec {
    pub fn new(base: impl Into<String>, seed: u64, n_stepwise: usize, congestion_factor: f64) -> Self {
        Self {
            base: base.into(),
            seed,
            n_stepwise,
            congestion_factor,
            step_fractions: default_step_fractions(),
        }
    }

    /// Short identifier used in report rows and file names.
    pub fn id(&self) -> String {
        let stem = std::path::Path::new(&self.base)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.base.clone());
        format!("{stem}-k{}-s{}", self.n_stepwise, self.seed)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("base case: {0}")]
    Case(#[from] CaseError),
    #[error("n_stepwise = {requested} exceeds the {available} controllable generators")]
    TooManyStepwise { requested: usize, available: usize },
    #[error("congestion_factor must lie in (0, {MAX_CONGESTION_FACTOR}], got {0}")]
    BadFactor(f64),
    #[error("step fractions must ascend strictly within [0, 1] and end at 1")]
    BadFractions,
    #[error("no congestion: the uncontrolled power flow violates no limit")]
    NoCongestion,
    #[error("uncontrolled power flow: {0}")]
    PowerFlow(#[from] PfError),
    #[error("uncontrolled power flow did not converge")]
    Diverged,
    #[error("generated case is invalid:\n{0}")]
    Invalid(#[from] ValidationErrors),
}

fn check_fractions(f: &[f64]) -> bool {
    f.len() >= 2
        && f.windows(2).all(|w| w[0] < w[1])
        && f[0] >= 0.0
        && f.last() == Some(&1.0)
}

/// Builds the scenario case without the congestion filter.
pub fn build_scenario(spec: &ScenarioSpec) -> Result<GridCase, ScenarioError> {
    let f = spec.congestion_factor;
    if !(f > 0.0 && f <= MAX_CONGESTION_FACTOR) {
        return Err(ScenarioError::BadFactor(f));
    }
    if !check_fractions(&spec.step_fractions) {
        return Err(ScenarioError::BadFractions);
    }
    let mut case = load_case(&spec.base)?;
    let available = case.cont_gens.len();
    if spec.n_stepwise > available {
        return Err(ScenarioError::TooManyStepwise {
            requested: spec.n_stepwise,
            available,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let level: f64 = rng.random_range(0.75..1.0);
    for g in &mut case.cont_gens {
        let avail = (level + rng.random_range(-0.1..0.1)).clamp(0.05, 1.0);
        let p = g.p_max * avail * f;
        g.p_act = p;
        g.p_min = 0.0;
        g.p_max = p;
    }
    let load_scale: f64 = rng.random_range(0.3..0.7);
    for b in &mut case.buses {
        let s = load_scale * rng.random_range(0.9..1.1);
        b.p_load *= s;
        b.q_load *= s;
    }

    let stepwise: Vec<StepGen> = case
        .cont_gens
        .drain(..spec.n_stepwise)
        .map(|g| StepGen {
            bus: g.bus,
            p_act: g.p_act,
            steps: spec.step_fractions.iter().map(|fr| fr * g.p_act).collect(),
            alpha: g.alpha,
        })
        .collect();
    case.step_gens.extend(stepwise);
    case.validate()?;
    Ok(case)
}

/// Violations of the case with every generator at its feed-in.
pub fn uncontrolled_violations(case: &GridCase) -> Result<ViolationReport, ScenarioError> {
    let cont: Vec<f64> = case.cont_gens.iter().map(|g| g.p_act).collect();
    let step: Vec<f64> = case.step_gens.iter().map(|g| g.p_act).collect();
    let inj = injections_from_dispatch(case, &cont, &step)?;
    let pf = solve_power_flow(case, &inj, &VoltageState::flat(case.num_buses()))?;
    if !pf.converged {
        return Err(ScenarioError::Diverged);
    }
    Ok(violation_metrics(case, &pf)?)
}

/// Builds the scenario and keeps it only when the uncontrolled operating
/// point is congested.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<GridCase, ScenarioError> {
    let case = build_scenario(spec)?;
    match uncontrolled_violations(&case) {
        Ok(rep) if rep.is_clean() => Err(ScenarioError::NoCongestion),
        Ok(_) | Err(ScenarioError::Diverged) => Ok(case),
        Err(e) => Err(e),
    }
}
