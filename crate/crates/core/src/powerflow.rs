//! Newton–Raphson AC power flow, directed branch flows and the constraint
//! violation measures used to score deflation candidates.
//!
//! All non-slack buses are PQ buses. The slack bus keeps the magnitude given
//! in the start state, its angle is the reference (zero) and it absorbs the
//! network imbalance.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::grid::GridCase;
use crate::linalg::{norm_inf, DenseMatrix, Lu};
use crate::network::{Network, SLACK_VOLTAGE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PfError {
    #[error("singular power flow Jacobian at bus {bus}")]
    SingularJacobian { bus: usize },
    #[error("{what}: expected {expected} entries, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("start state must have positive, finite voltage magnitudes")]
    InvalidStart,
    #[error("power flow did not converge")]
    NotConverged,
}

/// Net per-bus injections (generation minus load), per-unit.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionProfile {
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
}

impl InjectionProfile {
    pub fn zeros(n: usize) -> Self {
        Self {
            p_inj: vec![0.0; n],
            q_inj: vec![0.0; n],
        }
    }
}

/// Bus voltage magnitudes (per-unit) and angles (radians).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VoltageState {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
}

impl VoltageState {
    pub fn flat(n: usize) -> Self {
        Self {
            v: vec![1.0; n],
            theta: vec![0.0; n],
        }
    }
}

/// Flows on one branch in both directions, per-unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchFlow {
    pub p_from: f64,
    pub q_from: f64,
    pub s_from: f64,
    pub p_to: f64,
    pub q_to: f64,
    pub s_to: f64,
}

impl BranchFlow {
    /// Larger of the two directed apparent powers.
    pub fn loading(&self) -> f64 {
        self.s_from.max(self.s_to)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchFlowSet {
    pub flows: Vec<BranchFlow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub state: VoltageState,
    pub flows: BranchFlowSet,
    pub converged: bool,
    pub iterations: usize,
    pub mismatch_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFlowOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 30,
        }
    }
}

/// Squared violations in physical units: V² for the voltage band and kW²
/// (of apparent power above rating) for line loading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViolationReport {
    pub volt_sq: f64,
    pub load_sq: f64,
    /// Bus id with the largest band violation.
    pub worst_bus: Option<usize>,
    /// Branch position with the largest overload.
    pub worst_branch: Option<usize>,
}

impl ViolationReport {
    pub fn is_clean(&self) -> bool {
        self.volt_sq == 0.0 && self.load_sq == 0.0
    }
}

pub fn solve_power_flow(
    case: &GridCase,
    inj: &InjectionProfile,
    start: &VoltageState,
) -> Result<PowerFlowSolution, PfError> {
    solve_power_flow_with(case, inj, start, &PowerFlowOptions::default())
}

pub fn solve_power_flow_with(
    case: &GridCase,
    inj: &InjectionProfile,
    start: &VoltageState,
    opts: &PowerFlowOptions,
) -> Result<PowerFlowSolution, PfError> {
    let net = Network::new(case);
    let n = net.n;
    check_len("p_inj", n, inj.p_inj.len())?;
    check_len("q_inj", n, inj.q_inj.len())?;
    check_len("start.v", n, start.v.len())?;
    check_len("start.theta", n, start.theta.len())?;
    if start.v.iter().any(|v| !(v.is_finite() && *v > 0.0)) || start.theta.iter().any(|t| !t.is_finite()) {
        return Err(PfError::InvalidStart);
    }

    let (th_idx, v_idx) = unknown_layout(&net);
    let pq: Vec<usize> = (0..n).filter(|&m| m != net.slack).collect();
    let dim = 2 * pq.len();
    let mut v = start.v.clone();
    let mut th = start.theta.clone();
    th[net.slack] = 0.0;

    let mut iterations = 0;
    let mut converged = false;
    let mut mismatch_norm;
    loop {
        let (p, q) = net.injections(&v, &th);
        let mut f = Vec::with_capacity(dim);
        for &m in &pq {
            f.push(p[m] - inj.p_inj[m]);
        }
        for &m in &pq {
            f.push(q[m] - inj.q_inj[m]);
        }
        mismatch_norm = norm_inf(&f);
        if !mismatch_norm.is_finite() {
            break;
        }
        if mismatch_norm <= opts.tolerance {
            converged = true;
            break;
        }
        if iterations == opts.max_iterations {
            break;
        }

        let mut jac = DenseMatrix::zeros(dim, dim);
        for (r, &m) in pq.iter().enumerate() {
            net.for_each_injection_term(m, &v, &th, |nb, tp, tq| {
                let idx = [v_idx[m], v_idx[nb], th_idx[m], th_idx[nb]];
                let mut row_p = Vec::new();
                let mut row_q = Vec::new();
                tp.scatter_grad(&idx, 1.0, &mut row_p);
                tq.scatter_grad(&idx, 1.0, &mut row_q);
                for (c, d) in row_p {
                    jac[(r, c)] += d;
                }
                for (c, d) in row_q {
                    jac[(r + pq.len(), c)] += d;
                }
            });
        }
        let lu = Lu::factor(jac, 1e-13).map_err(|s| PfError::SingularJacobian {
            bus: case.buses[pq[s.column % pq.len()]].id,
        })?;
        let neg: Vec<f64> = f.iter().map(|x| -x).collect();
        let dx = lu.solve(&neg);
        for (k, &m) in pq.iter().enumerate() {
            th[m] += dx[k];
            v[m] += dx[pq.len() + k];
        }
        iterations += 1;
    }

    let state = VoltageState { v, theta: th };
    let flows = flows_for(&net, &state);
    Ok(PowerFlowSolution {
        state,
        flows,
        converged,
        iterations,
        mismatch_norm,
    })
}

/// Column layout of the Newton unknowns: angles of PQ buses, then magnitudes.
pub(crate) fn unknown_layout(net: &Network) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
    let mut th_idx = vec![None; net.n];
    let mut v_idx = vec![None; net.n];
    let npq = net.n.saturating_sub(1);
    let mut k = 0;
    for m in 0..net.n {
        if m != net.slack {
            th_idx[m] = Some(k);
            v_idx[m] = Some(npq + k);
            k += 1;
        }
    }
    (th_idx, v_idx)
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), PfError> {
    if expected == got {
        Ok(())
    } else {
        Err(PfError::Dimension { what, expected, got })
    }
}

/// Directed flows `p_mn`, `q_mn` on every branch for a voltage state.
pub fn branch_flows(case: &GridCase, state: &VoltageState) -> BranchFlowSet {
    flows_for(&Network::new(case), state)
}

pub(crate) fn flows_for(net: &Network, state: &VoltageState) -> BranchFlowSet {
    let (v, th) = (&state.v, &state.theta);
    let flows = net
        .branches
        .iter()
        .map(|br| {
            let (f, t) = (br.from, br.to);
            let (pf, qf) = Network::flow_terms(br, v[f], v[t], th[f] - th[t]);
            let (pt, qt) = Network::flow_terms(br, v[t], v[f], th[t] - th[f]);
            BranchFlow {
                p_from: pf.val,
                q_from: qf.val,
                s_from: Float::hypot(pf.val, qf.val),
                p_to: pt.val,
                q_to: qt.val,
                s_to: Float::hypot(pt.val, qt.val),
            }
        })
        .collect();
    BranchFlowSet { flows }
}

/// Squared band and loading violations of a converged solution.
pub fn violation_metrics(case: &GridCase, sol: &PowerFlowSolution) -> Result<ViolationReport, PfError> {
    if !sol.converged {
        return Err(PfError::NotConverged);
    }
    let mut volt_sq = 0.0;
    let mut worst_bus = None;
    let mut worst_v = 0.0;
    for (bus, &v) in case.buses.iter().zip(&sol.state.v) {
        let excess = (v - bus.v_max).max(bus.v_min - v).max(0.0);
        if excess > 0.0 {
            let volts = excess * bus.base_kv * 1000.0;
            volt_sq += volts * volts;
            if excess > worst_v {
                worst_v = excess;
                worst_bus = Some(bus.id);
            }
        }
    }
    let mut load_sq = 0.0;
    let mut worst_branch = None;
    let mut worst_s = 0.0;
    for (i, (br, fl)) in case.branches.iter().zip(&sol.flows.flows).enumerate() {
        let over_mva = case.from_pu(fl.loading()) - br.s_max;
        if over_mva > 0.0 {
            let kw = over_mva * 1000.0;
            load_sq += kw * kw;
            if over_mva > worst_s {
                worst_s = over_mva;
                worst_branch = Some(i);
            }
        }
    }
    Ok(ViolationReport {
        volt_sq,
        load_sq,
        worst_bus,
        worst_branch,
    })
}

/// Net injections for a dispatch given in MW, with `q = α · p` for every
/// controllable unit. Loads (including uncontrollable generation entered as
/// negative load) are subtracted.
pub fn injections_from_dispatch(
    case: &GridCase,
    cont_p: &[f64],
    step_p: &[f64],
) -> Result<InjectionProfile, PfError> {
    check_len("cont_p", case.cont_gens.len(), cont_p.len())?;
    check_len("step_p", case.step_gens.len(), step_p.len())?;
    let mut prof = InjectionProfile {
        p_inj: case.buses.iter().map(|b| -case.to_pu(b.p_load)).collect(),
        q_inj: case.buses.iter().map(|b| -case.to_pu(b.q_load)).collect(),
    };
    let units = case
        .cont_gens
        .iter()
        .map(|g| (g.bus, g.alpha))
        .zip(cont_p)
        .chain(case.step_gens.iter().map(|g| (g.bus, g.alpha)).zip(step_p));
    for ((bus, alpha), &p) in units {
        let m = case.bus_index(bus).ok_or(PfError::Dimension {
            what: "generator bus",
            expected: case.num_buses(),
            got: bus,
        })?;
        prof.p_inj[m] += case.to_pu(p);
        prof.q_inj[m] += case.to_pu(alpha * p);
    }
    Ok(prof)
}

/// Flat start with the slack at its held magnitude.
pub fn flat_start(case: &GridCase) -> VoltageState {
    let mut s = VoltageState::flat(case.num_buses());
    if let Some(k) = case.slack_index() {
        s.v[k] = SLACK_VOLTAGE;
    }
    s
}
