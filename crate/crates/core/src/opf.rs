//! Continuously relaxed AC-OPF over a candidate subset of discrete setpoints.
//!
//! Each stepwise generator `k` injects `Σ_l a_{k,l} · p_{k,l}` over its
//! remaining candidates with `Σ_l a_{k,l} = 1` and `0 <= a <= 1`. With the full
//! candidate set this is the plain continuous relaxation; with one candidate per
//! device the steps are fixed and only continuous generators move.
//!
//! The curtailment objective `Σ |p_act − p|` is written in epigraph form: one
//! auxiliary `t` per free term with `t >= u` and `t >= −u`, minimising `Σ t`.
//! Reactive power of every controllable unit is substituted as `q = α · p`.
//! The slack bus is held at [`SLACK_VOLTAGE`](crate::network::SLACK_VOLTAGE)
//! and angle zero.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;


use crate::grid::GridCase;
use crate::ipm::{self, ConstraintRef, IpmOptions, IpmStatus, Nlp, NlpEval};
use crate::linalg::{DenseMatrix, SparseRow};
use crate::network::{Local3, Network, SLACK_VOLTAGE};
use crate::powerflow::VoltageState;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OpfError {
    #[error("candidate set has {got} devices, case has {expected}")]
    DeviceCount { expected: usize, got: usize },
    #[error("device {device} has no candidate setpoints left")]
    EmptyCandidates { device: usize },
    #[error("device {device}: step index {index} out of range or not ascending")]
    BadCandidate { device: usize, index: usize },
    #[error("relaxed solution is not optimal ({0:?})")]
    NotOptimal(SolveStatus),
    #[error("candidate set does not match the solution")]
    CandidateMismatch,
}

/// Remaining admissible step indices (0-based) for every stepwise device.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CandidateSet {
    pub per_device: Vec<Vec<usize>>,
}

impl CandidateSet {
    /// Every step of every device.
    pub fn full(case: &GridCase) -> Self {
        Self {
            per_device: case.step_gens.iter().map(|g| (0..g.steps.len()).collect()).collect(),
        }
    }

    /// One fixed step per device.
    pub fn fixed(indices: &[usize]) -> Self {
        Self {
            per_device: indices.iter().map(|&l| vec![l]).collect(),
        }
    }

    pub fn num_devices(&self) -> usize {
        self.per_device.len()
    }

    pub fn total(&self) -> usize {
        self.per_device.iter().map(Vec::len).sum()
    }

    pub fn is_singleton(&self, k: usize) -> bool {
        self.per_device[k].len() == 1
    }

    pub fn all_singleton(&self) -> bool {
        self.per_device.iter().all(|c| c.len() == 1)
    }

    /// Candidates on devices that still have a choice.
    pub fn open_candidates(&self) -> usize {
        self.per_device.iter().filter(|c| c.len() > 1).map(Vec::len).sum()
    }

    /// Removes step `l` from device `k`; refuses to empty a device.
    pub fn remove(&mut self, k: usize, l: usize) -> bool {
        let c = &mut self.per_device[k];
        match c.iter().position(|&x| x == l) {
            Some(p) if c.len() > 1 => {
                c.remove(p);
                true
            }
            _ => false,
        }
    }

    /// Reinserts a previously removed step, keeping indices ascending.
    pub fn restore(&mut self, k: usize, l: usize) {
        let c = &mut self.per_device[k];
        if let Err(p) = c.binary_search(&l) {
            c.insert(p, l);
        }
    }

    /// The chosen step of every device once all are singletons.
    pub fn assignment(&self) -> Option<Vec<usize>> {
        self.per_device.iter().map(|c| (c.len() == 1).then(|| c[0])).collect()
    }

    pub fn check(&self, case: &GridCase) -> Result<(), OpfError> {
        if self.per_device.len() != case.step_gens.len() {
            return Err(OpfError::DeviceCount {
                expected: case.step_gens.len(),
                got: self.per_device.len(),
            });
        }
        for (k, (c, g)) in self.per_device.iter().zip(&case.step_gens).enumerate() {
            if c.is_empty() {
                return Err(OpfError::EmptyCandidates { device: k });
            }
            for (i, &l) in c.iter().enumerate() {
                if l >= g.steps.len() || (i > 0 && c[i - 1] >= l) {
                    return Err(OpfError::BadCandidate { device: k, index: l });
                }
            }
        }
        Ok(())
    }
}

/// Scoring weights for deflation candidates: `w1` in 1/V², `w2` in 1/kW²,
/// `w3` in 1/kW.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Weights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            w1: 1e10,
            w2: 1e6,
            w3: 10.0,
        }
    }
}

impl Weights {
    pub fn is_valid(&self) -> bool {
        [self.w1, self.w2, self.w3].iter().all(|w| w.is_finite() && *w >= 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSolution {
    pub candidates: CandidateSet,
    /// Continuous generator active power, MW.
    pub cont_p: Vec<f64>,
    /// Continuous generator reactive power, Mvar.
    pub cont_q: Vec<f64>,
    /// Relaxed binaries per device, aligned with `candidates`.
    pub a: Vec<Vec<f64>>,
    /// `Σ_l a_{k,l} p_{k,l}` per device, MW.
    pub step_equiv: Vec<f64>,
    pub state: VoltageState,
    /// Total curtailment `f₂`, MW.
    pub objective: f64,
    pub kkt_residual: f64,
    pub primal_infeasibility: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Most violated constraint when the solve failed.
    pub diagnostic: Option<String>,
}

impl RelaxedSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Ineq {
    VMax(usize),
    VMin(usize),
    PMax(usize),
    PMin(usize),
    AMin(usize, usize),
    AMax(usize, usize),
    EpiUpper(usize),
    EpiLower(usize),
    FlowFrom(usize),
    FlowTo(usize),
}

/// One `|p_act − p|` objective term with a free variable part.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Term {
    Cont(usize),
    Step(usize),
}

#[derive(Debug, Clone)]
struct Layout {
    n: usize,
    cont: Vec<Option<usize>>,
    v: Vec<Option<usize>>,
    th: Vec<Option<usize>>,
    /// First `a` index of each device with more than one candidate.
    a: Vec<Option<usize>>,
    terms: Vec<(Term, usize)>,
}

/// The relaxed OPF as an NLP over `x = (p^G, v, θ, a, t)`.
#[derive(Debug, Clone)]
pub struct NlpProblem {
    case: GridCase,
    net: Network,
    cand: CandidateSet,
    layout: Layout,
    /// Non-slack buses; equality rows `2i`, `2i+1` are P and Q balance.
    pq: Vec<usize>,
    simplex_rows: Vec<usize>,
    ineqs: Vec<Ineq>,
    /// Per-unit objective contribution of fixed terms.
    const_obj: f64,
    /// Pre-solve infeasibility reason (slack voltage outside its band).
    blocked: Option<String>,
}

fn is_fixed_gen(p_min: f64, p_max: f64) -> bool {
    p_max - p_min <= 1e-12 * (1.0 + p_max.abs())
}

/// Builds the relaxed problem for the given candidate subset.
pub fn build_relaxed_problem(case: &GridCase, cand: &CandidateSet) -> Result<NlpProblem, OpfError> {
    cand.check(case)?;
    let net = Network::new(case);
    let mut n = 0;
    let mut next = || {
        n += 1;
        n - 1
    };
    let cont: Vec<Option<usize>> = case
        .cont_gens
        .iter()
        .map(|g| (!is_fixed_gen(g.p_min, g.p_max)).then(&mut next))
        .collect();
    let pq: Vec<usize> = (0..net.n).filter(|&m| m != net.slack).collect();
    let mut v = vec![None; net.n];
    let mut th = vec![None; net.n];
    for &m in &pq {
        v[m] = Some(next());
    }
    for &m in &pq {
        th[m] = Some(next());
    }
    let mut a = vec![None; cand.num_devices()];
    for (k, c) in cand.per_device.iter().enumerate() {
        if c.len() > 1 {
            a[k] = Some(next());
            for _ in 1..c.len() {
                next();
            }
        }
    }
    let mut terms = Vec::new();
    for (i, slot) in cont.iter().enumerate() {
        if slot.is_some() {
            terms.push((Term::Cont(i), next()));
        }
    }
    for (k, slot) in a.iter().enumerate() {
        if slot.is_some() {
            terms.push((Term::Step(k), next()));
        }
    }

    let mut const_obj = 0.0;
    for (g, slot) in case.cont_gens.iter().zip(&cont) {
        if slot.is_none() {
            const_obj += case.to_pu((g.p_act - g.p_min).abs());
        }
    }
    for (g, c) in case.step_gens.iter().zip(&cand.per_device) {
        if c.len() == 1 {
            const_obj += case.to_pu((g.p_act - g.steps[c[0]]).abs());
        }
    }

    let simplex_rows = (0..cand.num_devices()).filter(|&k| a[k].is_some()).collect();
    let mut ineqs = Vec::new();
    for &m in &pq {
        ineqs.push(Ineq::VMax(m));
        ineqs.push(Ineq::VMin(m));
    }
    for (i, slot) in cont.iter().enumerate() {
        if slot.is_some() {
            ineqs.push(Ineq::PMax(i));
            ineqs.push(Ineq::PMin(i));
        }
    }
    for (k, c) in cand.per_device.iter().enumerate() {
        if a[k].is_some() {
            for p in 0..c.len() {
                ineqs.push(Ineq::AMin(k, p));
                ineqs.push(Ineq::AMax(k, p));
            }
        }
    }
    for t in 0..terms.len() {
        ineqs.push(Ineq::EpiUpper(t));
        ineqs.push(Ineq::EpiLower(t));
    }
    for b in 0..net.branches.len() {
        ineqs.push(Ineq::FlowFrom(b));
        ineqs.push(Ineq::FlowTo(b));
    }

    let slack_bus = &case.buses[net.slack];
    let blocked = if SLACK_VOLTAGE > slack_bus.v_max {
        Some(format!("v_max at slack bus {} (held at {SLACK_VOLTAGE} pu)", slack_bus.id))
    } else if SLACK_VOLTAGE < slack_bus.v_min {
        Some(format!("v_min at slack bus {} (held at {SLACK_VOLTAGE} pu)", slack_bus.id))
    } else {
        None
    };

    Ok(NlpProblem {
        case: case.clone(),
        layout: Layout {
            n,
            cont,
            v,
            th,
            a,
            terms,
        },
        net,
        cand: cand.clone(),
        pq,
        simplex_rows,
        ineqs,
        const_obj,
        blocked,
    })
}

impl NlpProblem {
    pub fn candidates(&self) -> &CandidateSet {
        &self.cand
    }

    pub fn case(&self) -> &GridCase {
        &self.case
    }

    /// Number of relaxed binary variables in the problem.
    pub fn num_binaries(&self) -> usize {
        self.cand
            .per_device
            .iter()
            .zip(&self.layout.a)
            .filter(|(_, a)| a.is_some())
            .map(|(c, _)| c.len())
            .sum()
    }

    fn voltages(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut v = vec![SLACK_VOLTAGE; self.net.n];
        let mut th = vec![0.0; self.net.n];
        for m in 0..self.net.n {
            if let Some(i) = self.layout.v[m] {
                v[m] = x[i];
            }
            if let Some(i) = self.layout.th[m] {
                th[m] = x[i];
            }
        }
        (v, th)
    }

    /// Continuous dispatch in per-unit.
    fn cont_p_pu(&self, x: &[f64]) -> Vec<f64> {
        self.case
            .cont_gens
            .iter()
            .zip(&self.layout.cont)
            .map(|(g, slot)| slot.map_or(self.case.to_pu(g.p_min), |i| x[i]))
            .collect()
    }

    fn a_values(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.cand
            .per_device
            .iter()
            .zip(&self.layout.a)
            .map(|(c, slot)| match slot {
                Some(i) => x[*i..*i + c.len()].to_vec(),
                None => vec![1.0],
            })
            .collect()
    }

    /// Stepwise injections in per-unit.
    fn step_p_pu(&self, a: &[Vec<f64>]) -> Vec<f64> {
        self.case
            .step_gens
            .iter()
            .zip(&self.cand.per_device)
            .zip(a)
            .map(|((g, c), ak)| {
                c.iter().zip(ak).map(|(&l, w)| w * self.case.to_pu(g.steps[l])).sum()
            })
            .collect()
    }

    fn term_value(&self, term: Term, x: &[f64]) -> (f64, SparseRow) {
        match term {
            Term::Cont(i) => {
                let j = self.layout.cont[i].expect("term on free generator");
                (self.case.to_pu(self.case.cont_gens[i].p_act) - x[j], vec![(j, -1.0)])
            }
            Term::Step(k) => {
                let g = &self.case.step_gens[k];
                let start = self.layout.a[k].expect("term on free device");
                let mut u = self.case.to_pu(g.p_act);
                let mut row = Vec::new();
                for (p, &l) in self.cand.per_device[k].iter().enumerate() {
                    let s = self.case.to_pu(g.steps[l]);
                    u -= s * x[start + p];
                    row.push((start + p, -s));
                }
                (u, row)
            }
        }
    }

    fn branch_idx(&self, from: usize, to: usize) -> [Option<usize>; 4] {
        [self.layout.v[from], self.layout.v[to], self.layout.th[from], self.layout.th[to]]
    }

    fn flow_constraint(&self, b: usize, reverse: bool, v: &[f64], th: &[f64]) -> (Local3, [Option<usize>; 4]) {
        let br = &self.net.branches[b];
        let (f, t) = if reverse { (br.to, br.from) } else { (br.from, br.to) };
        let (p, q) = Network::flow_terms(br, v[f], v[t], th[f] - th[t]);
        let mut s2 = Local3::sum_of_squares(&p, &q);
        s2.val -= br.s_max * br.s_max;
        (s2, self.branch_idx(f, t))
    }

    /// Flat start point: `v = 1`, `θ = 0`, generators at `p_act`, uniform `a`.
    pub fn flat_point(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.layout.n];
        for (g, slot) in self.case.cont_gens.iter().zip(&self.layout.cont) {
            if let Some(i) = *slot {
                x[i] = self.case.to_pu(g.p_act.clamp(g.p_min, g.p_max));
            }
        }
        for slot in self.layout.v.iter().flatten() {
            x[*slot] = 1.0;
        }
        for (c, slot) in self.cand.per_device.iter().zip(&self.layout.a) {
            if let Some(i) = *slot {
                for p in 0..c.len() {
                    x[i + p] = 1.0 / c.len() as f64;
                }
            }
        }
        self.fill_epigraph(&mut x);
        x
    }

    /// Start point taken from an earlier solution on a superset or equal
    /// candidate set; weights of removed candidates are dropped and the rest
    /// renormalised.
    pub fn warm_point(&self, warm: &RelaxedSolution) -> Vec<f64> {
        let mut x = self.flat_point();
        if warm.state.v.len() != self.net.n || warm.cont_p.len() != self.case.cont_gens.len() {
            return x;
        }
        for m in 0..self.net.n {
            if let Some(i) = self.layout.v[m] {
                x[i] = warm.state.v[m];
            }
            if let Some(i) = self.layout.th[m] {
                x[i] = warm.state.theta[m];
            }
        }
        for ((g, slot), &p) in self.case.cont_gens.iter().zip(&self.layout.cont).zip(&warm.cont_p) {
            if let Some(i) = *slot {
                x[i] = self.case.to_pu(p.clamp(g.p_min, g.p_max));
            }
        }
        if warm.candidates.num_devices() == self.cand.num_devices() {
            for (k, c) in self.cand.per_device.iter().enumerate() {
                let Some(start) = self.layout.a[k] else { continue };
                let old_c = &warm.candidates.per_device[k];
                let old_a = &warm.a[k];
                let mut w: Vec<f64> = c
                    .iter()
                    .map(|l| old_c.iter().position(|o| o == l).map_or(0.0, |p| old_a[p].clamp(0.0, 1.0)))
                    .collect();
                let sum: f64 = w.iter().sum();
                if sum > 1e-6 {
                    w.iter_mut().for_each(|v| *v /= sum);
                } else {
                    w.iter_mut().for_each(|v| *v = 1.0 / c.len() as f64);
                }
                x[start..start + c.len()].copy_from_slice(&w);
            }
        }
        self.fill_epigraph(&mut x);
        x
    }

    fn fill_epigraph(&self, x: &mut [f64]) {
        for &(term, ti) in &self.layout.terms {
            let (u, _) = self.term_value(term, x);
            x[ti] = u.abs();
        }
    }

    fn describe_eq(&self, i: usize) -> String {
        let np = 2 * self.pq.len();
        if i < np {
            let bus = self.case.buses[self.pq[i / 2]].id;
            let kind = if i.is_multiple_of(2) { "active" } else { "reactive" };
            format!("{kind} power balance at bus {bus}")
        } else {
            format!("simplex of stepwise generator {}", self.simplex_rows[i - np])
        }
    }

    fn describe_ineq(&self, j: usize) -> String {
        let bus_id = |m: usize| self.case.buses[m].id;
        match self.ineqs[j] {
            Ineq::VMax(m) => format!("v_max at bus {}", bus_id(m)),
            Ineq::VMin(m) => format!("v_min at bus {}", bus_id(m)),
            Ineq::PMax(i) => format!("p_max of continuous generator {i}"),
            Ineq::PMin(i) => format!("p_min of continuous generator {i}"),
            Ineq::AMin(k, p) | Ineq::AMax(k, p) => format!("binary bounds of stepwise generator {k}, candidate {p}"),
            Ineq::EpiUpper(t) | Ineq::EpiLower(t) => format!("objective epigraph term {t}"),
            Ineq::FlowFrom(b) | Ineq::FlowTo(b) => {
                let br = &self.case.branches[b];
                format!("loading of branch {b} ({}-{})", br.from_bus, br.to_bus)
            }
        }
    }

    fn solution_from(&self, x: &[f64], status: SolveStatus, r: Option<&ipm::IpmResult>) -> RelaxedSolution {
        let (v, th) = self.voltages(x);
        let cont_pu = self.cont_p_pu(x);
        let a = self.a_values(x);
        let step_pu = self.step_p_pu(&a);
        let cont_p: Vec<f64> = cont_pu.iter().map(|p| self.case.from_pu(*p)).collect();
        let cont_q = cont_p
            .iter()
            .zip(&self.case.cont_gens)
            .map(|(p, g)| g.alpha * p)
            .collect();
        let step_equiv: Vec<f64> = step_pu.iter().map(|p| self.case.from_pu(*p)).collect();
        let objective = curtailment_mw(&self.case, &cont_p, &step_equiv);
        RelaxedSolution {
            candidates: self.cand.clone(),
            cont_p,
            cont_q,
            a,
            step_equiv,
            state: VoltageState { v, theta: th },
            objective,
            kkt_residual: r.map_or(f64::INFINITY, |r| r.kkt_residual),
            primal_infeasibility: r.map_or(f64::INFINITY, |r| r.primal_infeasibility),
            status,
            iterations: r.map_or(0, |r| r.iterations),
            diagnostic: None,
        }
    }
}

/// Total curtailment `Σ |p_act − p|` in MW over both generator kinds.
pub fn curtailment_mw(case: &GridCase, cont_p: &[f64], step_p: &[f64]) -> f64 {
    let cont: f64 = case.cont_gens.iter().zip(cont_p).map(|(g, p)| (g.p_act - p).abs()).sum();
    let step: f64 = case.step_gens.iter().zip(step_p).map(|(g, p)| (g.p_act - p).abs()).sum();
    cont + step
}

impl Nlp for NlpProblem {
    fn num_vars(&self) -> usize {
        self.layout.n
    }

    fn num_eq(&self) -> usize {
        2 * self.pq.len() + self.simplex_rows.len()
    }

    fn num_ineq(&self) -> usize {
        self.ineqs.len()
    }

    fn evaluate(&self, x: &[f64]) -> NlpEval {
        let lay = &self.layout;
        let (v, th) = self.voltages(x);
        let cont_pu = self.cont_p_pu(x);
        let a = self.a_values(x);
        let step_pu = self.step_p_pu(&a);

        let mut grad = vec![0.0; lay.n];
        let mut f = self.const_obj;
        for &(_, ti) in &lay.terms {
            f += x[ti];
            grad[ti] = 1.0;
        }

        // Bus balance: network injection minus controllable generation plus load.
        let mut g = Vec::with_capacity(self.num_eq());
        let mut jac_g = Vec::with_capacity(self.num_eq());
        let mut bus_rows: Vec<(f64, SparseRow, f64, SparseRow)> = vec![(0.0, Vec::new(), 0.0, Vec::new()); self.net.n];
        for &m in &self.pq {
            let (gp, rp, gq, rq) = &mut bus_rows[m];
            *gp = self.net.p_load[m];
            *gq = self.net.q_load[m];
            self.net.for_each_injection_term(m, &v, &th, |nb, tp, tq| {
                let idx = [lay.v[m], lay.v[nb], lay.th[m], lay.th[nb]];
                *gp += tp.val;
                *gq += tq.val;
                tp.scatter_grad(&idx, 1.0, rp);
                tq.scatter_grad(&idx, 1.0, rq);
            });
        }
        for (i, gen) in self.case.cont_gens.iter().enumerate() {
            let m = self.net.cont_bus[i];
            if m == self.net.slack {
                continue;
            }
            let (gp, rp, gq, rq) = &mut bus_rows[m];
            *gp -= cont_pu[i];
            *gq -= gen.alpha * cont_pu[i];
            if let Some(j) = lay.cont[i] {
                rp.push((j, -1.0));
                rq.push((j, -gen.alpha));
            }
        }
        for (k, gen) in self.case.step_gens.iter().enumerate() {
            let m = self.net.step_bus[k];
            if m == self.net.slack {
                continue;
            }
            let (gp, rp, gq, rq) = &mut bus_rows[m];
            *gp -= step_pu[k];
            *gq -= gen.alpha * step_pu[k];
            if let Some(start) = lay.a[k] {
                for (p, &l) in self.cand.per_device[k].iter().enumerate() {
                    let s = self.case.to_pu(gen.steps[l]);
                    rp.push((start + p, -s));
                    rq.push((start + p, -gen.alpha * s));
                }
            }
        }
        for &m in &self.pq {
            let (gp, rp, gq, rq) = core::mem::take(&mut bus_rows[m]);
            g.push(gp);
            jac_g.push(rp);
            g.push(gq);
            jac_g.push(rq);
        }
        for &k in &self.simplex_rows {
            let start = lay.a[k].expect("simplex row on free device");
            let len = self.cand.per_device[k].len();
            g.push(x[start..start + len].iter().sum::<f64>() - 1.0);
            jac_g.push((start..start + len).map(|j| (j, 1.0)).collect());
        }

        let mut h = Vec::with_capacity(self.ineqs.len());
        let mut jac_h = Vec::with_capacity(self.ineqs.len());
        for ineq in &self.ineqs {
            let (val, row) = match *ineq {
                Ineq::VMax(m) => {
                    let j = lay.v[m].expect("bound on free voltage");
                    (x[j] - self.net.v_max[m], vec![(j, 1.0)])
                }
                Ineq::VMin(m) => {
                    let j = lay.v[m].expect("bound on free voltage");
                    (self.net.v_min[m] - x[j], vec![(j, -1.0)])
                }
                Ineq::PMax(i) => {
                    let j = lay.cont[i].expect("bound on free generator");
                    (x[j] - self.case.to_pu(self.case.cont_gens[i].p_max), vec![(j, 1.0)])
                }
                Ineq::PMin(i) => {
                    let j = lay.cont[i].expect("bound on free generator");
                    (self.case.to_pu(self.case.cont_gens[i].p_min) - x[j], vec![(j, -1.0)])
                }
                Ineq::AMin(k, p) => {
                    let j = lay.a[k].expect("bound on free device") + p;
                    (-x[j], vec![(j, -1.0)])
                }
                Ineq::AMax(k, p) => {
                    let j = lay.a[k].expect("bound on free device") + p;
                    (x[j] - 1.0, vec![(j, 1.0)])
                }
                Ineq::EpiUpper(t) | Ineq::EpiLower(t) => {
                    let (term, ti) = lay.terms[t];
                    let (u, mut row) = self.term_value(term, x);
                    let sign = if matches!(ineq, Ineq::EpiUpper(_)) { 1.0 } else { -1.0 };
                    row.iter_mut().for_each(|e| e.1 *= sign);
                    row.push((ti, -1.0));
                    (sign * u - x[ti], row)
                }
                Ineq::FlowFrom(b) | Ineq::FlowTo(b) => {
                    let (s2, idx) = self.flow_constraint(b, matches!(ineq, Ineq::FlowTo(_)), &v, &th);
                    let mut row = Vec::new();
                    s2.scatter_grad(&idx, 1.0, &mut row);
                    (s2.val, row)
                }
            };
            h.push(val);
            jac_h.push(row);
        }

        NlpEval {
            f,
            grad,
            g,
            jac_g,
            h,
            jac_h,
        }
    }

    fn lagrangian_hessian(&self, x: &[f64], lam: &[f64], mu: &[f64], out: &mut DenseMatrix) {
        let lay = &self.layout;
        let (v, th) = self.voltages(x);
        for (r, &m) in self.pq.iter().enumerate() {
            let (lp, lq) = (lam[2 * r], lam[2 * r + 1]);
            self.net.for_each_injection_term(m, &v, &th, |nb, tp, tq| {
                let idx = [lay.v[m], lay.v[nb], lay.th[m], lay.th[nb]];
                tp.scatter_hess(&idx, lp, out);
                tq.scatter_hess(&idx, lq, out);
            });
        }
        for (j, ineq) in self.ineqs.iter().enumerate() {
            if let Ineq::FlowFrom(b) | Ineq::FlowTo(b) = *ineq {
                let (s2, idx) = self.flow_constraint(b, matches!(ineq, Ineq::FlowTo(_)), &v, &th);
                s2.scatter_hess(&idx, mu[j], out);
            }
        }
    }
}

const WARM_BARRIER: f64 = 1e-5;

/// Solves the relaxed problem, from `warm` when given, otherwise from the flat
/// point.
pub fn solve_nlp(prob: &NlpProblem, warm: Option<&RelaxedSolution>) -> RelaxedSolution {
    solve_nlp_with(prob, warm, &IpmOptions::default())
}

pub fn solve_nlp_with(prob: &NlpProblem, warm: Option<&RelaxedSolution>, opts: &IpmOptions) -> RelaxedSolution {
    let mut opts = *opts;
    let x0 = match warm {
        Some(w) => {
            opts.warm_barrier = opts.warm_barrier.or(Some(WARM_BARRIER));
            prob.warm_point(w)
        }
        None => prob.flat_point(),
    };
    let opts = &opts;
    if let Some(reason) = &prob.blocked {
        let mut sol = prob.solution_from(&x0, SolveStatus::Infeasible, None);
        sol.diagnostic = Some(reason.clone());
        return sol;
    }
    let r = ipm::solve(prob, &x0, opts);
    let status = match r.status {
        IpmStatus::Converged if r.primal_infeasibility <= 1e-6 && r.kkt_residual <= 1e-6 => SolveStatus::Optimal,
        IpmStatus::Converged | IpmStatus::IterationLimit => SolveStatus::IterationLimit,
        IpmStatus::Infeasible => SolveStatus::Infeasible,
    };
    let mut sol = prob.solution_from(&r.x, status, Some(&r));
    if status != SolveStatus::Optimal {
        sol.diagnostic = r.most_violated.map(|c| match c {
            ConstraintRef::Eq(i) => prob.describe_eq(i),
            ConstraintRef::Ineq(j) => prob.describe_ineq(j),
        });
    }
    sol
}

/// Continuous dispatch and the equivalent stepwise injections, both in MW.
pub fn extract_dispatch(sol: &RelaxedSolution, cand: &CandidateSet) -> Result<(Vec<f64>, Vec<f64>), OpfError> {
    if !sol.is_optimal() {
        return Err(OpfError::NotOptimal(sol.status));
    }
    if &sol.candidates != cand {
        return Err(OpfError::CandidateMismatch);
    }
    Ok((sol.cont_p.clone(), sol.step_equiv.clone()))
}
