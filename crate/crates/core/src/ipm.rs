//! Dense primal-dual interior-point method for
//!
//! ```text
//! min f(x)  s.t.  g(x) = 0,  h(x) <= 0
//! ```
//!
//! Inequalities get slacks `z > 0` (`h + z = 0`) with multipliers `mu > 0`.
//! Each iteration takes a Newton step on the barrier-perturbed KKT system and
//! keeps `z`, `mu` positive with the fraction-to-boundary rule. Inequalities
//! with `mu > z` stay in the system as explicit rows with diagonal `-z/mu`;
//! the rest are condensed into the primal block as `Jhᵀ diag(mu/z) Jh`. The
//! system is factored with a symmetric indefinite LDLᵀ and regularized until
//! its inertia is `(n, m, 0)`. The barrier target is `sigma · zᵀmu / n_ineq`
//! after every step.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{norm_inf, sparse_dot, DenseMatrix, Ldl, SparseRow};

/// Function values and first derivatives at a point.
#[derive(Debug, Clone, Default)]
pub struct NlpEval {
    pub f: f64,
    pub grad: Vec<f64>,
    pub g: Vec<f64>,
    pub jac_g: Vec<SparseRow>,
    pub h: Vec<f64>,
    pub jac_h: Vec<SparseRow>,
}

pub trait Nlp {
    fn num_vars(&self) -> usize;
    fn num_eq(&self) -> usize;
    fn num_ineq(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> NlpEval;
    /// Writes `∇²f + Σ lam_i ∇²g_i + Σ mu_j ∇²h_j` into `out` (zeroed by the caller).
    fn lagrangian_hessian(&self, x: &[f64], lam: &[f64], mu: &[f64], out: &mut DenseMatrix);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmOptions {
    pub max_iterations: usize,
    pub feas_tol: f64,
    pub grad_tol: f64,
    pub comp_tol: f64,
    pub cost_tol: f64,
    /// Fraction-to-boundary factor.
    pub xi: f64,
    /// Barrier reduction factor.
    pub sigma: f64,
    pub z0: f64,
    /// Starting barrier for a start point believed to be near a solution.
    /// Slacks then start at `max(-h, sqrt(b))` with `mu = b / z`; `None`
    /// uses `z0` and a unit barrier.
    pub warm_barrier: Option<f64>,
    /// Iterations without a 10 % improvement in primal infeasibility before
    /// the problem is declared infeasible.
    pub stall_window: usize,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            feas_tol: 1e-9,
            grad_tol: 1e-8,
            comp_tol: 1e-9,
            cost_tol: 1e-9,
            xi: 0.99995,
            sigma: 0.1,
            z0: 1.0,
            warm_barrier: None,
            stall_window: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    Converged,
    Infeasible,
    IterationLimit,
}

/// Which constraint is violated the most at the returned point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintRef {
    Eq(usize),
    Ineq(usize),
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    pub x: Vec<f64>,
    pub lam: Vec<f64>,
    pub mu: Vec<f64>,
    pub z: Vec<f64>,
    pub f: f64,
    pub status: IpmStatus,
    pub iterations: usize,
    /// `max(‖g‖∞, max(h, 0))` in problem units.
    pub primal_infeasibility: f64,
    /// Larger of the scaled stationarity and complementarity measures.
    pub kkt_residual: f64,
    pub most_violated: Option<ConstraintRef>,
}

struct Conditions {
    feas: f64,
    grad: f64,
    comp: f64,
    cost: f64,
}

fn lagrangian_gradient(ev: &NlpEval, lam: &[f64], mu: &[f64]) -> Vec<f64> {
    let mut lx = ev.grad.clone();
    for (row, &l) in ev.jac_g.iter().zip(lam) {
        for &(j, d) in row {
            lx[j] += l * d;
        }
    }
    for (row, &m) in ev.jac_h.iter().zip(mu) {
        for &(j, d) in row {
            lx[j] += m * d;
        }
    }
    lx
}

fn primal_infeasibility(ev: &NlpEval) -> (f64, Option<ConstraintRef>) {
    let mut worst = 0.0;
    let mut which = None;
    for (i, g) in ev.g.iter().enumerate() {
        if g.abs() > worst {
            worst = g.abs();
            which = Some(ConstraintRef::Eq(i));
        }
    }
    for (j, &h) in ev.h.iter().enumerate() {
        if h > worst {
            worst = h;
            which = Some(ConstraintRef::Ineq(j));
        }
    }
    (worst, which)
}

fn conditions(ev: &NlpEval, x: &[f64], z: &[f64], lam: &[f64], mu: &[f64], lx: &[f64], f_prev: f64) -> Conditions {
    let max_h = ev.h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let xnorm = norm_inf(x);
    let feas = norm_inf(&ev.g).max(max_h).max(0.0) / (1.0 + xnorm.max(norm_inf(z)));
    let grad = norm_inf(lx) / (1.0 + norm_inf(lam).max(norm_inf(mu)));
    let zmu: f64 = z.iter().zip(mu).map(|(a, b)| a * b).sum();
    let comp = zmu / (1.0 + xnorm);
    let cost = (ev.f - f_prev).abs() / (1.0 + f_prev.abs());
    Conditions { feas, grad, comp, cost }
}

/// Runs the interior-point iteration from `x0`.
pub fn solve<P: Nlp + ?Sized>(nlp: &P, x0: &[f64], opts: &IpmOptions) -> IpmResult {
    let n = nlp.num_vars();
    let neq = nlp.num_eq();
    let niq = nlp.num_ineq();
    assert_eq!(x0.len(), n);

    let mut x = x0.to_vec();
    let mut ev = nlp.evaluate(&x);
    let (mut z, mut mu, mut gamma) = match opts.warm_barrier {
        Some(b) => {
            let z: Vec<f64> = ev.h.iter().map(|&h| (-h).max(b.sqrt())).collect();
            let mu = z.iter().map(|z| b / z).collect();
            (z, mu, b)
        }
        None => {
            let z: Vec<f64> = ev.h.iter().map(|&h| if h < -opts.z0 { -h } else { opts.z0 }).collect();
            (z, vec![opts.z0; niq], 1.0)
        }
    };
    let mut lam = vec![0.0; neq];
    let mut lx = lagrangian_gradient(&ev, &lam, &mu);
    let mut cond = conditions(&ev, &x, &z, &lam, &mu, &lx, ev.f);
    cond.cost = 0.0;
    let mut f_prev = ev.f;

    let (mut best_infeas, _) = primal_infeasibility(&ev);
    let mut best_at = 0;
    let mut iterations = 0;
    let mut converged = false;
    let mut failed = false;
    let mut hess = DenseMatrix::zeros(n, n);
    let mut last_delta = 0.0;

    loop {
        if cond.feas < opts.feas_tol && cond.grad < opts.grad_tol && cond.comp < opts.comp_tol && cond.cost < opts.cost_tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations || failed {
            break;
        }
        iterations += 1;

        hess.fill(0.0);
        nlp.lagrangian_hessian(&x, &lam, &mu, &mut hess);

        // Inequalities with a large `mu/z` stay as explicit rows with diagonal
        // `-z/mu`; the rest are folded into the primal block.
        let explicit: Vec<usize> = (0..niq).filter(|&j| mu[j] > z[j]).collect();
        let dim = n + neq + explicit.len();
        let mut kkt = DenseMatrix::zeros(dim, dim);
        for i in 0..n {
            for j in 0..n {
                kkt[(i, j)] = hess[(i, j)];
            }
        }
        let mut rhs = vec![0.0; dim];
        for i in 0..n {
            rhs[i] = -lx[i];
        }
        let mut is_explicit = vec![false; niq];
        for (r, &j) in explicit.iter().enumerate() {
            is_explicit[j] = true;
            let row = n + neq + r;
            for &(a, da) in &ev.jac_h[j] {
                kkt[(row, a)] += da;
                kkt[(a, row)] += da;
            }
            kkt[(row, row)] = -z[j] / mu[j];
            rhs[row] = -ev.h[j] - gamma / mu[j];
        }
        for (j, row) in ev.jac_h.iter().enumerate() {
            if is_explicit[j] {
                continue;
            }
            let w = mu[j] / z[j];
            let c = (gamma + mu[j] * ev.h[j]) / z[j];
            for &(a, da) in row {
                rhs[a] -= c * da;
                for &(b, db) in row {
                    kkt[(a, b)] += w * da * db;
                }
            }
        }
        for (i, row) in ev.jac_g.iter().enumerate() {
            for &(j, d) in row {
                kkt[(n + i, j)] += d;
                kkt[(j, n + i)] += d;
            }
            rhs[n + i] = -ev.g[i];
        }

        let Some(step) = factor_and_solve(kkt, &rhs, n, &mut last_delta) else {
            failed = true;
            break;
        };
        let dx = &step[..n];
        let dlam = &step[n..n + neq];

        let dz: Vec<f64> = (0..niq)
            .map(|j| -ev.h[j] - z[j] - sparse_dot(&ev.jac_h[j], dx))
            .collect();
        let mut dmu: Vec<f64> = (0..niq).map(|j| -mu[j] + (gamma - mu[j] * dz[j]) / z[j]).collect();
        for (r, &j) in explicit.iter().enumerate() {
            dmu[j] = step[n + neq + r];
        }

        let alpha_p = step_length(&z, &dz, opts.xi);
        let alpha_d = step_length(&mu, &dmu, opts.xi);
        if !(alpha_p > 1e-12 && alpha_d > 1e-12) || dx.iter().any(|v| !v.is_finite()) {
            failed = true;
            break;
        }
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += alpha_p * d;
        }
        for (zi, d) in z.iter_mut().zip(&dz) {
            *zi += alpha_p * d;
        }
        for (li, d) in lam.iter_mut().zip(dlam) {
            *li += alpha_d * d;
        }
        for (mi, d) in mu.iter_mut().zip(&dmu) {
            *mi += alpha_d * d;
        }
        if niq > 0 {
            gamma = opts.sigma * z.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>() / niq as f64;
        }

        ev = nlp.evaluate(&x);
        if !ev.f.is_finite() || x.iter().any(|v| !v.is_finite()) {
            failed = true;
            break;
        }
        lx = lagrangian_gradient(&ev, &lam, &mu);
        cond = conditions(&ev, &x, &z, &lam, &mu, &lx, f_prev);
        f_prev = ev.f;

        let (infeas, _) = primal_infeasibility(&ev);
        if infeas < 0.9 * best_infeas {
            best_infeas = infeas;
            best_at = iterations;
        } else if infeas > 1e-5 && iterations - best_at >= opts.stall_window {
            break;
        }
    }

    let (infeas, most_violated) = primal_infeasibility(&ev);
    let status = if converged {
        IpmStatus::Converged
    } else if infeas > 1e-6 || failed {
        IpmStatus::Infeasible
    } else {
        IpmStatus::IterationLimit
    };
    IpmResult {
        f: ev.f,
        x,
        lam,
        mu,
        z,
        status,
        iterations,
        primal_infeasibility: infeas,
        kkt_residual: cond.grad.max(cond.comp),
        most_violated: if infeas > 0.0 { most_violated } else { None },
    }
}

/// Inertia-corrected solve of the KKT system. The primal block is shifted by
/// `delta_w` until the matrix has `n` positive and `dim - n` negative
/// eigenvalues, so the step is a descent direction for the barrier problem
/// even where the Lagrangian Hessian is indefinite. The shift that worked is
/// remembered in `last_delta` and used to seed the next iteration.
fn factor_and_solve(kkt: DenseMatrix, rhs: &[f64], n: usize, last_delta: &mut f64) -> Option<Vec<f64>> {
    let dim = kkt.rows();
    let mut delta_w = 0.0;
    let mut delta_c = 0.0;
    let mut tries = 0;
    loop {
        let mut m = kkt.clone();
        for i in 0..dim {
            m[(i, i)] += if i < n { delta_w } else { -delta_c };
        }
        let ldl = Ldl::factor(m.clone(), 1e-14);
        let inertia = ldl.inertia();
        if inertia.zero > 0 && delta_c == 0.0 {
            delta_c = DELTA_C;
            continue;
        }
        if inertia.zero == 0 && inertia.positive == n {
            *last_delta = delta_w;
            let mut sol = ldl.solve(rhs);
            let mut res_norm = f64::INFINITY;
            for _ in 0..REFINE_ROUNDS {
                let res: Vec<f64> = rhs.iter().zip(m.mul_vec(&sol)).map(|(b, k)| b - k).collect();
                let r = norm_inf(&res);
                if r.is_nan() || r >= res_norm || r == 0.0 {
                    break;
                }
                res_norm = r;
                for (s, c) in sol.iter_mut().zip(ldl.solve(&res)) {
                    *s += c;
                }
            }
            return sol.iter().all(|v| v.is_finite()).then_some(sol);
        }
        tries += 1;
        delta_w = if tries == 1 {
            if *last_delta == 0.0 {
                DELTA_W_FIRST
            } else {
                (*last_delta / 3.0).max(DELTA_W_MIN)
            }
        } else if *last_delta == 0.0 {
            delta_w * 100.0
        } else {
            delta_w * 8.0
        };
        if delta_w > DELTA_W_MAX {
            return None;
        }
    }
}

const REFINE_ROUNDS: usize = 3;
const DELTA_C: f64 = 1e-8;
const DELTA_W_FIRST: f64 = 1e-4;
const DELTA_W_MIN: f64 = 1e-20;
const DELTA_W_MAX: f64 = 1e40;

fn step_length(v: &[f64], dv: &[f64], xi: f64) -> f64 {
    let mut alpha: f64 = 1.0;
    for (a, d) in v.iter().zip(dv) {
        if *d < 0.0 {
            alpha = alpha.min(xi * (a / -d));
        }
    }
    alpha
}
