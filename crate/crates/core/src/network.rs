//! Per-unit network compiled from a [`GridCase`], plus the AC power flow
//! expressions with their first and second derivatives.
//!
//! Every nonlinear term used by the power flow and the OPF is a function of
//! three local coordinates `(v_m, v_n, θ_m − θ_n)`; [`Local3`] carries its
//! value, gradient and Hessian in those coordinates and scatters them onto
//! global variable indices.

use alloc::vec;
use alloc::vec::Vec;


use num_traits::Float;

use crate::admittance::{build_admittance, series_admittance, AdmittanceMatrix};
use crate::grid::GridCase;
use crate::linalg::{DenseMatrix, SparseRow};

/// Voltage magnitude held at the slack bus.
pub const SLACK_VOLTAGE: f64 = 1.0;

#[derive(Debug, Clone)]
pub(crate) struct NetBranch {
    pub from: usize,
    pub to: usize,
    pub g: f64,
    pub b: f64,
    pub b_half: f64,
    pub s_max: f64,
}

/// Positional, per-unit view of a validated case.
#[derive(Debug, Clone)]
pub(crate) struct Network {
    pub n: usize,
    pub slack: usize,
    pub y: AdmittanceMatrix,
    /// Off-diagonal structural neighbours of every bus, ascending.
    pub adj: Vec<Vec<usize>>,
    pub branches: Vec<NetBranch>,
    pub v_min: Vec<f64>,
    pub v_max: Vec<f64>,
    pub p_load: Vec<f64>,
    pub q_load: Vec<f64>,
    pub cont_bus: Vec<usize>,
    pub step_bus: Vec<usize>,
}

impl Network {
    /// Compiles the case. The slack defaults to position 0 when absent so that
    /// structurally broken cases can still reach the solvers' error paths.
    pub fn new(case: &GridCase) -> Self {
        let n = case.num_buses();
        let slack = case.slack_index().unwrap_or(0);
        let y = build_admittance(case);
        let pos = |id: usize| case.bus_index(id).expect("bus reference must exist");
        let mut adj = vec![Vec::new(); n];
        let branches = case
            .branches
            .iter()
            .map(|br| {
                let (f, t) = (pos(br.from_bus), pos(br.to_bus));
                adj[f].push(t);
                adj[t].push(f);
                let (g, b) = series_admittance(br);
                NetBranch {
                    from: f,
                    to: t,
                    g,
                    b,
                    b_half: 0.5 * br.b_sh,
                    s_max: br.s_max / case.s_base,
                }
            })
            .collect();
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        Self {
            n,
            slack,
            y,
            adj,
            branches,
            v_min: case.buses.iter().map(|b| b.v_min).collect(),
            v_max: case.buses.iter().map(|b| b.v_max).collect(),
            p_load: case.buses.iter().map(|b| b.p_load / case.s_base).collect(),
            q_load: case.buses.iter().map(|b| b.q_load / case.s_base).collect(),
            cont_bus: case.cont_gens.iter().map(|g| pos(g.bus)).collect(),
            step_bus: case.step_gens.iter().map(|g| pos(g.bus)).collect(),
        }
    }

    /// Net active and reactive injection computed from the admittance matrix.
    pub fn injections(&self, v: &[f64], th: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut p = vec![0.0; self.n];
        let mut q = vec![0.0; self.n];
        for m in 0..self.n {
            self.for_each_injection_term(m, v, th, |_, tp, tq| {
                p[m] += tp.val;
                q[m] += tq.val;
            });
        }
        (p, q)
    }

    /// Calls `f(n, p_term, q_term)` for every term of `P_m` and `Q_m`. The
    /// diagonal term has `n == m`.
    pub fn for_each_injection_term(
        &self,
        m: usize,
        v: &[f64],
        th: &[f64],
        mut f: impl FnMut(usize, Local3, Local3),
    ) {
        let gmm = self.y.g[(m, m)];
        let bmm = self.y.b[(m, m)];
        f(m, Local3::square(v[m], gmm), Local3::square(v[m], -bmm));
        for &n in &self.adj[m] {
            let (gmn, bmn) = (self.y.g[(m, n)], self.y.b[(m, n)]);
            let t = th[m] - th[n];
            f(
                n,
                Local3::trig(v[m], v[n], t, gmn, bmn),
                Local3::trig(v[m], v[n], t, -bmn, gmn),
            );
        }
    }

    /// Directed flow `(p, q)` leaving `from` towards `to` on branch `br`,
    /// in local coordinates `(v_from, v_to, θ_from − θ_to)`.
    pub fn flow_terms(br: &NetBranch, v_from: f64, v_to: f64, angle: f64) -> (Local3, Local3) {
        let mut p = Local3::square(v_from, br.g);
        p.sub_assign(&Local3::trig(v_from, v_to, angle, br.g, br.b));
        let mut q = Local3::square(v_from, -(br.b + br.b_half));
        q.sub_assign(&Local3::trig(v_from, v_to, angle, -br.b, br.g));
        (p, q)
    }
}

/// Value, gradient and Hessian of a scalar in the local coordinates
/// `(v_m, v_n, θ)` with `θ = θ_m − θ_n`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Local3 {
    pub val: f64,
    pub grad: [f64; 3],
    pub hess: [[f64; 3]; 3],
}

/// Local coordinate and sign for each of `(v_m, v_n, θ_m, θ_n)`.
const EXPAND: [(usize, f64); 4] = [(0, 1.0), (1, 1.0), (2, 1.0), (2, -1.0)];

impl Local3 {
    /// `v_m v_n (a cos θ + b sin θ)`
    pub fn trig(vm: f64, vn: f64, th: f64, a: f64, b: f64) -> Self {
        let (s, c) = Float::sin_cos(th);
        let k = a * c + b * s;
        let kd = -a * s + b * c;
        Self {
            val: vm * vn * k,
            grad: [vn * k, vm * k, vm * vn * kd],
            hess: [
                [0.0, k, vn * kd],
                [k, 0.0, vm * kd],
                [vn * kd, vm * kd, -vm * vn * k],
            ],
        }
    }

    /// `coef · v_m²`
    pub fn square(vm: f64, coef: f64) -> Self {
        let mut out = Self {
            val: coef * vm * vm,
            grad: [2.0 * coef * vm, 0.0, 0.0],
            ..Self::default()
        };
        out.hess[0][0] = 2.0 * coef;
        out
    }

    pub fn sub_assign(&mut self, o: &Self) {
        self.val -= o.val;
        for i in 0..3 {
            self.grad[i] -= o.grad[i];
            for j in 0..3 {
                self.hess[i][j] -= o.hess[i][j];
            }
        }
    }

    /// `x² + y²` of two local functions.
    pub fn sum_of_squares(x: &Self, y: &Self) -> Self {
        let mut out = Self {
            val: x.val * x.val + y.val * y.val,
            ..Self::default()
        };
        for i in 0..3 {
            out.grad[i] = 2.0 * (x.val * x.grad[i] + y.val * y.grad[i]);
            for j in 0..3 {
                out.hess[i][j] = 2.0
                    * (x.grad[i] * x.grad[j]
                        + y.grad[i] * y.grad[j]
                        + x.val * x.hess[i][j]
                        + y.val * y.hess[i][j]);
            }
        }
        out
    }

    /// Appends `scale · ∇` onto the global variables `idx = (v_m, v_n, θ_m, θ_n)`.
    pub fn scatter_grad(&self, idx: &[Option<usize>; 4], scale: f64, row: &mut SparseRow) {
        for (slot, &(c, s)) in idx.iter().zip(EXPAND.iter()) {
            if let Some(j) = *slot {
                let d = s * self.grad[c];
                if d != 0.0 {
                    row.push((j, scale * d));
                }
            }
        }
    }

    /// Adds `weight · ∇²` into the dense global Hessian.
    pub fn scatter_hess(&self, idx: &[Option<usize>; 4], weight: f64, h: &mut DenseMatrix) {
        if weight == 0.0 {
            return;
        }
        for (a, &(ca, sa)) in idx.iter().zip(EXPAND.iter()) {
            let Some(i) = *a else { continue };
            for (b, &(cb, sb)) in idx.iter().zip(EXPAND.iter()) {
                let Some(j) = *b else { continue };
                let d = sa * sb * self.hess[ca][cb];
                if d != 0.0 {
                    h[(i, j)] += weight * d;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: impl Fn(f64, f64, f64) -> Local3, x: [f64; 3]) {
        let h = 1e-6;
        let base = f(x[0], x[1], x[2]);
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let (fp, fm) = (f(xp[0], xp[1], xp[2]), f(xm[0], xm[1], xm[2]));
            let g = (fp.val - fm.val) / (2.0 * h);
            assert!((g - base.grad[i]).abs() < 1e-7, "grad {i}: fd {g} vs {}", base.grad[i]);
            for j in 0..3 {
                let hij = (fp.grad[j] - fm.grad[j]) / (2.0 * h);
                assert!(
                    (hij - base.hess[i][j]).abs() < 1e-6,
                    "hess {i}{j}: fd {hij} vs {}",
                    base.hess[i][j]
                );
            }
        }
    }

    #[test]
    fn trig_term_derivatives() {
        fd_check(|a, b, c| Local3::trig(a, b, c, -3.5, 12.0), [1.03, 0.97, -0.12]);
    }

    #[test]
    fn branch_apparent_power_derivatives() {
        let br = NetBranch {
            from: 0,
            to: 1,
            g: 2.0,
            b: -8.0,
            b_half: 0.01,
            s_max: 1.0,
        };
        fd_check(
            |a, b, c| {
                let (p, q) = Network::flow_terms(&br, a, b, c);
                Local3::sum_of_squares(&p, &q)
            },
            [1.02, 0.95, 0.08],
        );
    }
}
