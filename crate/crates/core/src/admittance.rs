//! Bus admittance matrix assembly for π-model branches.

use crate::grid::{Branch, GridCase};
use crate::linalg::DenseMatrix;

/// `Y = G + jB` stored as two dense real matrices, per-unit.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    pub g: DenseMatrix,
    pub b: DenseMatrix,
}

impl AdmittanceMatrix {
    pub fn dim(&self) -> usize {
        self.g.rows()
    }
}

/// Series admittance `1 / (r + jx)` as `(g, b)`.
pub fn series_admittance(br: &Branch) -> (f64, f64) {
    let d = br.r * br.r + br.x * br.x;
    (br.r / d, -br.x / d)
}

/// Assembles `Y` from every branch; parallel circuits add up.
///
/// Panics if a branch references an unknown bus; call on validated cases.
pub fn build_admittance(case: &GridCase) -> AdmittanceMatrix {
    let n = case.num_buses();
    let mut g = DenseMatrix::zeros(n, n);
    let mut b = DenseMatrix::zeros(n, n);
    for br in &case.branches {
        let f = case.bus_index(br.from_bus).expect("branch from_bus must exist");
        let t = case.bus_index(br.to_bus).expect("branch to_bus must exist");
        let (gs, bs) = series_admittance(br);
        let half = 0.5 * br.b_sh;
        g[(f, f)] += gs;
        g[(t, t)] += gs;
        b[(f, f)] += bs + half;
        b[(t, t)] += bs + half;
        g[(f, t)] -= gs;
        g[(t, f)] -= gs;
        b[(f, t)] -= bs;
        b[(t, f)] -= bs;
    }
    AdmittanceMatrix { g, b }
}
