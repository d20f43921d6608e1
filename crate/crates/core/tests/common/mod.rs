#![allow(dead_code)]

use miopf_core::{Branch, Bus, ContGen, GridCase, StepGen};

pub fn bus(id: usize, p_load: f64, q_load: f64) -> Bus {
    Bus {
        id,
        is_slack: id == 1,
        base_kv: 110.0,
        v_min: 0.9,
        v_max: 1.1,
        p_load,
        q_load,
    }
}

pub fn line(from_bus: usize, to_bus: usize, r: f64, x: f64, s_max: f64) -> Branch {
    Branch {
        from_bus,
        to_bus,
        r,
        x,
        b_sh: 0.0,
        s_max,
    }
}

pub fn cont(bus: usize, p_act: f64, alpha: f64) -> ContGen {
    ContGen {
        bus,
        p_act,
        p_min: 0.0,
        p_max: p_act,
        alpha,
    }
}

pub fn stepped(bus: usize, steps: &[f64], alpha: f64) -> StepGen {
    StepGen {
        bus,
        p_act: *steps.last().unwrap(),
        steps: steps.to_vec(),
        alpha,
    }
}

/// Quarter steps of the nominal feed-in: 0, 30, 60 and 100 %.
pub fn quarter_steps(p_act: f64) -> Vec<f64> {
    [0.0, 0.3, 0.6, 1.0].iter().map(|f| f * p_act).collect()
}

/// Slack 1 – 2 – 3 chain with both stepwise devices on the weak 2–3 line.
pub fn congested3() -> GridCase {
    GridCase {
        s_base: 100.0,
        buses: vec![bus(1, 0.0, 0.0), bus(2, 10.0, 2.0), bus(3, 0.0, 0.0)],
        branches: vec![line(1, 2, 0.01, 0.03, 100.0), line(2, 3, 0.01, 0.03, 35.0)],
        cont_gens: vec![cont(3, 10.0, 0.0)],
        step_gens: vec![
            stepped(3, &[0.0, 9.0, 18.0, 30.0], 0.0),
            stepped(3, &[0.0, 6.0, 12.0, 20.0], 0.0),
        ],
    }
}

/// The same chain with generous ratings.
pub fn loose3() -> GridCase {
    let mut c = congested3();
    for b in &mut c.branches {
        b.s_max = 500.0;
    }
    c
}

/// Chain with the analytic fixture settings: line 1–2 rated 22 MVA, shunts and
/// a 0.1 reactive ratio on every unit.
pub fn reference3() -> GridCase {
    let mut c = congested3();
    c.branches[0].s_max = 22.0;
    for b in &mut c.branches {
        b.b_sh = 0.02;
    }
    c.cont_gens[0].alpha = 0.1;
    for g in &mut c.step_gens {
        g.alpha = 0.1;
    }
    c
}

pub mod arb {
    use super::*;
    use proptest::prelude::*;

    /// Connected network of 2..=max_n buses: a random spanning tree plus a few
    /// extra branches, with modest loads.
    pub fn case(max_n: usize) -> impl Strategy<Value = GridCase> {
        (2..=max_n)
            .prop_flat_map(|n| {
                let parents: Vec<_> = (1..n).map(|i| 0..i).collect();
                let extra = proptest::collection::vec((0..n, 0..n), 0..3);
                let lines = proptest::collection::vec((0.0..0.04f64, 0.02..0.2f64, 0.0..0.04f64), n + 2);
                let loads = proptest::collection::vec((-20.0..20.0f64, -5.0..5.0f64), n);
                (Just(n), parents, extra, lines, loads)
            })
            .prop_map(|(n, parents, extra, lines, loads)| {
                let mut pairs: Vec<(usize, usize)> = parents.iter().enumerate().map(|(i, &p)| (p, i + 1)).collect();
                pairs.extend(extra.into_iter().filter(|(a, b)| a != b));
                let branches = pairs
                    .iter()
                    .zip(lines.iter().cycle())
                    .map(|(&(a, b), &(r, x, bsh))| Branch {
                        from_bus: a + 1,
                        to_bus: b + 1,
                        r,
                        x,
                        b_sh: bsh,
                        s_max: 100.0,
                    })
                    .collect();
                let buses = (0..n)
                    .map(|i| {
                        let (p, q) = if i == 0 { (0.0, 0.0) } else { loads[i] };
                        bus(i + 1, p, q)
                    })
                    .collect();
                GridCase {
                    s_base: 100.0,
                    buses,
                    branches,
                    cont_gens: vec![],
                    step_gens: vec![],
                }
            })
    }
}
