//! Network data model.
//!
//! A [`GridCase`] stores everything in physical units (MW, Mvar, MVA, kV) with
//! impedances in per-unit on `(s_base, base_kv)`. Solvers convert to per-unit
//! internally through [`GridCase::to_pu`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

pub const DEFAULT_V_MIN: f64 = 0.9;
pub const DEFAULT_V_MAX: f64 = 1.1;
pub const DEFAULT_S_BASE: f64 = 100.0;

#[cfg(feature = "serde")]
fn default_v_min() -> f64 {
    DEFAULT_V_MIN
}

#[cfg(feature = "serde")]
fn default_v_max() -> f64 {
    DEFAULT_V_MAX
}

#[cfg(feature = "serde")]
fn default_s_base() -> f64 {
    DEFAULT_S_BASE
}

/// A bus. Uncontrollable generation enters as negative `p_load`/`q_load`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Bus {
    pub id: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub is_slack: bool,
    pub base_kv: f64,
    #[cfg_attr(feature = "serde", serde(default = "default_v_min"))]
    pub v_min: f64,
    #[cfg_attr(feature = "serde", serde(default = "default_v_max"))]
    pub v_max: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub p_load: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub q_load: f64,
}

/// π-model line. `b_sh` is the total shunt susceptance, split half per end.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub b_sh: f64,
    pub s_max: f64,
}

/// Continuously controllable generator with fixed reactive-to-active ratio.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ContGen {
    pub bus: usize,
    pub p_act: f64,
    pub p_min: f64,
    pub p_max: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub alpha: f64,
}

/// Stepwise controllable generator. `steps` ascend and end at `p_act`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct StepGen {
    pub bus: usize,
    pub p_act: f64,
    pub steps: Vec<f64>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub alpha: f64,
}

impl StepGen {
    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct GridCase {
    #[cfg_attr(feature = "serde", serde(rename = "base_mva", default = "default_s_base"))]
    pub s_base: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub cont_gens: Vec<ContGen>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub step_gens: Vec<StepGen>,
}

/// One validation failure, located by a field path such as `step_gens[1].steps`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl FieldError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationErrors(pub Vec<FieldError>);

impl core::error::Error for ValidationErrors {}

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl ValidationErrors {
    pub fn errors(&self) -> &[FieldError] {
        &self.0
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.0.iter().any(|e| e.message.contains(needle))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("unknown bus id {0}")]
pub struct UnknownBus(pub usize);

impl GridCase {
    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    /// Position of the bus with the given id.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn slack_index(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.is_slack)
    }

    pub fn to_pu(&self, physical: f64) -> f64 {
        physical / self.s_base
    }

    pub fn from_pu(&self, pu: f64) -> f64 {
        pu * self.s_base
    }

    /// Step counts `L_k` for every stepwise generator.
    pub fn step_counts(&self) -> Vec<usize> {
        self.step_gens.iter().map(StepGen::num_steps).collect()
    }

    /// Buses sharing at least one branch with bus `id`.
    pub fn neighbors(&self, id: usize) -> Result<BTreeSet<usize>, UnknownBus> {
        if self.bus_index(id).is_none() {
            return Err(UnknownBus(id));
        }
        let mut out = BTreeSet::new();
        for br in &self.branches {
            if br.from_bus == id && br.to_bus != id {
                out.insert(br.to_bus);
            } else if br.to_bus == id && br.from_bus != id {
                out.insert(br.from_bus);
            }
        }
        Ok(out)
    }

    /// Checks every invariant of the data model and reports all failures.
    pub fn validate(&self) -> Result<(), ValidationErrors> {
        let mut errs = Vec::new();
        if !(self.s_base.is_finite() && self.s_base > 0.0) {
            errs.push(FieldError::new("base_mva", "must be positive"));
        }
        if self.buses.is_empty() {
            errs.push(FieldError::new("buses", "at least one bus is required"));
        }

        let mut ids: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, b) in self.buses.iter().enumerate() {
            let path = format!("buses[{i}]");
            if ids.insert(b.id, i).is_some() {
                errs.push(FieldError::new(format!("{path}.id"), format!("duplicate bus id {}", b.id)));
            }
            if !(b.base_kv.is_finite() && b.base_kv > 0.0) {
                errs.push(FieldError::new(format!("{path}.base_kv"), "must be positive"));
            }
            if !(b.v_min.is_finite() && b.v_min > 0.0) {
                errs.push(FieldError::new(format!("{path}.v_min"), "must be positive"));
            }
            if !(b.v_max.is_finite() && b.v_min < b.v_max) {
                errs.push(FieldError::new(format!("{path}.v_max"), "must exceed v_min"));
            }
            if !(b.p_load.is_finite() && b.q_load.is_finite()) {
                errs.push(FieldError::new(format!("{path}.p_load"), "loads must be finite"));
            }
        }
        match self.buses.iter().filter(|b| b.is_slack).count() {
            0 if !self.buses.is_empty() => {
                errs.push(FieldError::new("buses", "missing slack bus"));
            }
            0 | 1 => {}
            n => errs.push(FieldError::new("buses", format!("{n} slack buses, expected exactly one"))),
        }

        let mut refs_ok = true;
        let mut check_ref = |errs: &mut Vec<FieldError>, path: String, id: usize| {
            if !ids.contains_key(&id) {
                refs_ok = false;
                errs.push(FieldError::new(path, format!("unknown bus id {id}")));
            }
        };
        for (i, br) in self.branches.iter().enumerate() {
            let path = format!("branches[{i}]");
            check_ref(&mut errs, format!("{path}.from_bus"), br.from_bus);
            check_ref(&mut errs, format!("{path}.to_bus"), br.to_bus);
            if br.from_bus == br.to_bus {
                errs.push(FieldError::new(format!("{path}.to_bus"), "branch connects a bus to itself"));
            }
            if !(br.r.is_finite() && br.x.is_finite() && br.b_sh.is_finite()) {
                errs.push(FieldError::new(format!("{path}.r"), "impedance must be finite"));
            } else if br.r == 0.0 && br.x == 0.0 {
                errs.push(FieldError::new(format!("{path}.x"), "zero series impedance"));
            }
            if !(br.s_max.is_finite() && br.s_max > 0.0) {
                errs.push(FieldError::new(format!("{path}.s_max"), "must be positive"));
            }
        }
        for (i, g) in self.cont_gens.iter().enumerate() {
            let path = format!("cont_gens[{i}]");
            check_ref(&mut errs, format!("{path}.bus"), g.bus);
            if ![g.p_act, g.p_min, g.p_max, g.alpha].iter().all(|v| v.is_finite()) {
                errs.push(FieldError::new(path.clone(), "values must be finite"));
            } else if !(g.p_min <= g.p_act && g.p_act <= g.p_max) {
                errs.push(FieldError::new(format!("{path}.p_act"), "p_act outside [p_min, p_max]"));
            }
        }
        for (i, g) in self.step_gens.iter().enumerate() {
            let path = format!("step_gens[{i}]");
            check_ref(&mut errs, format!("{path}.bus"), g.bus);
            if !(g.p_act.is_finite() && g.alpha.is_finite()) || g.steps.iter().any(|s| !s.is_finite()) {
                errs.push(FieldError::new(path.clone(), "values must be finite"));
                continue;
            }
            if g.steps.len() < 2 {
                errs.push(FieldError::new(format!("{path}.steps"), "at least two steps required"));
            }
            if g.steps.windows(2).any(|w| w[0] >= w[1]) {
                errs.push(FieldError::new(format!("{path}.steps"), "steps not ascending"));
            }
            if let Some(&last) = g.steps.last() {
                let tol = 1e-9 * (1.0 + g.p_act.abs());
                if (last - g.p_act).abs() > tol {
                    errs.push(FieldError::new(format!("{path}.steps"), "last step must equal p_act"));
                }
            }
        }

        if refs_ok && !self.buses.is_empty() && !self.is_connected() {
            errs.push(FieldError::new("branches", "disconnected graph"));
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(ValidationErrors(errs))
        }
    }

    fn is_connected(&self) -> bool {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in &self.branches {
            if let (Some(f), Some(t)) = (self.bus_index(br.from_bus), self.bus_index(br.to_bus)) {
                adj[f].push(t);
                adj[t].push(f);
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(m) = stack.pop() {
            for &k in &adj[m] {
                if !seen[k] {
                    seen[k] = true;
                    stack.push(k);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}
