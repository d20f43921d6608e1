//! Cases shipped with the crate.

use miopf_core::GridCase;

use crate::case_file::parse_case;

macro_rules! cases {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../cases/", $name, ".json")))),*]
    };
}

const CASES: &[(&str, &str)] = cases![
    "case3",
    "case3_congested",
    "case4",
    "case4_congested",
    "case10",
    "case10_congested",
    "case30",
    "case30_congested",
];

/// Benchmark configurations over congested scenarios of the bundled cases.
const PRESETS: &[(&str, &str)] = &[
    ("dominance", include_str!("../presets/dominance.json")),
    ("oracle-gap", include_str!("../presets/oracle-gap.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    CASES.iter().map(|(n, _)| *n)
}

pub fn text(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    CASES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Parses a bundled case. Bundled cases are valid by construction.
pub fn get(name: &str) -> Option<GridCase> {
    text(name).map(|t| parse_case(t).unwrap_or_else(|e| panic!("bundled case {name}: {e}")))
}
