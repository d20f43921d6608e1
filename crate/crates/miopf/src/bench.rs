//! Benchmark runs over scenarios and strategies, and their CSV output.

use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

use miopf_core::{
    run_deflation, run_oracle, run_two_step, GridCase, StrategyError, StrategyResult, Weights,
    DEFAULT_MAX_COMBOS,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atomic_write;
use crate::case_file::load_case;
use crate::scenario::{generate_scenario, ScenarioSpec, DEFAULT_STEP_FRACTIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    TwoStep,
    Deflation,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::TwoStep, Method::Deflation, Method::Oracle];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::TwoStep => "two-step",
            Method::Deflation => "deflation",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Runs one strategy and records its wall time.
pub fn run_method(
    case: &GridCase,
    method: Method,
    weights: &Weights,
    max_combos: u64,
) -> Result<StrategyResult, StrategyError> {
    let start = Instant::now();
    let mut res = match method {
        Method::TwoStep => run_two_step(case),
        Method::Deflation => run_deflation(case, weights),
        Method::Oracle => run_oracle(case, max_combos),
    }?;
    res.wall_time_s = Some(start.elapsed().as_secs_f64());
    Ok(res)
}

/// A grid of generated scenarios: every seed crossed with every `n_stepwise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub base: String,
    pub seeds: Vec<u64>,
    pub n_stepwise: Vec<usize>,
    pub congestion_factor: f64,
    #[serde(default = "default_fractions")]
    pub step_fractions: Vec<f64>,
}

fn default_fractions() -> Vec<f64> {
    DEFAULT_STEP_FRACTIONS.to_vec()
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_max_combos() -> u64 {
    DEFAULT_MAX_COMBOS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub weights: Weights,
    #[serde(default = "default_max_combos")]
    pub max_combos: u64,
    /// Added to every scenario seed.
    #[serde(default)]
    pub seed_offset: u64,
    /// Case files or bundled case names run as they are.
    #[serde(default)]
    pub cases: Vec<String>,
    #[serde(default)]
    pub scenarios: Vec<ScenarioSpec>,
    #[serde(default)]
    pub sweeps: Vec<Sweep>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            methods: all_methods(),
            weights: Weights::default(),
            max_combos: DEFAULT_MAX_COMBOS,
            seed_offset: 0,
            cases: Vec::new(),
            scenarios: Vec::new(),
            sweeps: Vec::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config field `{path}`: {message}")]
    Syntax { path: String, message: String },
    #[error("config lists no methods")]
    NoMethods,
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: BenchConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Syntax {
            path: e.path().to_string(),
            message: e.into_inner().to_string(),
        })?;
        if cfg.methods.is_empty() {
            return Err(ConfigError::NoMethods);
        }
        Ok(cfg)
    }

    /// Reads a config file. A path that does not exist but names a bundled
    /// preset loads that preset.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        if !path.exists() {
            if let Some(text) = path.to_str().and_then(crate::bundled::preset_text) {
                return Self::from_json(text);
            }
        }
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// All generated scenarios, seeds already offset.
    pub fn expanded_scenarios(&self) -> Vec<ScenarioSpec> {
        let mut out: Vec<ScenarioSpec> = self.scenarios.clone();
        for sw in &self.sweeps {
            for &k in &sw.n_stepwise {
                for &seed in &sw.seeds {
                    out.push(ScenarioSpec {
                        base: sw.base.clone(),
                        seed,
                        n_stepwise: k,
                        congestion_factor: sw.congestion_factor,
                        step_fractions: sw.step_fractions.clone(),
                    });
                }
            }
        }
        for s in &mut out {
            s.seed = s.seed.wrapping_add(self.seed_offset);
        }
        out
    }
}

/// One `results.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scenario: String,
    pub method: Method,
    pub feasible: bool,
    pub objective_mw: f64,
    pub nlp_solves: usize,
    pub power_flows: usize,
    pub wall_time_s: f64,
}

/// One `ratio.csv` row: deflation objective over two-step objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub scenario: String,
    pub n_stepwise: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub scenario: String,
    pub method: Method,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub run: String,
    pub objective_mw: Vec<f64>,
}

/// Everything a scenario run produced, kept for inspection by callers.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub id: String,
    pub n_stepwise: usize,
    pub case: Option<GridCase>,
    pub results: Vec<(Method, Result<StrategyResult, String>)>,
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub ratios: Vec<RatioRow>,
    pub failures: Vec<FailureRow>,
    pub trajectories: Vec<Trajectory>,
    pub outcomes: Vec<ScenarioOutcome>,
}

/// `objective(deflation) / objective(two-step)`. Both zero counts as 1; the
/// ratio is NaN when it is undefined.
pub fn objective_ratio(deflation: &StrategyResult, two_step: &StrategyResult) -> f64 {
    if !(deflation.feasible && two_step.feasible) {
        return f64::NAN;
    }
    const ZERO_MW: f64 = 1e-6;
    if two_step.objective.abs() <= ZERO_MW {
        return if deflation.objective.abs() <= ZERO_MW { 1.0 } else { f64::NAN };
    }
    deflation.objective / two_step.objective
}

fn run_name(scenario: &str, method: Method) -> String {
    let clean: String = scenario
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    format!("{clean}_{method}")
}

fn run_scenario(id: String, n_stepwise: usize, case: Result<GridCase, String>, cfg: &BenchConfig) -> ScenarioOutcome {
    let results = match &case {
        Ok(c) => cfg
            .methods
            .iter()
            .map(|&m| (m, run_method(c, m, &cfg.weights, cfg.max_combos).map_err(|e| e.to_string())))
            .collect(),
        Err(e) => cfg.methods.iter().map(|&m| (m, Err(e.clone()))).collect(),
    };
    ScenarioOutcome {
        id,
        n_stepwise,
        case: case.ok(),
        results,
    }
}

/// Runs every method on every scenario. Scenarios run in parallel; the report
/// lists them in configuration order.
pub fn run_benchmark(cfg: &BenchConfig) -> BenchReport {
    let mut jobs: Vec<(String, usize, Result<GridCase, String>)> = Vec::new();
    for name in &cfg.cases {
        let case = load_case(name).map_err(|e| e.to_string());
        let k = case.as_ref().map(|c| c.step_gens.len()).unwrap_or(0);
        let id = Path::new(name)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| name.clone());
        jobs.push((id, k, case));
    }
    for spec in cfg.expanded_scenarios() {
        let case = generate_scenario(&spec).map_err(|e| e.to_string());
        jobs.push((spec.id(), spec.n_stepwise, case));
    }
    let outcomes: Vec<ScenarioOutcome> = jobs
        .into_par_iter()
        .map(|(id, k, case)| run_scenario(id, k, case, cfg))
        .collect();
    assemble(outcomes)
}

fn assemble(outcomes: Vec<ScenarioOutcome>) -> BenchReport {
    let mut rep = BenchReport::default();
    for o in &outcomes {
        for (m, r) in &o.results {
            match r {
                Ok(res) => {
                    rep.rows.push(BenchRow {
                        scenario: o.id.clone(),
                        method: *m,
                        feasible: res.feasible,
                        objective_mw: res.objective,
                        nlp_solves: res.nlp_solve_count,
                        power_flows: res.power_flow_count,
                        wall_time_s: res.wall_time_s.unwrap_or(0.0),
                    });
                    rep.trajectories.push(Trajectory {
                        run: run_name(&o.id, *m),
                        objective_mw: res.trajectory.clone(),
                    });
                }
                Err(e) => {
                    rep.rows.push(BenchRow {
                        scenario: o.id.clone(),
                        method: *m,
                        feasible: false,
                        objective_mw: f64::INFINITY,
                        nlp_solves: 0,
                        power_flows: 0,
                        wall_time_s: 0.0,
                    });
                    rep.failures.push(FailureRow {
                        scenario: o.id.clone(),
                        method: *m,
                        error: e.clone(),
                    });
                }
            }
        }
        let find = |m: Method| o.results.iter().find(|(x, _)| *x == m).and_then(|(_, r)| r.as_ref().ok());
        if let (Some(d), Some(t)) = (find(Method::Deflation), find(Method::TwoStep)) {
            rep.ratios.push(RatioRow {
                scenario: o.id.clone(),
                n_stepwise: o.n_stepwise,
                ratio: objective_ratio(d, t),
            });
        }
    }
    rep.outcomes = outcomes;
    rep
}

fn csv_bytes<T: Serialize>(header: &[&str], rows: &[T]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

pub const RESULTS_HEADER: [&str; 7] = [
    "scenario",
    "method",
    "feasible",
    "objective_mw",
    "nlp_solves",
    "power_flows",
    "wall_time_s",
];
pub const TRAJECTORY_HEADER: [&str; 2] = ["iteration", "objective_mw"];
pub const RATIO_HEADER: [&str; 3] = ["scenario", "n_stepwise", "ratio"];
pub const FAILURE_HEADER: [&str; 3] = ["scenario", "method", "error"];

#[derive(Debug, thiserror::Error)]
pub enum WriteError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub fn results_csv(rows: &[BenchRow]) -> Result<Vec<u8>, csv::Error> {
    csv_bytes(&RESULTS_HEADER, rows)
}

pub fn trajectory_csv(points: &[f64]) -> Result<Vec<u8>, csv::Error> {
    let rows: Vec<(usize, f64)> = points.iter().copied().enumerate().collect();
    csv_bytes(&TRAJECTORY_HEADER, &rows)
}

pub fn ratio_csv(rows: &[RatioRow]) -> Result<Vec<u8>, csv::Error> {
    csv_bytes(&RATIO_HEADER, rows)
}

pub fn parse_results_csv(bytes: &[u8]) -> Result<Vec<BenchRow>, csv::Error> {
    csv::Reader::from_reader(bytes).deserialize().collect()
}

pub fn parse_ratio_csv(bytes: &[u8]) -> Result<Vec<RatioRow>, csv::Error> {
    csv::Reader::from_reader(bytes).deserialize().collect()
}

impl BenchReport {
    /// Writes `results.csv`, `ratio.csv`, `errors.csv` and one
    /// `trajectory_<run>.csv` per successful run into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), WriteError> {
        fs::create_dir_all(dir)?;
        atomic_write(&dir.join("results.csv"), &results_csv(&self.rows)?)?;
        atomic_write(&dir.join("ratio.csv"), &ratio_csv(&self.ratios)?)?;
        atomic_write(&dir.join("errors.csv"), &csv_bytes(&FAILURE_HEADER, &self.failures)?)?;
        for t in &self.trajectories {
            atomic_write(
                &dir.join(format!("trajectory_{}.csv", t.run)),
                &trajectory_csv(&t.objective_mw)?,
            )?;
        }
        Ok(())
    }

    pub fn row(&self, scenario: &str, method: Method) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.scenario == scenario && r.method == method)
    }
}
