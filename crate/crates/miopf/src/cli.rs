//! Command-line front end: `solve`, `bench` and `validate`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use miopf_core::{GridCase, StrategyError, StrategyResult, Weights, DEFAULT_MAX_COMBOS};
use serde::Serialize;

use crate::atomic_write;
use crate::bench::{results_csv, run_method, trajectory_csv, BenchConfig, BenchRow, Method};
use crate::case_file::{load_case, CaseError};
use crate::scenario::{generate_scenario, ScenarioSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "miopf", version, about = "Mixed-integer AC-OPF with stepwise controllable generators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one case with one strategy.
    Solve(SolveArgs),
    /// Run a configuration-driven benchmark sweep.
    Bench(BenchArgs),
    /// Check a case file and list every problem found.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct WeightArgs {
    /// Weight on squared voltage violation, 1/V².
    #[arg(long)]
    pub w1: Option<f64>,
    /// Weight on squared loading violation, 1/kW².
    #[arg(long)]
    pub w2: Option<f64>,
    /// Weight on curtailment, 1/kW.
    #[arg(long)]
    pub w3: Option<f64>,
}

impl WeightArgs {
    fn apply(&self, mut w: Weights) -> Weights {
        w.w1 = self.w1.unwrap_or(w.w1);
        w.w2 = self.w2.unwrap_or(w.w2);
        w.w3 = self.w3.unwrap_or(w.w3);
        w
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Case file, or the name of a bundled case.
    #[arg(long)]
    pub case: String,
    #[arg(long, value_enum, default_value_t = Method::Deflation)]
    pub method: Method,
    #[command(flatten)]
    pub weights: WeightArgs,
    /// Directory for results.csv, the trajectory and solution.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Generate a congestion scenario from the case with this seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stepwise devices in the generated scenario.
    #[arg(long, default_value_t = 2, requires = "seed")]
    pub n_stepwise: usize,
    /// Feed-in multiplier of the generated scenario.
    #[arg(long, default_value_t = 2.0, requires = "seed")]
    pub congestion_factor: f64,
    /// Largest number of step combinations the oracle will enumerate.
    #[arg(long, default_value_t = DEFAULT_MAX_COMBOS)]
    pub max_combos: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// JSON benchmark configuration.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "bench-out")]
    pub out: PathBuf,
    /// Added to every scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[arg(long)]
    pub max_combos: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub case: String,
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Solve(a) => solve(&a, out),
        Command::Bench(a) => bench(&a, out),
        Command::Validate(a) => validate(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
    }
}

fn report_case_error(e: &CaseError) -> String {
    e.to_string()
}

#[derive(Serialize)]
struct SolutionFile<'a> {
    method: Method,
    feasible: bool,
    objective_mw: f64,
    assignment: Option<&'a [usize]>,
    step_mw: Option<Vec<f64>>,
    cont_mw: Option<&'a [f64]>,
    v: Option<&'a [f64]>,
    theta: Option<&'a [f64]>,
    nlp_solves: usize,
    power_flows: usize,
    trajectory_mw: &'a [f64],
    removals: &'a [(usize, usize)],
}

fn load_for_solve(a: &SolveArgs) -> Result<(String, GridCase), String> {
    match a.seed {
        Some(seed) => {
            let spec = ScenarioSpec::new(a.case.clone(), seed, a.n_stepwise, a.congestion_factor);
            let case = generate_scenario(&spec).map_err(|e| e.to_string())?;
            Ok((spec.id(), case))
        }
        None => {
            let case = load_case(&a.case).map_err(|e| report_case_error(&e))?;
            let id = Path::new(&a.case)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| a.case.clone());
            Ok((id, case))
        }
    }
}

fn solve(a: &SolveArgs, out: &mut dyn Write) -> Result<i32, String> {
    let weights = a.weights.apply(Weights::default());
    if !weights.is_valid() {
        return Err("weights must be finite and non-negative".into());
    }
    let (id, case) = load_for_solve(a)?;
    let res = match run_method(&case, a.method, &weights, a.max_combos) {
        Ok(r) => r,
        Err(e @ StrategyError::TooManyCombinations { .. }) => {
            return Err(format!("{e}; raise --max-combos or choose another method"));
        }
        Err(e) => return Err(e.to_string()),
    };
    print_summary(out, &id, a.method, &case, &res).map_err(|e| e.to_string())?;
    if let Some(dir) = &a.out {
        write_solve_outputs(dir, &id, a.method, &case, &res).map_err(|e| e.to_string())?;
    }
    Ok(if res.feasible { EXIT_OK } else { EXIT_INFEASIBLE })
}

fn print_summary(
    out: &mut dyn Write,
    id: &str,
    method: Method,
    case: &GridCase,
    res: &StrategyResult,
) -> std::io::Result<()> {
    writeln!(out, "case        {id} ({} buses, {} stepwise devices)", case.num_buses(), case.step_gens.len())?;
    writeln!(out, "method      {method}")?;
    writeln!(out, "feasible    {}", res.feasible)?;
    if res.feasible {
        writeln!(out, "curtailment {:.6} MW", res.objective)?;
    }
    if let Some(a) = &res.assignment {
        let steps = a.steps_mw(case);
        let parts: Vec<String> = a
            .0
            .iter()
            .zip(&steps)
            .enumerate()
            .map(|(k, (l, p))| format!("#{k}: step {l} = {p:.3} MW"))
            .collect();
        writeln!(out, "assignment  {}", parts.join(", "))?;
    }
    writeln!(out, "nlp solves  {}", res.nlp_solve_count)?;
    writeln!(out, "power flows {}", res.power_flow_count)?;
    if let Some(t) = res.wall_time_s {
        writeln!(out, "wall time   {t:.3} s")?;
    }
    Ok(())
}

fn write_solve_outputs(
    dir: &Path,
    id: &str,
    method: Method,
    case: &GridCase,
    res: &StrategyResult,
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let row = BenchRow {
        scenario: id.to_string(),
        method,
        feasible: res.feasible,
        objective_mw: res.objective,
        nlp_solves: res.nlp_solve_count,
        power_flows: res.power_flow_count,
        wall_time_s: res.wall_time_s.unwrap_or(0.0),
    };
    let csv_err = |e: csv::Error| std::io::Error::other(e.to_string());
    atomic_write(&dir.join("results.csv"), &results_csv(&[row]).map_err(csv_err)?)?;
    atomic_write(
        &dir.join(format!("trajectory_{id}_{method}.csv")),
        &trajectory_csv(&res.trajectory).map_err(csv_err)?,
    )?;
    let sol = res.final_solution.as_ref().filter(|s| s.is_optimal());
    let file = SolutionFile {
        method,
        feasible: res.feasible,
        objective_mw: res.objective,
        assignment: res.assignment.as_ref().map(|a| a.0.as_slice()),
        step_mw: res.assignment.as_ref().map(|a| a.steps_mw(case)),
        cont_mw: sol.map(|s| s.cont_p.as_slice()),
        v: sol.map(|s| s.state.v.as_slice()),
        theta: sol.map(|s| s.state.theta.as_slice()),
        nlp_solves: res.nlp_solve_count,
        power_flows: res.power_flow_count,
        trajectory_mw: &res.trajectory,
        removals: &res.removals,
    };
    let mut json = serde_json::to_string_pretty(&file).map_err(std::io::Error::other)?;
    json.push('\n');
    atomic_write(&dir.join("solution.json"), json.as_bytes())
}

fn bench(a: &BenchArgs, out: &mut dyn Write) -> Result<i32, String> {
    let mut cfg = BenchConfig::load(&a.config).map_err(|e| e.to_string())?;
    cfg.weights = a.weights.apply(cfg.weights);
    if !cfg.weights.is_valid() {
        return Err("weights must be finite and non-negative".into());
    }
    if let Some(s) = a.seed {
        cfg.seed_offset = s;
    }
    if let Some(m) = a.max_combos {
        cfg.max_combos = m;
    }
    let report = crate::bench::run_benchmark(&cfg);
    report.write(&a.out).map_err(|e| e.to_string())?;
    let io = |e: std::io::Error| e.to_string();
    writeln!(out, "{:<24} {:<10} {:>9} {:>14} {:>6} {:>7} {:>9}", "scenario", "method", "feasible", "objective_mw", "nlp", "pf", "time_s").map_err(io)?;
    for r in &report.rows {
        writeln!(
            out,
            "{:<24} {:<10} {:>9} {:>14.6} {:>6} {:>7} {:>9.3}",
            r.scenario, r.method, r.feasible, r.objective_mw, r.nlp_solves, r.power_flows, r.wall_time_s
        )
        .map_err(io)?;
    }
    for f in &report.failures {
        writeln!(out, "failed: {} {}: {}", f.scenario, f.method, f.error).map_err(io)?;
    }
    writeln!(out, "wrote {}", a.out.display()).map_err(io)?;
    Ok(EXIT_OK)
}

fn validate(a: &ValidateArgs, out: &mut dyn Write) -> Result<i32, String> {
    match load_case(&a.case) {
        Ok(c) => {
            writeln!(
                out,
                "valid: {} buses, {} branches, {} continuous and {} stepwise generators",
                c.num_buses(),
                c.branches.len(),
                c.cont_gens.len(),
                c.step_gens.len()
            )
            .map_err(|e| e.to_string())?;
            Ok(EXIT_OK)
        }
        Err(CaseError::Invalid(v)) => {
            let lines: Vec<String> = v.errors().iter().map(|e| e.to_string()).collect();
            Err(format!("{} problem(s) in {}:\n  {}", lines.len(), a.case, lines.join("\n  ")))
        }
        Err(e) => Err(report_case_error(&e)),
    }
}
