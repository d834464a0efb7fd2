use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use lvcoex::conditions::{
    check_cor34_with, check_hypotheses_with, check_thm31a_with, check_thm33_pointwise, compute_k_with,
    extinction_diagnostic_with, ConditionContext, ConditionReport,
};
use lvcoex::grid::{fields_to_csv, format_value, Grid};
use lvcoex::logistic::{solve_logistic_with, LogisticProblem};
use lvcoex::perturb::perturbation_sweep_with;
use lvcoex::spectral::principal_eigenpair;
use lvcoex::system::{
    assemble_frechet, check_invertibility, default_bounds, multi_start_with, solve_system_with, SystemState,
    BOUNDS_SLACK,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{load_spec, Overrides, SpecFile};
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve,
    Eigen,
    Logistic,
    Check,
    Uniqueness,
    Perturb,
    Certify,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: PathBuf,
    pub command: Command,
    pub out_dir: PathBuf,
    pub overrides: Overrides,
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub verdict: String,
    pub files: Vec<PathBuf>,
}

/// Runs a command, prints the verdict (stdout) or error (stderr), and
/// returns the process exit code.
pub fn run(config: &RunConfig) -> i32 {
    match execute(config) {
        Ok(outcome) => {
            println!("{}", outcome.verdict);
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Output {
    report: Value,
    files: Vec<(String, String)>,
    verdict: String,
    exit_code: i32,
}

pub fn execute(config: &RunConfig) -> Result<Outcome, CliError> {
    let spec = load_spec(&config.spec, &config.overrides)?;
    fs::create_dir_all(&config.out_dir)?;
    let out = match config.command {
        Command::Eigen => eigen(&spec)?,
        Command::Logistic => logistic(&spec)?,
        Command::Solve => solve(&spec)?,
        Command::Check => check(&spec)?,
        Command::Uniqueness => uniqueness(&spec)?,
        Command::Perturb => perturb(&spec)?,
        Command::Certify => certify(&spec)?,
    };
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": config.command,
        "grid": spec.grid,
        "system": spec.system,
        "solver": spec.solver,
        "result": out.report,
        "verdict": out.verdict,
    });
    let mut files = Vec::new();
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    files.push(write(&config.out_dir, REPORT_FILE, &text)?);
    for (name, contents) in &out.files {
        files.push(write(&config.out_dir, name, contents)?);
    }
    Ok(Outcome {
        exit_code: out.exit_code,
        verdict: out.verdict,
        files,
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn state_csv(grid: &Grid, groups: &[(&str, &SystemState)]) -> String {
    let names: Vec<String> = groups
        .iter()
        .flat_map(|(prefix, s)| (0..s.n_species()).map(move |i| format!("{prefix}{}", i + 1)))
        .collect();
    let values: Vec<&[f64]> = groups
        .iter()
        .flat_map(|(_, s)| (0..s.n_species()).map(move |i| s.values(i)))
        .collect();
    let columns: Vec<(&str, &[f64])> = names.iter().map(|n| n.as_str()).zip(values).collect();
    fields_to_csv(grid, &columns)
}

fn failing_ids(reports: &[&ConditionReport]) -> Vec<String> {
    reports
        .iter()
        .flat_map(|r| r.failures())
        .map(|e| e.id.clone())
        .collect()
}

fn eigen(spec: &SpecFile) -> Result<Output, CliError> {
    let q = spec.grid.constant(spec.potential);
    let pair = principal_eigenpair(&spec.grid, &q)?;
    Ok(Output {
        report: json!({
            "potential": spec.potential,
            "lambda": pair.lambda,
            "residual": pair.residual,
            "iterations": pair.iterations,
        }),
        files: vec![(
            "eigen.csv".into(),
            fields_to_csv(&spec.grid, &[("phi", pair.phi.values())]),
        )],
        verdict: format!("lambda_1 = {}", format_value(pair.lambda)),
        exit_code: 0,
    })
}

fn logistic(spec: &SpecFile) -> Result<Output, CliError> {
    let system = spec.system()?;
    let control = spec.solver.logistic();
    let mut entries = Vec::new();
    let mut names = Vec::new();
    let mut columns = Vec::new();
    for (i, sp) in system.species().iter().enumerate() {
        let upper = solve_logistic_with(&LogisticProblem::for_growth(&spec.grid, &sp.h), &control)?;
        let shift = system.competition_at_roots(i);
        let lower = solve_logistic_with(&LogisticProblem::shifted(&spec.grid, &sp.h, shift), &control)?;
        let summary = |s: &lvcoex::logistic::LogisticSolution| {
            json!({
                "positive": s.positive,
                "max": s.theta.max(),
                "residual": s.residual,
                "iterations": s.iterations,
                "bracket_gap": s.bracket_gap,
            })
        };
        entries.push(json!({
            "species": i + 1,
            "theta": summary(&upper),
            "lower": summary(&lower),
            "shift": shift,
        }));
        names.push(format!("theta_{}", i + 1));
        names.push(format!("lower_{}", i + 1));
        columns.push(upper.theta.into_values());
        columns.push(lower.theta.into_values());
    }
    let cols: Vec<(&str, &[f64])> = names
        .iter()
        .map(|n| n.as_str())
        .zip(columns.iter().map(|c| c.as_slice()))
        .collect();
    let positive = entries.iter().filter(|e| e["theta"]["positive"] == json!(true)).count();
    Ok(Output {
        report: json!({ "species": entries }),
        files: vec![("logistic.csv".into(), fields_to_csv(&spec.grid, &cols))],
        verdict: format!(
            "{positive} of {} logistic problems have a positive solution",
            entries.len()
        ),
        exit_code: 0,
    })
}

fn solve(spec: &SpecFile) -> Result<Output, CliError> {
    let system = spec.system()?;
    let bounds = default_bounds(system, &spec.solver.logistic())?;
    let report = solve_system_with(system, &bounds.upper, &spec.solver.solve(), Some(&bounds))?;
    let verdict = if report.converged {
        format!(
            "converged: residual {} after {} iterations",
            format_value(report.residual),
            report.iterations
        )
    } else {
        format!("not converged: residual {}", format_value(report.residual))
    };
    Ok(Output {
        report: json!({
            "converged": report.converged,
            "residual": report.residual,
            "iterations": report.iterations,
            "newton_steps": report.newton_steps,
            "picard_sweeps": report.picard_sweeps,
            "within_bounds": report.within_bounds,
            "method": report.method,
            "extinct_species": report.state.extinct_species().iter().map(|i| i + 1).collect::<Vec<_>>(),
        }),
        files: vec![(
            "solution.csv".into(),
            state_csv(
                &spec.grid,
                &[("u", &report.state), ("lower", &bounds.lower), ("upper", &bounds.upper)],
            ),
        )],
        verdict,
        exit_code: if report.converged { 0 } else { 4 },
    })
}

fn check(spec: &SpecFile) -> Result<Output, CliError> {
    let system = spec.system()?;
    let ctx = ConditionContext::new(system, &spec.solver.logistic())?;
    let hyp = check_hypotheses_with(system, &ctx);
    let cor = check_cor34_with(system, &ctx)?;
    let t31 = check_thm31a_with(system, &ctx)?;
    let k = compute_k_with(&ctx);
    let failing = failing_ids(&[&hyp, &cor, &t31]);
    let verdict = if failing.is_empty() {
        "all conditions pass".to_string()
    } else {
        format!("failing conditions: {}", failing.join(", "))
    };
    Ok(Output {
        report: json!({
            "lambda1": ctx.lambda1,
            "k": k.as_ref().ok(),
            "k_error": k.as_ref().err().map(|e| e.to_string()),
            "hypotheses": hyp,
            "cor34": cor,
            "thm31a": t31,
        }),
        files: vec![],
        verdict,
        exit_code: 0,
    })
}

fn uniqueness(spec: &SpecFile) -> Result<Output, CliError> {
    let system = spec.system()?;
    let s = &spec.solver;
    let bounds = default_bounds(system, &s.logistic())?;
    let report = multi_start_with(system, s.starts, s.seed, &s.multi_start(), &bounds)?;
    let reps: Vec<(String, &SystemState)> = report
        .clusters
        .iter()
        .enumerate()
        .map(|(c, cl)| (format!("c{}_u", c + 1), &cl.representative))
        .collect();
    let groups: Vec<(&str, &SystemState)> = reps.iter().map(|(n, s)| (n.as_str(), *s)).collect();
    let mut files = Vec::new();
    if !groups.is_empty() {
        files.push(("clusters.csv".into(), state_csv(&spec.grid, &groups)));
    }
    Ok(Output {
        verdict: report.verdict.clone(),
        report: serde_json::to_value(&report).expect("report serializes"),
        files,
        exit_code: 0,
    })
}

fn perturb(spec: &SpecFile) -> Result<Output, CliError> {
    let system = spec.system()?;
    let report = perturbation_sweep_with(system, &spec.solver.sweep())?;
    let verdict = persistence_verdict(report.max_unique_delta, report.exploratory);
    Ok(Output {
        files: vec![("perturb.csv".into(), report.to_csv())],
        report: serde_json::to_value(&report).expect("report serializes"),
        verdict,
        exit_code: 0,
    })
}

fn persistence_verdict(max_delta: Option<f64>, exploratory: bool) -> String {
    let tag = if exploratory { " (exploratory)" } else { "" };
    match max_delta {
        Some(d) => format!("uniqueness persists to delta={d}{tag}"),
        None => format!("uniqueness not observed{tag}"),
    }
}

fn certify(spec: &SpecFile) -> Result<Output, CliError> {
    let system = spec.system()?;
    let s = &spec.solver;
    let ctx = ConditionContext::new(system, &s.logistic())?;
    let hyp = check_hypotheses_with(system, &ctx);
    let cor = check_cor34_with(system, &ctx)?;
    let t31 = check_thm31a_with(system, &ctx)?;
    let ms = multi_start_with(system, s.starts, s.seed, &s.multi_start(), &ctx.bounds)?;

    let mut failing = failing_ids(&[&hyp, &cor]);
    if !ms.unique {
        failing.push("uniqueness".into());
    }
    let mut files = Vec::new();
    let mut at_solution = Value::Null;
    if let Some(cluster) = ms.clusters.first() {
        let state = &cluster.representative;
        let t33 = check_thm33_pointwise(system, state)?;
        let inv = check_invertibility(&assemble_frechet(system, state)?);
        let within = ctx.bounds.contains(state, BOUNDS_SLACK);
        failing.extend(failing_ids(&[&t33]));
        if !inv.invertible {
            failing.push("invertibility".into());
        }
        if !within {
            failing.push("bounds".into());
        }
        at_solution = json!({ "thm33": t33, "invertibility": inv, "within_bounds": within });
        files.push((
            "solution.csv".to_string(),
            state_csv(
                &spec.grid,
                &[("u", state), ("lower", &ctx.bounds.lower), ("upper", &ctx.bounds.upper)],
            ),
        ));
    }
    let extinction = match ms.extinct_states.first() {
        Some(state) => Some(extinction_diagnostic_with(system, state, &ctx)?),
        None => None,
    };

    let sweep = perturbation_sweep_with(system, &s.sweep())?;
    let smallest = sweep.deltas.iter().copied().find(|d| *d > 0.0);
    if let Some(d) = smallest {
        if !sweep.cells.iter().filter(|c| c.delta == d).all(|c| c.unique) {
            failing.push("persistence".into());
        }
    }
    files.push(("perturb.csv".to_string(), sweep.to_csv()));

    let verdict = if failing.is_empty() {
        let radius = sweep.max_unique_delta.map_or("0".to_string(), |d| d.to_string());
        format!("unique coexistence state; persists to δ={radius}")
    } else {
        format!("certification failed: {}", failing.join(", "))
    };
    Ok(Output {
        report: json!({
            "lambda1": ctx.lambda1,
            "k": compute_k_with(&ctx).ok(),
            "hypotheses": hyp,
            "cor34": cor,
            "thm31a": t31,
            "uniqueness": ms,
            "at_solution": at_solution,
            "extinction": extinction,
            "perturbation": sweep,
            "failing": failing,
        }),
        files,
        exit_code: if failing.is_empty() { 0 } else { 1 },
        verdict,
    })
}
