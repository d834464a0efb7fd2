//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every criterion prints exactly one PASS or FAIL line.
#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use lvcoex::conditions::{check_cor34_with, check_thm33_pointwise, extinction_diagnostic, ConditionContext};
use lvcoex::functions::{GrowthFunction, InteractionFunction, SystemSpec};
use lvcoex::grid::{Grid, ScalarField};
use lvcoex::logistic::{
    bracket, check_sub_solution, check_super_solution, monotone_iteration, solve_logistic, solve_logistic_with,
    Direction, IterationControl, LogisticProblem, Reaction,
};
use lvcoex::perturb::perturbation_sweep;
use lvcoex::spectral::principal_eigenpair;
use lvcoex::system::{
    assemble_frechet, check_invertibility, default_bounds, multi_start_with, residual, solve_system, SolveMethod,
    SystemState, BOUNDS_SLACK,
};
use lvcoex_cli::{execute, load_spec, Command, Overrides, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn specs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs")
}

fn canonical() -> (SystemSpec, lvcoex_cli::SpecFile) {
    let file = load_spec(&specs_dir().join("canonical.toml"), &Overrides::default()).unwrap();
    (file.system().unwrap().clone(), file)
}

fn lambda(grid: &Grid) -> f64 {
    principal_eigenpair(grid, &grid.zeros()).unwrap().lambda
}

fn theta(grid: &Grid, h: &GrowthFunction, tol: f64) -> ScalarField {
    solve_logistic(&LogisticProblem::for_growth(grid, h), tol)
        .unwrap()
        .theta
}

fn eigenvalue_accuracy() -> Check {
    let start = Instant::now();
    let l200 = lambda(&Grid::interval(1.0, 200).unwrap());
    let elapsed = start.elapsed().as_secs_f64();
    let errs: Vec<f64> = [50, 100, 200, 400]
        .iter()
        .map(|n| (lambda(&Grid::interval(1.0, *n).unwrap()) - PI * PI).abs())
        .collect();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    let err = (l200 - PI * PI).abs();
    ensure(
        err <= 1e-2 && ratios.iter().all(|r| (3.5..=4.5).contains(r)) && elapsed < 1.0,
        format!("|λ₁ - π²| = {err:.3e}, refinement ratios {ratios:.3?}, {elapsed:.3}s"),
    )
}

fn shift_identity() -> Check {
    let grid = Grid::interval(1.0, 120).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let q = grid
            .field((0..grid.len()).map(|_| rng.gen_range(0.0..10.0)).collect())
            .unwrap();
        let base = principal_eigenpair(&grid, &q).unwrap().lambda;
        for c in [-1.0, 0.5, 3.0] {
            let shifted = grid.field(q.values().iter().map(|v| v + c).collect()).unwrap();
            let l = principal_eigenpair(&grid, &shifted).unwrap().lambda;
            worst = worst.max((l - base - c).abs());
        }
    }
    ensure(worst <= 1e-10, format!("max |λ₁(q+c) - λ₁(q) - c| = {worst:.3e}"))
}

fn logistic_threshold() -> Check {
    let grid = Grid::interval(1.0, 200).unwrap();
    let below = GrowthFunction::affine(PI * PI - 0.1, 1.0, 20.0).unwrap();
    let above = GrowthFunction::affine(PI * PI + 0.1, 1.0, 20.0).unwrap();
    let lo = theta(&grid, &below, 1e-9).norm_inf();
    let hi = theta(&grid, &above, 1e-9);
    ensure(
        lo <= 1e-6 && hi.min() > 0.0,
        format!("max θ below = {lo:.3e}, min θ above = {:.3e}", hi.min()),
    )
}

fn logistic_comparison() -> Check {
    let grid = Grid::interval(1.0, 200).unwrap();
    let t12 = theta(&grid, &GrowthFunction::affine(12.0, 1.0, 30.0).unwrap(), 1e-10);
    let t15 = theta(&grid, &GrowthFunction::affine(15.0, 1.0, 30.0).unwrap(), 1e-10);
    let excess = t12
        .values()
        .iter()
        .zip(t15.values())
        .map(|(a, b)| a - b)
        .fold(f64::NEG_INFINITY, f64::max);
    ensure(excess <= 1e-8, format!("max (θ₁₂ - θ₁₅) = {excess:.3e}"))
}

fn super_sub_limits() -> Check {
    let grid = Grid::interval(1.0, 200).unwrap();
    let h = GrowthFunction::affine(12.0, 1.0, 24.0).unwrap();
    let problem = LogisticProblem::for_growth(&grid, &h);
    let (upper, lower) = bracket(&problem).unwrap().ok_or("no bracket")?;
    let reaction = Reaction::new(h);
    let is_super = check_super_solution(&grid, &upper, &reaction, 1e-12).unwrap().passes;
    let is_sub = check_sub_solution(&grid, &lower, &reaction, 1e-12).unwrap().passes;
    let control = IterationControl::with_tol(1e-10);
    let down = monotone_iteration(&problem, &upper, Direction::Decreasing, &control).map_err(|e| e.to_string())?;
    let up = monotone_iteration(&problem, &lower, Direction::Increasing, &control).map_err(|e| e.to_string())?;
    let gap = down.limit.sup_distance(&up.limit);
    let violation = down.order_violation.max(up.order_violation);
    ensure(
        is_super && is_sub && gap <= 1e-8 && violation <= 1e-9,
        format!(
            "limit gap {gap:.3e}, worst order violation {violation:.3e}, {} + {} steps",
            down.iterations, up.iterations
        ),
    )
}

fn grid_convergence() -> Check {
    // Grids with 201 and 4020 cells share every coarse node.
    let h = GrowthFunction::affine(12.0, 1.0, 24.0).unwrap();
    let coarse = Grid::interval(1.0, 200).unwrap();
    let fine = Grid::interval(1.0, 201 * 20 - 1).unwrap();
    let tc = theta(&coarse, &h, 1e-9);
    let control = IterationControl::with_tol(1e-6);
    let tf = solve_logistic_with(&LogisticProblem::for_growth(&fine, &h), &control)
        .map_err(|e| e.to_string())?
        .theta;
    let diff = (0..coarse.len())
        .map(|k| (tc.values()[k] - tf.values()[20 * (k + 1) - 1]).abs())
        .fold(0.0, f64::max);
    ensure(diff <= 1e-4, format!("max |θ₂₀₀ - θ_ref| at shared nodes = {diff:.3e}"))
}

fn decoupled_system() -> Check {
    let grid = Grid::interval(1.0, 200).unwrap();
    let h1 = GrowthFunction::affine(12.0, 1.0, 30.0).unwrap();
    let h2 = GrowthFunction::affine(15.0, 2.0, 30.0).unwrap();
    let spec = SystemSpec::new(
        grid.clone(),
        vec![
            (h1.clone(), InteractionFunction::absent(1)),
            (h2.clone(), InteractionFunction::absent(1)),
        ],
    )
    .unwrap();
    let init = SystemState::new(&grid, vec![vec![1.0; grid.len()]; 2]).unwrap();
    let r = solve_system(&spec, &init, SolveMethod::Hybrid).map_err(|e| e.to_string())?;
    let d1 = r.state.field(0).sup_distance(&theta(&grid, &h1, 1e-10));
    let d2 = r.state.field(1).sup_distance(&theta(&grid, &h2, 1e-10));
    ensure(
        r.converged && d1.max(d2) <= 1e-8,
        format!("converged {}, distances to θ: {d1:.3e}, {d2:.3e}", r.converged),
    )
}

fn bounds_on_corpus() -> Check {
    let mut checked = 0;
    let mut notes = Vec::new();
    let mut ok = true;
    let mut entries: Vec<PathBuf> = fs::read_dir(specs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    entries.sort();
    for path in entries {
        let file = load_spec(&path, &Overrides::default()).unwrap();
        let Some(spec) = &file.system else { continue };
        let settings = &file.solver;
        let bounds = default_bounds(spec, &settings.logistic()).unwrap();
        let r = multi_start_with(
            spec,
            settings.starts.min(10),
            settings.seed,
            &settings.multi_start(),
            &bounds,
        )
        .map_err(|e| e.to_string())?;
        let inside = r
            .clusters
            .iter()
            .all(|c| bounds.contains(&c.representative, BOUNDS_SLACK));
        ok &= inside;
        checked += r.clusters.len();
        let name = path.file_stem().unwrap().to_string_lossy().into_owned();
        notes.push(format!("{name}: {} cluster(s) inside {inside}", r.clusters.len()));
    }
    ensure(ok && checked > 0, notes.join("; "))
}

fn jacobian_oracle() -> Check {
    let grid = Grid::interval(1.0, 10).unwrap();
    let spec = SystemSpec::new(
        grid.clone(),
        vec![
            (
                GrowthFunction::affine(14.0, 1.0, 30.0).unwrap(),
                InteractionFunction::linear(vec![0.2, 0.1]).unwrap(),
            ),
            (
                GrowthFunction::saturating(16.0, 20.0, 1.0, 4.0).unwrap(),
                InteractionFunction::saturating_linear(vec![0.3, 0.2], vec![0.5, 1.0]).unwrap(),
            ),
            (
                GrowthFunction::affine(13.0, 2.0, 30.0).unwrap(),
                InteractionFunction::linear(vec![0.15, 0.05]).unwrap(),
            ),
        ],
    )
    .unwrap();
    let m = grid.len();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let fields: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..m).map(|_| rng.gen_range(0.1..3.0)).collect())
            .collect();
        let state = SystemState::new(&grid, fields.clone()).unwrap();
        let dense = assemble_frechet(&spec, &state).unwrap().to_dense();
        let step = 1e-6 * 4.0;
        for col in 0..3 * m {
            let (s, k) = (col / m, col % m);
            let mut plus = fields.clone();
            let mut minus = fields.clone();
            plus[s][k] += step;
            minus[s][k] -= step;
            let rp = residual(&spec, &SystemState::new(&grid, plus).unwrap()).unwrap();
            let rm = residual(&spec, &SystemState::new(&grid, minus).unwrap()).unwrap();
            for row in 0..3 * m {
                let (i, kk) = (row / m, row % m);
                let fd = -(rp[i].values()[kk] - rm[i].values()[kk]) / (2.0 * step);
                let a = dense[row][col];
                worst = worst.max((fd - a).abs() / a.abs().max(1.0));
            }
        }
    }
    ensure(
        worst <= 1e-5,
        format!("max relative entry error {worst:.3e} over 3 states"),
    )
}

struct Canonical {
    spec: SystemSpec,
    state: Option<SystemState>,
}

fn canonical_uniqueness(out: &mut Canonical) -> Check {
    let start = Instant::now();
    let (spec, file) = canonical();
    let ctx = ConditionContext::new(&spec, &file.solver.logistic()).unwrap();
    let cor = check_cor34_with(&spec, &ctx).map_err(|e| e.to_string())?;
    let r = multi_start_with(&spec, 20, file.solver.seed, &file.solver.multi_start(), &ctx.bounds)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let min_margin = cor.entries.iter().map(|e| e.margin).fold(f64::INFINITY, f64::min);
    if r.unique {
        out.state = Some(r.clusters[0].representative.clone());
    }
    out.spec = spec;
    ensure(
        cor.all_pass() && r.unique && r.clusters.len() == 1 && r.converged == 20 && elapsed < 30.0,
        format!(
            "min condition margin {min_margin:.3e}, {} converged, {} cluster(s), {elapsed:.2}s",
            r.converged,
            r.clusters.len()
        ),
    )
}

fn local_conditions(c: &Canonical) -> Check {
    let state = c.state.as_ref().ok_or("no unique state from the previous criterion")?;
    let t33 = check_thm33_pointwise(&c.spec, state).map_err(|e| e.to_string())?;
    let inv = check_invertibility(&assemble_frechet(&c.spec, state).unwrap());
    let ratio = t33.entries.iter().filter_map(|e| e.ratio).fold(f64::INFINITY, f64::min);
    ensure(
        t33.all_pass() && inv.invertible,
        format!(
            "min pointwise ratio {ratio:.3}, σ_min = {:.3e} (‖B‖∞ = {:.3e})",
            inv.sigma_min, inv.norm_inf
        ),
    )
}

fn perturbation_persistence(c: &Canonical) -> Check {
    let start = Instant::now();
    let deltas = [1e-4, 1e-3, 1e-2];
    let r = perturbation_sweep(&c.spec, &deltas, 8, 12, 2024).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut increasing = true;
    let mut ratios = Vec::new();
    for dir in &r.directions {
        let d: Vec<f64> = deltas.iter().map(|x| r.cell(dir.id, *x).unwrap().distance).collect();
        increasing &= d[0] < d[1] && d[1] < d[2];
        ratios.push(d[1] / d[2]);
    }
    let (lo, hi) = ratios
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(*r), b.max(*r)));
    ensure(
        r.unanimous() && increasing && lo >= 0.05 && hi <= 0.2 && elapsed < 300.0,
        format!(
            "unanimous {}, distances increasing {increasing}, d(1e-3)/d(1e-2) in [{lo:.3}, {hi:.3}], {elapsed:.1}s",
            r.unanimous()
        ),
    )
}

fn extinction_diagnostic_check() -> Check {
    let grid = Grid::interval(1.0, 120).unwrap();
    let c = 2.0;
    let h2 = GrowthFunction::affine(12.0, 1.0, 24.0).unwrap();
    let t2 = theta(&grid, &h2, 1e-10);
    let l = principal_eigenpair(&grid, &t2.scaled(c)).unwrap().lambda;
    let h1 = GrowthFunction::affine(l - 1.0, 1.0, 24.0).unwrap();
    let spec = SystemSpec::new(
        grid.clone(),
        vec![
            (h1, InteractionFunction::linear(vec![c]).unwrap()),
            (h2, InteractionFunction::linear(vec![0.1]).unwrap()),
        ],
    )
    .unwrap();
    let init = SystemState::new(&grid, vec![vec![0.0; grid.len()], t2.scaled(0.5).into_values()]).unwrap();
    let r = solve_system(&spec, &init, SolveMethod::Hybrid).map_err(|e| e.to_string())?;
    let report = extinction_diagnostic(&spec, &r.state).map_err(|e| e.to_string())?;
    let entry = report.get("T32.1").ok_or("species 1 not reported extinct")?;
    let gap = entry.rhs - entry.lhs;
    let u2 = r.state.field(1).sup_distance(&t2);
    ensure(
        r.converged && gap <= 0.0 && entry.pass && u2 <= 1e-7,
        format!("h₁(0) - λ₁(q₁) = {gap:.6}, |u₂ - θ₂| = {u2:.3e}"),
    )
}

fn symmetry() -> Check {
    let grid = Grid::interval(1.0, 200).unwrap();
    let h = GrowthFunction::affine(12.0, 1.0, 24.0).unwrap();
    let g = InteractionFunction::linear(vec![0.1]).unwrap();
    let spec = SystemSpec::new(grid.clone(), vec![(h.clone(), g.clone()), (h, g)]).unwrap();
    let bump = grid.sample(|x| 2.0 * (PI * x[0]).sin());
    let init = SystemState::from_fields(&[bump.clone(), bump]).unwrap();
    let r = solve_system(&spec, &init, SolveMethod::Hybrid).map_err(|e| e.to_string())?;
    let d = r.state.field(0).sup_distance(&r.state.field(1));
    ensure(r.converged && d <= 1e-8, format!("‖u₁ - u₂‖∞ = {d:.3e}"))
}

fn determinism() -> Check {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut outputs = Vec::new();
    for dir in &dirs {
        let config = RunConfig {
            spec: specs_dir().join("canonical.toml"),
            command: Command::Certify,
            out_dir: dir.path().to_path_buf(),
            overrides: Overrides::default(),
        };
        let outcome = execute(&config).map_err(|e| e.to_string())?;
        let mut files: Vec<(String, Vec<u8>)> = outcome
            .files
            .iter()
            .map(|p| {
                (
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    fs::read(p).unwrap(),
                )
            })
            .collect();
        files.sort();
        outputs.push((outcome.exit_code, files));
    }
    let same = outputs[0] == outputs[1];
    ensure(
        same && outputs[0].0 == 0,
        format!(
            "{} files, byte-identical {same}, exit {}",
            outputs[0].1.len(),
            outputs[0].0
        ),
    )
}

fn guarded(f: impl FnOnce() -> Check) -> Check {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() -> ExitCode {
    let mut canon = Canonical {
        spec: canonical().0,
        state: None,
    };
    let mut results: Vec<(&str, Check)> = vec![
        ("principal eigenvalue and refinement", guarded(eigenvalue_accuracy)),
        ("eigenvalue shift identity", guarded(shift_identity)),
        ("logistic persistence threshold", guarded(logistic_threshold)),
        ("logistic comparison", guarded(logistic_comparison)),
        (
            "monotone iteration from super and sub solutions",
            guarded(super_sub_limits),
        ),
        ("grid convergence of the logistic solution", guarded(grid_convergence)),
        ("decoupled system", guarded(decoupled_system)),
        ("a priori bounds on the spec corpus", guarded(bounds_on_corpus)),
        ("Jacobian against finite differences", guarded(jacobian_oracle)),
    ];
    results.push((
        "global uniqueness on the canonical spec",
        guarded(|| canonical_uniqueness(&mut canon)),
    ));
    results.push(("local conditions at the solution", guarded(|| local_conditions(&canon))));
    results.push((
        "persistence under perturbation",
        guarded(|| perturbation_persistence(&canon)),
    ));
    results.push(("extinction diagnostic", guarded(extinction_diagnostic_check)));
    results.push(("symmetry", guarded(symmetry)));
    results.push(("deterministic certification", guarded(determinism)));

    let mut failed = 0;
    for (n, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(detail) => println!("[PASS] criterion {}: {name} ({detail})", n + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] criterion {}: {name} ({detail})", n + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
