//! Positive solutions of the scalar logistic problem `Δu + u f(u) = 0`,
//! `u = 0` on the boundary, by monotone iteration between an ordered pair of
//! super and sub solutions.
//!
//! Each step solves `(-Δ_h + M) u_{n+1} = M u_n + u_n f(u_n)`. When `M`
//! dominates the Lipschitz constant of `u ↦ u f(u)` on `[0, c0]` the right-hand
//! side is increasing in `u_n`, and since `(-Δ_h + M)^{-1}` is entrywise
//! non-negative the iteration preserves order: started from the constant `c0`
//! it decreases, started from `ε φ₁` it increases.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functions::{scan_upper_bound, GrowthFamily, GrowthFunction};
use crate::grid::{Grid, HelmholtzSolver, LinearSolver, ScalarField};
use crate::linalg::{norm_inf, sup_distance};
use crate::spectral::principal_eigenpair;

pub const DEFAULT_TOL_RES: f64 = 1e-9;
pub const DEFAULT_MAX_ITERATIONS: usize = 500_000;
const MAX_EPSILON_HALVINGS: usize = 60;

/// Effective reaction `f(u) = h(u) - offset`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reaction {
    pub h: GrowthFunction,
    pub offset: f64,
}

impl Reaction {
    pub fn new(h: GrowthFunction) -> Self {
        Reaction { h, offset: 0.0 }
    }

    pub fn shifted(h: GrowthFunction, offset: f64) -> Self {
        Reaction { h, offset }
    }

    pub fn value(&self, u: f64) -> f64 {
        self.h.eval(u) - self.offset
    }

    pub fn derivative(&self, u: f64) -> f64 {
        self.h.eval_prime(u)
    }

    /// Smallest `c0 > 0` with `f(c0) <= 0`, if `f(0) > 0`.
    pub fn root(&self) -> Option<f64> {
        let mut c0 = self.h.level_crossing(self.offset)?;
        while self.value(c0) > 0.0 {
            c0 = c0.next_up();
        }
        Some(c0)
    }

    /// Bound on `sup |d/du (u f(u))|` over `[0, c0]`.
    pub fn lipschitz_bound(&self, c0: f64) -> f64 {
        match *self.h.family() {
            GrowthFamily::Affine { a, b } => (a - self.offset).abs() + 2.0 * b * c0,
            _ => scan_upper_bound(|u| (self.value(u) + u * self.derivative(u)).abs(), 0.0, c0),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LogisticProblem {
    pub grid: Grid,
    pub reaction: Reaction,
    /// Level above which the reaction is non-positive; 0 when `f(0) <= 0`.
    pub c0: f64,
}

impl LogisticProblem {
    pub fn new(grid: &Grid, reaction: Reaction) -> Self {
        let c0 = reaction.root().unwrap_or(0.0);
        LogisticProblem {
            grid: grid.clone(),
            reaction,
            c0,
        }
    }

    /// `f(u) = h(u)`.
    pub fn for_growth(grid: &Grid, h: &GrowthFunction) -> Self {
        LogisticProblem::new(grid, Reaction::new(h.clone()))
    }

    /// `f(u) = h(u) - offset`.
    pub fn shifted(grid: &Grid, h: &GrowthFunction, offset: f64) -> Self {
        LogisticProblem::new(grid, Reaction::shifted(h.clone(), offset))
    }

    pub fn residual_values(&self, u: &[f64]) -> Vec<f64> {
        residual_values(&self.grid, &self.reaction, u)
    }

    /// Stabilization constant of the monotone iteration.
    pub fn stabilization(&self) -> f64 {
        self.reaction.lipschitz_bound(self.c0)
    }
}

/// `Δ_h u + u f(u)` at every node.
pub fn residual_values(grid: &Grid, reaction: &Reaction, u: &[f64]) -> Vec<f64> {
    let mut r = grid.laplacian_values(u);
    for (ri, ui) in r.iter_mut().zip(u) {
        *ri += ui * reaction.value(*ui);
    }
    r
}

#[derive(Debug, Clone, Serialize)]
pub struct LogisticSolution {
    pub theta: ScalarField,
    pub iterations: usize,
    pub residual: f64,
    pub positive: bool,
    /// Sup distance between the limits from the super and sub solutions.
    pub bracket_gap: f64,
}

impl LogisticSolution {
    fn zero(grid: &Grid) -> Self {
        LogisticSolution {
            theta: grid.zeros(),
            iterations: 0,
            residual: 0.0,
            positive: false,
            bracket_gap: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Decreasing,
    Increasing,
}

/// Limit and diagnostics of one monotone iteration.
#[derive(Debug, Clone, Serialize)]
pub struct MonotoneRun {
    pub limit: ScalarField,
    pub iterations: usize,
    pub residual: f64,
    /// Largest pointwise move against the expected direction over all steps.
    pub order_violation: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct IterationControl {
    pub tol_res: f64,
    pub max_iterations: usize,
    pub linear_solver: LinearSolver,
}

impl Default for IterationControl {
    fn default() -> Self {
        IterationControl {
            tol_res: DEFAULT_TOL_RES,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            linear_solver: LinearSolver::Direct,
        }
    }
}

impl IterationControl {
    pub fn with_tol(tol_res: f64) -> Self {
        IterationControl {
            tol_res,
            ..Default::default()
        }
    }
}

/// One linearized step `(-Δ_h + M) w = M u + u (h(u) - shift)` with a
/// node-wise shift; iterates are clipped at zero.
pub fn linearized_step(
    solver: &HelmholtzSolver,
    stabilization: f64,
    h: &GrowthFunction,
    shift: &[f64],
    u: &[f64],
) -> Result<Vec<f64>> {
    let rhs: Vec<f64> = u
        .iter()
        .zip(shift)
        .map(|(ui, s)| stabilization * ui + ui * (h.eval(*ui) - s))
        .collect();
    let mut w = solver.solve_values(&rhs)?;
    for v in &mut w {
        *v = v.max(0.0);
    }
    Ok(w)
}

/// Runs the monotone iteration from `start` until the increment, an estimate
/// of the remaining error, and the residual are all below `tol_res`.
pub fn monotone_iteration(
    problem: &LogisticProblem,
    start: &ScalarField,
    direction: Direction,
    control: &IterationControl,
) -> Result<MonotoneRun> {
    let grid = &problem.grid;
    grid.check(start)?;
    let m = problem.stabilization();
    let solver = HelmholtzSolver::new(grid, m, control.linear_solver)?;
    run_monotone(problem, &solver, m, start.values().to_vec(), direction, control)
}

fn run_monotone(
    problem: &LogisticProblem,
    solver: &HelmholtzSolver,
    m: f64,
    mut u: Vec<f64>,
    direction: Direction,
    control: &IterationControl,
) -> Result<MonotoneRun> {
    let grid = &problem.grid;
    let shift = vec![problem.reaction.offset; grid.len()];
    let h = &problem.reaction.h;
    let tol = control.tol_res;
    let allowed_violation = 1e-9 * problem.c0.max(1.0);
    let mut order_violation: f64 = 0.0;
    let mut prev_increment = f64::INFINITY;
    let mut residual = norm_inf(&problem.residual_values(&u));
    for it in 1..=control.max_iterations {
        let next = linearized_step(solver, m, h, &shift, &u)?;
        let mut increment: f64 = 0.0;
        for (a, b) in next.iter().zip(&u) {
            let d = a - b;
            increment = increment.max(d.abs());
            let wrong = match direction {
                Direction::Decreasing => d,
                Direction::Increasing => -d,
            };
            order_violation = order_violation.max(wrong);
        }
        if order_violation > allowed_violation {
            return Err(Error::MonotonicityViolation {
                step: it,
                violation: order_violation,
            });
        }
        u = next;
        residual = norm_inf(&problem.residual_values(&u));
        let floor = 64.0 * f64::EPSILON * (1.0 + norm_inf(&u));
        let rate = increment / prev_increment;
        let remaining = if increment <= floor {
            increment
        } else if rate < 1.0 {
            increment * rate / (1.0 - rate)
        } else {
            f64::INFINITY
        };
        prev_increment = increment;
        if increment <= tol && remaining <= tol && residual <= tol {
            return Ok(MonotoneRun {
                limit: ScalarField::from_parts(grid, u),
                iterations: it,
                residual,
                order_violation,
            });
        }
    }
    Err(Error::numerical(
        format!(
            "monotone iteration did not converge in {} steps",
            control.max_iterations
        ),
        residual,
    ))
}

/// Amplitude `ε` with `f(ε · max φ₁) > λ₁ + 1e-8`, by halving from `c0 / 2`.
pub fn sub_solution_amplitude(problem: &LogisticProblem, lambda1: f64) -> Option<f64> {
    let mut eps = problem.c0 / 2.0;
    for _ in 0..=MAX_EPSILON_HALVINGS {
        if problem.reaction.value(eps) > lambda1 + 1e-8 {
            return Some(eps);
        }
        eps /= 2.0;
    }
    None
}

/// Super and sub solution starts for the monotone iteration, or `None` when
/// no positive solution exists (`f(0) <= λ₁`).
pub fn bracket(problem: &LogisticProblem) -> Result<Option<(ScalarField, ScalarField)>> {
    let grid = &problem.grid;
    if problem.c0 <= 0.0 {
        return Ok(None);
    }
    let pair = principal_eigenpair(grid, &grid.zeros())?;
    if problem.reaction.value(0.0) <= pair.lambda {
        return Ok(None);
    }
    let Some(eps) = sub_solution_amplitude(problem, pair.lambda) else {
        return Ok(None);
    };
    Ok(Some((grid.constant(problem.c0), pair.phi.scaled(eps))))
}

/// `θ_f`: the positive solution of the logistic problem, or the zero field
/// with `positive = false` when `f(0) <= λ₁`.
pub fn solve_logistic(problem: &LogisticProblem, tol_res: f64) -> Result<LogisticSolution> {
    solve_logistic_with(problem, &IterationControl::with_tol(tol_res))
}

pub fn solve_logistic_with(problem: &LogisticProblem, control: &IterationControl) -> Result<LogisticSolution> {
    let grid = &problem.grid;
    let Some((upper, lower)) = bracket(problem)? else {
        return Ok(LogisticSolution::zero(grid));
    };
    let m = problem.stabilization();
    let solver = HelmholtzSolver::new(grid, m, control.linear_solver)?;
    let from_above = run_monotone(problem, &solver, m, upper.into_values(), Direction::Decreasing, control)?;
    let from_below = run_monotone(problem, &solver, m, lower.into_values(), Direction::Increasing, control)?;
    let gap = sup_distance(from_above.limit.values(), from_below.limit.values());
    let allowed = 10.0 * control.tol_res;
    if gap > allowed {
        return Err(Error::UniquenessViolation { gap, allowed });
    }
    Ok(LogisticSolution {
        iterations: from_above.iterations + from_below.iterations,
        residual: from_above.residual,
        theta: from_above.limit,
        positive: true,
        bracket_gap: gap,
    })
}

/// `ω_a = θ_{a - u}`.
pub fn solve_omega(grid: &Grid, a: f64, tol_res: f64) -> Result<LogisticSolution> {
    if a <= 0.0 {
        return Ok(LogisticSolution::zero(grid));
    }
    let h = GrowthFunction::affine(a, 1.0, 2.0 * a)?;
    solve_logistic(&LogisticProblem::for_growth(grid, &h), tol_res)
}

/// Outcome of a super- or sub-solution check.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionCheck {
    pub passes: bool,
    pub worst_node: usize,
    pub worst_value: f64,
}

fn check_sign(grid: &Grid, u: &ScalarField, reaction: &Reaction, tol: f64, upper: bool) -> Result<SolutionCheck> {
    grid.check(u)?;
    let r = residual_values(grid, reaction, u.values());
    let pick = |a: &(usize, f64), b: &(usize, f64)| {
        if upper {
            a.1.total_cmp(&b.1)
        } else {
            b.1.total_cmp(&a.1)
        }
    };
    let (worst_node, worst_value) = r
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| pick(a, b))
        .unwrap_or((0, 0.0));
    let passes = if upper { worst_value <= tol } else { worst_value >= -tol };
    Ok(SolutionCheck {
        passes,
        worst_node,
        worst_value,
    })
}

/// Super solution: `Δ_h u + u f(u) <= tol` at every node.
pub fn check_super_solution(grid: &Grid, u: &ScalarField, reaction: &Reaction, tol: f64) -> Result<SolutionCheck> {
    check_sign(grid, u, reaction, tol, true)
}

/// Sub solution: `Δ_h u + u f(u) >= -tol` at every node.
pub fn check_sub_solution(grid: &Grid, u: &ScalarField, reaction: &Reaction, tol: f64) -> Result<SolutionCheck> {
    check_sign(grid, u, reaction, tol, false)
}
