//! The coupled competition system
//! `Δu_i + u_i (h_i(u_i) - g_i(u_{-i})) = 0`, `u_i = 0` on the boundary.
//!
//! Unknowns of all species are interleaved per node (`node * N + species`)
//! whenever a band matrix is formed, which keeps the Jacobian banded with
//! bandwidth `N * nx`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{competitor_index, SystemSpec};
use crate::grid::{Grid, HelmholtzSolver, LinearSolver, ScalarField};
use crate::linalg::{norm2, norm_inf, sup_distance, BandLu, BandMatrix};
use crate::logistic::{linearized_step, solve_logistic_with, IterationControl, LogisticProblem};

pub const DEFAULT_TOL_RES: f64 = 1e-8;
pub const DEFAULT_MAX_NEWTON: usize = 200;
pub const DEFAULT_MAX_PICARD: usize = 2000;
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-6;
pub const EXTINCTION_LEVEL: f64 = 1e-6;
pub const BOUNDS_SLACK: f64 = 1e-6;
const MAX_HALVINGS: usize = 30;
const PICARD_BURST: usize = 50;
const HYBRID_PRESWEEPS: usize = 200;
/// Relative Picard increment at which hybrid solves hand over to Newton.
const HYBRID_SWITCH: f64 = 1e-3;

/// Population densities of all species on a common grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemState {
    #[serde(skip)]
    grid: Grid,
    fields: Vec<Vec<f64>>,
}

impl SystemState {
    pub fn new(grid: &Grid, fields: Vec<Vec<f64>>) -> Result<Self> {
        for (i, f) in fields.iter().enumerate() {
            if f.len() != grid.len() {
                return Err(Error::invalid(format!(
                    "species {} field has {} values, grid has {}",
                    i + 1,
                    f.len(),
                    grid.len()
                )));
            }
            if f.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid(format!(
                    "species {} field must be finite and non-negative",
                    i + 1
                )));
            }
        }
        Ok(SystemState {
            grid: grid.clone(),
            fields,
        })
    }

    pub fn from_fields(fields: &[ScalarField]) -> Result<Self> {
        let grid = fields
            .first()
            .ok_or_else(|| Error::invalid("state needs at least one field"))?
            .grid()
            .clone();
        for f in fields {
            grid.check(f)?;
        }
        SystemState::new(&grid, fields.iter().map(|f| f.values().to_vec()).collect())
    }

    pub fn zeros(grid: &Grid, n: usize) -> Self {
        SystemState {
            grid: grid.clone(),
            fields: vec![vec![0.0; grid.len()]; n],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_species(&self) -> usize {
        self.fields.len()
    }

    pub fn values(&self, i: usize) -> &[f64] {
        &self.fields[i]
    }

    pub fn fields(&self) -> &[Vec<f64>] {
        &self.fields
    }

    pub fn field(&self, i: usize) -> ScalarField {
        ScalarField::from_parts(&self.grid, self.fields[i].clone())
    }

    /// Largest pointwise difference over all species.
    pub fn sup_distance(&self, other: &SystemState) -> f64 {
        self.fields
            .iter()
            .zip(&other.fields)
            .map(|(a, b)| sup_distance(a, b))
            .fold(0.0, f64::max)
    }

    pub fn species_max(&self, i: usize) -> f64 {
        norm_inf(&self.fields[i])
    }

    /// Species whose sup norm is below the extinction level.
    pub fn extinct_species(&self) -> Vec<usize> {
        (0..self.n_species())
            .filter(|&i| self.species_max(i) < EXTINCTION_LEVEL)
            .collect()
    }

    pub fn is_coexistence(&self) -> bool {
        self.extinct_species().is_empty()
    }

    fn interleave(fields: &[Vec<f64>]) -> Vec<f64> {
        let n = fields.len();
        let m = fields[0].len();
        let mut out = vec![0.0; n * m];
        for (i, f) in fields.iter().enumerate() {
            for (k, v) in f.iter().enumerate() {
                out[k * n + i] = *v;
            }
        }
        out
    }

    fn deinterleave(v: &[f64], n: usize) -> Vec<Vec<f64>> {
        let m = v.len() / n;
        (0..n).map(|i| (0..m).map(|k| v[k * n + i]).collect()).collect()
    }
}

fn check_state(spec: &SystemSpec, state: &SystemState) -> Result<()> {
    if state.grid != *spec.grid() {
        return Err(Error::invalid("state does not live on the spec grid"));
    }
    if state.n_species() != spec.n_species() {
        return Err(Error::invalid(format!(
            "state has {} species, spec has {}",
            state.n_species(),
            spec.n_species()
        )));
    }
    Ok(())
}

/// Competitor values of species `i` at node `k`, written into `buf`.
fn competitors_at(fields: &[Vec<f64>], i: usize, k: usize, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend(fields.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, f)| f[k]));
}

/// Node-wise competition pressure `g_i(u_{-i})`.
pub fn competition_field(spec: &SystemSpec, fields: &[Vec<f64>], i: usize) -> Vec<f64> {
    let g = &spec.species()[i].g;
    let mut buf = Vec::with_capacity(fields.len());
    (0..spec.grid().len())
        .map(|k| {
            competitors_at(fields, i, k, &mut buf);
            g.eval(&buf)
        })
        .collect()
}

fn residual_raw(spec: &SystemSpec, fields: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let grid = spec.grid();
    spec.species()
        .iter()
        .enumerate()
        .map(|(i, sp)| {
            let u = &fields[i];
            let q = competition_field(spec, fields, i);
            let mut r = grid.laplacian_values(u);
            for k in 0..u.len() {
                r[k] += u[k] * (sp.h.eval(u[k]) - q[k]);
            }
            r
        })
        .collect()
}

fn residual_norm(r: &[Vec<f64>]) -> f64 {
    r.iter().map(|v| norm_inf(v)).fold(0.0, f64::max)
}

/// `r_i = Δ_h u_i + u_i (h_i(u_i) - g_i(u_{-i}))` for every species.
pub fn residual(spec: &SystemSpec, state: &SystemState) -> Result<Vec<ScalarField>> {
    check_state(spec, state)?;
    Ok(residual_raw(spec, &state.fields)
        .into_iter()
        .map(|r| ScalarField::from_parts(spec.grid(), r))
        .collect())
}

/// Sup norm of the residual over all species.
pub fn residual_sup(spec: &SystemSpec, state: &SystemState) -> Result<f64> {
    check_state(spec, state)?;
    Ok(residual_norm(&residual_raw(spec, &state.fields)))
}

/// Fréchet derivative of the operator `u ↦ -Δu - u (h(u) - g(u_{-i}))`:
/// diagonal blocks `-Δ_h + diag(d_i)` with
/// `d_i = -(h_i(u_i) - g_i(u_{-i})) - u_i h_i'(u_i)`, off-diagonal blocks
/// `diag(u_i ∂g_i/∂u_j)`. Equal to minus the Jacobian of [`residual`].
#[derive(Debug, Clone)]
pub struct FrechetMatrix {
    grid: Grid,
    reaction: Vec<Vec<f64>>,
    coupling: Vec<Vec<Vec<f64>>>,
}

impl FrechetMatrix {
    pub fn n_species(&self) -> usize {
        self.reaction.len()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Diagonal part `d_i` of block `a_ii` (the Laplacian part is implicit).
    pub fn diagonal_block(&self, i: usize) -> &[f64] {
        &self.reaction[i]
    }

    /// Diagonal of the off-diagonal block `a_ij`.
    pub fn coupling_block(&self, i: usize, j: usize) -> &[f64] {
        assert_ne!(i, j, "a_ii has no coupling diagonal");
        &self.coupling[i][j]
    }

    /// `B v` with `v` given per species.
    pub fn apply(&self, v: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.n_species();
        (0..n)
            .map(|i| {
                let mut out = self.grid.laplacian_values(&v[i]);
                for k in 0..out.len() {
                    out[k] = -out[k] + self.reaction[i][k] * v[i][k];
                    for j in 0..n {
                        if j != i {
                            out[k] += self.coupling[i][j][k] * v[j][k];
                        }
                    }
                }
                out
            })
            .collect()
    }

    /// Band form with interleaved unknowns.
    pub fn to_band(&self) -> BandMatrix {
        let n = self.n_species();
        let m = self.grid.len();
        let bw = self.grid.bandwidth() * n;
        let mut a = BandMatrix::zeros(n * m, bw, bw);
        for i in 0..n {
            self.grid.add_neg_laplacian(&mut a, n, i, 1.0);
            for k in 0..m {
                a.add(k * n + i, k * n + i, self.reaction[i][k]);
                for j in 0..n {
                    if j != i {
                        a.add(k * n + i, k * n + j, self.coupling[i][j][k]);
                    }
                }
            }
        }
        a
    }

    pub fn norm_inf(&self) -> f64 {
        self.to_band().norm_inf()
    }

    /// Dense matrix in species-major block order; intended for small grids.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n_species();
        let m = self.grid.len();
        let band = self.to_band();
        let idx = |b: usize| (b % m) * n + b / m;
        (0..n * m)
            .map(|r| (0..n * m).map(|c| band.get(idx(r), idx(c))).collect())
            .collect()
    }
}

pub fn assemble_frechet(spec: &SystemSpec, state: &SystemState) -> Result<FrechetMatrix> {
    check_state(spec, state)?;
    let n = spec.n_species();
    let m = spec.grid().len();
    let fields = &state.fields;
    let mut reaction = vec![vec![0.0; m]; n];
    let mut coupling = vec![vec![Vec::new(); n]; n];
    let mut buf = Vec::with_capacity(n);
    for (i, sp) in spec.species().iter().enumerate() {
        for j in 0..n {
            if j != i {
                coupling[i][j] = vec![0.0; m];
            }
        }
        for k in 0..m {
            let u = fields[i][k];
            competitors_at(fields, i, k, &mut buf);
            let g = sp.g.eval(&buf);
            reaction[i][k] = -(sp.h.eval(u) - g) - u * sp.h.eval_prime(u);
            for slot in 0..n - 1 {
                let j = competitor_index(i, slot);
                coupling[i][j][k] = u * sp.g.partial(slot, &buf);
            }
        }
    }
    Ok(FrechetMatrix {
        grid: spec.grid().clone(),
        reaction,
        coupling,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InvertibilityReport {
    pub invertible: bool,
    pub sigma_min: f64,
    pub norm_inf: f64,
    pub iterations: usize,
    pub diagnostic: Option<String>,
}

/// Smallest singular value of `B` by inverse iteration on `BᵀB`;
/// invertible iff `σ_min > 1e-8 ‖B‖_∞`.
pub fn check_invertibility(b: &FrechetMatrix) -> InvertibilityReport {
    let band = b.to_band();
    let norm = band.norm_inf();
    let threshold = 1e-8 * norm;
    let singular = |diagnostic: String, iterations: usize| InvertibilityReport {
        invertible: false,
        sigma_min: 0.0,
        norm_inf: norm,
        iterations,
        diagnostic: Some(diagnostic),
    };
    let lu = match BandLu::factor(&band) {
        Ok(lu) => lu,
        Err(e) => return singular(e.to_string(), 0),
    };
    let dim = band.dim();
    let mut x = vec![1.0 / (dim as f64).sqrt(); dim];
    let mut sigma = f64::INFINITY;
    for it in 1..=1000 {
        let y = lu.solve_transpose(&x);
        let z = lu.solve(&y);
        let zn = norm2(&z);
        if !(zn.is_finite() && zn > 0.0) {
            return singular("inverse iteration broke down".into(), it);
        }
        x = z.iter().map(|v| v / zn).collect();
        let next = norm2(&band.matvec(&x));
        let done = (sigma - next).abs() <= 1e-10 * next;
        sigma = next;
        if done {
            return InvertibilityReport {
                invertible: sigma > threshold,
                sigma_min: sigma,
                norm_inf: norm,
                iterations: it,
                diagnostic: None,
            };
        }
    }
    InvertibilityReport {
        invertible: sigma > threshold,
        sigma_min: sigma,
        norm_inf: norm,
        iterations: 1000,
        diagnostic: Some("inverse iteration hit its iteration limit".into()),
    }
}

/// A priori bounds `θ_{h_i - g_i(k_{-i})} <= u_i <= θ_{h_i}` for coexistence states.
#[derive(Debug, Clone, Serialize)]
pub struct Bounds {
    pub lower: SystemState,
    pub upper: SystemState,
    /// Whether each lower-bound logistic problem has a positive solution.
    pub lower_positive: Vec<bool>,
    pub upper_positive: Vec<bool>,
}

impl Bounds {
    /// Whether `lower - slack <= u <= upper + slack` everywhere.
    pub fn contains(&self, state: &SystemState, slack: f64) -> bool {
        state.fields.iter().enumerate().all(|(i, u)| {
            u.iter()
                .zip(&self.lower.fields[i])
                .zip(&self.upper.fields[i])
                .all(|((v, lo), hi)| *v >= lo - slack && *v <= hi + slack)
        })
    }
}

pub fn default_bounds(spec: &SystemSpec, control: &IterationControl) -> Result<Bounds> {
    let grid = spec.grid();
    let solved: Vec<_> = (0..spec.n_species())
        .into_par_iter()
        .map(|i| {
            let h = &spec.species()[i].h;
            let upper = solve_logistic_with(&LogisticProblem::for_growth(grid, h), control)?;
            let shift = spec.competition_at_roots(i);
            let lower = solve_logistic_with(&LogisticProblem::shifted(grid, h, shift), control)?;
            Ok((lower, upper))
        })
        .collect::<Result<Vec<_>>>()?;
    let lower_positive = solved.iter().map(|(l, _)| l.positive).collect();
    let upper_positive = solved.iter().map(|(_, u)| u.positive).collect();
    let (lower, upper): (Vec<_>, Vec<_>) = solved
        .into_iter()
        .map(|(l, u)| (l.theta.into_values(), u.theta.into_values()))
        .unzip();
    Ok(Bounds {
        lower: SystemState::new(grid, lower)?,
        upper: SystemState::new(grid, upper)?,
        lower_positive,
        upper_positive,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Newton,
    Picard,
    Hybrid,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolveOptions {
    pub tol_res: f64,
    pub max_newton: usize,
    pub max_picard: usize,
    pub method: SolveMethod,
    pub linear_solver: LinearSolver,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol_res: DEFAULT_TOL_RES,
            max_newton: DEFAULT_MAX_NEWTON,
            max_picard: DEFAULT_MAX_PICARD,
            method: SolveMethod::Hybrid,
            linear_solver: LinearSolver::Direct,
        }
    }
}

impl SolveOptions {
    pub fn with_method(method: SolveMethod) -> Self {
        SolveOptions {
            method,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub state: SystemState,
    pub converged: bool,
    pub residual: f64,
    pub iterations: usize,
    pub newton_steps: usize,
    pub picard_sweeps: usize,
    pub within_bounds: bool,
    pub method: SolveMethod,
}

/// Gauss–Seidel sweeps over species, one linearized logistic step each.
struct PicardSweeper {
    solvers: Vec<HelmholtzSolver>,
    stabilization: Vec<f64>,
}

impl PicardSweeper {
    fn new(spec: &SystemSpec, linear_solver: LinearSolver) -> Result<Self> {
        let ranges: Vec<f64> = spec.species().iter().map(|s| s.h.working_max()).collect();
        let mut solvers = Vec::new();
        let mut stabilization = Vec::new();
        for (i, sp) in spec.species().iter().enumerate() {
            let umax = sp.h.working_max();
            let sup_h = sp.h.eval(0.0).abs().max(sp.h.eval(umax).abs());
            let max_shift = sp.g.eval(&crate::functions::others(&ranges, i));
            let m = sup_h + max_shift + umax * sp.h.sup_abs_prime();
            solvers.push(HelmholtzSolver::new(spec.grid(), m, linear_solver)?);
            stabilization.push(m);
        }
        Ok(PicardSweeper { solvers, stabilization })
    }

    fn sweep(&self, spec: &SystemSpec, fields: &mut [Vec<f64>]) -> Result<()> {
        for (i, sp) in spec.species().iter().enumerate() {
            let shift = competition_field(spec, fields, i);
            fields[i] = linearized_step(&self.solvers[i], self.stabilization[i], &sp.h, &shift, &fields[i])?;
        }
        Ok(())
    }
}

/// One Gauss–Seidel Picard sweep from `state`.
pub fn picard_sweep(spec: &SystemSpec, state: &SystemState) -> Result<SystemState> {
    check_state(spec, state)?;
    let sweeper = PicardSweeper::new(spec, LinearSolver::Direct)?;
    let mut fields = state.fields.clone();
    sweeper.sweep(spec, &mut fields)?;
    SystemState::new(spec.grid(), fields)
}

/// Solves the system from `initial`, computing the a priori bounds for the
/// `within_bounds` flag.
pub fn solve_system(spec: &SystemSpec, initial: &SystemState, method: SolveMethod) -> Result<SolveReport> {
    let bounds = default_bounds(spec, &IterationControl::default())?;
    solve_system_with(spec, initial, &SolveOptions::with_method(method), Some(&bounds))
}

enum NewtonOutcome {
    Converged,
    Stalled,
    Exhausted,
}

pub fn solve_system_with(
    spec: &SystemSpec,
    initial: &SystemState,
    options: &SolveOptions,
    bounds: Option<&Bounds>,
) -> Result<SolveReport> {
    check_state(spec, initial)?;
    let n = spec.n_species();
    let mut fields: Vec<Vec<f64>> = initial
        .fields
        .iter()
        .map(|f| f.iter().map(|v| v.max(0.0)).collect())
        .collect();
    let mut res = residual_norm(&residual_raw(spec, &fields));
    let mut newton_steps = 0;
    let mut picard_sweeps = 0;
    let tol = options.tol_res;

    let use_newton = options.method != SolveMethod::Picard;
    let use_picard = options.method != SolveMethod::Newton;
    let sweeper = if use_picard {
        Some(PicardSweeper::new(spec, options.linear_solver)?)
    } else {
        None
    };

    let run_picard = |fields: &mut Vec<Vec<f64>>, budget: usize, picard_sweeps: &mut usize| -> Result<f64> {
        let sweeper = sweeper.as_ref().expect("picard enabled");
        let mut r = residual_norm(&residual_raw(spec, fields));
        for _ in 0..budget {
            if r <= tol || *picard_sweeps >= options.max_picard {
                break;
            }
            sweeper.sweep(spec, fields)?;
            *picard_sweeps += 1;
            r = residual_norm(&residual_raw(spec, fields));
        }
        Ok(r)
    };

    if options.method == SolveMethod::Hybrid {
        // Damped Newton far from a solution can slide onto the trivial state,
        // so Picard brings the iterate close first.
        let sweeper = sweeper.as_ref().expect("picard enabled");
        for _ in 0..HYBRID_PRESWEEPS {
            if res <= tol {
                break;
            }
            let before = fields.clone();
            sweeper.sweep(spec, &mut fields)?;
            picard_sweeps += 1;
            res = residual_norm(&residual_raw(spec, &fields));
            let scale = fields.iter().map(|f| norm_inf(f)).fold(1.0, f64::max);
            let step = fields
                .iter()
                .zip(&before)
                .map(|(a, b)| sup_distance(a, b))
                .fold(0.0, f64::max);
            if step <= HYBRID_SWITCH * scale {
                break;
            }
        }
    }

    if use_newton {
        loop {
            let outcome = newton_loop(spec, &mut fields, &mut res, &mut newton_steps, options)?;
            match outcome {
                NewtonOutcome::Converged | NewtonOutcome::Exhausted => break,
                NewtonOutcome::Stalled => {
                    if !use_picard || picard_sweeps >= options.max_picard {
                        break;
                    }
                    res = run_picard(&mut fields, PICARD_BURST, &mut picard_sweeps)?;
                    if res <= tol {
                        break;
                    }
                }
            }
        }
    } else {
        res = run_picard(&mut fields, options.max_picard, &mut picard_sweeps)?;
    }

    let state = SystemState::new(spec.grid(), fields)?;
    let within_bounds = bounds.map(|b| b.contains(&state, BOUNDS_SLACK)).unwrap_or(false);
    debug_assert_eq!(state.n_species(), n);
    Ok(SolveReport {
        converged: res <= tol,
        residual: res,
        iterations: newton_steps + picard_sweeps,
        newton_steps,
        picard_sweeps,
        within_bounds,
        method: options.method,
        state,
    })
}

fn newton_loop(
    spec: &SystemSpec,
    fields: &mut Vec<Vec<f64>>,
    res: &mut f64,
    steps: &mut usize,
    options: &SolveOptions,
) -> Result<NewtonOutcome> {
    let n = spec.n_species();
    let grid = spec.grid().clone();
    let mut r = residual_raw(spec, fields);
    *res = residual_norm(&r);
    loop {
        if *res <= options.tol_res {
            return Ok(NewtonOutcome::Converged);
        }
        if *steps >= options.max_newton {
            return Ok(NewtonOutcome::Exhausted);
        }
        let state = SystemState {
            grid: grid.clone(),
            fields: fields.clone(),
        };
        let b = assemble_frechet(spec, &state)?;
        let lu = match BandLu::factor(&b.to_band()) {
            Ok(lu) => lu,
            Err(_) => return Ok(NewtonOutcome::Stalled),
        };
        let delta = SystemState::deinterleave(&lu.solve(&SystemState::interleave(&r)), n);
        *steps += 1;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<Vec<f64>> = fields
                .iter()
                .zip(&delta)
                .map(|(u, d)| u.iter().zip(d).map(|(a, b)| (a + lambda * b).max(0.0)).collect())
                .collect();
            if collapses(fields, &trial) {
                lambda *= 0.5;
                continue;
            }
            let rt = residual_raw(spec, &trial);
            let nt = residual_norm(&rt);
            if nt < *res {
                *fields = trial;
                r = rt;
                *res = nt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Ok(NewtonOutcome::Stalled);
        }
    }
}

/// Whether a step wipes out a species that is present before it. The zero
/// state always has zero residual, so residual decrease alone cannot keep
/// Newton from jumping onto it.
fn collapses(before: &[Vec<f64>], after: &[Vec<f64>]) -> bool {
    before
        .iter()
        .zip(after)
        .any(|(b, a)| norm_inf(b) >= EXTINCTION_LEVEL && norm_inf(a) < 0.5 * norm_inf(b).min(EXTINCTION_LEVEL.sqrt()))
}

#[derive(Debug, Clone, Serialize)]
pub struct Cluster {
    pub representative: SystemState,
    /// Start indices that converged into this cluster.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StartOutcome {
    Coexistence,
    Extinction,
    NotConverged,
}

#[derive(Debug, Clone, Serialize)]
pub struct StartRecord {
    pub index: usize,
    pub kind: String,
    pub outcome: StartOutcome,
    pub residual: f64,
    pub iterations: usize,
    pub extinct_species: Vec<usize>,
    pub within_bounds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub starts: usize,
    pub seed: u64,
    pub cluster_tol: f64,
    pub converged: usize,
    pub not_converged: usize,
    pub extinction: usize,
    pub clusters: Vec<Cluster>,
    pub unique: bool,
    pub inconclusive: bool,
    pub verdict: String,
    pub records: Vec<StartRecord>,
    /// Converged states with an extinct species, in start order.
    #[serde(skip)]
    pub extinct_states: Vec<SystemState>,
}

impl UniquenessReport {
    pub fn distinct_solutions(&self) -> Vec<&SystemState> {
        self.clusters.iter().map(|c| &c.representative).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MultiStartOptions {
    pub solve: SolveOptions,
    pub cluster_tol: f64,
    pub logistic: IterationControl,
}

impl Default for MultiStartOptions {
    fn default() -> Self {
        MultiStartOptions {
            solve: SolveOptions::default(),
            cluster_tol: DEFAULT_CLUSTER_TOL,
            logistic: IterationControl::default(),
        }
    }
}

/// Amplitudes `ρ_i ∈ (0.05, 1]` for random start `index`, from a stream that
/// depends only on `(seed, index)`.
pub fn start_amplitudes(seed: u64, index: usize, n_species: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    (0..n_species).map(|_| 1.0 - 0.95 * rng.gen::<f64>()).collect()
}

pub fn multi_start_uniqueness(spec: &SystemSpec, n_starts: usize, seed: u64) -> Result<UniquenessReport> {
    let options = MultiStartOptions::default();
    let bounds = default_bounds(spec, &options.logistic)?;
    multi_start_with(spec, n_starts, seed, &options, &bounds)
}

pub fn multi_start_with(
    spec: &SystemSpec,
    n_starts: usize,
    seed: u64,
    options: &MultiStartOptions,
    bounds: &Bounds,
) -> Result<UniquenessReport> {
    if n_starts < 2 {
        return Err(Error::invalid(format!("need at least 2 starts, got {n_starts}")));
    }
    let grid = spec.grid();
    let n = spec.n_species();
    let start = |index: usize| -> (String, SystemState) {
        match index {
            0 => ("lower".to_string(), bounds.lower.clone()),
            1 => ("upper".to_string(), bounds.upper.clone()),
            _ => {
                let rho = start_amplitudes(seed, index, n);
                let fields = (0..n)
                    .map(|i| bounds.upper.fields[i].iter().map(|v| rho[i] * v).collect())
                    .collect();
                (
                    "random".to_string(),
                    SystemState {
                        grid: grid.clone(),
                        fields,
                    },
                )
            }
        }
    };
    let results: Vec<(String, SolveReport)> = (0..n_starts)
        .into_par_iter()
        .map(|index| {
            let (kind, init) = start(index);
            solve_system_with(spec, &init, &options.solve, Some(bounds)).map(|r| (kind, r))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut clusters: Vec<Cluster> = Vec::new();
    let mut records = Vec::with_capacity(n_starts);
    let mut extinct_states = Vec::new();
    let (mut converged, mut not_converged, mut extinction) = (0, 0, 0);
    for (index, (kind, report)) in results.into_iter().enumerate() {
        let extinct = report.state.extinct_species();
        let outcome = if !report.converged {
            not_converged += 1;
            StartOutcome::NotConverged
        } else if !extinct.is_empty() {
            converged += 1;
            extinction += 1;
            extinct_states.push(report.state.clone());
            StartOutcome::Extinction
        } else {
            converged += 1;
            match clusters
                .iter_mut()
                .find(|c| c.representative.sup_distance(&report.state) <= options.cluster_tol)
            {
                Some(c) => c.members.push(index),
                None => clusters.push(Cluster {
                    representative: report.state.clone(),
                    members: vec![index],
                }),
            }
            StartOutcome::Coexistence
        };
        records.push(StartRecord {
            index,
            kind,
            outcome,
            residual: report.residual,
            iterations: report.iterations,
            extinct_species: extinct.iter().map(|i| i + 1).collect(),
            within_bounds: report.within_bounds,
        });
    }
    let unique = clusters.len() == 1;
    let inconclusive = clusters.is_empty();
    let verdict = if unique {
        format!("empirically unique ({n_starts} starts)")
    } else if inconclusive {
        format!("inconclusive: no converged coexistence state ({n_starts} starts)")
    } else {
        format!("{} distinct coexistence states ({n_starts} starts)", clusters.len())
    };
    Ok(UniquenessReport {
        starts: n_starts,
        seed,
        cluster_tol: options.cluster_tol,
        converged,
        not_converged,
        extinction,
        clusters,
        unique,
        inconclusive,
        verdict,
        records,
        extinct_states,
    })
}
