//! Spec files: TOML with `[domain]`, `[species.N]`, `[solver]` and an
//! optional `[eigen]` section.
//!
//! ```toml
//! [domain]
//! kind = "interval"
//! lengths = [1.0]
//! counts = [200]
//!
//! [species.1]
//! h = { family = "affine", params = [12.0, 1.0] }
//! g = { family = "linear", coeffs = [0.05] }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use lvcoex::functions::{
    GrowthFamily, GrowthFunction, InteractionFamily, InteractionFunction, MonotoneCubic, SystemSpec,
};
use lvcoex::grid::{DomainKind, Grid, LinearSolver};
use lvcoex::logistic::IterationControl;
use lvcoex::perturb::{SweepOptions, DEFAULT_DELTAS, DEFAULT_DIRECTIONS, DEFAULT_STARTS};
use lvcoex::system::{MultiStartOptions, SolveMethod, SolveOptions, DEFAULT_CLUSTER_TOL};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    domain: RawDomain,
    #[serde(default)]
    species: BTreeMap<String, RawSpecies>,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    eigen: RawEigen,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    kind: DomainKind,
    lengths: Vec<f64>,
    counts: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpecies {
    h: RawGrowth,
    g: RawInteraction,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum GrowthKind {
    Affine,
    Saturating,
    Tabulated,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrowth {
    family: GrowthKind,
    #[serde(default)]
    params: Vec<f64>,
    #[serde(default)]
    points: Vec<[f64; 2]>,
    working_max: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInteraction {
    family: InteractionFamily,
    #[serde(default)]
    coeffs: Vec<f64>,
    saturation: Option<Vec<f64>>,
    absent: Option<Vec<bool>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    tol_res: Option<f64>,
    logistic_tol: Option<f64>,
    method: Option<SolveMethod>,
    linear_solver: Option<LinearKind>,
    seed: Option<u64>,
    starts: Option<usize>,
    cluster_tol: Option<f64>,
    max_newton: Option<usize>,
    max_picard: Option<usize>,
    deltas: Option<Vec<f64>>,
    directions: Option<usize>,
    perturb_starts: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEigen {
    potential: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    Direct,
    Cg,
}

/// Every tunable of a run, with defaults filled in.
#[derive(Debug, Clone, Serialize)]
pub struct SolverSettings {
    pub tol_res: f64,
    pub logistic_tol: f64,
    pub method: SolveMethod,
    pub linear_solver: LinearKind,
    pub seed: u64,
    pub starts: usize,
    pub cluster_tol: f64,
    pub max_newton: usize,
    pub max_picard: usize,
    pub deltas: Vec<f64>,
    pub directions: usize,
    pub perturb_starts: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let solve = SolveOptions::default();
        SolverSettings {
            tol_res: solve.tol_res,
            logistic_tol: IterationControl::default().tol_res,
            method: solve.method,
            linear_solver: LinearKind::Direct,
            seed: 0,
            starts: 20,
            cluster_tol: DEFAULT_CLUSTER_TOL,
            max_newton: solve.max_newton,
            max_picard: solve.max_picard,
            deltas: DEFAULT_DELTAS.to_vec(),
            directions: DEFAULT_DIRECTIONS,
            perturb_starts: DEFAULT_STARTS,
        }
    }
}

impl SolverSettings {
    pub fn linear_solver(&self) -> LinearSolver {
        match self.linear_solver {
            LinearKind::Direct => LinearSolver::Direct,
            LinearKind::Cg => LinearSolver::cg(),
        }
    }

    pub fn logistic(&self) -> IterationControl {
        IterationControl {
            tol_res: self.logistic_tol,
            linear_solver: self.linear_solver(),
            ..Default::default()
        }
    }

    pub fn solve(&self) -> SolveOptions {
        SolveOptions {
            tol_res: self.tol_res,
            max_newton: self.max_newton,
            max_picard: self.max_picard,
            method: self.method,
            linear_solver: self.linear_solver(),
        }
    }

    pub fn multi_start(&self) -> MultiStartOptions {
        MultiStartOptions {
            solve: self.solve(),
            cluster_tol: self.cluster_tol,
            logistic: self.logistic(),
        }
    }

    pub fn sweep(&self) -> SweepOptions {
        SweepOptions {
            deltas: self.deltas.clone(),
            n_directions: self.directions,
            n_starts: self.perturb_starts,
            seed: self.seed,
            multi_start: self.multi_start(),
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("tol_res", self.tol_res),
            ("logistic_tol", self.logistic_tol),
            ("cluster_tol", self.cluster_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Validation(format!("solver.{name} must be positive, got {v}")));
            }
        }
        if self.starts < 2 {
            return Err(CliError::Validation(format!(
                "solver.starts must be >= 2, got {}",
                self.starts
            )));
        }
        if self.perturb_starts < 2 {
            return Err(CliError::Validation("solver.perturb_starts must be >= 2".into()));
        }
        if self.directions == 0 {
            return Err(CliError::Validation("solver.directions must be >= 1".into()));
        }
        if self.deltas.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(CliError::Validation("solver.deltas must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Overrides given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub starts: Option<usize>,
    pub tol_res: Option<f64>,
    pub grid_n: Option<usize>,
}

/// A parsed and validated spec file.
#[derive(Debug, Clone)]
pub struct SpecFile {
    pub grid: Grid,
    /// `None` when the file declares no species (enough for `eigen`).
    pub system: Option<SystemSpec>,
    pub solver: SolverSettings,
    /// Constant potential for the `eigen` command.
    pub potential: f64,
}

impl SpecFile {
    pub fn system(&self) -> Result<&SystemSpec, CliError> {
        self.system
            .as_ref()
            .ok_or_else(|| CliError::Validation("this command needs [species.N] sections".into()))
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

pub fn load_spec(path: &Path, overrides: &Overrides) -> Result<SpecFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Unreadable {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_spec(&text, &path.display().to_string(), overrides)
}

pub fn parse_spec(text: &str, origin: &str, overrides: &Overrides) -> Result<SpecFile, CliError> {
    let raw: RawFile = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
        CliError::Parse {
            path: origin.to_string(),
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    build(raw, overrides)
}

fn build(raw: RawFile, overrides: &Overrides) -> Result<SpecFile, CliError> {
    let mut counts = raw.domain.counts.clone();
    if let Some(n) = overrides.grid_n {
        counts.iter_mut().for_each(|c| *c = n);
    }
    let grid = Grid::new(raw.domain.kind, &raw.domain.lengths, &counts)?;

    let defaults = SolverSettings::default();
    let s = raw.solver;
    let solver = SolverSettings {
        tol_res: overrides.tol_res.or(s.tol_res).unwrap_or(defaults.tol_res),
        logistic_tol: s.logistic_tol.unwrap_or(defaults.logistic_tol),
        method: s.method.unwrap_or(defaults.method),
        linear_solver: s.linear_solver.unwrap_or(defaults.linear_solver),
        seed: overrides.seed.or(s.seed).unwrap_or(defaults.seed),
        starts: overrides.starts.or(s.starts).unwrap_or(defaults.starts),
        cluster_tol: s.cluster_tol.unwrap_or(defaults.cluster_tol),
        max_newton: s.max_newton.unwrap_or(defaults.max_newton),
        max_picard: s.max_picard.unwrap_or(defaults.max_picard),
        deltas: s.deltas.unwrap_or(defaults.deltas),
        directions: s.directions.unwrap_or(defaults.directions),
        perturb_starts: s.perturb_starts.unwrap_or(defaults.perturb_starts),
    };
    solver.validate()?;

    let system = if raw.species.is_empty() {
        None
    } else {
        Some(build_system(&grid, raw.species)?)
    };
    Ok(SpecFile {
        grid,
        system,
        solver,
        potential: raw.eigen.potential.unwrap_or(0.0),
    })
}

fn build_system(grid: &Grid, species: BTreeMap<String, RawSpecies>) -> Result<SystemSpec, CliError> {
    let mut numbered = Vec::with_capacity(species.len());
    for (key, sp) in species {
        let idx: usize = key
            .parse()
            .map_err(|_| CliError::Validation(format!("species key `{key}` is not a number")))?;
        numbered.push((idx, sp));
    }
    numbered.sort_by_key(|(i, _)| *i);
    for (pos, (idx, _)) in numbered.iter().enumerate() {
        if *idx != pos + 1 {
            return Err(CliError::Validation(format!(
                "species must be numbered 1..{} without gaps",
                numbered.len()
            )));
        }
    }
    let n = numbered.len();

    let families = numbered
        .iter()
        .map(|(i, sp)| growth_family(*i, &sp.h))
        .collect::<Result<Vec<_>, _>>()?;
    let mut max_root = 0.0f64;
    for (f, (i, _)) in families.iter().zip(&numbered) {
        let k = f.natural_root().ok_or_else(|| {
            CliError::Validation(format!(
                "species {i}: {} growth function has no positive root",
                f.name()
            ))
        })?;
        max_root = max_root.max(k);
    }

    let mut pairs = Vec::with_capacity(n);
    for (family, (i, sp)) in families.into_iter().zip(numbered) {
        let umax = match (sp.h.working_max, &family) {
            (Some(u), _) => u,
            (None, GrowthFamily::Tabulated { table }) => (2.0 * max_root).min(table.domain().1),
            (None, _) => 2.0 * max_root,
        };
        let h = GrowthFunction::new(family, umax).map_err(|e| CliError::Validation(format!("species {i}: {e}")))?;
        let g = interaction(i, n, sp.g)?;
        pairs.push((h, g));
    }
    Ok(SystemSpec::new(grid.clone(), pairs)?)
}

fn growth_family(i: usize, h: &RawGrowth) -> Result<GrowthFamily, CliError> {
    let want = |len: usize, names: &str| -> Result<(), CliError> {
        if h.params.len() != len {
            return Err(CliError::Validation(format!(
                "species {i}: h.params must be [{names}], got {} values",
                h.params.len()
            )));
        }
        Ok(())
    };
    let p = &h.params;
    Ok(match h.family {
        GrowthKind::Affine => {
            want(2, "a, b")?;
            GrowthFamily::Affine { a: p[0], b: p[1] }
        }
        GrowthKind::Saturating => {
            want(3, "a, b, s")?;
            GrowthFamily::Saturating {
                a: p[0],
                b: p[1],
                s: p[2],
            }
        }
        GrowthKind::Tabulated => {
            let points: Vec<(f64, f64)> = h.points.iter().map(|[u, v]| (*u, *v)).collect();
            let table = MonotoneCubic::new(&points).map_err(|e| CliError::Validation(format!("species {i}: {e}")))?;
            GrowthFamily::Tabulated { table }
        }
    })
}

fn interaction(i: usize, n: usize, g: RawInteraction) -> Result<InteractionFunction, CliError> {
    let slots = n - 1;
    let absent = g.absent.unwrap_or_else(|| vec![false; slots]);
    let coeffs = if g.coeffs.is_empty() && absent.iter().all(|a| *a) {
        vec![0.0; slots]
    } else {
        g.coeffs
    };
    if coeffs.len() != slots || absent.len() != slots {
        return Err(CliError::Validation(format!(
            "species {i}: g needs {slots} competitor entries (coeffs has {}, absent has {})",
            coeffs.len(),
            absent.len()
        )));
    }
    let saturation = g.saturation.unwrap_or_else(|| vec![0.0; slots]);
    InteractionFunction::new(g.family, coeffs, saturation, absent)
        .map_err(|e| CliError::Validation(format!("species {i}: {e}")))
}
